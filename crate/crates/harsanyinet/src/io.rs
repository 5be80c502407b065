//! Model persistence: the `harsanyinet v1` text format.
//!
//! Layout: a version line, a checksum line, then the body. The checksum is
//! the SHA-256 of the body bytes, so truncation or corruption is detected
//! before any parsing. Every real is serialized with Rust's shortest
//! round-trip decimal formatting, which makes save → load → save
//! byte-identical and loaded models bit-exact in their outputs.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::cnn::{CnnConfig, ConvBlock, HarsanyiCnn, LocationSelector, Stem};
use crate::error::{Error, Result};
use crate::model::{ChildrenScope, HarsanyiMlp, MlpConfig, PlayerGrouping, Unit};

pub const FORMAT_VERSION: &str = "harsanyinet v1";

/// A loaded model of either topology.
#[derive(Clone, Debug)]
pub enum ModelFile {
    Mlp(HarsanyiMlp),
    Cnn(HarsanyiCnn),
}

impl ModelFile {
    pub fn topology(&self) -> &'static str {
        match self {
            ModelFile::Mlp(_) => "mlp",
            ModelFile::Cnn(_) => "conv",
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").unwrap();
    }
    out
}

fn push_floats(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        write!(out, " {v}").unwrap();
    }
    out.push('\n');
}

fn push_usizes(out: &mut String, key: &str, values: impl IntoIterator<Item = usize>) {
    out.push_str(key);
    for v in values {
        write!(out, " {v}").unwrap();
    }
    out.push('\n');
}

fn mlp_body(model: &HarsanyiMlp) -> String {
    let cfg = model.config();
    let mut s = String::new();
    s.push_str("topology mlp\n");
    writeln!(s, "inputs {}", cfg.inputs).unwrap();
    writeln!(s, "classes {}", cfg.classes).unwrap();
    writeln!(s, "beta {}", cfg.beta).unwrap();
    writeln!(s, "gamma {}", cfg.gamma).unwrap();
    writeln!(s, "scope {}", cfg.scope.name()).unwrap();
    push_usizes(&mut s, "grouping", cfg.grouping.col_player().iter().copied());
    push_usizes(&mut s, "blocks", cfg.block_sizes.iter().copied());
    for block in model.blocks() {
        for unit in block {
            push_floats(&mut s, "tau", &unit.tau);
            push_floats(&mut s, "weight", &unit.weight);
        }
    }
    for row in model.head() {
        push_floats(&mut s, "head", row);
    }
    s
}

fn cnn_body(model: &HarsanyiCnn) -> String {
    let cfg = model.config();
    let mut s = String::new();
    s.push_str("topology conv\n");
    writeln!(s, "height {}", cfg.height).unwrap();
    writeln!(s, "width {}", cfg.width).unwrap();
    writeln!(s, "channels {}", cfg.channels).unwrap();
    writeln!(s, "stem_kernel {}", cfg.stem_kernel).unwrap();
    writeln!(s, "pool {}", cfg.pool).unwrap();
    writeln!(s, "kernel {}", cfg.kernel).unwrap();
    writeln!(s, "blocks {}", cfg.blocks).unwrap();
    writeln!(s, "classes {}", cfg.classes).unwrap();
    writeln!(s, "beta {}", cfg.beta).unwrap();
    writeln!(s, "gamma {}", cfg.gamma).unwrap();
    s.push_str("stride 1\n");
    s.push_str("padding same\n");
    push_floats(&mut s, "stem_weight", &model.stem().weight);
    push_floats(&mut s, "stem_bias", &model.stem().bias);
    for block in model.blocks() {
        s.push_str("block\n");
        for sel in &block.selectors {
            push_floats(&mut s, "selector", &sel.tau);
        }
        push_floats(&mut s, "conv_weight", &block.weight);
    }
    for row in model.head() {
        push_floats(&mut s, "head", row);
    }
    s
}

fn render(body: String) -> String {
    format!("{FORMAT_VERSION}\nchecksum {}\n{body}", sha256_hex(body.as_bytes()))
}

pub fn mlp_to_string(model: &HarsanyiMlp) -> String {
    render(mlp_body(model))
}

pub fn cnn_to_string(model: &HarsanyiCnn) -> String {
    render(cnn_body(model))
}

pub fn save_mlp(model: &HarsanyiMlp, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, mlp_to_string(model))?)
}

pub fn save_cnn(model: &HarsanyiCnn, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, cnn_to_string(model))?)
}

struct LineReader<'a> {
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> LineReader<'a> {
    fn new(body: &'a str) -> Self {
        LineReader { lines: body.lines(), line_no: 2 }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        self.line_no += 1;
        self.lines.next().ok_or_else(|| Error::Format("model file ends early".into()))
    }

    /// Consumes the next line, which must start with `key`, and returns the
    /// remainder after the key.
    fn expect(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        match line.strip_prefix(key) {
            Some(rest) if rest.is_empty() || rest.starts_with(' ') => Ok(rest.trim_start()),
            _ => Err(Error::Format(format!(
                "line {}: expected {key:?}, found {line:?}",
                self.line_no
            ))),
        }
    }

    fn expect_usize(&mut self, key: &str) -> Result<usize> {
        let rest = self.expect(key)?;
        rest.parse().map_err(|_| {
            Error::Format(format!("line {}: {key} is not an integer: {rest:?}", self.line_no))
        })
    }

    fn expect_f64(&mut self, key: &str) -> Result<f64> {
        let rest = self.expect(key)?;
        rest.parse().map_err(|_| {
            Error::Format(format!("line {}: {key} is not a number: {rest:?}", self.line_no))
        })
    }

    fn expect_floats(&mut self, key: &str, count: usize) -> Result<Vec<f64>> {
        let rest = self.expect(key)?;
        let values: Vec<f64> = rest
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    Error::Format(format!("line {}: bad number {t:?}", self.line_no))
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != count {
            return Err(Error::Format(format!(
                "line {}: {key} holds {} values, expected {count}",
                self.line_no,
                values.len()
            )));
        }
        Ok(values)
    }

    fn expect_usizes(&mut self, key: &str) -> Result<Vec<usize>> {
        let rest = self.expect(key)?;
        rest.split_whitespace()
            .map(|t| {
                t.parse::<usize>().map_err(|_| {
                    Error::Format(format!("line {}: bad integer {t:?}", self.line_no))
                })
            })
            .collect()
    }
}

fn parse_mlp(reader: &mut LineReader) -> Result<HarsanyiMlp> {
    let inputs = reader.expect_usize("inputs")?;
    let classes = reader.expect_usize("classes")?;
    let beta = reader.expect_f64("beta")?;
    let gamma = reader.expect_f64("gamma")?;
    let scope = ChildrenScope::parse(reader.expect("scope")?)?;
    let grouping = PlayerGrouping::new(reader.expect_usizes("grouping")?)?;
    let block_sizes = reader.expect_usizes("blocks")?;
    let config =
        MlpConfig { inputs, block_sizes: block_sizes.clone(), classes, beta, gamma, scope, grouping };
    config.validate()?;
    let mut blocks = Vec::with_capacity(block_sizes.len());
    for (l, &size) in block_sizes.iter().enumerate() {
        let pool = config.pool_len(l);
        let mut block = Vec::with_capacity(size);
        for _ in 0..size {
            let tau = reader.expect_floats("tau", pool)?;
            let weight = reader.expect_floats("weight", pool)?;
            block.push(Unit { tau, weight });
        }
        blocks.push(block);
    }
    let total = config.total_units();
    let head = (0..classes)
        .map(|_| reader.expect_floats("head", total))
        .collect::<Result<Vec<_>>>()?;
    HarsanyiMlp::from_parts(config, blocks, head)
}

fn parse_cnn(reader: &mut LineReader) -> Result<HarsanyiCnn> {
    let height = reader.expect_usize("height")?;
    let width = reader.expect_usize("width")?;
    let channels = reader.expect_usize("channels")?;
    let stem_kernel = reader.expect_usize("stem_kernel")?;
    let pool = reader.expect_usize("pool")?;
    let kernel = reader.expect_usize("kernel")?;
    let blocks = reader.expect_usize("blocks")?;
    let classes = reader.expect_usize("classes")?;
    let beta = reader.expect_f64("beta")?;
    let gamma = reader.expect_f64("gamma")?;
    let stride = reader.expect("stride")?;
    if stride != "1" {
        return Err(Error::Format(format!("unsupported stride {stride:?}")));
    }
    let padding = reader.expect("padding")?;
    if padding != "same" {
        return Err(Error::Format(format!("unsupported padding {padding:?}")));
    }
    let config = CnnConfig {
        height,
        width,
        channels,
        stem_kernel,
        pool,
        blocks,
        kernel,
        classes,
        beta,
        gamma,
    };
    config.validate()?;
    let sk = stem_kernel * stem_kernel;
    let stem = Stem {
        weight: reader.expect_floats("stem_weight", channels * sk)?,
        bias: reader.expect_floats("stem_bias", channels)?,
    };
    let kk = kernel * kernel;
    let mut parsed_blocks = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        reader.expect("block")?;
        let mut selectors = Vec::with_capacity(config.locations());
        for _ in 0..config.locations() {
            selectors.push(LocationSelector { tau: reader.expect_floats("selector", kk)? });
        }
        let weight = reader.expect_floats("conv_weight", channels * channels * kk)?;
        parsed_blocks.push(ConvBlock { selectors, weight });
    }
    let total = config.total_units();
    let head = (0..classes)
        .map(|_| reader.expect_floats("head", total))
        .collect::<Result<Vec<_>>>()?;
    HarsanyiCnn::from_parts(config, stem, parsed_blocks, head)
}

pub fn model_from_str(text: &str) -> Result<ModelFile> {
    let mut parts = text.splitn(3, '\n');
    let version = parts.next().unwrap_or("");
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch(version.to_owned()));
    }
    let checksum_line =
        parts.next().ok_or_else(|| Error::Format("missing checksum line".into()))?;
    let body = parts.next().unwrap_or("");
    let stated = checksum_line
        .strip_prefix("checksum ")
        .ok_or_else(|| Error::Format("missing checksum line".into()))?;
    if sha256_hex(body.as_bytes()) != stated {
        return Err(Error::ChecksumMismatch);
    }
    let mut reader = LineReader::new(body);
    match reader.expect("topology")? {
        "mlp" => Ok(ModelFile::Mlp(parse_mlp(&mut reader)?)),
        "conv" => Ok(ModelFile::Cnn(parse_cnn(&mut reader)?)),
        other => Err(Error::Format(format!("unknown topology {other:?}"))),
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    model_from_str(&std::fs::read_to_string(path)?)
}

/// Loads a model that must be tabular; a convolutional file is a topology
/// error, never a silent reinterpretation.
pub fn load_mlp(path: impl AsRef<Path>) -> Result<HarsanyiMlp> {
    match load_model(path)? {
        ModelFile::Mlp(m) => Ok(m),
        ModelFile::Cnn(_) => {
            Err(Error::TopologyMismatch { expected: "mlp", found: "conv".into() })
        }
    }
}

pub fn load_cnn(path: impl AsRef<Path>) -> Result<HarsanyiCnn> {
    match load_model(path)? {
        ModelFile::Cnn(m) => Ok(m),
        ModelFile::Mlp(_) => {
            Err(Error::TopologyMismatch { expected: "conv", found: "mlp".into() })
        }
    }
}
