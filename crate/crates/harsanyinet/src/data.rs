//! Dataset ingestion and synthetic task generators.
//!
//! Ingestion z-scores numeric columns, so the all-zero vector is the dataset
//! mean and the zero baseline is the mean baseline. Categorical columns are
//! one-hot encoded, and the whole one-hot group is registered as a single
//! player: the game is played over original features, not encoded columns.

use std::path::Path;

use rand::prelude::*;

use crate::error::{Error, Result};
use crate::model::{PlayerGrouping, Sample};
use crate::rng::{stream, STREAM_DATA};

/// Cell values treated as missing; any such cell rejects the whole row.
const MISSING: [&str; 4] = ["", "NA", "N/A", "?"];

/// How one original column was turned into model inputs, with enough detail
/// to round-trip raw values.
#[derive(Clone, PartialEq, Debug)]
pub enum ColumnEncoding {
    /// One z-scored column: `encoded = (raw - mean) / sd`. A constant column
    /// has `sd = 0` and encodes to all zeros.
    Numeric { mean: f64, sd: f64 },
    /// One column per level, in sorted level order.
    Categorical { levels: Vec<String> },
}

impl ColumnEncoding {
    pub fn width(&self) -> usize {
        match self {
            ColumnEncoding::Numeric { .. } => 1,
            ColumnEncoding::Categorical { levels } => levels.len(),
        }
    }

    /// Inverse transform of one encoded slice back to a raw cell.
    pub fn decode(&self, encoded: &[f64]) -> String {
        match self {
            ColumnEncoding::Numeric { mean, sd } => format!("{}", encoded[0] * sd + mean),
            ColumnEncoding::Categorical { levels } => {
                let hot = encoded.iter().position(|&v| v == 1.0).unwrap_or(0);
                levels[hot].clone()
            }
        }
    }
}

/// Ingestion options. With `categorical_columns = None`, a column is treated
/// as categorical exactly when some non-missing value fails to parse as a
/// number; with an explicit list, a non-numeric value in an unregistered
/// column is a schema error.
#[derive(Clone, Default, Debug)]
pub struct DatasetConfig {
    pub categorical_columns: Option<Vec<String>>,
}

/// An ingested (or generated) tabular dataset, already encoded for the
/// model: zero-baseline samples, integer class labels, and the column-to-
/// player grouping.
#[derive(Clone, PartialEq, Debug)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub labels: Vec<usize>,
    /// Distinct label values in sorted order; `labels` indexes this.
    pub label_levels: Vec<String>,
    /// Original feature names, one per player.
    pub feature_names: Vec<String>,
    /// Per-feature encoding record, aligned with `feature_names`.
    pub encodings: Vec<ColumnEncoding>,
    pub grouping: PlayerGrouping,
    /// Rows dropped because of missing values.
    pub rejected_rows: usize,
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn players(&self) -> usize {
        self.grouping.players()
    }

    pub fn columns(&self) -> usize {
        self.grouping.columns()
    }

    pub fn classes(&self) -> usize {
        self.label_levels.len()
    }

    /// Decodes sample `i` back to raw cell values via the encoding record.
    pub fn raw_row(&self, i: usize) -> Vec<String> {
        let mut out = Vec::with_capacity(self.encodings.len());
        let mut col = 0;
        for enc in &self.encodings {
            out.push(enc.decode(&self.samples[i].x[col..col + enc.width()]));
            col += enc.width();
        }
        out
    }

    /// Deterministic shuffled split on the data stream of `seed`: the last
    /// `val_fraction` of the shuffled order becomes the validation set.
    pub fn shuffled_split(&self, val_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut stream(seed, STREAM_DATA));
        let val_len = (self.len() as f64 * val_fraction).round() as usize;
        let (train_idx, val_idx) = order.split_at(self.len() - val_len.min(self.len()));
        (self.subset(train_idx), self.subset(val_idx))
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            label_levels: self.label_levels.clone(),
            feature_names: self.feature_names.clone(),
            encodings: self.encodings.clone(),
            grouping: self.grouping.clone(),
            rejected_rows: 0,
            warnings: Vec::new(),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    MISSING.contains(&cell)
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Loads a headered CSV, z-scores numeric columns, one-hot encodes
/// categorical columns (each group one player), and indexes labels. Rows with
/// missing feature or label cells are rejected and counted.
pub fn load_csv_dataset(
    path: impl AsRef<Path>,
    label_column: &str,
    config: &DatasetConfig,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Schema(format!("label column {label_column:?} not found")))?;
    let feature_names: Vec<String> =
        headers.iter().enumerate().filter(|&(i, _)| i != label_idx).map(|(_, h)| h.clone()).collect();

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut rejected_rows = 0usize;
    for record in reader.records() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Schema(format!(
                "row {} has {} cells, expected {}",
                rows.len() + rejected_rows + 1,
                record.len(),
                headers.len()
            )));
        }
        let cells: Vec<String> = record.iter().map(str::to_owned).collect();
        if cells.iter().any(|c| is_missing(c)) {
            rejected_rows += 1;
        } else {
            rows.push(cells);
        }
    }
    if rows.is_empty() {
        return Err(Error::Schema("no usable rows after rejecting missing values".into()));
    }

    // Decide each feature column's kind.
    let mut categorical = vec![false; headers.len()];
    match &config.categorical_columns {
        Some(names) => {
            for name in names {
                let idx = headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Schema(format!("categorical column {name:?} not found")))?;
                categorical[idx] = true;
            }
            for (c, header) in headers.iter().enumerate() {
                if c == label_idx || categorical[c] {
                    continue;
                }
                if let Some(bad) = rows.iter().find(|r| parse_number(&r[c]).is_none()) {
                    return Err(Error::Schema(format!(
                        "column {header:?} is not registered as categorical but holds {:?}",
                        bad[c]
                    )));
                }
            }
        }
        None => {
            for c in 0..headers.len() {
                if c != label_idx {
                    categorical[c] = rows.iter().any(|r| parse_number(&r[c]).is_none());
                }
            }
        }
    }

    // Build per-feature encodings in header order.
    let mut encodings = Vec::with_capacity(feature_names.len());
    let mut warnings = Vec::new();
    for (c, header) in headers.iter().enumerate() {
        if c == label_idx {
            continue;
        }
        if categorical[c] {
            let mut levels: Vec<String> = rows.iter().map(|r| r[c].clone()).collect();
            levels.sort();
            levels.dedup();
            encodings.push(ColumnEncoding::Categorical { levels });
        } else {
            let values: Vec<f64> = rows.iter().map(|r| parse_number(&r[c]).unwrap()).collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / values.len() as f64;
            let sd = var.sqrt();
            if sd == 0.0 {
                warnings.push(format!("column {header:?} is constant; encoded as zeros"));
            }
            encodings.push(ColumnEncoding::Numeric { mean, sd });
        }
    }

    let mut col_player = Vec::new();
    for (player, enc) in encodings.iter().enumerate() {
        col_player.extend(std::iter::repeat_n(player, enc.width()));
    }
    let grouping = PlayerGrouping::new(col_player)?;

    let mut label_levels: Vec<String> = rows.iter().map(|r| r[label_idx].clone()).collect();
    label_levels.sort();
    label_levels.dedup();

    let mut samples = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for row in &rows {
        let mut x = Vec::with_capacity(grouping.columns());
        let mut feature = 0;
        for (c, _) in headers.iter().enumerate() {
            if c == label_idx {
                continue;
            }
            match &encodings[feature] {
                ColumnEncoding::Numeric { mean, sd } => {
                    let raw = parse_number(&row[c]).unwrap();
                    x.push(if *sd == 0.0 { 0.0 } else { (raw - mean) / sd });
                }
                ColumnEncoding::Categorical { levels } => {
                    let hot = levels.binary_search(&row[c]).unwrap();
                    for l in 0..levels.len() {
                        x.push(if l == hot { 1.0 } else { 0.0 });
                    }
                }
            }
            feature += 1;
        }
        samples.push(Sample::zero_baseline(x)?);
        labels.push(label_levels.binary_search(&row[label_idx]).unwrap());
    }

    Ok(Dataset {
        samples,
        labels,
        label_levels,
        feature_names,
        encodings,
        grouping,
        rejected_rows,
        warnings,
    })
}

fn synthetic_skeleton(inputs: usize, samples: Vec<Sample>, labels: Vec<usize>) -> Dataset {
    Dataset {
        samples,
        labels,
        label_levels: vec!["0".into(), "1".into()],
        feature_names: (0..inputs).map(|i| format!("x{i}")).collect(),
        encodings: vec![ColumnEncoding::Numeric { mean: 0.0, sd: 1.0 }; inputs],
        grouping: PlayerGrouping::identity(inputs),
        rejected_rows: 0,
        warnings: Vec::new(),
    }
}

/// Draws a sign-symmetric input bounded away from zero, so no feature is
/// accidentally masked and the zero baseline is the distribution mean.
fn draw_input(inputs: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..inputs)
        .map(|_| {
            let mag = rng.random_range(0.25..1.75);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// Linearly separable 2-class task: a fixed random direction splits the
/// inputs. Deterministic per seed on the data stream.
pub fn synthetic_separable(inputs: usize, count: usize, seed: u64) -> Dataset {
    let mut rng = stream(seed, STREAM_DATA);
    let w: Vec<f64> = (0..inputs).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut samples = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let x = draw_input(inputs, &mut rng);
        let score: f64 = w.iter().zip(&x).map(|(wi, xi)| wi * xi).sum();
        labels.push(usize::from(score > 0.0));
        samples.push(Sample::zero_baseline(x).unwrap());
    }
    synthetic_skeleton(inputs, samples, labels)
}

/// 2-class task whose label is a disjunction of sign conjunctions:
/// `(x0>0 AND x1>0) OR (x2>0 AND x3>0)`. The multiplicative structure gives
/// gated units something real to latch onto. Requires at least 4 inputs.
pub fn synthetic_interaction(inputs: usize, count: usize, seed: u64) -> Dataset {
    assert!(inputs >= 4, "interaction task needs at least 4 inputs");
    let mut rng = stream(seed, STREAM_DATA);
    let mut samples = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let x = draw_input(inputs, &mut rng);
        let label = (x[0] > 0.0 && x[1] > 0.0) || (x[2] > 0.0 && x[3] > 0.0);
        labels.push(usize::from(label));
        samples.push(Sample::zero_baseline(x).unwrap());
    }
    synthetic_skeleton(inputs, samples, labels)
}

/// Writes a dataset back to headered CSV in raw (decoded) values, so the file
/// can be re-ingested by [`load_csv_dataset`].
pub fn save_csv_dataset(
    dataset: &Dataset,
    label_column: &str,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header = dataset.feature_names.clone();
    header.push(label_column.to_owned());
    writer.write_record(&header)?;
    for i in 0..dataset.len() {
        let mut row = dataset.raw_row(i);
        row.push(dataset.label_levels[dataset.labels[i]].clone());
        writer.write_record(&row)?;
    }
    Ok(writer.flush()?)
}

/// Reads a plain-text grid of reals: one row per line, cells separated by
/// commas or whitespace, `#` lines ignored. Returns the flattened grid with
/// its dimensions.
pub fn read_image_grid(path: impl AsRef<Path>) -> Result<(Vec<f64>, usize, usize)> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut values = Vec::new();
    let mut width = None;
    let mut height = 0usize;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Format(format!("bad grid cell {t:?}")))
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Format(format!(
                    "ragged grid: row {} has {} cells, expected {w}",
                    height + 1,
                    row.len()
                )));
            }
            _ => {}
        }
        values.extend(row);
        height += 1;
    }
    let width = width.ok_or_else(|| Error::Format("empty grid file".into()))?;
    if width == 0 {
        return Err(Error::Format("empty grid row".into()));
    }
    Ok((values, height, width))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::brute_force_shapley;
    use crate::model::{AndMode, MlpConfig};
    use crate::train::{init_mlp, InitScheme};
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_line_file_yields_two_samples() {
        let f = write_csv("a,b,y\n1.0,2.0,0\n3.0,4.0,1\n");
        let ds = load_csv_dataset(f.path(), "y", &DatasetConfig::default()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.players(), 2);
        assert_eq!(ds.columns(), 2);
        assert_eq!(ds.classes(), 2);
        assert_eq!(ds.labels, vec![0, 1]);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.rejected_rows, 0);
    }

    #[test]
    fn numeric_columns_are_z_scored_and_round_trip() {
        let f = write_csv("a,y\n1.0,0\n2.0,0\n3.0,1\n4.0,1\n");
        let ds = load_csv_dataset(f.path(), "y", &DatasetConfig::default()).unwrap();
        let values: Vec<f64> = ds.samples.iter().map(|s| s.x[0]).collect();
        let mean: f64 = values.iter().sum::<f64>() / 4.0;
        let sd: f64 = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0).sqrt();
        assert!(mean.abs() < 1e-12, "encoded mean {mean}");
        assert!((sd - 1.0).abs() < 1e-12, "encoded sd {sd}");
        for (i, raw) in ["1", "2", "3", "4"].iter().enumerate() {
            assert_eq!(ds.raw_row(i), vec![raw.to_string()]);
        }
    }

    #[test]
    fn constant_column_encodes_to_zeros_with_a_warning() {
        let f = write_csv("a,b,y\n5.0,1.0,0\n5.0,2.0,1\n5.0,3.0,0\n");
        let ds = load_csv_dataset(f.path(), "y", &DatasetConfig::default()).unwrap();
        assert!(ds.samples.iter().all(|s| s.x[0] == 0.0));
        assert_eq!(ds.warnings.len(), 1);
        assert!(ds.warnings[0].contains("\"a\""), "warning: {}", ds.warnings[0]);
    }

    #[test]
    fn categorical_column_becomes_one_grouped_player() {
        let f = write_csv("color,v,y\nred,1.0,0\ngreen,2.0,1\nblue,3.0,0\nred,4.0,1\n");
        let ds = load_csv_dataset(f.path(), "y", &DatasetConfig::default()).unwrap();
        // 3 levels one-hot + 1 numeric = 4 encoded columns, but 2 players.
        assert_eq!(ds.columns(), 4);
        assert_eq!(ds.players(), 2);
        assert_eq!(
            ds.encodings[0],
            ColumnEncoding::Categorical {
                levels: vec!["blue".into(), "green".into(), "red".into()]
            }
        );
        assert_eq!(ds.grouping.columns_of(0).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(ds.samples[0].x[..3], [0.0, 0.0, 1.0]);
        assert_eq!(ds.raw_row(0)[0], "red");
    }

    #[test]
    fn grouped_players_are_masked_atomically_in_the_game() {
        // The one-hot group must behave as one player end to end: exact
        // attributions over the grouped sample match the brute-force oracle.
        let f = write_csv("color,v,y\nred,1.0,0\ngreen,2.0,1\nblue,3.0,0\nred,4.0,1\n");
        let ds = load_csv_dataset(f.path(), "y", &DatasetConfig::default()).unwrap();
        let mut cfg = MlpConfig::new(4, vec![6, 6], 2, 10.0, 2.0);
        cfg.grouping = ds.grouping.clone();
        let model = init_mlp(cfg, &InitScheme::MlpFixedFanin { k: 2 }, 50).unwrap();
        for sample in &ds.samples {
            for mode in [AndMode::Hard, AndMode::Soft] {
                let exact = model.exact_shapley(sample, 1, mode).unwrap();
                let game = model.induced_game(sample, 1, mode).unwrap();
                let brute = brute_force_shapley(&game).unwrap();
                assert_eq!(exact.phi.len(), 2);
                for (a, b) in exact.phi.iter().zip(&brute.phi) {
                    assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn missing_cells_reject_rows_and_are_counted() {
        let f = write_csv("a,b,y\n1.0,2.0,0\n,3.0,1\n4.0,NA,0\n5.0,6.0,?\n7.0,8.0,1\n");
        let ds = load_csv_dataset(f.path(), "y", &DatasetConfig::default()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.rejected_rows, 3);
    }

    #[test]
    fn unregistered_text_column_is_a_schema_error() {
        let f = write_csv("color,notes,y\nred,fine,0\ngreen,meh,1\n");
        let config = DatasetConfig { categorical_columns: Some(vec!["color".into()]) };
        match load_csv_dataset(f.path(), "y", &config) {
            Err(Error::Schema(msg)) => assert!(msg.contains("\"notes\""), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn absent_label_column_is_a_schema_error() {
        let f = write_csv("a,b\n1.0,2.0\n");
        assert!(matches!(
            load_csv_dataset(f.path(), "y", &DatasetConfig::default()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn all_rows_missing_is_a_schema_error() {
        let f = write_csv("a,y\nNA,0\n?,1\n");
        assert!(matches!(
            load_csv_dataset(f.path(), "y", &DatasetConfig::default()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn synthetic_tasks_are_deterministic_and_balanced() {
        let a = synthetic_separable(8, 500, 9);
        let b = synthetic_separable(8, 500, 9);
        assert_eq!(a, b);
        let ones = a.labels.iter().filter(|&&l| l == 1).count();
        assert!((100..400).contains(&ones), "separable balance {ones}/500");
        assert!(a.samples.iter().all(|s| s.x.iter().all(|&v| v.abs() >= 0.25)));

        let c = synthetic_interaction(12, 500, 9);
        let d = synthetic_interaction(12, 500, 9);
        assert_eq!(c, d);
        let ones = c.labels.iter().filter(|&&l| l == 1).count();
        // P(label=1) = 7/16.
        assert!((150..300).contains(&ones), "interaction balance {ones}/500");
        for (i, s) in c.samples.iter().enumerate() {
            let expect = (s.x[0] > 0.0 && s.x[1] > 0.0) || (s.x[2] > 0.0 && s.x[3] > 0.0);
            assert_eq!(c.labels[i], usize::from(expect));
        }
    }

    #[test]
    fn split_is_seeded_and_partitions_the_data() {
        let ds = synthetic_separable(6, 100, 4);
        let (train_a, val_a) = ds.shuffled_split(0.2, 11);
        let (train_b, val_b) = ds.shuffled_split(0.2, 11);
        assert_eq!(train_a, train_b);
        assert_eq!(val_a, val_b);
        assert_eq!(train_a.len(), 80);
        assert_eq!(val_a.len(), 20);
        let (train_c, _) = ds.shuffled_split(0.2, 12);
        assert_ne!(train_a.samples, train_c.samples);
        // Every original sample lands in exactly one side.
        let mut seen: Vec<&Sample> = train_a.samples.iter().chain(&val_a.samples).collect();
        assert_eq!(seen.len(), 100);
        let mut originals: Vec<&Sample> = ds.samples.iter().collect();
        let key = |s: &&Sample| format!("{:?}", s.x);
        seen.sort_by_key(key);
        originals.sort_by_key(key);
        assert_eq!(seen, originals);
    }

    #[test]
    fn saved_dataset_reloads_with_identical_structure() {
        let ds = synthetic_interaction(6, 40, 13);
        let f = tempfile::NamedTempFile::new().unwrap();
        save_csv_dataset(&ds, "label", f.path()).unwrap();
        let loaded = load_csv_dataset(f.path(), "label", &DatasetConfig::default()).unwrap();
        assert_eq!(loaded.len(), ds.len());
        assert_eq!(loaded.players(), ds.players());
        assert_eq!(loaded.labels, ds.labels);
        assert_eq!(loaded.feature_names, ds.feature_names);
        // Decoding the reloaded samples recovers the written raw values.
        for i in 0..ds.len() {
            for (a, b) in loaded.raw_row(i).iter().zip(ds.raw_row(i)) {
                let (a, b): (f64, f64) = (a.parse().unwrap(), b.parse().unwrap());
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn grid_reader_handles_commas_whitespace_and_comments() {
        let f = write_csv("# toy image\n1.0, 2.0, 3.0\n4.0 5.0 6.0\n\n7.0,8.0 9.0\n");
        let (values, h, w) = read_image_grid(f.path()).unwrap();
        assert_eq!((h, w), (3, 3));
        assert_eq!(values, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
    }

    #[test]
    fn grid_reader_rejects_ragged_and_bad_cells() {
        let ragged = write_csv("1 2 3\n4 5\n");
        assert!(matches!(read_image_grid(ragged.path()), Err(Error::Format(_))));
        let bad = write_csv("1 x 3\n");
        assert!(matches!(read_image_grid(bad.path()), Err(Error::Format(_))));
        let empty = write_csv("# nothing\n");
        assert!(matches!(read_image_grid(empty.path()), Err(Error::Format(_))));
    }
}
