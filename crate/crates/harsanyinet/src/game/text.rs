//! Plain-text game tables.
//!
//! Format (one game per file):
//!
//! ```text
//! game v1 n=<n> kind=<reward|interaction>
//! <bits> <value>
//! ...
//! ```
//!
//! with exactly `2^n` data lines in ascending bitmask order. `<bits>` is the
//! coalition as an `n`-character binary string (player 0 is the rightmost
//! bit; player `n-1` the leftmost) and `<value>` carries 17 significant
//! digits, enough to round-trip any f64.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::game::{GameKind, GameTable, MAX_PLAYERS};

impl GameTable {
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "game v1 n={} kind={}", self.n(), self.kind().name())?;
        for (mask, v) in self.values().iter().enumerate() {
            if self.n() == 0 {
                writeln!(out, "0 {v:.16e}")?;
            } else {
                writeln!(out, "{mask:0width$b} {v:.16e}", width = self.n())?;
            }
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty game file".into()))??;
        let (n, kind) = parse_header(&header)?;

        let size = 1usize << n;
        let mut values = Vec::with_capacity(size);
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if values.len() == size {
                return Err(Error::Format(format!("more than {size} data lines")));
            }
            let (bits, value) = line
                .trim()
                .split_once(' ')
                .ok_or_else(|| Error::Format(format!("line {}: expected '<bits> <value>'", idx + 2)))?;
            let mask = u32::from_str_radix(bits, 2)
                .map_err(|_| Error::Format(format!("line {}: bad bitmask {bits:?}", idx + 2)))?;
            if mask as usize != values.len() {
                return Err(Error::Format(format!(
                    "line {}: expected coalition {:0width$b}, got {bits}",
                    idx + 2,
                    values.len(),
                    width = n.max(1)
                )));
            }
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad value {value:?}", idx + 2)))?;
            values.push(value);
        }
        if values.len() != size {
            return Err(Error::Format(format!(
                "expected {size} data lines, got {}",
                values.len()
            )));
        }
        GameTable::new(n, kind, values)
    }

    pub fn save_text(&self, path: &std::path::Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_text(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load_text(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_text(std::io::BufReader::new(file))
    }
}

fn parse_header(header: &str) -> Result<(usize, GameKind)> {
    let mut parts = header.split_whitespace();
    let magic = (parts.next(), parts.next());
    if magic != (Some("game"), Some("v1")) {
        return Err(Error::VersionMismatch(header.to_string()));
    }
    let mut n = None;
    let mut kind = None;
    for part in parts {
        match part.split_once('=') {
            Some(("n", v)) => {
                n = Some(v.parse::<usize>().map_err(|_| {
                    Error::Format(format!("bad player count {v:?} in header"))
                })?)
            }
            Some(("kind", "reward")) => kind = Some(GameKind::Reward),
            Some(("kind", "interaction")) => kind = Some(GameKind::Interaction),
            _ => return Err(Error::Format(format!("unrecognized header field {part:?}"))),
        }
    }
    let n = n.ok_or_else(|| Error::Format("header missing n=".into()))?;
    if n > MAX_PLAYERS {
        return Err(Error::Capacity(n));
    }
    let kind = kind.ok_or_else(|| Error::Format("header missing kind=".into()))?;
    Ok((n, kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trips_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut values: Vec<f64> = (0..32)
            .map(|_| {
                // Exercise awkward magnitudes, not just [-1, 1].
                let v: f64 = rng.random_range(-1.0..1.0);
                v * 10f64.powi(rng.random_range(-300..300))
            })
            .collect();
        values[0] = 0.0;
        let game = GameTable::new(5, GameKind::Reward, values).unwrap();
        let mut buf = Vec::new();
        game.write_text(&mut buf).unwrap();
        let back = GameTable::read_text(&buf[..]).unwrap();
        assert_eq!(back.values(), game.values(), "text round trip must be exact");
        assert_eq!(back.kind(), game.kind());
    }

    #[test]
    fn header_is_validated() {
        let e = GameTable::read_text("game v2 n=1 kind=reward\n".as_bytes());
        assert!(matches!(e, Err(Error::VersionMismatch(_))));
        let e = GameTable::read_text("game v1 n=25 kind=reward\n".as_bytes());
        assert!(matches!(e, Err(Error::Capacity(25))));
        let e = GameTable::read_text("game v1 n=1 kind=magic\n".as_bytes());
        assert!(matches!(e, Err(Error::Format(_))));
    }

    #[test]
    fn truncation_and_order_are_rejected() {
        let text = "game v1 n=2 kind=reward\n00 0e0\n01 1e0\n";
        assert!(matches!(GameTable::read_text(text.as_bytes()), Err(Error::Format(_))));
        let swapped = "game v1 n=1 kind=reward\n1 1e0\n0 0e0\n";
        assert!(matches!(GameTable::read_text(swapped.as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn written_form_is_stable() {
        let game = GameTable::new(1, GameKind::Reward, vec![0.0, 0.5]).unwrap();
        let mut buf = Vec::new();
        game.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "game v1 n=1 kind=reward\n0 0.0000000000000000e0\n1 5.0000000000000000e-1\n");
    }
}
