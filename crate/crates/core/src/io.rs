//! CSV ingestion, train/validation/test splitting, atomic report writes,
//! and run manifests.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::terms::RawDesign;

/// A numeric table with a mandatory header row.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularFile {
    names: Vec<String>,
    values: DMatrix<f64>,
}

impl TabularFile {
    /// Parses comma-separated text. Every body cell must be a finite real
    /// written with a '.' decimal point; rows are numbered from 1 after the
    /// header.
    pub fn parse(bytes: &[u8]) -> Result<TabularFile> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(bytes);
        let names: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Malformed(format!("header: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if names.is_empty() || names.iter().all(|n| n.is_empty()) {
            return Err(Error::Malformed("missing header row".into()));
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::Malformed(format!("header column {} is empty", i + 1)));
            }
            if names[..i].contains(name) {
                return Err(Error::Malformed(format!("duplicate column name `{name}`")));
            }
        }
        let width = names.len();
        let mut data = Vec::new();
        let mut rows = 0;
        for (r, record) in reader.records().enumerate() {
            let row = r + 1;
            let record = record.map_err(|e| Error::Parse {
                row,
                column: String::new(),
                message: e.to_string(),
            })?;
            if record.len() != width {
                return Err(Error::Parse {
                    row,
                    column: names.get(record.len().min(width - 1)).cloned().unwrap_or_default(),
                    message: format!("expected {width} fields, found {}", record.len()),
                });
            }
            for (cell, name) in record.iter().zip(&names) {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    row,
                    column: name.clone(),
                    message: format!("`{cell}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        column: name.clone(),
                        message: format!("`{cell}` is not finite"),
                    });
                }
                data.push(v);
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::Malformed("no data rows".into()));
        }
        Ok(TabularFile {
            names,
            values: DMatrix::from_row_slice(rows, width, &data),
        })
    }

    pub fn read(path: &Path) -> Result<TabularFile> {
        TabularFile::parse(&std::fs::read(path)?)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Main effects: every column except `response` (if present).
    pub fn design(&self, response: &str) -> Result<RawDesign> {
        let keep: Vec<usize> = (0..self.names.len()).filter(|&c| self.names[c] != response).collect();
        if keep.is_empty() {
            return Err(Error::InvalidDimension("no predictor columns".into()));
        }
        RawDesign::new(self.values.select_columns(&keep))?
            .with_names(keep.iter().map(|&c| self.names[c].clone()).collect())
    }

    /// Predictors and the named response column.
    pub fn design_and_response(&self, response: &str) -> Result<(RawDesign, DVector<f64>)> {
        let c = self
            .column_index(response)
            .ok_or_else(|| Error::InvalidOptions(format!("response column `{response}` not found")))?;
        Ok((self.design(response)?, self.values.column(c).into_owned()))
    }
}

/// Split sizes for a `train:valid:test` ratio. Train gets
/// `floor(n * train / total)`; the rest is divided between validation and
/// test by the same floor rule, and anything left over goes to train.
pub fn split_sizes(n: usize, ratio: [usize; 3]) -> Result<[usize; 3]> {
    let total: usize = ratio.iter().sum();
    if ratio[0] == 0 || total == 0 {
        return Err(Error::InvalidOptions(
            "split ratio needs a positive training share".into(),
        ));
    }
    let mut train = n * ratio[0] / total;
    let rest = n - train;
    let tail = ratio[1] + ratio[2];
    let valid = (rest * ratio[1]).checked_div(tail).unwrap_or(0);
    let test = (rest * ratio[2]).checked_div(tail).unwrap_or(0);
    train += rest - valid - test;
    Ok([train, valid, test])
}

/// Shuffles `0..n` with `seed` and cuts it into train, validation, and
/// test row sets per [`split_sizes`].
pub fn shuffle_split(n: usize, ratio: [usize; 3], seed: u64) -> Result<[Vec<usize>; 3]> {
    let [train, valid, _] = split_sizes(n, ratio)?;
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = rows.split_off(train + valid);
    let valid = rows.split_off(train);
    Ok([rows, valid, test])
}

/// Parses `"3:1:1"`.
pub fn parse_ratio(s: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::InvalidOptions(format!("split ratio `{s}` must look like 3:1:1"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|_| bad())?;
    }
    Ok(out)
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Record of one CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// Effective configuration of the run.
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<PathBuf>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, config: serde_json::Value, seed: u64, started_unix: u64) -> Self {
        let config_sha256 = sha256_hex(config.to_string().as_bytes());
        RunManifest {
            command: command.into(),
            args,
            config,
            config_sha256,
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            started_unix,
            finished_unix: started_unix,
            outputs: Vec::new(),
        }
    }

    pub fn write(mut self, path: &Path) -> Result<()> {
        self.finished_unix = unix_now();
        self.outputs.push(path.to_path_buf());
        write_atomic(path, &serde_json::to_vec_pretty(&self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_numeric_table() {
        let t = TabularFile::parse(b"a,b,y\n1,2.5,3\n-1e-3, 4 ,5\n").unwrap();
        assert_eq!(t.names(), ["a", "b", "y"]);
        assert_eq!(t.nrows(), 2);
        let (x, y) = t.design_and_response("y").unwrap();
        assert_eq!(x.p(), 2);
        assert_eq!(x.values()[(1, 0)], -1e-3);
        assert_eq!(y.as_slice(), &[3.0, 5.0]);
        assert_eq!(x.names().unwrap(), ["a", "b"]);
    }

    #[test]
    fn reports_bad_cell_position() {
        let err = TabularFile::parse(b"a,b\n1,2\n3,x\n").unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column.as_str()), (2, "b")),
            e => panic!("{e}"),
        }
        assert!(matches!(
            TabularFile::parse(b"a,b\n1,NaN\n"),
            Err(Error::Parse { row: 1, .. })
        ));
        assert!(matches!(TabularFile::parse(b"a,b\n1,inf\n"), Err(Error::Parse { .. })));
        assert!(matches!(
            TabularFile::parse(b"a,b\n1\n"),
            Err(Error::Parse { row: 1, .. })
        ));
        assert!(TabularFile::parse(b"a,b\n1,2,3\n").is_err());
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(matches!(TabularFile::parse(b""), Err(Error::Malformed(_))));
        assert!(matches!(TabularFile::parse(b"a,a\n1,2\n"), Err(Error::Malformed(_))));
        assert!(matches!(TabularFile::parse(b"a,b\n"), Err(Error::Malformed(_))));
        assert!(matches!(TabularFile::parse(b"a,,c\n1,2,3\n"), Err(Error::Malformed(_))));
    }

    #[test]
    fn missing_response() {
        let t = TabularFile::parse(b"a,b\n1,2\n").unwrap();
        assert!(matches!(t.design_and_response("y"), Err(Error::InvalidOptions(_))));
        assert_eq!(t.design("y").unwrap().p(), 2);
    }

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_sizes(449, [3, 1, 1]).unwrap(), [269, 90, 90]);
        assert_eq!(split_sizes(500, [3, 1, 1]).unwrap(), [300, 100, 100]);
        assert_eq!(split_sizes(7, [3, 1, 1]).unwrap(), [5, 1, 1]);
        assert_eq!(split_sizes(10, [1, 0, 0]).unwrap(), [10, 0, 0]);
        for n in 0..200 {
            assert_eq!(split_sizes(n, [3, 1, 1]).unwrap().iter().sum::<usize>(), n);
        }
        assert!(split_sizes(10, [0, 1, 1]).is_err());
    }

    #[test]
    fn shuffle_split_partitions_rows() {
        let [a, b, c] = shuffle_split(449, [3, 1, 1], 9).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (269, 90, 90));
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..449).collect::<Vec<_>>());
        assert_eq!(shuffle_split(449, [3, 1, 1], 9).unwrap()[0], a);
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!(parse_ratio("3:1:1").unwrap(), [3, 1, 1]);
        assert!(parse_ratio("3:1").is_err());
        assert!(parse_ratio("a:b:c").is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn sha_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
