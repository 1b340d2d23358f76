//! Observation records, CSV ingestion, interpolation merge and the sparse
//! mode-4 tensor.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::{Discretizer, TargetTransform};
use crate::Index4;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("empty data section")]
    Empty,
    #[error("row {row}, column `{column}`: cannot parse {value:?} as a number")]
    Parse {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("row {row}, column `{column}`: {reason}")]
    Invalid {
        row: usize,
        column: &'static str,
        reason: &'static str,
    },
    #[error("record {0} has no Richardson number")]
    MissingTarget(usize),
}

/// One (station, time, h, u, v, w, Ri) sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindObservation {
    pub station_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
    /// Elevation, m.
    pub h: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub ri: Option<f64>,
}

impl WindObservation {
    pub fn features(&self) -> [f64; 4] {
        [self.h, self.u, self.v, self.w]
    }

    fn validate(&self, row: usize) -> Result<(), DataError> {
        let bad = |column, reason| Err(DataError::Invalid { row, column, reason });
        if !self.timestamp.is_finite() {
            return bad("timestamp", "must be finite");
        }
        if !self.h.is_finite() || self.h < 0.0 {
            return bad("h", "must be finite and non-negative");
        }
        for (column, x) in [("u", self.u), ("v", self.v), ("w", self.w)] {
            if !x.is_finite() {
                return bad(column, "must be finite");
            }
        }
        if self.ri.is_some_and(|r| !r.is_finite()) {
            return bad("ri", "must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<WindObservation>,
    pub provenance: Vec<PathBuf>,
}

const REQUIRED: [&str; 4] = ["h", "u", "v", "w"];

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut ds = Self::read_csv(file)?;
        ds.provenance.push(path.to_path_buf());
        Ok(ds)
    }

    /// Parses `station_id,timestamp,h,u,v,w[,ri]`. Rows are numbered from 1,
    /// counting data rows only.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let mut required = [0usize; 4];
        for (slot, name) in required.iter_mut().zip(REQUIRED) {
            *slot = col(name).ok_or(DataError::MissingColumn(name))?;
        }
        let station = col("station_id");
        let time = col("timestamp");
        let ri = col("ri");

        let mut records = Vec::new();
        for (n, row) in rdr.records().enumerate() {
            let row_no = n + 1;
            let row = row?;
            let number = |idx: usize, column: &'static str| -> Result<f64, DataError> {
                let raw = row.get(idx).unwrap_or("");
                raw.parse::<f64>().map_err(|_| DataError::Parse {
                    row: row_no,
                    column,
                    value: raw.to_string(),
                })
            };
            let timestamp = match time {
                Some(t) => number(t, "timestamp")?,
                None => 0.0,
            };
            let ri = match ri.and_then(|i| row.get(i)) {
                None | Some("") => None,
                Some(_) => Some(number(ri.unwrap(), "ri")?),
            };
            let obs = WindObservation {
                station_id: station
                    .and_then(|s| row.get(s))
                    .unwrap_or_default()
                    .to_string(),
                timestamp,
                h: number(required[0], "h")?,
                u: number(required[1], "u")?,
                v: number(required[2], "v")?,
                w: number(required[3], "w")?,
                ri,
            };
            obs.validate(row_no)?;
            records.push(obs);
        }
        if records.is_empty() {
            return Err(DataError::Empty);
        }
        Ok(Self {
            records,
            provenance: Vec::new(),
        })
    }

    /// Writes the canonical schema; absent `ri` becomes an empty cell.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["station_id", "timestamp", "h", "u", "v", "w", "ri"])?;
        for r in &self.records {
            w.write_record([
                r.station_id.clone(),
                r.timestamp.to_string(),
                r.h.to_string(),
                r.u.to_string(),
                r.v.to_string(),
                r.w.to_string(),
                r.ri.map(|x| x.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|source| DataError::Io {
            path: PathBuf::from("<output>"),
            source,
        })?;
        Ok(())
    }

    pub fn targets(&self) -> Result<Vec<f64>, DataError> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| r.ri.ok_or(DataError::MissingTarget(i)))
            .collect()
    }

    pub fn features(&self) -> Vec<[f64; 4]> {
        self.records.iter().map(WindObservation::features).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeTolerance {
    pub time_s: f64,
    pub height_m: f64,
}

// Linear interpolation at `x` from the nearest samples at or below and at or
// above it. `None` unless both sides exist.
fn bracket(samples: &[(f64, f64)], x: f64) -> Option<f64> {
    let below = samples
        .iter()
        .filter(|(k, _)| *k <= x)
        .max_by(|a, b| a.0.total_cmp(&b.0));
    let above = samples
        .iter()
        .filter(|(k, _)| *k >= x)
        .min_by(|a, b| a.0.total_cmp(&b.0));
    match (below, above) {
        (Some(&(k0, y0)), Some(&(k1, y1))) => {
            if k1 == k0 {
                Some(y0)
            } else {
                Some(y0 + (y1 - y0) * (x - k0) / (k1 - k0))
            }
        }
        _ => None,
    }
}

/// Fills absent `ri` in `primary` from `secondary` records of the same station.
///
/// Candidates lie within the time and height tolerances. Each distinct
/// secondary height is first interpolated in time to the primary timestamp;
/// the resulting per-height values are then interpolated in height.
/// Records without a bracketing pair stay unfilled.
pub fn merge_interpolate(primary: &Dataset, secondary: &Dataset, tol: MergeTolerance) -> Dataset {
    let mut out = primary.clone();
    out.provenance.extend(secondary.provenance.iter().cloned());
    for rec in out.records.iter_mut().filter(|r| r.ri.is_none()) {
        let candidates: Vec<&WindObservation> = secondary
            .records
            .iter()
            .filter(|s| {
                s.station_id == rec.station_id
                    && s.ri.is_some()
                    && (s.timestamp - rec.timestamp).abs() <= tol.time_s
                    && (s.h - rec.h).abs() <= tol.height_m
            })
            .collect();
        let mut heights: Vec<f64> = candidates.iter().map(|s| s.h).collect();
        heights.sort_by(f64::total_cmp);
        heights.dedup();

        let per_height: Vec<(f64, f64)> = heights
            .iter()
            .filter_map(|&h| {
                let series: Vec<(f64, f64)> = candidates
                    .iter()
                    .filter(|s| s.h == h)
                    .map(|s| (s.timestamp, s.ri.unwrap()))
                    .collect();
                bracket(&series, rec.timestamp).map(|ri| (h, ri))
            })
            .collect();
        rec.ri = bracket(&per_height, rec.h);
    }
    out
}

/// Coordinate-format mode-4 tensor. Duplicate index tuples are kept as
/// separate entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseTensor4 {
    pub entries: Vec<(Index4, f64)>,
    pub mode_sizes: [usize; 4],
}

impl SparseTensor4 {
    pub fn new(entries: Vec<(Index4, f64)>, mode_sizes: [usize; 4]) -> Result<Self, TensorError> {
        if entries.is_empty() {
            return Err(TensorError::Empty);
        }
        if let Some(m) = mode_sizes.iter().position(|&s| s == 0) {
            return Err(TensorError::ZeroMode(m));
        }
        for (pos, (idx, _)) in entries.iter().enumerate() {
            for m in 0..4 {
                if idx[m] >= mode_sizes[m] {
                    return Err(TensorError::OutOfRange {
                        entry: pos,
                        mode: m,
                        index: idx[m],
                        size: mode_sizes[m],
                    });
                }
            }
        }
        Ok(Self {
            entries,
            mode_sizes,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries whose index tuple already occurred earlier in the list.
    pub fn collisions(&self) -> usize {
        let mut seen = HashSet::with_capacity(self.entries.len());
        self.entries.iter().filter(|(idx, _)| !seen.insert(*idx)).count()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.1).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            entries: indices.iter().map(|&i| self.entries[i]).collect(),
            mode_sizes: self.mode_sizes,
        }
    }

    /// `p,i,j,k,value` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["p", "i", "j", "k", "value"])?;
        for (idx, v) in &self.entries {
            w.write_record([
                idx[0].to_string(),
                idx[1].to_string(),
                idx[2].to_string(),
                idx[3].to_string(),
                v.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("a sparse tensor needs at least one entry")]
    Empty,
    #[error("mode {0} has size zero")]
    ZeroMode(usize),
    #[error("entry {entry}: index {index} in mode {mode} exceeds size {size}")]
    OutOfRange {
        entry: usize,
        mode: usize,
        index: usize,
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltTensor {
    pub tensor: SparseTensor4,
    pub collisions: usize,
}

/// One entry per record: discretized `(h,u,v,w)` and transformed `ri`.
pub fn build_sparse_tensor(
    ds: &Dataset,
    disc: &Discretizer,
    target: &TargetTransform,
) -> Result<BuiltTensor, DataError> {
    let targets = ds.targets()?;
    let entries = ds
        .records
        .iter()
        .zip(targets)
        .map(|(r, y)| (disc.discretize(r.features()), target.forward(y)))
        .collect();
    let tensor = SparseTensor4::new(entries, disc.mode_sizes()).map_err(|_| DataError::Empty)?;
    let collisions = tensor.collisions();
    Ok(BuiltTensor { tensor, collisions })
}
