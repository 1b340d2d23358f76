//! Feature standardization, equal-frequency binning and the target transform.
//!
//! Features are standardized per mode, then cut at linear-interpolation
//! quantiles `Q(k/K)`, `k = 1..K-1`, giving `K` bins labelled `0..K-1`.
//! Values outside the fitted range clamp to the extreme bins.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Index4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreprocessError {
    #[error("cannot fit on an empty sample")]
    Empty,
    #[error("non-finite value {value} at position {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("bin count must be at least 2, got {0}")]
    TooFewBins(usize),
    #[error("{samples} samples cannot fill {bins} bins")]
    TooFewSamples { samples: usize, bins: usize },
}

fn check_finite(values: &[f64]) -> Result<(), PreprocessError> {
    if values.is_empty() {
        return Err(PreprocessError::Empty);
    }
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(PreprocessError::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// Mean and population standard deviation of one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mu: f64,
    pub sigma: f64,
}

impl Standardizer {
    pub fn fit(values: &[f64]) -> Result<Self, PreprocessError> {
        check_finite(values)?;
        let n = values.len() as f64;
        let mu = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        Ok(Self {
            mu,
            sigma: var.sqrt(),
        })
    }

    /// `x -> x`; used for inputs that are already bin labels.
    pub fn identity() -> Self {
        Self { mu: 0.0, sigma: 1.0 }
    }

    /// `(x - mu) / sigma`, or 0 for a constant feature.
    pub fn apply(&self, x: f64) -> f64 {
        if self.sigma == 0.0 {
            0.0
        } else {
            (x - self.mu) / self.sigma
        }
    }
}

/// Quantile of an ascending slice with linear interpolation between order
/// statistics (position `p * (n - 1)`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Interior bin boundaries of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    pub edges: Vec<f64>,
    /// Bin count asked for at fit time; `effective_bins` may be smaller after ties collapse.
    pub requested_bins: usize,
}

impl BinEdges {
    /// Fits `bins - 1` interior edges at quantiles `k / bins`.
    ///
    /// An edge is dropped when it would leave the bin below it empty on the
    /// fitting sample (ties, or two quantiles falling between the same pair
    /// of order statistics), so every label in `0..effective_bins()` is
    /// populated by at least one fitting sample.
    pub fn fit(values: &[f64], bins: usize) -> Result<Self, PreprocessError> {
        if bins < 2 {
            return Err(PreprocessError::TooFewBins(bins));
        }
        check_finite(values)?;
        if values.len() < bins {
            return Err(PreprocessError::TooFewSamples {
                samples: values.len(),
                bins,
            });
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);

        let mut edges: Vec<f64> = Vec::with_capacity(bins - 1);
        let mut below = 0usize;
        for k in 1..bins {
            let edge = quantile_sorted(&sorted, k as f64 / bins as f64);
            if edges.last().is_some_and(|&last| edge <= last) {
                continue;
            }
            let upto = sorted.partition_point(|&v| v < edge);
            if upto > below {
                edges.push(edge);
                below = upto;
            }
        }
        if edges.len() + 1 < bins {
            log::warn!(
                "quantile edges collapsed: {} of {} requested bins remain",
                edges.len() + 1,
                bins
            );
        }
        Ok(Self {
            edges,
            requested_bins: bins,
        })
    }

    /// Half-integer edges mapping `0, 1, .., bins-1` to themselves.
    pub fn identity(bins: usize) -> Self {
        Self {
            edges: (1..bins).map(|k| k as f64 - 0.5).collect(),
            requested_bins: bins,
        }
    }

    pub fn effective_bins(&self) -> usize {
        self.edges.len() + 1
    }

    /// Label of `x`: the number of edges at or below it.
    pub fn bin(&self, x: f64) -> usize {
        self.edges.partition_point(|&e| e <= x)
    }
}

/// Standardizer and edges for one tensor mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeBinning {
    pub standardizer: Standardizer,
    pub edges: BinEdges,
}

impl ModeBinning {
    pub fn fit(values: &[f64], bins: usize) -> Result<Self, PreprocessError> {
        let standardizer = Standardizer::fit(values)?;
        let standardized: Vec<f64> = values.iter().map(|&v| standardizer.apply(v)).collect();
        let edges = BinEdges::fit(&standardized, bins)?;
        Ok(Self {
            standardizer,
            edges,
        })
    }

    pub fn label(&self, x: f64) -> usize {
        self.edges.bin(self.standardizer.apply(x))
    }
}

/// Maps continuous `(h, u, v, w)` to integer `(p, i, j, k)` labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    /// Always in (h, u, v, w) order.
    pub modes: [ModeBinning; 4],
}

pub const MODE_NAMES: [&str; 4] = ["h", "u", "v", "w"];

impl Discretizer {
    pub fn fit(features: &[[f64; 4]], bins: [usize; 4]) -> Result<Self, PreprocessError> {
        let fit_mode = |m: usize| {
            let column: Vec<f64> = features.iter().map(|f| f[m]).collect();
            ModeBinning::fit(&column, bins[m])
        };
        Ok(Self {
            modes: [fit_mode(0)?, fit_mode(1)?, fit_mode(2)?, fit_mode(3)?],
        })
    }

    /// Treats the four features as already-discrete labels in `0..sizes[m]`.
    pub fn identity(sizes: [usize; 4]) -> Self {
        Self {
            modes: sizes.map(|s| ModeBinning {
                standardizer: Standardizer::identity(),
                edges: BinEdges::identity(s),
            }),
        }
    }

    /// Configured bin counts, which size the embedding tables.
    pub fn mode_sizes(&self) -> [usize; 4] {
        [0, 1, 2, 3].map(|m| self.modes[m].edges.requested_bins)
    }

    pub fn effective_bins(&self) -> [usize; 4] {
        [0, 1, 2, 3].map(|m| self.modes[m].edges.effective_bins())
    }

    pub fn discretize(&self, features: [f64; 4]) -> Index4 {
        [0, 1, 2, 3].map(|m| self.modes[m].label(features[m]))
    }
}

/// `sign(y) * ln(1 + |y|)`.
pub fn signed_log(y: f64) -> f64 {
    y.signum() * y.abs().ln_1p()
}

pub fn signed_exp(t: f64) -> f64 {
    t.signum() * t.abs().exp_m1()
}

/// Signed log, then standardization, then min-max into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTransform {
    pub log_standardizer: Standardizer,
    pub min: f64,
    pub max: f64,
}

impl TargetTransform {
    pub fn fit(targets: &[f64]) -> Result<Self, PreprocessError> {
        check_finite(targets)?;
        let logged: Vec<f64> = targets.iter().map(|&y| signed_log(y)).collect();
        let log_standardizer = Standardizer::fit(&logged)?;
        let (min, max) = logged
            .iter()
            .map(|&t| log_standardizer.apply(t))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| {
                (lo.min(z), hi.max(z))
            });
        Ok(Self {
            log_standardizer,
            min,
            max,
        })
    }

    pub fn forward(&self, y: f64) -> f64 {
        let z = self.log_standardizer.apply(signed_log(y));
        if self.max == self.min {
            0.5
        } else {
            (z - self.min) / (self.max - self.min)
        }
    }

    pub fn inverse(&self, x: f64) -> f64 {
        let z = if self.max == self.min {
            self.min
        } else {
            x * (self.max - self.min) + self.min
        };
        let s = self.log_standardizer;
        let t = if s.sigma == 0.0 { s.mu } else { z * s.sigma + s.mu };
        signed_exp(t)
    }
}

/// Everything fitted on a training split, as persisted between CLI runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub discretizer: Discretizer,
    pub target: Option<TargetTransform>,
}

impl Preprocessing {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("preprocessing state serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}
