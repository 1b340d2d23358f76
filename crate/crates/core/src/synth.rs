//! Synthetic low-rank Tucker tensors with known ground truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{sigmoid, Array};
use crate::data::{Dataset, SparseTensor4, WindObservation};
use crate::models::{tucker_reference, TuckerModel};
use crate::Index4;

/// Target standard deviation of the pre-sigmoid signal.
const SIGNAL_STD: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub mode_sizes: [usize; 4],
    pub ranks: [usize; 4],
    pub noise_std: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("rank {rank} of mode {mode} must be between 1 and its size {size}")]
    Rank { mode: usize, rank: usize, size: usize },
    #[error("{samples} samples requested but the tensor has only {cells} cells")]
    TooManySamples { samples: usize, cells: usize },
    #[error("sample count must be positive")]
    NoSamples,
    #[error("noise std must be finite and non-negative")]
    Noise,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        for m in 0..4 {
            let (rank, size) = (self.ranks[m], self.mode_sizes[m]);
            if rank == 0 || rank > size {
                return Err(SynthError::Rank { mode: m, rank, size });
            }
        }
        let cells: usize = self.mode_sizes.iter().product();
        if self.samples == 0 {
            return Err(SynthError::NoSamples);
        }
        if self.samples > cells {
            return Err(SynthError::TooManySamples {
                samples: self.samples,
                cells,
            });
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(SynthError::Noise);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub tensor: SparseTensor4,
    /// Noise-free generator, stored as an M1 model with zero bias.
    pub truth: TuckerModel,
}

/// Noise-free value of the generator at `idx`.
pub fn truth_value(truth: &TuckerModel, idx: Index4) -> f64 {
    let e = truth.embeddings(idx).expect("index within generator sizes");
    let z = tucker_reference(&truth.core_tensor(), [&e[0], &e[1], &e[2], &e[3]])
        .expect("core matches ranks");
    sigmoid(z + truth.bias())
}

/// Draws Gaussian factors and core, samples distinct cells without
/// replacement, and emits `sigmoid(core-contracted value) + noise`, clipped
/// to `[0, 1]`.
pub fn generate(spec: &SynthSpec) -> Result<Synthetic, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let tables = [0, 1, 2, 3].map(|m| {
        let (rows, rank) = (spec.mode_sizes[m], spec.ranks[m]);
        let data = (0..rows * rank).map(|_| std_normal.sample(&mut rng)).collect();
        Array::matrix(rows, rank, data).expect("table shape")
    });
    // Each contracted value sums prod(ranks) products of unit-variance terms.
    let core_len: usize = spec.ranks.iter().product();
    let core_scale = SIGNAL_STD / (core_len as f64).sqrt();
    let core = (0..core_len)
        .map(|_| core_scale * std_normal.sample(&mut rng))
        .collect();
    let truth = TuckerModel::from_parts(tables, core, 0.0).expect("consistent generator parts");

    let cells: usize = spec.mode_sizes.iter().product();
    let picks = rand::seq::index::sample(&mut rng, cells, spec.samples);
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("noise std");
    let entries = picks
        .into_iter()
        .map(|flat| {
            let idx = unravel(flat, spec.mode_sizes);
            let clean = truth_value(&truth, idx);
            let y = if spec.noise_std > 0.0 {
                (clean + noise.sample(&mut rng)).clamp(0.0, 1.0)
            } else {
                clean
            };
            (idx, y)
        })
        .collect();
    let tensor = SparseTensor4::new(entries, spec.mode_sizes).expect("indices within sizes");
    Ok(Synthetic { tensor, truth })
}

fn unravel(mut flat: usize, sizes: [usize; 4]) -> Index4 {
    let mut idx = [0; 4];
    for m in (0..4).rev() {
        idx[m] = flat % sizes[m];
        flat /= sizes[m];
    }
    idx
}

/// Renders the tensor in the observation CSV schema: labels become
/// `h,u,v,w` (an identity discretizer recovers them) and values become `ri`.
pub fn to_dataset(tensor: &SparseTensor4) -> Dataset {
    Dataset {
        records: tensor
            .entries
            .iter()
            .enumerate()
            .map(|(n, (idx, y))| WindObservation {
                station_id: "synth".into(),
                timestamp: n as f64,
                h: idx[0] as f64,
                u: idx[1] as f64,
                v: idx[2] as f64,
                w: idx[3] as f64,
                ri: Some(*y),
            })
            .collect(),
        provenance: Vec::new(),
    }
}

/// First `train` entries and the rest. Generated entries are already in
/// random cell order, so this is a random split.
pub fn split(tensor: &SparseTensor4, train: usize) -> (SparseTensor4, SparseTensor4) {
    let n = train.min(tensor.len());
    let all: Vec<usize> = (0..tensor.len()).collect();
    (tensor.subset(&all[..n]), tensor.subset(&all[n..]))
}
