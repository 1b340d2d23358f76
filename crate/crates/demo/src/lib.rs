//! Browser bindings for three neutucf operations: a Richardson profile
//! table, quantile binning of a sample, and M1 training on synthetic
//! low-rank data one batch of epochs at a time.
//!
//! Every exported function returns JSON text. The logic lives in plain
//! functions so it can be tested natively.

use neutucf::data::SparseTensor4;
use neutucf::eval::metrics;
use neutucf::models::{predict, ModelError, TrainConfig, Trainer, TuckerModel};
use neutucf::preprocess::BinEdges;
use neutucf::richardson::{profile_ri, ProfileLevel};
use neutucf::synth::{self, SynthSpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerRow {
    pub mid_height: f64,
    /// `None` for a layer without shear.
    pub ri: Option<f64>,
    pub class: &'static str,
}

/// Parses `z,theta,u,v` CSV text and returns one row per adjacent pair of levels.
pub fn profile_layers(csv_text: &str, gravity: f64) -> Result<Vec<LayerRow>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let levels: Vec<ProfileLevel> = rdr
        .deserialize()
        .enumerate()
        .map(|(n, row)| row.map_err(|e| format!("row {}: {e}", n + 1)))
        .collect::<Result<_, _>>()?;
    let layers = profile_ri(&levels, gravity).map_err(|e| e.to_string())?;
    Ok(layers
        .iter()
        .map(|l| LayerRow {
            mid_height: l.mid_height,
            ri: l.ri.is_finite().then(|| l.ri.value()),
            class: l.class.as_str(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinningView {
    pub edges: Vec<f64>,
    pub requested_bins: usize,
    pub effective_bins: usize,
    /// Fitting samples per effective bin.
    pub counts: Vec<usize>,
}

/// Fits equal-frequency edges to `values` and counts how many land in each bin.
pub fn bin_values(values: &[f64], bins: usize) -> Result<BinningView, String> {
    let edges = BinEdges::fit(values, bins).map_err(|e| e.to_string())?;
    let mut counts = vec![0; edges.effective_bins()];
    for &x in values {
        counts[edges.bin(x)] += 1;
    }
    Ok(BinningView {
        requested_bins: bins,
        effective_bins: edges.effective_bins(),
        edges: edges.edges,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Progress {
    pub epoch: usize,
    pub train_loss: f64,
    pub held_out_rmse: f64,
    pub held_out_r2: Option<f64>,
}

/// An M1 model learning a synthetic rank-`true_rank` tensor, with a held-out
/// fifth of the samples for scoring.
pub struct Recovery {
    model: TuckerModel,
    trainer: Trainer,
    held_out: SparseTensor4,
}

impl Recovery {
    pub fn new(size: usize, true_rank: usize, rank: usize, samples: usize, noise: f64, seed: u64) -> Result<Self, String> {
        let spec = SynthSpec {
            mode_sizes: [size; 4],
            ranks: [true_rank; 4],
            noise_std: noise,
            samples,
            seed,
        };
        let generated = synth::generate(&spec).map_err(|e| e.to_string())?;
        let (train_t, held_out) = synth::split(&generated.tensor, samples - samples / 5);
        if held_out.is_empty() {
            return Err("need at least 5 samples".into());
        }
        let model = TuckerModel::new(spec.mode_sizes, [rank; 4], seed).map_err(|e| e.to_string())?;
        let cfg = TrainConfig { seed, ..TrainConfig::default() };
        let trainer = Trainer::new(&model, train_t, cfg).map_err(|e| e.to_string())?;
        Ok(Self { model, trainer, held_out })
    }

    /// Trains `epochs` more epochs and scores the held-out samples.
    pub fn step(&mut self, epochs: usize) -> Result<Progress, String> {
        for _ in 0..epochs {
            self.trainer.epoch(&mut self.model).map_err(|e| e.to_string())?;
        }
        let (truth, predicted) = self.held_out_pairs().map_err(|e| e.to_string())?;
        let m = metrics(&truth, &predicted).map_err(|e| e.to_string())?;
        Ok(Progress {
            epoch: self.trainer.loss_trace().len(),
            train_loss: self.trainer.loss_trace().last().copied().unwrap_or(f64::NAN),
            held_out_rmse: m.rmse,
            held_out_r2: m.r2,
        })
    }

    /// Observed and predicted values on the held-out samples.
    pub fn held_out_pairs(&self) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let p = predict(&self.model, &self.held_out, None)?;
        Ok((self.held_out.values(), p.raw))
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("demo views serialize")
}

/// Richardson layers of a `z,theta,u,v` CSV profile, as JSON.
#[wasm_bindgen]
pub fn richardson_profile(csv_text: &str, gravity: f64) -> Result<String, JsError> {
    profile_layers(csv_text, gravity)
        .map(|rows| to_json(&rows))
        .map_err(|e| JsError::new(&e))
}

/// Equal-frequency binning of `values`, as JSON.
#[wasm_bindgen]
pub fn quantile_bins(values: &[f64], bins: usize) -> Result<String, JsError> {
    bin_values(values, bins)
        .map(|view| to_json(&view))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct RecoverySession {
    inner: Recovery,
}

#[wasm_bindgen]
impl RecoverySession {
    #[wasm_bindgen(constructor)]
    pub fn new(
        size: usize,
        true_rank: usize,
        rank: usize,
        samples: usize,
        noise: f64,
        seed: u32,
    ) -> Result<RecoverySession, JsError> {
        Recovery::new(size, true_rank, rank, samples, noise, u64::from(seed))
            .map(|inner| RecoverySession { inner })
            .map_err(|e| JsError::new(&e))
    }

    /// Progress after `epochs` more epochs, as JSON.
    pub fn step(&mut self, epochs: usize) -> Result<String, JsError> {
        self.inner
            .step(epochs)
            .map(|p| to_json(&p))
            .map_err(|e| JsError::new(&e))
    }

    /// `[[observed, predicted], ...]` on the held-out samples, as JSON.
    pub fn scatter(&self) -> Result<String, JsError> {
        let (truth, predicted) = self.inner.held_out_pairs().map_err(|e| JsError::new(&e.to_string()))?;
        let pairs: Vec<[f64; 2]> = truth.into_iter().zip(predicted).map(|(a, b)| [a, b]).collect();
        Ok(to_json(&pairs))
    }
}
