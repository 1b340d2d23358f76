//! The neural Tucker model (M1), four embedding baselines (M2-M5), the
//! naive Tucker contraction used to cross-check M1, and the shared trainer.
//!
//! M1 looks up one latent vector per mode, forms their four-way outer
//! product, and weights the flattened result with a vector that plays the
//! role of a flattened Tucker core:
//!
//! ```text
//! y = sigmoid(W . flatten(e_p o e_i o e_j o e_k) + b)
//! ```

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Array, AutodiffError, Tape, Var};
use crate::data::SparseTensor4;
use crate::preprocess::TargetTransform;
use crate::Index4;

/// Latent dimension used for every mode unless configured otherwise.
pub const DEFAULT_DIM: usize = 5;
/// Half-width of the uniform parameter initialization.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("index {index} out of range for mode {mode} of size {size}")]
    IndexOutOfRange { mode: usize, index: usize, size: usize },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("cannot train on an empty tensor")]
    EmptyTensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Neural Tucker factorization.
    M1,
    /// MLP over concatenated embeddings.
    M2,
    /// Linear map of concatenated embeddings.
    M3,
    /// Pairwise embedding interactions.
    M4,
    /// Pairwise and triple-wise interactions fused with MLP features.
    M5,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::M1, ModelKind::M2, ModelKind::M3, ModelKind::M4, ModelKind::M5];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::M1 => "m1",
            ModelKind::M2 => "m2",
            ModelKind::M3 => "m3",
            ModelKind::M4 => "m4",
            ModelKind::M5 => "m5",
        }
    }

    /// M1 and M5 squash their output into (0, 1); the rest are unbounded.
    pub fn has_sigmoid_head(self) -> bool {
        matches!(self, ModelKind::M1 | ModelKind::M5)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(ModelKind::M1),
            "m2" => Ok(ModelKind::M2),
            "m3" => Ok(ModelKind::M3),
            "m4" => Ok(ModelKind::M4),
            "m5" => Ok(ModelKind::M5),
            other => Err(format!("unknown model `{other}` (expected m1..m5)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Embedding-table rows per mode, i.e. the bin counts.
    pub mode_sizes: [usize; 4],
    /// Latent dimension per mode: the Tucker rank for M1, the embedding size
    /// for baselines (which need all four equal for M4/M5).
    pub dims: [usize; 4],
    /// Hidden layer widths for M2 and M5.
    pub hidden: Vec<usize>,
    /// Output width of each pairwise layer in M4.
    pub pair_width: usize,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, mode_sizes: [usize; 4]) -> Self {
        Self {
            kind,
            mode_sizes,
            dims: [DEFAULT_DIM; 4],
            hidden: vec![DEFAULT_DIM],
            pair_width: DEFAULT_DIM,
        }
    }

    pub fn with_dims(mut self, dims: [usize; 4]) -> Self {
        self.dims = dims;
        self
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.mode_sizes.contains(&0) {
            return bad("mode sizes must be positive");
        }
        if self.dims.contains(&0) {
            return bad("latent dimensions must be positive");
        }
        match self.kind {
            ModelKind::M4 | ModelKind::M5 if self.dims.iter().any(|&d| d != self.dims[0]) => {
                bad("elementwise interactions need equal embedding dims")
            }
            ModelKind::M2 | ModelKind::M5 if self.hidden.is_empty() || self.hidden.contains(&0) => {
                bad("hidden widths must be non-empty and positive")
            }
            ModelKind::M4 if self.pair_width == 0 => bad("pair width must be positive"),
            _ => Ok(()),
        }
    }

    /// Names and shapes of every parameter, in storage order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes: Vec<(String, Vec<usize>)> = (0..4)
            .map(|m| (format!("embedding.{m}"), vec![self.mode_sizes[m], self.dims[m]]))
            .collect();
        let d = self.dims[0];
        let concat: usize = self.dims.iter().sum();
        let dense = |name: &str, out: usize, inp: usize, shapes: &mut Vec<(String, Vec<usize>)>| {
            shapes.push((format!("{name}.weight"), vec![out, inp]));
            shapes.push((format!("{name}.bias"), vec![out]));
        };
        match self.kind {
            ModelKind::M1 => {
                shapes.push(("core".into(), vec![self.dims.iter().product()]));
                shapes.push(("bias".into(), vec![1]));
            }
            ModelKind::M3 => dense("output", 1, concat, &mut shapes),
            ModelKind::M2 | ModelKind::M5 => {
                let mut width = concat;
                for (l, &h) in self.hidden.iter().enumerate() {
                    dense(&format!("hidden.{l}"), h, width, &mut shapes);
                    width = h;
                }
                if self.kind == ModelKind::M5 {
                    width += (PAIRS.len() + TRIPLES.len()) * d;
                }
                dense("output", 1, width, &mut shapes);
            }
            ModelKind::M4 => {
                for (a, b) in PAIRS {
                    dense(&format!("pair.{a}{b}"), self.pair_width, d, &mut shapes);
                }
                dense("output", 1, PAIRS.len() * self.pair_width + concat, &mut shapes);
            }
        }
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
const TRIPLES: [(usize, usize, usize); 4] = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Array,
}

/// A trainable regressor over discrete index tuples.
///
/// `forward` receives the parameters already placed on the tape, in the
/// order of [`Regressor::params`].
pub trait Regressor {
    fn config(&self) -> &ModelConfig;
    fn params(&self) -> &[Param];
    fn params_mut(&mut self) -> &mut [Param];
    fn forward(&self, tape: &mut Tape, params: &[Var], idx: Index4) -> Result<Var, ModelError>;

    fn check_index(&self, idx: Index4) -> Result<(), ModelError> {
        let sizes = self.config().mode_sizes;
        for m in 0..4 {
            if idx[m] >= sizes[m] {
                return Err(ModelError::IndexOutOfRange {
                    mode: m,
                    index: idx[m],
                    size: sizes[m],
                });
            }
        }
        Ok(())
    }

    /// Places every parameter on `tape` as a leaf.
    fn load_params(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().iter().map(|p| tape.leaf(p.value.clone())).collect()
    }

    /// Mean squared error over `batch`, built on `tape`.
    fn batch_loss(
        &self,
        tape: &mut Tape,
        params: &[Var],
        batch: &[(Index4, f64)],
    ) -> Result<Var, ModelError> {
        let mut preds = Vec::with_capacity(batch.len());
        for (idx, _) in batch {
            preds.push(self.forward(tape, params, *idx)?);
        }
        let pred = tape.concat(&preds)?;
        let target = tape.leaf(Array::vector(batch.iter().map(|e| e.1).collect()));
        Ok(tape.mse_loss(pred, target)?)
    }

    fn predict(&self, idx: Index4) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let params = self.load_params(&mut tape);
        let out = self.forward(&mut tape, &params, idx)?;
        Ok(tape.value(out).item())
    }
}

fn init_params(config: &ModelConfig, seed: u64) -> Vec<Param> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    config
        .parameter_shapes()
        .into_iter()
        .map(|(name, shape)| {
            let n: usize = shape.iter().product();
            let data = if name.ends_with("bias") {
                vec![0.0; n]
            } else {
                (0..n).map(|_| rng.random_range(-INIT_SCALE..=INIT_SCALE)).collect()
            };
            Param {
                value: Array::new(shape, data).expect("shape product matches"),
                name,
            }
        })
        .collect()
}

fn embed(tape: &mut Tape, params: &[Var], idx: Index4) -> Result<[Var; 4], ModelError> {
    Ok([
        tape.row(params[0], idx[0])?,
        tape.row(params[1], idx[1])?,
        tape.row(params[2], idx[2])?,
        tape.row(params[3], idx[3])?,
    ])
}

fn affine(tape: &mut Tape, weight: Var, bias: Var, x: Var) -> Result<Var, ModelError> {
    let wx = tape.matvec(weight, x)?;
    Ok(tape.add(wx, bias)?)
}

/// M1: four embedding tables, a flattened core and a bias.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerModel {
    config: ModelConfig,
    params: Vec<Param>,
}

impl TuckerModel {
    pub fn new(mode_sizes: [usize; 4], ranks: [usize; 4], seed: u64) -> Result<Self, ModelError> {
        let config = ModelConfig::new(ModelKind::M1, mode_sizes).with_dims(ranks);
        config.validate()?;
        Ok(Self {
            params: init_params(&config, seed),
            config,
        })
    }

    /// Builds a model from explicit embedding tables (`rows x rank`, row-major),
    /// flattened core and bias.
    pub fn from_parts(
        tables: [Array; 4],
        core: Vec<f64>,
        bias: f64,
    ) -> Result<Self, ModelError> {
        let mut mode_sizes = [0; 4];
        let mut dims = [0; 4];
        for m in 0..4 {
            match tables[m].shape() {
                [r, c] => {
                    mode_sizes[m] = *r;
                    dims[m] = *c;
                }
                s => return Err(ModelError::Config(format!("table {m} has shape {s:?}"))),
            }
        }
        let config = ModelConfig::new(ModelKind::M1, mode_sizes).with_dims(dims);
        config.validate()?;
        if core.len() != dims.iter().product::<usize>() {
            return Err(ModelError::Config(format!(
                "core length {} does not match ranks {dims:?}",
                core.len()
            )));
        }
        let [t0, t1, t2, t3] = tables;
        let values = [t0, t1, t2, t3, Array::vector(core), Array::scalar(bias)];
        let params = config
            .parameter_shapes()
            .into_iter()
            .zip(values)
            .map(|((name, _), value)| Param { name, value })
            .collect();
        Ok(Self { config, params })
    }

    pub fn ranks(&self) -> [usize; 4] {
        self.config.dims
    }

    /// The core weights reshaped to `(Q1, Q2, Q3, Q4)`.
    pub fn core_tensor(&self) -> Array {
        Array::new(self.config.dims.to_vec(), self.params[4].value.data().to_vec())
            .expect("core length is the rank product")
    }

    pub fn bias(&self) -> f64 {
        self.params[5].value.item()
    }

    /// Latent vectors of the four modes at `idx`.
    pub fn embeddings(&self, idx: Index4) -> Result<[Vec<f64>; 4], ModelError> {
        self.check_index(idx)?;
        Ok([0, 1, 2, 3].map(|m| {
            let d = self.config.dims[m];
            self.params[m].value.data()[idx[m] * d..(idx[m] + 1) * d].to_vec()
        }))
    }

    /// `W . flatten(outer) + b`, before the sigmoid.
    pub fn pre_activation(&self, tape: &mut Tape, params: &[Var], idx: Index4) -> Result<Var, ModelError> {
        self.check_index(idx)?;
        let e = embed(tape, params, idx)?;
        let interaction = tape.outer(&e)?;
        let flat = tape.flatten(interaction)?;
        let weighted = tape.dot(flat, params[4])?;
        Ok(tape.add(weighted, params[5])?)
    }

    pub fn pre_activation_value(&self, idx: Index4) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let params = self.load_params(&mut tape);
        let out = self.pre_activation(&mut tape, &params, idx)?;
        Ok(tape.value(out).item())
    }
}

impl Regressor for TuckerModel {
    fn config(&self) -> &ModelConfig {
        &self.config
    }
    fn params(&self) -> &[Param] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }
    fn forward(&self, tape: &mut Tape, params: &[Var], idx: Index4) -> Result<Var, ModelError> {
        let pre = self.pre_activation(tape, params, idx)?;
        Ok(tape.sigmoid(pre)?)
    }
}

/// Naive quadruple sum `sum g[a,b,c,d] * e0[a] * e1[b] * e2[c] * e3[d]`.
pub fn tucker_reference(core: &Array, embeddings: [&[f64]; 4]) -> Result<f64, ModelError> {
    let dims = [0, 1, 2, 3].map(|m| embeddings[m].len());
    if core.shape() != dims {
        return Err(ModelError::Autodiff(AutodiffError::Shape {
            op: "tucker_reference",
            left: core.shape().to_vec(),
            right: dims.to_vec(),
        }));
    }
    let g = core.data();
    let [a, b, c, d] = embeddings;
    let mut total = 0.0;
    for p in 0..dims[0] {
        for q in 0..dims[1] {
            for r in 0..dims[2] {
                for s in 0..dims[3] {
                    let flat = ((p * dims[1] + q) * dims[2] + r) * dims[3] + s;
                    total += g[flat] * a[p] * b[q] * c[r] * d[s];
                }
            }
        }
    }
    Ok(total)
}

/// M2-M5.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    config: ModelConfig,
    params: Vec<Param>,
}

impl BaselineModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        if config.kind == ModelKind::M1 {
            return Err(ModelError::Config("M1 is not a baseline".into()));
        }
        config.validate()?;
        Ok(Self {
            params: init_params(&config, seed),
            config,
        })
    }

    fn mlp(&self, tape: &mut Tape, params: &[Var], input: Var) -> Result<Var, ModelError> {
        let mut x = input;
        for l in 0..self.config.hidden.len() {
            let h = affine(tape, params[4 + 2 * l], params[5 + 2 * l], x)?;
            x = tape.relu(h)?;
        }
        Ok(x)
    }
}

impl Regressor for BaselineModel {
    fn config(&self) -> &ModelConfig {
        &self.config
    }
    fn params(&self) -> &[Param] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], idx: Index4) -> Result<Var, ModelError> {
        self.check_index(idx)?;
        let e = embed(tape, params, idx)?;
        let n = params.len();
        let (out_w, out_b) = (params[n - 2], params[n - 1]);
        match self.config.kind {
            ModelKind::M3 => {
                let x = tape.concat(&e)?;
                affine(tape, out_w, out_b, x)
            }
            ModelKind::M2 => {
                let x = tape.concat(&e)?;
                let h = self.mlp(tape, params, x)?;
                affine(tape, out_w, out_b, h)
            }
            ModelKind::M4 => {
                let mut features = Vec::with_capacity(PAIRS.len() + 4);
                for (k, (a, b)) in PAIRS.iter().enumerate() {
                    let prod = tape.mul(e[*a], e[*b])?;
                    features.push(affine(tape, params[4 + 2 * k], params[5 + 2 * k], prod)?);
                }
                features.extend_from_slice(&e);
                let x = tape.concat(&features)?;
                affine(tape, out_w, out_b, x)
            }
            ModelKind::M5 => {
                let mut features = Vec::with_capacity(PAIRS.len() + TRIPLES.len() + 1);
                for (a, b) in PAIRS {
                    features.push(tape.mul(e[a], e[b])?);
                }
                for (a, b, c) in TRIPLES {
                    let ab = tape.mul(e[a], e[b])?;
                    features.push(tape.mul(ab, e[c])?);
                }
                let x = tape.concat(&e)?;
                features.push(self.mlp(tape, params, x)?);
                let all = tape.concat(&features)?;
                let out = affine(tape, out_w, out_b, all)?;
                Ok(tape.sigmoid(out)?)
            }
            ModelKind::M1 => unreachable!("rejected at construction"),
        }
    }
}

/// Any of M1-M5.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Tucker(TuckerModel),
    Baseline(BaselineModel),
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        match config.kind {
            ModelKind::M1 => Ok(Model::Tucker(TuckerModel::new(config.mode_sizes, config.dims, seed)?)),
            _ => Ok(Model::Baseline(BaselineModel::new(config, seed)?)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.config().kind
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config().clone(),
            params: self.params().to_vec(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self, ModelError> {
        ck.config.validate()?;
        let expected = ck.config.parameter_shapes();
        if expected.len() != ck.params.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} parameters, found {}",
                expected.len(),
                ck.params.len()
            )));
        }
        for ((name, shape), p) in expected.iter().zip(&ck.params) {
            if *name != p.name || shape.as_slice() != p.value.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "parameter {} {:?} does not match expected {name} {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
            if p.value.len() != shape.iter().product::<usize>() {
                return Err(ModelError::Checkpoint(format!("parameter {name} has wrong length")));
            }
        }
        let Checkpoint { config, params } = ck;
        Ok(match config.kind {
            ModelKind::M1 => Model::Tucker(TuckerModel { config, params }),
            _ => Model::Baseline(BaselineModel { config, params }),
        })
    }
}

impl Regressor for Model {
    fn config(&self) -> &ModelConfig {
        match self {
            Model::Tucker(m) => m.config(),
            Model::Baseline(m) => m.config(),
        }
    }
    fn params(&self) -> &[Param] {
        match self {
            Model::Tucker(m) => m.params(),
            Model::Baseline(m) => m.params(),
        }
    }
    fn params_mut(&mut self) -> &mut [Param] {
        match self {
            Model::Tucker(m) => m.params_mut(),
            Model::Baseline(m) => m.params_mut(),
        }
    }
    fn forward(&self, tape: &mut Tape, params: &[Var], idx: Index4) -> Result<Var, ModelError> {
        match self {
            Model::Tucker(m) => m.forward(tape, params, idx),
            Model::Baseline(m) => m.forward(tape, params, idx),
        }
    }
}

/// Serialized model: config plus every parameter as shape and flat data.
/// Floats are written in shortest round-trip decimal form, so loading
/// reproduces predictions bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Vec<Param>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 200,
            batch_size: 32,
            seed: 42,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter tensor.
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

struct Adam {
    cfg: TrainConfig,
    step: i32,
    moments: Vec<Moments>,
}

impl Adam {
    fn new(cfg: TrainConfig, params: &[Param]) -> Self {
        Self {
            cfg,
            step: 0,
            moments: params
                .iter()
                .map(|p| Moments {
                    m: vec![0.0; p.value.len()],
                    v: vec![0.0; p.value.len()],
                })
                .collect(),
        }
    }

    fn update(&mut self, params: &mut [Param], grads: &[&[f64]]) {
        self.step += 1;
        let TrainConfig { lr, beta1, beta2, eps, .. } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for ((p, g), mom) in params.iter_mut().zip(grads).zip(&mut self.moments) {
            for (k, w) in p.value.data_mut().iter_mut().enumerate() {
                let gk = g[k];
                mom.m[k] = beta1 * mom.m[k] + (1.0 - beta1) * gk;
                mom.v[k] = beta2 * mom.v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = mom.m[k] / c1;
                let v_hat = mom.v[k] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training MSE seen during each epoch.
    pub loss_trace: Vec<f64>,
}

/// Mini-batch MSE training with Adam. Batches come from a shuffle seeded by
/// `cfg.seed`, so identical inputs give bitwise-identical parameters.
pub fn train<M: Regressor>(
    model: &mut M,
    data: &SparseTensor4,
    cfg: &TrainConfig,
) -> Result<TrainReport, ModelError> {
    let mut trainer = Trainer::new(model, data.clone(), *cfg)?;
    for _ in 0..cfg.epochs {
        trainer.epoch(model)?;
    }
    Ok(TrainReport {
        loss_trace: trainer.loss_trace,
    })
}

/// Epoch-at-a-time training state, for callers that want to observe progress.
pub struct Trainer {
    data: SparseTensor4,
    cfg: TrainConfig,
    order: Vec<usize>,
    rng: ChaCha8Rng,
    adam: Adam,
    loss_trace: Vec<f64>,
}

impl Trainer {
    pub fn new<M: Regressor>(model: &M, data: SparseTensor4, cfg: TrainConfig) -> Result<Self, ModelError> {
        if data.is_empty() {
            return Err(ModelError::EmptyTensor);
        }
        if cfg.batch_size == 0 {
            return Err(ModelError::Config("batch size must be positive".into()));
        }
        for (idx, _) in &data.entries {
            model.check_index(*idx)?;
        }
        let n = data.len();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Self {
            data,
            cfg,
            order: (0..n).collect(),
            rng,
            adam: Adam::new(cfg, model.params()),
            loss_trace: Vec::new(),
        })
    }

    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    /// Runs one pass over the data and returns its mean training loss.
    pub fn epoch<M: Regressor>(&mut self, model: &mut M) -> Result<f64, ModelError> {
        let epoch = self.loss_trace.len();
        self.order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut batch = Vec::with_capacity(self.cfg.batch_size);
        for (b, chunk) in self.order.chunks(self.cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| self.data.entries[i]));
            let mut tape = Tape::new();
            let vars = model.load_params(&mut tape);
            let loss = model.batch_loss(&mut tape, &vars, &batch)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b });
            }
            total += value * chunk.len() as f64;
            let grads = tape.backward(loss)?;
            let grad_slices: Vec<&[f64]> = vars.iter().map(|v| grads.wrt_slice(*v)).collect();
            self.adam.update(model.params_mut(), &grad_slices);
        }
        let mean = total / self.data.len() as f64;
        self.loss_trace.push(mean);
        Ok(mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    /// Model output on the training scale.
    pub raw: Vec<f64>,
    /// `raw` mapped back through the target transform, when one is given.
    pub original: Option<Vec<f64>>,
}

pub fn predict<M: Regressor>(
    model: &M,
    tensor: &SparseTensor4,
    transform: Option<&TargetTransform>,
) -> Result<Predictions, ModelError> {
    let mut tape = Tape::new();
    let params = model.load_params(&mut tape);
    let mut raw = Vec::with_capacity(tensor.len());
    for (idx, _) in &tensor.entries {
        let out = model.forward(&mut tape, &params, *idx)?;
        raw.push(tape.value(out).item());
    }
    let original = transform.map(|t| raw.iter().map(|&x| t.inverse(x)).collect());
    Ok(Predictions { raw, original })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use approx::assert_relative_eq;

    fn table(rows: usize, values: &[f64]) -> Array {
        Array::matrix(rows, values.len() / rows, values.to_vec()).unwrap()
    }

    #[test]
    fn closed_form_scalar_tucker() {
        let m = TuckerModel::from_parts(
            [table(1, &[2.0]), table(1, &[3.0]), table(1, &[0.5]), table(1, &[1.0])],
            vec![1.0],
            0.0,
        )
        .unwrap();
        let y = m.predict([0, 0, 0, 0]).unwrap();
        assert_relative_eq!(y, 1.0 / (1.0 + (-3.0f64).exp()), epsilon = 1e-15);
        assert_relative_eq!(y, 0.952574, epsilon = 1e-6);
    }

    #[test]
    fn zero_core_predicts_half() {
        let mut m = TuckerModel::new([3, 4, 2, 5], [2, 2, 2, 2], 1).unwrap();
        m.params_mut()[4].value.data_mut().fill(0.0);
        for idx in [[0, 0, 0, 0], [2, 3, 1, 4], [1, 2, 0, 3]] {
            assert_eq!(m.predict(idx).unwrap(), 0.5);
        }
    }

    #[test]
    fn reference_counts_terms_and_annihilates() {
        let core = Array::new(vec![2, 2, 2, 2], vec![1.0; 16]).unwrap();
        let ones = [1.0, 1.0];
        assert_eq!(tucker_reference(&core, [&ones, &ones, &ones, &ones]).unwrap(), 16.0);
        let zero = [0.0, 0.0];
        assert_eq!(tucker_reference(&core, [&ones, &zero, &ones, &ones]).unwrap(), 0.0);
        assert!(tucker_reference(&core, [&ones, &ones, &ones, &[1.0]]).is_err());
    }

    #[test]
    fn pre_activation_matches_reference() {
        let m = TuckerModel::new([4, 3, 5, 2], [3, 2, 2, 3], 9).unwrap();
        let mut m = m;
        m.params_mut()[5].value.data_mut()[0] = 0.37;
        let idx = [3, 1, 4, 0];
        let e = m.embeddings(idx).unwrap();
        let reference =
            tucker_reference(&m.core_tensor(), [&e[0], &e[1], &e[2], &e[3]]).unwrap() + m.bias();
        assert!((m.pre_activation_value(idx).unwrap() - reference).abs() <= 1e-12);
    }

    #[test]
    fn out_of_range_index() {
        let m = TuckerModel::new([2; 4], [2; 4], 0).unwrap();
        assert!(matches!(
            m.predict([0, 2, 0, 0]),
            Err(ModelError::IndexOutOfRange { mode: 1, index: 2, size: 2 })
        ));
        let b = BaselineModel::new(ModelConfig::new(ModelKind::M3, [2; 4]), 0).unwrap();
        assert!(b.predict([0, 0, 0, 5]).is_err());
    }

    #[test]
    fn zero_linear_model_outputs_zero() {
        let mut m = BaselineModel::new(ModelConfig::new(ModelKind::M3, [3; 4]), 4).unwrap();
        for p in m.params_mut() {
            p.value.data_mut().fill(0.0);
        }
        assert_eq!(m.predict([1, 2, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn m5_zero_head_outputs_half() {
        let mut m = BaselineModel::new(ModelConfig::new(ModelKind::M5, [3; 4]), 4).unwrap();
        let n = m.params().len();
        m.params_mut()[n - 2].value.data_mut().fill(0.0);
        m.params_mut()[n - 1].value.data_mut().fill(0.0);
        assert_eq!(m.predict([1, 2, 0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn m4_parameter_count_by_formula() {
        let sizes = [7, 6, 5, 4];
        let (d, pw) = (5, 5);
        let tables: usize = sizes.iter().map(|r| r * d).sum();
        let pair_layers = 6 * (pw * d + pw);
        let head = (6 * pw + 4 * d) + 1;
        let cfg = ModelConfig::new(ModelKind::M4, sizes);
        assert_eq!(cfg.parameter_count(), tables + pair_layers + head);
        let m = BaselineModel::new(cfg, 0).unwrap();
        let counted: usize = m.params().iter().map(|p| p.value.len()).sum();
        assert_eq!(counted, tables + pair_layers + head);
    }

    #[test]
    fn default_dims_are_five() {
        let cfg = ModelConfig::new(ModelKind::M1, [10; 4]);
        assert_eq!(cfg.dims, [5; 4]);
        assert_eq!(ModelConfig::new(ModelKind::M2, [10; 4]).dims, [5; 4]);
    }

    #[test]
    fn unequal_dims_rejected_for_interaction_models() {
        let cfg = ModelConfig::new(ModelKind::M4, [3; 4]).with_dims([5, 5, 4, 5]);
        assert!(matches!(BaselineModel::new(cfg, 0), Err(ModelError::Config(_))));
    }

    fn tiny_tensor() -> SparseTensor4 {
        SparseTensor4::new(
            vec![([0, 1, 2, 0], 0.8), ([1, 0, 1, 1], 0.2), ([2, 2, 0, 1], 0.55)],
            [3, 3, 3, 2],
        )
        .unwrap()
    }

    #[test]
    fn every_model_gradient_checks() {
        let data = tiny_tensor();
        for kind in ModelKind::ALL {
            let cfg = ModelConfig::new(kind, data.mode_sizes).with_dims([3; 4]).with_hidden(vec![4]);
            let mut model = Model::new(cfg, 17).unwrap();
            // Move parameters away from the small init so every path carries signal.
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for p in model.params_mut() {
                for w in p.value.data_mut() {
                    *w = rng.random_range(-1.0..1.0);
                }
            }
            let leaves: Vec<Array> = model.params().iter().map(|p| p.value.clone()).collect();
            let report = grad_check(
                |t, v| model.batch_loss(t, v, &data.entries).map_err(|e| match e {
                    ModelError::Autodiff(a) => a,
                    other => panic!("{other}"),
                }),
                &leaves,
                1e-5,
            )
            .unwrap();
            assert!(report.passes(1e-5), "{kind}: {report:?}");
        }
    }

    #[test]
    fn memorizes_single_observation() {
        let data = SparseTensor4::new(vec![([1, 0, 2, 1], 0.73)], [3, 3, 3, 2]).unwrap();
        let mut m = TuckerModel::new(data.mode_sizes, [5; 4], 42).unwrap();
        let cfg = TrainConfig { epochs: 200, ..TrainConfig::default() };
        let report = train(&mut m, &data, &cfg).unwrap();
        assert_eq!(report.loss_trace.len(), 200);
        assert!(*report.loss_trace.last().unwrap() < 1e-4, "{:?}", report.loss_trace.last());
        let p = predict(&m, &data, None).unwrap();
        assert!((p.raw[0] - 0.73).abs() < 1e-2);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bitwise() {
        let data = tiny_tensor();
        for kind in ModelKind::ALL {
            let mut m = Model::new(ModelConfig::new(kind, data.mode_sizes), 3).unwrap();
            let before = m.clone();
            let cfg = TrainConfig { lr: 0.0, epochs: 3, batch_size: 2, ..TrainConfig::default() };
            train(&mut m, &data, &cfg).unwrap();
            assert_eq!(m, before, "{kind}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny_tensor();
        let run = || {
            let mut m = Model::new(ModelConfig::new(ModelKind::M5, data.mode_sizes), 11).unwrap();
            let cfg = TrainConfig { epochs: 5, batch_size: 2, seed: 11, ..TrainConfig::default() };
            let r = train(&mut m, &data, &cfg).unwrap();
            (m.to_checkpoint().to_json(), r.loss_trace)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn nan_target_aborts() {
        let data = SparseTensor4::new(vec![([0, 0, 0, 0], f64::NAN)], [1; 4]).unwrap();
        let mut m = TuckerModel::new([1; 4], [2; 4], 0).unwrap();
        let err = train(&mut m, &data, &TrainConfig { epochs: 1, ..TrainConfig::default() }).unwrap_err();
        assert!(matches!(err, ModelError::NonFiniteLoss { epoch: 0, batch: 0 }));
    }

    #[test]
    fn checkpoint_reproduces_predictions_bitwise() {
        let data = tiny_tensor();
        for kind in ModelKind::ALL {
            let mut m = Model::new(ModelConfig::new(kind, data.mode_sizes), 8).unwrap();
            train(&mut m, &data, &TrainConfig { epochs: 2, batch_size: 2, ..TrainConfig::default() }).unwrap();
            let json = m.to_checkpoint().to_json();
            let back = Model::from_checkpoint(Checkpoint::from_json(&json).unwrap()).unwrap();
            let a = predict(&m, &data, None).unwrap().raw;
            let b = predict(&back, &data, None).unwrap().raw;
            assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                       b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn checkpoint_shape_mismatch_rejected() {
        let m = Model::new(ModelConfig::new(ModelKind::M3, [2; 4]), 0).unwrap();
        let mut ck = m.to_checkpoint();
        ck.params[4].value = Array::matrix(1, 3, vec![0.0; 3]).unwrap();
        assert!(matches!(Model::from_checkpoint(ck), Err(ModelError::Checkpoint(_))));
    }

    #[test]
    fn predictions_invert_through_transform() {
        let data = tiny_tensor();
        let m = Model::new(ModelConfig::new(ModelKind::M1, data.mode_sizes), 2).unwrap();
        let t = TargetTransform::fit(&[-3.0, 0.2, 4.0, 11.0]).unwrap();
        let p = predict(&m, &data, Some(&t)).unwrap();
        for (raw, orig) in p.raw.iter().zip(p.original.unwrap()) {
            assert!((orig - t.inverse(*raw)).abs() <= 1e-6);
            assert!(*raw > 0.0 && *raw < 1.0);
        }
    }
}
