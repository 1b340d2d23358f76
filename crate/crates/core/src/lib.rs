//! Discretized neural Tucker factorization for predicting the Richardson
//! number from sparse wind-field observations.
//!
//! The pipeline: load observations ([`data`]), standardize and bin the
//! `(h, u, v, w)` features into integer labels ([`preprocess`]), fit a
//! neural Tucker model or one of four baselines ([`models`], built on the
//! [`autodiff`] tape), and score it with k-fold cross-validation over
//! several seeds ([`eval`]). [`richardson`] computes Ri from vertical
//! profiles and [`synth`] generates low-rank tensors with known truth.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod eval;
pub mod models;
pub mod preprocess;
pub mod richardson;
pub mod synth;

/// Bin labels `(p, i, j, k)` for the `(h, u, v, w)` modes.
pub type Index4 = [usize; 4];
