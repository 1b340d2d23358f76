//! K-fold cross-validation, regression metrics, the multi-seed experiment
//! runner and grid search.

use itertools::iproduct;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{build_sparse_tensor, DataError, Dataset, SparseTensor4};
use crate::models::{predict, train, Model, ModelConfig, ModelError, TrainConfig};
use crate::preprocess::{Discretizer, PreprocessError, Preprocessing, TargetTransform};

/// Seeds of the reference protocol.
pub const DEFAULT_SEEDS: [u64; 5] = [38, 40, 42, 44, 46];
pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot split {n} entries into {k} folds")]
    Folds { n: usize, k: usize },
    #[error("metric inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("metrics need at least one value")]
    EmptyMetrics,
    #[error("at least one seed is required")]
    NoSeeds,
    #[error("grid axis `{0}` is empty")]
    EmptyAxis(&'static str),
    #[error("bad grid spec: {0}")]
    GridSyntax(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

/// Fold id per entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Seeded shuffle, then round-robin fold assignment.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 || n < k {
        return Err(EvalError::Folds { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignments = vec![0; n];
    for (pos, &entry) in order.iter().enumerate() {
        assignments[entry] = pos % k;
    }
    Ok(FoldPlan { k, seed, assignments })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when the targets have zero variance.
    pub r2: Option<f64>,
}

pub fn metrics(y: &[f64], yhat: &[f64]) -> Result<Metrics, EvalError> {
    if y.len() != yhat.len() {
        return Err(EvalError::LengthMismatch(y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(EvalError::EmptyMetrics);
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let (mut abs, mut ss_res, mut ss_tot) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(yhat) {
        abs += (a - b).abs();
        ss_res += (a - b) * (a - b);
        ss_tot += (a - mean) * (a - mean);
    }
    Ok(Metrics {
        mae: abs / n,
        rmse: (ss_res / n).sqrt(),
        // Decided on exact equality: rounding in the mean can leave a tiny
        // nonzero ss_tot for a constant target.
        r2: y.iter().any(|v| *v != y[0]).then(|| 1.0 - ss_res / ss_tot),
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn mean_std_opt(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let defined: Vec<f64> = values.flatten().collect();
    if defined.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&defined);
        (Some(m), Some(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// The [0, 1] training scale.
    Transformed,
    /// Richardson-number units.
    Original,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub mae: f64,
    pub rmse: f64,
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mae: f64,
    pub rmse: f64,
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub per_fold: Vec<FoldMetrics>,
    /// Mean over folds.
    pub mean: Summary,
    /// Population std over folds.
    pub fold_std: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mae_mean: f64,
    pub mae_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub r2_mean: Option<f64>,
    pub r2_std: Option<f64>,
}

/// Per-fold metrics for every seed, with mean and population std across
/// seeds of each seed's fold mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub scale: Scale,
    pub per_seed: Vec<SeedReport>,
    pub aggregate: Aggregate,
}

impl EvalReport {
    pub fn from_folds(model: &str, scale: Scale, per_seed: Vec<(u64, Vec<FoldMetrics>)>) -> Self {
        let per_seed: Vec<SeedReport> = per_seed
            .into_iter()
            .map(|(seed, per_fold)| {
                let (mae, mae_sd) = mean_std(&per_fold.iter().map(|f| f.mae).collect::<Vec<_>>());
                let (rmse, rmse_sd) = mean_std(&per_fold.iter().map(|f| f.rmse).collect::<Vec<_>>());
                let (r2, r2_sd) = mean_std_opt(per_fold.iter().map(|f| f.r2));
                SeedReport {
                    seed,
                    per_fold,
                    mean: Summary { mae, rmse, r2 },
                    fold_std: Summary {
                        mae: mae_sd,
                        rmse: rmse_sd,
                        r2: r2_sd,
                    },
                }
            })
            .collect();
        let (mae_mean, mae_std) = mean_std(&per_seed.iter().map(|s| s.mean.mae).collect::<Vec<_>>());
        let (rmse_mean, rmse_std) =
            mean_std(&per_seed.iter().map(|s| s.mean.rmse).collect::<Vec<_>>());
        let (r2_mean, r2_std) = mean_std_opt(per_seed.iter().map(|s| s.mean.r2));
        Self {
            model: model.to_string(),
            scale,
            per_seed,
            aggregate: Aggregate {
                mae_mean,
                mae_std,
                rmse_mean,
                rmse_std,
                r2_mean,
                r2_std,
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub transformed: EvalReport,
    /// Absent when the data carried no target transform.
    pub original: Option<EvalReport>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// How continuous features become labels inside each fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binning {
    /// Equal-frequency bins fitted on the training folds.
    Quantile([usize; 4]),
    /// Features are already labels below these sizes.
    Identity([usize; 4]),
}

impl Binning {
    pub fn mode_sizes(self) -> [usize; 4] {
        match self {
            Binning::Quantile(s) | Binning::Identity(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum CvData<'a> {
    /// Raw observations; discretizer and target transform are fitted per fold.
    Observations { dataset: &'a Dataset, binning: Binning },
    /// An already-discretized tensor used as is.
    Tensor(&'a SparseTensor4),
}

impl CvData<'_> {
    fn len(&self) -> usize {
        match self {
            CvData::Observations { dataset, .. } => dataset.len(),
            CvData::Tensor(t) => t.len(),
        }
    }

    fn mode_sizes(&self) -> [usize; 4] {
        match self {
            CvData::Observations { binning, .. } => binning.mode_sizes(),
            CvData::Tensor(t) => t.mode_sizes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// `mode_sizes` is replaced by the data's sizes.
    pub model: ModelConfig,
    /// `seed` is replaced by each experiment seed.
    pub train: TrainConfig,
    pub folds: usize,
}

/// Discretizer and target transform fitted on the training rows only.
pub fn fit_fold_preprocessing(
    dataset: &Dataset,
    train_rows: &[usize],
    binning: Binning,
) -> Result<Preprocessing, EvalError> {
    let train = dataset.subset(train_rows);
    let discretizer = match binning {
        Binning::Quantile(bins) => Discretizer::fit(&train.features(), bins)?,
        Binning::Identity(sizes) => Discretizer::identity(sizes),
    };
    let target = TargetTransform::fit(&train.targets()?)?;
    Ok(Preprocessing {
        discretizer,
        target: Some(target),
    })
}

struct FoldOutcome {
    transformed: FoldMetrics,
    original: Option<FoldMetrics>,
}

fn fold_metrics(fold: usize, m: Metrics) -> FoldMetrics {
    FoldMetrics {
        fold,
        mae: m.mae,
        rmse: m.rmse,
        r2: m.r2,
    }
}

fn run_fold(
    data: CvData<'_>,
    spec: &ExperimentSpec,
    plan: &FoldPlan,
    fold: usize,
) -> Result<FoldOutcome, EvalError> {
    let train_rows = plan.train_indices(fold);
    let test_rows = plan.test_indices(fold);
    let mut config = spec.model.clone();
    config.mode_sizes = data.mode_sizes();
    let hp = TrainConfig {
        seed: plan.seed,
        ..spec.train
    };

    let (train_t, test_t, transform, test_original) = match data {
        CvData::Tensor(t) => (t.subset(&train_rows), t.subset(&test_rows), None, None),
        CvData::Observations { dataset, binning } => {
            let prep = fit_fold_preprocessing(dataset, &train_rows, binning)?;
            let target = prep.target.expect("fold preprocessing fits a target transform");
            let train_ds = dataset.subset(&train_rows);
            let test_ds = dataset.subset(&test_rows);
            let train_t = build_sparse_tensor(&train_ds, &prep.discretizer, &target)?.tensor;
            let test_t = build_sparse_tensor(&test_ds, &prep.discretizer, &target)?.tensor;
            (train_t, test_t, Some(target), Some(test_ds.targets()?))
        }
    };

    let mut model = Model::new(config, plan.seed)?;
    train(&mut model, &train_t, &hp)?;
    let preds = predict(&model, &test_t, transform.as_ref())?;
    let transformed = fold_metrics(fold, metrics(&test_t.values(), &preds.raw)?);
    let original = match (test_original, preds.original) {
        (Some(y), Some(yhat)) => Some(fold_metrics(fold, metrics(&y, &yhat)?)),
        _ => None,
    };
    Ok(FoldOutcome {
        transformed,
        original,
    })
}

/// For every seed: split into `spec.folds` folds, train on k-1 and score the
/// held-out fold. Folds and seeds run in parallel; results are ordered by
/// (seed, fold), so the report does not depend on scheduling.
pub fn run_experiment(
    data: CvData<'_>,
    spec: &ExperimentSpec,
    seeds: &[u64],
) -> Result<ExperimentReport, EvalError> {
    if seeds.is_empty() {
        return Err(EvalError::NoSeeds);
    }
    let plans: Vec<FoldPlan> = seeds
        .iter()
        .map(|&s| kfold_split(data.len(), spec.folds, s))
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> = iproduct!(0..plans.len(), 0..spec.folds).collect();
    let outcomes: Vec<FoldOutcome> = jobs
        .par_iter()
        .map(|&(s, f)| run_fold(data, spec, &plans[s], f))
        .collect::<Result<_, _>>()?;

    let mut transformed = Vec::new();
    let mut original = Vec::new();
    for (plan, chunk) in plans.iter().zip(outcomes.chunks(spec.folds)) {
        transformed.push((plan.seed, chunk.iter().map(|o| o.transformed.clone()).collect()));
        let orig: Option<Vec<FoldMetrics>> = chunk.iter().map(|o| o.original.clone()).collect();
        if let Some(o) = orig {
            original.push((plan.seed, o));
        }
    }
    let name = spec.model.kind.as_str();
    Ok(ExperimentReport {
        transformed: EvalReport::from_folds(name, Scale::Transformed, transformed),
        original: (!original.is_empty()).then(|| EvalReport::from_folds(name, Scale::Original, original)),
    })
}

/// Axes of a hyperparameter grid. Every axis must hold at least one value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lr: Vec<f64>,
    pub epochs: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub dim: Vec<usize>,
    pub hidden: Vec<usize>,
}

impl Grid {
    /// Singleton grid holding the values of `spec`.
    pub fn from_spec(spec: &ExperimentSpec) -> Self {
        Self {
            lr: vec![spec.train.lr],
            epochs: vec![spec.train.epochs],
            batch_size: vec![spec.train.batch_size],
            dim: vec![spec.model.dims[0]],
            hidden: vec![spec.model.hidden.first().copied().unwrap_or(spec.model.dims[0])],
        }
    }

    /// Overrides axes from `name=v1,v2;name=v3` text; unnamed axes keep their values.
    pub fn parse_overrides(mut self, text: &str) -> Result<Self, EvalError> {
        for clause in text.split(';').map(str::trim).filter(|c| !c.is_empty()) {
            let (name, values) = clause
                .split_once('=')
                .ok_or_else(|| EvalError::GridSyntax(format!("`{clause}` lacks `=`")))?;
            let items: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
            let bad = |v: &str| EvalError::GridSyntax(format!("bad value `{v}` for `{name}`"));
            let ints = || {
                items
                    .iter()
                    .map(|v| v.parse::<usize>().map_err(|_| bad(v)))
                    .collect::<Result<Vec<_>, _>>()
            };
            match name.trim() {
                "lr" => {
                    self.lr = items
                        .iter()
                        .map(|v| v.parse::<f64>().map_err(|_| bad(v)))
                        .collect::<Result<_, _>>()?
                }
                "epochs" => self.epochs = ints()?,
                "batch" | "batch_size" => self.batch_size = ints()?,
                "dim" | "rank" => self.dim = ints()?,
                "hidden" => self.hidden = ints()?,
                other => return Err(EvalError::GridSyntax(format!("unknown axis `{other}`"))),
            }
        }
        Ok(self)
    }

    fn validate(&self) -> Result<(), EvalError> {
        let axes = [
            ("lr", self.lr.len()),
            ("epochs", self.epochs.len()),
            ("batch_size", self.batch_size.len()),
            ("dim", self.dim.len()),
            ("hidden", self.hidden.len()),
        ];
        match axes.iter().find(|(_, n)| *n == 0) {
            Some((name, _)) => Err(EvalError::EmptyAxis(name)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dim: usize,
    pub hidden: usize,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub mae_mean: f64,
    pub r2_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub model: String,
    pub rows: Vec<GridRow>,
    /// Row with the lowest mean held-out RMSE (transformed scale); first wins ties.
    pub best: usize,
}

impl GridReport {
    pub fn best_row(&self) -> &GridRow {
        &self.rows[self.best]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Exhaustive search over the Cartesian product of `grid`, each point
/// scored by [`run_experiment`].
pub fn grid_search(
    data: CvData<'_>,
    base: &ExperimentSpec,
    grid: &Grid,
    seeds: &[u64],
) -> Result<GridReport, EvalError> {
    grid.validate()?;
    let mut rows = Vec::new();
    for (&lr, &epochs, &batch_size, &dim, &hidden) in iproduct!(
        &grid.lr,
        &grid.epochs,
        &grid.batch_size,
        &grid.dim,
        &grid.hidden
    ) {
        let mut spec = base.clone();
        spec.train.lr = lr;
        spec.train.epochs = epochs;
        spec.train.batch_size = batch_size;
        spec.model.dims = [dim; 4];
        spec.model.hidden = vec![hidden; base.model.hidden.len().max(1)];
        spec.model.pair_width = dim;
        let report = run_experiment(data, &spec, seeds)?;
        let agg = &report.transformed.aggregate;
        rows.push(GridRow {
            lr,
            epochs,
            batch_size,
            dim,
            hidden,
            rmse_mean: agg.rmse_mean,
            rmse_std: agg.rmse_std,
            mae_mean: agg.mae_mean,
            r2_mean: agg.r2_mean,
        });
    }
    let best = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.rmse_mean.total_cmp(&b.1.rmse_mean))
        .map(|(i, _)| i)
        .expect("validated grid is non-empty");
    Ok(GridReport {
        model: base.model.kind.as_str().to_string(),
        rows,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::WindObservation;
    use crate::models::ModelKind;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn even_and_uneven_fold_sizes() {
        assert_eq!(kfold_split(10, 5, 1).unwrap().sizes(), vec![2; 5]);
        assert_eq!(kfold_split(373, 5, 38).unwrap().sizes(), vec![75, 75, 75, 74, 74]);
        assert!(matches!(kfold_split(3, 5, 0), Err(EvalError::Folds { n: 3, k: 5 })));
        assert!(kfold_split(3, 1, 0).is_err());
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        assert_eq!(kfold_split(50, 5, 9).unwrap(), kfold_split(50, 5, 9).unwrap());
        assert_ne!(kfold_split(50, 5, 9).unwrap(), kfold_split(50, 5, 10).unwrap());
    }

    #[test]
    fn metric_fixtures() {
        let m = metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m.mae, m.rmse, m.r2), (0.0, 0.0, Some(1.0)));
        let m = metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_relative_eq!(m.mae, 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(m.rmse, (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_eq!(m.r2, Some(0.0));
        assert_eq!(metrics(&[5.0, 5.0], &[1.0, 9.0]).unwrap().r2, None);
        // the mean of seven 0.1s is not exactly 0.1
        assert_eq!(metrics(&[0.1; 7], &[0.0; 7]).unwrap().r2, None);
        assert!(matches!(metrics(&[1.0], &[1.0, 2.0]), Err(EvalError::LengthMismatch(1, 2))));
        assert!(matches!(metrics(&[], &[]), Err(EvalError::EmptyMetrics)));
    }

    #[test]
    fn aggregate_recomputes_from_folds() {
        let folds = |base: f64| -> Vec<FoldMetrics> {
            (0..3)
                .map(|f| FoldMetrics {
                    fold: f,
                    mae: base + f as f64,
                    rmse: 2.0 * base + f as f64,
                    r2: Some(0.5 - 0.1 * f as f64),
                })
                .collect()
        };
        let r = EvalReport::from_folds("m1", Scale::Transformed, vec![(38, folds(1.0)), (40, folds(3.0))]);
        // seed means 2 and 4 for MAE
        assert_eq!(r.aggregate.mae_mean, 3.0);
        assert_eq!(r.aggregate.mae_std, 1.0);
        assert_relative_eq!(r.per_seed[0].fold_std.mae, (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);

        let single = EvalReport::from_folds("m1", Scale::Transformed, vec![(38, folds(1.0))]);
        assert_eq!(single.aggregate.mae_std, 0.0);
        assert!(single.per_seed[0].fold_std.mae > 0.0);
    }

    #[test]
    fn report_json_has_expected_shape() {
        let r = EvalReport::from_folds(
            "m3",
            Scale::Original,
            vec![(38, vec![FoldMetrics { fold: 0, mae: 1.0, rmse: 1.5, r2: None }])],
        );
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["model"], "m3");
        assert_eq!(v["scale"], "original");
        assert_eq!(v["per_seed"][0]["seed"], 38);
        assert_eq!(v["per_seed"][0]["per_fold"][0]["rmse"], 1.5);
        assert!(v["per_seed"][0]["per_fold"][0]["r2"].is_null());
        for key in ["mae_mean", "mae_std", "rmse_mean", "rmse_std", "r2_mean", "r2_std"] {
            assert!(v["aggregate"].get(key).is_some(), "{key}");
        }
    }

    fn observations(n: usize) -> Dataset {
        Dataset {
            records: (0..n)
                .map(|i| {
                    let x = i as f64;
                    WindObservation {
                        station_id: "S".into(),
                        timestamp: x,
                        h: (i % 13) as f64 * 40.0,
                        u: (x * 0.7).sin() * 6.0,
                        v: (x * 0.3).cos() * 4.0,
                        w: ((i * 7) % 11) as f64 * 0.05 - 0.2,
                        ri: Some(((x * 0.11).sin() * 3.0).powi(3)),
                    }
                })
                .collect(),
            provenance: vec![],
        }
    }

    fn quick_spec(kind: ModelKind) -> ExperimentSpec {
        ExperimentSpec {
            model: ModelConfig::new(kind, [4; 4]).with_dims([3; 4]).with_hidden(vec![4]),
            train: TrainConfig { epochs: 3, batch_size: 16, ..TrainConfig::default() },
            folds: 5,
        }
    }

    #[test]
    fn default_seed_list() {
        assert_eq!(DEFAULT_SEEDS, [38, 40, 42, 44, 46]);
    }

    #[test]
    fn experiment_covers_every_seed_and_fold() {
        let ds = observations(80);
        let data = CvData::Observations { dataset: &ds, binning: Binning::Quantile([4; 4]) };
        let r = run_experiment(data, &quick_spec(ModelKind::M1), &DEFAULT_SEEDS[..2]).unwrap();
        assert_eq!(r.transformed.per_seed.len(), 2);
        assert!(r.transformed.per_seed.iter().all(|s| s.per_fold.len() == 5));
        let orig = r.original.as_ref().unwrap();
        assert_eq!(orig.scale, Scale::Original);
        assert_eq!(orig.per_seed[1].seed, 40);

        let again = run_experiment(data, &quick_spec(ModelKind::M1), &DEFAULT_SEEDS[..2]).unwrap();
        assert_eq!(r.to_json(), again.to_json());
        assert!(run_experiment(data, &quick_spec(ModelKind::M1), &[]).is_err());
    }

    #[test]
    fn single_seed_has_zero_seed_std() {
        let ds = observations(60);
        let data = CvData::Observations { dataset: &ds, binning: Binning::Quantile([3; 4]) };
        let r = run_experiment(data, &quick_spec(ModelKind::M3), &[38]).unwrap();
        assert_eq!(r.transformed.aggregate.rmse_std, 0.0);
        assert!(r.transformed.per_seed[0].fold_std.rmse > 0.0);
    }

    #[test]
    fn preprocessing_is_fitted_on_training_rows_only() {
        let ds = observations(100);
        let plan = kfold_split(ds.len(), 5, 42).unwrap();
        let all: Vec<usize> = (0..ds.len()).collect();
        let fold = fit_fold_preprocessing(&ds, &plan.train_indices(0), Binning::Quantile([5; 4])).unwrap();
        let leaky = fit_fold_preprocessing(&ds, &all, Binning::Quantile([5; 4])).unwrap();
        assert_ne!(fold.target, leaky.target);
        assert_ne!(fold.discretizer, leaky.discretizer);
    }

    // Every cell appears several times, so held-out cells are always seen in
    // training and longer training must lower held-out RMSE.
    fn memorizable() -> SparseTensor4 {
        let cells: Vec<([usize; 4], f64)> = (0..12)
            .map(|c| ([c % 3, c % 4, (c / 3) % 2, c % 2], 0.1 + 0.07 * c as f64))
            .collect();
        let entries = (0..6).flat_map(|_| cells.iter().copied()).collect();
        SparseTensor4::new(entries, [3, 4, 2, 2]).unwrap()
    }

    #[test]
    fn grid_prefers_longer_training_on_memorizable_data() {
        let t = memorizable();
        let mut spec = quick_spec(ModelKind::M1);
        spec.train.lr = 1e-2;
        spec.train.batch_size = 8;
        let grid = Grid::from_spec(&spec).parse_overrides("lr=0.01; epochs=1,200").unwrap();
        let report = grid_search(CvData::Tensor(&t), &spec, &grid, &[38]).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.best_row().epochs, 200);
    }

    #[test]
    fn grid_cardinality_and_singleton() {
        let t = memorizable();
        let spec = quick_spec(ModelKind::M3);
        let single = grid_search(CvData::Tensor(&t), &spec, &Grid::from_spec(&spec), &[38]).unwrap();
        assert_eq!(single.rows.len(), 1);
        assert_eq!(single.best, 0);
        assert_eq!(single.best_row().epochs, spec.train.epochs);

        let grid = Grid::from_spec(&spec).parse_overrides("lr=0.001,0.01;dim=2,3").unwrap();
        let r = grid_search(CvData::Tensor(&t), &spec, &grid, &[38]).unwrap();
        assert_eq!(r.rows.len(), 4);

        let mut empty = Grid::from_spec(&spec);
        empty.epochs.clear();
        assert!(matches!(
            grid_search(CvData::Tensor(&t), &spec, &empty, &[38]),
            Err(EvalError::EmptyAxis("epochs"))
        ));
        assert!(Grid::from_spec(&spec).parse_overrides("nope=1").is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_entries(n in 2usize..400, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let plan = kfold_split(n, k, seed).unwrap();
            let sizes = plan.sizes();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut seen = vec![false; n];
            for f in 0..k {
                for i in plan.test_indices(f) {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
                prop_assert_eq!(plan.train_indices(f).len() + plan.test_indices(f).len(), n);
            }
            prop_assert!(seen.into_iter().all(|s| s));
        }
    }
}
