//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use neutucf::autodiff::{grad_check, Array};
use neutucf::data::{Dataset, SparseTensor4};
use neutucf::eval::{self, kfold_split, metrics, CvData, ExperimentSpec, DEFAULT_SEEDS};
use neutucf::models::{
    predict, train, tucker_reference, Model, ModelConfig, ModelError, ModelKind, Regressor, TrainConfig,
    TuckerModel,
};
use neutucf::preprocess::{Discretizer, TargetTransform};
use neutucf::richardson::{classify, compute_ri, ProfileLevel, Richardson, StabilityClass};
use neutucf::synth::{self, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for kind in ModelKind::ALL {
        for draw in 0..100 {
            let mode_sizes = [0; 4].map(|_| rng.random_range(1..5));
            let dim = rng.random_range(1..5);
            let dims = if kind == ModelKind::M1 {
                [0; 4].map(|_| rng.random_range(1..5))
            } else {
                [dim; 4]
            };
            let hidden = vec![rng.random_range(1..6)];
            let config = ModelConfig::new(kind, mode_sizes).with_dims(dims).with_hidden(hidden);
            let mut model = Model::new(config, rng.random()).unwrap();
            for p in model.params_mut() {
                for w in p.value.data_mut() {
                    *w = rng.random_range(-1.0..1.0);
                }
            }
            let idx = mode_sizes.map(|s| rng.random_range(0..s));
            let sample = [(idx, rng.random_range(0.0..1.0))];
            let leaves: Vec<Array> = model.params().iter().map(|p| p.value.clone()).collect();
            let report = grad_check(
                |t, v| {
                    model.batch_loss(t, v, &sample).map_err(|e| match e {
                        ModelError::Autodiff(a) => a,
                        other => panic!("{other}"),
                    })
                },
                &leaves,
                1e-5,
            )
            .unwrap();
            worst = worst.max(report.max_relative_error);
            if !report.passes(1e-4) {
                failures.push(format!("{kind} draw {draw}: {:.2e}", report.max_relative_error));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "max relative error {worst:.2e} over 500 draws in {:.1}s{}",
            elapsed.as_secs_f64(),
            if failures.is_empty() { String::new() } else { format!("; failing: {failures:?}") }
        ),
    )
}

fn tucker_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let ranks = [0; 4].map(|_| rng.random_range(1..=5));
        let sizes = ranks.map(|r| r + rng.random_range(0..3));
        let tables = [0, 1, 2, 3].map(|m| {
            let data = (0..sizes[m] * ranks[m]).map(|_| rng.random_range(-2.0..2.0)).collect();
            Array::matrix(sizes[m], ranks[m], data).unwrap()
        });
        let core_len: usize = ranks.iter().product();
        let core = (0..core_len).map(|_| rng.random_range(-2.0..2.0)).collect();
        let model = TuckerModel::from_parts(tables, core, rng.random_range(-1.0..1.0)).unwrap();
        let idx = sizes.map(|s| rng.random_range(0..s));
        let e = model.embeddings(idx).unwrap();
        let naive = tucker_reference(&model.core_tensor(), [&e[0], &e[1], &e[2], &e[3]]).unwrap();
        let fused = model.pre_activation_value(idx).unwrap() - model.bias();
        worst = worst.max((fused - naive).abs());
    }
    outcome(worst <= 1e-12, format!("max |forward - quadruple sum| = {worst:.2e} over 100 models"))
}

fn recovery_data(seed: u64) -> (SparseTensor4, SparseTensor4) {
    let spec = SynthSpec {
        mode_sizes: [8; 4],
        ranks: [3; 4],
        noise_std: 0.01,
        samples: 2500,
        seed,
    };
    synth::split(&synth::generate(&spec).unwrap().tensor, 2000)
}

fn held_out_r2(kind: ModelKind, dims: [usize; 4], seed: u64) -> (f64, Duration) {
    let (train_t, test_t) = recovery_data(seed);
    let start = Instant::now();
    let config = ModelConfig::new(kind, train_t.mode_sizes).with_dims(dims);
    let mut model = Model::new(config, seed).unwrap();
    let hp = TrainConfig { seed, ..TrainConfig::default() };
    train(&mut model, &train_t, &hp).unwrap();
    let elapsed = start.elapsed();
    let preds = predict(&model, &test_t, None).unwrap();
    let r2 = metrics(&test_t.values(), &preds.raw).unwrap().r2.unwrap_or(f64::NEG_INFINITY);
    (r2, elapsed)
}

fn synthetic_recovery() -> (Outcome, Vec<f64>) {
    let runs: Vec<(f64, Duration)> = DEFAULT_SEEDS.iter().map(|&s| held_out_r2(ModelKind::M1, [3; 4], s)).collect();
    let good = runs
        .iter()
        .filter(|(r2, t)| *r2 >= 0.8 && *t <= Duration::from_secs(60))
        .count();
    let detail = runs
        .iter()
        .zip(DEFAULT_SEEDS)
        .map(|((r2, t), s)| format!("seed {s}: R2 {r2:.4} in {:.1}s", t.as_secs_f64()))
        .collect::<Vec<_>>()
        .join(", ");
    (
        outcome(good >= 4, format!("{good}/5 seeds reach R2 >= 0.8 within 60s ({detail})")),
        runs.iter().map(|r| r.0).collect(),
    )
}

fn model_ordering(m1: &[f64]) -> Outcome {
    let m3: Vec<f64> = DEFAULT_SEEDS
        .iter()
        .map(|&s| held_out_r2(ModelKind::M3, [5; 4], s).0)
        .collect();
    let wins = m1.iter().zip(&m3).filter(|(a, b)| a > b).count();
    let pairs = m1
        .iter()
        .zip(&m3)
        .map(|(a, b)| format!("{a:.3} vs {b:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(wins >= 4, format!("M1 beats M3 on {wins}/5 seeds (R2 {pairs})"))
}

fn equal_frequency_binning() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let features: Vec<[f64; 4]> = (0..1000).map(|_| [0; 4].map(|_| rng.random::<f64>())).collect();
    let disc = Discretizer::fit(&features, [10; 4]).unwrap();
    let mut counts = [[0usize; 10]; 4];
    for f in &features {
        for (m, label) in disc.discretize(*f).into_iter().enumerate() {
            counts[m][label] += 1;
        }
    }
    let exact = counts.iter().all(|c| c.iter().all(|&n| n == 100));

    let tied: Vec<[f64; 4]> = (0..1000)
        .map(|_| [0; 4].map(|_| rng.random_range(0..3) as f64))
        .collect();
    let disc = Discretizer::fit(&tied, [10; 4]).unwrap();
    let eff = disc.effective_bins();
    let mut seen = [BTreeSet::new(), BTreeSet::new(), BTreeSet::new(), BTreeSet::new()];
    for f in &tied {
        for (m, label) in disc.discretize(*f).into_iter().enumerate() {
            seen[m].insert(label);
        }
    }
    let dense = (0..4).all(|m| eff[m] < 10 && seen[m] == (0..eff[m]).collect::<BTreeSet<_>>());
    outcome(
        exact && dense,
        format!("uniform: every bin holds 100 = {exact}; tied: effective bins {eff:?}, labels dense = {dense}"),
    )
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut flag_ok = true;
    for trial in 0..1000 {
        let n = rng.random_range(1..50);
        let constant = trial % 7 == 0;
        let base = rng.random_range(-3.0..3.0);
        let y: Vec<f64> = (0..n)
            .map(|_| if constant { base } else { rng.random_range(-3.0..3.0) })
            .collect();
        let yhat: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let m = metrics(&y, &yhat).unwrap();

        let errs: Vec<f64> = y.iter().zip(&yhat).map(|(a, b)| a - b).collect();
        let mae = errs.iter().map(|e| e.abs()).sum::<f64>() / n as f64;
        let mse = errs.iter().map(|e| e.powi(2)).sum::<f64>() / n as f64;
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let varies = y.windows(2).any(|w| w[0] != w[1]);
        let r2 = varies.then(|| 1.0 - mse / var);

        worst = worst.max((m.mae - mae).abs()).max((m.rmse - mse.sqrt()).abs());
        match (m.r2, r2) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            _ => flag_ok = false,
        }
        flag_ok &= m.r2.is_none() == (constant || n == 1);
    }
    outcome(
        worst <= 1e-12 && flag_ok,
        format!("max deviation {worst:.2e} over 1000 pairs; undefined-R2 flag exact = {flag_ok}"),
    )
}

fn cv_integrity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut partition_ok = true;
    for _ in 0..200 {
        let k = rng.random_range(2..12);
        let n = rng.random_range(k..400);
        let plan = kfold_split(n, k, rng.random()).unwrap();
        let mut all: Vec<usize> = (0..k).flat_map(|f| plan.test_indices(f)).collect();
        all.sort_unstable();
        let exhaustive_disjoint = all == (0..n).collect::<Vec<_>>();
        let sizes = plan.sizes();
        let balanced = sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1;
        let complement = (0..k).all(|f| plan.train_indices(f).len() + plan.test_indices(f).len() == n);
        partition_ok &= exhaustive_disjoint && balanced && complement;
    }

    let records = (0..60)
        .map(|n| neutucf::data::WindObservation {
            station_id: "S".into(),
            timestamp: n as f64,
            h: (n * 7 % 13) as f64,
            u: (n % 5) as f64 - 2.0,
            v: (n * 3 % 7) as f64,
            w: (n % 3) as f64 * 0.1,
            ri: Some((n as f64 * 0.37).sin() * 2.0),
        })
        .collect();
    let ds = Dataset {
        records,
        provenance: vec![],
    };
    let spec = ExperimentSpec {
        model: ModelConfig::new(ModelKind::M1, [3; 4]).with_dims([2; 4]),
        train: TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        },
        folds: 5,
    };
    let data = CvData::Observations {
        dataset: &ds,
        binning: eval::Binning::Quantile([3; 4]),
    };
    let a = eval::run_experiment(data, &spec, &DEFAULT_SEEDS).unwrap().to_json();
    let b = eval::run_experiment(data, &spec, &DEFAULT_SEEDS).unwrap().to_json();
    outcome(
        partition_ok && a == b,
        format!("200 fold plans partition correctly = {partition_ok}; repeated report JSON identical = {}", a == b),
    )
}

fn richardson_oracle() -> Outcome {
    let lower = ProfileLevel { z: 0.0, theta: 299.85, u: 0.0, v: 0.0 };
    let upper = ProfileLevel { z: 100.0, theta: 300.15, u: 1.0, v: 0.0 };
    let ri = compute_ri(&lower, &upper, 9.81).unwrap().value();
    let eps = 1e-12;
    let cases = [
        (0.25 - eps, StabilityClass::TurbulenceProne),
        (0.25, StabilityClass::Transitional),
        (1.0, StabilityClass::Transitional),
        (1.0 + eps, StabilityClass::Stable),
    ];
    let boundaries = cases.iter().all(|&(x, c)| classify(Richardson::Finite(x)) == c);
    outcome(
        (ri - 0.981).abs() <= 1e-9 && boundaries,
        format!("Ri = {ri:.12}; boundary classes correct = {boundaries}"),
    )
}

fn transform_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let targets: Vec<f64> = (0..1000)
        .map(|_| {
            let magnitude = 10f64.powf(rng.random_range(-4.0..2.0));
            if rng.random::<bool>() { magnitude } else { -magnitude }
        })
        .collect();
    let t = TargetTransform::fit(&targets).unwrap();
    let worst = targets
        .iter()
        .map(|&y| (t.inverse(t.forward(y)) - y).abs() / y.abs())
        .fold(0.0, f64::max);
    let negatives = targets.iter().filter(|y| **y < 0.0).count();
    outcome(
        worst <= 1e-9,
        format!("max relative error {worst:.2e} over 1000 targets ({negatives} negative)"),
    )
}

fn main() {
    let (recovery, m1_r2) = synthetic_recovery();
    let results = [
        ("1 gradient correctness", gradient_correctness()),
        ("2 Tucker oracle equivalence", tucker_oracle()),
        ("3 synthetic recovery", recovery),
        ("4 M1 over linear baseline", model_ordering(&m1_r2)),
        ("5 equal-frequency binning", equal_frequency_binning()),
        ("6 metrics oracle", metrics_oracle()),
        ("7 cross-validation integrity", cv_integrity()),
        ("8 Richardson number", richardson_oracle()),
        ("9 target transform round trip", transform_round_trip()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
