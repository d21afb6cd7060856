mod common;

use std::collections::HashMap;
use std::sync::OnceLock;

use graphy::data_io::{generate_dataset, Dataset, Grid, SynthDatasetSpec};
use graphy::evaluation::{
    binned_mae, density_experiment, evaluate, fit_baselines, gt_edges, kept_context, predict_all, recombine,
    report_rows, sh_edges, spatial_heterogeneity, BaselineConfig, DensityConfig, EvalError, EvalOptions, EvalSamples,
    EvaluationReport, ModelPredictions, BASELINES, GRAPHY, MAIN, TOP_SH,
};
use graphy::model::{GraPhyModel, ModelConfig};
use graphy::training::{train, SensorSplit, TrainConfig, TrainingProblem};
use proptest::prelude::*;

struct Fixture {
    ds: Dataset,
    problem: TrainingProblem,
    models: Vec<GraPhyModel>,
    cfg: BaselineConfig,
    samples: EvalSamples,
    preds: Vec<ModelPredictions>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let spec = SynthDatasetSpec {
            grid: Grid { width: 16, height: 16, cell_km: 0.5 },
            hours: 96,
            spinup_hours: 24,
            n_sensors: 14,
            seed: 21,
            ..SynthDatasetSpec::default()
        };
        let ds = generate_dataset(&spec).unwrap().0;
        let ids: Vec<String> = ds.sensors.iter().map(|s| s.sensor_id.clone()).collect();
        let split = SensorSplit::random(&ids, 0).unwrap();
        let problem = TrainingProblem::new(&ds, &split, 1).unwrap();
        let models: Vec<GraPhyModel> = (0..2)
            .map(|seed| {
                let cfg = TrainConfig {
                    model: ModelConfig::custom(2, 16),
                    seed,
                    lr: 1e-3,
                    max_epochs: 5,
                    ..TrainConfig::default()
                };
                train(&problem, &cfg, None).unwrap().model
            })
            .collect();
        let cfg = fit_baselines(&problem, &problem.hours, 2.0).unwrap();
        let hours: Vec<usize> = problem.hours.iter().copied().step_by(3).collect();
        let samples = EvalSamples::new(&ds, &problem.test, &hours).unwrap();
        let preds = predict_all(&problem, &problem.test, &models, &cfg, &all(&problem), &hours).unwrap();
        Fixture { ds, problem, models, cfg, samples, preds }
    })
}

fn all(p: &TrainingProblem) -> Vec<usize> {
    (0..p.num_context()).collect()
}

fn mae_of(f: &Fixture, model: &str) -> f64 {
    let p = f.preds.iter().find(|p| p.model == model).unwrap();
    p.values.iter().zip(&f.samples.truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.values.len() as f64
}

#[test]
fn samples_are_target_major_with_full_network_sh() {
    let f = fixture();
    let h = f.samples.hours.len();
    assert_eq!(f.samples.len(), f.problem.test.len() * h);
    for (k, t) in f.problem.test.iter().enumerate() {
        for (j, &hour) in f.samples.hours.iter().enumerate() {
            let i = k * h + j;
            assert_eq!((f.samples.target[i], f.samples.hour[i]), (k, hour));
            assert_eq!(f.samples.truth[i], t.truth[hour]);
            assert_eq!(f.samples.sh[i], spatial_heterogeneity(&f.ds.hour_values(hour)).unwrap());
        }
    }
}

#[test]
fn predictions_cover_every_model_and_sample() {
    let f = fixture();
    let names: Vec<&str> = f.preds.iter().map(|p| p.model.as_str()).collect();
    assert_eq!(names, [BASELINES.as_slice(), &[GRAPHY, "GraPhy#0", "GraPhy#1"]].concat());
    assert!(f.preds.iter().all(|p| p.values.len() == f.samples.len() && p.values.iter().all(|v| v.is_finite())));
    let (a, b) = (&f.preds[5].values, &f.preds[6].values);
    for (i, e) in f.preds[4].values.iter().enumerate() {
        assert_eq!(*e, (a[i] + b[i]) / 2.0);
    }
    // Ensemble MAE is bounded by the worst member.
    assert!(mae_of(f, GRAPHY) <= mae_of(f, "GraPhy#0").max(mae_of(f, "GraPhy#1")));
}

#[test]
fn full_context_predictions_match_direct_inference() {
    let f = fixture();
    let h = f.samples.hours.len();
    for (k, t) in f.problem.test.iter().enumerate() {
        let direct = f.problem.predict_target(&f.models[1], &f.problem.norm, t, &f.samples.hours).unwrap();
        assert_eq!(direct, f.preds[6].values[k * h..(k + 1) * h]);
    }
}

#[test]
fn report_rows_obey_metric_identities() {
    let f = fixture();
    let rows = report_rows("main", &f.samples, &f.preds, None).unwrap();
    assert_eq!(rows.len(), f.preds.len());
    for r in &rows {
        let m = r.metrics;
        assert_eq!(m.n, f.samples.len());
        assert!(m.mae * m.mae <= m.mse + 1e-12, "{}: mae {} mse {}", r.model, m.mae, m.mse);
        assert!(m.r2 <= 1.0);
        assert!((m.mae - mae_of(f, &r.model)).abs() < 1e-12);
    }
    let top = f.samples.sh_quantile_subset(0.75);
    assert!(!top.is_empty() && top.len() < f.samples.len());
    let cut = top.iter().map(|&i| f.samples.sh[i]).fold(f64::INFINITY, f64::min);
    let below = f.samples.sh.iter().filter(|&&s| s < cut).count();
    assert!(below as f64 >= 0.7 * f.samples.len() as f64);
    let sub = report_rows("top_sh", &f.samples, &f.preds, Some(&top)).unwrap();
    assert!(sub.iter().all(|r| r.metrics.n == top.len()));
}

#[test]
fn binned_breakdowns_recombine_to_the_global_mae() {
    let f = fixture();
    let max_truth = f.samples.truth.iter().copied().fold(0.0, f64::max);
    for p in &f.preds {
        let err: Vec<f64> = p.values.iter().zip(&f.samples.truth).map(|(a, b)| (a - b).abs()).collect();
        let global = err.iter().sum::<f64>() / err.len() as f64;
        let gt = binned_mae(&f.samples.truth, &err, &gt_edges(max_truth)).unwrap();
        assert_eq!(gt.outside, 0);
        assert!((recombine(&gt).unwrap() - global).abs() < 1e-10);
        let sh = binned_mae(&f.samples.sh, &err, &sh_edges()).unwrap();
        let inside: usize = sh.bins.iter().map(|b| b.count).sum();
        assert_eq!(inside + sh.outside, err.len());
    }
    let mut report = EvaluationReport::default();
    report.add_binned(&f.samples, &f.preds).unwrap();
    assert_eq!(report.binned.len(), 2 * f.preds.len());
}

fn small_density() -> DensityConfig {
    DensityConfig { repeats: 2, ..DensityConfig::default() }
}

fn density_fixture() -> &'static graphy::evaluation::DensityExperiment {
    static D: OnceLock<graphy::evaluation::DensityExperiment> = OnceLock::new();
    D.get_or_init(|| {
        let f = fixture();
        density_experiment(&f.problem, &f.samples, &f.problem.test, &f.models, &f.cfg, &small_density()).unwrap()
    })
}

#[test]
fn density_fraction_zero_reproduces_the_main_table() {
    let f = fixture();
    let d = density_fixture();
    let main = report_rows("main", &f.samples, &f.preds, None).unwrap();
    assert_eq!(d.fractions, vec![0.0, 0.2, 0.4, 0.6, 0.8]);
    for r in &main {
        let row = d.rows.iter().find(|x| x.model == r.model).unwrap();
        assert_eq!(row.mae.len(), 5);
        assert_eq!(row.mae[0].to_bits(), r.metrics.mae.to_bits(), "{}", r.model);
    }
    assert_eq!(d.remaining[0], f.problem.num_context());
}

#[test]
fn density_removal_sets_are_deterministic_and_sized() {
    let f = fixture();
    let d = density_fixture();
    let n = f.problem.num_context();
    for (fi, (&frac, sets)) in d.fractions.iter().zip(&d.removal_sets).enumerate() {
        let expect = n - (frac * n as f64).round() as usize;
        assert_eq!(d.remaining[fi], expect);
        for (r, keep) in sets.iter().enumerate() {
            assert_eq!(keep.len(), expect);
            assert!(keep.windows(2).all(|w| w[0] < w[1]) && keep.iter().all(|&i| i < n));
            assert_eq!(*keep, kept_context(n, frac, 0, fi, r));
        }
    }
    assert_ne!(d.removal_sets[2][0], d.removal_sets[2][1]);
    let other = kept_context(n, 0.4, 1, 2, 0);
    assert_eq!(other.len(), d.remaining[2]);
}

#[test]
fn density_errors_when_too_few_sensors_remain() {
    let f = fixture();
    let cfg = DensityConfig { fractions: vec![0.99], repeats: 1, seed: 0 };
    assert!(matches!(
        density_experiment(&f.problem, &f.samples, &f.problem.test, &f.models, &f.cfg, &cfg),
        Err(EvalError::TooFew { .. })
    ));
}

#[test]
fn summary_matches_the_text_table() {
    let f = fixture();
    let mut report = EvaluationReport {
        rows: report_rows("main", &f.samples, &f.preds, None).unwrap(),
        density: Some(density_fixture().clone()),
        ..EvaluationReport::default()
    };
    report.add_binned(&f.samples, &f.preds).unwrap();
    let summary = report.summary();
    let text = report.render_text();
    let mut parsed: HashMap<String, Vec<f64>> = HashMap::new();
    for line in text.lines().skip(1).take(report.rows.len()) {
        let cols: Vec<&str> = line.split_whitespace().collect();
        parsed.insert(format!("{}.{}", cols[0], cols[1]), cols[2..].iter().map(|c| c.parse().unwrap()).collect());
    }
    for r in &report.rows {
        let key = format!("{}.{}", r.experiment, r.model);
        let t = &parsed[&key];
        let get = |m: &str| summary[&format!("{key}.{m}")].as_f64().unwrap();
        assert_eq!(t[0], get("n"));
        assert!((t[1] - get("mse")).abs() <= 5e-4 * get("mse").abs().max(1.0));
        assert!((t[2] - get("mae")).abs() <= 5e-4);
        assert!((t[3] - get("r2")).abs() <= 5e-5);
    }
    let density_line = text.lines().find(|l| l.starts_with("density MAE")).unwrap();
    assert_eq!(density_line.split_whitespace().filter(|c| c.ends_with('%')).count(), 5);
    for pct in ["0pct", "20pct", "40pct", "60pct", "80pct"] {
        assert!(summary.contains_key(&format!("density.{GRAPHY}.{pct}.mae")));
    }
    let json = serde_json::to_string(&summary).unwrap();
    let back: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, summary);
}

#[test]
fn evaluate_builds_every_table_and_density_matches_on_shared_hours() {
    let f = fixture();
    let opts = EvalOptions { density: Some(small_density()), density_hour_stride: 5, ..EvalOptions::default() };
    let run = evaluate(&f.ds, &f.problem, &f.models, &opts).unwrap();
    let r = &run.report;
    for m in BASELINES.iter().copied().chain([GRAPHY]) {
        assert!(r.find(MAIN, m).is_some() && r.find(TOP_SH, m).is_some(), "{m}");
    }
    assert_eq!(r.find(MAIN, GRAPHY).unwrap().n, f.problem.test.len() * f.problem.hours.len());
    assert_eq!(r.paired.len(), 4);
    let g = run.preds.iter().find(|p| p.model == GRAPHY).unwrap();
    for (pd, b) in r.paired.iter().zip(&run.preds) {
        assert_eq!(pd.baseline, b.model);
        let d: Vec<f64> = (0..run.samples.len())
            .map(|i| (b.values[i] - run.samples.truth[i]).abs() - (g.values[i] - run.samples.truth[i]).abs())
            .collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        assert!((pd.mean - mean).abs() < 1e-12);
        let main_gap = r.find(MAIN, &b.model).unwrap().mae - r.find(MAIN, GRAPHY).unwrap().mae;
        assert!((pd.mean - main_gap).abs() < 1e-9);
    }
    // Density runs on a subset of hours, predicted in different batches.
    let ds = run.density_samples.as_ref().unwrap();
    let idx = run.indices_at(&ds.hours);
    assert_eq!(idx.len(), ds.len());
    let sub = report_rows(MAIN, &run.samples, &run.preds, Some(&idx)).unwrap();
    let density = r.density.as_ref().unwrap();
    for row in &sub {
        let d = density.rows.iter().find(|x| x.model == row.model).unwrap();
        assert_eq!(d.mae[0].to_bits(), row.metrics.mae.to_bits(), "{}", row.model);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn kept_context_is_a_sorted_subset_of_the_right_size(
        n in 2usize..60, frac in 0.0f64..0.95, seed in any::<u64>(), fi in 0usize..5, rep in 0usize..5
    ) {
        let keep = kept_context(n, frac, seed, fi, rep);
        prop_assert_eq!(keep.len(), n - (frac * n as f64).round() as usize);
        prop_assert!(keep.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(keep.iter().all(|&i| i < n));
        prop_assert_eq!(keep, kept_context(n, frac, seed, fi, rep));
    }
}
