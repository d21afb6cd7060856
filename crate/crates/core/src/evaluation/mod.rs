//! Metrics, baseline and model comparison over held-out sensors, the
//! density experiment and report rendering.

mod harness;
mod metrics;
mod run;

pub use harness::{
    baseline_target_predictions, density_experiment, fit_baselines, graphy_target_predictions, kept_context,
    predict_all, report_rows, BaselineConfig, DensityConfig, DensityExperiment, DensityRow, EvalSamples, MetricReport,
    ModelPredictions, BASELINES, GP, GRAPHY, IDW, MEAN_FILL, OKRIGING,
};
pub use metrics::{
    binned_mae, gt_edges, mae_ratio, metrics, recombine, sh_edges, spatial_heterogeneity, uniform_edges, BinAxis,
    BinStat, BinnedMae, Metrics,
};
pub use run::{evaluate, paired_differences, EvalOptions, EvalRun, PairedDifference, MAIN, TOP_SH};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineError;
use crate::geo::GeoError;
use crate::model::ModelError;
use crate::training::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("R2 is undefined when all ground-truth values are equal")]
    UndefinedR2,
    #[error("bin edges must be strictly increasing with at least two entries")]
    BadEdges,
    #[error("binned results use different bins or sample counts")]
    BinMismatch,
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Binned MAE of one model along one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedReport {
    pub model: String,
    pub axis: BinAxis,
    pub binned: BinnedMae,
}

/// Everything produced by one evaluation run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<MetricReport>,
    pub binned: Vec<BinnedReport>,
    #[serde(default)]
    pub paired: Vec<PairedDifference>,
    pub density: Option<DensityExperiment>,
}

impl EvaluationReport {
    /// Adds GT- and SH-binned MAE for each prediction set.
    pub fn add_binned(&mut self, samples: &EvalSamples, preds: &[ModelPredictions]) -> Result<(), EvalError> {
        let max_truth = samples.truth.iter().cloned().fold(0.0, f64::max);
        let gt = gt_edges(max_truth);
        let sh = sh_edges();
        for p in preds {
            let abs: Vec<f64> = p.values.iter().zip(&samples.truth).map(|(a, b)| (a - b).abs()).collect();
            self.binned.push(BinnedReport {
                model: p.model.clone(),
                axis: BinAxis::GroundTruth,
                binned: binned_mae(&samples.truth, &abs, &gt)?,
            });
            self.binned.push(BinnedReport {
                model: p.model.clone(),
                axis: BinAxis::Sh,
                binned: binned_mae(&samples.sh, &abs, &sh)?,
            });
        }
        Ok(())
    }

    pub fn find(&self, experiment: &str, model: &str) -> Option<&Metrics> {
        self.rows.iter().find(|r| r.experiment == experiment && r.model == model).map(|r| &r.metrics)
    }

    /// Flat `experiment.model.metric -> value` map.
    pub fn summary(&self) -> serde_json::Map<String, serde_json::Value> {
        let mut m = serde_json::Map::new();
        for r in &self.rows {
            let key = format!("{}.{}", r.experiment, r.model);
            m.insert(format!("{key}.mse"), r.metrics.mse.into());
            m.insert(format!("{key}.mae"), r.metrics.mae.into());
            m.insert(format!("{key}.r2"), r.metrics.r2.into());
            m.insert(format!("{key}.n"), r.metrics.n.into());
        }
        for p in &self.paired {
            m.insert(format!("paired.{}.mean", p.baseline), p.mean.into());
            m.insert(format!("paired.{}.sd", p.baseline), p.sd.into());
        }
        if let Some(d) = &self.density {
            for row in &d.rows {
                for (f, v) in d.fractions.iter().zip(&row.mae) {
                    m.insert(format!("density.{}.{:.0}pct.mae", row.model, f * 100.0), (*v).into());
                }
            }
        }
        m
    }

    /// Human-readable tables.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:<12} {:>8} {:>12} {:>10} {:>8}", "experiment", "model", "n", "MSE", "MAE", "R2");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<12} {:<12} {:>8} {:>12.3} {:>10.3} {:>8.4}",
                r.experiment, r.model, r.metrics.n, r.metrics.mse, r.metrics.mae, r.metrics.r2
            );
        }
        for b in &self.binned {
            let _ = writeln!(s, "\nbinned MAE by {:?}: {}", b.axis, b.model);
            for bin in &b.binned.bins {
                let mae = bin.mae.map_or("-".to_string(), |v| format!("{v:.3}"));
                let _ = writeln!(s, "  [{:>8.1}, {:>8.1})  n={:<8} mae={}", bin.lo, bin.hi, bin.count, mae);
            }
            if b.binned.outside > 0 {
                let _ = writeln!(s, "  outside bins: {}", b.binned.outside);
            }
        }
        if !self.paired.is_empty() {
            let _ = writeln!(s, "\npaired |error| difference, baseline minus GraPhy (mean +- sd)");
            for p in &self.paired {
                let _ = writeln!(s, "  {:<12} {:>10.4} +- {:<10.4} n={}", p.baseline, p.mean, p.sd, p.n);
            }
        }
        if let Some(d) = &self.density {
            let _ = write!(s, "\ndensity MAE   {:<12}", "model");
            for f in &d.fractions {
                let _ = write!(s, " {:>8}", format!("{:.0}%", f * 100.0));
            }
            let _ = writeln!(s);
            for row in &d.rows {
                let _ = write!(s, "              {:<12}", row.model);
                for v in &row.mae {
                    let _ = write!(s, " {v:>8.3}");
                }
                let _ = writeln!(s);
            }
        }
        s
    }
}
