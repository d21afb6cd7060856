use serde::{Deserialize, Serialize};

use super::{
    density_experiment, fit_baselines, predict_all, report_rows, BaselineConfig, DensityConfig, EvalError, EvalSamples,
    EvaluationReport, ModelPredictions, BASELINES, GRAPHY,
};
use crate::data_io::Dataset;
use crate::model::GraPhyModel;
use crate::training::TrainingProblem;

pub const MAIN: &str = "main";
pub const TOP_SH: &str = "top_sh";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub idw_power: f64,
    /// Main table uses every `hour_stride`-th usable hour.
    pub hour_stride: usize,
    /// Samples at or above this SH quantile form the `top_sh` table.
    pub top_sh_quantile: f64,
    pub density: Option<DensityConfig>,
    /// The density experiment uses every `density_hour_stride`-th hour of
    /// the main table.
    pub density_hour_stride: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { idw_power: 1.0, hour_stride: 1, top_sh_quantile: 0.75, density: None, density_hour_stride: 1 }
    }
}

/// Paired absolute-error difference, baseline minus GraPhy, over the main
/// table samples. Positive means GraPhy is closer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub baseline: String,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

pub fn paired_differences(samples: &EvalSamples, preds: &[ModelPredictions]) -> Vec<PairedDifference> {
    let Some(g) = preds.iter().find(|p| p.model == GRAPHY) else {
        return Vec::new();
    };
    preds
        .iter()
        .filter(|p| BASELINES.contains(&p.model.as_str()))
        .map(|b| {
            let d: Vec<f64> = b
                .values
                .iter()
                .zip(&g.values)
                .zip(&samples.truth)
                .map(|((x, y), t)| (x - t).abs() - (y - t).abs())
                .collect();
            let n = d.len();
            let mean = d.iter().sum::<f64>() / n.max(1) as f64;
            let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.saturating_sub(1).max(1) as f64;
            PairedDifference { baseline: b.model.clone(), mean, sd: var.sqrt(), n }
        })
        .collect()
}

/// Everything one evaluation produces, with the raw predictions kept for
/// further analysis.
#[derive(Clone, Debug)]
pub struct EvalRun {
    pub report: EvaluationReport,
    pub baselines: BaselineConfig,
    pub samples: EvalSamples,
    pub preds: Vec<ModelPredictions>,
    /// Samples of the density experiment (a subset of the main hours).
    pub density_samples: Option<EvalSamples>,
}

impl EvalRun {
    /// Main-table indices of the samples at `hours` (target-major order).
    pub fn indices_at(&self, hours: &[usize]) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| hours.binary_search(&self.samples.hour[i]).is_ok()).collect()
    }
}

/// Evaluates the baselines and the GraPhy ensemble on the problem's test
/// sensors. Baseline hyperparameters are fitted on the context sensors over
/// the training hours.
pub fn evaluate(
    ds: &Dataset,
    problem: &TrainingProblem,
    models: &[GraPhyModel],
    opts: &EvalOptions,
) -> Result<EvalRun, EvalError> {
    let baselines = fit_baselines(problem, &problem.hours, opts.idw_power)?;
    let hours: Vec<usize> = problem.hours.iter().copied().step_by(opts.hour_stride.max(1)).collect();
    let samples = EvalSamples::new(ds, &problem.test, &hours)?;
    let keep: Vec<usize> = (0..problem.num_context()).collect();
    let preds = predict_all(problem, &problem.test, models, &baselines, &keep, &hours)?;
    let mut report = EvaluationReport { rows: report_rows(MAIN, &samples, &preds, None)?, ..Default::default() };
    let top = samples.sh_quantile_subset(opts.top_sh_quantile);
    report.rows.extend(report_rows(TOP_SH, &samples, &preds, Some(&top))?);
    report.add_binned(&samples, &preds)?;
    report.paired = paired_differences(&samples, &preds);
    let mut density_samples = None;
    if let Some(d) = &opts.density {
        let dh: Vec<usize> = hours.iter().copied().step_by(opts.density_hour_stride.max(1)).collect();
        let ds_samples = EvalSamples::new(ds, &problem.test, &dh)?;
        report.density = Some(density_experiment(problem, &ds_samples, &problem.test, models, &baselines, d)?);
        density_samples = Some(ds_samples);
    }
    Ok(EvalRun { report, baselines, samples, preds, density_samples })
}
