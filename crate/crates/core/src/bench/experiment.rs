//! Seeded comparisons of rfPG against the baselines on stratified subsets.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::clock::Clock;
use crate::error::{Error, Result};
use crate::eval::{robust_evaluate, robust_evaluate_indices, EvalMode};
use crate::fsc::{Fsc, FscParams};
use crate::model::{Assignment, ModelFamily, Objective};
use crate::optimize::{
    baseline_enum_gd, baseline_union_gd, random_selection_on, rfpg_on, OptimizerConfig, RunRecord,
};
use crate::sampling::{stratified_sample, stream, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rfpg,
    Random,
    Union,
    Enum,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rfpg => "rfpg",
            Method::Random => "random",
            Method::Union => "union",
            Method::Enum => "enum",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rfpg" => Ok(Method::Rfpg),
            "random" => Ok(Method::Random),
            "union" => Ok(Method::Union),
            "enum" => Ok(Method::Enum),
            other => Err(Error::input(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub family: ModelFamily,
    pub subset_size: usize,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Shared optimizer settings; `timeout_seconds` is the per-method budget
    /// and `seed` is overwritten per run.
    pub config: OptimizerConfig,
}

impl ExperimentPlan {
    pub fn new(family: ModelFamily, config: OptimizerConfig) -> Self {
        ExperimentPlan {
            family,
            subset_size: 10,
            seeds: (0..10).collect(),
            methods: vec![Method::Rfpg, Method::Random, Method::Union, Method::Enum],
            config,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.subset_size == 0 || self.subset_size as u128 > self.family.instance_count() {
            return Err(Error::input(format!(
                "subset size {} must lie between 1 and the instance count {}",
                self.subset_size,
                self.family.instance_count()
            )));
        }
        if self.seeds.is_empty() || self.methods.is_empty() {
            return Err(Error::input("an experiment needs seeds and methods"));
        }
        self.config.validate()
    }
}

/// One method trained with one seed.
#[derive(Clone, Debug, Serialize)]
pub struct MethodRun {
    pub seed: u64,
    pub method: Method,
    pub subset_value: f64,
    pub full_value: f64,
    /// Higher is better; 1 means as good as rfPG on the same seed.
    pub normalized: Option<f64>,
    pub timed_out: bool,
    #[serde(skip)]
    pub records: Vec<RunRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub mean_full_value: f64,
    pub stderr_full_value: f64,
    pub mean_normalized: Option<f64>,
    pub stderr_normalized: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentOutcome {
    pub model: String,
    pub objective: Objective,
    pub runs: Vec<MethodRun>,
    pub summaries: Vec<MethodSummary>,
}

/// Ratio with rfPG as reference, oriented so that larger is better.
pub fn normalize(objective: Objective, value: f64, rfpg: f64) -> Option<f64> {
    let ratio = match objective {
        Objective::Maximize => value / rfpg,
        Objective::Minimize => rfpg / value,
    };
    ratio.is_finite().then_some(ratio)
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn full_value(family: &ModelFamily, fsc: &Fsc, cfg: &OptimizerConfig) -> Result<f64> {
    match robust_evaluate(family, fsc, &cfg.eval) {
        Err(Error::EnumerationCap { .. }) if cfg.eval.mode == EvalMode::Enum => {
            let mut opts = cfg.eval;
            opts.mode = EvalMode::Ar;
            Ok(robust_evaluate(family, fsc, &opts)?.robust_value)
        }
        other => Ok(other?.robust_value),
    }
}

pub fn run_experiment(plan: &ExperimentPlan, clock: &dyn Clock) -> Result<ExperimentOutcome> {
    plan.validate()?;
    let family = &plan.family;
    let objective = family.objective();
    let sizes = family.hole_sizes();
    let mut runs = Vec::new();
    for &seed in &plan.seeds {
        let subset: Vec<Assignment> =
            stratified_sample(&sizes, plan.subset_size, &mut stream(seed, Stream::Sampling));
        let cfg = OptimizerConfig {
            seed,
            ..plan.config.clone()
        };
        let first = runs.len();
        for &method in &plan.methods {
            let (params, records, timed_out): (Option<FscParams>, Vec<RunRecord>, bool) = match method {
                Method::Rfpg | Method::Random => {
                    let out = if method == Method::Rfpg {
                        rfpg_on(family, &subset, &cfg, clock)?
                    } else {
                        random_selection_on(family, &subset, &cfg, clock)?
                    };
                    let timed_out = out.best_value.is_none();
                    ((!timed_out).then_some(out.best), out.records, timed_out)
                }
                Method::Union => (
                    Some(baseline_union_gd(family, &subset, &cfg, clock)?.params),
                    Vec::new(),
                    false,
                ),
                Method::Enum => (
                    Some(baseline_enum_gd(family, &subset, &cfg, clock)?.params),
                    Vec::new(),
                    false,
                ),
            };
            let fsc = match &params {
                Some(p) => p.realize(),
                None => Fsc::uniform(&family.controller_space()),
            };
            runs.push(MethodRun {
                seed,
                method,
                subset_value: robust_evaluate_indices(family, &fsc, &subset)?.robust_value,
                full_value: full_value(family, &fsc, &cfg)?,
                normalized: None,
                timed_out,
                records,
            });
        }
        if let Some(reference) = runs[first..]
            .iter()
            .find(|r| r.method == Method::Rfpg)
            .map(|r| r.full_value)
        {
            for r in &mut runs[first..] {
                r.normalized = normalize(objective, r.full_value, reference);
            }
        }
    }
    let summaries = plan
        .methods
        .iter()
        .map(|&method| {
            let mine: Vec<&MethodRun> = runs.iter().filter(|r| r.method == method).collect();
            let values: Vec<f64> = mine.iter().map(|r| r.full_value).collect();
            let (mean_full_value, stderr_full_value) = mean_and_stderr(&values);
            let normalized: Vec<f64> = mine.iter().filter_map(|r| r.normalized).collect();
            let (mean_normalized, stderr_normalized) = if normalized.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_and_stderr(&normalized);
                (Some(m), Some(s))
            };
            MethodSummary {
                method,
                runs: mine.len(),
                mean_full_value,
                stderr_full_value,
                mean_normalized,
                stderr_normalized,
            }
        })
        .collect();
    Ok(ExperimentOutcome {
        model: family.skeleton.name.clone(),
        objective,
        runs,
        summaries,
    })
}

/// Writes `runs.csv`, `summary.json` and one learning curve per looped run
/// (`curve_<method>_<seed>.csv`) into `dir`.
pub fn write_experiment(
    family: &ModelFamily,
    outcome: &ExperimentOutcome,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("runs.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Serialize(e.to_string()))?;
    let ser = |e: csv::Error| Error::Serialize(e.to_string());
    w.write_record([
        "seed",
        "method",
        "subset_value",
        "full_value",
        "normalized",
        "timed_out",
    ])
    .map_err(ser)?;
    for r in &outcome.runs {
        w.write_record([
            r.seed.to_string(),
            r.method.to_string(),
            r.subset_value.to_string(),
            r.full_value.to_string(),
            r.normalized.map_or(String::new(), |x| x.to_string()),
            r.timed_out.to_string(),
        ])
        .map_err(ser)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let mut summary: BTreeMap<&str, serde_json::Value> = BTreeMap::new();
    summary.insert("model", outcome.model.clone().into());
    summary.insert("objective", outcome.objective.as_str().into());
    summary.insert(
        "methods",
        serde_json::to_value(&outcome.summaries).map_err(|e| Error::Serialize(e.to_string()))?,
    );
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Serialize(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    for r in outcome.runs.iter().filter(|r| !r.records.is_empty()) {
        crate::io::write_results_file(
            family,
            &r.records,
            dir.join(format!("curve_{}_{}.csv", r.method, r.seed)),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_is_oriented() {
        assert_eq!(normalize(Objective::Maximize, 2.0, 4.0), Some(0.5));
        assert_eq!(normalize(Objective::Minimize, 8.0, 4.0), Some(0.5));
        assert_eq!(normalize(Objective::Minimize, 0.0, 4.0), None);
    }

    #[test]
    fn standard_error() {
        let (m, s) = mean_and_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
