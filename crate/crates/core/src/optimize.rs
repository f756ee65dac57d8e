//! The robust subgradient loop and its baselines.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::error::{Error, Result};
use crate::eval::{robust_evaluate, robust_evaluate_indices, EvalOptions};
use crate::fsc::{choose_memory_model, FscParams, MemoryModel, MemoryProbeConfig};
use crate::grad::{value_gradient, Gradient};
use crate::model::{Assignment, ModelFamily, Objective, Pomdp};
use crate::sampling::{stream, Stream};

#[derive(Clone, Debug)]
pub struct OptimizerConfig {
    pub alpha: f64,
    pub beta: f64,
    pub clip: f64,
    pub gd_steps: usize,
    /// Doubles the inner step count whenever evaluation exceeds 75% of the
    /// elapsed time.
    pub auto_steps: bool,
    pub timeout_seconds: f64,
    /// Optional cap on outer iterations, checked alongside the timeout.
    pub max_iterations: Option<usize>,
    pub seed: u64,
    pub eval: EvalOptions,
    pub objective: Objective,
    /// Fixed node count; `None` selects a memory model by probing.
    pub nodes: Option<usize>,
    pub node_budget: usize,
    pub memory_samples: usize,
    pub probe_steps: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            alpha: 0.1,
            beta: 0.9,
            clip: 5.0,
            gd_steps: 10,
            auto_steps: false,
            timeout_seconds: 60.0,
            max_iterations: None,
            seed: 0,
            eval: EvalOptions::default(),
            objective: Objective::Maximize,
            nodes: None,
            node_budget: 3,
            memory_samples: 3,
            probe_steps: 50,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::input("alpha must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::input("beta must lie in [0, 1)"));
        }
        if !(self.clip > 0.0) {
            return Err(Error::input("clip must be positive"));
        }
        if self.gd_steps == 0 {
            return Err(Error::input("gd_steps must be at least 1"));
        }
        if self.node_budget == 0 || self.nodes == Some(0) {
            return Err(Error::input("node count must be at least 1"));
        }
        if self.timeout_seconds.is_nan() {
            return Err(Error::input("timeout must be a number"));
        }
        Ok(())
    }
}

/// Momentum buffers shaped like the logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Momentum {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl Momentum {
    pub fn zeros(params: &FscParams) -> Self {
        Momentum {
            theta: vec![0.0; params.theta.len()],
            phi: vec![0.0; params.phi.len()],
        }
    }
}

/// One clipped momentum step: `nu = beta nu + (1 - beta) clip(sign g)`, then
/// `params += alpha nu`. The sign turns minimization into ascent.
pub fn gd_step(
    params: &mut FscParams,
    grad: &Gradient,
    momentum: &mut Momentum,
    cfg: &OptimizerConfig,
) -> Result<()> {
    if grad.d_theta.len() != params.theta.len() || grad.d_phi.len() != params.phi.len() {
        return Err(Error::input("gradient shape does not match parameters"));
    }
    if let Some(k) = grad.d_theta.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(format!("theta[{k}]")));
    }
    if let Some(k) = grad.d_phi.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(format!("phi[{k}]")));
    }
    let sign = cfg.objective.sign();
    let update = |x: &mut [f64], nu: &mut [f64], g: &[f64]| {
        for ((x, nu), &g) in x.iter_mut().zip(nu.iter_mut()).zip(g) {
            *nu = cfg.beta * *nu + (1.0 - cfg.beta) * (sign * g).clamp(-cfg.clip, cfg.clip);
            *x += cfg.alpha * *nu;
        }
    };
    update(&mut params.theta, &mut momentum.theta, &grad.d_theta);
    update(&mut params.phi, &mut momentum.phi, &grad.d_phi);
    Ok(())
}

/// Plain gradient descent on one POMDP for a fixed number of steps. Returns
/// the best iterate seen and its value.
pub fn plain_gd(
    pomdp: &Pomdp,
    mut params: FscParams,
    steps: usize,
    cfg: &OptimizerConfig,
) -> Result<(FscParams, f64)> {
    let mut momentum = Momentum::zeros(&params);
    let mut best: Option<(FscParams, f64)> = None;
    for k in 0..=steps {
        let (value, grad) = value_gradient(pomdp, &params)?;
        if best
            .as_ref()
            .is_none_or(|(_, b)| cfg.objective.is_better(value, *b))
        {
            best = Some((params.clone(), value));
        }
        if k < steps {
            gd_step(&mut params, &grad, &mut momentum, cfg)?;
        }
    }
    Ok(best.expect("at least one evaluation"))
}

/// Plain gradient descent in rounds of `gd_steps` until the timeout or the
/// iteration cap. Returns the best iterate seen and its value.
pub fn plain_gd_timed(
    pomdp: &Pomdp,
    mut params: FscParams,
    cfg: &OptimizerConfig,
    clock: &dyn Clock,
    deadline: f64,
) -> Result<(FscParams, f64)> {
    let mut momentum = Momentum::zeros(&params);
    let (mut best_params, mut best_value) = (params.clone(), value_gradient(pomdp, &params)?.0);
    let mut round = 0;
    while cfg.max_iterations.is_none_or(|m| round < m) && clock.elapsed() < deadline {
        for _ in 0..cfg.gd_steps {
            let (value, grad) = value_gradient(pomdp, &params)?;
            if cfg.objective.is_better(value, best_value) {
                best_params = params.clone();
                best_value = value;
            }
            gd_step(&mut params, &grad, &mut momentum, cfg)?;
        }
        round += 1;
    }
    let value = value_gradient(pomdp, &params)?.0;
    if cfg.objective.is_better(value, best_value) {
        best_params = params;
        best_value = value;
    }
    Ok((best_params, best_value))
}

/// Telemetry of one outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iteration: usize,
    pub wall_seconds: f64,
    pub robust_value: f64,
    pub worst_index: Assignment,
    pub running_best: f64,
    pub eval_seconds: f64,
    pub gd_seconds: f64,
    /// Instance the inner gradient steps trained on.
    pub train_index: Assignment,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub best: FscParams,
    /// Robust value of `best`, absent when no evaluation completed.
    pub best_value: Option<f64>,
    pub records: Vec<RunRecord>,
    pub memory: MemoryModel,
    pub note: Option<String>,
}

/// Memory model from the configuration: a fixed node count or probes.
pub fn resolve_memory(family: &ModelFamily, cfg: &OptimizerConfig) -> Result<MemoryModel> {
    let zz = family.skeleton.observations.len();
    match cfg.nodes {
        Some(n) => Ok(MemoryModel::full(n, zz)),
        None => choose_memory_model(
            family,
            &MemoryProbeConfig {
                sample_count: cfg.memory_samples,
                node_budget: cfg.node_budget,
                probe_steps: cfg.probe_steps,
                seed: cfg.seed,
            },
        ),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Selection {
    Worst,
    Random,
}

/// Robust subgradient loop: evaluate, keep the best, then take `gd_steps`
/// gradient steps on the current worst instance.
pub fn rfpg(family: &ModelFamily, cfg: &OptimizerConfig, clock: &dyn Clock) -> Result<RunOutcome> {
    run_loop(family, None, cfg, clock, Selection::Worst)
}

/// `rfpg` restricted to the listed instances: the worst case is taken over
/// `indices` only.
pub fn rfpg_on(
    family: &ModelFamily,
    indices: &[Assignment],
    cfg: &OptimizerConfig,
    clock: &dyn Clock,
) -> Result<RunOutcome> {
    run_loop(family, Some(indices), cfg, clock, Selection::Worst)
}

/// Same loop, but the gradient steps train on a uniformly random instance.
pub fn baseline_random_selection(
    family: &ModelFamily,
    cfg: &OptimizerConfig,
    clock: &dyn Clock,
) -> Result<RunOutcome> {
    run_loop(family, None, cfg, clock, Selection::Random)
}

/// Random selection restricted to the listed instances.
pub fn random_selection_on(
    family: &ModelFamily,
    indices: &[Assignment],
    cfg: &OptimizerConfig,
    clock: &dyn Clock,
) -> Result<RunOutcome> {
    run_loop(family, Some(indices), cfg, clock, Selection::Random)
}

fn run_loop(
    family: &ModelFamily,
    subset: Option<&[Assignment]>,
    cfg: &OptimizerConfig,
    clock: &dyn Clock,
    selection: Selection,
) -> Result<RunOutcome> {
    cfg.validate()?;
    family.ensure_valid()?;
    if cfg.objective != family.objective() {
        return Err(Error::input(
            "optimizer objective differs from the model objective",
        ));
    }
    let subset = match subset {
        Some(indices) => {
            if indices.is_empty() {
                return Err(Error::input("no instances to optimize over"));
            }
            for i in indices {
                family.check_assignment(i)?;
            }
            let mut sorted = indices.to_vec();
            sorted.sort();
            sorted.dedup();
            Some(sorted)
        }
        None => None,
    };
    let memory = resolve_memory(family, cfg)?;
    let space = family.controller_space();
    let mut params = FscParams::init(&space, memory.clone(), cfg.seed)?;
    let mut momentum = Momentum::zeros(&params);
    let mut rng = stream(cfg.seed, Stream::Selection);
    let sizes = family.hole_sizes();
    let mut best: Option<(FscParams, f64)> = None;
    let mut records = Vec::new();
    let mut steps = cfg.gd_steps;
    let mut eval_total = 0.0;
    let start = clock.elapsed();
    let deadline = start + cfg.timeout_seconds;
    for k in 0.. {
        if cfg.max_iterations.is_some_and(|m| k >= m) || clock.elapsed() >= deadline {
            break;
        }
        let t0 = clock.elapsed();
        let fsc = params.realize();
        let result = match &subset {
            Some(indices) => robust_evaluate_indices(family, &fsc, indices)?,
            None => robust_evaluate(family, &fsc, &cfg.eval)?,
        };
        let t1 = clock.elapsed();
        eval_total += t1 - t0;
        let value = result.robust_value;
        if best
            .as_ref()
            .is_none_or(|(_, b)| cfg.objective.is_better(value, *b))
        {
            best = Some((params.clone(), value));
        }
        let train_index = match selection {
            Selection::Worst => result.worst_index.clone(),
            Selection::Random => match &subset {
                Some(indices) => indices[rng.random_range(0..indices.len())].clone(),
                None => Assignment(sizes.iter().map(|&d| rng.random_range(0..d)).collect()),
            },
        };
        let mut t2 = t1;
        if t1 < deadline {
            let pomdp = family.instantiate(&train_index)?;
            for _ in 0..steps {
                let (_, grad) = value_gradient(&pomdp, &params)?;
                gd_step(&mut params, &grad, &mut momentum, cfg)?;
            }
            t2 = clock.elapsed();
        }
        records.push(RunRecord {
            iteration: k,
            wall_seconds: t2 - start,
            robust_value: value,
            worst_index: result.worst_index,
            running_best: best.as_ref().map(|b| b.1).expect("set above"),
            eval_seconds: t1 - t0,
            gd_seconds: t2 - t1,
            train_index,
        });
        if cfg.auto_steps && eval_total > 0.75 * (t2 - start) {
            steps = (steps * 2).min(10_000);
        }
    }
    Ok(match best {
        Some((best, value)) => RunOutcome {
            best,
            best_value: Some(value),
            records,
            memory,
            note: None,
        },
        None => RunOutcome {
            best: params,
            best_value: None,
            records,
            memory,
            note: Some("timeout before the first robust evaluation completed".into()),
        },
    })
}

/// Copies the logits that exist in `space` from controller parameters built
/// for a larger model (extra trailing observations and actions).
pub fn restrict_params(params: &FscParams, space: &crate::model::ControllerSpace) -> Result<FscParams> {
    let nn = params.nodes();
    let zz = space.observations;
    let mut memory = MemoryModel::uniform(nn, zz, 1);
    for n in 0..nn {
        for z in 0..zz {
            memory.set_allowed(n, z, params.memory.allowed(n, z));
        }
    }
    let mut out = FscParams::zeros(space, memory)?;
    for n in 0..nn {
        for z in 0..zz {
            let (src, dst) = (params.theta_row(n, z), out.theta_row(n, z));
            for a in 0..space.actions {
                out.theta[dst.start + a] = params.theta[src.start + a];
            }
            let (src, dst) = (params.phi_row(n, z), out.phi_row(n, z));
            out.phi[dst.clone()].copy_from_slice(&params.phi[src]);
        }
    }
    for (x, &m) in out.theta.iter_mut().zip(&out.theta_mask) {
        if !m {
            *x = 0.0;
        }
    }
    out.seed = params.seed;
    Ok(out)
}

/// Result of a non-robust baseline: the trained controller and its value on
/// its training objective.
#[derive(Clone, Debug)]
pub struct BaselineOutcome {
    pub params: FscParams,
    pub train_value: f64,
}

/// Plain gradient descent on the union POMDP of `indices`.
pub fn baseline_union_gd(
    family: &ModelFamily,
    indices: &[Assignment],
    cfg: &OptimizerConfig,
    clock: &dyn Clock,
) -> Result<BaselineOutcome> {
    cfg.validate()?;
    let union = family.build_union_pomdp(indices)?;
    let memory = resolve_memory(family, cfg)?;
    let union_space = union.controller_space();
    // The fresh initial observation always updates memory to node 0.
    let params = FscParams::init(&union_space, memory.with_pinned_observations(1), cfg.seed)?;
    let deadline = clock.elapsed() + cfg.timeout_seconds;
    let (best, value) = plain_gd_timed(&union, params, cfg, clock, deadline)?;
    Ok(BaselineOutcome {
        params: restrict_params(&best, &family.controller_space())?,
        train_value: value,
    })
}

/// Plain gradient descent on each listed instance under an equal share of
/// the budget; returns the controller with the best robust value over the
/// listed instances (ties keep the first).
pub fn baseline_enum_gd(
    family: &ModelFamily,
    indices: &[Assignment],
    cfg: &OptimizerConfig,
    clock: &dyn Clock,
) -> Result<BaselineOutcome> {
    cfg.validate()?;
    if indices.is_empty() {
        return Err(Error::input("enumeration baseline needs at least one index"));
    }
    let memory = resolve_memory(family, cfg)?;
    let space = family.controller_space();
    let share = cfg.timeout_seconds / indices.len() as f64;
    let mut best: Option<(FscParams, f64)> = None;
    for index in indices {
        let pomdp = family.instantiate(index)?;
        let params = FscParams::init(&space, memory.clone(), cfg.seed)?;
        let deadline = clock.elapsed() + share;
        let (trained, _) = plain_gd_timed(&pomdp, params, cfg, clock, deadline)?;
        let robust = robust_evaluate_indices(family, &trained.realize(), indices)?.robust_value;
        if best
            .as_ref()
            .is_none_or(|(_, b)| cfg.objective.is_better(robust, *b))
        {
            best = Some((trained, robust));
        }
    }
    let (params, train_value) = best.expect("indices nonempty");
    Ok(BaselineOutcome { params, train_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsc::MemoryModel;
    use crate::model::ControllerSpace;

    fn params() -> FscParams {
        let space = ControllerSpace {
            observations: 1,
            actions: 2,
            actions_at: vec![vec![0, 1]],
        };
        FscParams::zeros(&space, MemoryModel::full(1, 1)).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = params();
        let before = p.clone();
        let mut m = Momentum::zeros(&p);
        gd_step(
            &mut p,
            &Gradient::zeros_like(&before),
            &mut m,
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn single_step_without_momentum() {
        let mut p = params();
        let mut m = Momentum::zeros(&p);
        let cfg = OptimizerConfig {
            beta: 0.0,
            ..OptimizerConfig::default()
        };
        let g = Gradient {
            d_theta: vec![2.0, -10.0],
            d_phi: vec![0.0],
        };
        gd_step(&mut p, &g, &mut m, &cfg).unwrap();
        assert!((p.theta[0] - 0.2).abs() < 1e-15);
        // clipped at 5
        assert!((p.theta[1] + 0.5).abs() < 1e-15);
        assert_eq!(m.theta, vec![2.0, -5.0]);
    }

    #[test]
    fn minimization_descends() {
        let mut p = params();
        let mut m = Momentum::zeros(&p);
        let cfg = OptimizerConfig {
            beta: 0.0,
            objective: Objective::Minimize,
            ..OptimizerConfig::default()
        };
        let g = Gradient {
            d_theta: vec![1.0, 0.0],
            d_phi: vec![0.0],
        };
        gd_step(&mut p, &g, &mut m, &cfg).unwrap();
        assert!((p.theta[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = params();
        let mut m = Momentum::zeros(&p);
        let g = Gradient {
            d_theta: vec![f64::NAN, 0.0],
            d_phi: vec![0.0],
        };
        assert!(matches!(
            gd_step(&mut p, &g, &mut m, &OptimizerConfig::default()),
            Err(Error::NonFiniteGradient(_))
        ));
    }

    #[test]
    fn momentum_accumulates() {
        let mut p = params();
        let mut m = Momentum::zeros(&p);
        let cfg = OptimizerConfig::default();
        let g = Gradient {
            d_theta: vec![1.0, 0.0],
            d_phi: vec![0.0],
        };
        gd_step(&mut p, &g, &mut m, &cfg).unwrap();
        gd_step(&mut p, &g, &mut m, &cfg).unwrap();
        // nu1 = 0.1, nu2 = 0.09 + 0.1
        assert!((m.theta[0] - 0.19).abs() < 1e-15);
        assert!((p.theta[0] - 0.1 * (0.1 + 0.19)).abs() < 1e-15);
    }
}
