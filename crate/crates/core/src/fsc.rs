//! Finite-state controllers with masked softmax parameterization.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ControllerSpace, ModelFamily};
use crate::optimize::{plain_gd, OptimizerConfig};
use crate::sampling::{stratified_sample, stream, Stream};

/// Relative value gap under which a smaller memory structure is accepted.
pub const MEMORY_GAP: f64 = 0.05;

/// Per (node, observation) bound on the support of the memory update.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryModel {
    pub node_count: usize,
    pub observations: usize,
    /// `allowed[n * observations + z]`, each in `1..=node_count`.
    pub allowed: Vec<usize>,
}

impl MemoryModel {
    /// Every memory update may move to any node.
    pub fn full(node_count: usize, observations: usize) -> Self {
        Self::uniform(node_count, observations, node_count)
    }

    pub fn uniform(node_count: usize, observations: usize, k: usize) -> Self {
        MemoryModel {
            node_count,
            observations,
            allowed: vec![k; node_count * observations],
        }
    }

    pub fn allowed(&self, n: usize, z: usize) -> usize {
        self.allowed[n * self.observations + z]
    }

    pub fn set_allowed(&mut self, n: usize, z: usize, k: usize) {
        self.allowed[n * self.observations + z] = k;
    }

    /// Sets `allowed(n, z) = k` for every node.
    pub fn set_observation(&mut self, z: usize, k: usize) {
        for n in 0..self.node_count {
            self.set_allowed(n, z, k);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 {
            return Err(Error::input("memory model needs at least one node"));
        }
        if self.allowed.len() != self.node_count * self.observations {
            return Err(Error::input("memory model table has wrong size"));
        }
        if let Some(bad) = self.allowed.iter().find(|&&k| k == 0 || k > self.node_count) {
            return Err(Error::input(format!(
                "memory bound {bad} outside 1..={}",
                self.node_count
            )));
        }
        Ok(())
    }

    /// Appends observations whose memory update is pinned to node 0.
    pub fn with_pinned_observations(&self, extra: usize) -> Self {
        let observations = self.observations + extra;
        let mut out = MemoryModel::uniform(self.node_count, observations, 1);
        for n in 0..self.node_count {
            for z in 0..self.observations {
                out.set_allowed(n, z, self.allowed(n, z));
            }
        }
        out
    }

    /// Point-wise maximum; node counts and bounds are merged as maxima.
    pub fn pointwise_max(&self, other: &MemoryModel) -> MemoryModel {
        assert_eq!(self.observations, other.observations);
        let node_count = self.node_count.max(other.node_count);
        let mut out = MemoryModel::uniform(node_count, self.observations, 1);
        for z in 0..self.observations {
            let k = (0..self.node_count)
                .map(|n| self.allowed(n, z))
                .chain((0..other.node_count).map(|n| other.allowed(n, z)))
                .max()
                .unwrap_or(1);
            out.set_observation(z, k);
        }
        out
    }
}

/// Softmax logits of an FSC. Masked entries are held at zero and never enter
/// a softmax.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FscParams {
    pub memory: MemoryModel,
    pub actions: usize,
    /// `theta[(n * Z + z) * A + a]`
    pub theta: Vec<f64>,
    /// `phi[(n * Z + z) * N + m]`
    pub phi: Vec<f64>,
    pub theta_mask: Vec<bool>,
    pub phi_mask: Vec<bool>,
    /// Seed the logits were drawn from.
    pub seed: u64,
}

impl FscParams {
    /// All-zero logits, i.e. uniform rows.
    pub fn zeros(space: &ControllerSpace, memory: MemoryModel) -> Result<Self> {
        memory.validate()?;
        if memory.observations != space.observations {
            return Err(Error::input(format!(
                "memory model covers {} observations, model has {}",
                memory.observations, space.observations
            )));
        }
        let (nn, zz, aa) = (memory.node_count, space.observations, space.actions);
        let mut theta_mask = vec![false; nn * zz * aa];
        let mut phi_mask = vec![false; nn * zz * nn];
        for n in 0..nn {
            for z in 0..zz {
                for &a in &space.actions_at[z] {
                    theta_mask[(n * zz + z) * aa + a] = true;
                }
                for m in 0..memory.allowed(n, z) {
                    phi_mask[(n * zz + z) * nn + m] = true;
                }
            }
        }
        Ok(FscParams {
            theta: vec![0.0; theta_mask.len()],
            phi: vec![0.0; phi_mask.len()],
            memory,
            actions: aa,
            theta_mask,
            phi_mask,
            seed: 0,
        })
    }

    /// Draws every unmasked logit i.i.d. from N(0, 1).
    pub fn init(space: &ControllerSpace, memory: MemoryModel, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(space, memory)?;
        let mut rng = stream(seed, Stream::Init);
        for (x, &m) in p.theta.iter_mut().zip(&p.theta_mask) {
            if m {
                *x = StandardNormal.sample(&mut rng);
            }
        }
        for (x, &m) in p.phi.iter_mut().zip(&p.phi_mask) {
            if m {
                *x = StandardNormal.sample(&mut rng);
            }
        }
        p.seed = seed;
        Ok(p)
    }

    pub fn nodes(&self) -> usize {
        self.memory.node_count
    }

    pub fn observations(&self) -> usize {
        self.memory.observations
    }

    pub fn theta_row(&self, n: usize, z: usize) -> std::ops::Range<usize> {
        let start = (n * self.observations() + z) * self.actions;
        start..start + self.actions
    }

    pub fn phi_row(&self, n: usize, z: usize) -> std::ops::Range<usize> {
        let start = (n * self.observations() + z) * self.nodes();
        start..start + self.nodes()
    }

    /// Checks the parameters fit the controller space of a model.
    pub fn check_space(&self, space: &ControllerSpace) -> Result<()> {
        let expected = FscParams::zeros(space, self.memory.clone())?;
        if expected.theta_mask != self.theta_mask || expected.phi_mask != self.phi_mask {
            return Err(Error::input(
                "policy does not match the model's observations and actions",
            ));
        }
        if self.theta.len() != self.theta_mask.len() || self.phi.len() != self.phi_mask.len() {
            return Err(Error::input("policy logit tables have wrong size"));
        }
        Ok(())
    }

    pub fn realize(&self) -> Fsc {
        let (nn, zz, aa) = (self.nodes(), self.observations(), self.actions);
        let mut delta = vec![0.0; nn * zz * aa];
        let mut eta = vec![0.0; nn * zz * nn];
        for n in 0..nn {
            for z in 0..zz {
                let r = self.theta_row(n, z);
                masked_softmax(&self.theta[r.clone()], &self.theta_mask[r.clone()], &mut delta[r]);
                let r = self.phi_row(n, z);
                masked_softmax(&self.phi[r.clone()], &self.phi_mask[r.clone()], &mut eta[r]);
            }
        }
        Fsc {
            nodes: nn,
            observations: zz,
            actions: aa,
            delta,
            eta,
        }
    }
}

/// A stochastic FSC with initial node 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Fsc {
    pub nodes: usize,
    pub observations: usize,
    pub actions: usize,
    /// `delta[(n * Z + z) * A + a]`
    pub delta: Vec<f64>,
    /// `eta[(n * Z + z) * N + m]`
    pub eta: Vec<f64>,
}

impl Fsc {
    pub fn delta_row(&self, n: usize, z: usize) -> &[f64] {
        let start = (n * self.observations + z) * self.actions;
        &self.delta[start..start + self.actions]
    }

    pub fn eta_row(&self, n: usize, z: usize) -> &[f64] {
        let start = (n * self.observations + z) * self.nodes;
        &self.eta[start..start + self.nodes]
    }

    /// Deterministic controller: `act[n * Z + z]` and `next[n * Z + z]`.
    pub fn deterministic(
        nodes: usize,
        observations: usize,
        actions: usize,
        act: &[usize],
        next: &[usize],
    ) -> Fsc {
        let mut delta = vec![0.0; nodes * observations * actions];
        let mut eta = vec![0.0; nodes * observations * nodes];
        for k in 0..nodes * observations {
            delta[k * actions + act[k]] = 1.0;
            eta[k * nodes + next[k]] = 1.0;
        }
        Fsc {
            nodes,
            observations,
            actions,
            delta,
            eta,
        }
    }

    /// Uniform over the actions of `space` with a single memory node.
    pub fn uniform(space: &ControllerSpace) -> Fsc {
        FscParams::zeros(space, MemoryModel::full(1, space.observations))
            .expect("one-node memory model is valid")
            .realize()
    }
}

fn masked_softmax(logits: &[f64], mask: &[bool], out: &mut [f64]) {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&x, _)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let mut sum = 0.0;
    for ((o, &x), &m) in out.iter_mut().zip(logits).zip(mask) {
        *o = if m { (x - max).exp() } else { 0.0 };
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `J[m][k] = d p_k / d logit_m = p_m (1[m = k] - p_k)`.
pub fn softmax_jacobian(row: &[f64]) -> Vec<Vec<f64>> {
    (0..row.len())
        .map(|m| {
            (0..row.len())
                .map(|k| {
                    if m == k {
                        row[m] * (1.0 - row[k])
                    } else {
                        -row[m] * row[k]
                    }
                })
                .collect()
        })
        .collect()
}

/// Maps a sensitivity `g` over a probability row to the logit gradient,
/// `p_b (g_b - sum_k p_k g_k)`, which is `J g` without forming `J`.
pub fn softmax_pullback(row: &[f64], g: &[f64], out: &mut [f64]) {
    let mean: f64 = row.iter().zip(g).map(|(p, x)| p * x).sum();
    for ((o, &p), &x) in out.iter_mut().zip(row).zip(g) {
        *o = p * (x - mean);
    }
}

/// Probe-based memory model selection.
#[derive(Clone, Debug)]
pub struct MemoryProbeConfig {
    pub sample_count: usize,
    pub node_budget: usize,
    pub probe_steps: usize,
    pub seed: u64,
}

impl Default for MemoryProbeConfig {
    fn default() -> Self {
        MemoryProbeConfig {
            sample_count: 3,
            node_budget: 3,
            probe_steps: 50,
            seed: 0,
        }
    }
}

/// Chooses a memory model from short gradient probes on sampled instances.
///
/// For each sampled instance the smallest node count whose probe value lies
/// within [`MEMORY_GAP`] of the probe at the full budget is kept; then each
/// observation is tried with a pinned (single-successor) update and kept that
/// way if the probe stays within the gap. The per-instance models are merged
/// point-wise by maximum.
pub fn choose_memory_model(family: &ModelFamily, cfg: &MemoryProbeConfig) -> Result<MemoryModel> {
    if cfg.node_budget < 1 {
        return Err(Error::input("node budget must be at least 1"));
    }
    if cfg.sample_count < 1 {
        return Err(Error::input("memory probe needs at least one sample"));
    }
    let space = family.controller_space();
    let zz = space.observations;
    let mut rng = stream(cfg.seed, Stream::MemoryProbe);
    let sample = stratified_sample(&family.hole_sizes(), cfg.sample_count, &mut rng);
    let probe_cfg = OptimizerConfig {
        objective: family.objective(),
        ..OptimizerConfig::default()
    };
    let probe = |pomdp: &crate::model::Pomdp, memory: MemoryModel| -> Result<f64> {
        let params = FscParams::init(&space, memory, cfg.seed)?;
        let (_, value) = plain_gd(pomdp, params, cfg.probe_steps, &probe_cfg)?;
        Ok(family.objective().utility(value))
    };
    let within = |u: f64, reference: f64| u >= reference - MEMORY_GAP * reference.abs();

    let mut merged = MemoryModel::uniform(1, zz, 1);
    for index in &sample {
        let pomdp = family.instantiate(index)?;
        let reference = probe(&pomdp, MemoryModel::full(cfg.node_budget, zz))?;
        let mut chosen = cfg.node_budget;
        for k in 1..cfg.node_budget {
            if within(probe(&pomdp, MemoryModel::full(k, zz))?, reference) {
                chosen = k;
                break;
            }
        }
        let mut memory = MemoryModel::full(chosen, zz);
        if chosen > 1 {
            for z in 0..zz {
                let mut trial = memory.clone();
                trial.set_observation(z, 1);
                if within(probe(&pomdp, trial.clone())?, reference) {
                    memory = trial;
                }
            }
        }
        merged = merged.pointwise_max(&memory);
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(obs: usize, actions: usize) -> ControllerSpace {
        ControllerSpace {
            observations: obs,
            actions,
            actions_at: vec![(0..actions).collect(); obs],
        }
    }

    #[test]
    fn init_is_deterministic() {
        let sp = space(3, 4);
        let a = FscParams::init(&sp, MemoryModel::full(2, 3), 5).unwrap();
        let b = FscParams::init(&sp, MemoryModel::full(2, 3), 5).unwrap();
        assert_eq!(a, b);
        let c = FscParams::init(&sp, MemoryModel::full(2, 3), 6).unwrap();
        assert_ne!(a.theta, c.theta);
    }

    #[test]
    fn init_moments() {
        let sp = space(500, 10);
        let p = FscParams::init(&sp, MemoryModel::full(20, 500), 7).unwrap();
        let xs: Vec<f64> = p.theta.iter().take(100_000).copied().collect();
        assert_eq!(xs.len(), 100_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn single_successor_mask() {
        let sp = space(2, 2);
        let p = FscParams::init(&sp, MemoryModel::uniform(3, 2, 1), 1).unwrap();
        for n in 0..3 {
            for z in 0..2 {
                let r = p.phi_row(n, z);
                assert_eq!(p.phi_mask[r].iter().filter(|&&m| m).count(), 1);
            }
        }
        let fsc = p.realize();
        assert_eq!(fsc.eta_row(2, 1), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn realize_closed_forms() {
        let sp = space(1, 2);
        let mut p = FscParams::zeros(&sp, MemoryModel::full(1, 1)).unwrap();
        assert_eq!(p.realize().delta_row(0, 0), &[0.5, 0.5]);
        p.theta[1] = 3f64.ln();
        let d = p.realize();
        assert!((d.delta_row(0, 0)[0] - 0.25).abs() < 1e-15);
        assert!((d.delta_row(0, 0)[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn masked_actions_get_zero_probability() {
        let sp = ControllerSpace {
            observations: 1,
            actions: 3,
            actions_at: vec![vec![0, 2]],
        };
        let mut p = FscParams::zeros(&sp, MemoryModel::full(1, 1)).unwrap();
        p.theta[1] = 100.0;
        assert_eq!(p.realize().delta_row(0, 0), &[0.5, 0.0, 0.5]);
    }

    #[test]
    fn jacobian_closed_forms() {
        let j = softmax_jacobian(&[0.5, 0.5]);
        assert_eq!(j, vec![vec![0.25, -0.25], vec![-0.25, 0.25]]);
        let j = softmax_jacobian(&[1.0, 0.0]);
        assert!(j.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let logits = [0.0, 3f64.ln()];
        let mask = [true, true];
        let mut row = [0.0; 2];
        masked_softmax(&logits, &mask, &mut row);
        let j = softmax_jacobian(&row);
        let h = 1e-6;
        for m in 0..2 {
            let mut plus = logits;
            let mut minus = logits;
            plus[m] += h;
            minus[m] -= h;
            let (mut rp, mut rm) = ([0.0; 2], [0.0; 2]);
            masked_softmax(&plus, &mask, &mut rp);
            masked_softmax(&minus, &mask, &mut rm);
            for k in 0..2 {
                let fd = (rp[k] - rm[k]) / (2.0 * h);
                assert!((fd - j[m][k]).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn pointwise_max_merges_bounds() {
        let mut a = MemoryModel::uniform(2, 2, 1);
        a.set_observation(1, 2);
        let b = MemoryModel::uniform(3, 2, 1);
        let m = a.pointwise_max(&b);
        assert_eq!(m.node_count, 3);
        assert_eq!(m.allowed(0, 0), 1);
        assert_eq!(m.allowed(2, 1), 2);
        m.validate().unwrap();
    }
}
