//! Exact gradients of FSC values with respect to the softmax logits.

use crate::error::{Error, Result};
use crate::eval::{pomdp_value, Transient};
use crate::fsc::{softmax_pullback, FscParams};
use crate::induced::induce_chain;
use crate::linsolve::TransientSystem;
use crate::model::Pomdp;

/// Partial derivatives of the value, shaped like the logit tables.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub d_theta: Vec<f64>,
    pub d_phi: Vec<f64>,
}

impl Gradient {
    pub fn zeros_like(params: &FscParams) -> Self {
        Gradient {
            d_theta: vec![0.0; params.theta.len()],
            d_phi: vec![0.0; params.phi.len()],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.d_theta
            .iter()
            .chain(&self.d_phi)
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Expected visits per product state before absorption, from `(s0, n0)`.
pub fn occupancy(chain: &crate::induced::InducedChain) -> Result<Vec<f64>> {
    if !chain.proper {
        return Err(Error::ImproperChain { context: None });
    }
    let tr = Transient::new(&chain.goal, &chain.rows);
    if tr.states.is_empty() {
        return Ok(vec![0.0; chain.len()]);
    }
    let sys = TransientSystem::new(&tr.rows)?;
    let mut e = vec![0.0; tr.states.len()];
    e[tr.index[0]] = 1.0;
    Ok(tr.expand(&sys.solve_transpose(&e)?))
}

/// Value of the realized controller and its gradient.
///
/// One forward solve gives the values `V`, one transposed solve on the same
/// factorization gives the occupancy `mu`. Each visited product state
/// `(s, n)` contributes `mu(s, n)` times the sensitivity of its local Bellman
/// expression to the action and memory-update rows of `(n, O(s))`; the
/// accumulated row sensitivities are pulled back through the softmax.
pub fn value_gradient(pomdp: &Pomdp, params: &FscParams) -> Result<(f64, Gradient)> {
    let fsc = params.realize();
    let chain = induce_chain(pomdp, &fsc)?;
    if !chain.proper {
        return Err(Error::ImproperChain { context: None });
    }
    let tr = Transient::new(&chain.goal, &chain.rows);
    let mut grad = Gradient::zeros_like(params);
    if tr.states.is_empty() {
        return Ok((0.0, grad));
    }
    let sys = TransientSystem::new(&tr.rows)?;
    let rhs: Vec<f64> = tr.states.iter().map(|&x| chain.reward[x]).collect();
    let values = tr.expand(&sys.solve(&rhs)?);
    let mut e = vec![0.0; tr.states.len()];
    e[tr.index[0]] = 1.0;
    let mu = tr.expand(&sys.solve_transpose(&e)?);

    let sk = &pomdp.skeleton;
    let nn = params.nodes();
    let value_at = |s: usize, n: usize| chain.index_of(s, n).map_or(0.0, |y| values[y]);
    // Distribution-space sensitivities accumulated per (n, z) row.
    let mut g_delta = vec![0.0; params.theta.len()];
    let mut g_eta = vec![0.0; params.phi.len()];
    let mut succ = vec![0.0; nn];
    for &x in &tr.states {
        let weight = mu[x];
        if weight == 0.0 {
            continue;
        }
        let (s, n) = chain.states[x];
        let z = sk.obs_of[s];
        let delta = fsc.delta_row(n, z);
        let eta = fsc.eta_row(n, z);
        let theta_row = params.theta_row(n, z);
        let phi_row = params.phi_row(n, z);
        succ.iter_mut().for_each(|v| *v = 0.0);
        for c in &pomdp.choices[s] {
            let mut ga = c.reward;
            for &(t, p) in &c.transitions {
                let mut expected = 0.0;
                for (m, &e) in eta.iter().enumerate() {
                    if e != 0.0 {
                        let v = value_at(t, m);
                        expected += e * v;
                        succ[m] += delta[c.action] * p * v;
                    }
                }
                ga += p * expected;
            }
            g_delta[theta_row.start + c.action] += weight * ga;
        }
        for m in 0..nn {
            g_eta[phi_row.start + m] += weight * succ[m];
        }
    }
    for n in 0..nn {
        for z in 0..params.observations() {
            let r = params.theta_row(n, z);
            softmax_pullback(&fsc.delta[r.clone()], &g_delta[r.clone()], &mut grad.d_theta[r]);
            let r = params.phi_row(n, z);
            softmax_pullback(&fsc.eta[r.clone()], &g_eta[r.clone()], &mut grad.d_phi[r]);
        }
    }
    for (k, v) in grad.d_theta.iter_mut().enumerate() {
        if !params.theta_mask[k] {
            *v = 0.0;
        } else if !v.is_finite() {
            return Err(Error::NonFiniteGradient(format!("theta[{k}]")));
        }
    }
    for (k, v) in grad.d_phi.iter_mut().enumerate() {
        if !params.phi_mask[k] {
            *v = 0.0;
        } else if !v.is_finite() {
            return Err(Error::NonFiniteGradient(format!("phi[{k}]")));
        }
    }
    Ok((values[0], grad))
}

/// Central finite differences of the value in every unmasked logit.
pub fn finite_diff_gradient(pomdp: &Pomdp, params: &FscParams, h: f64) -> Result<Gradient> {
    if !(h > 0.0) {
        return Err(Error::input("finite-difference step must be positive"));
    }
    let mut grad = Gradient::zeros_like(params);
    let mut p = params.clone();
    for k in 0..params.theta.len() {
        if !params.theta_mask[k] {
            continue;
        }
        let x = params.theta[k];
        p.theta[k] = x + h;
        let up = pomdp_value(pomdp, &p.realize())?;
        p.theta[k] = x - h;
        let down = pomdp_value(pomdp, &p.realize())?;
        p.theta[k] = x;
        grad.d_theta[k] = (up - down) / (2.0 * h);
    }
    for k in 0..params.phi.len() {
        if !params.phi_mask[k] {
            continue;
        }
        let x = params.phi[k];
        p.phi[k] = x + h;
        let up = pomdp_value(pomdp, &p.realize())?;
        p.phi[k] = x - h;
        let down = pomdp_value(pomdp, &p.realize())?;
        p.phi[k] = x;
        grad.d_phi[k] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}
