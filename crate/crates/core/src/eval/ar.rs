//! Abstraction-refinement robust evaluation.
//!
//! Boxes of hole domains are processed best-first by the lower bound from
//! their induced quotient MDP. The adversary minimizes the utility
//! `sign * J`. A box is resolved once a candidate instance inside it attains
//! the lower bound within `tol`; otherwise it is split on the hole whose
//! demanded options conflict most.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use super::{evaluate_instance, BoxBound, RobustResult, Subfamily, Transient, Worst};
use crate::error::{Error, Result};
use crate::fsc::Fsc;
use crate::induced::{induce_quotient_mdp, InducedQuotientMdp};
use crate::linsolve::TransientSystem;
use crate::model::{Assignment, ModelFamily};

const MAX_POLICY_ITERATIONS: usize = 10_000;
/// Relative slack under which two variant choices count as equally bad.
const CHOICE_EPS: f64 = 1e-10;
/// Relative improvement a policy-iteration switch must achieve. Kept far
/// below the evaluator tolerance so the lower bound stays sound.
const SWITCH_EPS: f64 = 1e-14;

pub fn robust_evaluate_ar(family: &ModelFamily, fsc: &Fsc, tol: f64) -> Result<RobustResult> {
    if !(tol >= 0.0) {
        return Err(Error::input(format!("tolerance {tol} must be nonnegative")));
    }
    let mut search = Search {
        family,
        fsc,
        sign: family.objective().sign(),
        tol,
        worst: Worst::default(),
        explored: 0,
        trace: Vec::new(),
        queue: BinaryHeap::new(),
        seq: 0,
    };
    search.process(Subfamily::full(family))?;
    while let Some(entry) = search.queue.pop() {
        if entry.lower >= search.worst.utility() - tol {
            search.trace.push(BoxBound {
                subfamily: entry.subfamily,
                lower: entry.lower,
                upper: f64::INFINITY,
            });
            continue;
        }
        for child in entry.children {
            search.process(child)?;
        }
    }
    let (_, worst_index, robust_value) = search.worst.best.expect("root box evaluated");
    Ok(RobustResult {
        worst_index,
        robust_value,
        bound_trace: search.trace,
        boxes_explored: search.explored,
    })
}

struct Pending {
    lower: f64,
    seq: usize,
    subfamily: Subfamily,
    children: Vec<Subfamily>,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // BinaryHeap is a max-heap; the smallest lower bound pops first, then
    // the earliest created box.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .lower
            .total_cmp(&self.lower)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    family: &'a ModelFamily,
    fsc: &'a Fsc,
    sign: f64,
    tol: f64,
    worst: Worst,
    explored: usize,
    trace: Vec<BoxBound>,
    queue: BinaryHeap<Pending>,
    seq: usize,
}

impl Search<'_> {
    fn evaluate(&mut self, index: &Assignment) -> Result<f64> {
        let v = evaluate_instance(self.family, index, self.fsc)?;
        let u = self.sign * v;
        self.worst.offer(u, index, v);
        Ok(u)
    }

    fn process(&mut self, subfamily: Subfamily) -> Result<()> {
        if subfamily.is_singleton() {
            let index = subfamily.first();
            let u = self.evaluate(&index)?;
            self.trace.push(BoxBound {
                subfamily,
                lower: u,
                upper: u,
            });
            return Ok(());
        }
        self.explored += 1;
        let mdp = induce_quotient_mdp(self.family, &subfamily, self.fsc)?;
        let Some(solution) = solve_min(&mdp, self.sign)? else {
            // Some variant selection never reaches the goal: no finite bound.
            let children = halve(&subfamily);
            self.push(f64::NEG_INFINITY, subfamily, children);
            return Ok(());
        };
        let lower = solution.value;
        if lower >= self.worst.utility() - self.tol {
            self.trace.push(BoxBound {
                subfamily,
                lower,
                upper: f64::INFINITY,
            });
            return Ok(());
        }
        let demands = collect_demands(self.family, &mdp, &solution);
        let candidate = vote(&subfamily, &demands);
        let upper = self.evaluate(&candidate)?;
        if upper <= lower + self.tol {
            self.trace.push(BoxBound {
                subfamily,
                lower,
                upper,
            });
            return Ok(());
        }
        let children = split(&subfamily, &demands);
        self.push(lower, subfamily, children);
        Ok(())
    }

    fn push(&mut self, lower: f64, subfamily: Subfamily, children: Vec<Subfamily>) {
        self.seq += 1;
        self.queue.push(Pending {
            lower,
            seq: self.seq,
            subfamily,
            children,
        });
    }
}

struct MinSolution {
    /// Optimal utility at the initial state.
    value: f64,
    /// Per site, the utility of each choice under the optimal values.
    q: Vec<Vec<f64>>,
    /// Occupancy of each product state under the optimal selection.
    occupancy: Vec<f64>,
}

/// Minimizes the total utility over variant selections by policy iteration.
/// Returns `None` when some selection is improper.
fn solve_min(mdp: &InducedQuotientMdp, sign: f64) -> Result<Option<MinSolution>> {
    if !mdp.all_selections_proper() {
        return Ok(None);
    }
    let q_of = |values: &[f64]| -> Vec<Vec<f64>> {
        mdp.sites
            .iter()
            .map(|site| {
                site.choices
                    .iter()
                    .map(|c| sign * c.reward + c.row.iter().map(|&(y, p)| p * values[y]).sum::<f64>())
                    .collect()
            })
            .collect()
    };
    let mut selection = vec![0usize; mdp.sites.len()];
    for _ in 0..MAX_POLICY_ITERATIONS {
        let (rows, rewards) = mdp.collapse(&selection);
        let tr = Transient::new(&mdp.goal, &rows);
        let rhs: Vec<f64> = tr.states.iter().map(|&x| sign * rewards[x]).collect();
        let sys = TransientSystem::new(&tr.rows)?;
        let values = tr.expand(&sys.solve(&rhs)?);
        let q = q_of(&values);
        let mut changed = false;
        for (k, qk) in q.iter().enumerate() {
            let current = qk[selection[k]];
            let (best, &bq) = qk
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("sites have choices");
            if bq < current - SWITCH_EPS * (1.0 + current.abs()) {
                selection[k] = best;
                changed = true;
            }
        }
        if !changed {
            let occupancy = if tr.states.is_empty() {
                vec![0.0; mdp.states.len()]
            } else {
                let mut e = vec![0.0; tr.states.len()];
                e[tr.index[0]] = 1.0;
                tr.expand(&sys.solve_transpose(&e)?)
            };
            return Ok(Some(MinSolution {
                value: values[0],
                q,
                occupancy,
            }));
        }
    }
    Err(Error::NoConvergence(MAX_POLICY_ITERATIONS))
}

/// A hole option demanded by every near-optimal variant at a visited site.
struct Demand {
    hole: usize,
    option: usize,
    weight: f64,
}

fn collect_demands(family: &ModelFamily, mdp: &InducedQuotientMdp, sol: &MinSolution) -> Vec<Demand> {
    let quotient = family.quotient();
    let mut out = Vec::new();
    for (k, site) in mdp.sites.iter().enumerate() {
        let mu = sol.occupancy[site.state];
        if mu <= 0.0 {
            continue;
        }
        let qk = &sol.q[k];
        let qmin = qk.iter().copied().fold(f64::INFINITY, f64::min);
        let slack = CHOICE_EPS * (1.0 + qmin.abs());
        let variants = quotient.variants(mdp.states[site.state].0, site.action);
        let near: Vec<&crate::model::Guard> = site
            .choices
            .iter()
            .zip(qk)
            .filter(|(_, &q)| q <= qmin + slack)
            .map(|(c, _)| &variants[c.variant].guard)
            .collect();
        let (first, rest) = near.split_first().expect("some choice attains the minimum");
        for &(hole, option) in first.pairs() {
            if rest.iter().all(|g| g.option_for(hole) == Some(option)) {
                out.push(Demand {
                    hole,
                    option,
                    weight: mu * site.weight,
                });
            }
        }
    }
    out
}

/// Candidate: per hole the most demanded option, else the smallest admitted.
fn vote(subfamily: &Subfamily, demands: &[Demand]) -> Assignment {
    let mut weights: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); subfamily.options.len()];
    for d in demands {
        *weights[d.hole].entry(d.option).or_insert(0.0) += d.weight;
    }
    Assignment(
        subfamily
            .options
            .iter()
            .zip(&weights)
            .map(|(opts, w)| {
                w.iter()
                    .fold(None::<(usize, f64)>, |best, (&o, &x)| match best {
                        Some((_, bx)) if bx >= x => best,
                        _ => Some((o, x)),
                    })
                    .map_or(opts[0], |(o, _)| o)
            })
            .collect(),
    )
}

/// Splits on the hole with the most conflicting demands: one singleton per
/// demanded option plus the remainder. Without conflicts, halves the widest
/// hole.
fn split(subfamily: &Subfamily, demands: &[Demand]) -> Vec<Subfamily> {
    let holes = subfamily.options.len();
    let mut options: Vec<Vec<usize>> = vec![Vec::new(); holes];
    let mut counts = vec![0usize; holes];
    for d in demands {
        counts[d.hole] += 1;
        if !options[d.hole].contains(&d.option) {
            options[d.hole].push(d.option);
        }
    }
    let target = (0..holes)
        .filter(|&h| options[h].len() >= 2)
        .max_by(|&a, &b| counts[a].cmp(&counts[b]).then_with(|| b.cmp(&a)));
    let Some(h) = target else {
        return halve(subfamily);
    };
    let mut demanded = options[h].clone();
    demanded.sort_unstable();
    let mut children: Vec<Subfamily> = demanded
        .iter()
        .map(|&o| subfamily.with_hole(h, vec![o]))
        .collect();
    let rest: Vec<usize> = subfamily.options[h]
        .iter()
        .copied()
        .filter(|o| !demanded.contains(o))
        .collect();
    if !rest.is_empty() {
        children.push(subfamily.with_hole(h, rest));
    }
    children
}

fn halve(subfamily: &Subfamily) -> Vec<Subfamily> {
    let h = (0..subfamily.options.len())
        .filter(|&h| subfamily.options[h].len() > 1)
        .max_by(|&a, &b| {
            subfamily.options[a]
                .len()
                .cmp(&subfamily.options[b].len())
                .then_with(|| b.cmp(&a))
        })
        .expect("multi-instance box has a splittable hole");
    let opts = &subfamily.options[h];
    let mid = opts.len() / 2;
    vec![
        subfamily.with_hole(h, opts[..mid].to_vec()),
        subfamily.with_hole(h, opts[mid..].to_vec()),
    ]
}
