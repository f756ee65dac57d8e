//! Exact values of induced chains and robust evaluation over families.

mod ar;
mod enumerate;

pub use ar::robust_evaluate_ar;
pub use enumerate::{robust_evaluate_enum, robust_evaluate_indices};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsc::Fsc;
use crate::induced::{induce_chain, InducedChain};
use crate::linsolve::TransientSystem;
use crate::model::{Assignment, Guard, ModelFamily, Pomdp};

/// Default absolute tolerance of the abstraction-refinement evaluator.
pub const DEFAULT_AR_TOL: f64 = 1e-9;
/// Default number of instances the enumeration evaluator accepts.
pub const DEFAULT_ENUM_CAP: u128 = 10_000;
/// Values closer than this count as tied when picking a worst instance.
pub const TIE_EPS: f64 = 1e-12;
const MAX_SWEEPS: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueMethod {
    LinearSolve,
    ValueIteration,
}

/// Values per product state of an induced chain.
#[derive(Clone, Debug)]
pub struct ValueVector {
    pub values: Vec<f64>,
}

impl ValueVector {
    /// Value at the initial product state.
    pub fn initial(&self) -> f64 {
        self.values[0]
    }
}

/// Transient (non-goal) part of a chain, reindexed densely.
pub(crate) struct Transient {
    /// Product index of each transient state.
    pub states: Vec<usize>,
    /// Transient index of each product state, `usize::MAX` for goals.
    pub index: Vec<usize>,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl Transient {
    pub fn new(goal: &[bool], rows: &[Vec<(usize, f64)>]) -> Self {
        let mut index = vec![usize::MAX; goal.len()];
        let mut states = Vec::new();
        for (x, &g) in goal.iter().enumerate() {
            if !g {
                index[x] = states.len();
                states.push(x);
            }
        }
        let rows = states
            .iter()
            .map(|&x| {
                rows[x]
                    .iter()
                    .filter(|&&(y, _)| !goal[y])
                    .map(|&(y, p)| (index[y], p))
                    .collect()
            })
            .collect();
        Transient { states, index, rows }
    }

    /// Scatters a transient vector back to product states (goals get 0).
    pub fn expand(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.index.len()];
        for (t, &x) in self.states.iter().enumerate() {
            out[x] = v[t];
        }
        out
    }
}

/// Expected total reward until absorption, per product state.
pub fn chain_value(chain: &InducedChain, method: ValueMethod, tol: f64) -> Result<ValueVector> {
    if !chain.proper {
        return Err(Error::ImproperChain { context: None });
    }
    match method {
        ValueMethod::LinearSolve => {
            let tr = Transient::new(&chain.goal, &chain.rows);
            let rhs: Vec<f64> = tr.states.iter().map(|&x| chain.reward[x]).collect();
            let sys = TransientSystem::new(&tr.rows)?;
            let v = sys.solve(&rhs)?;
            Ok(ValueVector {
                values: tr.expand(&v),
            })
        }
        ValueMethod::ValueIteration => gauss_seidel(chain, tol),
    }
}

/// Gauss-Seidel sweeps with self-loops eliminated.
fn gauss_seidel(chain: &InducedChain, tol: f64) -> Result<ValueVector> {
    let n = chain.len();
    let mut v = vec![0.0; n];
    let self_loop: Vec<f64> = (0..n)
        .map(|x| {
            chain.rows[x]
                .iter()
                .filter(|&&(y, _)| y == x)
                .map(|&(_, p)| p)
                .sum()
        })
        .collect();
    for _ in 0..MAX_SWEEPS {
        let mut delta = 0.0f64;
        for x in 0..n {
            if chain.goal[x] {
                continue;
            }
            let mut acc = chain.reward[x];
            for &(y, p) in &chain.rows[x] {
                if y != x {
                    acc += p * v[y];
                }
            }
            let new = acc / (1.0 - self_loop[x]);
            delta = delta.max((new - v[x]).abs());
            v[x] = new;
        }
        if !delta.is_finite() {
            return Err(Error::Solver("value iteration diverged".into()));
        }
        if delta <= tol {
            return Ok(ValueVector { values: v });
        }
    }
    Err(Error::NoConvergence(MAX_SWEEPS))
}

/// Value of `fsc` on a concrete POMDP.
pub fn pomdp_value(pomdp: &Pomdp, fsc: &Fsc) -> Result<f64> {
    let chain = induce_chain(pomdp, fsc)?;
    Ok(chain_value(&chain, ValueMethod::LinearSolve, 0.0)?.initial())
}

/// Value of `fsc` on the instance selected by `index`.
pub fn evaluate_instance(family: &ModelFamily, index: &Assignment, fsc: &Fsc) -> Result<f64> {
    let pomdp = family.instantiate(index)?;
    pomdp_value(&pomdp, fsc).map_err(|e| match e {
        Error::ImproperChain { .. } => {
            Error::improper(format!("instance {}", family.format_assignment(index)))
        }
        other => other,
    })
}

/// A box of restricted hole domains.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Subfamily {
    /// Per hole, the sorted admitted options.
    pub options: Vec<Vec<usize>>,
}

impl Subfamily {
    pub fn full(family: &ModelFamily) -> Self {
        Subfamily {
            options: family
                .holes
                .iter()
                .map(|h| (0..h.options.len()).collect())
                .collect(),
        }
    }

    pub fn new(options: Vec<Vec<usize>>) -> Result<Self> {
        if options.iter().any(Vec::is_empty) {
            return Err(Error::input("subfamily hole domains must be nonempty"));
        }
        let options = options
            .into_iter()
            .map(|mut o| {
                o.sort_unstable();
                o.dedup();
                o
            })
            .collect();
        Ok(Subfamily { options })
    }

    pub fn instance_count(&self) -> u128 {
        self.options
            .iter()
            .fold(1u128, |acc, o| acc.saturating_mul(o.len() as u128))
    }

    pub fn is_singleton(&self) -> bool {
        self.options.iter().all(|o| o.len() == 1)
    }

    /// Smallest contained assignment.
    pub fn first(&self) -> Assignment {
        Assignment(self.options.iter().map(|o| o[0]).collect())
    }

    pub fn contains(&self, a: &Assignment) -> bool {
        a.0.len() == self.options.len()
            && a.0
                .iter()
                .zip(&self.options)
                .all(|(x, o)| o.binary_search(x).is_ok())
    }

    /// Whether some contained assignment matches the guard.
    pub fn admits(&self, guard: &Guard) -> bool {
        guard
            .pairs()
            .iter()
            .all(|&(h, o)| self.options[h].binary_search(&o).is_ok())
    }

    pub fn with_hole(&self, hole: usize, options: Vec<usize>) -> Subfamily {
        let mut out = self.clone();
        out.options[hole] = options;
        out
    }
}

impl fmt::Display for Subfamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (h, o) in self.options.iter().enumerate() {
            if h > 0 {
                write!(f, " x ")?;
            }
            write!(f, "{o:?}")?;
        }
        write!(f, "]")
    }
}

/// Bounds on the adversary utility `sign * J` over one box.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxBound {
    pub subfamily: Subfamily,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug)]
pub struct RobustResult {
    pub worst_index: Assignment,
    /// Value `J` of the FSC on the worst instance.
    pub robust_value: f64,
    pub bound_trace: Vec<BoxBound>,
    /// Multi-instance boxes whose quotient MDP was solved.
    pub boxes_explored: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Ar,
    Enum,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ar" => Ok(EvalMode::Ar),
            "enum" => Ok(EvalMode::Enum),
            other => Err(Error::input(format!("unknown evaluator `{other}`"))),
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Ar => "ar",
            EvalMode::Enum => "enum",
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    pub mode: EvalMode,
    pub ar_tol: f64,
    pub enum_cap: u128,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            mode: EvalMode::Ar,
            ar_tol: DEFAULT_AR_TOL,
            enum_cap: DEFAULT_ENUM_CAP,
        }
    }
}

pub fn robust_evaluate(family: &ModelFamily, fsc: &Fsc, opts: &EvalOptions) -> Result<RobustResult> {
    match opts.mode {
        EvalMode::Ar => robust_evaluate_ar(family, fsc, opts.ar_tol),
        EvalMode::Enum => robust_evaluate_enum(family, fsc, opts.enum_cap),
    }
}

/// Running worst instance with deterministic tie-breaking toward the
/// lexicographically smallest assignment.
#[derive(Clone, Debug, Default)]
pub(crate) struct Worst {
    pub best: Option<(f64, Assignment, f64)>,
}

impl Worst {
    /// Offers an instance with adversary utility `u` and value `value`.
    pub fn offer(&mut self, u: f64, index: &Assignment, value: f64) {
        let replace = match &self.best {
            None => true,
            Some((bu, bi, _)) => u < bu - TIE_EPS || (u <= bu + TIE_EPS && index < bi),
        };
        if replace {
            self.best = Some((u, index.clone(), value));
        }
    }

    pub fn utility(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |b| b.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::reward_family;

    fn chain(rows: Vec<Vec<(usize, f64)>>, reward: Vec<f64>, goal: Vec<bool>) -> InducedChain {
        let n = rows.len();
        let mut c = crate::induced::tests::raw_chain(rows, reward, goal);
        assert_eq!(c.len(), n);
        c.proper = true;
        c
    }

    #[test]
    fn one_step_to_goal() {
        let c = chain(vec![vec![(1, 1.0)], vec![]], vec![5.0, 0.0], vec![false, true]);
        for m in [ValueMethod::LinearSolve, ValueMethod::ValueIteration] {
            assert_eq!(chain_value(&c, m, 1e-12).unwrap().initial(), 5.0);
        }
    }

    #[test]
    fn geometric_chain() {
        let c = chain(
            vec![vec![(0, 0.5), (1, 0.5)], vec![]],
            vec![1.0, 0.0],
            vec![false, true],
        );
        let v = chain_value(&c, ValueMethod::LinearSolve, 0.0).unwrap();
        assert!((v.initial() - 2.0).abs() <= 1e-10);
        let v = chain_value(&c, ValueMethod::ValueIteration, 1e-12).unwrap();
        assert!((v.initial() - 2.0).abs() <= 1e-10);
    }

    #[test]
    fn improper_chain_is_rejected() {
        let mut c = chain(vec![vec![(0, 1.0)]], vec![1.0], vec![false]);
        c.proper = false;
        let err = chain_value(&c, ValueMethod::LinearSolve, 0.0).unwrap_err();
        assert!(err.to_string().contains("improper chain: value undefined"));
    }

    #[test]
    fn dominance_picks_the_smaller_reward() {
        let fam = reward_family(&[1.0, 2.0]);
        let fsc = Fsc::uniform(&fam.controller_space());
        let res = robust_evaluate_enum(&fam, &fsc, DEFAULT_ENUM_CAP).unwrap();
        assert_eq!(res.worst_index, Assignment(vec![0]));
        assert_eq!(res.robust_value, 1.0);
        let res = robust_evaluate_ar(&fam, &fsc, DEFAULT_AR_TOL).unwrap();
        assert_eq!(res.worst_index, Assignment(vec![0]));
    }

    #[test]
    fn subfamily_guards() {
        let sf = Subfamily::new(vec![vec![2, 0], vec![1]]).unwrap();
        assert_eq!(sf.options[0], vec![0, 2]);
        assert!(sf.admits(&Guard::new([(0, 2)])));
        assert!(!sf.admits(&Guard::new([(0, 1)])));
        assert!(!sf.admits(&Guard::new([(1, 0)])));
        assert_eq!(sf.instance_count(), 2);
        assert!(Subfamily::new(vec![vec![]]).is_err());
    }
}
