//! POMDPs, hidden-model families with hole-guarded variants, and the quotient
//! view over a family.
//!
//! A family shares its state/action/observation skeleton across all instances.
//! Per (state, action) it stores a list of variants; each variant carries a
//! partial hole assignment (its guard) and the transition distribution and
//! reward that every instance matching the guard uses. The guards of one
//! (state, action) pair partition the instance space, which makes the variant
//! list exactly the set of equivalence classes of instances that behave alike
//! on that pair.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a transition distribution.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Maximize,
    Minimize,
}

impl Objective {
    /// Multiplier turning a value into a utility that is always maximized.
    pub fn sign(self) -> f64 {
        match self {
            Objective::Maximize => 1.0,
            Objective::Minimize => -1.0,
        }
    }

    pub fn utility(self, value: f64) -> f64 {
        self.sign() * value
    }

    /// Whether `a` is strictly better than `b`.
    pub fn is_better(self, a: f64, b: f64) -> bool {
        self.utility(a) > self.utility(b)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Maximize => "maximize",
            Objective::Minimize => "minimize",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" | "maximize" => Ok(Objective::Maximize),
            "min" | "minimize" => Ok(Objective::Minimize),
            other => Err(Error::input(format!("unknown objective `{other}`"))),
        }
    }
}

/// Sparse distribution over state ids.
pub type Distribution = Vec<(usize, f64)>;

/// Everything a POMDP and a family share: the state/action/observation sets,
/// the observation function, and the goal set.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    pub name: String,
    pub objective: Objective,
    pub states: Vec<String>,
    pub initial: usize,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    pub obs_of: Vec<usize>,
    pub goals: Vec<bool>,
}

impl Skeleton {
    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn is_goal(&self, s: usize) -> bool {
        self.goals[s]
    }

    fn validate_into(&self, out: &mut Vec<Diagnostic>) {
        if self.states.is_empty() {
            out.push(Diagnostic::new(Rule::Structure, "states", "no states declared"));
            return;
        }
        if self.initial >= self.states.len() {
            out.push(Diagnostic::new(
                Rule::Structure,
                "initial",
                format!("initial state {} out of range", self.initial),
            ));
        }
        if self.obs_of.len() != self.states.len() {
            out.push(Diagnostic::new(
                Rule::ObservationFunction,
                "observations",
                format!(
                    "observation function covers {} of {} states",
                    self.obs_of.len(),
                    self.states.len()
                ),
            ));
        }
        for (s, &z) in self.obs_of.iter().enumerate() {
            if z >= self.observations.len() {
                out.push(Diagnostic::new(
                    Rule::ObservationFunction,
                    self.state_name(s),
                    format!("observation {z} out of range"),
                ));
            }
        }
        if self.goals.len() != self.states.len() {
            out.push(Diagnostic::new(
                Rule::Structure,
                "goals",
                "goal mask has wrong length",
            ));
        }
    }

    pub fn state_name(&self, s: usize) -> String {
        self.states.get(s).cloned().unwrap_or_else(|| format!("#{s}"))
    }

    pub fn action_name(&self, a: usize) -> String {
        self.actions.get(a).cloned().unwrap_or_else(|| format!("#{a}"))
    }
}

/// Available action `action` at some state of a concrete POMDP.
#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub action: usize,
    pub transitions: Distribution,
    pub reward: f64,
}

/// A concrete POMDP with per-state available actions.
#[derive(Clone, Debug, PartialEq)]
pub struct Pomdp {
    pub skeleton: Skeleton,
    /// Per state, the available actions sorted by action id.
    pub choices: Vec<Vec<Choice>>,
}

impl Pomdp {
    pub fn state_count(&self) -> usize {
        self.skeleton.states.len()
    }

    pub fn choice(&self, s: usize, a: usize) -> Option<&Choice> {
        self.choices[s].iter().find(|c| c.action == a)
    }

    pub fn controller_space(&self) -> ControllerSpace {
        ControllerSpace::from_availability(
            &self.skeleton,
            self.choices
                .iter()
                .map(|cs| cs.iter().map(|c| c.action).collect()),
        )
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        self.skeleton.validate_into(&mut out);
        if !out.is_empty() {
            return out;
        }
        if self.choices.len() != self.state_count() {
            out.push(Diagnostic::new(
                Rule::Structure,
                "choices",
                "choice table has wrong length",
            ));
            return out;
        }
        for (s, cs) in self.choices.iter().enumerate() {
            if cs.is_empty() {
                out.push(Diagnostic::new(
                    Rule::NoAvailableAction,
                    self.skeleton.state_name(s),
                    "state has no available action",
                ));
            }
            for c in cs {
                let loc = format!(
                    "({}, {})",
                    self.skeleton.state_name(s),
                    self.skeleton.action_name(c.action)
                );
                check_distribution(&self.skeleton, &c.transitions, &loc, &mut out);
                if self.skeleton.goals[s] {
                    check_goal_choice(&self.skeleton, s, &c.transitions, c.reward, &loc, &mut out);
                }
            }
        }
        check_observation_actions(
            &self.skeleton,
            self.choices
                .iter()
                .map(|cs| cs.iter().map(|c| c.action).collect()),
            &mut out,
        );
        out
    }
}

/// A named finite-domain parameter of a family.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hole {
    pub name: String,
    pub options: Vec<String>,
}

/// Total hole assignment: one chosen option per hole, in hole order. Total
/// assignments are the instance indices of a family.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn options(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, o) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{o}")?;
        }
        write!(f, ")")
    }
}

/// Partial hole assignment, stored as `(hole, option)` pairs sorted by hole.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Guard(Vec<(usize, usize)>);

impl Guard {
    pub fn empty() -> Self {
        Guard(Vec::new())
    }

    /// Builds a guard from pairs; later duplicates of a hole override earlier ones.
    pub fn new(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let map: BTreeMap<usize, usize> = pairs.into_iter().collect();
        Guard(map.into_iter().collect())
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn option_for(&self, hole: usize) -> Option<usize> {
        self.0
            .binary_search_by_key(&hole, |&(h, _)| h)
            .ok()
            .map(|i| self.0[i].1)
    }

    pub fn matches(&self, assignment: &Assignment) -> bool {
        self.0
            .iter()
            .all(|&(h, o)| assignment.0.get(h).copied() == Some(o))
    }

    /// Whether some total assignment satisfies both guards.
    pub fn overlaps(&self, other: &Guard) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            let (h1, o1) = self.0[i];
            let (h2, o2) = other.0[j];
            match h1.cmp(&h2) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    if o1 != o2 {
                        return false;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        true
    }

    /// Number of total assignments matching the guard.
    pub fn match_count(&self, holes: &[Hole]) -> u128 {
        holes
            .iter()
            .enumerate()
            .filter(|(h, _)| self.option_for(*h).is_none())
            .fold(1u128, |acc, (_, hole)| {
                acc.saturating_mul(hole.options.len() as u128)
            })
    }
}

/// One equivalence class of instances on a (state, action) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub guard: Guard,
    pub transitions: Distribution,
    pub reward: f64,
}

/// The variants of one available action at one state.
#[derive(Clone, Debug, PartialEq)]
pub struct Command {
    pub action: usize,
    pub variants: Vec<Variant>,
}

impl Command {
    /// Index of the variant used by `assignment`.
    pub fn variant_for(&self, assignment: &Assignment) -> Option<usize> {
        self.variants.iter().position(|v| v.guard.matches(assignment))
    }
}

/// Hidden-model POMDP: a finite family of POMDPs indexed by total hole
/// assignments.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFamily {
    pub skeleton: Skeleton,
    pub holes: Vec<Hole>,
    /// Per state, the available commands sorted by action id.
    pub commands: Vec<Vec<Command>>,
}

impl ModelFamily {
    pub fn state_count(&self) -> usize {
        self.skeleton.states.len()
    }

    pub fn objective(&self) -> Objective {
        self.skeleton.objective
    }

    pub fn hole_sizes(&self) -> Vec<usize> {
        self.holes.iter().map(|h| h.options.len()).collect()
    }

    /// Product of the hole-domain sizes (saturating).
    pub fn instance_count(&self) -> u128 {
        self.holes
            .iter()
            .fold(1u128, |acc, h| acc.saturating_mul(h.options.len() as u128))
    }

    /// All total assignments in lexicographic order.
    pub fn enumerate_indices(&self) -> IndexIter {
        IndexIter::new(self.hole_sizes())
    }

    pub fn quotient(&self) -> QuotientView<'_> {
        QuotientView { family: self }
    }

    pub fn controller_space(&self) -> ControllerSpace {
        ControllerSpace::from_availability(
            &self.skeleton,
            self.commands
                .iter()
                .map(|cs| cs.iter().map(|c| c.action).collect()),
        )
    }

    pub fn hole_index(&self, name: &str) -> Option<usize> {
        self.holes.iter().position(|h| h.name == name)
    }

    pub fn check_assignment(&self, assignment: &Assignment) -> Result<()> {
        if assignment.0.len() != self.holes.len() {
            return Err(Error::input(format!(
                "assignment {} has {} entries but the family has {} holes",
                assignment,
                assignment.0.len(),
                self.holes.len()
            )));
        }
        for (h, (&o, hole)) in assignment.0.iter().zip(&self.holes).enumerate() {
            if o >= hole.options.len() {
                return Err(Error::input(format!(
                    "option {o} out of range for hole `{}` (#{h}, {} options)",
                    hole.name,
                    hole.options.len()
                )));
            }
        }
        Ok(())
    }

    /// Resolves a `hole name -> option label` map into a total assignment.
    pub fn assignment_from_names(&self, map: &BTreeMap<String, String>) -> Result<Assignment> {
        for name in map.keys() {
            if self.hole_index(name).is_none() {
                return Err(Error::input(format!("unknown hole `{name}`")));
            }
        }
        let mut options = Vec::with_capacity(self.holes.len());
        for hole in &self.holes {
            let label = map
                .get(&hole.name)
                .ok_or_else(|| Error::input(format!("hole `{}` not assigned", hole.name)))?;
            let o = hole
                .options
                .iter()
                .position(|x| x == label)
                .ok_or_else(|| Error::input(format!("hole `{}` has no option `{label}`", hole.name)))?;
            options.push(o);
        }
        Ok(Assignment(options))
    }

    pub fn assignment_names(&self, assignment: &Assignment) -> BTreeMap<String, String> {
        self.holes
            .iter()
            .zip(&assignment.0)
            .map(|(h, &o)| (h.name.clone(), h.options[o].clone()))
            .collect()
    }

    /// Compact `hole=option;hole=option` rendering used in CSV output.
    pub fn format_assignment(&self, assignment: &Assignment) -> String {
        self.holes
            .iter()
            .zip(&assignment.0)
            .map(|(h, &o)| format!("{}={}", h.name, h.options[o]))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// The POMDP selected by a total assignment.
    pub fn instantiate(&self, assignment: &Assignment) -> Result<Pomdp> {
        self.check_assignment(assignment)?;
        let mut choices = Vec::with_capacity(self.state_count());
        for (s, cmds) in self.commands.iter().enumerate() {
            let mut row = Vec::with_capacity(cmds.len());
            for cmd in cmds {
                let v = cmd.variant_for(assignment).ok_or_else(|| {
                    Error::input(format!(
                        "no variant of ({}, {}) matches {}",
                        self.skeleton.state_name(s),
                        self.skeleton.action_name(cmd.action),
                        assignment
                    ))
                })?;
                let variant = &cmd.variants[v];
                row.push(Choice {
                    action: cmd.action,
                    transitions: variant.transitions.clone(),
                    reward: variant.reward,
                });
            }
            choices.push(row);
        }
        Ok(Pomdp {
            skeleton: self.skeleton.clone(),
            choices,
        })
    }

    /// Checks every structural invariant; an empty list means the family is valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let sk = &self.skeleton;
        let mut out = Vec::new();
        sk.validate_into(&mut out);
        if !out.is_empty() {
            return out;
        }
        let mut seen = BTreeMap::new();
        for (h, hole) in self.holes.iter().enumerate() {
            if hole.options.is_empty() {
                out.push(Diagnostic::new(
                    Rule::HoleDomain,
                    format!("hole `{}`", hole.name),
                    "hole has an empty domain",
                ));
            }
            if let Some(prev) = seen.insert(hole.name.clone(), h) {
                out.push(Diagnostic::new(
                    Rule::HoleDomain,
                    format!("hole `{}`", hole.name),
                    format!("duplicate hole name (also hole #{prev})"),
                ));
            }
        }
        if self.commands.len() != sk.state_count() {
            out.push(Diagnostic::new(
                Rule::Structure,
                "commands",
                "command table has wrong length",
            ));
            return out;
        }
        let total = self.instance_count();
        for (s, cmds) in self.commands.iter().enumerate() {
            if cmds.is_empty() {
                out.push(Diagnostic::new(
                    Rule::NoAvailableAction,
                    sk.state_name(s),
                    "state has no available action",
                ));
            }
            for (k, cmd) in cmds.iter().enumerate() {
                let loc = format!("({}, {})", sk.state_name(s), sk.action_name(cmd.action));
                if cmd.action >= sk.actions.len() {
                    out.push(Diagnostic::new(Rule::Structure, &loc, "action out of range"));
                    continue;
                }
                if cmds[..k].iter().any(|c| c.action == cmd.action) {
                    out.push(Diagnostic::new(Rule::Structure, &loc, "action listed twice"));
                }
                if cmd.variants.is_empty() {
                    out.push(Diagnostic::new(
                        Rule::GuardPartition,
                        &loc,
                        "command has no variants",
                    ));
                    continue;
                }
                let mut guards_ok = true;
                for variant in &cmd.variants {
                    for &(h, o) in variant.guard.pairs() {
                        if h >= self.holes.len() {
                            out.push(Diagnostic::new(
                                Rule::GuardHole,
                                &loc,
                                format!("guard references unknown hole #{h}"),
                            ));
                            guards_ok = false;
                        } else if o >= self.holes[h].options.len() {
                            out.push(Diagnostic::new(
                                Rule::GuardHole,
                                &loc,
                                format!("guard option {o} out of range for hole `{}`", self.holes[h].name),
                            ));
                            guards_ok = false;
                        }
                    }
                    check_distribution(sk, &variant.transitions, &loc, &mut out);
                    if sk.goals[s] {
                        check_goal_choice(sk, s, &variant.transitions, variant.reward, &loc, &mut out);
                    }
                }
                if cmd.variants.len() == 1 && !cmd.variants[0].guard.is_empty() {
                    out.push(Diagnostic::new(
                        Rule::GuardPartition,
                        &loc,
                        "a single variant must have the empty guard",
                    ));
                }
                if !guards_ok {
                    continue;
                }
                for i in 0..cmd.variants.len() {
                    for j in i + 1..cmd.variants.len() {
                        if cmd.variants[i].guard.overlaps(&cmd.variants[j].guard) {
                            out.push(Diagnostic::new(
                                Rule::GuardPartition,
                                &loc,
                                format!("guard partition overlapping at {loc}: variants {i} and {j}"),
                            ));
                        }
                    }
                }
                let covered = cmd.variants.iter().fold(0u128, |acc, v| {
                    acc.saturating_add(v.guard.match_count(&self.holes))
                });
                if covered < total {
                    out.push(Diagnostic::new(
                        Rule::GuardPartition,
                        &loc,
                        format!("guard partition incomplete at {loc}: guards cover {covered} of {total} instances"),
                    ));
                } else if covered > total {
                    out.push(Diagnostic::new(
                        Rule::GuardPartition,
                        &loc,
                        format!("guard partition overcounts at {loc}: guards cover {covered} of {total} instances"),
                    ));
                }
            }
        }
        check_observation_actions(
            sk,
            self.commands
                .iter()
                .map(|cs| cs.iter().map(|c| c.action).collect()),
            &mut out,
        );
        out
    }

    /// Fails with a validation error listing all diagnostics.
    pub fn ensure_valid(&self) -> Result<()> {
        let diags = self.validate();
        if diags.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(diags.iter().map(|d| d.to_string()).collect()))
        }
    }

    /// Disjoint union of the listed instances behind a fresh initial state
    /// that picks a member uniformly through a single dummy action.
    pub fn build_union_pomdp(&self, indices: &[Assignment]) -> Result<Pomdp> {
        if indices.is_empty() {
            return Err(Error::input("union POMDP needs at least one index"));
        }
        let members = indices
            .iter()
            .map(|i| self.instantiate(i))
            .collect::<Result<Vec<_>>>()?;
        let sk = &self.skeleton;
        let n = sk.state_count();
        let fresh_obs = sk.observations.len();
        let fresh_action = sk.actions.len();
        let mut states = Vec::with_capacity(n * members.len() + 1);
        let mut obs_of = Vec::with_capacity(states.capacity());
        let mut goals = Vec::with_capacity(states.capacity());
        let mut choices = Vec::with_capacity(states.capacity());
        for (m, member) in members.iter().enumerate() {
            let offset = m * n;
            for s in 0..n {
                states.push(format!("m{m}::{}", sk.states[s]));
                obs_of.push(sk.obs_of[s]);
                goals.push(sk.goals[s]);
                choices.push(
                    member.choices[s]
                        .iter()
                        .map(|c| Choice {
                            action: c.action,
                            transitions: c.transitions.iter().map(|&(t, p)| (t + offset, p)).collect(),
                            reward: c.reward,
                        })
                        .collect(),
                );
            }
        }
        let init = states.len();
        let p = 1.0 / members.len() as f64;
        states.push("union::init".to_string());
        obs_of.push(fresh_obs);
        goals.push(false);
        choices.push(vec![Choice {
            action: fresh_action,
            transitions: (0..members.len()).map(|m| (m * n + sk.initial, p)).collect(),
            reward: 0.0,
        }]);
        let mut actions = sk.actions.clone();
        actions.push("union::pick".to_string());
        let mut observations = sk.observations.clone();
        observations.push("union::init".to_string());
        Ok(Pomdp {
            skeleton: Skeleton {
                name: format!("{}-union", sk.name),
                objective: sk.objective,
                states,
                initial: init,
                actions,
                observations,
                obs_of,
                goals,
            },
            choices,
        })
    }

    /// Encodes a discount factor by redirecting `1 - gamma` of every
    /// transition into a fresh absorbing goal state.
    pub fn discounted(&self, gamma: f64) -> Result<ModelFamily> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::input(format!("discount factor {gamma} not in (0, 1)")));
        }
        let mut out = self.clone();
        let sink = out.skeleton.states.len();
        let sink_obs = out.skeleton.observations.len();
        out.skeleton.states.push("discount::sink".into());
        out.skeleton.observations.push("discount::sink".into());
        out.skeleton.obs_of.push(sink_obs);
        out.skeleton.goals.push(true);
        for (s, cmds) in out.commands.iter_mut().enumerate() {
            if self.skeleton.goals[s] {
                continue;
            }
            for cmd in cmds {
                for v in &mut cmd.variants {
                    for entry in &mut v.transitions {
                        entry.1 *= gamma;
                    }
                    v.transitions.push((sink, 1.0 - gamma));
                }
            }
        }
        out.commands.push(vec![Command {
            action: 0,
            variants: vec![Variant {
                guard: Guard::empty(),
                transitions: vec![(sink, 1.0)],
                reward: 0.0,
            }],
        }]);
        Ok(out)
    }
}

/// Read-only view of a family as a quotient POMDP: per (state, action) the
/// variants act as the action-variants over classes of instances.
#[derive(Clone, Copy)]
pub struct QuotientView<'a> {
    family: &'a ModelFamily,
}

impl<'a> QuotientView<'a> {
    pub fn family(&self) -> &'a ModelFamily {
        self.family
    }

    pub fn variants(&self, state: usize, action: usize) -> &'a [Variant] {
        self.family.commands[state]
            .iter()
            .find(|c| c.action == action)
            .map(|c| c.variants.as_slice())
            .unwrap_or(&[])
    }

    /// The variant whose index set contains `assignment`.
    pub fn class_of(&self, state: usize, action: usize, assignment: &Assignment) -> Option<usize> {
        self.variants(state, action)
            .iter()
            .position(|v| v.guard.matches(assignment))
    }

    /// Size of a variant's index set.
    pub fn class_size(&self, state: usize, action: usize, variant: usize) -> u128 {
        self.variants(state, action)[variant]
            .guard
            .match_count(&self.family.holes)
    }
}

/// Odometer over all total assignments, last hole fastest.
#[derive(Clone, Debug)]
pub struct IndexIter {
    sizes: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl IndexIter {
    pub fn new(sizes: Vec<usize>) -> Self {
        let next = if sizes.iter().any(|&d| d == 0) {
            None
        } else {
            Some(vec![0; sizes.len()])
        };
        IndexIter { sizes, next }
    }
}

impl Iterator for IndexIter {
    type Item = Assignment;

    fn next(&mut self) -> Option<Assignment> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut pos = succ.len();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            succ[pos] += 1;
            if succ[pos] < self.sizes[pos] {
                self.next = Some(succ);
                break;
            }
            succ[pos] = 0;
        }
        Some(Assignment(current))
    }
}

/// The observation/action interface a controller must fit: per observation
/// the set of actions available at the states carrying it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerSpace {
    pub observations: usize,
    pub actions: usize,
    pub actions_at: Vec<Vec<usize>>,
}

impl ControllerSpace {
    fn from_availability(sk: &Skeleton, avail: impl Iterator<Item = Vec<usize>>) -> Self {
        let mut actions_at: Vec<Option<Vec<usize>>> = vec![None; sk.observations.len()];
        for (s, acts) in avail.enumerate() {
            let z = sk.obs_of[s];
            let slot = &mut actions_at[z];
            match slot {
                None => *slot = Some(acts),
                Some(existing) => {
                    for a in acts {
                        if !existing.contains(&a) {
                            existing.push(a);
                        }
                    }
                    existing.sort_unstable();
                }
            }
        }
        ControllerSpace {
            observations: sk.observations.len(),
            actions: sk.actions.len(),
            actions_at: actions_at.into_iter().map(Option::unwrap_or_default).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    Structure,
    ObservationFunction,
    NoAvailableAction,
    DistributionNotNormalized,
    NegativeProbability,
    TargetOutOfRange,
    GoalNotAbsorbing,
    GoalReward,
    HoleDomain,
    GuardHole,
    GuardPartition,
    ObservationActions,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Structure => "structure",
            Rule::ObservationFunction => "observation function",
            Rule::NoAvailableAction => "no available action",
            Rule::DistributionNotNormalized => "distribution not normalized",
            Rule::NegativeProbability => "negative probability",
            Rule::TargetOutOfRange => "transition target out of range",
            Rule::GoalNotAbsorbing => "goal not absorbing",
            Rule::GoalReward => "goal reward nonzero",
            Rule::HoleDomain => "hole domain",
            Rule::GuardHole => "guard references invalid hole",
            Rule::GuardPartition => "guard partition",
            Rule::ObservationActions => "observation action mismatch",
        }
    }
}

/// A violated invariant with its location.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub rule: Rule,
    pub location: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(rule: Rule, location: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            rule,
            location: location.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.rule.as_str(), self.location, self.message)
    }
}

fn check_distribution(sk: &Skeleton, dist: &Distribution, loc: &str, out: &mut Vec<Diagnostic>) {
    let mut sum = 0.0;
    for &(t, p) in dist {
        if t >= sk.state_count() {
            out.push(Diagnostic::new(
                Rule::TargetOutOfRange,
                loc,
                format!("target {t} out of range"),
            ));
        }
        if !(p >= 0.0) || !p.is_finite() {
            out.push(Diagnostic::new(
                Rule::NegativeProbability,
                loc,
                format!(
                    "probability {p} to {} is not a nonnegative number",
                    sk.state_name(t)
                ),
            ));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        out.push(Diagnostic::new(
            Rule::DistributionNotNormalized,
            loc,
            format!("distribution not normalized: sums to {sum}"),
        ));
    }
}

fn check_goal_choice(
    sk: &Skeleton,
    s: usize,
    dist: &Distribution,
    reward: f64,
    loc: &str,
    out: &mut Vec<Diagnostic>,
) {
    let self_loop: f64 = dist.iter().filter(|&&(t, _)| t == s).map(|&(_, p)| p).sum();
    if (self_loop - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        out.push(Diagnostic::new(
            Rule::GoalNotAbsorbing,
            loc,
            format!(
                "goal state {} must self-loop with probability 1",
                sk.state_name(s)
            ),
        ));
    }
    if reward != 0.0 {
        out.push(Diagnostic::new(
            Rule::GoalReward,
            loc,
            format!("goal state {} collects reward {reward}", sk.state_name(s)),
        ));
    }
}

fn check_observation_actions(
    sk: &Skeleton,
    avail: impl Iterator<Item = Vec<usize>>,
    out: &mut Vec<Diagnostic>,
) {
    let mut first: Vec<Option<(usize, Vec<usize>)>> = vec![None; sk.observations.len()];
    for (s, mut acts) in avail.enumerate() {
        acts.sort_unstable();
        let z = sk.obs_of[s];
        match &first[z] {
            None => first[z] = Some((s, acts)),
            Some((s0, a0)) => {
                if *a0 != acts {
                    out.push(Diagnostic::new(
                        Rule::ObservationActions,
                        sk.state_name(s),
                        format!(
                            "available actions differ from state {} sharing observation `{}`",
                            sk.state_name(*s0),
                            sk.observations[z]
                        ),
                    ));
                }
            }
        }
    }
}
