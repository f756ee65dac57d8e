//! Product constructions of a model with an FSC: the induced Markov chain of
//! one POMDP and the induced quotient MDP of a family restricted to a box.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::eval::Subfamily;
use crate::fsc::Fsc;
use crate::model::{ModelFamily, Pomdp, Skeleton};

const UNSEEN: usize = usize::MAX;

/// Reachable fragment of the product of a POMDP and an FSC. Product state 0
/// is `(s0, n0)`.
#[derive(Clone, Debug)]
pub struct InducedChain {
    pub nodes: usize,
    /// `(s, n)` per product state.
    pub states: Vec<(usize, usize)>,
    pub goal: Vec<bool>,
    /// Merged sparse rows sorted by target; empty for goal states.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub reward: Vec<f64>,
    /// Whether every reachable product state reaches the goal set.
    pub proper: bool,
    lookup: Vec<usize>,
}

impl InducedChain {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Product index of `(s, n)` if reachable.
    pub fn index_of(&self, s: usize, n: usize) -> Option<usize> {
        match self.lookup[s * self.nodes + n] {
            UNSEEN => None,
            i => Some(i),
        }
    }
}

fn check_dimensions(sk: &Skeleton, fsc: &Fsc) -> Result<()> {
    if fsc.observations != sk.observations.len() || fsc.actions != sk.actions.len() {
        return Err(Error::input(format!(
            "controller built for {} observations / {} actions, model has {} / {}",
            fsc.observations,
            fsc.actions,
            sk.observations.len(),
            sk.actions.len()
        )));
    }
    Ok(())
}

/// Sorts `(key, p)` entries by key and sums duplicates.
fn merge(entries: &mut Vec<(usize, f64)>) {
    entries.sort_by_key(|e| e.0);
    let mut w = 0;
    for r in 0..entries.len() {
        if w > 0 && entries[w - 1].0 == entries[r].0 {
            entries[w - 1].1 += entries[r].1;
        } else {
            entries[w] = entries[r];
            w += 1;
        }
    }
    entries.truncate(w);
}

/// Explores product states breadth-first. `expand` fills a row of
/// `(s' * N + n', p)` entries for a non-goal product state and returns its
/// reward.
fn explore<F>(
    sk: &Skeleton,
    nodes: usize,
    mut expand: F,
) -> Result<(Vec<(usize, usize)>, Vec<Vec<(usize, f64)>>, Vec<f64>, Vec<usize>)>
where
    F: FnMut(usize, usize, &mut Vec<(usize, f64)>) -> Result<f64>,
{
    let mut lookup = vec![UNSEEN; sk.state_count() * nodes];
    let mut states = vec![(sk.initial, 0)];
    lookup[sk.initial * nodes] = 0;
    let mut rows = Vec::new();
    let mut rewards = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    let mut scratch = Vec::new();
    while let Some(x) = queue.pop_front() {
        debug_assert_eq!(x, rows.len());
        let (s, n) = states[x];
        if sk.goals[s] {
            rows.push(Vec::new());
            rewards.push(0.0);
            continue;
        }
        scratch.clear();
        let r = expand(s, n, &mut scratch)?;
        merge(&mut scratch);
        let mut row = Vec::with_capacity(scratch.len());
        for &(key, p) in &scratch {
            if p == 0.0 {
                continue;
            }
            let id = if lookup[key] == UNSEEN {
                let id = states.len();
                lookup[key] = id;
                states.push((key / nodes, key % nodes));
                queue.push_back(id);
                id
            } else {
                lookup[key]
            };
            row.push((id, p));
        }
        rows.push(row);
        rewards.push(r);
    }
    Ok((states, rows, rewards, lookup))
}

/// Every state with an outgoing edge set reaches a goal state.
fn all_reach_goal(goal: &[bool], succ: impl Fn(usize, &mut dyn FnMut(usize))) -> bool {
    let n = goal.len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for x in 0..n {
        succ(x, &mut |y| preds[y].push(x));
    }
    let mut reach = goal.to_vec();
    let mut stack: Vec<usize> = (0..n).filter(|&x| goal[x]).collect();
    while let Some(y) = stack.pop() {
        for &x in &preds[y] {
            if !reach[x] {
                reach[x] = true;
                stack.push(x);
            }
        }
    }
    reach.iter().all(|&r| r)
}

/// The Markov chain induced by `fsc` on `pomdp`, pruned to reachable states.
pub fn induce_chain(pomdp: &Pomdp, fsc: &Fsc) -> Result<InducedChain> {
    let sk = &pomdp.skeleton;
    check_dimensions(sk, fsc)?;
    let nn = fsc.nodes;
    let (states, rows, reward, lookup) = explore(sk, nn, |s, n, out| {
        let z = sk.obs_of[s];
        let delta = fsc.delta_row(n, z);
        let eta = fsc.eta_row(n, z);
        let mut mass = 0.0;
        let mut r = 0.0;
        for c in &pomdp.choices[s] {
            let d = delta[c.action];
            if d == 0.0 {
                continue;
            }
            mass += d;
            r += d * c.reward;
            for &(t, p) in &c.transitions {
                for (m, &e) in eta.iter().enumerate() {
                    if e != 0.0 {
                        out.push((t * nn + m, e * d * p));
                    }
                }
            }
        }
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!(
                "controller puts mass {mass} on actions available at state {}",
                sk.state_name(s)
            )));
        }
        Ok(r)
    })?;
    let goal: Vec<bool> = states.iter().map(|&(s, _)| sk.goals[s]).collect();
    let proper = all_reach_goal(&goal, |x, f| rows[x].iter().for_each(|&(y, _)| f(y)));
    Ok(InducedChain {
        nodes: nn,
        states,
        goal,
        rows,
        reward,
        proper,
        lookup,
    })
}

/// One variant action at an intermediate state `(s, n, a)`.
#[derive(Clone, Debug)]
pub struct VariantAction {
    /// Index into the variant list of `(s, a)`.
    pub variant: usize,
    pub reward: f64,
    /// Distribution over product states `(s', n')`.
    pub row: Vec<(usize, f64)>,
}

/// Intermediate state `(s, n, a)` reached from `(s, n, ⊥)` with probability
/// `weight = δ(a | n, O(s))`.
#[derive(Clone, Debug)]
pub struct Site {
    pub state: usize,
    pub action: usize,
    pub weight: f64,
    pub choices: Vec<VariantAction>,
}

/// Induced quotient MDP of a family box and an FSC.
///
/// `states` are the `(s, n, ⊥)` states, which carry no reward and branch by
/// the action function into `sites`. Each site offers one action per variant
/// compatible with the box; the variant action collects the variant reward
/// and moves to `(s', n', ⊥)`.
#[derive(Clone, Debug)]
pub struct InducedQuotientMdp {
    pub nodes: usize,
    pub states: Vec<(usize, usize)>,
    pub goal: Vec<bool>,
    pub sites: Vec<Site>,
    /// Sites of each product state.
    pub sites_of: Vec<Vec<usize>>,
    lookup: Vec<usize>,
}

impl InducedQuotientMdp {
    pub fn index_of(&self, s: usize, n: usize) -> Option<usize> {
        match self.lookup[s * self.nodes + n] {
            UNSEEN => None,
            i => Some(i),
        }
    }

    /// Collapses a variant selection (one choice index per site) into a
    /// Markov chain over the `⊥` states: rows and rewards.
    pub fn collapse(&self, selection: &[usize]) -> (Vec<Vec<(usize, f64)>>, Vec<f64>) {
        let mut rows = vec![Vec::new(); self.states.len()];
        let mut rewards = vec![0.0; self.states.len()];
        for (x, sites) in self.sites_of.iter().enumerate() {
            let mut row = Vec::new();
            for &k in sites {
                let site = &self.sites[k];
                let choice = &site.choices[selection[k]];
                rewards[x] += site.weight * choice.reward;
                row.extend(choice.row.iter().map(|&(y, p)| (y, site.weight * p)));
            }
            merge(&mut row);
            rows[x] = row;
        }
        (rows, rewards)
    }

    /// Whether every selection reaches the goal set almost surely.
    ///
    /// Computes the greatest set of non-goal states in which every site has a
    /// choice that stays inside the set. It is nonempty exactly when some
    /// end component avoids the goal, and every state is reachable from the
    /// initial one.
    pub fn all_selections_proper(&self) -> bool {
        let mut stay: Vec<bool> = self.goal.iter().map(|g| !g).collect();
        loop {
            let mut changed = false;
            for x in 0..self.states.len() {
                if !stay[x] {
                    continue;
                }
                let ok = self.sites_of[x].iter().all(|&k| {
                    self.sites[k]
                        .choices
                        .iter()
                        .any(|c| c.row.iter().all(|&(y, _)| stay[y]))
                });
                if !ok {
                    stay[x] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        !stay.iter().any(|&s| s)
    }
}

/// Builds the induced quotient MDP of `family` restricted to `subfamily`.
pub fn induce_quotient_mdp(
    family: &ModelFamily,
    subfamily: &Subfamily,
    fsc: &Fsc,
) -> Result<InducedQuotientMdp> {
    let sk = &family.skeleton;
    check_dimensions(sk, fsc)?;
    let nn = fsc.nodes;
    let mut lookup = vec![UNSEEN; sk.state_count() * nn];
    let mut states = vec![(sk.initial, 0)];
    lookup[sk.initial * nn] = 0;
    let mut sites = Vec::new();
    let mut sites_of = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    let mut scratch = Vec::new();
    while let Some(x) = queue.pop_front() {
        let (s, n) = states[x];
        let mut mine = Vec::new();
        if !sk.goals[s] {
            let z = sk.obs_of[s];
            let delta = fsc.delta_row(n, z);
            let eta = fsc.eta_row(n, z);
            let mut mass = 0.0;
            for cmd in &family.commands[s] {
                let d = delta[cmd.action];
                if d == 0.0 {
                    continue;
                }
                mass += d;
                let mut choices = Vec::new();
                for (v, variant) in cmd.variants.iter().enumerate() {
                    if !subfamily.admits(&variant.guard) {
                        continue;
                    }
                    scratch.clear();
                    for &(t, p) in &variant.transitions {
                        for (m, &e) in eta.iter().enumerate() {
                            if e != 0.0 && p != 0.0 {
                                scratch.push((t * nn + m, e * p));
                            }
                        }
                    }
                    merge(&mut scratch);
                    let mut row = Vec::with_capacity(scratch.len());
                    for &(key, p) in &scratch {
                        let id = if lookup[key] == UNSEEN {
                            let id = states.len();
                            lookup[key] = id;
                            states.push((key / nn, key % nn));
                            queue.push_back(id);
                            id
                        } else {
                            lookup[key]
                        };
                        row.push((id, p));
                    }
                    choices.push(VariantAction {
                        variant: v,
                        reward: variant.reward,
                        row,
                    });
                }
                if choices.is_empty() {
                    return Err(Error::input(format!(
                        "no variant of ({}, {}) is compatible with the subfamily",
                        sk.state_name(s),
                        sk.action_name(cmd.action)
                    )));
                }
                mine.push(sites.len());
                sites.push(Site {
                    state: x,
                    action: cmd.action,
                    weight: d,
                    choices,
                });
            }
            if (mass - 1.0).abs() > 1e-9 {
                return Err(Error::input(format!(
                    "controller puts mass {mass} on actions available at state {}",
                    sk.state_name(s)
                )));
            }
        }
        sites_of.push(mine);
    }
    let goal = states.iter().map(|&(s, _)| sk.goals[s]).collect();
    Ok(InducedQuotientMdp {
        nodes: nn,
        states,
        goal,
        sites,
        sites_of,
        lookup,
    })
}
