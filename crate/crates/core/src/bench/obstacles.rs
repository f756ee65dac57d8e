//! Grid worlds with hidden obstacle positions.
//!
//! Cells are `(x, y)` with `y = 0` the southern row. Every move has a chance
//! `slip` of going one cell south instead; walls clamp. The agent sees
//! `yellow` in any row holding an obstacle, `white` elsewhere. Since
//! observations are fixed per state, every cell exists in two copies
//! distinguished by that row flag, and the holes pick which copy a move
//! lands in. Leaving an obstacle cell costs `penalty` on top of the unit
//! step cost, so the expected penalty counts obstacle visits.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{Command, Guard, Hole, ModelFamily, Objective, Skeleton, Variant};

pub type Cell = (usize, usize);

const MOVES: [(&str, i64, i64); 4] = [("up", 0, 1), ("down", 0, -1), ("left", -1, 0), ("right", 1, 0)];

#[derive(Clone, Debug, PartialEq)]
pub struct ObstaclesSpec {
    pub width: usize,
    pub height: usize,
    pub start: Cell,
    /// Candidate cells per obstacle; one hole per obstacle.
    pub candidates: Vec<Vec<Cell>>,
    pub goals: Vec<Cell>,
    pub slip: f64,
    pub penalty: f64,
}

impl ObstaclesSpec {
    /// Square `n x n` grid, start in the south-west corner, goal column on
    /// the east edge, no obstacles yet.
    pub fn square(n: usize) -> Self {
        ObstaclesSpec {
            width: n,
            height: n,
            start: (0, 0),
            candidates: Vec::new(),
            goals: (0..n).map(|y| (n.saturating_sub(1), y)).collect(),
            slip: 0.1,
            penalty: 100.0,
        }
    }

    /// One obstacle that may sit in any of three cells.
    pub fn three_locations() -> Self {
        ObstaclesSpec {
            width: 3,
            height: 3,
            start: (0, 0),
            candidates: vec![vec![(1, 2), (2, 0), (2, 1)]],
            goals: vec![(2, 2)],
            slip: 0.1,
            penalty: 100.0,
        }
    }

    /// Three obstacles on a 5 x 5 grid, four candidate cells each (64
    /// instances).
    pub fn three_obstacles() -> Self {
        ObstaclesSpec {
            width: 5,
            height: 5,
            start: (0, 0),
            candidates: vec![
                vec![(1, 1), (2, 1), (3, 1), (4, 1)],
                vec![(0, 2), (1, 2), (2, 2), (3, 2)],
                vec![(1, 3), (2, 3), (3, 3), (4, 3)],
            ],
            goals: vec![(4, 4)],
            slip: 0.1,
            penalty: 100.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::input("grid must be at least 2 x 2"));
        }
        if !(0.0..1.0).contains(&self.slip) {
            return Err(Error::input("slip probability must lie in [0, 1)"));
        }
        if !self.penalty.is_finite() {
            return Err(Error::input("penalty must be finite"));
        }
        if self.goals.is_empty() {
            return Err(Error::input("at least one goal cell is required"));
        }
        let inside = |c: &Cell| c.0 < self.width && c.1 < self.height;
        let goals: BTreeSet<Cell> = self.goals.iter().copied().collect();
        for c in self.goals.iter().chain([&self.start]) {
            if !inside(c) {
                return Err(Error::input(format!("cell {c:?} lies outside the grid")));
            }
        }
        if goals.contains(&self.start) {
            return Err(Error::input("start cell is a goal cell"));
        }
        for (h, cands) in self.candidates.iter().enumerate() {
            if cands.is_empty() {
                return Err(Error::input(format!("obstacle {h} has no candidate cells")));
            }
            let mut seen = BTreeSet::new();
            for c in cands {
                if !inside(c) {
                    return Err(Error::input(format!("candidate {c:?} lies outside the grid")));
                }
                if goals.contains(c) {
                    return Err(Error::input(format!("candidate {c:?} overlaps a goal cell")));
                }
                if *c == self.start {
                    return Err(Error::input(format!("candidate {c:?} is the start cell")));
                }
                if !seen.insert(*c) {
                    return Err(Error::input(format!("obstacle {h} lists {c:?} twice")));
                }
            }
        }
        Ok(())
    }

    fn hole_name(&self, h: usize) -> String {
        if self.candidates.len() == 1 {
            "obstacle".into()
        } else {
            format!("obstacle{h}")
        }
    }
}

fn cell_name((x, y): Cell) -> String {
    format!("x{x}y{y}")
}

/// Successor cells of a move with their probabilities, merged.
fn outcomes(spec: &ObstaclesSpec, (x, y): Cell, dx: i64, dy: i64) -> Vec<(Cell, f64)> {
    let clamp = |x: i64, y: i64| {
        (
            x.clamp(0, spec.width as i64 - 1) as usize,
            y.clamp(0, spec.height as i64 - 1) as usize,
        )
    };
    let intended = clamp(x as i64 + dx, y as i64 + dy);
    let slipped = clamp(x as i64, y as i64 - 1);
    let mut out = vec![(intended, 1.0 - spec.slip)];
    if spec.slip > 0.0 {
        if slipped == intended {
            out[0].1 = 1.0;
        } else {
            out.push((slipped, spec.slip));
        }
    }
    out
}

struct Layout<'a> {
    spec: &'a ObstaclesSpec,
    goals: BTreeSet<Cell>,
}

impl Layout<'_> {
    fn row_has_obstacle(&self, y: usize, choice: &[usize]) -> bool {
        choice
            .iter()
            .zip(&self.spec.candidates)
            .any(|(&o, cands)| cands[o].1 == y)
    }

    fn is_obstacle(&self, c: Cell, choice: &[usize]) -> bool {
        choice
            .iter()
            .zip(&self.spec.candidates)
            .any(|(&o, cands)| cands[o] == c)
    }

    /// Row flags that occur in row `y` over all obstacle placements.
    fn flags(&self, y: usize) -> Vec<bool> {
        let cands = &self.spec.candidates;
        let mut out = Vec::with_capacity(2);
        if cands.iter().all(|c| c.iter().any(|c| c.1 != y)) {
            out.push(false);
        }
        if cands.iter().any(|c| c.iter().any(|c| c.1 == y)) {
            out.push(true);
        }
        out
    }
}

pub fn gen_obstacles(spec: &ObstaclesSpec) -> Result<ModelFamily> {
    spec.validate()?;
    let layout = Layout {
        spec,
        goals: spec.goals.iter().copied().collect(),
    };
    let mut states = vec!["init".to_string()];
    let mut obs_of = vec![0usize];
    let mut index = std::collections::HashMap::new();
    for y in 0..spec.height {
        let flags = layout.flags(y);
        for x in 0..spec.width {
            if layout.goals.contains(&(x, y)) {
                continue;
            }
            for &f in &flags {
                index.insert((x, y, f), states.len());
                states.push(if f {
                    format!("{}!", cell_name((x, y)))
                } else {
                    cell_name((x, y))
                });
                obs_of.push(if f { 2 } else { 1 });
            }
        }
    }
    let goal = states.len();
    states.push("goal".into());
    obs_of.push(3);

    let holes: Vec<Hole> = spec
        .candidates
        .iter()
        .enumerate()
        .map(|(h, cands)| Hole {
            name: spec.hole_name(h),
            options: cands.iter().map(|&c| cell_name(c)).collect(),
        })
        .collect();
    let sizes: Vec<usize> = holes.iter().map(|h| h.options.len()).collect();

    let target = |c: Cell, choice: &[usize]| -> usize {
        if layout.goals.contains(&c) {
            goal
        } else {
            index[&(c.0, c.1, layout.row_has_obstacle(c.1, choice))]
        }
    };

    let mut commands = vec![Vec::new(); states.len()];
    for (a, _) in MOVES.iter().enumerate() {
        commands[0].push(guarded(
            &sizes,
            |choice| (vec![(target(spec.start, choice), 1.0)], 0.0),
            a,
        ));
        commands[goal].push(Command {
            action: a,
            variants: vec![Variant {
                guard: Guard::empty(),
                transitions: vec![(goal, 1.0)],
                reward: 0.0,
            }],
        });
    }
    for (&(x, y, f), &s) in &index {
        for (a, &(_, dx, dy)) in MOVES.iter().enumerate() {
            let outs = outcomes(spec, (x, y), dx, dy);
            commands[s].push(guarded(
                &sizes,
                |choice| {
                    let mut row: Vec<(usize, f64)> = Vec::with_capacity(outs.len());
                    for &(c, p) in &outs {
                        let t = target(c, choice);
                        match row.iter_mut().find(|e| e.0 == t) {
                            Some(e) => e.1 += p,
                            None => row.push((t, p)),
                        }
                    }
                    row.sort_by_key(|e| e.0);
                    let hit = f && layout.is_obstacle((x, y), choice);
                    (row, 1.0 + if hit { spec.penalty } else { 0.0 })
                },
                a,
            ));
        }
    }

    let family = ModelFamily {
        skeleton: Skeleton {
            name: format!("obstacles-{}x{}", spec.width, spec.height),
            objective: Objective::Minimize,
            states,
            initial: 0,
            actions: MOVES.iter().map(|m| m.0.to_string()).collect(),
            observations: ["start", "white", "yellow", "green"].map(String::from).to_vec(),
            obs_of,
            goals: (0..=goal).map(|s| s == goal).collect(),
        },
        holes,
        commands,
    };
    family.ensure_valid()?;
    Ok(family)
}

type Outcome = (Vec<(usize, f64)>, f64);

/// Builds a command whose variants are keyed on exactly the holes the
/// outcome depends on.
fn guarded(sizes: &[usize], outcome: impl Fn(&[usize]) -> Outcome, action: usize) -> Command {
    let mut relevant: Vec<usize> = (0..sizes.len()).collect();
    let all: Vec<Vec<usize>> = crate::model::IndexIter::new(sizes.to_vec())
        .map(|a| a.0)
        .collect();
    let table: Vec<Outcome> = all.iter().map(|c| outcome(c)).collect();
    // A hole is irrelevant when changing only its option never changes the
    // outcome.
    relevant.retain(|&h| {
        all.iter().zip(&table).any(|(c, out)| {
            (0..sizes[h]).any(|o| {
                let mut other = c.clone();
                other[h] = o;
                let k = all.binary_search(&other).expect("enumeration is sorted");
                table[k] != *out
            })
        })
    });
    let mut variants = Vec::new();
    let mut seen = BTreeSet::new();
    for (c, out) in all.iter().zip(&table) {
        let key: Vec<usize> = relevant.iter().map(|&h| c[h]).collect();
        if seen.insert(key.clone()) {
            variants.push(Variant {
                guard: Guard::new(relevant.iter().copied().zip(key)),
                transitions: out.0.clone(),
                reward: out.1,
            });
        }
    }
    Command { action, variants }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Assignment;

    #[test]
    fn three_locations_has_three_instances() {
        let fam = gen_obstacles(&ObstaclesSpec::three_locations()).unwrap();
        assert_eq!(fam.instance_count(), 3);
        assert_eq!(fam.skeleton.objective, Objective::Minimize);
    }

    #[test]
    fn overlapping_goal_is_rejected() {
        let mut spec = ObstaclesSpec::three_locations();
        spec.candidates[0].push(spec.goals[0]);
        assert!(gen_obstacles(&spec).unwrap_err().is_input_error());
    }

    #[test]
    fn penalty_sits_on_the_chosen_cell() {
        let spec = ObstaclesSpec::three_locations();
        let fam = gen_obstacles(&spec).unwrap();
        for (o, &cell) in spec.candidates[0].iter().enumerate() {
            let pomdp = fam.instantiate(&Assignment(vec![o])).unwrap();
            for (s, label) in fam.skeleton.states.iter().enumerate() {
                let penalized = pomdp.choices[s].iter().any(|c| c.reward > 1.0);
                assert_eq!(penalized, *label == format!("{}!", cell_name(cell)), "{label}");
            }
        }
    }

    #[test]
    fn yellow_marks_the_obstacle_row() {
        let spec = ObstaclesSpec::three_locations();
        let fam = gen_obstacles(&spec).unwrap();
        let yellow = fam
            .skeleton
            .observations
            .iter()
            .position(|o| o == "yellow")
            .unwrap();
        for (o, &(_, row)) in spec.candidates[0].iter().enumerate() {
            let pomdp = fam.instantiate(&Assignment(vec![o])).unwrap();
            for choices in &pomdp.choices {
                for c in choices {
                    for &(t, _) in &c.transitions {
                        let label = &fam.skeleton.states[t];
                        if let Some(rest) = label.strip_prefix('x') {
                            let y: usize = rest
                                .split('y')
                                .nth(1)
                                .unwrap()
                                .trim_end_matches('!')
                                .parse()
                                .unwrap();
                            assert_eq!(fam.skeleton.obs_of[t] == yellow, y == row, "{label}");
                        }
                    }
                }
            }
        }
    }
}
