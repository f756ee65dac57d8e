//! Random proper families for stress-testing the robust evaluator.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Command, Guard, Hole, IndexIter, ModelFamily, Objective, Skeleton, Variant};
use crate::sampling::{stream, Stream};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub hole_sizes: Vec<usize>,
    /// Non-goal states; one goal state is added.
    pub state_count: usize,
    pub observation_count: usize,
    pub action_count: usize,
    /// Largest number of holes a single command is keyed on.
    pub max_guard_holes: usize,
    /// Probability that a command ignores the holes altogether.
    pub shared_fraction: f64,
    pub objective: Option<Objective>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(hole_sizes: Vec<usize>, state_count: usize, seed: u64) -> Self {
        SyntheticSpec {
            hole_sizes,
            state_count,
            observation_count: 2,
            action_count: 2,
            max_guard_holes: 2,
            shared_fraction: 0.3,
            objective: None,
            seed,
        }
    }
}

/// Random family with `hole_sizes` holes over `state_count` states. Every
/// transition row sends at least a quarter of its mass to the goal, so all
/// instances are proper under every controller.
pub fn gen_synthetic_family(hole_sizes: &[usize], state_count: usize, seed: u64) -> Result<ModelFamily> {
    gen_synthetic(&SyntheticSpec::new(hole_sizes.to_vec(), state_count, seed))
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<ModelFamily> {
    if spec.state_count == 0 || spec.observation_count == 0 || spec.action_count == 0 {
        return Err(Error::input(
            "state, observation and action counts must be positive",
        ));
    }
    if spec.hole_sizes.contains(&0) {
        return Err(Error::input("hole domains must be nonempty"));
    }
    let mut rng = stream(spec.seed, Stream::Generator);
    let n = spec.state_count;
    let goal = n;
    let objective = spec.objective.unwrap_or_else(|| {
        if rng.random_bool(0.5) {
            Objective::Maximize
        } else {
            Objective::Minimize
        }
    });
    let zz = spec.observation_count.min(n);
    let mut obs_of: Vec<usize> = (0..n)
        .map(|s| if s < zz { s } else { rng.random_range(0..zz) })
        .collect();
    obs_of.push(zz);

    let holes: Vec<Hole> = spec
        .hole_sizes
        .iter()
        .enumerate()
        .map(|(h, &d)| Hole {
            name: format!("h{h}"),
            options: (0..d).map(|o| format!("o{o}")).collect(),
        })
        .collect();
    // Keying a command on a one-option hole would give a lone guarded variant.
    let hole_ids: Vec<usize> = (0..holes.len()).filter(|&h| spec.hole_sizes[h] > 1).collect();

    let random_variant = |rng: &mut rand_chacha::ChaCha8Rng, guard: Guard| {
        let exit = rng.random_range(0.25..0.75);
        let k = rng.random_range(1..=2.min(n));
        let mut weights: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        for _ in 0..k {
            let t = rng.random_range(0..n);
            let w = rng.random_range(0.1..1.0);
            match weights.iter_mut().find(|e| e.0 == t) {
                Some(e) => e.1 += w,
                None => weights.push((t, w)),
            }
        }
        let total: f64 = weights.iter().map(|e| e.1).sum();
        let mut transitions: Vec<(usize, f64)> = weights
            .into_iter()
            .map(|(t, w)| (t, (1.0 - exit) * w / total))
            .collect();
        let stay: f64 = transitions.iter().map(|e| e.1).sum();
        transitions.push((goal, 1.0 - stay));
        transitions.sort_by_key(|e| e.0);
        Variant {
            guard,
            transitions,
            reward: rng.random_range(0.0..5.0),
        }
    };

    let mut commands = Vec::with_capacity(n + 1);
    for _ in 0..n {
        let mut cmds = Vec::with_capacity(spec.action_count);
        for a in 0..spec.action_count {
            let keyed = if hole_ids.is_empty() || rng.random_bool(spec.shared_fraction) {
                0
            } else {
                rng.random_range(1..=spec.max_guard_holes.clamp(1, hole_ids.len()))
            };
            let mut chosen: Vec<usize> = hole_ids.choose_multiple(&mut rng, keyed).copied().collect();
            chosen.sort_unstable();
            let sizes: Vec<usize> = chosen.iter().map(|&h| spec.hole_sizes[h]).collect();
            let variants = if chosen.is_empty() {
                vec![random_variant(&mut rng, Guard::empty())]
            } else {
                IndexIter::new(sizes)
                    .map(|opts| random_variant(&mut rng, Guard::new(chosen.iter().copied().zip(opts.0))))
                    .collect()
            };
            cmds.push(Command { action: a, variants });
        }
        commands.push(cmds);
    }
    commands.push(
        (0..spec.action_count)
            .map(|a| Command {
                action: a,
                variants: vec![Variant {
                    guard: Guard::empty(),
                    transitions: vec![(goal, 1.0)],
                    reward: 0.0,
                }],
            })
            .collect(),
    );

    let family = ModelFamily {
        skeleton: Skeleton {
            name: format!("synthetic-{}", spec.seed),
            objective,
            states: (0..n).map(|s| format!("s{s}")).chain(["goal".into()]).collect(),
            initial: 0,
            actions: (0..spec.action_count).map(|a| format!("a{a}")).collect(),
            observations: (0..zz).map(|z| format!("z{z}")).chain(["done".into()]).collect(),
            obs_of,
            goals: (0..=n).map(|s| s == goal).collect(),
        },
        holes,
        commands,
    };
    family.ensure_valid()?;
    Ok(family)
}
