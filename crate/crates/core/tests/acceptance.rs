//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 2 3`.

use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hmpomdp::bench::{gen_obstacles, gen_synthetic, gen_synthetic_family, ObstaclesSpec, SyntheticSpec};
use hmpomdp::clock::{TickClock, WallClock};
use hmpomdp::eval::{
    chain_value, evaluate_instance, robust_evaluate, robust_evaluate_ar, robust_evaluate_enum, EvalMode,
    ValueMethod,
};
use hmpomdp::fsc::{Fsc, FscParams, MemoryModel};
use hmpomdp::grad::{finite_diff_gradient, value_gradient};
use hmpomdp::induced::induce_chain;
use hmpomdp::io::{parse_model, parse_model_str, serialize_model};
use hmpomdp::model::{Assignment, ModelFamily, Objective};
use hmpomdp::optimize::{baseline_random_selection, plain_gd, rfpg, OptimizerConfig, RunOutcome};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Verdict); 8] = [
        (1, "gradient vs finite differences", gradient),
        (2, "abstraction refinement matches enumeration", ar_exactness),
        (3, "linear solve vs value iteration", solver_cross_check),
        (4, "obstacles: robust beats single-instance training", obstacles),
        (5, "worst-case vs random instance selection", ablation),
        (6, "best-value bookkeeping", bookkeeping),
        (7, "deterministic results file", determinism),
        (8, "model format round trip", format_round_trip),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} [{tag}] {name}: {} ({secs:.1}s)", v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn gradient() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_rel = 0.0f64;
    let mut worst_abs = 0.0f64;
    let mut entries = 0;
    let mut failures = Vec::new();
    let trials = 24;
    for t in 0..trials {
        let spec = SyntheticSpec {
            observation_count: rng.random_range(2..=3),
            action_count: rng.random_range(2..=3),
            ..SyntheticSpec::new(vec![2], rng.random_range(2..=7), 1000 + t)
        };
        let fam = gen_synthetic(&spec).unwrap();
        let pomdp = fam
            .instantiate(&Assignment(vec![rng.random_range(0..2)]))
            .unwrap();
        let space = pomdp.controller_space();
        let params = FscParams::init(&space, MemoryModel::full(2, space.observations), rng.random()).unwrap();
        let (_, analytic) = value_gradient(&pomdp, &params).unwrap();
        let numeric = finite_diff_gradient(&pomdp, &params, 1e-5).unwrap();
        let pairs = analytic
            .d_theta
            .iter()
            .zip(&numeric.d_theta)
            .chain(analytic.d_phi.iter().zip(&numeric.d_phi));
        for (k, (&a, &f)) in pairs.enumerate() {
            let abs = (a - f).abs();
            let rel = abs / f.abs().max(f64::MIN_POSITIVE);
            worst_abs = worst_abs.max(abs);
            if f.abs() > 1e-6 {
                worst_rel = worst_rel.max(rel);
            }
            if abs > 1e-6 && rel > 1e-4 {
                failures.push(format!("trial {t} entry {k}: {a} vs {f}"));
            }
            entries += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 60.0;
    verdict(
        pass,
        format!(
            "{trials} triples, {entries} entries, max relative error {worst_rel:.1e}, \
             max absolute error {worst_abs:.1e}, {} mismatches{}",
            failures.len(),
            failures
                .first()
                .map(|f| format!(" (first: {f})"))
                .unwrap_or_default()
        ),
    )
}

fn random_policy(fam: &ModelFamily, nodes: usize, seed: u64) -> Fsc {
    let space = fam.controller_space();
    FscParams::init(&space, MemoryModel::full(nodes, space.observations), seed)
        .unwrap()
        .realize()
}

fn ar_exactness() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let families = 60;
    let mut max_gap = 0.0f64;
    let mut bad = Vec::new();
    let mut total_instances = 0u128;
    for f in 0..families {
        let holes = rng.random_range(1..=4);
        let mut sizes = Vec::new();
        for _ in 0..holes {
            let d = rng.random_range(2..=4);
            if sizes.iter().product::<usize>() * d > 256 {
                break;
            }
            sizes.push(d);
        }
        let spec = SyntheticSpec {
            observation_count: rng.random_range(2..=3),
            max_guard_holes: rng.random_range(1..=3),
            ..SyntheticSpec::new(sizes, rng.random_range(3..=12), 2000 + f)
        };
        let fam = gen_synthetic(&spec).unwrap();
        total_instances += fam.instance_count();
        let fsc = random_policy(&fam, rng.random_range(1..=2), rng.random());
        let ar = robust_evaluate_ar(&fam, &fsc, 1e-12).unwrap();
        let en = robust_evaluate_enum(&fam, &fsc, 256).unwrap();
        let at_index = evaluate_instance(&fam, &ar.worst_index, &fsc).unwrap();
        let gap = (ar.robust_value - en.robust_value)
            .abs()
            .max((at_index - en.robust_value).abs());
        max_gap = max_gap.max(gap);
        if gap > 1e-9 {
            bad.push(f);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        bad.is_empty() && secs < 120.0,
        format!("{families} families ({total_instances} instances), max gap {max_gap:.1e}, failing {bad:?}"),
    )
}

const GEOMETRIC: &str = r#"
[meta]
name = "geometric"
objective = "minimize"

[states]
labels = ["s", "g"]
initial = "s"
goals = ["g"]

[observations]
labels = ["o", "done"]
of = ["o", "done"]

[actions]
labels = ["a"]

[[commands]]
state = "s"
action = "a"
[[commands.variants]]
reward = 1.0
transitions = [{ to = "s", prob = Q }, { to = "g", prob = P }]

[[commands]]
state = "g"
action = "a"
[[commands.variants]]
reward = 0.0
transitions = [{ to = "g", prob = 1.0 }]
"#;

fn solver_cross_check() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut max_gap = 0.0f64;
    let mut largest = 0;
    for c in 0..20 {
        let fam = gen_synthetic_family(&[2, 2], rng.random_range(5..=99), 3000 + c).unwrap();
        let index = Assignment(vec![rng.random_range(0..2), rng.random_range(0..2)]);
        let pomdp = fam.instantiate(&index).unwrap();
        let fsc = random_policy(&fam, 2, rng.random());
        let chain = induce_chain(&pomdp, &fsc).unwrap();
        assert!(chain.len() <= 200);
        largest = largest.max(chain.len());
        let lin = chain_value(&chain, ValueMethod::LinearSolve, 0.0).unwrap();
        let vi = chain_value(&chain, ValueMethod::ValueIteration, 1e-12).unwrap();
        for (a, b) in lin.values.iter().zip(&vi.values) {
            max_gap = max_gap.max((a - b).abs());
        }
    }
    let mut geo_gap = 0.0f64;
    for q in [0.0, 0.5, 0.9, 0.99, 0.999] {
        let text = GEOMETRIC
            .replace("prob = Q", &format!("prob = {q:?}"))
            .replace("prob = P", &format!("prob = {:?}", 1.0 - q));
        let fam = parse_model_str(&text).unwrap();
        let pomdp = fam.instantiate(&Assignment(vec![])).unwrap();
        let chain = induce_chain(&pomdp, &Fsc::uniform(&fam.controller_space())).unwrap();
        let v = chain_value(&chain, ValueMethod::LinearSolve, 0.0)
            .unwrap()
            .initial();
        geo_gap = geo_gap.max((v - 1.0 / (1.0 - q)).abs());
    }
    verdict(
        max_gap <= 1e-8 && geo_gap <= 1e-10,
        format!("20 chains up to {largest} states, max gap {max_gap:.1e}; geometric error {geo_gap:.1e}"),
    )
}

/// Best robust value over every deterministic 2-node controller of an
/// obstacles family. Only the white and yellow rows matter: the start
/// observation is seen once at node 0 and only its memory update counts,
/// and nothing after the goal is charged.
fn deterministic_optimum(fam: &ModelFamily) -> f64 {
    let obs = &fam.skeleton.observations;
    let at = |name: &str| obs.iter().position(|o| o == name).unwrap();
    let (start, white, yellow) = (at("start"), at("white"), at("yellow"));
    let (nn, zz, aa) = (2, obs.len(), fam.skeleton.actions.len());
    let rows: Vec<usize> = (0..nn).flat_map(|n| [n * zz + white, n * zz + yellow]).collect();
    let indices: Vec<Assignment> = fam.enumerate_indices().collect();
    let mut best = f64::INFINITY;
    for acts in 0..aa.pow(rows.len() as u32) {
        for nexts in 0..nn.pow(rows.len() as u32 + 1) {
            let mut act = vec![0; nn * zz];
            let mut next = vec![0; nn * zz];
            let (mut a, mut m) = (acts, nexts);
            for &r in &rows {
                act[r] = a % aa;
                next[r] = m % nn;
                a /= aa;
                m /= nn;
            }
            next[start] = m % nn;
            let fsc = Fsc::deterministic(nn, zz, aa, &act, &next);
            let mut worst = f64::NEG_INFINITY;
            for i in &indices {
                worst = worst.max(evaluate_instance(fam, i, &fsc).unwrap_or(f64::INFINITY));
                if worst >= best {
                    break;
                }
            }
            best = best.min(worst);
        }
    }
    best
}

fn obstacles() -> Verdict {
    let start = Instant::now();
    let fam = gen_obstacles(&ObstaclesSpec::three_locations()).unwrap();
    let indices: Vec<Assignment> = fam.enumerate_indices().collect();
    let space = fam.controller_space();
    let optimum = deterministic_optimum(&fam);
    let mut cfg = OptimizerConfig {
        objective: Objective::Minimize,
        nodes: Some(2),
        timeout_seconds: 120.0,
        max_iterations: Some(5000),
        ..OptimizerConfig::default()
    };
    cfg.eval.mode = EvalMode::Enum;

    let mut min_single = f64::INFINITY;
    let mut wins = 0;
    let mut best_robust = f64::INFINITY;
    let mut ratios = Vec::new();
    for seed in 0..10 {
        cfg.seed = seed;
        let mut seed_single = f64::INFINITY;
        for index in &indices {
            let pomdp = fam.instantiate(index).unwrap();
            let params = FscParams::init(&space, MemoryModel::full(2, space.observations), seed).unwrap();
            let (trained, _) = plain_gd(&pomdp, params, 1000, &cfg).unwrap();
            let robust = robust_evaluate_enum(&fam, &trained.realize(), 100)
                .unwrap()
                .robust_value;
            seed_single = seed_single.min(robust);
        }
        min_single = min_single.min(seed_single);
        let value = rfpg(&fam, &cfg, &WallClock::new()).unwrap().best_value.unwrap();
        if value < seed_single {
            wins += 1;
        }
        best_robust = best_robust.min(value);
        ratios.push(format!("{:.2}", value / optimum));
    }
    let a = min_single >= 100.0;
    let b = wins >= 9;
    let c = best_robust <= 1.1 * optimum;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        a && b && c && secs < 1800.0,
        format!(
            "(a) min single-instance robust cost {min_single:.2} [{}]; (b) wins {wins}/10 [{}]; \
             (c) best {best_robust:.3} vs deterministic optimum {optimum:.3} [{}], per-seed ratios {}",
            ok(a),
            ok(b),
            ok(c),
            ratios.join(" ")
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "fail"
    }
}

fn ablation() -> Verdict {
    let fam = gen_obstacles(&ObstaclesSpec::three_obstacles()).unwrap();
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..10 {
        let cfg = OptimizerConfig {
            objective: fam.objective(),
            nodes: Some(2),
            timeout_seconds: 120.0,
            max_iterations: Some(200),
            seed,
            ..OptimizerConfig::default()
        };
        let worst = rfpg(&fam, &cfg, &WallClock::new()).unwrap().best_value.unwrap();
        let random = baseline_random_selection(&fam, &cfg, &WallClock::new())
            .unwrap()
            .best_value
            .unwrap();
        if fam.objective().is_better(worst, random) {
            wins += 1;
        }
        pairs.push(format!("{worst:.1}/{random:.1}"));
    }
    verdict(
        wins >= 7,
        format!(
            "{} instances, wins {wins}/10 (worst-case/random: {})",
            fam.instance_count(),
            pairs.join(" ")
        ),
    )
}

fn check_run(fam: &ModelFamily, cfg: &OptimizerConfig, out: &RunOutcome) -> Result<(), String> {
    let u = |v: f64| cfg.objective.utility(v);
    let mut prev = f64::NEG_INFINITY;
    let mut seen = f64::NEG_INFINITY;
    for r in &out.records {
        seen = seen.max(u(r.robust_value));
        if u(r.running_best) < prev {
            return Err(format!("running best regressed at iteration {}", r.iteration));
        }
        if u(r.running_best) != seen {
            return Err(format!(
                "running best is not the best so far at iteration {}",
                r.iteration
            ));
        }
        prev = u(r.running_best);
    }
    let best = out.best_value.ok_or("no evaluation recorded")?;
    let again = robust_evaluate(fam, &out.best.realize(), &cfg.eval)
        .unwrap()
        .robust_value;
    if (again - best).abs() > 1e-9 {
        return Err(format!(
            "returned policy re-evaluates to {again}, recorded {best}"
        ));
    }
    Ok(())
}

fn bookkeeping() -> Verdict {
    let mut runs = 0;
    let mut problems = Vec::new();
    let obstacles = gen_obstacles(&ObstaclesSpec::three_locations()).unwrap();
    for seed in 0..6 {
        let fam = gen_synthetic_family(&[3, 3, 2], 8, 4000 + seed).unwrap();
        for (fam, mode) in [
            (&fam, EvalMode::Ar),
            (&fam, EvalMode::Enum),
            (&obstacles, EvalMode::Ar),
        ] {
            let mut cfg = OptimizerConfig {
                objective: fam.objective(),
                nodes: Some(2),
                max_iterations: Some(40),
                seed,
                ..OptimizerConfig::default()
            };
            cfg.eval.mode = mode;
            let out = rfpg(fam, &cfg, &TickClock::new(1e-3)).unwrap();
            runs += 1;
            if let Err(e) = check_run(fam, &cfg, &out) {
                problems.push(format!("seed {seed}: {e}"));
            }
        }
    }
    verdict(
        problems.is_empty(),
        format!("{runs} runs, {} problems {}", problems.len(), problems.join("; ")),
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let model = concat!(env!("CARGO_MANIFEST_DIR"), "/models/obstacles_3x.model");
    let run = |name: &str| -> Result<Vec<u8>, String> {
        let csv = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_hmpomdp"))
            .args(["--workers", "1", "solve", "--model", model])
            .args(["--eval", "enum", "--clock", "tick:0.001", "--seed", "7"])
            .args(["--nodes", "2", "--max-iterations", "60"])
            .arg("--out-csv")
            .arg(&csv)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        std::fs::read(&csv).map_err(|e| e.to_string())
    };
    match (run("a.csv"), run("b.csv")) {
        (Ok(a), Ok(b)) => {
            let rows = a.iter().filter(|&&c| c == b'\n').count();
            verdict(a == b && rows > 1, format!("{rows} lines, identical: {}", a == b))
        }
        (Err(e), _) | (_, Err(e)) => verdict(false, format!("cli failed: {e}")),
    }
}

fn format_round_trip() -> Verdict {
    let mut problems = Vec::new();
    let mut checked = 0;
    let models = concat!(env!("CARGO_MANIFEST_DIR"), "/models");
    let mut families: Vec<(String, ModelFamily)> = Vec::new();
    for entry in std::fs::read_dir(models).unwrap() {
        let path = entry.unwrap().path();
        families.push((path.display().to_string(), parse_model(&path).unwrap()));
    }
    for seed in 0..10 {
        let spec = SyntheticSpec {
            observation_count: 3,
            action_count: 3,
            ..SyntheticSpec::new(vec![2, 3, 4], 10, 5000 + seed)
        };
        families.push((format!("synthetic {seed}"), gen_synthetic(&spec).unwrap()));
    }
    families.push((
        "obstacles 5x5".into(),
        gen_obstacles(&ObstaclesSpec::three_obstacles()).unwrap(),
    ));
    let two_holes = ObstaclesSpec {
        candidates: vec![vec![(1, 1), (2, 1)], vec![(1, 2), (2, 2)]],
        ..ObstaclesSpec::square(4)
    };
    families.push(("obstacles 4x4".into(), gen_obstacles(&two_holes).unwrap()));
    for (name, fam) in &families {
        checked += 1;
        let text = serialize_model(fam).unwrap();
        match parse_model_str(&text) {
            Ok(back) if &back == fam => {}
            Ok(_) => problems.push(format!("{name}: parsed family differs")),
            Err(e) => problems.push(format!("{name}: {e}")),
        }
    }
    let golden = std::fs::read_to_string(format!("{models}/obstacles_3x.model")).unwrap();
    let generated = serialize_model(&gen_obstacles(&ObstaclesSpec::three_locations()).unwrap()).unwrap();
    if golden != generated {
        problems.push("obstacles golden file differs from the generator".into());
    }
    verdict(
        problems.is_empty(),
        format!("{checked} families plus golden file, problems: {problems:?}"),
    )
}
