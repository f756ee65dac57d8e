use hmpomdp::bench::{gen_obstacles, gen_synthetic_family, ObstaclesSpec};
use hmpomdp::io::{parse_model, parse_model_str, serialize_model, write_model};
use hmpomdp::Error;

const MODELS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/models");

const THIRDS: &str = r#"
[meta]
name = "thirds"
objective = "maximize"

[states]
labels = ["s", "a", "b", "g"]
initial = "s"
goals = ["g"]

[observations]
labels = ["o", "done"]
of = ["o", "o", "o", "done"]

[actions]
labels = ["go"]

[[holes]]
name = "h"
options = ["left", "right"]

[[commands]]
state = "s"
action = "go"
[[commands.variants]]
guard = { h = "left" }
reward = 1.0
transitions = [{ to = "a", prob = ONE }, { to = "b", prob = TWO }, { to = "g", prob = THREE }]
[[commands.variants]]
guard = { h = "right" }
reward = 2.0
transitions = [{ to = "g", prob = 1 }]

[[commands]]
state = "a"
action = "go"
[[commands.variants]]
reward = 1.0
transitions = [{ to = "g", prob = 1 }]

[[commands]]
state = "b"
action = "go"
[[commands.variants]]
reward = 3.0
transitions = [{ to = "g", prob = 1 }]

[[commands]]
state = "g"
action = "go"
[[commands.variants]]
reward = 0.0
transitions = [{ to = "g", prob = 1 }]
"#;

fn thirds(a: &str, b: &str, c: &str) -> String {
    THIRDS
        .replace("prob = ONE", &format!("prob = {a}"))
        .replace("prob = TWO", &format!("prob = {b}"))
        .replace("prob = THREE", &format!("prob = {c}"))
}

#[test]
fn golden_obstacles_file() {
    let golden = std::fs::read_to_string(format!("{MODELS}/obstacles_3x.model")).unwrap();
    let fam = gen_obstacles(&ObstaclesSpec::three_locations()).unwrap();
    assert_eq!(serialize_model(&fam).unwrap(), golden);
    assert_eq!(parse_model_str(&golden).unwrap(), fam);
    assert_eq!(fam.instance_count(), 3);
}

#[test]
fn bundled_models_round_trip() {
    for entry in std::fs::read_dir(MODELS).unwrap() {
        let path = entry.unwrap().path();
        let fam = parse_model(&path).unwrap();
        let text = serialize_model(&fam).unwrap();
        assert_eq!(parse_model_str(&text).unwrap(), fam, "{}", path.display());
    }
}

#[test]
fn generated_models_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..5 {
        let fam = gen_synthetic_family(&[2, 3], 6, seed).unwrap();
        let path = dir.path().join(format!("s{seed}.model"));
        write_model(&fam, &path).unwrap();
        assert_eq!(parse_model(&path).unwrap(), fam);
    }
}

#[test]
fn one_third_three_ways() {
    let exact = parse_model_str(&thirds("\"1/3\"", "\"1/3\"", "\"1/3\"")).unwrap();
    let decimal = parse_model_str(&thirds(
        "\"0.3333333333333333\"",
        "\"0.3333333333333333\"",
        "\"0.3333333333333334\"",
    ))
    .unwrap();
    let mixed = parse_model_str(&thirds("\"1/3\"", "0.3333333333333333", "\"0.3333333333333333\"")).unwrap();
    for fam in [&exact, &decimal, &mixed] {
        let row = &fam.commands[0][0].variants[0].transitions;
        for &(_, p) in row.iter() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15, "{p}");
        }
    }
}

#[test]
fn inexact_fractions_are_rejected() {
    let err = parse_model_str(&thirds("\"1/3\"", "\"1/3\"", "\"1/4\"")).unwrap_err();
    assert!(err.to_string().contains("not normalized"), "{err}");
    let err = parse_model_str(&thirds("\"1/3\"", "\"1/3\"", "\"1/0\"")).unwrap_err();
    assert!(err.to_string().contains("positive denominator"), "{err}");
}

#[test]
fn duplicate_hole_is_reported_by_name() {
    let text = thirds("\"1/3\"", "\"1/3\"", "\"1/3\"").replace(
        "[[commands]]\nstate = \"s\"",
        "[[holes]]\nname = \"h\"\noptions = [\"x\"]\n\n[[commands]]\nstate = \"s\"",
    );
    let err = parse_model_str(&text).unwrap_err();
    assert!(err.is_input_error());
    assert!(err.to_string().contains("duplicate hole name `h`"), "{err}");
}

#[test]
fn unknown_guard_option_is_located() {
    let text = thirds("\"1/3\"", "\"1/3\"", "\"1/3\"").replace("h = \"right\"", "h = \"up\"");
    let err = parse_model_str(&text).unwrap_err();
    assert!(err.to_string().contains("commands[0]"), "{err}");
}

#[test]
fn missing_file_is_an_input_error() {
    let err = parse_model("/nonexistent/none.model").unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
    assert!(err.is_input_error());
}
