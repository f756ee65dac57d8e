//! TOML model files describing a family with holes.
//!
//! ```toml
//! [meta]
//! name = "example"
//! objective = "minimize"          # or "maximize"
//!
//! [states]
//! labels = ["s0", "s1", "goal"]   # or: count = 3 (labels s0, s1, ...)
//! initial = "s0"
//! goals = ["goal"]
//!
//! [observations]
//! labels = ["o", "done"]
//! of = ["o", "o", "done"]         # one entry per state
//!
//! [actions]
//! labels = ["go"]
//!
//! [[holes]]
//! name = "h"
//! options = ["a", "b"]
//!
//! [[commands]]
//! state = "s0"
//! action = "go"
//! [[commands.variants]]
//! guard = { h = "a" }
//! reward = 1.0
//! transitions = [{ to = "s1", prob = "1/3" }, { to = "goal", prob = "2/3" }]
//! ```
//!
//! Probabilities are numbers, decimal strings, or exact fractions `"p/q"`.
//! When every entry of a distribution is a fraction the exact sum must be 1.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{Command, Guard, Hole, ModelFamily, Objective, Skeleton, Variant};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    meta: MetaDoc,
    states: StatesDoc,
    observations: ObservationsDoc,
    actions: ActionsDoc,
    #[serde(default)]
    holes: Vec<HoleDoc>,
    #[serde(default)]
    commands: Vec<CommandDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaDoc {
    name: String,
    objective: Objective,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatesDoc {
    #[serde(default)]
    count: Option<usize>,
    #[serde(default)]
    labels: Option<Vec<String>>,
    initial: String,
    #[serde(default)]
    goals: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationsDoc {
    labels: Vec<String>,
    of: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionsDoc {
    labels: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HoleDoc {
    name: String,
    options: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommandDoc {
    state: String,
    action: String,
    variants: Vec<VariantDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariantDoc {
    #[serde(default)]
    guard: BTreeMap<String, String>,
    reward: f64,
    transitions: Vec<TransitionDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionDoc {
    to: String,
    prob: Prob,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Prob {
    Number(f64),
    Text(String),
}

/// A probability as written in the file.
#[derive(Clone, Copy, Debug, PartialEq)]
enum ParsedProb {
    Fraction(i128, i128),
    Float(f64),
}

impl ParsedProb {
    fn value(self) -> f64 {
        match self {
            ParsedProb::Fraction(p, q) => p as f64 / q as f64,
            ParsedProb::Float(x) => x,
        }
    }
}

fn parse_prob(p: &Prob) -> std::result::Result<ParsedProb, String> {
    match p {
        Prob::Number(x) => Ok(ParsedProb::Float(*x)),
        Prob::Text(s) => {
            let s = s.trim();
            if let Some((num, den)) = s.split_once('/') {
                let num: i128 = num
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad numerator in `{s}`"))?;
                let den: i128 = den
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad denominator in `{s}`"))?;
                if den <= 0 || num < 0 {
                    return Err(format!(
                        "fraction `{s}` must have a positive denominator and nonnegative numerator"
                    ));
                }
                let g = gcd(num, den).max(1);
                Ok(ParsedProb::Fraction(num / g, den / g))
            } else {
                s.parse::<f64>()
                    .map(ParsedProb::Float)
                    .map_err(|_| format!("bad probability `{s}`"))
            }
        }
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Exact sum of fractions, `None` on overflow.
fn fraction_sum(parts: &[(i128, i128)]) -> Option<(i128, i128)> {
    parts.iter().try_fold((0i128, 1i128), |(n, d), &(p, q)| {
        let num = n.checked_mul(q)?.checked_add(p.checked_mul(d)?)?;
        let den = d.checked_mul(q)?;
        let g = gcd(num, den).max(1);
        Some((num / g, den / g))
    })
}

pub fn parse_model(path: impl AsRef<Path>) -> Result<ModelFamily> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model_str(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

fn parse_error(message: impl Into<String>) -> Error {
    Error::Parse {
        path: "<string>".into(),
        message: message.into(),
    }
}

pub fn parse_model_str(text: &str) -> Result<ModelFamily> {
    let doc: ModelDoc = toml::from_str(text).map_err(|e| parse_error(e.to_string()))?;
    let family = build(doc)?;
    family.ensure_valid()?;
    Ok(family)
}

fn index_of(map: &HashMap<&str, usize>, label: &str, what: &str, loc: &str) -> Result<usize> {
    map.get(label)
        .copied()
        .ok_or_else(|| parse_error(format!("{loc}: unknown {what} `{label}`")))
}

fn label_map<'a>(labels: &'a [String], what: &str) -> Result<HashMap<&'a str, usize>> {
    let mut map = HashMap::with_capacity(labels.len());
    for (i, l) in labels.iter().enumerate() {
        if map.insert(l.as_str(), i).is_some() {
            return Err(parse_error(format!("duplicate {what} label `{l}`")));
        }
    }
    Ok(map)
}

fn build(doc: ModelDoc) -> Result<ModelFamily> {
    let states = match (doc.states.labels, doc.states.count) {
        (Some(labels), None) => labels,
        (None, Some(n)) => (0..n).map(|i| format!("s{i}")).collect(),
        (Some(labels), Some(n)) if labels.len() == n => labels,
        (Some(labels), Some(n)) => {
            return Err(parse_error(format!(
                "states: count = {n} but {} labels given",
                labels.len()
            )))
        }
        (None, None) => return Err(parse_error("states: give `labels` or `count`")),
    };
    let state_ix = label_map(&states, "state")?;
    let obs_ix = label_map(&doc.observations.labels, "observation")?;
    let act_ix = label_map(&doc.actions.labels, "action")?;
    let initial = index_of(&state_ix, &doc.states.initial, "state", "states.initial")?;
    let mut goals = vec![false; states.len()];
    for g in &doc.states.goals {
        goals[index_of(&state_ix, g, "state", "states.goals")?] = true;
    }
    if doc.observations.of.len() != states.len() {
        return Err(parse_error(format!(
            "observations.of: {} entries for {} states",
            doc.observations.of.len(),
            states.len()
        )));
    }
    let obs_of = doc
        .observations
        .of
        .iter()
        .map(|o| index_of(&obs_ix, o, "observation", "observations.of"))
        .collect::<Result<Vec<_>>>()?;

    let mut holes = Vec::with_capacity(doc.holes.len());
    let mut hole_ix: HashMap<String, usize> = HashMap::new();
    for (h, hole) in doc.holes.into_iter().enumerate() {
        if hole_ix.insert(hole.name.clone(), h).is_some() {
            return Err(parse_error(format!("duplicate hole name `{}`", hole.name)));
        }
        if hole.options.is_empty() {
            return Err(parse_error(format!("hole `{}` has no options", hole.name)));
        }
        let mut seen = HashMap::new();
        for o in &hole.options {
            if seen.insert(o.clone(), ()).is_some() {
                return Err(parse_error(format!(
                    "hole `{}` lists option `{o}` twice",
                    hole.name
                )));
            }
        }
        holes.push(Hole {
            name: hole.name,
            options: hole.options,
        });
    }

    let mut commands: Vec<Vec<Command>> = vec![Vec::new(); states.len()];
    for (k, cmd) in doc.commands.into_iter().enumerate() {
        let loc = format!("commands[{k}] ({}, {})", cmd.state, cmd.action);
        let s = index_of(&state_ix, &cmd.state, "state", &loc)?;
        let a = index_of(&act_ix, &cmd.action, "action", &loc)?;
        if commands[s].iter().any(|c| c.action == a) {
            return Err(parse_error(format!("{loc}: command declared twice")));
        }
        let mut variants = Vec::with_capacity(cmd.variants.len());
        for (v, var) in cmd.variants.into_iter().enumerate() {
            let vloc = format!("{loc} variant {v}");
            let mut pairs = Vec::with_capacity(var.guard.len());
            for (hname, oname) in &var.guard {
                let h = *hole_ix
                    .get(hname)
                    .ok_or_else(|| parse_error(format!("{vloc}: unknown hole `{hname}`")))?;
                let o =
                    holes[h].options.iter().position(|x| x == oname).ok_or_else(|| {
                        parse_error(format!("{vloc}: hole `{hname}` has no option `{oname}`"))
                    })?;
                pairs.push((h, o));
            }
            let parsed = var
                .transitions
                .iter()
                .map(|t| parse_prob(&t.prob).map_err(|m| parse_error(format!("{vloc}: {m}"))))
                .collect::<Result<Vec<_>>>()?;
            let fractions: Option<Vec<(i128, i128)>> = parsed
                .iter()
                .map(|p| match *p {
                    ParsedProb::Fraction(n, d) => Some((n, d)),
                    ParsedProb::Float(_) => None,
                })
                .collect();
            if let Some(fr) = fractions {
                if !fr.is_empty() && fraction_sum(&fr) != Some((1, 1)) {
                    return Err(parse_error(format!(
                        "{vloc}: distribution not normalized (exact fractions do not sum to 1)"
                    )));
                }
            }
            let mut transitions = Vec::with_capacity(parsed.len());
            for (t, p) in var.transitions.iter().zip(&parsed) {
                transitions.push((index_of(&state_ix, &t.to, "state", &vloc)?, p.value()));
            }
            variants.push(Variant {
                guard: Guard::new(pairs),
                transitions,
                reward: var.reward,
            });
        }
        commands[s].push(Command { action: a, variants });
    }
    for cmds in &mut commands {
        cmds.sort_by_key(|c| c.action);
    }
    Ok(ModelFamily {
        skeleton: Skeleton {
            name: doc.meta.name,
            objective: doc.meta.objective,
            states,
            initial,
            actions: doc.actions.labels,
            observations: doc.observations.labels,
            obs_of,
            goals,
        },
        holes,
        commands,
    })
}

/// Renders a family in the model-file format. Probabilities are written as
/// shortest round-trip decimals, so parsing the output reproduces the family
/// exactly.
pub fn serialize_model(family: &ModelFamily) -> Result<String> {
    let sk = &family.skeleton;
    let list = |items: &mut dyn Iterator<Item = &String>| -> String {
        let parts: Vec<String> = items.map(|s| quote(s)).collect();
        format!("[{}]", parts.join(", "))
    };
    let mut out = String::new();
    out += "[meta]\n";
    out += &format!("name = {}\n", quote(&sk.name));
    out += &format!("objective = {}\n\n", quote(sk.objective.as_str()));
    out += "[states]\n";
    out += &format!("labels = {}\n", list(&mut sk.states.iter()));
    out += &format!("initial = {}\n", quote(&sk.states[sk.initial]));
    let goals: Vec<&String> = (0..sk.state_count())
        .filter(|&s| sk.goals[s])
        .map(|s| &sk.states[s])
        .collect();
    out += &format!("goals = {}\n\n", list(&mut goals.into_iter()));
    out += "[observations]\n";
    out += &format!("labels = {}\n", list(&mut sk.observations.iter()));
    out += &format!(
        "of = {}\n\n",
        list(&mut sk.obs_of.iter().map(|&z| &sk.observations[z]))
    );
    out += "[actions]\n";
    out += &format!("labels = {}\n", list(&mut sk.actions.iter()));
    for h in &family.holes {
        out += "\n[[holes]]\n";
        out += &format!("name = {}\n", quote(&h.name));
        out += &format!("options = {}\n", list(&mut h.options.iter()));
    }
    for (s, cmds) in family.commands.iter().enumerate() {
        for c in cmds {
            out += "\n[[commands]]\n";
            out += &format!("state = {}\n", quote(&sk.states[s]));
            out += &format!("action = {}\n", quote(&sk.actions[c.action]));
            for v in &c.variants {
                out += "[[commands.variants]]\n";
                if !v.guard.is_empty() {
                    let mut pairs: Vec<(&String, &String)> = v
                        .guard
                        .pairs()
                        .iter()
                        .map(|&(h, o)| (&family.holes[h].name, &family.holes[h].options[o]))
                        .collect();
                    pairs.sort();
                    let parts: Vec<String> = pairs
                        .iter()
                        .map(|(h, o)| format!("{} = {}", key(h), quote(o)))
                        .collect();
                    out += &format!("guard = {{ {} }}\n", parts.join(", "));
                }
                out += &format!("reward = {}\n", number(v.reward)?);
                let parts = v
                    .transitions
                    .iter()
                    .map(|&(t, p)| {
                        Ok(format!(
                            "{{ to = {}, prob = {} }}",
                            quote(&sk.states[t]),
                            number(p)?
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?;
                out += &format!("transitions = [{}]\n", parts.join(", "));
            }
        }
    }
    Ok(out)
}

fn quote(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn key(s: &str) -> String {
    if !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        s.to_string()
    } else {
        quote(s)
    }
}

fn number(x: f64) -> Result<String> {
    if !x.is_finite() {
        return Err(Error::Serialize(format!("cannot write non-finite number {x}")));
    }
    Ok(toml::Value::Float(x).to_string())
}

pub fn write_model(family: &ModelFamily, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serialize_model(family)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const THIRDS: &str = r#"
[meta]
name = "thirds"
objective = "maximize"

[states]
labels = ["a", "b", "c", "g"]
initial = "a"
goals = ["g"]

[observations]
labels = ["o", "done"]
of = ["o", "o", "o", "done"]

[actions]
labels = ["go"]

[[holes]]
name = "h"
options = ["x", "y"]

[[commands]]
state = "a"
action = "go"
[[commands.variants]]
guard = { h = "x" }
reward = 1.0
transitions = [{ to = "b", prob = "1/3" }, { to = "c", prob = "1/3" }, { to = "g", prob = "1/3" }]
[[commands.variants]]
guard = { h = "y" }
reward = 2.5
transitions = [{ to = "g", prob = 1.0 }]

[[commands]]
state = "b"
action = "go"
[[commands.variants]]
reward = 0.0
transitions = [{ to = "g", prob = "0.5" }, { to = "c", prob = 0.5 }]

[[commands]]
state = "c"
action = "go"
[[commands.variants]]
reward = 1.0
transitions = [{ to = "g", prob = "1" }]

[[commands]]
state = "g"
action = "go"
[[commands.variants]]
reward = 0.0
transitions = [{ to = "g", prob = 1 }]
"#;

    #[test]
    fn fractions_sum_to_one() {
        let fam = parse_model_str(THIRDS).unwrap();
        let t = &fam.commands[0][0].variants[0].transitions;
        let sum: f64 = t.iter().map(|e| e.1).sum();
        assert_eq!(sum, 1.0);
        assert_eq!(fam.instance_count(), 2);
    }

    #[test]
    fn round_trip() {
        let fam = parse_model_str(THIRDS).unwrap();
        let text = serialize_model(&fam).unwrap();
        assert_eq!(parse_model_str(&text).unwrap(), fam);
    }

    #[test]
    fn duplicate_hole_is_named() {
        let text = THIRDS.replace(
            "[[commands]]\nstate = \"a\"",
            "[[holes]]\nname = \"h\"\noptions = [\"z\"]\n\n[[commands]]\nstate = \"a\"",
        );
        let err = parse_model_str(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate hole name `h`"), "{err}");
    }

    #[test]
    fn bad_fraction_sum_is_rejected() {
        let text = THIRDS.replacen("prob = \"1/3\" }]", "prob = \"1/4\" }]", 1);
        let err = parse_model_str(&text).unwrap_err();
        assert!(err.to_string().contains("not normalized"), "{err}");
    }

    #[test]
    fn unknown_state_reports_location() {
        let text = THIRDS.replace(
            "{ to = \"g\", prob = \"1\" }",
            "{ to = \"nowhere\", prob = \"1\" }",
        );
        let err = parse_model_str(&text).unwrap_err();
        assert!(err.to_string().contains("unknown state `nowhere`"), "{err}");
        assert!(err.to_string().contains("commands[2]"), "{err}");
    }

    #[test]
    fn syntax_errors_are_parse_errors() {
        assert!(matches!(
            parse_model_str("[meta\nname="),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn validation_failures_surface() {
        let text = THIRDS.replace("prob = \"0.5\"", "prob = \"0.4\"");
        match parse_model_str(&text) {
            Err(Error::Validation(d)) => {
                assert!(d.iter().any(|m| m.contains("distribution not normalized")))
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
