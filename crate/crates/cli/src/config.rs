//! TOML loading that reports every offending key at once: unknown keys
//! (including nested ones), missing required keys, type errors, and the
//! semantic checks of the target type.

use cpdetect_core::grids::DeltaRule;
use cpdetect_core::simulation::harness::GeneratorSpec;
use cpdetect_core::simulation::{ConfigIssue, ExperimentConfig, PhasePlan, TestKind};
use cpdetect_core::{Regime, Side};
use serde::de::DeserializeOwned;
use toml::{Table, Value};

type Check = fn(&str, Value, &mut Vec<ConfigIssue>);

struct Field {
    key: &'static str,
    required: bool,
    check: Check,
}

const fn field(key: &'static str, required: bool, check: Check) -> Field {
    Field { key, required, check }
}

fn check<T: DeserializeOwned>(key: &str, value: Value, issues: &mut Vec<ConfigIssue>) {
    let mut unknown = Vec::new();
    let result: Result<T, _> = serde_ignored::deserialize(value, |path| unknown.push(path.to_string()));
    match result {
        Ok(_) => issues.extend(
            unknown
                .into_iter()
                .map(|p| ConfigIssue::new(format!("{key}.{p}"), "unknown key")),
        ),
        Err(e) => issues.push(ConfigIssue::new(key, e.to_string())),
    }
}

/// Generators are internally tagged, which hides their unknown keys from
/// `serde_ignored`; list them against the keys allowed for each kind.
fn check_generator(key: &str, value: Value, issues: &mut Vec<ConfigIssue>) {
    let Value::Table(t) = &value else {
        issues.push(ConfigIssue::new(key, "expected a table"));
        return;
    };
    let allowed: &[&str] = match t.get("kind").and_then(Value::as_str) {
        Some("null") => &["base_means"],
        Some("alternative") => &["s", "rho", "boundary_multiple", "regime", "t_star"],
        Some("mixture") => &["flavor", "rho", "epsilon", "beta_bar", "s", "base"],
        Some(other) => {
            issues.push(ConfigIssue::new(
                format!("{key}.kind"),
                format!("expected one of null, alternative, mixture, got {other:?}"),
            ));
            return;
        }
        None => {
            issues.push(ConfigIssue::new(format!("{key}.kind"), "missing required key"));
            return;
        }
    };
    let before = issues.len();
    for k in t.keys().filter(|k| *k != "kind" && !allowed.contains(&k.as_str())) {
        issues.push(ConfigIssue::new(format!("{key}.{k}"), "unknown key"));
    }
    if issues.len() == before {
        check::<GeneratorSpec>(key, value, issues);
    }
}

const EXPERIMENT_FIELDS: &[Field] = &[
    field("schema_version", false, check::<u32>),
    field("p", true, check::<usize>),
    field("n", true, check::<usize>),
    field("side", false, check::<Side>),
    field("gamma", false, check::<f64>),
    field("delta", false, check::<DeltaRule>),
    field("test", false, check::<TestKind>),
    field("trials", true, check::<u32>),
    field("seed", true, check::<u64>),
    field("h0", false, check_generator),
    field("h1", true, check_generator),
];

const PLAN_FIELDS: &[Field] = &[
    field("schema_version", false, check::<u32>),
    field("p", true, check::<usize>),
    field("n", true, check::<usize>),
    field("a", false, check::<Vec<f64>>),
    field("beta", false, check::<Vec<f64>>),
    field("n_values", false, check::<Vec<usize>>),
    field("s_values", false, check::<Vec<usize>>),
    field("multipliers", false, check::<Vec<f64>>),
    field("side", false, check::<Side>),
    field("regime", false, check::<Regime>),
    field("test", false, check::<TestKind>),
    field("trials", true, check::<u32>),
    field("seed", true, check::<u64>),
    field("gamma", false, check::<f64>),
    field("delta", false, check::<DeltaRule>),
    field("t_star", false, check::<usize>),
];

fn load<T: DeserializeOwned>(text: &str, fields: &[Field]) -> Result<T, Vec<ConfigIssue>> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| vec![ConfigIssue::new("<document>", e.message().to_string())])?;
    let mut issues = Vec::new();
    for key in table.keys() {
        if !fields.iter().any(|f| f.key == key) {
            issues.push(ConfigIssue::new(key.as_str(), "unknown key"));
        }
    }
    for f in fields {
        match table.get(f.key) {
            Some(v) => (f.check)(f.key, v.clone(), &mut issues),
            None if f.required => issues.push(ConfigIssue::new(f.key, "missing required key")),
            None => {}
        }
    }
    if !issues.is_empty() {
        return Err(issues);
    }
    Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| vec![ConfigIssue::new("<document>", e.to_string())])
}

pub fn load_experiment(text: &str) -> Result<ExperimentConfig, Vec<ConfigIssue>> {
    let cfg: ExperimentConfig = load(text, EXPERIMENT_FIELDS)?;
    let issues = cfg.validate();
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(issues)
    }
}

pub fn load_plan(text: &str) -> Result<PhasePlan, Vec<ConfigIssue>> {
    let plan: PhasePlan = load(text, PLAN_FIELDS)?;
    let issues = plan.validate();
    if issues.is_empty() {
        Ok(plan)
    } else {
        Err(issues)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXPERIMENT: &str = r#"
        schema_version = 1
        p = 20
        n = 64
        side = "two"
        gamma = 2.0
        delta = "auto"
        test = "pbj"
        trials = 10
        seed = 7

        [h1]
        kind = "alternative"
        s = 3
        boundary_multiple = 2.0
        t_star = 20
    "#;

    #[test]
    fn complete_experiment_parses() {
        let cfg = load_experiment(EXPERIMENT).unwrap();
        assert_eq!(cfg.side, Side::Two);
        assert_eq!(cfg.test, TestKind::Pbj);
        assert!(matches!(cfg.h0, GeneratorSpec::Null { .. }));
        assert!(matches!(
            cfg.h1,
            GeneratorSpec::Alternative {
                s: 3,
                t_star: Some(20),
                ..
            }
        ));
    }

    #[test]
    fn every_bad_key_is_listed() {
        let text = r#"
            p = "many"
            n = 64
            trials = 0
            colour = "red"
            delta = -1.0

            [h1]
            kind = "alternative"
            s = 3
            rho = 1.0
            rhoo = 2.0
        "#;
        let keys: Vec<String> = load_experiment(text).unwrap_err().into_iter().map(|i| i.key).collect();
        for want in ["colour", "p", "seed", "h1.rhoo"] {
            assert!(keys.iter().any(|k| k == want), "{want} missing from {keys:?}");
        }
    }

    #[test]
    fn semantic_checks_follow_parsing() {
        let text = EXPERIMENT.replace("trials = 10", "trials = 0").replace("gamma = 2.0", "gamma = -1.0");
        let keys: Vec<String> = load_experiment(&text).unwrap_err().into_iter().map(|i| i.key).collect();
        assert!(keys.contains(&"trials".to_string()) && keys.contains(&"gamma".to_string()), "{keys:?}");
    }

    #[test]
    fn syntax_errors_are_reported() {
        let issues = load_plan("p = [").unwrap_err();
        assert_eq!(issues[0].key, "<document>");
    }

    #[test]
    fn plan_with_no_cells_parses() {
        let plan = load_plan("p = 10\nn = 50\ntrials = 5\nseed = 1\n").unwrap();
        assert!(plan.a.is_empty() && plan.n_values.is_empty());
    }
}
