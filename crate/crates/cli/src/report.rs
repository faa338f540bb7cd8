use serde::Serialize;
use serde_json::{Map, Value};
use toric_cqed::toric::round_sig;

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub scenario: String,
    pub config_echo: Value,
    pub results: Value,
    pub invariant_checks: Vec<Check>,
}

impl Report {
    pub fn new(config: &RunConfig, results: Value, invariant_checks: Vec<Check>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: config.scenario.to_string(),
            config_echo: serde_json::to_value(config).expect("config serializes"),
            results,
            invariant_checks,
        }
    }

    pub fn passed(&self) -> bool {
        self.invariant_checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.invariant_checks.iter().filter(|c| !c.pass)
    }

    /// Pretty JSON with every float cut to 12 significant digits.
    pub fn to_json_string(&self) -> String {
        let value = rounded(serde_json::to_value(self).expect("report serializes"));
        serde_json::to_string_pretty(&value).expect("value serializes") + "\n"
    }

    /// Fixed-width pass/fail listing.
    pub fn table(&self) -> String {
        let width = self.invariant_checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.invariant_checks {
            let tag = if c.pass { "PASS" } else { "FAIL" };
            out += &format!("{tag}  {:width$}  {}\n", c.name, c.detail);
        }
        let passed = self.invariant_checks.iter().filter(|c| c.pass).count();
        out += &format!("{passed}/{} checks passed\n", self.invariant_checks.len());
        out
    }
}

pub fn rounded(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().expect("f64 number"));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(rounded).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, rounded(v))).collect::<Map<_, _>>()),
        other => other,
    }
}

/// Short float rendering for table details.
pub fn sci(x: f64) -> String {
    format!("{x:.3e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounding_reaches_nested_values() {
        let v = rounded(json!({"a": [1.0 / 3.0, 2], "b": {"c": 0.1 + 0.2}}));
        assert_eq!(v, json!({"a": [0.333333333333, 2], "b": {"c": 0.3}}));
    }

    #[test]
    fn table_counts() {
        let r = Report {
            schema_version: SCHEMA_VERSION,
            scenario: "selfcheck".into(),
            config_echo: Value::Null,
            results: Value::Null,
            invariant_checks: vec![Check::new("a", true, "ok"), Check::new("bb", false, "off")],
        };
        assert!(!r.passed());
        let t = r.table();
        assert!(t.contains("PASS  a   ok"));
        assert!(t.contains("FAIL  bb  off"));
        assert!(t.ends_with("1/2 checks passed\n"));
    }
}
