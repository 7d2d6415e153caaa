//! Run reports: one ordered tree rendered as `key = value` lines and as JSON.
//!
//! Both files come from the same tree, so they agree field for field. Nothing
//! time- or host-dependent goes into the tree; wall-clock time is printed to
//! stderr by the binary instead.

use serde::Serialize;
use serde_json::{Map, Number, Value};

pub const TOOL: &str = "trajcomplete";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Ordered report under construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    root: Map<String, Value>,
}

/// JSON number, or the strings `NaN`, `inf`, `-inf` for non-finite values.
pub fn num(v: f64) -> Value {
    match Number::from_f64(v) {
        Some(n) => Value::Number(n),
        None if v.is_nan() => Value::String("NaN".into()),
        None if v > 0.0 => Value::String("inf".into()),
        None => Value::String("-inf".into()),
    }
}

/// Serializes through serde; non-finite floats become `null`.
pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

impl Report {
    pub fn new(scenario: &str, task: &str) -> Self {
        let mut r = Report::default();
        r.set("tool", TOOL);
        r.set("version", VERSION);
        r.set("scenario", scenario);
        r.set("task", task);
        r
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.root.insert(key.to_string(), value.into());
    }

    pub fn set_f(&mut self, key: &str, value: f64) {
        self.set(key, num(value));
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.root.get(key)
    }

    /// Looks up a dotted path such as `outcome.label`.
    pub fn lookup(&self, path: &str) -> Option<&Value> {
        let mut parts = path.split('.');
        let mut node = self.root.get(parts.next()?)?;
        for p in parts {
            node = match node {
                Value::Object(m) => m.get(p)?,
                Value::Array(a) => a.get(p.parse::<usize>().ok()?)?,
                _ => return None,
            };
        }
        Some(node)
    }

    pub fn tree(&self) -> Value {
        Value::Object(self.root.clone())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.root).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut lines = Vec::new();
        for (k, v) in &self.root {
            flatten(k, v, &mut lines);
        }
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }
}

/// Dotted `key = value` lines; arrays use numeric segments, empty containers
/// are written as `[]` and `{}`.
pub fn flatten(prefix: &str, v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Object(m) if !m.is_empty() => {
            for (k, child) in m {
                flatten(&format!("{prefix}.{k}"), child, out);
            }
        }
        Value::Array(a) if !a.is_empty() => {
            for (i, child) in a.iter().enumerate() {
                flatten(&format!("{prefix}.{i}"), child, out);
            }
        }
        Value::Object(_) => out.push(format!("{prefix} = {{}}")),
        Value::Array(_) => out.push(format!("{prefix} = []")),
        Value::String(s) => out.push(format!("{prefix} = {s}")),
        other => out.push(format!("{prefix} = {other}")),
    }
}

/// Reads the text rendering back into `(key, value)` pairs.
pub fn parse_text(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Report {
        let mut r = Report::new("demo", "integrate");
        r.set("outcome", json!({"label": "HorizonReached", "code": 0}));
        r.set_f("drift", 1.5e-10);
        r.set_f("bad", f64::NAN);
        r.set("list", json!([1, {"a": "x y"}, []]));
        r
    }

    #[test]
    fn text_and_json_agree_field_for_field() {
        let r = sample();
        let mut from_json = Vec::new();
        for (k, v) in serde_json::from_str::<Map<String, Value>>(&r.to_json()).unwrap() {
            flatten(&k, &v, &mut from_json);
        }
        let from_text: Vec<String> = parse_text(&r.to_text()).into_iter().map(|(k, v)| format!("{k} = {v}")).collect();
        assert_eq!(from_json, from_text);
    }

    #[test]
    fn layout() {
        let text = sample().to_text();
        assert!(text.starts_with("tool = trajcomplete\nversion = "));
        assert!(text.contains("outcome.label = HorizonReached\n"));
        assert!(text.contains("drift = 1.5e-10\n"));
        assert!(text.contains("bad = NaN\n"));
        assert!(text.contains("list.1.a = x y\n"));
        assert!(text.contains("list.2 = []\n"));
        assert_eq!(sample().lookup("outcome.code"), Some(&json!(0)));
        assert_eq!(sample().lookup("list.1.a"), Some(&json!("x y")));
    }
}
