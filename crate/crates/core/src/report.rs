//! Scenario reports and their renderings.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// A named number, integer list or string attached to a check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: Value,
}

/// Plot data: `(abscissa, value)` pairs under one series label.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Series {
    pub label: String,
    pub abscissa: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub metrics: Vec<Metric>,
    pub series: Vec<Series>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// JSON has no infinities; those become the strings `"inf"` and `"-inf"`.
pub fn number(v: f64) -> Value {
    if v.is_finite() {
        serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
    } else if v.is_nan() {
        Value::String("nan".into())
    } else if v > 0.0 {
        Value::String("inf".into())
    } else {
        Value::String("-inf".into())
    }
}

impl CheckResult {
    pub fn new(name: &str) -> CheckResult {
        CheckResult {
            name: name.to_string(),
            passed: true,
            metrics: Vec::new(),
            series: Vec::new(),
            message: None,
        }
    }

    pub fn failed(name: &str, error: &Error) -> CheckResult {
        CheckResult {
            passed: false,
            message: Some(error.to_string()),
            ..CheckResult::new(name)
        }
    }

    pub fn metric(&mut self, name: &str, value: Value) -> &mut CheckResult {
        self.metrics.push(Metric {
            name: name.to_string(),
            value,
        });
        self
    }

    pub fn real(&mut self, name: &str, v: f64) -> &mut CheckResult {
        self.metric(name, number(v))
    }

    pub fn reals(&mut self, name: &str, vs: &[f64]) -> &mut CheckResult {
        self.metric(name, Value::Array(vs.iter().map(|v| number(*v)).collect()))
    }

    /// Records a sub-verdict; any failing requirement fails the check.
    pub fn require(&mut self, name: &str, ok: bool) -> &mut CheckResult {
        self.passed &= ok;
        self.metric(name, Value::String(if ok { "pass" } else { "fail" }.into()))
    }

    pub fn series(&mut self, label: &str, abscissa: &str, points: Vec<(f64, f64)>) -> &mut CheckResult {
        self.series.push(Series {
            label: label.to_string(),
            abscissa: abscissa.to_string(),
            points,
        });
        self
    }

    pub fn metric_value(&self, name: &str) -> Option<&Value> {
        self.metrics.iter().find(|m| m.name == name).map(|m| &m.value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub checks: Vec<CheckResult>,
}

fn text_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => format!("{f:.6e}"),
            _ => n.to_string(),
        },
        Value::Array(items) => format!("[{}]", items.iter().map(text_value).collect::<Vec<_>>().join(", ")),
        other => other.to_string(),
    }
}

impl Report {
    pub fn new(scenario: &str) -> Report {
        Report {
            scenario: scenario.to_string(),
            checks: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report values are serializable") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario {}", self.scenario);
        for c in &self.checks {
            let _ = writeln!(out, "[{}] {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
            if let Some(m) = &c.message {
                let _ = writeln!(out, "    error: {m}");
            }
            for m in &c.metrics {
                let _ = writeln!(out, "    {} = {}", m.name, text_value(&m.value));
            }
            for s in &c.series {
                let _ = writeln!(out, "    {:>12}  {:>14}  ({})", s.abscissa, "value", s.label);
                for (a, v) in &s.points {
                    let _ = writeln!(out, "    {a:>12.6}  {v:>14.6e}");
                }
            }
        }
        let total = self.checks.len();
        let good = self.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(out, "{good}/{total} checks passed");
        out
    }

    /// Plot data with columns `abscissa, value, series`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["abscissa", "value", "series"]).map_err(io)?;
        for c in &self.checks {
            for s in &c.series {
                let label = format!("{}/{}", c.name, s.label);
                for (a, v) in &s.points {
                    w.write_record([a.to_string(), v.to_string(), label.clone()]).map_err(io)?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e)))
    }
}
