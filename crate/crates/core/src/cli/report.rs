use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Error;
use crate::linalg::Mat;

/// Outcome category; the process exit code is a function of it alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Usage,
    Parse,
    Hypothesis,
    Undecided,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Usage => 1,
            Outcome::Parse => 2,
            Outcome::Hypothesis => 3,
            Outcome::Undecided => 4,
        }
    }

    pub fn of_error(e: &Error) -> Self {
        match e {
            Error::Parse(_) => Outcome::Parse,
            Error::InvalidInput(_) | Error::UnknownSystem(_) => Outcome::Usage,
            Error::Undecided(_) => Outcome::Undecided,
            Error::InvalidMatrix(_)
            | Error::InvalidBasis(_)
            | Error::SingularPivot
            | Error::IllPosed { .. }
            | Error::HypothesisViolated { .. }
            | Error::RankAssumption(_)
            | Error::NotALyapunovFunction { .. }
            | Error::GammaSearchExhausted { .. }
            | Error::CycleDetected(..)
            | Error::NotAcyclic
            | Error::PreconditionFailed(_) => Outcome::Hypothesis,
        }
    }
}

/// Human-readable lines plus a machine section carrying the same results.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    pub outcome: Outcome,
    pub lines: Vec<String>,
    pub data: Value,
}

impl Report {
    pub fn new(command: impl Into<String>) -> Self {
        Report { command: command.into(), outcome: Outcome::Success, lines: Vec::new(), data: json!({}) }
    }

    pub fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.data[key] = serde_json::to_value(value).expect("report values serialise");
    }

    /// Keeps the worst outcome seen so far.
    pub fn downgrade(&mut self, outcome: Outcome) {
        if outcome.exit_code() > self.outcome.exit_code() {
            self.outcome = outcome;
        }
    }

    pub fn machine(&self) -> Value {
        let mut v = self.data.clone();
        v["command"] = json!(self.command);
        v["outcome"] = json!(self.outcome);
        v["exit_code"] = json!(self.outcome.exit_code());
        v
    }

    pub fn text(&self) -> String {
        let mut out = format!("$ {}\n", self.command);
        for l in &self.lines {
            out.push_str(l);
            out.push('\n');
        }
        out.push_str(&format!("outcome: {:?} (exit {})\n", self.outcome, self.outcome.exit_code()).to_lowercase());
        out
    }
}

pub fn number(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-3..1e6).contains(&a) {
        let s = format!("{v:.6}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.6e}")
    }
}

pub fn matrix(m: &Mat) -> String {
    let rows: Vec<String> =
        (0..m.nrows()).map(|i| format!("[{}]", m.row(i).iter().map(|&v| number(v)).collect::<Vec<_>>().join(", "))).collect();
    format!("[{}]", rows.join(", "))
}
