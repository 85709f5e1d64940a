//! Versioned JSON report written next to every run's data files.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use evoeq_core::EvoError;
use serde::Serialize;
use serde_json::Value;

pub const SCHEMA: &str = "evoeq-report";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// `value <= limit`
    AtMost,
    /// `value > limit`
    Above,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub version: u32,
    pub command: String,
    pub pass: bool,
    pub nu: Option<f64>,
    /// Positivity constant of the solve, when there is one.
    pub c: Option<f64>,
    pub checks: Vec<Check>,
    pub error: Option<String>,
    pub outputs: Vec<String>,
    pub details: Value,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            schema: SCHEMA,
            version: SCHEMA_VERSION,
            command: command.into(),
            pass: true,
            nu: None,
            c: None,
            checks: Vec::new(),
            error: None,
            outputs: Vec::new(),
            details: Value::Null,
        }
    }

    pub fn check(&mut self, name: &str, value: f64, bound: Bound, limit: f64) {
        let pass = match bound {
            Bound::AtMost => value <= limit,
            Bound::Above => value > limit,
        };
        self.pass &= pass;
        self.checks.push(Check { name: name.into(), value, bound, limit, pass });
    }

    pub fn failed(command: &str, err: &Failure) -> Self {
        let mut r = Report::new(command);
        r.pass = false;
        r.error = Some(err.to_string());
        r
    }

    pub fn write(&mut self, dir: &Path) -> Result<PathBuf, Failure> {
        self.outputs.sort();
        let path = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Failure::Io(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    /// A solver hypothesis does not hold for the given data.
    Hypothesis(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Hypothesis(_) => 2,
            Failure::Usage(_) | Failure::Io(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Hypothesis(m) => write!(f, "hypothesis violated: {m}"),
            Failure::Io(m) => write!(f, "io: {m}"),
        }
    }
}

impl From<EvoError> for Failure {
    fn from(e: EvoError) -> Self {
        use EvoError::*;
        let msg = e.to_string();
        match e {
            NoCertificate { .. } => Failure::Hypothesis(format!("Re z M(z) >= c > 0 fails: {msg}")),
            ContractionViolation { .. } => Failure::Hypothesis(format!("contraction needs nu above the Lipschitz bound: {msg}")),
            NotRegular => Failure::Hypothesis(format!("det(z M0 + M1) must not vanish identically: {msg}")),
            InconsistentInitialValue { .. } => {
                Failure::Hypothesis(format!("the initial value must lie in the consistent subspace: {msg}"))
            }
            NotInvertible { .. } | NonConvergence { .. } | ToleranceConflict { .. } | NumericalAmbiguity { .. } => {
                Failure::Hypothesis(msg)
            }
            Degenerate(_) | InvalidCoefficient(_) | UnderflowWindow => Failure::Hypothesis(msg),
            Io(_) => Failure::Io(msg),
            InvalidArgument(_) | ShapeMismatch(_) | DomainError(_) | UnknownProblem(_) | Parse(_) => Failure::Usage(msg),
        }
    }
}

pub fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

/// Creates `dir/name` and hands a buffered writer to `body`.
pub fn write_file(
    dir: &Path,
    name: &str,
    report: &mut Report,
    body: impl FnOnce(&mut dyn Write) -> evoeq_core::Result<()>,
) -> Result<(), Failure> {
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| Failure::Io(e.to_string()))?;
    report.outputs.push(name.into());
    Ok(())
}
