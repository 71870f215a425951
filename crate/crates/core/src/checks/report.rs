use std::fmt::Write as _;

use serde::Serialize;

/// Outcome of one numerical oracle.
///
/// `margin` is the worst observed slack in the units of the check: positive
/// (or zero) when the property holds everywhere, negative at the witness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    pub tolerance: f64,
    pub margin: f64,
    pub witness: Option<String>,
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: true,
            samples: 0,
            tolerance,
            margin: f64::INFINITY,
            witness: None,
            notes: Vec::new(),
        }
    }

    /// Records one comparison with slack `margin`; the first failure's
    /// description becomes the witness.
    pub fn record(&mut self, margin: f64, describe: impl FnOnce() -> String) {
        self.samples += 1;
        let ok = margin >= -self.tolerance;
        if margin < self.margin || margin.is_nan() {
            self.margin = margin;
        }
        if !ok && self.passed {
            self.passed = false;
            self.witness = Some(format!("{} (margin {margin:.3e})", describe()));
        }
    }

    /// Boolean form of [`CheckReport::record`].
    pub fn expect(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.samples += 1;
        if !ok && self.passed {
            self.passed = false;
            self.margin = self.margin.min(-1.0);
            self.witness = Some(describe());
        }
    }

    pub fn fail(&mut self, witness: impl Into<String>) {
        self.samples += 1;
        if self.passed {
            self.passed = false;
            self.witness = Some(witness.into());
        }
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Folds another report's samples and first failure into this one.
    pub fn absorb(&mut self, other: &CheckReport) {
        self.samples += other.samples;
        if other.margin < self.margin {
            self.margin = other.margin;
        }
        if !other.passed && self.passed {
            self.passed = false;
            self.witness = Some(format!("{}: {}", other.name, other.witness.clone().unwrap_or_default()));
        }
    }

    pub fn status(&self) -> &'static str {
        if self.passed {
            "pass"
        } else {
            "fail"
        }
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serialises");
        v["status"] = self.status().into();
        if !self.margin.is_finite() {
            v["margin"] = serde_json::Value::Null;
        }
        v.to_string()
    }
}

/// Fixed-width table with one row per report.
pub fn render_table(reports: &[CheckReport]) -> String {
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}  status  {:>8}  {:>11}  {:>9}  witness", "name", "samples", "margin", "tol");
    for r in reports {
        let margin = if r.margin.is_finite() { format!("{:>11.3e}", r.margin) } else { format!("{:>11}", "-") };
        let _ = writeln!(
            s,
            "{:<width$}  {:<6}  {:>8}  {}  {:>9.1e}  {}",
            r.name,
            r.status(),
            r.samples,
            margin,
            r.tolerance,
            r.witness.as_deref().unwrap_or("")
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failure_carries_witness() {
        let mut r = CheckReport::new("demo", 1e-9);
        r.record(0.5, || "fine".into());
        assert!(r.passed && r.witness.is_none());
        r.record(-1e-3, || "x = 2".into());
        r.record(-1.0, || "later".into());
        assert!(!r.passed);
        assert!(r.witness.as_deref().unwrap().starts_with("x = 2"));
        assert_eq!(r.samples, 3);
        assert_eq!(r.margin, -1.0);
    }

    #[test]
    fn json_has_status() {
        let r = CheckReport::new("demo", 0.0);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["status"], "pass");
        assert!(v["margin"].is_null());
        assert!(render_table(&[r]).contains("demo"));
    }
}
