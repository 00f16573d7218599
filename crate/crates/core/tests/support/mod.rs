//! Checks shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod criteria;
pub mod fd;
pub mod scenes;

/// Outcome of one acceptance check.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!("{}: {} ({})", self.name, if self.pass { "PASS" } else { "FAIL" }, self.detail)
    }

    /// Panics with the detail line when the check failed.
    pub fn assert(&self) {
        assert!(self.pass, "{}", self.line());
    }
}
