//! Report plumbing: audits, fixed-format JSON and atomic output files.

use std::path::Path;
use std::time::Duration;

use anyhow::Result;
use romkit::io::{self, Fixed};
use serde::Serialize;

pub fn fx(v: &[f64]) -> Vec<Fixed> {
    v.iter().map(|&x| Fixed(x)).collect()
}

/// One internal invariant check. `value` is the worst observed deviation
/// and the audit passes when it does not exceed `tolerance`.
#[derive(Debug, Clone, Serialize)]
pub struct Audit {
    pub name: String,
    pub passed: bool,
    pub value: Fixed,
    pub tolerance: Fixed,
}

impl Audit {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= tolerance,
            value: Fixed(value),
            tolerance: Fixed(tolerance),
        }
    }

    /// Passes when `value >= -tolerance` (margins that must not go negative).
    pub fn at_least_minus(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= -tolerance,
            value: Fixed(value),
            tolerance: Fixed(tolerance),
        }
    }

    pub fn prefixed(mut self, prefix: &str) -> Self {
        if !prefix.is_empty() {
            self.name = format!("{prefix}.{}", self.name);
        }
        self
    }
}

#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub command: &'static str,
    pub seed: u64,
    pub passed: bool,
    pub audits: Vec<Audit>,
    /// Files written next to the report, relative to the output directory.
    pub outputs: Vec<String>,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &'static str, seed: u64, audits: Vec<Audit>, outputs: Vec<String>, result: T) -> Self {
        let passed = audits.iter().all(|a| a.passed);
        Self {
            command,
            seed,
            passed,
            audits,
            outputs,
            result,
        }
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        let text = io::to_json_pretty(self)?;
        io::write_atomic(&out.join("report.json"), text.as_bytes())?;
        Ok(())
    }
}

/// Wall-clock time goes to its own file so `report.json` stays
/// byte-identical between runs.
pub fn write_timing(out: &Path, command: &str, elapsed: Duration) -> Result<()> {
    #[derive(Serialize)]
    struct Timing<'a> {
        command: &'a str,
        elapsed_seconds: Fixed,
    }
    let text = io::to_json_pretty(&Timing {
        command,
        elapsed_seconds: Fixed(elapsed.as_secs_f64()),
    })?;
    io::write_atomic(&out.join("timing.json"), text.as_bytes())?;
    Ok(())
}
