use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `<=`, `>=` or `==`
    pub comparison: String,
    pub passed: bool,
    /// the module invariant the check stands for
    pub invariant: String,
}

impl CheckRow {
    pub fn le(name: impl Into<String>, value: f64, tolerance: f64, invariant: &str) -> Self {
        CheckRow {
            name: name.into(),
            value,
            tolerance,
            comparison: "<=".into(),
            passed: value <= tolerance,
            invariant: invariant.into(),
        }
    }

    pub fn ge(name: impl Into<String>, value: f64, tolerance: f64, invariant: &str) -> Self {
        CheckRow {
            name: name.into(),
            value,
            tolerance,
            comparison: ">=".into(),
            passed: value >= tolerance,
            invariant: invariant.into(),
        }
    }

    /// A yes/no property, recorded as `1 == 1`.
    pub fn holds(name: impl Into<String>, ok: bool, invariant: &str) -> Self {
        CheckRow {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            tolerance: 1.0,
            comparison: "==".into(),
            passed: ok,
            invariant: invariant.into(),
        }
    }

    pub fn line(&self) -> String {
        if self.passed {
            format!("PASS {}: {:.6e} {} {:.6e}", self.name, self.value, self.comparison, self.tolerance)
        } else {
            format!(
                "FAIL {}: {:.6e} violates {} {:.6e} [{}]",
                self.name, self.value, self.comparison, self.tolerance, self.invariant
            )
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub command: String,
    pub config: String,
    pub passed: bool,
    pub checks: Vec<CheckRow>,
    pub artifacts: Vec<String>,
}

impl Summary {
    pub fn new(command: &str, config: &str) -> Self {
        Summary {
            schema_version: SUMMARY_SCHEMA_VERSION,
            command: command.into(),
            config: config.into(),
            passed: true,
            checks: vec![],
            artifacts: vec![],
        }
    }

    pub fn check(&mut self, row: CheckRow) {
        self.passed &= row.passed;
        self.checks.push(row);
    }

    pub fn artifact(&mut self, name: &str) {
        self.artifacts.push(name.into());
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join(format!("{}.json", self.command)), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn print(&self) {
        for c in &self.checks {
            println!("{}", c.line());
        }
        println!("{} {}", self.command, if self.passed { "PASS" } else { "FAIL" });
    }
}

/// Fixed-format number for CSV cells, so reruns give identical bytes.
pub fn num(x: f64) -> String {
    format!("{x:.12e}")
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { text: header.join(",") + "\n" }
    }

    pub fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, &self.text)?;
        Ok(())
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}
