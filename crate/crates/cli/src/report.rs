use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Uncertified,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Uncertified => "UNCERTIFIED",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub verdict: Verdict,
    pub measured: f64,
    pub tolerance: String,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub checks: Vec<Check>,
    pub constants: BTreeMap<String, f64>,
    pub artifacts: Vec<String>,
    pub warnings: Vec<String>,
    pub tolerances: serde_json::Value,
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn new(scenario: &str, config_hash: String, seed: Option<u64>, tolerances: serde_json::Value) -> Self {
        Self {
            scenario: scenario.into(),
            config_hash,
            seed,
            checks: Vec::new(),
            constants: BTreeMap::new(),
            artifacts: Vec::new(),
            warnings: Vec::new(),
            tolerances,
            wall_clock_s: 0.0,
        }
    }

    /// Records a check; names must be unique within a report.
    pub fn check(&mut self, name: impl Into<String>, pass: bool, measured: f64, tolerance: impl Into<String>, detail: impl Into<String>) {
        self.push(name.into(), if pass { Verdict::Pass } else { Verdict::Fail }, measured, tolerance.into(), detail.into());
    }

    pub fn uncertified(&mut self, name: impl Into<String>, measured: f64, detail: impl Into<String>) {
        self.push(name.into(), Verdict::Uncertified, measured, String::new(), detail.into());
    }

    fn push(&mut self, name: String, verdict: Verdict, measured: f64, tolerance: String, detail: String) {
        assert!(self.checks.iter().all(|c| c.name != name), "duplicate check `{name}`");
        self.checks.push(Check { name, verdict, measured, tolerance, detail });
    }

    pub fn constant(&mut self, name: impl Into<String>, value: f64) {
        self.constants.insert(name.into(), value);
    }

    pub fn failed(&self) -> bool {
        self.checks.iter().any(|c| c.verdict == Verdict::Fail)
    }

    pub fn verdict(&self, name: &str) -> Option<Verdict> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.verdict)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// CSV writer for one artifact in the run directory.
pub struct Table {
    path: PathBuf,
    writer: csv::Writer<std::fs::File>,
}

impl Table {
    pub fn create(dir: &Path, name: &str, header: &[&str]) -> std::io::Result<Self> {
        let path = dir.join(name);
        let mut writer = csv::Writer::from_path(&path)?;
        writer.write_record(header)?;
        Ok(Self { path, writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> std::io::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(std::io::Error::other)
    }

    pub fn finish(mut self, report: &mut RunReport) -> std::io::Result<()> {
        self.writer.flush()?;
        let name = self.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        report.artifacts.push(name);
        Ok(())
    }
}

/// Shortest round-trip representation, stable across runs.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}
