use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{CliError, CliResult};

pub const REPORT_SCHEMA: &str = "stablim.report/1";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    AtMost,
    AtLeast,
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub statistic: f64,
    pub rule: Rule,
    pub threshold: f64,
    pub pass: bool,
}

impl Verdict {
    pub fn new(name: impl Into<String>, statistic: f64, rule: Rule, threshold: f64) -> Self {
        let pass = match rule {
            Rule::AtMost => statistic <= threshold,
            Rule::AtLeast => statistic >= threshold,
            Rule::Above => statistic > threshold,
        };
        Self {
            name: name.into(),
            statistic,
            rule,
            threshold,
            pass,
        }
    }

    pub fn at_most(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self::new(name, statistic, Rule::AtMost, threshold)
    }
}

/// Range of RNG streams one experiment consumed: streams
/// `first..first+count` of `(seed, domain)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamUse {
    pub purpose: String,
    pub seed: u64,
    pub domain: u64,
    pub first: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub version: String,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub pass: bool,
    pub verdicts: Vec<Verdict>,
    pub statistics: BTreeMap<String, f64>,
    pub streams: Vec<StreamUse>,
    pub artifacts: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let at = e.path().to_string();
            CliError::config(format!("report.{at}"), e.into_inner().to_string())
        })
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(REPORT_FILE);
        write_atomically(&path, |w| {
            serde_json::to_writer_pretty(&mut *w, self).map_err(stablim::Error::from)?;
            writeln!(w).map_err(stablim::Error::from)?;
            Ok(())
        })?;
        Ok(path)
    }

    /// The first statistic whose bits differ from `other`, in key order.
    pub fn compare_statistics(&self, other: &RunReport) -> CliResult<()> {
        for (key, &expected) in &self.statistics {
            let Some(&actual) = other.statistics.get(key) else {
                return Err(CliError::ReplayShape(format!("statistic {key} is missing from the replay")));
            };
            if expected.to_bits() != actual.to_bits() {
                return Err(CliError::Reproducibility {
                    statistic: key.clone(),
                    expected,
                    expected_bits: expected.to_bits(),
                    actual,
                    actual_bits: actual.to_bits(),
                });
            }
        }
        if let Some(key) = other.statistics.keys().find(|k| !self.statistics.contains_key(*k)) {
            return Err(CliError::ReplayShape(format!("replay produced unexpected statistic {key}")));
        }
        Ok(())
    }
}

/// Writes through `<name>.incomplete` and renames on success, so a failed run
/// leaves only files marked incomplete.
pub fn write_atomically<F>(path: &Path, body: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> CliResult<()>,
{
    let mut partial = path.as_os_str().to_owned();
    partial.push(".incomplete");
    let partial = PathBuf::from(partial);
    let file = File::create(&partial).map_err(|e| CliError::io(&partial, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| CliError::io(&partial, e))?;
    drop(w);
    fs::rename(&partial, path).map_err(|e| CliError::io(path, e))
}
