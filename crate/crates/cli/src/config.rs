//! Experiment configuration: a versioned JSON document naming one
//! experiment, its payload, and the Monte Carlo settings.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stablim::ecf::{ThetaGrid, DEFAULT_DELTA, DEFAULT_DIRECTIONS, DEFAULT_RADII};
use stablim::laws::LimitLaw;
use stablim::matalg::{spectral_radius, SquareMatrix};
use stablim::processes::ProcessSpec;
use stablim::series::IncrementLaw;
use stablim::verify::{EventFamily, Scaled};

use crate::error::{CliError, CliResult};

pub const SCHEMA: &str = "stablim.experiment/1";

const MAX_TERMS: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SampleLaw,
    Series,
    Lemma,
    Simulate,
    VerifyMixing,
    VerifyStable,
    Conditions,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExperimentKind::SampleLaw => "sample-law",
            ExperimentKind::Series => "series",
            ExperimentKind::Lemma => "lemma",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::VerifyMixing => "verify-mixing",
            ExperimentKind::VerifyStable => "verify-stable",
            ExperimentKind::Conditions => "conditions",
        };
        f.write_str(s)
    }
}

/// Points at which characteristic functions are compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// Origin plus 20 directions at radii 0.5, 1 and 2.
    Default,
    Spherical { directions: usize, radii: Vec<f64> },
    Points { points: Vec<Vec<f64>> },
}

impl GridSpec {
    pub fn build(&self, dim: usize) -> CliResult<ThetaGrid> {
        let grid = match self {
            GridSpec::Default => ThetaGrid::spherical(dim, DEFAULT_DIRECTIONS, &DEFAULT_RADII),
            GridSpec::Spherical { directions, radii } => ThetaGrid::spherical(dim, *directions, radii),
            GridSpec::Points { points } => ThetaGrid::new(points.clone()),
        }
        .map_err(|e| CliError::config("grid", e.to_string()))?;
        if grid.dim() != dim {
            return Err(CliError::config(
                "grid",
                format!("points are {}-dimensional, the experiment is {dim}-dimensional", grid.dim()),
            ));
        }
        Ok(grid)
    }
}

/// How many series terms to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Truncation {
    Terms(usize),
    Tolerance(f64),
}

/// Whether a verify-mixing run expects the limit to be mixing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingExpectation {
    #[default]
    Mixing,
    NonMixing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    SampleLaw {
        law: LimitLaw,
    },
    Series {
        p: SquareMatrix,
        law: LimitLaw,
        truncation: Truncation,
        /// Also compare against direct draws of the increment law.
        #[serde(default)]
        compare_direct: bool,
        #[serde(default = "default_cov_tolerance")]
        cov_tolerance: f64,
    },
    Lemma {
        p: SquareMatrix,
        law: IncrementLaw,
        horizon: usize,
        #[serde(default = "default_last_term_tolerance")]
        last_term_tolerance: f64,
    },
    Simulate {
        process: ProcessSpec,
        n: usize,
        /// Number of leading paths written in full to `paths.csv`.
        #[serde(default = "default_csv_paths")]
        csv_paths: usize,
    },
    VerifyMixing {
        process: ProcessSpec,
        n: usize,
        #[serde(default)]
        r: Option<usize>,
        #[serde(default = "default_scaled")]
        scaled: Scaled,
        #[serde(default)]
        events: Option<EventFamily>,
        #[serde(default)]
        expect: MixingExpectation,
        #[serde(default = "default_min_gap")]
        min_gap: f64,
    },
    VerifyStable {
        process: ProcessSpec,
        n: usize,
        #[serde(default)]
        r: Option<usize>,
        #[serde(default = "default_scaled")]
        scaled: Scaled,
        #[serde(default)]
        events: Option<EventFamily>,
    },
    Conditions {
        process: ProcessSpec,
        checkpoints: Vec<usize>,
        lags: Vec<usize>,
        #[serde(default = "default_condition_tolerance")]
        tolerance: f64,
        k_grid: Vec<f64>,
        tightness_bound: f64,
    },
}

fn default_cov_tolerance() -> f64 {
    0.05
}

fn default_last_term_tolerance() -> f64 {
    1e-3
}

fn default_csv_paths() -> usize {
    16
}

fn default_scaled() -> Scaled {
    Scaled::Qu
}

fn default_min_gap() -> f64 {
    0.05
}

fn default_condition_tolerance() -> f64 {
    1e-8
}

fn default_workers() -> usize {
    1
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_grid() -> GridSpec {
    GridSpec::Default
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub n_paths: usize,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(&path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn kind(&self) -> ExperimentKind {
        match self.experiment {
            Experiment::SampleLaw { .. } => ExperimentKind::SampleLaw,
            Experiment::Series { .. } => ExperimentKind::Series,
            Experiment::Lemma { .. } => ExperimentKind::Lemma,
            Experiment::Simulate { .. } => ExperimentKind::Simulate,
            Experiment::VerifyMixing { .. } => ExperimentKind::VerifyMixing,
            Experiment::VerifyStable { .. } => ExperimentKind::VerifyStable,
            Experiment::Conditions { .. } => ExperimentKind::Conditions,
        }
    }

    /// Checks every payload before any sampling starts. Hypothesis failures
    /// such as `ϱ(P) ≥ 1` come back as core errors, the rest as config errors.
    pub fn validate(&self) -> CliResult<()> {
        if self.schema != SCHEMA {
            return Err(CliError::config("schema", format!("expected {SCHEMA:?}, got {:?}", self.schema)));
        }
        if self.workers == 0 {
            return Err(CliError::config("workers", "must be positive"));
        }
        if self.n_paths == 0 {
            return Err(CliError::config("n_paths", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CliError::config("delta", "must lie in (0, 1)"));
        }
        let dim = match &self.experiment {
            Experiment::SampleLaw { law } => law.dim(),
            Experiment::Series {
                p,
                law,
                truncation,
                cov_tolerance,
                ..
            } => {
                same_dim("experiment.law", p, law.dim())?;
                check_contraction(p)?;
                if let Truncation::Tolerance(t) = truncation {
                    if !(*t > 0.0 && t.is_finite()) {
                        return Err(CliError::config("experiment.truncation.tolerance", "must be positive"));
                    }
                }
                if !(*cov_tolerance > 0.0) {
                    return Err(CliError::config("experiment.cov_tolerance", "must be positive"));
                }
                p.dim()
            }
            Experiment::Lemma {
                p,
                law,
                horizon,
                last_term_tolerance,
            } => {
                use stablim::series::IncrementSampler;
                same_dim("experiment.law", p, law.dim())?;
                check_contraction(p)?;
                if *horizon == 0 {
                    return Err(CliError::config("experiment.horizon", "must be positive"));
                }
                if !(*last_term_tolerance > 0.0) {
                    return Err(CliError::config("experiment.last_term_tolerance", "must be positive"));
                }
                p.dim()
            }
            Experiment::Simulate { process, n, .. } => {
                process.validate()?;
                positive("experiment.n", *n)?;
                process.dim()
            }
            Experiment::VerifyMixing {
                process,
                n,
                r,
                events,
                expect,
                min_gap,
                ..
            } => {
                process.validate()?;
                positive("experiment.n", *n)?;
                check_r(*r)?;
                check_events(events.as_ref())?;
                if *expect == MixingExpectation::NonMixing {
                    if !matches!(process, ProcessSpec::RandomScaled { .. }) {
                        return Err(CliError::config(
                            "experiment.expect",
                            "non_mixing is only available for random_scaled processes",
                        ));
                    }
                    if !(*min_gap > 0.0) {
                        return Err(CliError::config("experiment.min_gap", "must be positive"));
                    }
                }
                process.dim()
            }
            Experiment::VerifyStable {
                process, n, r, events, ..
            } => {
                process.validate()?;
                positive("experiment.n", *n)?;
                check_r(*r)?;
                check_events(events.as_ref())?;
                process.dim()
            }
            Experiment::Conditions {
                process,
                checkpoints,
                lags,
                tolerance,
                k_grid,
                tightness_bound,
            } => {
                process.validate()?;
                if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[0] >= w[1]) || checkpoints[0] == 0 {
                    return Err(CliError::config(
                        "experiment.checkpoints",
                        "must be a non-empty strictly increasing list of positive indices",
                    ));
                }
                if lags.is_empty() || lags.iter().any(|&l| l == 0 || l > checkpoints[0]) {
                    return Err(CliError::config(
                        "experiment.lags",
                        "must be non-empty, positive, and at most the first checkpoint",
                    ));
                }
                if k_grid.is_empty() || k_grid.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
                    return Err(CliError::config("experiment.k_grid", "must be non-empty and positive"));
                }
                if !(*tolerance > 0.0) {
                    return Err(CliError::config("experiment.tolerance", "must be positive"));
                }
                if !(*tightness_bound > 0.0 && *tightness_bound <= 1.0) {
                    return Err(CliError::config("experiment.tightness_bound", "must lie in (0, 1]"));
                }
                process.dim()
            }
        };
        self.grid.build(dim)?;
        Ok(())
    }
}

fn positive(field: &str, v: usize) -> CliResult<()> {
    if v == 0 {
        return Err(CliError::config(field, "must be positive"));
    }
    Ok(())
}

fn check_r(r: Option<usize>) -> CliResult<()> {
    if r.is_some_and(|r| r > MAX_TERMS) {
        return Err(CliError::config("experiment.r", format!("at most {MAX_TERMS} terms")));
    }
    Ok(())
}

fn check_events(events: Option<&EventFamily>) -> CliResult<()> {
    if let Some(f) = events {
        EventFamily::new(f.events().to_vec()).map_err(|e| CliError::config("experiment.events", e.to_string()))?;
    }
    Ok(())
}

fn same_dim(field: &str, p: &SquareMatrix, dim: usize) -> CliResult<()> {
    if p.dim() != dim {
        return Err(CliError::config(
            field,
            format!("law is {dim}-dimensional but p is {}x{}", p.dim(), p.dim()),
        ));
    }
    Ok(())
}

fn check_contraction(p: &SquareMatrix) -> CliResult<()> {
    let rho = spectral_radius(p)?;
    if rho >= 1.0 {
        return Err(stablim::Error::HypothesisViolation(format!("spectral radius of p is {rho}, not below 1")).into());
    }
    Ok(())
}
