//! Batch experiments: a JSON-serializable spec, seven runners and a CSV
//! report format with a metadata header.

mod report;
mod runners;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::EstimatorOptions;
use crate::measures::{self, GridMeasure, MixtureComponent};

pub use report::{Cell, ExperimentReport, Metadata};
pub use runners::{
    run_clt_monotone, run_estimate, run_herbst, run_optimal_cover, run_regularize, run_shearer_fuzz, run_verify_subadd,
    HERBST_DEFAULT_T, SUBADD_ROUNDOFF,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CltMonotone,
    VerifySubadd,
    Regularize,
    Herbst,
    ShearerFuzz,
    OptimalCover,
    Estimate,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::CltMonotone,
        Self::VerifySubadd,
        Self::Regularize,
        Self::Herbst,
        Self::ShearerFuzz,
        Self::OptimalCover,
        Self::Estimate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::CltMonotone => "clt-monotone",
            Self::VerifySubadd => "verify-subadd",
            Self::Regularize => "regularize",
            Self::Herbst => "herbst",
            Self::ShearerFuzz => "shearer-fuzz",
            Self::OptimalCover => "optimal-cover",
            Self::Estimate => "estimate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Name of the main CSV output.
    pub fn output_file(self) -> &'static str {
        match self {
            Self::CltMonotone => "monotone.csv",
            Self::VerifySubadd => "subadd.csv",
            Self::Regularize => "regularize.csv",
            Self::Herbst => "herbst.csv",
            Self::ShearerFuzz => "shearer-fuzz.csv",
            Self::OptimalCover => "optimal-cover.csv",
            Self::Estimate => "estimate.csv",
        }
    }

    fn default_n_range(self) -> Vec<usize> {
        match self {
            Self::CltMonotone => (1..=6).collect(),
            Self::VerifySubadd => (1..=4).collect(),
            Self::Regularize => vec![1, 2, 4],
            Self::ShearerFuzz => vec![3],
            Self::Herbst | Self::OptimalCover | Self::Estimate => vec![1],
        }
    }

    fn default_base(self) -> BaseMeasure {
        match self {
            Self::Regularize => BaseMeasure::Rademacher,
            _ => BaseMeasure::Gaussian { mean: 0.0, variance: 1.0 },
        }
    }

    fn default_trials(self) -> usize {
        match self {
            Self::VerifySubadd => 1000,
            Self::ShearerFuzz => 500,
            _ => 1,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A base measure, either a named family rendered on the spec grid or a
/// measure file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BaseMeasure {
    Gaussian {
        mean: f64,
        variance: f64,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
    Uniform,
    /// Atoms at ±1; the lattice spacing is the grid spacing.
    Rademacher,
    File {
        path: PathBuf,
    },
}

impl BaseMeasure {
    pub fn build(&self, grid: &GridSpec) -> Result<GridMeasure> {
        match self {
            Self::Gaussian { mean, variance } => measures::gaussian(*mean, *variance, grid.lo, grid.hi, grid.m),
            Self::Mixture { components } => measures::gaussian_mixture(components, grid.lo, grid.hi, grid.m),
            Self::Uniform => measures::uniform(grid.lo, grid.hi, grid.m),
            Self::Rademacher => measures::rademacher(grid.spacing()),
            Self::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                crate::io::parse_measure_csv(&text)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub m: usize,
}

impl GridSpec {
    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.m - 1) as f64
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { lo: -8.0, hi: 8.0, m: 2049 }
    }
}

/// Everything one run depends on. Fields left out of a JSON config take
/// per-kind defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub base_measure: Option<BaseMeasure>,
    #[serde(default)]
    pub n_range: Option<Vec<usize>>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub estimator_options: EstimatorOptions,
    /// Not part of the echo or the hash, so moving the output does not
    /// change the report.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Regularization scale for `regularize`.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub trials: Option<usize>,
    /// Largest alphabet size for `shearer-fuzz`.
    #[serde(default = "default_alphabet_max")]
    pub alphabet_max: usize,
    /// Tail offsets for `herbst`.
    #[serde(default)]
    pub t_values: Option<Vec<f64>>,
    /// Sub-Gaussian constant tested by `herbst`.
    #[serde(default = "default_tail_constant")]
    pub tail_constant: f64,
    /// A fixed cover for `verify-subadd` instead of random ones.
    #[serde(default)]
    pub cover_file: Option<PathBuf>,
    /// Extra `verify-subadd` trials on grid Gaussians whose convolution is
    /// estimated rather than known.
    #[serde(default)]
    pub grid_trials: usize,
    /// Input for `optimal-cover`.
    #[serde(default)]
    pub subset_values_file: Option<PathBuf>,
    /// Component variances for `optimal-cover` when no file is given.
    #[serde(default)]
    pub variances: Option<Vec<f64>>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from(".")
}

fn default_delta() -> f64 {
    1.0
}

fn default_alphabet_max() -> usize {
    4
}

fn default_tail_constant() -> f64 {
    1.0
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            base_measure: None,
            n_range: None,
            grid: GridSpec::default(),
            estimator_options: EstimatorOptions::default(),
            output_dir: default_output_dir(),
            seed: 0,
            delta: default_delta(),
            trials: None,
            alphabet_max: default_alphabet_max(),
            t_values: None,
            tail_constant: default_tail_constant(),
            cover_file: None,
            grid_trials: 0,
            subset_values_file: None,
            variances: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn n_values(&self) -> Vec<usize> {
        self.n_range.clone().unwrap_or_else(|| self.kind.default_n_range())
    }

    pub fn base(&self) -> BaseMeasure {
        self.base_measure.clone().unwrap_or_else(|| self.kind.default_base())
    }

    pub fn trial_count(&self) -> usize {
        self.trials.unwrap_or_else(|| self.kind.default_trials())
    }

    /// Estimator options with the spec seed applied.
    pub fn estimator(&self) -> EstimatorOptions {
        EstimatorOptions { seed: self.seed, ..self.estimator_options.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidSpec(m));
        let n = self.n_values();
        if n.is_empty() {
            return invalid("n_range must be nonempty".into());
        }
        if n.contains(&0) {
            return invalid("n_range entries must be at least 1".into());
        }
        if self.grid.m < 3 {
            return invalid(format!("grid needs m >= 3, got {}", self.grid.m));
        }
        if !(self.grid.lo.is_finite() && self.grid.hi.is_finite() && self.grid.lo < self.grid.hi) {
            return invalid(format!("grid needs finite lo < hi, got [{}, {}]", self.grid.lo, self.grid.hi));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return invalid(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.tail_constant > 0.0 && self.tail_constant.is_finite()) {
            return invalid(format!("tail_constant must be positive, got {}", self.tail_constant));
        }
        if self.alphabet_max == 0 {
            return invalid("alphabet_max must be at least 1".into());
        }
        match self.kind {
            ExperimentKind::VerifySubadd if n.iter().any(|&k| k > crate::covers::MAX_ELEMENTS) => {
                return invalid("verify-subadd supports at most 16 components".into());
            }
            ExperimentKind::ShearerFuzz if n.iter().any(|&k| k > 6) => {
                return invalid("shearer-fuzz supports at most 6 coordinates".into());
            }
            _ => {}
        }
        if let Some(t) = &self.t_values {
            if t.is_empty() || t.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
                return invalid("t_values must be a nonempty list of positive numbers".into());
            }
        }
        self.estimator_options.validate().map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    /// Hex SHA-256 of the canonical JSON rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Validates the spec and runs the matching experiment.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    match spec.kind {
        ExperimentKind::CltMonotone => run_clt_monotone(spec),
        ExperimentKind::VerifySubadd => run_verify_subadd(spec),
        ExperimentKind::Regularize => run_regularize(spec),
        ExperimentKind::Herbst => run_herbst(spec),
        ExperimentKind::ShearerFuzz => run_shearer_fuzz(spec),
        ExperimentKind::OptimalCover => run_optimal_cover(spec),
        ExperimentKind::Estimate => run_estimate(spec),
    }
}

/// Process exit code for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numerical(_) => 3,
        Error::InfeasibleCover { .. } => 1,
        _ => 2,
    }
}

/// Exit code for a finished report: 1 on any violation, the error's code
/// if a row failed, 0 otherwise.
pub fn report_exit_code(report: &ExperimentReport) -> i32 {
    if let Some(err) = &report.failure {
        return exit_code(err);
    }
    if report.violations.is_empty() {
        0
    } else {
        1
    }
}
