//! Experiment orchestration: instance sweeps, scans, fits and CSV output.

pub mod experiments;
pub mod fit;
pub mod io;
pub mod plot;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::model::DEFAULT_BETA;

pub use experiments::{
    run_completion, run_experiment, run_fidelity_scan, run_grad_scan, run_loss_curves, run_size_scan, CompletionReport,
    FidelityScanReport, GradScanReport, LossCurvesReport, RunOutcome, SizeScanReport, TrialFailure,
};
pub use fit::{fit_decay, median, predicted_failure, spearman, DecayFit, DEFAULT_FAILURE_THRESHOLD};

pub const MIN_N: usize = 1;
pub const MAX_N: usize = 6;
pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    LossCurves,
    SizeScan,
    GradScan,
    FidelityScan,
    Completion,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::LossCurves,
        Experiment::SizeScan,
        Experiment::GradScan,
        Experiment::FidelityScan,
        Experiment::Completion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::LossCurves => "loss-curves",
            Self::SizeScan => "size-scan",
            Self::GradScan => "grad-scan",
            Self::FidelityScan => "fidelity-scan",
            Self::Completion => "completion",
        }
    }

    /// Runs full ADAPT optimizations (as opposed to gradients at the reference).
    pub fn trains(self) -> bool {
        matches!(self, Self::LossCurves | Self::SizeScan | Self::Completion)
    }

    fn default_n(self) -> Vec<usize> {
        match self {
            Self::LossCurves | Self::Completion => vec![3],
            Self::SizeScan => vec![1, 2, 3],
            Self::GradScan => (1..=5).collect(),
            Self::FidelityScan => (1..=4).collect(),
        }
    }

    fn default_trials(self) -> usize {
        match self {
            Self::LossCurves => 1,
            _ => 20,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub n_range: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub beta: f64,
    pub losses: Vec<LossKind>,
    pub epsilon: f64,
    /// Overrides the ADAPT default of twice the pool size.
    pub max_params: Option<usize>,
    pub output_dir: Option<PathBuf>,
    /// Worker count; `None` lets the thread pool decide.
    pub threads: Option<usize>,
    pub expensive: bool,
    pub plot: bool,
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            n_range: experiment.default_n(),
            trials: experiment.default_trials(),
            base_seed: DEFAULT_SEED,
            beta: DEFAULT_BETA,
            losses: LossKind::ALL.to_vec(),
            epsilon: crate::adapt::DEFAULT_EPSILON,
            max_params: None,
            output_dir: None,
            threads: None,
            expensive: false,
            plot: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Parameter("trials must be at least 1".into()));
        }
        if self.n_range.is_empty() {
            return Err(Error::Parameter("at least one system size is required".into()));
        }
        if let Some(&n) = self.n_range.iter().find(|n| !(MIN_N..=MAX_N).contains(*n)) {
            return Err(Error::Parameter(format!("system size {n} outside [{MIN_N}, {MAX_N}]")));
        }
        if self.losses.is_empty() {
            return Err(Error::Parameter("at least one loss is required".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Parameter(format!("beta must be finite and non-negative, got {}", self.beta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Parameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.threads == Some(0) {
            return Err(Error::Parameter("threads must be at least 1".into()));
        }
        if matches!(self.experiment, Experiment::LossCurves | Experiment::Completion) && self.n_range.len() != 1 {
            return Err(Error::Parameter(format!("{} takes a single system size", self.experiment)));
        }
        let limit = if self.experiment.trains() { 3 } else { 5 };
        if !self.expensive {
            if let Some(&n) = self.n_range.iter().find(|&&n| n > limit) {
                return Err(Error::Parameter(format!(
                    "{} at n = {n} is expensive; pass --expensive to run it",
                    self.experiment
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = self.threads {
            b = b.num_threads(t);
        }
        let pool = b.build().map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}
