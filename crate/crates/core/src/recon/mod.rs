//! Reconstruction engines behind one interface.
//!
//! * `ap`: alternating projection, one sequential LED sweep per iteration.
//! * `wfp`: gradient descent on the intensity misfit `sum (|a_i z|^2 - c_i)^2`.
//! * `pwfp`: gradient descent on the Poisson negative log-likelihood.
//! * `tpwfp`: `pwfp` with the per-iteration outlier truncation of the gradient.

mod ap;
mod gradient;
mod init;
mod objective;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::optics::{FpmOperator, MeasurementSet};

pub use ap::ap_solve;
pub use gradient::{pwfp_solve, tpwfp_solve, wfp_solve};
pub use init::{initialize, upsample_bilinear};
pub use objective::{
    epsilon_for, gradient_intensity, gradient_poisson, objective_intensity, objective_poisson,
    step_size, truncation_set, TruncationMask,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ap,
    Wfp,
    Pwfp,
    Tpwfp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Ap,
        Algorithm::Wfp,
        Algorithm::Pwfp,
        Algorithm::Tpwfp,
    ];

    /// Iteration budgets used for the runtime comparison: 100/1000/200/200.
    pub fn default_iterations(self) -> usize {
        match self {
            Algorithm::Ap => 100,
            Algorithm::Wfp => 1000,
            Algorithm::Pwfp | Algorithm::Tpwfp => 200,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ap => "ap",
            Algorithm::Wfp => "wfp",
            Algorithm::Pwfp => "pwfp",
            Algorithm::Tpwfp => "tpwfp",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ap" => Ok(Algorithm::Ap),
            "wfp" => Ok(Algorithm::Wfp),
            "pwfp" => Ok(Algorithm::Pwfp),
            "tpwfp" => Ok(Algorithm::Tpwfp),
            other => Err(Error::Config(format!("unknown solver '{other}'"))),
        }
    }
}

/// Denominator of the step schedule `min(1 - exp(-k/k0), mu_max) / d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(try_from = "DenominatorRepr", into = "DenominatorRepr")]
pub enum StepDenominator {
    /// Number of measured pixels `m`.
    #[default]
    MeasurementCount,
    Custom(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DenominatorRepr {
    Value(f64),
    Name(String),
}

impl TryFrom<DenominatorRepr> for StepDenominator {
    type Error = String;
    fn try_from(r: DenominatorRepr) -> std::result::Result<Self, String> {
        match r {
            DenominatorRepr::Name(s) if s == "m" => Ok(StepDenominator::MeasurementCount),
            DenominatorRepr::Name(s) => Err(format!(
                "step_denominator must be \"m\" or a number, got \"{s}\""
            )),
            DenominatorRepr::Value(v) if v > 0.0 && v.is_finite() => Ok(StepDenominator::Custom(v)),
            DenominatorRepr::Value(v) => Err(format!("step_denominator must be positive, got {v}")),
        }
    }
}

impl From<StepDenominator> for DenominatorRepr {
    fn from(d: StepDenominator) -> Self {
        match d {
            StepDenominator::MeasurementCount => DenominatorRepr::Name("m".into()),
            StepDenominator::Custom(v) => DenominatorRepr::Value(v),
        }
    }
}

impl StepDenominator {
    pub fn value(self, m: usize) -> f64 {
        match self {
            StepDenominator::MeasurementCount => m as f64,
            StepDenominator::Custom(v) => v,
        }
    }
}

/// Normalisation of the signal-dependent factor in the truncation rule
/// `|c_i - b_i| <= a_h * mean|c - b| * factor_i`, with `b_i = |a_i z|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TruncationScale {
    /// `factor_i = b_i / mean(b)`: scale free.
    MeanIntensity,
    /// `factor_i = b_i / ||z||` taken literally; depends on the absolute scale of `z`.
    /// Under the orthonormal FFT it discards nearly every pixel, so the shipped
    /// configs select `MeanIntensity`.
    #[default]
    SpectrumNorm,
    /// `factor_i = |a_i z| / ||z||`, the truncated Wirtinger flow form.
    AmplitudeOverNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub iterations: usize,
    /// Truncation threshold; `inf` disables truncation.
    pub a_h: f64,
    pub k0: f64,
    pub mu_max: f64,
    pub step_denominator: StepDenominator,
    /// Floor on `|a_i z|^2`, relative to the mean measured intensity.
    pub epsilon_floor: f64,
    /// Record a trace point every this many iterations (0 disables the trace).
    pub record_trace_every: usize,
    pub truncation: TruncationScale,
    /// Optional stop on relative objective change; off when `None`.
    pub stop_tolerance: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::for_algorithm(Algorithm::Tpwfp)
    }
}

impl SolverConfig {
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            iterations: algorithm.default_iterations(),
            a_h: if algorithm == Algorithm::Pwfp {
                f64::INFINITY
            } else {
                25.0
            },
            k0: 330.0,
            mu_max: 0.1,
            step_denominator: StepDenominator::MeasurementCount,
            epsilon_floor: 1e-12,
            record_trace_every: 10,
            truncation: TruncationScale::SpectrumNorm,
            stop_tolerance: None,
        }
    }

    pub fn with_denominator(mut self, d: f64) -> Self {
        self.step_denominator = StepDenominator::Custom(d);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if !(self.a_h > 0.0) {
            return Err(Error::Config(format!(
                "a_h must be positive or inf, got {}",
                self.a_h
            )));
        }
        if self.algorithm == Algorithm::Pwfp && self.a_h.is_finite() {
            return Err(Error::Config(
                "pwfp runs without truncation; a_h must be inf".into(),
            ));
        }
        for (name, v) in [
            ("k0", self.k0),
            ("mu_max", self.mu_max),
            ("epsilon_floor", self.epsilon_floor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if let StepDenominator::Custom(v) = self.step_denominator {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "step_denominator must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Objective of the iterate after this iteration (algorithm specific).
    pub objective: f64,
    /// Measurements that entered the update (`m` for untruncated solvers).
    pub xi_size: usize,
    /// Relative error against the ground-truth spectrum, when supplied.
    pub re: Option<f64>,
    /// Mean wall time per iteration since the previous trace point.
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ReconResult {
    pub algorithm: Algorithm,
    pub config: SolverConfig,
    /// Recovered HR spectrum (centred layout).
    pub spectrum: ComplexField,
    /// `ifft2(spectrum)`.
    pub field: ComplexField,
    pub trace: Vec<TraceEntry>,
    pub iterations_run: usize,
    pub wall_seconds: f64,
}

impl ReconResult {
    /// True when spectra and traces agree bit for bit, ignoring timings.
    pub fn same_numbers(&self, other: &ReconResult) -> bool {
        let bits = |f: &ComplexField| {
            f.data()
                .iter()
                .map(|z| (z.re.to_bits(), z.im.to_bits()))
                .collect::<Vec<_>>()
        };
        let trace = |t: &[TraceEntry]| {
            t.iter()
                .map(|e| {
                    (
                        e.iteration,
                        e.objective.to_bits(),
                        e.xi_size,
                        e.re.map(f64::to_bits),
                    )
                })
                .collect::<Vec<_>>()
        };
        self.iterations_run == other.iterations_run
            && bits(&self.spectrum) == bits(&other.spectrum)
            && trace(&self.trace) == trace(&other.trace)
    }
}

/// Runs the solver selected by `cfg.algorithm`.
///
/// `truth`, when given, is the ground-truth spectrum used only to fill the RE
/// column of the trace.
pub fn solve(
    op: &FpmOperator,
    c: &MeasurementSet,
    cfg: &SolverConfig,
    truth: Option<&ComplexField>,
) -> Result<ReconResult> {
    match cfg.algorithm {
        Algorithm::Ap => ap_solve(op, c, cfg, truth),
        Algorithm::Wfp => wfp_solve(op, c, cfg, truth),
        Algorithm::Pwfp => pwfp_solve(op, c, cfg, truth),
        Algorithm::Tpwfp => tpwfp_solve(op, c, cfg, truth),
    }
}

pub(crate) fn check_inputs(op: &FpmOperator, c: &MeasurementSet) -> Result<()> {
    if c.size() != op.lr_size() || c.led_count() != op.led_count() {
        return Err(Error::Contract(format!(
            "measurements hold {} images of {}px, operator expects {} of {}px",
            c.led_count(),
            c.size(),
            op.led_count(),
            op.lr_size()
        )));
    }
    Ok(())
}
