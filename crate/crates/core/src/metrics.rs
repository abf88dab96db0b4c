//! Phase-invariant relative error and convergence reports.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::recon::ReconResult;

/// Global phase `phi` in `[0, 2pi)` minimising `||e^{-j phi} z - z_hat||`.
///
/// The minimiser makes `e^{-j phi} <z_hat, z>` real and non-negative, where
/// `<x, y> = sum conj(x) y`. Zero when the inner product vanishes.
pub fn aligned_phase(z: &ComplexField, z_hat: &ComplexField) -> Result<f64> {
    check_shapes(z, z_hat)?;
    let ip = z.inner(z_hat);
    if ip == Complex64::new(0.0, 0.0) {
        return Ok(0.0);
    }
    Ok((-ip.arg()).rem_euclid(TAU) % TAU)
}

/// `min_phi ||e^{-j phi} z - z_hat||^2 / ||z_hat||^2`.
///
/// Not symmetric: only `z_hat` normalises. The distance is summed at the
/// aligned phase rather than expanded, which would cancel badly when the
/// error is small.
pub fn relative_error(z: &ComplexField, z_hat: &ComplexField) -> Result<f64> {
    error_at_phase(z, z_hat, aligned_phase(z, z_hat)?)
}

/// Value of the misfit at one explicit phase, `||e^{-j phi} z - z_hat||^2 / ||z_hat||^2`.
pub fn error_at_phase(z: &ComplexField, z_hat: &ComplexField, phi: f64) -> Result<f64> {
    check_shapes(z, z_hat)?;
    let denom = z_hat.norm_sqr();
    if !(denom > 0.0) {
        return Err(Error::Metric("reference field has zero norm".into()));
    }
    let rot = Complex64::from_polar(1.0, -phi);
    let num: f64 = z
        .data()
        .iter()
        .zip(z_hat.data())
        .map(|(&a, &b)| (rot * a - b).norm_sqr())
        .sum();
    Ok(num / denom)
}

fn check_shapes(z: &ComplexField, z_hat: &ComplexField) -> Result<()> {
    if !z.same_shape(z_hat) {
        return Err(Error::Contract(format!(
            "fields differ in shape: {}x{} vs {}x{}",
            z.rows(),
            z.cols(),
            z_hat.rows(),
            z_hat.cols()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
    pub re: Option<f64>,
    pub xi_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Final RE; `None` without ground truth.
    pub relative_error: Option<f64>,
    pub aligned_phase: Option<f64>,
    pub trace: Vec<TracePoint>,
}

/// Collects the trace of `result` and, with a ground-truth spectrum, the final
/// RE and alignment phase.
pub fn trace_report(
    result: &ReconResult,
    ground_truth: Option<&ComplexField>,
) -> Result<EvalReport> {
    let (relative_error, aligned_phase) = match ground_truth {
        Some(t) => (
            Some(self::relative_error(&result.spectrum, t)?),
            Some(self::aligned_phase(&result.spectrum, t)?),
        ),
        None => (None, None),
    };
    let trace = result
        .trace
        .iter()
        .map(|e| TracePoint {
            iteration: e.iteration,
            objective: e.objective,
            re: e.re,
            xi_size: e.xi_size,
        })
        .collect();
    Ok(EvalReport {
        relative_error,
        aligned_phase,
        trace,
    })
}
