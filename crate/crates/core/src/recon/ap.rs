//! Alternating projection.

use std::time::Instant;

use super::objective::epsilon_for;
use super::{check_inputs, initialize, Algorithm, ReconResult, SolverConfig, TraceEntry};
use crate::error::{Error, Result};
use crate::field::{ComplexField, Fourier2d};
use crate::metrics::relative_error;
use crate::optics::{FpmOperator, MeasurementSet};

/// Amplitude misfit `sum (sqrt(c) - |a_i z|)^2`, used for the AP trace.
fn amplitude_misfit(op: &FpmOperator, z: &ComplexField, c: &MeasurementSet) -> Result<f64> {
    let fields = op.apply_all(z)?;
    Ok(fields
        .iter()
        .flat_map(|f| f.data().iter())
        .zip(c.data())
        .map(|(psi, &ci)| (ci.sqrt() - psi.norm()).powi(2))
        .sum())
}

/// Sweeps the LEDs in source order. For each LED the exit field's modulus is
/// replaced by `sqrt(c)` and the result is written back into the spectral
/// window: `Z_w += conj(P) / max|P|^2 * (fft2(psi') - P * Z_w)`. For a binary
/// pupil this replaces the entries inside the support and leaves the rest
/// untouched.
pub fn ap_solve(
    op: &FpmOperator,
    c: &MeasurementSet,
    cfg: &SolverConfig,
    truth: Option<&ComplexField>,
) -> Result<ReconResult> {
    cfg.validate()?;
    check_inputs(op, c)?;
    let start = Instant::now();
    let m_px = op.lr_size();
    let n = op.hr_size();
    let amp_eps = epsilon_for(c, cfg.epsilon_floor).sqrt();
    let pupil = op.pupil().field.clone();
    let p_max = op.pupil().max_abs_sqr();
    if p_max == 0.0 {
        return Err(Error::Config("pupil is identically zero".into()));
    }
    let lr_fft = op.lr_fft().clone();

    let mut z = initialize(op, c)?;
    let mut trace = Vec::new();
    let mut last_mark = Instant::now();
    let mut last_mark_iter = 0;
    let mut previous: Option<f64> = None;
    let mut iterations_run = 0;

    for k in 1..=cfg.iterations {
        for led in 0..op.led_count() {
            let mut psi = op.apply_field(&z, led)?;
            for (v, &ci) in psi.data_mut().iter_mut().zip(c.image(led)) {
                *v *= ci.sqrt() / v.norm().max(amp_eps);
            }
            lr_fft.forward_inplace(&mut psi)?;
            let (r0, c0) = op.window_origin(led);
            for r in 0..m_px {
                for col in 0..m_px {
                    let p = pupil.get(r, col);
                    if p.norm_sqr() == 0.0 {
                        continue;
                    }
                    let idx = (r0 + r) * n + c0 + col;
                    let current = z.data()[idx];
                    let update = p.conj() / p_max * (psi.get(r, col) - p * current);
                    z.data_mut()[idx] = current + update;
                }
            }
        }
        iterations_run = k;
        if !z.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                reason: "ap produced a non-finite spectrum".into(),
            });
        }
        let record = cfg.record_trace_every > 0 && k % cfg.record_trace_every == 0;
        if record || cfg.stop_tolerance.is_some() {
            let objective = amplitude_misfit(op, &z, c)?;
            if record {
                let re = truth.map(|t| relative_error(&z, t)).transpose()?;
                trace.push(TraceEntry {
                    iteration: k,
                    objective,
                    xi_size: c.len(),
                    re,
                    wall_seconds: last_mark.elapsed().as_secs_f64() / (k - last_mark_iter) as f64,
                });
                last_mark = Instant::now();
                last_mark_iter = k;
            }
            if let (Some(tol), Some(prev)) = (cfg.stop_tolerance, previous) {
                if (prev - objective).abs() <= tol * f64::max(prev.abs(), f64::MIN_POSITIVE) {
                    break;
                }
            }
            previous = Some(objective);
        }
    }

    let field = Fourier2d::new(n, n)?.inverse(&z)?;
    Ok(ReconResult {
        algorithm: Algorithm::Ap,
        config: SolverConfig {
            algorithm: Algorithm::Ap,
            ..cfg.clone()
        },
        spectrum: z,
        field,
        trace,
        iterations_run,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
