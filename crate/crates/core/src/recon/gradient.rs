//! Gradient-descent solvers: WFP (intensity misfit), PWFP and TPWFP (Poisson).

use std::time::Instant;

use log::debug;

use super::objective::{
    axpy_step, epsilon_for, intensities, intensity_value, poisson_value, step_size,
    truncation_from, weighted_fields,
};
use super::{check_inputs, initialize, Algorithm, ReconResult, SolverConfig, TraceEntry};
use crate::error::{Error, Result};
use crate::field::{ComplexField, Fourier2d};
use crate::metrics::relative_error;
use crate::optics::{FpmOperator, MeasurementSet};

/// Iterates whose norm exceeds the starting norm by this factor are treated as diverged.
const DIVERGENCE_GROWTH: f64 = 1e6;

#[derive(Clone, Copy, PartialEq)]
enum Loss {
    Intensity,
    Poisson,
}

/// Truncated Poisson Wirtinger flow.
///
/// Each iteration `k = 1, 2, ...` recomputes the kept set from the current
/// residuals, takes `mu(k)` from the step schedule, and moves
/// `z <- z - mu * grad_xi`.
pub fn tpwfp_solve(
    op: &FpmOperator,
    c: &MeasurementSet,
    cfg: &SolverConfig,
    truth: Option<&ComplexField>,
) -> Result<ReconResult> {
    run(op, c, cfg, truth, Loss::Poisson, Algorithm::Tpwfp)
}

/// Poisson Wirtinger flow: the truncated solver with `a_h = inf`.
pub fn pwfp_solve(
    op: &FpmOperator,
    c: &MeasurementSet,
    cfg: &SolverConfig,
    truth: Option<&ComplexField>,
) -> Result<ReconResult> {
    let cfg = SolverConfig {
        a_h: f64::INFINITY,
        ..cfg.clone()
    };
    run(op, c, &cfg, truth, Loss::Poisson, Algorithm::Pwfp)
}

/// Wirtinger flow on the intensity misfit, same start and schedule.
pub fn wfp_solve(
    op: &FpmOperator,
    c: &MeasurementSet,
    cfg: &SolverConfig,
    truth: Option<&ComplexField>,
) -> Result<ReconResult> {
    run(op, c, cfg, truth, Loss::Intensity, Algorithm::Wfp)
}

fn run(
    op: &FpmOperator,
    c: &MeasurementSet,
    cfg: &SolverConfig,
    truth: Option<&ComplexField>,
    loss: Loss,
    algorithm: Algorithm,
) -> Result<ReconResult> {
    cfg.validate()?;
    check_inputs(op, c)?;
    let start = Instant::now();
    let m = c.len();
    let eps = epsilon_for(c, cfg.epsilon_floor);
    let cd = c.data();
    let value = |b: &[f64]| match loss {
        Loss::Poisson => poisson_value(b, cd, eps),
        Loss::Intensity => intensity_value(b, cd),
    };

    let mut z = initialize(op, c)?;
    let start_norm = z.norm();
    let mut trace = Vec::new();
    let mut last_mark = Instant::now();
    let mut last_mark_iter = 0;
    let mut previous: Option<f64> = None;
    let mut iterations_run = 0;

    for k in 1..=cfg.iterations {
        let fields = op.apply_all(&z)?;
        let b = intensities(&fields);
        let objective = value(&b);
        if !objective.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                reason: format!("{algorithm} objective became {objective}"),
            });
        }
        if let (Some(tol), Some(prev)) = (cfg.stop_tolerance, previous) {
            if (prev - objective).abs() <= tol * prev.abs().max(f64::MIN_POSITIVE) {
                debug!("{algorithm}: relative objective change below {tol} at iteration {k}");
                break;
            }
        }
        previous = Some(objective);

        let (weighted, kept) = match loss {
            Loss::Poisson => {
                let mask = truncation_from(&b, cd, cfg.a_h, cfg.truncation, z.norm());
                let kept = mask.kept();
                let w = weighted_fields(&fields, Some(&mask), |i, bi| {
                    2.0 * (1.0 - cd[i] / bi.max(eps))
                });
                (w, kept)
            }
            Loss::Intensity => (
                weighted_fields(&fields, None, |i, bi| 2.0 * (bi - cd[i])),
                m,
            ),
        };
        let grad = op.adjoint_sum(&weighted)?;
        axpy_step(&mut z, step_size(k, cfg, m), &grad);
        iterations_run = k;
        let norm = z.norm();
        if !(norm <= DIVERGENCE_GROWTH * start_norm) {
            return Err(Error::Divergence {
                iteration: k,
                reason: format!("{algorithm} spectrum norm grew from {start_norm:.3e} to {norm:.3e}; reduce the step"),
            });
        }

        if cfg.record_trace_every > 0 && k % cfg.record_trace_every == 0 {
            let now_objective = value(&intensities(&op.apply_all(&z)?));
            let re = truth.map(|t| relative_error(&z, t)).transpose()?;
            let elapsed = last_mark.elapsed().as_secs_f64() / (k - last_mark_iter) as f64;
            trace.push(TraceEntry {
                iteration: k,
                objective: now_objective,
                xi_size: kept,
                re,
                wall_seconds: elapsed,
            });
            last_mark = Instant::now();
            last_mark_iter = k;
        }
    }

    let n = op.hr_size();
    let field = Fourier2d::new(n, n)?.inverse(&z)?;
    Ok(ReconResult {
        algorithm,
        config: SolverConfig {
            algorithm,
            ..cfg.clone()
        },
        spectrum: z,
        field,
        trace,
        iterations_run,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
