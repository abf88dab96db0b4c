//! Objectives, Wirtinger gradients, truncation rule and step schedule.
//!
//! Gradients are taken with respect to `conj(z)`, so perturbing the real part
//! of entry `j` by `h` changes the objective by `2 h Re(grad_j)` to first order.

use num_complex::Complex64;

use super::{SolverConfig, TruncationScale};
use crate::error::Result;
use crate::field::ComplexField;
use crate::optics::{FpmOperator, MeasurementSet};

/// Log/division guard: `floor * mean(c)`, falling back to `floor` for empty data.
pub fn epsilon_for(c: &MeasurementSet, floor: f64) -> f64 {
    let mean = c.mean();
    if mean > 0.0 {
        floor * mean
    } else {
        floor
    }
}

/// Which measurement pixels enter the gradient, in LED-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationMask {
    keep: Vec<bool>,
    kept: usize,
}

impl TruncationMask {
    pub fn all(m: usize) -> Self {
        Self {
            keep: vec![true; m],
            kept: m,
        }
    }

    pub fn none(m: usize) -> Self {
        Self {
            keep: vec![false; m],
            kept: 0,
        }
    }

    pub fn from_vec(keep: Vec<bool>) -> Self {
        let kept = keep.iter().filter(|&&k| k).count();
        Self { keep, kept }
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    /// `|xi|`
    pub fn kept(&self) -> usize {
        self.kept
    }

    pub fn keeps(&self, i: usize) -> bool {
        self.keep[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.keep
    }
}

pub(crate) fn intensities(fields: &[ComplexField]) -> Vec<f64> {
    fields
        .iter()
        .flat_map(|f| f.data().iter().map(|v| v.norm_sqr()))
        .collect()
}

pub(crate) fn poisson_value(b: &[f64], c: &[f64], eps: f64) -> f64 {
    b.iter()
        .zip(c)
        .map(|(&b, &c)| b - c * b.max(eps).ln())
        .sum()
}

pub(crate) fn intensity_value(b: &[f64], c: &[f64]) -> f64 {
    b.iter().zip(c).map(|(&b, &c)| (b - c).powi(2)).sum()
}

pub(crate) fn truncation_from(
    b: &[f64],
    c: &[f64],
    a_h: f64,
    scale: TruncationScale,
    z_norm: f64,
) -> TruncationMask {
    let m = b.len();
    if a_h.is_infinite() {
        return TruncationMask::all(m);
    }
    let mean_residual = b.iter().zip(c).map(|(b, c)| (c - b).abs()).sum::<f64>() / m as f64;
    let mean_b = b.iter().sum::<f64>() / m as f64;
    let keep = b
        .iter()
        .zip(c)
        .map(|(&b, &c)| {
            let factor = match scale {
                TruncationScale::MeanIntensity => {
                    if mean_b > 0.0 {
                        b / mean_b
                    } else {
                        0.0
                    }
                }
                TruncationScale::SpectrumNorm => b / z_norm,
                TruncationScale::AmplitudeOverNorm => b.sqrt() / z_norm,
            };
            (c - b).abs() <= a_h * mean_residual * factor
        })
        .collect();
    TruncationMask::from_vec(keep)
}

/// Scales each exit field by its per-pixel weight, zeroing excluded pixels.
pub(crate) fn weighted_fields(
    fields: &[ComplexField],
    mask: Option<&TruncationMask>,
    weight: impl Fn(usize, f64) -> f64,
) -> Vec<ComplexField> {
    let px = fields.first().map(|f| f.len()).unwrap_or(0);
    fields
        .iter()
        .enumerate()
        .map(|(l, f)| {
            let mut out = f.clone();
            for (j, v) in out.data_mut().iter_mut().enumerate() {
                let i = l * px + j;
                let w = match mask {
                    Some(m) if !m.keeps(i) => 0.0,
                    _ => weight(i, v.norm_sqr()),
                };
                *v *= w;
            }
            out
        })
        .collect()
}

/// `L(z) = sum_i [ b_i - c_i log(max(b_i, eps)) ]` with `b = |Az|^2`.
pub fn objective_poisson(
    op: &FpmOperator,
    z: &ComplexField,
    c: &MeasurementSet,
    epsilon_floor: f64,
) -> Result<f64> {
    super::check_inputs(op, c)?;
    let b = intensities(&op.apply_all(z)?);
    Ok(poisson_value(&b, c.data(), epsilon_for(c, epsilon_floor)))
}

/// Wirtinger derivative `dL/d conj(z) = sum_l A_l^H (w_l * psi_l)` with
/// `w_i = 1 - c_i / max(b_i, eps)`, zeroed where `mask` excludes pixel `i`.
///
/// The Poisson solvers step along twice this vector, i.e. per pixel
/// `2 (a_i z - c_i a_i z / |a_i z|^2)`.
pub fn gradient_poisson(
    op: &FpmOperator,
    z: &ComplexField,
    c: &MeasurementSet,
    mask: Option<&TruncationMask>,
    epsilon_floor: f64,
) -> Result<ComplexField> {
    super::check_inputs(op, c)?;
    let eps = epsilon_for(c, epsilon_floor);
    let fields = op.apply_all(z)?;
    let cd = c.data();
    let weighted = weighted_fields(&fields, mask, |i, b| 1.0 - cd[i] / b.max(eps));
    op.adjoint_sum(&weighted)
}

/// Intensity misfit `sum_i (b_i - c_i)^2`.
pub fn objective_intensity(op: &FpmOperator, z: &ComplexField, c: &MeasurementSet) -> Result<f64> {
    super::check_inputs(op, c)?;
    let b = intensities(&op.apply_all(z)?);
    Ok(intensity_value(&b, c.data()))
}

/// `sum_l A_l^H (2 (b - c) * psi_l)`.
pub fn gradient_intensity(
    op: &FpmOperator,
    z: &ComplexField,
    c: &MeasurementSet,
) -> Result<ComplexField> {
    super::check_inputs(op, c)?;
    let fields = op.apply_all(z)?;
    let cd = c.data();
    let weighted = weighted_fields(&fields, None, |i, b| 2.0 * (b - cd[i]));
    op.adjoint_sum(&weighted)
}

/// Pixels satisfying `|c_i - b_i| <= a_h * (||c - b||_1 / m) * factor_i`.
pub fn truncation_set(
    op: &FpmOperator,
    z: &ComplexField,
    c: &MeasurementSet,
    a_h: f64,
    scale: TruncationScale,
) -> Result<TruncationMask> {
    super::check_inputs(op, c)?;
    let b = intensities(&op.apply_all(z)?);
    Ok(truncation_from(&b, c.data(), a_h, scale, z.norm()))
}

/// `mu(k) = min(1 - exp(-k/k0), mu_max) / denominator`, `k >= 1`.
pub fn step_size(k: usize, cfg: &SolverConfig, m: usize) -> f64 {
    let ramp = 1.0 - (-(k as f64) / cfg.k0).exp();
    ramp.min(cfg.mu_max) / cfg.step_denominator.value(m)
}

pub(crate) fn axpy_step(z: &mut ComplexField, mu: f64, grad: &ComplexField) {
    z.axpy(Complex64::new(-mu, 0.0), grad);
}
