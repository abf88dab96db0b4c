use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ComplexField, Fourier2d};
use crate::optics::{FpmOperator, MeasurementSet};

/// Bilinear resampling of a square `m x m` map to `n x n` with pixel-centre
/// alignment and clamped borders. `m == n` is an exact copy.
pub fn upsample_bilinear(src: &[f64], m: usize, n: usize) -> Vec<f64> {
    assert_eq!(src.len(), m * m);
    if m == n {
        return src.to_vec();
    }
    let ratio = m as f64 / n as f64;
    let coord = |i: usize| -> (usize, usize, f64) {
        let x = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (m - 1) as f64);
        let i0 = x.floor() as usize;
        let i1 = (i0 + 1).min(m - 1);
        (i0, i1, x - i0 as f64)
    };
    let cols: Vec<_> = (0..n).map(coord).collect();
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        let (r0, r1, tr) = coord(r);
        for (c, &(c0, c1, tc)) in cols.iter().enumerate() {
            let top = src[r0 * m + c0] * (1.0 - tc) + src[r0 * m + c1] * tc;
            let bottom = src[r1 * m + c0] * (1.0 - tc) + src[r1 * m + c1] * tc;
            out[r * n + c] = top * (1.0 - tr) + bottom * tr;
        }
    }
    out
}

/// Starting spectrum: the square root of the normal-incidence image, upsampled
/// to the HR grid with zero phase, transformed, and scaled so that
/// `sum(|A z0|^2) = sum(c)`.
pub fn initialize(op: &FpmOperator, c: &MeasurementSet) -> Result<ComplexField> {
    super::check_inputs(op, c)?;
    let center = op.source().center;
    if center >= c.led_count() {
        return Err(Error::Config(
            "illumination source has no normal-incidence LED".into(),
        ));
    }
    let n = op.hr_size();
    let amplitude: Vec<f64> = c.image(center).iter().map(|v| v.sqrt()).collect();
    let up = upsample_bilinear(&amplitude, c.size(), n);
    let field = ComplexField::new(
        n,
        n,
        up.into_iter().map(|a| Complex64::new(a, 0.0)).collect(),
    )?;
    let spectrum = Fourier2d::new(n, n)?.forward(&field)?;
    let predicted = op.forward_all(&spectrum)?.total();
    if !(predicted > 0.0) {
        return Err(Error::Config(
            "normal-incidence image carries no energy; cannot initialise".into(),
        ));
    }
    let scale = (c.total() / predicted).sqrt();
    Ok(spectrum.scale(Complex64::new(scale, 0.0)))
}
