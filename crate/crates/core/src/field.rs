//! Complex 2D fields and the orthonormal, centered Fourier transform pair.
//!
//! Spatial fields use natural row-major indexing. Spectra are stored with the
//! zero frequency at `(rows/2, cols/2)`. Both transforms are scaled by
//! `1/sqrt(rows*cols)` so they are unitary.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// A dense `rows x cols` grid of complex amplitudes in row-major order.
#[derive(Clone, PartialEq)]
pub struct ComplexField {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for ComplexField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComplexField")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("norm", &self.norm())
            .finish()
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<usize> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config(format!(
            "field dimensions must be positive, got {rows}x{cols}"
        )));
    }
    rows.checked_mul(cols)
        .ok_or_else(|| Error::Config(format!("field dimensions {rows}x{cols} overflow")))
}

impl ComplexField {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        let len = check_dims(rows, cols)?;
        if data.len() != len {
            return Err(Error::Contract(format!(
                "field data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        let len = check_dims(rows, cols).expect("invalid field dimensions");
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut out = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                out.data[r * cols + c] = f(r, c);
            }
        }
        out
    }

    /// Builds `amplitude * exp(i * phase)` from two real maps of equal length.
    pub fn from_polar(rows: usize, cols: usize, amplitude: &[f64], phase: &[f64]) -> Result<Self> {
        if amplitude.len() != phase.len() {
            return Err(Error::Contract(
                "amplitude and phase maps differ in size".into(),
            ));
        }
        let data = amplitude
            .iter()
            .zip(phase)
            .map(|(&a, &p)| Complex64::from_polar(a, p))
            .collect();
        Self::new(rows, cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn same_shape(&self, other: &ComplexField) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self, other> = sum(conj(self) * other)`.
    pub fn inner(&self, other: &ComplexField) -> Complex64 {
        debug_assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scale(&self, factor: Complex64) -> ComplexField {
        self.map(|z| z * factor)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexField {
        ComplexField {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: Complex64, other: &ComplexField) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn amplitude(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }

    pub fn phase(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.arg()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Integer displacement of a window centre on a centered spectral grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PixelOffset {
    pub row: i64,
    pub col: i64,
}

impl PixelOffset {
    pub const ZERO: PixelOffset = PixelOffset { row: 0, col: 0 };

    pub fn new(row: i64, col: i64) -> Self {
        Self { row, col }
    }
}

impl std::ops::Neg for PixelOffset {
    type Output = PixelOffset;
    fn neg(self) -> PixelOffset {
        PixelOffset::new(-self.row, -self.col)
    }
}

impl fmt::Display for PixelOffset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Top-left corner of the `size x size` window centred at `centre + offset`
/// on an `n x n` grid, or `None` when the window leaves the grid.
pub fn window_origin(n: usize, size: usize, offset: PixelOffset) -> Option<(usize, usize)> {
    let half_n = (n / 2) as i64;
    let half_m = (size / 2) as i64;
    let r0 = half_n + offset.row - half_m;
    let c0 = half_n + offset.col - half_m;
    let limit = n as i64 - size as i64;
    if size > n || r0 < 0 || c0 < 0 || r0 > limit || c0 > limit {
        return None;
    }
    Some((r0 as usize, c0 as usize))
}

fn window_or_err(n: usize, size: usize, offset: PixelOffset) -> Result<(usize, usize)> {
    window_origin(n, size, offset).ok_or_else(|| {
        Error::Geometry(format!(
            "{size}x{size} window at offset {offset} leaves the {n}x{n} spectrum"
        ))
    })
}

/// Copies the `size x size` sub-block centred at `centre + offset`.
pub fn extract_shifted(
    spectrum: &ComplexField,
    offset: PixelOffset,
    size: usize,
) -> Result<ComplexField> {
    let n = spectrum.rows();
    if spectrum.cols() != n {
        return Err(Error::Contract(
            "extract_shifted expects a square spectrum".into(),
        ));
    }
    let (r0, c0) = window_or_err(n, size, offset)?;
    let mut out = ComplexField::zeros(size, size);
    for r in 0..size {
        let src = &spectrum.data()[(r0 + r) * n + c0..(r0 + r) * n + c0 + size];
        out.data_mut()[r * size..(r + 1) * size].copy_from_slice(src);
    }
    Ok(out)
}

/// Adjoint of [`extract_shifted`]: places `block` into an `n x n` zero grid.
pub fn embed_shifted(block: &ComplexField, offset: PixelOffset, n: usize) -> Result<ComplexField> {
    let mut out = ComplexField::zeros(n, n);
    embed_shifted_add(block, offset, &mut out)?;
    Ok(out)
}

/// Accumulating form of [`embed_shifted`]: `target[window] += block`.
pub fn embed_shifted_add(
    block: &ComplexField,
    offset: PixelOffset,
    target: &mut ComplexField,
) -> Result<()> {
    let n = target.rows();
    let size = block.rows();
    if block.cols() != size || target.cols() != n {
        return Err(Error::Contract("embed_shifted expects square grids".into()));
    }
    let (r0, c0) = window_or_err(n, size, offset)?;
    for r in 0..size {
        let dst = &mut target.data_mut()[(r0 + r) * n + c0..(r0 + r) * n + c0 + size];
        for (d, s) in dst.iter_mut().zip(&block.data()[r * size..(r + 1) * size]) {
            *d += s;
        }
    }
    Ok(())
}

/// Cached row/column plans for one grid size.
///
/// The centred layout is produced by modulating with `(-1)^(r+c)`, which for
/// even sizes is the same as an fftshift of the output (forward) or of the
/// input (inverse).
#[derive(Clone)]
pub struct Fourier2d {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fourier2d {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fourier2d({}x{})", self.rows, self.cols)
    }
}

impl Fourier2d {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        check_dims(rows, cols)?;
        if !rows.is_multiple_of(2) || !cols.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "grid {rows}x{cols} must have even sides for centred spectra"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn check(&self, f: &ComplexField) -> Result<()> {
        if f.rows() != self.rows || f.cols() != self.cols {
            return Err(Error::Contract(format!(
                "field is {}x{}, transform planned for {}x{}",
                f.rows(),
                f.cols(),
                self.rows,
                self.cols
            )));
        }
        Ok(())
    }

    fn checkerboard(&self, data: &mut [Complex64]) {
        for r in 0..self.rows {
            let row = &mut data[r * self.cols..(r + 1) * self.cols];
            let start = 1 - r % 2;
            for v in row.iter_mut().skip(start).step_by(2) {
                *v = -*v;
            }
        }
    }

    fn transform(
        &self,
        data: &mut [Complex64],
        row_plan: &Arc<dyn Fft<f64>>,
        col_plan: &Arc<dyn Fft<f64>>,
    ) {
        let (rows, cols) = (self.rows, self.cols);
        row_plan.process(data);
        let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = data[r * cols + c];
            }
        }
        col_plan.process(&mut t);
        let scale = 1.0 / ((rows * cols) as f64).sqrt();
        for c in 0..cols {
            for r in 0..rows {
                data[r * cols + c] = t[c * rows + r] * scale;
            }
        }
    }

    /// In-place forward transform: natural spatial layout to centred spectrum.
    pub fn forward_inplace(&self, f: &mut ComplexField) -> Result<()> {
        self.check(f)?;
        self.checkerboard(f.data_mut());
        self.transform(f.data_mut(), &self.row_fwd, &self.col_fwd);
        Ok(())
    }

    /// In-place inverse transform: centred spectrum to natural spatial layout.
    pub fn inverse_inplace(&self, f: &mut ComplexField) -> Result<()> {
        self.check(f)?;
        self.transform(f.data_mut(), &self.row_inv, &self.col_inv);
        self.checkerboard(f.data_mut());
        Ok(())
    }

    pub fn forward(&self, f: &ComplexField) -> Result<ComplexField> {
        let mut out = f.clone();
        self.forward_inplace(&mut out)?;
        Ok(out)
    }

    pub fn inverse(&self, f: &ComplexField) -> Result<ComplexField> {
        let mut out = f.clone();
        self.inverse_inplace(&mut out)?;
        Ok(out)
    }
}

/// Orthonormal 2D DFT with centred output.
pub fn fft2(f: &ComplexField) -> Result<ComplexField> {
    Fourier2d::new(f.rows(), f.cols())?.forward(f)
}

/// Inverse of [`fft2`].
pub fn ifft2(f: &ComplexField) -> Result<ComplexField> {
    Fourier2d::new(f.rows(), f.cols())?.inverse(f)
}
