//! FPM physical model: LED geometry, pupil, and the per-LED imaging operator.
//!
//! For LED `l` with spectral pixel offset `o_l`, the low-resolution exit field is
//! `psi_l = ifft2(P * window(Z, -o_l))` and the recorded image is `|psi_l|^2`.
//! The stacked map `Z -> [psi_l]` is the linear operator `A`; it is never
//! materialised.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    embed_shifted_add, extract_shifted, window_origin, ComplexField, Fourier2d, PixelOffset,
};

/// Physical FPM setup. Lengths in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemGeometry {
    pub wavelength: f64,
    pub na_objective: f64,
    /// LED count along (rows, cols); both odd so one LED sits on the optical axis.
    pub led_grid: [usize; 2],
    pub led_spacing: f64,
    pub led_height: f64,
    /// Object-space pitch of the high-resolution grid.
    pub pixel_size: f64,
    pub hr_size: usize,
    pub lr_size: usize,
}

impl SystemGeometry {
    /// Full-size simulation setup: 15x15 LEDs, 4 mm pitch,
    /// 84.8 mm height, NA 0.08, 625 nm, 0.2 um pixels, 512 px HR grid.
    pub fn full_scale() -> Self {
        Self {
            wavelength: 625e-9,
            na_objective: 0.08,
            led_grid: [15, 15],
            led_spacing: 4e-3,
            led_height: 84.8e-3,
            pixel_size: 0.2e-6,
            hr_size: 512,
            lr_size: 52,
        }
    }

    /// Reduced setup: 9x9 LEDs with the array lowered so the synthetic NA stays
    /// near 0.48, on a 128 px HR / 32 px LR grid.
    pub fn desk_scale() -> Self {
        Self {
            wavelength: 625e-9,
            na_objective: 0.08,
            led_grid: [9, 9],
            led_spacing: 4e-3,
            led_height: 52e-3,
            pixel_size: 0.75e-6,
            hr_size: 128,
            lr_size: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wavelength", self.wavelength),
            ("led_spacing", self.led_spacing),
            ("led_height", self.led_height),
            ("pixel_size", self.pixel_size),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.na_objective > 0.0 && self.na_objective < 1.0) {
            return Err(Error::Config(format!(
                "na_objective must lie in (0, 1), got {}",
                self.na_objective
            )));
        }
        if self.led_grid.iter().any(|&g| g == 0 || g % 2 == 0) {
            return Err(Error::Config(format!(
                "led_grid must be odd along both axes, got {:?}",
                self.led_grid
            )));
        }
        if self.hr_size == 0
            || self.lr_size == 0
            || !self.hr_size.is_multiple_of(2)
            || !self.lr_size.is_multiple_of(2)
        {
            return Err(Error::Config(format!(
                "hr_size and lr_size must be positive and even, got {} and {}",
                self.hr_size, self.lr_size
            )));
        }
        if self.lr_size > self.hr_size {
            return Err(Error::Config(format!(
                "lr_size {} exceeds hr_size {}",
                self.lr_size, self.hr_size
            )));
        }
        let r = self.pupil_radius_px();
        if r < 2.0 {
            return Err(Error::Geometry(format!(
                "pupil radius {r:.3} px is below 2 px"
            )));
        }
        if 2.0 * r > self.lr_size as f64 * (1.0 + 1e-9) {
            return Err(Error::Geometry(format!(
                "pupil diameter {:.2} px does not fit the {} px LR spectrum",
                2.0 * r,
                self.lr_size
            )));
        }
        Ok(())
    }

    /// Free-space wavenumber `2*pi/lambda` in rad/m.
    pub fn k0(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Spectral sampling of the HR grid, `2*pi/(N*pixel_size)` in rad/m.
    pub fn delta_k(&self) -> f64 {
        2.0 * PI / (self.hr_size as f64 * self.pixel_size)
    }

    pub fn pupil_radius_px(&self) -> f64 {
        self.na_objective * self.k0() / self.delta_k()
    }

    pub fn led_count(&self) -> usize {
        self.led_grid[0] * self.led_grid[1]
    }

    /// Planar position (x, y) of LED `(row, col)` relative to the axis LED.
    pub fn led_position(&self, grid_row: i64, grid_col: i64) -> (f64, f64) {
        (
            grid_col as f64 * self.led_spacing,
            grid_row as f64 * self.led_spacing,
        )
    }

    /// Illumination NA of the farthest LED plus the objective NA.
    pub fn synthetic_na(&self) -> f64 {
        let hr = (self.led_grid[0] / 2) as i64;
        let hc = (self.led_grid[1] / 2) as i64;
        let (x, y) = self.led_position(hr, hc);
        let d = (x * x + y * y + self.led_height * self.led_height).sqrt();
        (x * x + y * y).sqrt() / d + self.na_objective
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Led {
    /// Signed grid coordinates, `(0, 0)` on the optical axis.
    pub grid: (i64, i64),
    /// Transverse wave vector in rad/m.
    pub kx: f64,
    pub ky: f64,
    /// `(round(ky/dk), round(kx/dk))`.
    pub offset: PixelOffset,
}

/// Per-LED wave vectors and their rounded spectral offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationSource {
    pub leds: Vec<Led>,
    /// Index of the normal-incidence LED.
    pub center: usize,
    /// Spectral pixel pitch used for rounding.
    pub delta_k: f64,
}

impl IlluminationSource {
    pub fn len(&self) -> usize {
        self.leds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leds.is_empty()
    }

    pub fn offset(&self, led: usize) -> PixelOffset {
        self.leds[led].offset
    }

    /// Keeps only the LEDs whose index satisfies `keep`, preserving order.
    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> Option<IlluminationSource> {
        let mut leds = Vec::new();
        let mut center = None;
        for (i, led) in self.leds.iter().enumerate() {
            if keep(i) {
                if i == self.center {
                    center = Some(leds.len());
                }
                leds.push(led.clone());
            }
        }
        Some(IlluminationSource {
            leds,
            center: center?,
            delta_k: self.delta_k,
        })
    }
}

/// Maps LED positions to wave vectors and integer spectral offsets.
pub fn wave_vectors(geom: &SystemGeometry) -> Result<IlluminationSource> {
    geom.validate()?;
    let k0 = geom.k0();
    let dk = geom.delta_k();
    let half_r = (geom.led_grid[0] / 2) as i64;
    let half_c = (geom.led_grid[1] / 2) as i64;
    let mut leds = Vec::with_capacity(geom.led_count());
    for gr in -half_r..=half_r {
        for gc in -half_c..=half_c {
            let (x, y) = geom.led_position(gr, gc);
            let d = (x * x + y * y + geom.led_height * geom.led_height).sqrt();
            let kx = k0 * x / d;
            let ky = k0 * y / d;
            leds.push(Led {
                grid: (gr, gc),
                kx,
                ky,
                offset: PixelOffset::new((ky / dk).round() as i64, (kx / dk).round() as i64),
            });
        }
    }
    let center = (half_r as usize) * geom.led_grid[1] + half_c as usize;
    let src = IlluminationSource {
        leds,
        center,
        delta_k: dk,
    };

    let bad: Vec<&Led> = src
        .leds
        .iter()
        .filter(|l| window_origin(geom.hr_size, geom.lr_size, -l.offset).is_none())
        .collect();
    if let Some(first) = bad.first() {
        let ring = bad
            .iter()
            .map(|l| l.grid.0.abs().max(l.grid.1.abs()))
            .min()
            .unwrap_or(0);
        return Err(Error::Geometry(format!(
            "LED at grid {:?} has spectral offset {} whose {}px window leaves the {}px spectrum; \
             largest admissible LED ring is {}",
            first.grid,
            first.offset,
            geom.lr_size,
            geom.hr_size,
            ring - 1
        )));
    }
    Ok(src)
}

/// Linear overlap `1 - d/(2r)` between spectral discs of neighbouring LEDs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapReport {
    pub min: f64,
    pub mean: f64,
}

impl OverlapReport {
    pub const WARN_BELOW: f64 = 0.5;

    pub fn is_adequate(&self) -> bool {
        self.min >= Self::WARN_BELOW
    }
}

pub fn adjacent_overlap(geom: &SystemGeometry, src: &IlluminationSource) -> OverlapReport {
    let cols = geom.led_grid[1];
    let r = geom.pupil_radius_px();
    let dk = geom.delta_k();
    let mut values = Vec::new();
    for (i, led) in src.leds.iter().enumerate() {
        let right = (i % cols + 1 < cols).then(|| i + 1);
        let below = (i + cols < src.leds.len()).then(|| i + cols);
        for j in [right, below].into_iter().flatten() {
            let other = &src.leds[j];
            let d = ((led.kx - other.kx).powi(2) + (led.ky - other.ky).powi(2)).sqrt() / dk;
            values.push(1.0 - d / (2.0 * r));
        }
    }
    if values.is_empty() {
        return OverlapReport {
            min: 1.0,
            mean: 1.0,
        };
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    OverlapReport { min, mean }
}

/// Aperture on the LR spectral grid, shared by every LED.
#[derive(Debug, Clone, PartialEq)]
pub struct Pupil {
    pub field: ComplexField,
    pub radius: f64,
}

impl Pupil {
    /// Ideal binary disc: 1 where the distance to `(M/2, M/2)` is at most `radius`.
    pub fn binary(size: usize, radius: f64) -> Self {
        let c = (size / 2) as f64;
        let field = ComplexField::from_fn(size, size, |r, col| {
            let d = ((r as f64 - c).powi(2) + (col as f64 - c).powi(2)).sqrt();
            Complex64::new(if d <= radius { 1.0 } else { 0.0 }, 0.0)
        });
        Self { field, radius }
    }

    pub fn from_geometry(geom: &SystemGeometry) -> Self {
        Self::binary(geom.lr_size, geom.pupil_radius_px())
    }

    pub fn all_pass(size: usize) -> Self {
        Self {
            field: ComplexField::from_fn(size, size, |_, _| Complex64::new(1.0, 0.0)),
            radius: f64::INFINITY,
        }
    }

    pub fn size(&self) -> usize {
        self.field.rows()
    }

    pub fn max_abs_sqr(&self) -> f64 {
        self.field
            .data()
            .iter()
            .map(|p| p.norm_sqr())
            .fold(0.0, f64::max)
    }
}

/// Per-LED low-resolution intensity images, stored LED-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    size: usize,
    leds: usize,
    data: Vec<f64>,
}

impl MeasurementSet {
    pub fn new(size: usize, leds: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size * leds {
            return Err(Error::Contract(format!(
                "measurement data has {} values, expected {leds} images of {size}x{size}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Contract(format!(
                "measurement value {v} is negative or non-finite"
            )));
        }
        Ok(Self { size, leds, data })
    }

    pub(crate) fn from_raw_unchecked(size: usize, leds: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), size * size * leds);
        Self { size, leds, data }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn led_count(&self) -> usize {
        self.leds
    }

    /// Total number of measured pixels, `m`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn image(&self, led: usize) -> &[f64] {
        let px = self.size * self.size;
        &self.data[led * px..(led + 1) * px]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.total() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(usize, f64) -> f64) -> MeasurementSet {
        Self {
            size: self.size,
            leds: self.leds,
            data: self
                .data
                .iter()
                .enumerate()
                .map(|(i, &v)| f(i, v))
                .collect(),
        }
    }
}

/// The FPM imaging operator for one pupil and illumination source.
#[derive(Debug, Clone)]
pub struct FpmOperator {
    hr_size: usize,
    pupil: Pupil,
    source: IlluminationSource,
    lr_fft: Fourier2d,
}

impl FpmOperator {
    pub fn new(hr_size: usize, pupil: Pupil, source: IlluminationSource) -> Result<Self> {
        let m = pupil.size();
        if m > hr_size {
            return Err(Error::Config(format!(
                "pupil size {m} exceeds HR size {hr_size}"
            )));
        }
        for led in &source.leds {
            if window_origin(hr_size, m, -led.offset).is_none() {
                return Err(Error::Geometry(format!(
                    "LED {:?} offset {} puts its window outside the spectrum",
                    led.grid, led.offset
                )));
            }
        }
        Ok(Self {
            hr_size,
            lr_fft: Fourier2d::new(m, m)?,
            pupil,
            source,
        })
    }

    pub fn from_geometry(geom: &SystemGeometry) -> Result<Self> {
        let src = wave_vectors(geom)?;
        Self::new(geom.hr_size, Pupil::from_geometry(geom), src)
    }

    pub fn hr_size(&self) -> usize {
        self.hr_size
    }

    pub fn lr_size(&self) -> usize {
        self.pupil.size()
    }

    pub fn led_count(&self) -> usize {
        self.source.len()
    }

    /// Number of measured pixels, `m = leds * M^2`.
    pub fn measurement_len(&self) -> usize {
        self.led_count() * self.lr_size() * self.lr_size()
    }

    pub fn pupil(&self) -> &Pupil {
        &self.pupil
    }

    pub fn source(&self) -> &IlluminationSource {
        &self.source
    }

    fn check_spectrum(&self, z: &ComplexField) -> Result<()> {
        if z.rows() != self.hr_size || z.cols() != self.hr_size {
            return Err(Error::Contract(format!(
                "spectrum is {}x{}, operator expects {}x{}",
                z.rows(),
                z.cols(),
                self.hr_size,
                self.hr_size
            )));
        }
        Ok(())
    }

    fn check_led(&self, led: usize) -> Result<()> {
        if led >= self.led_count() {
            return Err(Error::Contract(format!("LED index {led} out of range")));
        }
        Ok(())
    }

    /// `psi = ifft2(P * window(Z, -offset))`.
    pub fn apply_field(&self, z: &ComplexField, led: usize) -> Result<ComplexField> {
        self.check_spectrum(z)?;
        self.check_led(led)?;
        let mut w = extract_shifted(z, -self.source.offset(led), self.lr_size())?;
        for (v, p) in w.data_mut().iter_mut().zip(self.pupil.field.data()) {
            *v *= p;
        }
        self.lr_fft.inverse_inplace(&mut w)?;
        Ok(w)
    }

    /// `A_l^H g = embed(conj(P) * fft2(g), -offset)`.
    pub fn adjoint_field(&self, g: &ComplexField, led: usize) -> Result<ComplexField> {
        let mut out = ComplexField::zeros(self.hr_size, self.hr_size);
        self.adjoint_add(g, led, &mut out)?;
        Ok(out)
    }

    /// Accumulates `A_l^H g` into `out`.
    pub fn adjoint_add(&self, g: &ComplexField, led: usize, out: &mut ComplexField) -> Result<()> {
        self.check_led(led)?;
        self.check_spectrum(out)?;
        let block = self.adjoint_block(g)?;
        embed_shifted_add(&block, -self.source.offset(led), out)
    }

    /// Spectral block `conj(P) * fft2(g)` of `A_l^H g` before it is embedded.
    pub fn adjoint_block(&self, g: &ComplexField) -> Result<ComplexField> {
        let m = self.lr_size();
        if g.rows() != m || g.cols() != m {
            return Err(Error::Contract(format!(
                "LR field is {}x{}, operator expects {m}x{m}",
                g.rows(),
                g.cols()
            )));
        }
        let mut spec = self.lr_fft.forward(g)?;
        for (v, p) in spec.data_mut().iter_mut().zip(self.pupil.field.data()) {
            *v *= p.conj();
        }
        Ok(spec)
    }

    /// Adds a block from [`adjoint_block`](Self::adjoint_block) at LED `led`'s window.
    pub fn embed_block(
        &self,
        block: &ComplexField,
        led: usize,
        out: &mut ComplexField,
    ) -> Result<()> {
        self.check_led(led)?;
        self.check_spectrum(out)?;
        embed_shifted_add(block, -self.source.offset(led), out)
    }

    /// `sum_l A_l^H g_l`. Blocks are computed in parallel and accumulated in
    /// LED order so the sum is bit-reproducible.
    pub fn adjoint_sum(&self, fields: &[ComplexField]) -> Result<ComplexField> {
        if fields.len() != self.led_count() {
            return Err(Error::Contract(format!(
                "{} LR fields supplied for {} LEDs",
                fields.len(),
                self.led_count()
            )));
        }
        let blocks: Vec<ComplexField> = fields
            .par_iter()
            .map(|g| self.adjoint_block(g))
            .collect::<Result<_>>()?;
        let mut out = ComplexField::zeros(self.hr_size, self.hr_size);
        for (l, b) in blocks.iter().enumerate() {
            self.embed_block(b, l, &mut out)?;
        }
        Ok(out)
    }

    /// LR spectral window `window(Z, -offset)` for LED `led` (no pupil applied).
    pub fn spectrum_window(&self, z: &ComplexField, led: usize) -> Result<ComplexField> {
        self.check_spectrum(z)?;
        self.check_led(led)?;
        extract_shifted(z, -self.source.offset(led), self.lr_size())
    }

    pub fn window_origin(&self, led: usize) -> (usize, usize) {
        window_origin(self.hr_size, self.lr_size(), -self.source.offset(led))
            .expect("validated at construction")
    }

    pub fn lr_fft(&self) -> &Fourier2d {
        &self.lr_fft
    }

    /// Exit fields for every LED, in source order.
    pub fn apply_all(&self, z: &ComplexField) -> Result<Vec<ComplexField>> {
        self.check_spectrum(z)?;
        (0..self.led_count())
            .into_par_iter()
            .map(|l| self.apply_field(z, l))
            .collect()
    }

    pub fn forward_one(&self, z: &ComplexField, led: usize) -> Result<Vec<f64>> {
        Ok(self.apply_field(z, led)?.intensity())
    }

    /// `b = |A z|^2` for every LED in source order.
    pub fn forward_all(&self, z: &ComplexField) -> Result<MeasurementSet> {
        let fields = self.apply_all(z)?;
        let m = self.lr_size();
        let mut data = Vec::with_capacity(self.measurement_len());
        for f in &fields {
            data.extend(f.data().iter().map(|v| v.norm_sqr()));
        }
        Ok(MeasurementSet::from_raw_unchecked(
            m,
            self.led_count(),
            data,
        ))
    }

    /// Boolean map of the HR spectral pixels seen by at least one LED.
    pub fn coverage(&self) -> Vec<bool> {
        let n = self.hr_size;
        let m = self.lr_size();
        let mut cover = vec![false; n * n];
        for led in &self.source.leds {
            let (r0, c0) = window_origin(n, m, -led.offset).expect("validated at construction");
            for r in 0..m {
                for c in 0..m {
                    if self.pupil.field.get(r, c).norm_sqr() > 0.0 {
                        cover[(r0 + r) * n + c0 + c] = true;
                    }
                }
            }
        }
        cover
    }
}
