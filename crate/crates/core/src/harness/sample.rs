//! Ground-truth complex samples.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::field::{ComplexField, Fourier2d};
use crate::optics::FpmOperator;

/// Rescales to `[0, 1]`; a constant map becomes all zeros.
pub fn normalize_unit(values: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    for v in values.iter_mut() {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
    }
}

/// White Gaussian noise under a Gaussian low-pass of width `sigma` spectral
/// pixels, normalised to `[0, 1]`.
pub fn smooth_noise(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Result<Vec<f64>> {
    let fft = Fourier2d::new(n, n)?;
    let white = ComplexField::from_fn(n, n, |_, _| Complex64::new(StandardNormal.sample(rng), 0.0));
    let mut spec = fft.forward(&white)?;
    let half = (n / 2) as f64;
    for r in 0..n {
        for c in 0..n {
            let d2 = (r as f64 - half).powi(2) + (c as f64 - half).powi(2);
            let v = spec.get(r, c) * (-d2 / (2.0 * sigma * sigma)).exp();
            spec.set(r, c, v);
        }
    }
    let mut out: Vec<f64> = fft.inverse(&spec)?.data().iter().map(|z| z.re).collect();
    normalize_unit(&mut out);
    Ok(out)
}

/// Amplitude and phase maps on the HR grid, amplitude in `[0, 1]`, phase in
/// `[0, phase_max]`.
#[derive(Debug, Clone)]
pub struct SampleMaps {
    pub n: usize,
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
}

impl SampleMaps {
    /// Independent smooth random maps for amplitude and phase.
    pub fn procedural(n: usize, sigma: f64, phase_max: f64, seed: u64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Config(format!(
                "sample smoothness must be positive, got {sigma}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amplitude = smooth_noise(&mut rng, n, sigma)?;
        let phase = smooth_noise(&mut rng, n, sigma)?
            .into_iter()
            .map(|p| p * phase_max)
            .collect();
        Ok(Self {
            n,
            amplitude,
            phase,
        })
    }

    /// Grayscale images resampled to `n x n` and normalised.
    pub fn from_images(amplitude: &Path, phase: &Path, n: usize, phase_max: f64) -> Result<Self> {
        let mut amp = load_gray(amplitude, n)?;
        let mut ph = load_gray(phase, n)?;
        normalize_unit(&mut amp);
        normalize_unit(&mut ph);
        ph.iter_mut().for_each(|p| *p *= phase_max);
        Ok(Self {
            n,
            amplitude: amp,
            phase: ph,
        })
    }

    pub fn field(&self) -> Result<ComplexField> {
        ComplexField::from_polar(self.n, self.n, &self.amplitude, &self.phase)
    }

    /// Centred spectrum of the sample. With `bandlimit`, entries outside the
    /// union of LED windows are zeroed, since no measurement constrains them.
    pub fn spectrum(&self, op: &FpmOperator, bandlimit: bool) -> Result<ComplexField> {
        let mut spec = Fourier2d::new(self.n, self.n)?.forward(&self.field()?)?;
        if bandlimit {
            for (v, keep) in spec.data_mut().iter_mut().zip(op.coverage()) {
                if !keep {
                    *v = Complex64::new(0.0, 0.0);
                }
            }
        }
        Ok(spec)
    }
}

fn load_gray(path: &Path, n: usize) -> Result<Vec<f64>> {
    let img = image::open(path).map_err(|e| Error::format(path, e.to_string()))?;
    let gray = img.to_luma32f();
    let resized = image::imageops::resize(
        &gray,
        n as u32,
        n as u32,
        image::imageops::FilterType::Triangle,
    );
    Ok(resized.pixels().map(|p| p.0[0] as f64).collect())
}

/// Default phase range of the ground truth.
pub const DEFAULT_PHASE_MAX: f64 = PI;
