//! Measurement corruption: additive Gaussian, Poisson shot noise,
//! multiplicative speckle, and LED wave-vector (pupil location) error.
//!
//! Every image draws from its own ChaCha stream (`stream = LED index`), so the
//! output depends only on the seed and is independent of evaluation order.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{window_origin, PixelOffset};
use crate::optics::{IlluminationSource, MeasurementSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    None,
    Gaussian,
    Poisson,
    Speckle,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NoiseKind::None),
            "gaussian" => Ok(NoiseKind::Gaussian),
            "poisson" => Ok(NoiseKind::Poisson),
            "speckle" => Ok(NoiseKind::Speckle),
            other => Err(Error::Config(format!("unknown noise kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Gaussian std as a fraction of `max(b)`.
    pub gaussian_std_ratio: f64,
    /// Clamp Gaussian-corrupted intensities at zero.
    pub gaussian_clamp: bool,
    /// Photon count assigned to the brightest pixel.
    pub poisson_peak_photons: f64,
    /// Half-width `a` of the uniform multiplicative noise `n ~ U(-a, a)`.
    pub speckle_amplitude: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKind::None,
            gaussian_std_ratio: 0.0,
            gaussian_clamp: true,
            poisson_peak_photons: 1e5,
            speckle_amplitude: 0.3,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn gaussian(ratio: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            gaussian_std_ratio: ratio,
            seed,
            ..Self::default()
        }
    }

    pub fn poisson(peak_photons: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Poisson,
            poisson_peak_photons: peak_photons,
            seed,
            ..Self::default()
        }
    }

    pub fn speckle(amplitude: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Speckle,
            speckle_amplitude: amplitude,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_std_ratio >= 0.0 && self.gaussian_std_ratio.is_finite()) {
            return Err(Error::Config("gaussian_std_ratio must be >= 0".into()));
        }
        if !(self.poisson_peak_photons > 0.0 && self.poisson_peak_photons.is_finite()) {
            return Err(Error::Config(
                "poisson_peak_photons must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.speckle_amplitude) {
            return Err(Error::Config("speckle_amplitude must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Applies the active corruption; `kind = none` returns an exact copy.
    pub fn apply(&self, b: &MeasurementSet) -> Result<MeasurementSet> {
        self.validate()?;
        Ok(match self.kind {
            NoiseKind::None => b.clone(),
            NoiseKind::Gaussian => add_gaussian(b, self),
            NoiseKind::Poisson => add_poisson(b, self),
            NoiseKind::Speckle => add_speckle(b, self),
        })
    }
}

fn image_rng(seed: u64, led: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(led as u64);
    rng
}

/// Draws one value per measurement pixel, image by image.
fn per_pixel(
    b: &MeasurementSet,
    seed: u64,
    mut f: impl FnMut(&mut ChaCha8Rng, f64) -> f64,
) -> MeasurementSet {
    let px = b.size() * b.size();
    let mut data = Vec::with_capacity(b.len());
    for led in 0..b.led_count() {
        let mut rng = image_rng(seed, led);
        data.extend(
            b.data()[led * px..(led + 1) * px]
                .iter()
                .map(|&v| f(&mut rng, v)),
        );
    }
    MeasurementSet::from_raw_unchecked(b.size(), b.led_count(), data)
}

/// `c = max(0, b + eta)`, `eta ~ N(0, (ratio * max(b))^2)`.
pub fn add_gaussian(b: &MeasurementSet, spec: &NoiseSpec) -> MeasurementSet {
    let sigma = spec.gaussian_std_ratio * b.max();
    if sigma == 0.0 {
        return b.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let clamp = spec.gaussian_clamp;
    let out = per_pixel(b, spec.seed, |rng, v| {
        let c = v + normal.sample(rng);
        if clamp {
            c.max(0.0)
        } else {
            c
        }
    });
    if !clamp {
        // MeasurementSet::new would reject these; the unclamped mode is for A/B runs only.
        warn!("unclamped Gaussian noise may produce negative intensities");
    }
    out
}

/// `c = Poisson(s * b) / s` with `s = peak / max(b)`.
pub fn add_poisson(b: &MeasurementSet, spec: &NoiseSpec) -> MeasurementSet {
    let max = b.max();
    if max == 0.0 {
        return b.clone();
    }
    let s = spec.poisson_peak_photons / max;
    per_pixel(b, spec.seed, |rng, v| {
        let lambda = s * v;
        if lambda > 0.0 {
            let count: f64 = Poisson::new(lambda).expect("positive rate").sample(rng);
            count / s
        } else {
            0.0
        }
    })
}

/// `c = b * (1 + n)`, `n ~ U(-a, a)`.
pub fn add_speckle(b: &MeasurementSet, spec: &NoiseSpec) -> MeasurementSet {
    let a = spec.speckle_amplitude;
    if a == 0.0 {
        return b.clone();
    }
    let uniform = Uniform::new(-a, a).expect("a > 0");
    per_pixel(b, spec.seed, |rng, v| v * (1.0 + uniform.sample(rng)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PupilErrorSpec {
    /// Std of the Gaussian perturbation of each wave-vector component, rad/m.
    pub wavevector_std: f64,
    pub seed: u64,
}

impl PupilErrorSpec {
    pub fn is_identity(&self) -> bool {
        self.wavevector_std == 0.0
    }
}

/// Perturbed source plus one message per LED whose window had to be clamped.
#[derive(Debug, Clone)]
pub struct PerturbedSource {
    pub source: IlluminationSource,
    pub warnings: Vec<String>,
}

/// Adds `N(0, std^2)` to every `(kx, ky)` and re-rounds the pixel offsets.
///
/// Offsets are clamped so each `lr_size` window stays inside the `hr_size`
/// spectrum.
pub fn perturb_wave_vectors(
    src: &IlluminationSource,
    spec: &PupilErrorSpec,
    hr_size: usize,
    lr_size: usize,
) -> Result<PerturbedSource> {
    if !(spec.wavevector_std >= 0.0 && spec.wavevector_std.is_finite()) {
        return Err(Error::Config("wavevector_std must be >= 0".into()));
    }
    if spec.is_identity() {
        return Ok(PerturbedSource {
            source: src.clone(),
            warnings: Vec::new(),
        });
    }
    let normal = Normal::new(0.0, spec.wavevector_std).expect("finite std");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let limit = (hr_size / 2 - lr_size / 2) as i64;
    let dk = src.delta_k;
    let mut out = src.clone();
    let mut warnings = Vec::new();
    for led in out.leds.iter_mut() {
        led.kx += normal.sample(&mut rng);
        led.ky += normal.sample(&mut rng);
        let mut off = PixelOffset::new((led.ky / dk).round() as i64, (led.kx / dk).round() as i64);
        if window_origin(hr_size, lr_size, -off).is_none() {
            let clamped =
                PixelOffset::new(off.row.clamp(-limit, limit), off.col.clamp(-limit, limit));
            let msg = format!(
                "LED {:?}: perturbed offset {off} clamped to {clamped}",
                led.grid
            );
            warn!("{msg}");
            warnings.push(msg);
            off = clamped;
        }
        led.offset = off;
    }
    Ok(PerturbedSource {
        source: out,
        warnings,
    })
}
