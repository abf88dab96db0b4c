//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{NoiseSpec, PupilErrorSpec};
use crate::optics::SystemGeometry;
use crate::recon::{Algorithm, SolverConfig, TruncationScale};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    /// Smooth random amplitude and phase maps.
    #[default]
    Procedural,
    /// Grayscale amplitude and phase images from disk.
    Images,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub kind: SampleKind,
    pub amplitude: Option<PathBuf>,
    pub phase: Option<PathBuf>,
    /// Phase is mapped onto `[0, phase_max]`.
    pub phase_max: f64,
    /// Gaussian low-pass width of procedural maps, in spectral pixels.
    pub smoothness: f64,
    /// Zero the ground-truth spectrum outside the union of LED windows.
    pub bandlimit: bool,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            kind: SampleKind::Procedural,
            amplitude: None,
            phase: None,
            phase_max: std::f64::consts::PI,
            smoothness: 10.0,
            bandlimit: true,
            seed: 1,
        }
    }
}

/// Pupil location error. `wavevector_std_pixels` is in units of the spectral
/// pixel pitch and, when set, overrides `wavevector_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PupilErrorConfig {
    pub wavevector_std: f64,
    pub wavevector_std_pixels: Option<f64>,
    pub seed: u64,
}

impl PupilErrorConfig {
    pub fn resolve(&self, delta_k: f64) -> PupilErrorSpec {
        PupilErrorSpec {
            wavevector_std: self
                .wavevector_std_pixels
                .map_or(self.wavevector_std, |p| p * delta_k),
            seed: self.seed,
        }
    }
}

/// Which knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Truncation threshold of every `tpwfp` solver.
    AH,
    GaussianStdRatio,
    PoissonPeakPhotons,
    SpeckleAmplitude,
    WavevectorStdPixels,
    /// Values are ignored labels; only the repeats vary.
    None,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::AH => "a_h",
            SweepParameter::GaussianStdRatio => "gaussian_std_ratio",
            SweepParameter::PoissonPeakPhotons => "poisson_peak_photons",
            SweepParameter::SpeckleAmplitude => "speckle_amplitude",
            SweepParameter::WavevectorStdPixels => "wavevector_std_pixels",
            SweepParameter::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default)]
    pub base_seed: u64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: SystemGeometry,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub pupil_error: PupilErrorConfig,
    #[serde(default = "all_solvers", rename = "solver")]
    pub solvers: Vec<SolverConfig>,
    pub sweep: Option<SweepConfig>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn all_solvers() -> Vec<SolverConfig> {
    Algorithm::ALL.iter().map(|&a| desk_solver(a)).collect()
}

/// Solver settings that converge on the desk-scale geometry: the default
/// budgets, step denominators of 5 (WFP) and 1 (PWFP, TPWFP) instead of `m`,
/// and the scale-free truncation factor.
pub fn desk_solver(algorithm: Algorithm) -> SolverConfig {
    let cfg = SolverConfig::for_algorithm(algorithm);
    match algorithm {
        Algorithm::Ap => cfg,
        Algorithm::Wfp => cfg.with_denominator(5.0),
        Algorithm::Pwfp | Algorithm::Tpwfp => SolverConfig {
            truncation: TruncationScale::MeanIntensity,
            ..cfg.with_denominator(1.0)
        },
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("fpm-out")
}

impl ExperimentConfig {
    /// Desk-scale geometry with all four solvers at [`desk_solver`] settings.
    pub fn desk() -> Self {
        Self {
            geometry: SystemGeometry::desk_scale(),
            sample: SampleConfig::default(),
            noise: NoiseSpec::default(),
            pupil_error: PupilErrorConfig::default(),
            solvers: all_solvers(),
            sweep: None,
            output_dir: default_output(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads and validates; relative image paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.sample.amplitude, &mut cfg.sample.phase]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.noise.validate()?;
        if self.solvers.is_empty() {
            return Err(Error::Config("at least one [[solver]] is required".into()));
        }
        for s in &self.solvers {
            s.validate()?;
        }
        if let Some(p) = self.pupil_error.wavevector_std_pixels {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::Config(format!(
                    "wavevector_std_pixels must be >= 0, got {p}"
                )));
            }
        }
        if self.sample.kind == SampleKind::Images {
            for (role, p) in [
                ("amplitude", &self.sample.amplitude),
                ("phase", &self.sample.phase),
            ] {
                match p {
                    None => {
                        return Err(Error::Config(format!(
                            "sample.{role} image path is required"
                        )))
                    }
                    Some(p) if !p.exists() => {
                        return Err(Error::Config(format!(
                            "sample.{role} image {} does not exist",
                            p.display()
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        if !(self.sample.phase_max >= 0.0 && self.sample.phase_max.is_finite()) {
            return Err(Error::Config(
                "sample.phase_max must be finite and >= 0".into(),
            ));
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(Error::Config("sweep.values must not be empty".into()));
            }
            if sw.repeats == 0 {
                return Err(Error::Config("sweep.repeats must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// Keeps only the named solvers, in the order given.
    pub fn select_solvers(&mut self, names: &[Algorithm]) -> Result<()> {
        let mut picked = Vec::new();
        for name in names {
            let found = self.solvers.iter().find(|s| s.algorithm == *name).cloned();
            picked.push(found.unwrap_or_else(|| desk_solver(*name)));
        }
        if picked.is_empty() {
            return Err(Error::Config("no solvers selected".into()));
        }
        self.solvers = picked;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon::StepDenominator;

    #[test]
    fn minimal_config_gets_defaults() {
        let text = r#"
            [geometry]
            wavelength = 625e-9
            na_objective = 0.08
            led_grid = [9, 9]
            led_spacing = 4e-3
            led_height = 52e-3
            pixel_size = 0.75e-6
            hr_size = 128
            lr_size = 32
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.geometry, SystemGeometry::desk_scale());
        let iters: Vec<_> = cfg.solvers.iter().map(|s| s.iterations).collect();
        assert_eq!(iters, vec![100, 1000, 200, 200]);
    }

    #[test]
    fn round_trip_through_toml() {
        let mut cfg = ExperimentConfig::desk();
        cfg.solvers[1].step_denominator = StepDenominator::Custom(5.0);
        cfg.sweep = Some(SweepConfig {
            parameter: SweepParameter::AH,
            values: vec![1.0, 25.0, 1e6],
            repeats: 3,
            base_seed: 7,
        });
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_sweeps_and_missing_images() {
        let mut cfg = ExperimentConfig::desk();
        cfg.sweep = Some(SweepConfig {
            parameter: SweepParameter::AH,
            values: vec![],
            repeats: 1,
            base_seed: 0,
        });
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::desk();
        cfg.sample.kind = SampleKind::Images;
        cfg.sample.amplitude = Some("/nonexistent/a.png".into());
        cfg.sample.phase = Some("/nonexistent/p.png".into());
        assert!(matches!(cfg.validate(), Err(Error::Config(m)) if m.contains("does not exist")));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "output_dir = \"x\"\nbogus = 1\n[geometry]\nwavelength = 1.0";
        assert!(ExperimentConfig::from_toml_str(text).is_err());
    }
}
