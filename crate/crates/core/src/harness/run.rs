//! The four harness operations: synthesize, reconstruct, sweep, report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SampleKind, SweepParameter};
use super::dataset::{
    read_field, read_measurements, read_meta, write_field, write_measurements, write_meta,
    write_preview, DatasetMeta, DatasetPaths,
};
use super::sample::SampleMaps;
use crate::error::{Error, Result};
use crate::field::{ComplexField, Fourier2d};
use crate::metrics::{trace_report, EvalReport};
use crate::noise::{perturb_wave_vectors, NoiseKind};
use crate::optics::{adjacent_overlap, FpmOperator, MeasurementSet, Pupil};
use crate::recon::{solve, Algorithm, ReconResult, SolverConfig};

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// A synthesized dataset held in memory.
#[derive(Debug, Clone)]
pub struct Synthesis {
    /// Operator on the nominal geometry.
    pub op: FpmOperator,
    pub truth_field: ComplexField,
    pub truth_spectrum: ComplexField,
    pub clean: MeasurementSet,
    pub measured: MeasurementSet,
    pub meta: DatasetMeta,
}

/// Builds the ground truth, simulates `b`, and corrupts it into `c`.
pub fn synthesize_in_memory(cfg: &ExperimentConfig) -> Result<Synthesis> {
    cfg.validate()?;
    let geom = &cfg.geometry;
    let op = FpmOperator::from_geometry(geom)?;
    let overlap = adjacent_overlap(geom, op.source());
    if !overlap.is_adequate() {
        warn!(
            "adjacent LED spectra overlap by {:.2} (min); below 0.5 the reconstruction is poorly constrained",
            overlap.min
        );
    }
    let n = geom.hr_size;
    let s = &cfg.sample;
    let maps = match s.kind {
        SampleKind::Procedural => SampleMaps::procedural(n, s.smoothness, s.phase_max, s.seed)?,
        SampleKind::Images => {
            let (a, p) = (s.amplitude.as_ref(), s.phase.as_ref());
            let (a, p) = a
                .zip(p)
                .ok_or_else(|| Error::Config("image sample needs amplitude and phase".into()))?;
            SampleMaps::from_images(a, p, n, s.phase_max)?
        }
    };
    let fft = Fourier2d::new(n, n)?;
    let truth_field = fft.inverse(&maps.spectrum(&op, s.bandlimit)?)?;
    // the stored artefact is the spatial field; deriving the spectrum from it
    // keeps in-memory scores identical to scores of a reloaded dataset
    let truth_spectrum = fft.forward(&truth_field)?;

    let pupil_spec = cfg.pupil_error.resolve(op.source().delta_k);
    let mut warnings = Vec::new();
    let clean = if pupil_spec.is_identity() {
        op.forward_all(&truth_spectrum)?
    } else {
        let perturbed = perturb_wave_vectors(op.source(), &pupil_spec, n, geom.lr_size)?;
        warnings.extend(perturbed.warnings);
        let synth_op = FpmOperator::new(n, Pupil::from_geometry(geom), perturbed.source)?;
        synth_op.forward_all(&truth_spectrum)?
    };
    let measured = cfg.noise.apply(&clean)?;
    let meta = DatasetMeta {
        geometry: geom.clone(),
        noise: cfg.noise.clone(),
        pupil_error: pupil_spec,
        sample_seed: s.seed,
        amplitude_range: [0.0, 1.0],
        phase_range: [0.0, s.phase_max],
        bandlimited: s.bandlimit,
        led_count: op.led_count(),
        warnings,
    };
    Ok(Synthesis {
        op,
        truth_field,
        truth_spectrum,
        clean,
        measured,
        meta,
    })
}

/// Writes a dataset directory: `geometry.meta`, `b.raw`, `c.raw`,
/// `ground_truth.cfld` (spatial field) and 16-bit PNG previews.
pub fn synthesize(cfg: &ExperimentConfig, out: &Path) -> Result<Synthesis> {
    let syn = synthesize_in_memory(cfg)?;
    mkdir(out)?;
    let paths = DatasetPaths::new(out);
    write_meta(&paths.meta(), &syn.meta)?;
    write_measurements(&paths.clean(), &syn.clean)?;
    write_measurements(&paths.measured(), &syn.measured)?;
    write_field(&paths.ground_truth(), &syn.truth_field)?;
    let n = cfg.geometry.hr_size;
    write_preview(
        &out.join("ground_truth_amplitude.png"),
        &syn.truth_field.amplitude(),
        n,
        n,
    )?;
    write_preview(
        &out.join("ground_truth_phase.png"),
        &syn.truth_field.phase(),
        n,
        n,
    )?;
    let m = cfg.geometry.lr_size;
    let centre = syn.op.source().center;
    write_preview(&out.join("c_center.png"), syn.measured.image(centre), m, m)?;
    info!(
        "wrote dataset with {} LEDs to {}",
        syn.op.led_count(),
        out.display()
    );
    Ok(syn)
}

/// A dataset read back from disk. The ground truth is optional so externally
/// captured data in the same layout can be reconstructed.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub op: FpmOperator,
    pub measured: MeasurementSet,
    pub truth_spectrum: Option<ComplexField>,
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let paths = DatasetPaths::new(dir);
    let meta = read_meta(&paths.meta())?;
    let op = FpmOperator::from_geometry(&meta.geometry)?;
    let measured = read_measurements(&paths.measured())?;
    let truth_spectrum = if paths.ground_truth().exists() {
        let field = read_field(&paths.ground_truth())?;
        Some(Fourier2d::new(field.rows(), field.cols())?.forward(&field)?)
    } else {
        None
    };
    Ok(Dataset {
        meta,
        op,
        measured,
        truth_spectrum,
    })
}

/// Contents of each solver's `run.meta`. Wall times live in `timing.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub iterations_run: usize,
    pub relative_error: Option<f64>,
    pub aligned_phase: Option<f64>,
    pub config: SolverConfig,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub result: ReconResult,
    pub report: EvalReport,
    pub meta: RunMeta,
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let err = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_trace_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let rows = report.trace.iter().map(|p| {
        vec![
            p.iteration.to_string(),
            p.objective.to_string(),
            p.re.map(|v| v.to_string()).unwrap_or_default(),
            p.xi_size.to_string(),
        ]
    });
    write_csv(path, &["iteration", "objective", "re", "xi_size"], rows)
}

fn write_timing_csv(path: &Path, result: &ReconResult) -> Result<()> {
    let rows = result
        .trace
        .iter()
        .map(|e| vec![e.iteration.to_string(), e.wall_seconds.to_string()])
        .chain(std::iter::once(vec![
            "total".to_string(),
            result.wall_seconds.to_string(),
        ]));
    write_csv(path, &["iteration", "seconds_per_iteration"], rows)
}

/// Runs every solver on a loaded dataset and writes one directory per solver
/// under `out`.
pub fn reconstruct_dataset(
    data: &Dataset,
    solvers: &[SolverConfig],
    out: &Path,
) -> Result<Vec<RunOutput>> {
    mkdir(out)?;
    let mut outputs = Vec::new();
    for cfg in solvers {
        info!(
            "running {} for {} iterations",
            cfg.algorithm, cfg.iterations
        );
        let result = solve(&data.op, &data.measured, cfg, data.truth_spectrum.as_ref())?;
        let report = trace_report(&result, data.truth_spectrum.as_ref())?;
        let dir = out.join(cfg.algorithm.name());
        mkdir(&dir)?;
        write_field(&dir.join("spectrum.cfld"), &result.spectrum)?;
        write_field(&dir.join("field.cfld"), &result.field)?;
        let n = result.field.rows();
        write_preview(&dir.join("amplitude.png"), &result.field.amplitude(), n, n)?;
        write_preview(&dir.join("phase.png"), &result.field.phase(), n, n)?;
        write_trace_csv(&dir.join("metrics.csv"), &report)?;
        write_timing_csv(&dir.join("timing.csv"), &result)?;
        let meta = RunMeta {
            algorithm: cfg.algorithm,
            iterations: cfg.iterations,
            iterations_run: result.iterations_run,
            relative_error: report.relative_error,
            aligned_phase: report.aligned_phase,
            config: result.config.clone(),
        };
        let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
        let meta_path = dir.join("run.meta");
        fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
        outputs.push(RunOutput {
            dir,
            result,
            report,
            meta,
        });
    }
    Ok(outputs)
}

pub fn reconstruct(dataset: &Path, solvers: &[SolverConfig], out: &Path) -> Result<Vec<RunOutput>> {
    let data = load_dataset(dataset)?;
    reconstruct_dataset(&data, solvers, out)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of sweep cell `(value_index, repeat)`; a pure function of its inputs.
pub fn derive_seed(base: u64, value_index: usize, repeat: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ value_index as u64) ^ repeat as u64)
}

/// Configuration of one sweep cell: the swept value applied, and the sample,
/// noise and pupil-error seeds derived from the cell seed.
pub fn cell_config(
    cfg: &ExperimentConfig,
    value_index: usize,
    repeat: usize,
) -> Result<ExperimentConfig> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [sweep] block".into()))?;
    let value = *sweep
        .values
        .get(value_index)
        .ok_or_else(|| Error::Config(format!("sweep value index {value_index} out of range")))?;
    let seed = derive_seed(sweep.base_seed, value_index, repeat);
    let mut c = cfg.clone();
    c.sample.seed = splitmix64(seed ^ 1);
    c.noise.seed = splitmix64(seed ^ 2);
    c.pupil_error.seed = splitmix64(seed ^ 3);
    match sweep.parameter {
        SweepParameter::AH => {
            for s in c
                .solvers
                .iter_mut()
                .filter(|s| s.algorithm == Algorithm::Tpwfp)
            {
                s.a_h = value;
            }
        }
        SweepParameter::GaussianStdRatio => {
            c.noise.kind = NoiseKind::Gaussian;
            c.noise.gaussian_std_ratio = value;
        }
        SweepParameter::PoissonPeakPhotons => {
            c.noise.kind = NoiseKind::Poisson;
            c.noise.poisson_peak_photons = value;
        }
        SweepParameter::SpeckleAmplitude => {
            c.noise.kind = NoiseKind::Speckle;
            c.noise.speckle_amplitude = value;
        }
        SweepParameter::WavevectorStdPixels => c.pupil_error.wavevector_std_pixels = Some(value),
        SweepParameter::None => {}
    }
    Ok(c)
}

/// One solver run inside one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub value_index: usize,
    pub value: f64,
    pub repeat: usize,
    pub seed: u64,
    pub solver: Algorithm,
    /// `Err` holds the failure message; the sweep carries on.
    pub re: std::result::Result<f64, String>,
    pub iterations_run: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub solver: Algorithm,
    pub value: f64,
    pub mean_re: Option<f64>,
    pub ok: usize,
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub parameter: SweepParameter,
    pub cells: Vec<CellResult>,
    pub summary: Vec<SummaryRow>,
}

impl SweepOutcome {
    pub fn mean_re(&self, solver: Algorithm, value: f64) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.solver == solver && r.value == value)
            .and_then(|r| r.mean_re)
    }
}

fn run_cell(cfg: &ExperimentConfig, vi: usize, rep: usize) -> Vec<CellResult> {
    let sweep = cfg.sweep.as_ref().expect("validated");
    let value = sweep.values[vi];
    let seed = derive_seed(sweep.base_seed, vi, rep);
    let failed = |solver: Algorithm, msg: String| CellResult {
        value_index: vi,
        value,
        repeat: rep,
        seed,
        solver,
        re: Err(msg),
        iterations_run: 0,
        wall_seconds: 0.0,
    };
    let syn = match cell_config(cfg, vi, rep).and_then(|c| synthesize_in_memory(&c).map(|s| (c, s)))
    {
        Ok(v) => v,
        Err(e) => {
            return cfg
                .solvers
                .iter()
                .map(|s| failed(s.algorithm, e.to_string()))
                .collect()
        }
    };
    let (cell_cfg, syn) = syn;
    cell_cfg
        .solvers
        .iter()
        .map(|s| {
            let solver = SolverConfig {
                record_trace_every: 0,
                ..s.clone()
            };
            match solve(&syn.op, &syn.measured, &solver, None) {
                Ok(r) => CellResult {
                    value_index: vi,
                    value,
                    repeat: rep,
                    seed,
                    solver: s.algorithm,
                    re: crate::metrics::relative_error(&r.spectrum, &syn.truth_spectrum)
                        .map_err(|e| e.to_string()),
                    iterations_run: r.iterations_run,
                    wall_seconds: r.wall_seconds,
                },
                Err(e) => {
                    warn!("cell value={value} repeat={rep} {}: {e}", s.algorithm);
                    failed(s.algorithm, e.to_string())
                }
            }
        })
        .collect()
}

/// Runs every (value, repeat) cell, in parallel, and aggregates in
/// (value, repeat) order. Without `out`, nothing is written.
pub fn sweep(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<SweepOutcome> {
    cfg.validate()?;
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [sweep] block".into()))?;
    let jobs: Vec<(usize, usize)> = (0..sw.values.len())
        .flat_map(|vi| (0..sw.repeats).map(move |r| (vi, r)))
        .collect();
    let cells: Vec<CellResult> = jobs
        .par_iter()
        .flat_map_iter(|&(vi, r)| run_cell(cfg, vi, r))
        .collect();

    let mut summary = Vec::new();
    for s in &cfg.solvers {
        for &value in &sw.values {
            let rows: Vec<_> = cells
                .iter()
                .filter(|c| c.solver == s.algorithm && c.value == value)
                .collect();
            let ok: Vec<f64> = rows
                .iter()
                .filter_map(|c| c.re.as_ref().ok().copied())
                .collect();
            summary.push(SummaryRow {
                solver: s.algorithm,
                value,
                mean_re: (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64),
                ok: ok.len(),
                failed: rows.len() - ok.len(),
            });
        }
    }
    let outcome = SweepOutcome {
        parameter: sw.parameter,
        cells,
        summary,
    };
    if let Some(dir) = out {
        write_sweep(dir, cfg, &outcome)?;
    }
    Ok(outcome)
}

fn write_sweep(dir: &Path, cfg: &ExperimentConfig, o: &SweepOutcome) -> Result<()> {
    mkdir(dir)?;
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, cfg.to_toml_string()?).map_err(|e| Error::io(&cfg_path, e))?;
    let param = o.parameter.name();
    let cells = o.cells.iter().map(|c| {
        let (re, status) = match &c.re {
            Ok(v) => (v.to_string(), "ok".to_string()),
            Err(m) => (String::new(), m.clone()),
        };
        vec![
            c.value.to_string(),
            c.repeat.to_string(),
            c.seed.to_string(),
            c.solver.name().to_string(),
            re,
            c.iterations_run.to_string(),
            status,
        ]
    });
    write_csv(
        &dir.join("cells.csv"),
        &[
            param,
            "repeat",
            "seed",
            "solver",
            "re",
            "iterations_run",
            "status",
        ],
        cells,
    )?;
    let summary = o.summary.iter().map(|r| {
        vec![
            r.solver.name().to_string(),
            r.value.to_string(),
            r.mean_re.map(|v| v.to_string()).unwrap_or_default(),
            r.ok.to_string(),
            r.failed.to_string(),
        ]
    });
    write_csv(
        &dir.join("summary.csv"),
        &["solver", param, "mean_re", "ok", "failed"],
        summary,
    )?;
    let timing = o.cells.iter().map(|c| {
        vec![
            c.value.to_string(),
            c.repeat.to_string(),
            c.solver.name().to_string(),
            c.wall_seconds.to_string(),
        ]
    });
    write_csv(
        &dir.join("timing.csv"),
        &[param, "repeat", "solver", "wall_seconds"],
        timing,
    )
}

/// Summarises a sweep directory (`summary.csv`) or a reconstruction
/// directory (one `run.meta` per solver) as a Markdown table, also written to
/// `report.md`.
pub fn report(dir: &Path) -> Result<String> {
    let mut text = String::new();
    let summary = dir.join("summary.csv");
    if summary.exists() {
        let mut r =
            csv::Reader::from_path(&summary).map_err(|e| Error::format(&summary, e.to_string()))?;
        let headers = r
            .headers()
            .map_err(|e| Error::format(&summary, e.to_string()))?
            .clone();
        let _ = writeln!(
            text,
            "| {} |",
            headers.iter().collect::<Vec<_>>().join(" | ")
        );
        let _ = writeln!(text, "|{}", "---|".repeat(headers.len()));
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::format(&summary, e.to_string()))?;
            let _ = writeln!(text, "| {} |", rec.iter().collect::<Vec<_>>().join(" | "));
        }
    } else {
        let mut runs = Vec::new();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry
                .map_err(|e| Error::io(dir, e))?
                .path()
                .join("run.meta");
            if path.exists() {
                let meta_text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let meta: RunMeta =
                    toml::from_str(&meta_text).map_err(|e| Error::format(&path, e.to_string()))?;
                let timing = path.with_file_name("timing.csv");
                let seconds = fs::read_to_string(&timing)
                    .ok()
                    .and_then(|t| {
                        t.lines()
                            .last()
                            .and_then(|l| l.split(',').nth(1)?.parse::<f64>().ok())
                    })
                    .map(|s| format!("{s:.3}"))
                    .unwrap_or_default();
                runs.push((meta, seconds));
            }
        }
        if runs.is_empty() {
            return Err(Error::Config(format!(
                "{} holds neither summary.csv nor solver run.meta files",
                dir.display()
            )));
        }
        runs.sort_by_key(|(m, _)| Algorithm::ALL.iter().position(|a| *a == m.algorithm));
        let _ = writeln!(
            text,
            "| solver | iterations | iterations_run | re | wall_seconds |"
        );
        let _ = writeln!(text, "|---|---|---|---|---|");
        for (m, s) in runs {
            let re = m
                .relative_error
                .map(|v| format!("{v:.4e}"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                text,
                "| {} | {} | {} | {re} | {s} |",
                m.algorithm, m.iterations, m.iterations_run
            );
        }
    }
    let path = dir.join("report.md");
    fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    Ok(text)
}
