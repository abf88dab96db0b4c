//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure or overrun of the criterion's time limit.

mod common;

use std::f64::consts::PI;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{dense_matrix, random_field, small_geometry, worst_fd_mismatch};
use fpm::field::ComplexField;
use fpm::harness::{self, ExperimentConfig, RunMeta, SweepConfig, SweepOutcome, SweepParameter};
use fpm::metrics::{error_at_phase, relative_error};
use fpm::noise::{perturb_wave_vectors, NoiseSpec, PupilErrorSpec};
use fpm::optics::{FpmOperator, SystemGeometry};
use fpm::recon::{
    gradient_intensity, gradient_poisson, objective_intensity, objective_poisson, solve, Algorithm,
    SolverConfig,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, u64, Box<dyn Fn() -> Outcome>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fmt_res(r: fpm::Result<f64>) -> Result<f64, String> {
    r.map_err(|e| e.to_string())
}

// C1
fn operator_correctness() -> Outcome {
    let op =
        FpmOperator::from_geometry(&SystemGeometry::desk_scale()).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for trial in 0..100u64 {
        let x = random_field(op.hr_size(), trial);
        for led in 0..op.led_count() {
            let y = random_field(op.lr_size(), 1_000_000 + trial * 1000 + led as u64);
            let ax = op.apply_field(&x, led).map_err(|e| e.to_string())?;
            let ahy = op.adjoint_field(&y, led).map_err(|e| e.to_string())?;
            let rel = (ax.inner(&y) - x.inner(&ahy)).norm() / (ax.norm() * y.norm());
            worst = worst.max(rel);
        }
    }

    let small = FpmOperator::from_geometry(&small_geometry()).map_err(|e| e.to_string())?;
    let a = dense_matrix(&small);
    let mut dense_worst: f64 = 0.0;
    let rel = |got: &[Complex64], want: &[Complex64]| {
        let err: f64 = got
            .iter()
            .zip(want)
            .map(|(g, w)| (g - w).norm_sqr())
            .sum::<f64>()
            .sqrt();
        err / want.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt()
    };
    for seed in 0..10 {
        let z = random_field(small.hr_size(), seed);
        let want: Vec<Complex64> = a
            .iter()
            .map(|row| row.iter().zip(z.data()).map(|(p, q)| p * q).sum())
            .collect();
        let fields = small.apply_all(&z).map_err(|e| e.to_string())?;
        let got: Vec<Complex64> = fields
            .iter()
            .flat_map(|f| f.data().iter().copied())
            .collect();
        dense_worst = dense_worst.max(rel(&got, &want));

        let b = small.forward_all(&z).map_err(|e| e.to_string())?;
        let want_b: Vec<Complex64> = want
            .iter()
            .map(|w| Complex64::new(w.norm_sqr(), 0.0))
            .collect();
        let got_b: Vec<Complex64> = b.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        dense_worst = dense_worst.max(rel(&got_b, &want_b));

        let y: Vec<ComplexField> = (0..small.led_count())
            .map(|l| random_field(small.lr_size(), 500 + seed * 31 + l as u64))
            .collect();
        let ys: Vec<Complex64> = y.iter().flat_map(|f| f.data().iter().copied()).collect();
        let mut want_h = vec![Complex64::new(0.0, 0.0); z.len()];
        for (row, yi) in a.iter().zip(&ys) {
            for (w, aij) in want_h.iter_mut().zip(row) {
                *w += aij.conj() * yi;
            }
        }
        let got_h = small.adjoint_sum(&y).map_err(|e| e.to_string())?;
        dense_worst = dense_worst.max(rel(got_h.data(), &want_h));
    }
    check(
        worst <= 1e-10 && dense_worst <= 1e-10,
        format!("adjoint worst {worst:.2e} (100 trials x 81 LEDs), dense oracle worst {dense_worst:.2e}, tol 1e-10"),
    )
}

// C2
fn gradient_correctness() -> Outcome {
    const FLOOR: f64 = 1e-12;
    let op =
        FpmOperator::from_geometry(&SystemGeometry::desk_scale()).map_err(|e| e.to_string())?;
    let z = random_field(op.hr_size(), 1);
    let c = op
        .forward_all(&random_field(op.hr_size(), 2))
        .map_err(|e| e.to_string())?;
    let gp = gradient_poisson(&op, &z, &c, None, FLOOR).map_err(|e| e.to_string())?;
    let gi = gradient_intensity(&op, &z, &c).map_err(|e| e.to_string())?;
    let p = worst_fd_mismatch(&z, &gp, 20, 11, |x| {
        objective_poisson(&op, x, &c, FLOOR).unwrap()
    });
    let i = worst_fd_mismatch(&z, &gi, 20, 12, |x| {
        objective_intensity(&op, x, &c).unwrap()
    });
    check(
        p <= 1e-5 && i <= 1e-5,
        format!("worst mismatch poisson {p:.2e}, intensity {i:.2e} over 20 entries, re and im; tol 1e-5"),
    )
}

// C3 and C8 share one noiseless run at default budgets.
fn noiseless_recovery(dir: &std::path::Path) -> Outcome {
    let cfg = ExperimentConfig::desk();
    let data = dir.join("dataset");
    harness::synthesize(&cfg, &data).map_err(|e| e.to_string())?;
    let runs =
        harness::reconstruct(&data, &cfg.solvers, &dir.join("runs")).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &runs {
        let tol = if r.meta.algorithm == Algorithm::Ap {
            1e-2
        } else {
            1e-3
        };
        let re = r.meta.relative_error.unwrap_or(f64::INFINITY);
        ok &= re <= tol;
        parts.push(format!(
            "{} {:.2e} (<= {tol:.0e}, {} it)",
            r.meta.algorithm, re, r.meta.iterations_run
        ));
    }
    check(ok && runs.len() == 4, parts.join(", "))
}

// C4
fn pwfp_tpwfp_equivalence() -> Outcome {
    let mut cfg = ExperimentConfig::desk();
    cfg.noise = NoiseSpec::gaussian(2e-3, 3);
    let syn = harness::synthesize_in_memory(&cfg).map_err(|e| e.to_string())?;
    let mut t = harness::desk_solver(Algorithm::Tpwfp);
    t.a_h = f64::INFINITY;
    let p = SolverConfig {
        algorithm: Algorithm::Pwfp,
        ..t.clone()
    };
    let a =
        solve(&syn.op, &syn.measured, &t, Some(&syn.truth_spectrum)).map_err(|e| e.to_string())?;
    let b =
        solve(&syn.op, &syn.measured, &p, Some(&syn.truth_spectrum)).map_err(|e| e.to_string())?;
    check(
        a.same_numbers(&b),
        format!(
            "tpwfp(a_h=inf) vs pwfp, {} iterations, bit-identical spectra and traces",
            t.iterations
        ),
    )
}

fn run_sweep(
    solvers: &[Algorithm],
    parameter: SweepParameter,
    values: Vec<f64>,
    repeats: usize,
    edit: impl Fn(&mut ExperimentConfig),
) -> Result<SweepOutcome, String> {
    let mut cfg = ExperimentConfig::desk();
    cfg.solvers = solvers.iter().map(|&a| harness::desk_solver(a)).collect();
    for s in &mut cfg.solvers {
        s.record_trace_every = 0;
    }
    cfg.sweep = Some(SweepConfig {
        parameter,
        values,
        repeats,
        base_seed: 2024,
    });
    edit(&mut cfg);
    let out = harness::sweep(&cfg, None).map_err(|e| e.to_string())?;
    if let Some(bad) = out.cells.iter().find(|c| c.re.is_err()) {
        return Err(format!(
            "{} failed at {}={}: {:?}",
            bad.solver,
            parameter.name(),
            bad.value,
            bad.re
        ));
    }
    Ok(out)
}

fn mean(o: &SweepOutcome, alg: Algorithm, value: f64) -> f64 {
    o.mean_re(alg, value).unwrap_or(f64::INFINITY)
}

// C5
fn threshold_sweep() -> Outcome {
    let values = vec![1.0, 5.0, 25.0, 125.0, 1e6];
    let o = run_sweep(
        &[Algorithm::Tpwfp],
        SweepParameter::AH,
        values.clone(),
        10,
        |c| {
            c.noise = NoiseSpec::gaussian(2e-3, 0);
        },
    )?;
    let m: Vec<f64> = values
        .iter()
        .map(|&v| mean(&o, Algorithm::Tpwfp, v))
        .collect();
    let curve: Vec<String> = values
        .iter()
        .zip(&m)
        .map(|(v, r)| format!("{v}:{r:.2e}"))
        .collect();
    check(
        m[2] < m[0] && m[2] < m[4],
        format!("mean RE over 10 repeats, a_h {}", curve.join(" ")),
    )
}

// C6
fn noise_robustness() -> Outcome {
    use Algorithm::{Ap, Tpwfp, Wfp};
    let gauss = run_sweep(
        &[Wfp, Tpwfp],
        SweepParameter::GaussianStdRatio,
        vec![2e-3, 4e-3],
        10,
        |_| {},
    )?;
    let speckle = run_sweep(
        &[Ap, Wfp, Tpwfp],
        SweepParameter::SpeckleAmplitude,
        vec![0.3],
        10,
        |_| {},
    )?;
    let poisson = run_sweep(
        &[Ap, Wfp, Tpwfp],
        SweepParameter::PoissonPeakPhotons,
        vec![1e3],
        10,
        |_| {},
    )?;
    let mut ok = true;
    let mut parts = Vec::new();
    for v in [2e-3, 4e-3] {
        let (t, w) = (mean(&gauss, Tpwfp, v), mean(&gauss, Wfp, v));
        ok &= t <= w;
        parts.push(format!("gaussian {v}: tpwfp {t:.2e} wfp {w:.2e}"));
    }
    for (name, o, v) in [
        ("speckle 0.3", &speckle, 0.3),
        ("poisson peak 1e3", &poisson, 1e3),
    ] {
        let (t, a, w) = (mean(o, Tpwfp, v), mean(o, Ap, v), mean(o, Wfp, v));
        ok &= t <= a && t <= w;
        parts.push(format!("{name}: tpwfp {t:.2e} ap {a:.2e} wfp {w:.2e}"));
    }
    check(ok, format!("10 repeats; {}", parts.join("; ")))
}

// C7
fn pupil_error() -> Outcome {
    const STD_PX: f64 = 1.25;
    let geom = SystemGeometry::desk_scale();
    let op = FpmOperator::from_geometry(&geom).map_err(|e| e.to_string())?;
    let src = op.source();
    // realised spread of the pixel offsets at this wave-vector std
    let mut dev = Vec::new();
    for seed in 0..50 {
        let spec = PupilErrorSpec {
            wavevector_std: STD_PX * src.delta_k,
            seed,
        };
        let p = perturb_wave_vectors(src, &spec, geom.hr_size, geom.lr_size)
            .map_err(|e| e.to_string())?;
        for (a, b) in src.leds.iter().zip(&p.source.leds) {
            dev.push((b.offset.row - a.offset.row) as f64);
            dev.push((b.offset.col - a.offset.col) as f64);
        }
    }
    let offset_std = (dev.iter().map(|d| d * d).sum::<f64>() / dev.len() as f64).sqrt();

    let all = Algorithm::ALL;
    let o = run_sweep(
        &all,
        SweepParameter::WavevectorStdPixels,
        vec![STD_PX],
        10,
        |c| {
            for s in c
                .solvers
                .iter_mut()
                .filter(|s| s.algorithm == Algorithm::Tpwfp)
            {
                s.a_h = 1.0;
            }
        },
    )?;
    let t = mean(&o, Algorithm::Tpwfp, STD_PX);
    let others: Vec<(Algorithm, f64)> = [Algorithm::Ap, Algorithm::Wfp, Algorithm::Pwfp]
        .iter()
        .map(|&a| (a, mean(&o, a, STD_PX)))
        .collect();
    let ok = (1.0..=2.0).contains(&offset_std) && others.iter().all(|&(_, r)| t < r);
    let rest: Vec<String> = others.iter().map(|(a, r)| format!("{a} {r:.2e}")).collect();
    check(
        ok,
        format!(
            "offset std {offset_std:.2} px (need 1-2), 10 repeats, tpwfp(a_h=1) {t:.2e} vs {}",
            rest.join(" ")
        ),
    )
}

// C8
fn table1_budgets(dir: &std::path::Path) -> Outcome {
    let mut got = Vec::new();
    for alg in Algorithm::ALL {
        let path = dir.join("runs").join(alg.name()).join("run.meta");
        let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let meta: RunMeta = toml::from_str(&text).map_err(|e| e.to_string())?;
        got.push((alg, meta.iterations, meta.iterations_run));
    }
    let want = [100, 1000, 200, 200];
    let ok = got.iter().zip(want).all(|(&(_, i, r), w)| i == w && r == w);
    let text: Vec<String> = got.iter().map(|(a, i, _)| format!("{a} {i}")).collect();
    check(ok, format!("run.meta iterations {}", text.join(", ")))
}

// C9
fn metric_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    let mut oracle_violation: f64 = 0.0;
    for trial in 0..50 {
        let r = random_field(16, 10_000 + trial);
        let theta = rng.random_range(-PI..PI);
        let alpha = rng.random_range(0.05..4.0);
        let rotated = fmt_res(relative_error(
            &r.scale(Complex64::from_polar(1.0, theta)),
            &r,
        ))?;
        let scaled = fmt_res(relative_error(
            &r.scale(Complex64::from_polar(alpha, theta)),
            &r,
        ))?;
        worst = worst
            .max(rotated)
            .max((scaled - (alpha - 1.0) * (alpha - 1.0)).abs());

        let z = random_field(16, 20_000 + trial);
        let re = fmt_res(relative_error(&z, &r))?;
        let sampled = (0..1024)
            .map(|t| error_at_phase(&z, &r, 2.0 * PI * t as f64 / 1024.0).unwrap())
            .fold(f64::INFINITY, f64::min);
        oracle_violation = oracle_violation.max(re - sampled);
    }
    check(
        worst <= 1e-10 && oracle_violation <= 1e-10,
        format!("identity/scaling worst {worst:.2e}, closed form minus 1024-phase minimum <= {oracle_violation:.2e}; tol 1e-10"),
    )
}

// C10
fn sweep_determinism(dir: &std::path::Path) -> Outcome {
    let mut cfg = ExperimentConfig::desk();
    cfg.sweep = Some(SweepConfig {
        parameter: SweepParameter::GaussianStdRatio,
        values: vec![2e-3],
        repeats: 2,
        base_seed: 77,
    });
    let a = dir.join("sweep_a");
    let b = dir.join("sweep_b");
    harness::sweep(&cfg, Some(&a)).map_err(|e| e.to_string())?;
    harness::sweep(&cfg, Some(&b)).map_err(|e| e.to_string())?;
    let mut same = true;
    for f in ["config.toml", "cells.csv", "summary.csv"] {
        let x = fs::read(a.join(f)).map_err(|e| e.to_string())?;
        let y = fs::read(b.join(f)).map_err(|e| e.to_string())?;
        same &= x == y;
    }
    check(
        same,
        "config.toml, cells.csv, summary.csv byte-identical across two runs (4 solvers x 2 repeats)".into(),
    )
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let dir = tmp.path().to_path_buf();
    let criteria: Vec<Criterion> = vec![
        (
            "C1",
            "operator correctness",
            10,
            Box::new(operator_correctness),
        ),
        (
            "C2",
            "gradient correctness",
            30,
            Box::new(gradient_correctness),
        ),
        (
            "C3",
            "noiseless recovery",
            300,
            Box::new({
                let d = dir.clone();
                move || noiseless_recovery(&d)
            }),
        ),
        (
            "C4",
            "pwfp/tpwfp equivalence",
            60,
            Box::new(pwfp_tpwfp_equivalence),
        ),
        (
            "C5",
            "a_h sweep",
            1200,
            Box::new(threshold_sweep),
        ),
        (
            "C6",
            "noise robustness",
            1200,
            Box::new(noise_robustness),
        ),
        (
            "C7",
            "pupil location error",
            1200,
            Box::new(pupil_error),
        ),
        (
            "C8",
            "default budgets",
            10,
            Box::new({
                let d = dir.clone();
                move || table1_budgets(&d)
            }),
        ),
        ("C9", "metric properties", 10, Box::new(metric_properties)),
        (
            "C10",
            "sweep determinism",
            300,
            Box::new({
                let d = dir.clone();
                move || sweep_determinism(&d)
            }),
        ),
    ];
    let mut failures = 0;
    for (id, name, limit, f) in &criteria {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let late = took > Duration::from_secs(*limit);
        let (status, detail) = match (&outcome, late) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; exceeded {limit} s")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!(
            "{status} {id} {name}: {detail} [{:.1} s]",
            took.as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
