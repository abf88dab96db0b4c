//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fpm::field::ComplexField;
use fpm::harness::ExperimentConfig;
use fpm::optics::{FpmOperator, SystemGeometry};

pub fn random_field(n: usize, seed: u64) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexField::from_fn(n, n, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// 8 px HR grid, 4 px LR grid, 3x3 LEDs, pupil radius 2 px, offsets of 2 px.
pub fn small_geometry() -> SystemGeometry {
    let mut g = SystemGeometry::desk_scale();
    g.hr_size = 8;
    g.lr_size = 4;
    g.led_grid = [3, 3];
    g.na_objective = 0.1;
    g.pixel_size = 2.0 * g.wavelength / (g.na_objective * 8.0);
    g
}

pub fn desk_config() -> ExperimentConfig {
    ExperimentConfig::desk()
}

/// Dense `A` built straight from the imaging model: LR pixel `(r, c)` of LED
/// `l` is `(1/M) sum_q P(q) Z(centre + q - o_l) exp(+2 pi i (q . x) / M)`, with
/// `q` running over centred LR frequencies.
pub fn dense_matrix(op: &FpmOperator) -> Vec<Vec<Complex64>> {
    let n = op.hr_size() as i64;
    let m = op.lr_size() as i64;
    let pupil = &op.pupil().field;
    let mut rows = Vec::new();
    for led in &op.source().leds {
        for r in 0..m {
            for c in 0..m {
                let mut row = vec![Complex64::new(0.0, 0.0); (n * n) as usize];
                for qr in 0..m {
                    for qc in 0..m {
                        let p = pupil.get(qr as usize, qc as usize);
                        if p.norm_sqr() == 0.0 {
                            continue;
                        }
                        let (fr, fc) = (qr - m / 2, qc - m / 2);
                        let hr = n / 2 + fr - led.offset.row;
                        let hc = n / 2 + fc - led.offset.col;
                        let phase = 2.0 * PI * ((fr * r + fc * c) as f64) / m as f64;
                        row[(hr * n + hc) as usize] +=
                            p * Complex64::from_polar(1.0 / m as f64, phase);
                    }
                }
                rows.push(row);
            }
        }
    }
    rows
}

/// Largest mismatch, relative to `2 |grad_j|`, over `count` random entries, perturbing the real
/// and imaginary parts separately: `dL = 2 Re(conj(dz) grad)`.
pub fn worst_fd_mismatch(
    z: &ComplexField,
    grad: &ComplexField,
    count: usize,
    seed: u64,
    f: impl Fn(&ComplexField) -> f64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    // entries outside every LED window do not enter the objective at all
    let candidates: Vec<usize> = (0..z.len())
        .filter(|&j| grad.data()[j].norm() > 0.0)
        .collect();
    assert!(candidates.len() >= count);
    for _ in 0..count {
        let j = candidates[rng.random_range(0..candidates.len())];
        for dir in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
            let h = 1e-4 * z.data()[j].norm().max(1e-3);
            let at = |t: f64| {
                let mut x = z.clone();
                x.data_mut()[j] += dir * t;
                f(&x)
            };
            // fourth-order central difference
            let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            let analytic = 2.0 * (dir.conj() * grad.data()[j]).re;
            let rel = (fd - analytic).abs() / (2.0 * grad.data()[j].norm());
            worst = worst.max(rel);
        }
    }
    worst
}
