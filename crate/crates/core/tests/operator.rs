//! Forward operator against an explicitly assembled matrix, plus adjoint and
//! linearity properties.

mod common;

use num_complex::Complex64;
use proptest::prelude::*;

use common::{dense_matrix, random_field, small_geometry};
use fpm::field::ComplexField;
use fpm::optics::{FpmOperator, SystemGeometry};

fn stacked(fields: &[ComplexField]) -> Vec<Complex64> {
    fields
        .iter()
        .flat_map(|f| f.data().iter().copied())
        .collect()
}

#[test]
fn matches_dense_matrix_oracle() {
    let op = FpmOperator::from_geometry(&small_geometry()).unwrap();
    let a = dense_matrix(&op);
    for seed in 0..5 {
        let z = random_field(op.hr_size(), seed);
        let got = stacked(&op.apply_all(&z).unwrap());
        let want: Vec<Complex64> = a
            .iter()
            .map(|row| row.iter().zip(z.data()).map(|(x, y)| x * y).sum())
            .collect();
        let err: f64 = got
            .iter()
            .zip(&want)
            .map(|(g, w)| (g - w).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let scale: f64 = want.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
        assert!(
            err <= 1e-10 * scale,
            "forward mismatch {err:e} vs {scale:e}"
        );

        // A^H y from the conjugate transpose of the same matrix
        let m2 = op.lr_size() * op.lr_size();
        let y: Vec<ComplexField> = (0..op.led_count())
            .map(|l| random_field(op.lr_size(), 100 + seed * 31 + l as u64))
            .collect();
        let ys = stacked(&y);
        let got = op.adjoint_sum(&y).unwrap();
        let mut want = vec![Complex64::new(0.0, 0.0); z.len()];
        for (row, yi) in a.iter().zip(&ys) {
            for (w, aij) in want.iter_mut().zip(row) {
                *w += aij.conj() * yi;
            }
        }
        let err: f64 = got
            .data()
            .iter()
            .zip(&want)
            .map(|(g, w)| (g - w).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let scale: f64 = want.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
        assert!(
            err <= 1e-10 * scale,
            "adjoint mismatch {err:e} vs {scale:e}"
        );
        assert_eq!(a.len(), op.led_count() * m2);
    }
}

#[test]
fn adjoint_identity_every_led_desk_scale() {
    let op = FpmOperator::from_geometry(&SystemGeometry::desk_scale()).unwrap();
    for trial in 0..10 {
        let x = random_field(op.hr_size(), 7 + trial);
        for led in 0..op.led_count() {
            let y = random_field(op.lr_size(), 1000 * trial + led as u64);
            let ax = op.apply_field(&x, led).unwrap();
            let ahy = op.adjoint_field(&y, led).unwrap();
            let lhs = ax.inner(&y);
            let rhs = x.inner(&ahy);
            let rel = (lhs - rhs).norm() / (ax.norm() * y.norm());
            assert!(rel <= 1e-10, "LED {led}: {rel:e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn apply_is_linear(s1 in 0u64..1000, s2 in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let op = FpmOperator::from_geometry(&small_geometry()).unwrap();
        let x = random_field(op.hr_size(), s1);
        let y = random_field(op.hr_size(), s2 + 5000);
        let alpha = Complex64::new(a, b);
        let mut combo = x.clone();
        combo.axpy(alpha, &y);
        let lhs = stacked(&op.apply_all(&combo).unwrap());
        let ax = stacked(&op.apply_all(&x).unwrap());
        let ay = stacked(&op.apply_all(&y).unwrap());
        for ((l, u), v) in lhs.iter().zip(&ax).zip(&ay) {
            prop_assert!((l - (u + alpha * v)).norm() < 1e-12 * (1.0 + l.norm()));
        }
    }

    #[test]
    fn adjoint_holds_for_random_pairs(s1 in 0u64..10_000, s2 in 0u64..10_000) {
        let op = FpmOperator::from_geometry(&small_geometry()).unwrap();
        let x = random_field(op.hr_size(), s1);
        let y: Vec<ComplexField> = (0..op.led_count()).map(|l| random_field(op.lr_size(), s2 * 17 + l as u64)).collect();
        let ax = op.apply_all(&x).unwrap();
        let lhs: Complex64 = ax.iter().zip(&y).map(|(a, b)| a.inner(b)).sum();
        let rhs = x.inner(&op.adjoint_sum(&y).unwrap());
        let scale = stacked(&ax).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
            * stacked(&y).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * scale);
    }

    #[test]
    fn forward_is_nonnegative(seed in 0u64..10_000) {
        let op = FpmOperator::from_geometry(&small_geometry()).unwrap();
        let b = op.forward_all(&random_field(op.hr_size(), seed)).unwrap();
        prop_assert!(b.data().iter().all(|&v| v >= 0.0 && v.is_finite()));
    }
}
