use aniso_hardy::atom::DilatedBall;
use aniso_hardy::grid::{Axis, GridFunction};
use aniso_hardy::mixed_norm::{indicator_ball_norm, lp_norm, mixed_norm_eval, nested_norm};
use aniso_hardy::sampling::rng_for;
use aniso_hardy::{validate_dilation, Dilation, ExponentVector};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn dilation(m: [f64; 4]) -> Dilation {
    validate_dilation(&DMatrix::from_row_slice(2, 2, &m)).unwrap()
}

/// `‖1_{B_i}‖` with axis 0 innermost: sample the outer coordinate and use the
/// exact chord length of the ellipse along axis 0.
fn mc_indicator_norm(d: &Dilation, i: i32, p: [f64; 2], samples: usize, seed: u64) -> f64 {
    let e = d.ellipsoid();
    let inv = d.power(-i);
    let q = inv.transpose() * &e.p * &inv / (e.radius * e.radius);
    let (a, b, c) = (q[(0, 0)], q[(0, 1)], q[(1, 1)]);
    let half = (a / (a * c - b * b)).sqrt();
    let mut rng = rng_for(seed, 0);
    let mut acc = 0.0;
    for _ in 0..samples {
        let y = rng.random_range(-half..half);
        let disc = b * b * y * y - a * (c * y * y - 1.0);
        if disc > 0.0 {
            let chord = 2.0 * disc.sqrt() / a;
            acc += chord.powf(p[1] / p[0]);
        }
    }
    (acc / samples as f64 * 2.0 * half).powf(1.0 / p[1])
}

#[test]
fn indicator_norms_match_monte_carlo() {
    let cases: [([f64; 4], [f64; 2], i32); 6] = [
        ([2.0, 0.0, 0.0, 3.0], [0.5, 1.0], 0),
        ([2.0, 0.0, 0.0, 3.0], [0.5, 1.0], 2),
        ([2.0, 0.0, 0.0, 3.0], [1.0, 0.5], -1),
        ([1.0, -2.0, 1.0, 1.0], [0.5, 0.5], 1),
        ([2.0, 1.0, 0.0, 3.0], [2.0, 0.5], 0),
        ([2.0, 0.0, 0.0, 2.0], [1.0, 0.5], -2),
    ];
    for (k, (m, p, i)) in cases.into_iter().enumerate() {
        let d = dilation(m);
        let pv = ExponentVector::new(p.to_vec()).unwrap();
        let got = indicator_ball_norm(&d, &DilatedBall::centered(2, i), &pv, 128)
            .unwrap()
            .value;
        let want = mc_indicator_norm(&d, i, p, 400_000, k as u64);
        assert!(
            (got - want).abs() < 0.03 * want,
            "case {k}: {got} vs {want}"
        );
    }
}

#[test]
fn indicator_norm_is_translation_invariant() {
    let d = dilation([2.0, 0.0, 0.0, 3.0]);
    let pv = ExponentVector::new(vec![0.5, 1.0]).unwrap();
    let a = indicator_ball_norm(&d, &DilatedBall::centered(2, 1), &pv, 64).unwrap();
    let b = indicator_ball_norm(&d, &DilatedBall::new(vec![3.0, -7.5], 1), &pv, 64).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rectangle_law(
        sides in prop::collection::vec(0.05f64..20.0, 1..=3),
        ps in prop::collection::vec(0.2f64..4.0, 3),
        cells in 1usize..12,
    ) {
        let n = sides.len();
        let axes: Vec<Axis> = sides.iter().map(|&a| Axis::midpoint(0.0, a, cells)).collect();
        let mags = vec![1.0; cells.pow(n as u32)];
        let pv = ExponentVector::new(ps[..n].to_vec()).unwrap();
        let got = nested_norm(&axes, &mags, &pv).unwrap();
        let want: f64 = sides.iter().zip(&ps).map(|(a, p)| a.powf(1.0 / p)).product();
        prop_assert!((got - want).abs() <= 1e-10 * want, "{} vs {}", got, want);
    }

    #[test]
    fn constant_exponent_collapses(
        p in 0.2f64..6.0,
        seed in 0u64..10_000,
        nx in 2usize..9,
        ny in 2usize..9,
    ) {
        let axes = vec![Axis::midpoint(-1.0, 2.0, nx), Axis::midpoint(0.0, 0.5, ny)];
        let mut rng = rng_for(seed, 1);
        let vals: Vec<Complex64> = (0..nx * ny)
            .map(|_| Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect();
        let f = GridFunction::new(axes, vals).unwrap();
        let pv = ExponentVector::constant(p, 2).unwrap();
        let nested = mixed_norm_eval(&f, &pv).unwrap();
        let plain = lp_norm(&f, p);
        prop_assert!((nested - plain).abs() <= 1e-10 * plain);
    }

    #[test]
    fn homogeneous_and_monotone(
        c in 0.01f64..100.0,
        p in prop::array::uniform2(0.25f64..3.0),
        seed in 0u64..10_000,
    ) {
        let axes = vec![Axis::midpoint(0.0, 1.0, 5), Axis::midpoint(0.0, 2.0, 4)];
        let mut rng = rng_for(seed, 2);
        let mags: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..2.0)).collect();
        let pv = ExponentVector::new(p.to_vec()).unwrap();
        let base = nested_norm(&axes, &mags, &pv).unwrap();
        let scaled: Vec<f64> = mags.iter().map(|m| c * m).collect();
        let s = nested_norm(&axes, &scaled, &pv).unwrap();
        prop_assert!((s - c * base).abs() <= 1e-12 * c * base);
        let bigger: Vec<f64> = mags.iter().map(|m| m + 0.1).collect();
        prop_assert!(nested_norm(&axes, &bigger, &pv).unwrap() >= base);
    }
}
