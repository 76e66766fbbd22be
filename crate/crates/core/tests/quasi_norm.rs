use aniso_hardy::quasi_norm::RhoIndex;
use aniso_hardy::sampling::rng_for;
use aniso_hardy::{validate_dilation, Dilation, QuasiNormEvaluator};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn dilations() -> Vec<Dilation> {
    [
        [2.0, 0.0, 0.0, 2.0],
        [2.0, 0.0, 0.0, 3.0],
        [1.0, -2.0, 1.0, 1.0],
    ]
    .iter()
    .map(|m| validate_dilation(&DMatrix::from_row_slice(2, 2, m)).unwrap())
    .collect()
}

/// `x ∈ B_j` straight from `P` and an independently inverted `A^j`.
fn in_ball(d: &Dilation, x: &[f64], j: i32) -> bool {
    let e = d.ellipsoid();
    let a = d.matrix().clone();
    let m = if j >= 0 {
        a.pow(j as u32)
    } else {
        a.try_inverse().unwrap().pow((-j) as u32)
    };
    let inv = m.try_inverse().unwrap();
    let v = &inv * nalgebra::DVector::from_column_slice(x);
    (v.transpose() * &e.p * &v)[(0, 0)] < e.radius * e.radius
}

/// Largest `j` with `x ∉ B_j`, found by walking up from the bottom.
fn scan_index(d: &Dilation, x: &[f64]) -> i32 {
    let mut j = -60;
    while !in_ball(d, x, j + 1) {
        j += 1;
    }
    j
}

fn random_point(rng: &mut impl Rng) -> Vec<f64> {
    // Log-uniform radius so the points spread over many shells.
    let r = 10f64.powf(rng.random_range(-4.0..4.0));
    let t = rng.random_range(0.0..std::f64::consts::TAU);
    vec![r * t.cos(), r * t.sin()]
}

#[test]
fn binary_search_matches_linear_scan() {
    for (k, d) in dilations().into_iter().enumerate() {
        let e = QuasiNormEvaluator::new(d.clone());
        let mut rng = rng_for(17, k as u64);
        let mut disagreements = Vec::new();
        for _ in 0..10_000 {
            let x = random_point(&mut rng);
            let RhoIndex::Step(i) = e.index(&x).unwrap() else {
                panic!("zero index for nonzero point")
            };
            let want = scan_index(&d, &x);
            if i != want {
                disagreements.push((x, i, want));
            }
        }
        assert!(
            disagreements.is_empty(),
            "matrix {k}: {:?}",
            &disagreements[..disagreements.len().min(5)]
        );
    }
}

#[test]
fn homogeneous_under_dilation() {
    for (k, d) in dilations().into_iter().enumerate() {
        let e = QuasiNormEvaluator::new(d.clone());
        let b = d.b();
        let mut rng = rng_for(18, k as u64);
        for _ in 0..10_000 {
            let x = random_point(&mut rng);
            let ax = d.apply_power(1, &x);
            let (Some(i), Some(j)) = (e.index(&x).unwrap().step(), e.index(&ax).unwrap().step())
            else {
                panic!("zero index")
            };
            assert_eq!(j, i + 1, "matrix {k} at {x:?}");
            let (r, ra) = (e.rho(&x).unwrap(), e.rho(&ax).unwrap());
            assert!((ra - b * r).abs() <= 1e-15 * ra, "{ra} vs {}", b * r);
        }
    }
}

#[test]
fn origin_and_saturation() {
    let d = &dilations()[1];
    let e = QuasiNormEvaluator::with_range(d.clone(), -5, 5);
    assert_eq!(e.rho(&[0.0, 0.0]).unwrap(), 0.0);
    assert!(e.rho(&[1e-9, 0.0]).is_err());
    assert!(e.rho(&[1e9, 0.0]).is_err());
    assert!(e.rho(&[f64::NAN, 0.0]).is_err());
    assert!(e.rho(&[1.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn symmetric_and_dilation_covariant(
        r in -3.0f64..3.0,
        t in 0.0f64..std::f64::consts::TAU,
        k in -4i32..=4,
        m in 0usize..3,
    ) {
        let d = dilations().swap_remove(m);
        let e = QuasiNormEvaluator::new(d.clone());
        let x = vec![10f64.powf(r) * t.cos(), 10f64.powf(r) * t.sin()];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert_eq!(e.index(&x).unwrap(), e.index(&neg).unwrap());
        let i = e.index(&x).unwrap().step().unwrap();
        let j = e.index(&d.apply_power(k, &x)).unwrap().step().unwrap();
        prop_assert_eq!(j, i + k);
    }

    #[test]
    fn quasi_triangle_is_bounded(
        a in prop::array::uniform4(-1.0f64..1.0),
        sa in -2.0f64..2.0,
        sb in -2.0f64..2.0,
    ) {
        let d = &dilations()[1];
        let e = QuasiNormEvaluator::new(d.clone());
        let x = [a[0] * 10f64.powf(sa), a[1] * 10f64.powf(sa)];
        let y = [a[2] * 10f64.powf(sb), a[3] * 10f64.powf(sb)];
        let s = [x[0] + y[0], x[1] + y[1]];
        let lhs = e.rho(&s).unwrap();
        let rhs = e.rho(&x).unwrap().max(e.rho(&y).unwrap());
        // Step quasi-norm: ρ(x+y) <= b^2·max(ρ(x), ρ(y)) since B_i + B_i ⊂ B_{i+2} here.
        prop_assert!(lhs <= d.b().powi(2) * rhs);
    }
}
