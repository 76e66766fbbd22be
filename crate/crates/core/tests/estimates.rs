use aniso_hardy::atom::{min_vanishing_order, AtomFactory, AtomicSum};
use aniso_hardy::fourier::AtomTransform;
use aniso_hardy::sampling::{rng_for, sample_shell};
use aniso_hardy::verify::*;
use aniso_hardy::{transpose_dilation, validate_dilation, Dilation, ExponentVector};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn diag23() -> Dilation {
    validate_dilation(&DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0])).unwrap()
}

fn setup(p: [f64; 2]) -> (Dilation, ExponentVector, FamilySpec) {
    let d = diag23();
    let pv = ExponentVector::new(p.to_vec()).unwrap();
    let s = min_vanishing_order(&d, &pv);
    let fam = FamilySpec {
        i0_range: (-6, 6),
        r: 2.0,
        s,
    };
    (d, pv, fam)
}

#[test]
fn weight_branches() {
    let (_, pv, _) = setup([1.0, 1.0]);
    for rho in [0.01, 0.5, 1.0, 7.0, 1e4] {
        assert_eq!(hl_weight(rho, &pv), rho.powf(-1.0));
    }
    let (_, pv, _) = setup([0.5, 1.0]);
    // ρ^{1-1/p₋-1/p₊} = ρ^{-2}, ρ^{1-2/p₊} = ρ^{-1}.
    assert_eq!(hl_weight(4.0, &pv), 4f64.powf(-2.0));
    assert_eq!(hl_weight(0.25, &pv), 0.25f64.powf(-1.0));
}

#[test]
fn shell_integrals_match_monte_carlo() {
    for p in [[1.0, 1.0], [0.5, 0.5]] {
        let (d, pv, fam) = setup(p);
        let dt = transpose_dilation(&d);
        let atoms = AtomFactory::new(&d, &pv)
            .unwrap()
            .generate_family(3, (-1, 1), fam.r, fam.s, 40)
            .unwrap();
        let quad = ShellQuadrature::new(&dt, 96);
        assert!((quad.area() - (dt.b() - 1.0)).abs() < 0.02 * (dt.b() - 1.0));
        let pp = pv.p_plus();
        for a in &atoms {
            let si = shell_integral(&d, &dt, &quad, a, &pv, (-3, 2));
            let t = AtomTransform::new(&d, a);
            for &(j, got) in &si.shells {
                let Some(got) = got else { continue };
                // Direct transform at x = (A*)^j u, u uniform in B*_1 \ B*_0.
                let mut rng = rng_for(9, (j + 100) as u64);
                let n = 4000;
                let vals: Vec<f64> = (0..n)
                    .map(|_| {
                        let u = sample_shell(&dt, 0, &mut rng);
                        t.direct(&dt.apply_power(j, &u)).value.norm().powf(pp)
                    })
                    .collect();
                let mean = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let rho = d.b_pow(j);
                let scale = rho * hl_weight(rho, &pv).powf(pp) * (dt.b() - 1.0);
                let (want, se) = (scale * mean, scale * (var / n as f64).sqrt());
                assert!(
                    (got - want).abs() < 4.0 * se + 0.02 * want,
                    "p {p:?} j {j}: {got} vs {want} ± {se}"
                );
            }
        }
    }
}

#[test]
fn theorem31_constant_is_scale_invariant() {
    let (d, pv, fam) = setup([0.5, 1.0]);
    let dt = transpose_dilation(&d);
    let pts = shell_points(&dt, 200, (-6, 6), 1);
    let sums = random_sums(&d, &pv, &fam, 4, 3, 12).unwrap();
    for sum in &sums {
        let base = theorem31_constant(sum, &d, &pv, &pts, 64).unwrap();
        for c in [
            Complex64::new(1e-3, 0.0),
            Complex64::new(-2.0, 5.0),
            Complex64::new(0.0, 1e4),
        ] {
            let s = theorem31_constant(&sum.scaled(c), &d, &pv, &pts, 64).unwrap();
            assert!(
                (s.constant - base.constant).abs() <= 1e-10 * base.constant,
                "{} vs {}",
                s.constant,
                base.constant
            );
        }
    }
}

#[test]
fn lemma35_on_random_sums() {
    let (d, pv, fam) = setup([0.5, 1.0]);
    let sums = random_sums(&d, &pv, &fam, 100, 4, 77).unwrap();
    let r = verify_lemma35(&sums, &d, &pv, 64, 77).unwrap();
    assert!(r.passed(), "{:?}", r.verdicts);
    assert!(r.constant.unwrap() <= 1.03);
}

#[test]
fn maximal_of_zero_is_zero() {
    let (d, pv, fam) = setup([0.5, 1.0]);
    let sum = &random_sums(&d, &pv, &fam, 1, 2, 3).unwrap()[0];
    let zero = sum.scaled(Complex64::new(0.0, 0.0));
    let phi = TensorBump::default();
    assert_eq!(
        radial_maximal_norm(&zero, &d, &pv, &phi, (-3, 3), 16).unwrap(),
        0.0
    );
    assert!(radial_maximal_norm(sum, &d, &pv, &phi, (-3, 3), 4).is_err());
}

#[test]
fn maximal_grows_with_k_range() {
    let (d, pv, fam) = setup([0.5, 1.0]);
    let sums = random_sums(&d, &pv, &fam, 2, 2, 5).unwrap();
    let phi = TensorBump::default();
    for sum in &sums {
        let (k0, k1) = default_k_range(sum);
        let mid = (k0 + k1) / 2;
        let mut last = 0.0;
        for w in 0..=3 {
            let v = radial_maximal_norm(sum, &d, &pv, &phi, (mid - w, mid + w), 12).unwrap();
            assert!(v >= last, "{v} < {last} at width {w}");
            last = v;
        }
    }
}

#[test]
fn origin_decay_small_run() {
    let (d, pv, fam) = setup([0.5, 1.0]);
    let atoms = AtomFactory::new(&d, &pv)
        .unwrap()
        .generate_family(4, fam.i0_range, fam.r, fam.s, 2)
        .unwrap();
    let sums: Vec<AtomicSum> = atoms.into_iter().map(AtomicSum::single).collect();
    let r = verify_origin_decay(&sums, &d, &pv, &DecayOptions::default(), 2).unwrap();
    assert!(r.passed(), "{:?}", r.verdicts);
    let beta = origin_decay_beta(&d, &pv, fam.s);
    assert!(r.slopes.iter().all(|s| s.predicted == beta));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn envelope_matches_branches(r in -8.0f64..8.0, p1 in 0.2f64..1.0, p2 in 0.2f64..1.0) {
        let pv = ExponentVector::new(vec![p1, p2]).unwrap();
        let rho = 10f64.powf(r);
        let (lo, hi) = (p1.min(p2), p1.max(p2));
        let want = rho.powf(1.0 / lo - 1.0).max(rho.powf(1.0 / hi - 1.0));
        prop_assert!((decay_envelope(rho, &pv) - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn shell_points_sit_on_their_shells(seed in 0u64..1000, j in -8i32..8) {
        let d = diag23();
        let dt = transpose_dilation(&d);
        let e = aniso_hardy::QuasiNormEvaluator::new(dt.clone());
        for x in shell_points(&dt, 10, (j, j), seed) {
            prop_assert_eq!(e.index(&x).unwrap().step(), Some(j));
        }
    }
}
