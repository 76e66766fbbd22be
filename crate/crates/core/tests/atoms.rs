use aniso_hardy::atom::{
    min_vanishing_order, read_archive, write_archive, Atom, AtomFactory, DilatedBall,
};
use aniso_hardy::mixed_norm::indicator_ball_norm;
use aniso_hardy::{validate_dilation, Dilation, ExponentVector};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn diag23() -> Dilation {
    validate_dilation(&DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0])).unwrap()
}

fn multi_indices(n: usize, max: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..=max).map(move |k| {
                    let mut w = v.clone();
                    w.push(k);
                    w
                })
            })
            .filter(|v| v.iter().sum::<u32>() <= max)
            .collect();
    }
    out
}

/// Worst normalized moment, recomputed from the samples.
fn worst_moment(d: &Dilation, a: &Atom) -> f64 {
    let f = &a.samples;
    let l1: f64 = (0..f.len()).map(|k| f.weight(k) * f.values[k].norm()).sum();
    let diam = d.ball_diameter(a.ball.index);
    let mut worst = 0.0f64;
    for g in multi_indices(d.dim(), a.s_order) {
        let mut m = 0.0;
        for k in 0..f.len() {
            let x = f.point(k);
            let mono: f64 = x
                .iter()
                .zip(&a.ball.center)
                .zip(&g)
                .map(|((x, c), &e)| (x - c).powi(e as i32))
                .product();
            m += f.weight(k) * f.values[k].re * mono;
        }
        let deg: u32 = g.iter().sum();
        worst = worst.max(m.abs() / (l1 * diam.powi(deg as i32)));
    }
    worst
}

fn check_atom(d: &Dilation, pv: &ExponentVector, a: &Atom) {
    assert!(
        a.certified,
        "atom at {:?} not certified: {:?}",
        a.ball, a.certificate
    );
    let f = &a.samples;
    for k in 0..f.len() {
        let x = f.point(k);
        let dx: Vec<f64> = x.iter().zip(&a.ball.center).map(|(x, c)| x - c).collect();
        if !d.ball_membership(&dx, a.ball.index) {
            assert_eq!(f.values[k].norm(), 0.0, "mass outside the ball at {x:?}");
        }
    }
    let r = a.r_exponent;
    let lr = (0..f.len())
        .map(|k| f.weight(k) * f.values[k].norm().powf(r))
        .sum::<f64>()
        .powf(1.0 / r);
    let ind = indicator_ball_norm(d, &a.ball, pv, 64).unwrap().value;
    let bound = d.b_pow(a.ball.index).powf(1.0 / r) / ind;
    assert!(lr <= bound * (1.0 + 1e-6), "size {lr} over {bound}");
    let m = worst_moment(d, a);
    assert!(m <= 1e-8, "moment {m} at i0 = {}", a.ball.index);
}

#[test]
fn family_is_certified() {
    let d = diag23();
    let pv = ExponentVector::new(vec![0.5, 1.0]).unwrap();
    let s_min = min_vanishing_order(&d, &pv);
    let f = AtomFactory::new(&d, &pv).unwrap();
    for s in [s_min, s_min + 1] {
        let atoms = f
            .generate_family(100, (-6, 6), 2.0, s, 31 + u64::from(s))
            .unwrap();
        let mut scales: Vec<i32> = atoms.iter().map(|a| a.ball.index).collect();
        scales.dedup();
        assert!(scales.len() >= 13);
        for a in &atoms {
            assert_eq!(a.s_order, s);
            check_atom(&d, &pv, a);
        }
    }
}

#[test]
fn generation_is_deterministic() {
    let d = diag23();
    let pv = ExponentVector::new(vec![0.5, 0.5]).unwrap();
    let f = AtomFactory::new(&d, &pv).unwrap();
    let ball = DilatedBall::new(vec![0.3, -1.0], 2);
    let a = f.generate(&ball, 2.0, 3, 99).unwrap();
    let b = f.generate(&ball, 2.0, 3, 99).unwrap();
    assert_eq!(a, b);
    let c = f.generate(&ball, 2.0, 3, 100).unwrap();
    assert_ne!(a.samples, c.samples);
}

#[test]
fn archive_round_trip() {
    let d = diag23();
    let pv = ExponentVector::new(vec![1.0, 1.0]).unwrap();
    let f = AtomFactory::new(&d, &pv).unwrap();
    let a = f
        .generate(&DilatedBall::new(vec![1.0, 2.0], -1), 3.0, 1, 5)
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_archive(dir.path(), &a).unwrap();
    let back = read_archive(dir.path()).unwrap();
    assert_eq!(back.ball, a.ball);
    assert_eq!(back.samples, a.samples);
    assert_eq!(back.s_order, a.s_order);
}

#[test]
fn bad_parameters() {
    let d = diag23();
    let pv = ExponentVector::new(vec![0.5, 1.0]).unwrap();
    let f = AtomFactory::new(&d, &pv).unwrap();
    let ball = DilatedBall::centered(2, 0);
    assert!(f.generate(&ball, 1.0, 3, 0).is_err());
    assert!(f.generate(&ball, 0.5, 3, 0).is_err());
    assert!(f
        .generate(&DilatedBall::new(vec![0.0], 0), 2.0, 3, 0)
        .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_atoms_certify(
        i0 in -8i32..=8,
        cx in -5.0f64..5.0,
        cy in -5.0f64..5.0,
        extra in 0u32..2,
        r in prop::sample::select(vec![1.5, 2.0, 4.0, f64::INFINITY]),
        seed in 0u64..1_000_000,
    ) {
        let d = diag23();
        let pv = ExponentVector::new(vec![0.5, 1.0]).unwrap();
        let f = AtomFactory::new(&d, &pv).unwrap();
        let s = min_vanishing_order(&d, &pv) + extra;
        let a = f.generate(&DilatedBall::new(vec![cx, cy], i0), r, s, seed).unwrap();
        prop_assert!(a.certified);
        prop_assert!(worst_moment(&d, &a) <= 1e-8);
        // Outside the closed ball the analytic atom vanishes.
        let far = vec![cx + 2.0 * d.ball_diameter(i0), cy];
        prop_assert_eq!(a.eval(&d, &far), 0.0);
    }
}
