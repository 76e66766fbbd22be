//! Acceptance gate. Every criterion runs at its stated tolerance and prints
//! one PASS/FAIL line; the test fails if any criterion does.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use aniso_hardy::atom::{min_vanishing_order, AtomFactory, AtomicSum, DilatedBall};
use aniso_hardy::dilation::contraction_eigenvalue;
use aniso_hardy::fourier::{fourier_atom_direct, fourier_via_dilation_identity, AtomTransform};
use aniso_hardy::grid::{Axis, GridFunction};
use aniso_hardy::mixed_norm::{indicator_ball_norm, lp_norm, mixed_norm_eval, nested_norm};
use aniso_hardy::sampling::rng_for;
use aniso_hardy::verify::*;
use aniso_hardy::{
    transpose_dilation, validate_dilation, Dilation, ExponentVector, QuasiNormEvaluator,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

const EXPONENTS: [[f64; 2]; 3] = [[1.0, 1.0], [0.5, 1.0], [0.5, 0.5]];

fn dilation(m: [f64; 4]) -> Dilation {
    validate_dilation(&DMatrix::from_row_slice(2, 2, &m)).unwrap()
}

fn three_dilations() -> Vec<Dilation> {
    vec![
        dilation([2.0, 0.0, 0.0, 2.0]),
        dilation([2.0, 0.0, 0.0, 3.0]),
        dilation([1.0, -2.0, 1.0, 1.0]),
    ]
}

fn diag23() -> Dilation {
    dilation([2.0, 0.0, 0.0, 3.0])
}

fn family(d: &Dilation, p: [f64; 2]) -> (ExponentVector, FamilySpec) {
    let pv = ExponentVector::new(p.to_vec()).unwrap();
    let s = min_vanishing_order(d, &pv);
    (
        pv,
        FamilySpec {
            i0_range: (-6, 6),
            r: 2.0,
            s,
        },
    )
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn verdict(r: &EstimateReport, name: &str) -> bool {
    r.verdicts
        .iter()
        .find(|v| v.assertion == name)
        .unwrap_or_else(|| panic!("{} has no verdict {name}", r.experiment))
        .passed
}

/// Names of the failed verdicts, or "ok".
fn failures(r: &EstimateReport) -> String {
    let bad: Vec<&str> = r
        .verdicts
        .iter()
        .filter(|v| !v.passed)
        .map(|v| v.assertion.as_str())
        .collect();
    if bad.is_empty() {
        "ok".into()
    } else {
        format!("FAIL[{}]", bad.join(","))
    }
}

/// `ACCEPTANCE_CRITERIA=6,8` runs a subset; the rest print SKIP.
fn selected(id: u32) -> bool {
    match std::env::var("ACCEPTANCE_CRITERIA") {
        Ok(list) => list.split(',').any(|s| s.trim().parse() == Ok(id)),
        Err(_) => true,
    }
}

fn criterion(id: u32, title: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> Option<bool> {
    if !selected(id) {
        println!("SKIP criterion {id} ({title})");
        return None;
    }
    let t = Instant::now();
    let o = f();
    let took = t.elapsed();
    let in_time = took <= limit;
    let passed = o.passed && in_time;
    println!(
        "{} criterion {id} ({title}): {}; runtime {:.1}s (limit {}s){}",
        if passed { "PASS" } else { "FAIL" },
        o.detail,
        took.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { " exceeded" }
    );
    Some(passed)
}

// 1

fn in_ball(d: &Dilation, x: &[f64], j: i32) -> bool {
    let e = d.ellipsoid();
    let a = d.matrix().clone();
    let m = if j >= 0 {
        a.pow(j as u32)
    } else {
        a.try_inverse().unwrap().pow((-j) as u32)
    };
    let v = m.try_inverse().unwrap() * DVector::from_column_slice(x);
    (v.transpose() * &e.p * &v)[(0, 0)] < e.radius * e.radius
}

fn quasi_norm_exactness() -> Outcome {
    let mut mismatches = 0;
    let mut homogeneity = 0;
    for (k, d) in three_dilations().into_iter().enumerate() {
        let e = QuasiNormEvaluator::new(d.clone());
        let mut rng = rng_for(1001, k as u64);
        for _ in 0..10_000 {
            let r = 10f64.powf(rng.random_range(-4.0..4.0));
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            let x = [r * t.cos(), r * t.sin()];
            let i = e.index(&x).unwrap().step().unwrap();
            let mut j = -60;
            while !in_ball(&d, &x, j + 1) {
                j += 1;
            }
            mismatches += usize::from(i != j);
            let ax = d.apply_power(1, &x);
            let ia = e.index(&ax).unwrap().step().unwrap();
            let (rho, rho_a) = (e.rho(&x).unwrap(), e.rho(&ax).unwrap());
            homogeneity += usize::from(ia != i + 1 || (rho_a - d.b() * rho).abs() > 1e-15 * rho_a);
        }
    }
    outcome(
        mismatches == 0 && homogeneity == 0,
        format!("3x10^4 points, {mismatches} scan mismatches, {homogeneity} homogeneity failures"),
    )
}

// 2

fn geometry() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_cert = f64::NEG_INFINITY;
    for (k, d) in three_dilations().into_iter().enumerate() {
        for i in -2..=2 {
            let hw = d.ball_half_widths(i);
            let mut rng = rng_for(2002, (k * 10) as u64 + (i + 2) as u64);
            let n = 200_000;
            let hits = (0..n)
                .filter(|_| {
                    let x: Vec<f64> = hw.iter().map(|&h| rng.random_range(-h..h)).collect();
                    d.ball_membership(&x, i)
                })
                .count();
            let vol = hits as f64 / n as f64 * hw.iter().map(|h| 2.0 * h).product::<f64>();
            worst = worst.max((vol / d.b_pow(i) - 1.0).abs());
        }
        let e = d.ellipsoid();
        let c = contraction_eigenvalue(&d.matrix().clone().try_inverse().unwrap(), &e.p).unwrap();
        // Certified when c·δ <= 1 up to 1e-10.
        worst_cert = worst_cert.max(c * e.delta - 1.0);
    }
    outcome(
        worst < 0.02 && worst_cert <= 1e-10,
        format!("worst volume error {worst:.4}, containment c·δ-1 = {worst_cert:.2e}"),
    )
}

// 3

fn mc_indicator_norm(d: &Dilation, i: i32, p: [f64; 2], seed: u64) -> f64 {
    let e = d.ellipsoid();
    let inv = d.power(-i);
    let q = inv.transpose() * &e.p * &inv / (e.radius * e.radius);
    let (a, b, c) = (q[(0, 0)], q[(0, 1)], q[(1, 1)]);
    let half = (a / (a * c - b * b)).sqrt();
    let mut rng = rng_for(seed, 3);
    let n = 400_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let y = rng.random_range(-half..half);
        let disc = b * b * y * y - a * (c * y * y - 1.0);
        if disc > 0.0 {
            acc += (2.0 * disc.sqrt() / a).powf(p[1] / p[0]);
        }
    }
    (acc / n as f64 * 2.0 * half).powf(1.0 / p[1])
}

fn mixed_norms() -> Outcome {
    let mut rng = rng_for(3003, 0);
    let mut worst_rect = 0.0f64;
    let mut worst_collapse = 0.0f64;
    for _ in 0..200 {
        let sides: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..20.0)).collect();
        let ps: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..4.0)).collect();
        let axes: Vec<Axis> = sides.iter().map(|&a| Axis::midpoint(0.0, a, 7)).collect();
        let got = nested_norm(
            &axes,
            &vec![1.0; 343],
            &ExponentVector::new(ps.clone()).unwrap(),
        )
        .unwrap();
        let want: f64 = sides
            .iter()
            .zip(&ps)
            .map(|(a, p)| a.powf(1.0 / p))
            .product();
        worst_rect = worst_rect.max((got / want - 1.0).abs());

        let p = rng.random_range(0.2..6.0);
        let axes = vec![Axis::midpoint(-1.0, 2.0, 6), Axis::midpoint(0.0, 0.5, 5)];
        let vals: Vec<Complex64> = (0..30)
            .map(|_| Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect();
        let f = GridFunction::new(axes, vals).unwrap();
        let nested = mixed_norm_eval(&f, &ExponentVector::constant(p, 2).unwrap()).unwrap();
        worst_collapse = worst_collapse.max((nested / lp_norm(&f, p) - 1.0).abs());
    }
    let cases: [([f64; 4], [f64; 2], i32); 6] = [
        ([2.0, 0.0, 0.0, 3.0], [0.5, 1.0], 0),
        ([2.0, 0.0, 0.0, 3.0], [0.5, 1.0], 2),
        ([2.0, 0.0, 0.0, 3.0], [1.0, 0.5], -1),
        ([1.0, -2.0, 1.0, 1.0], [0.5, 0.5], 1),
        ([2.0, 1.0, 0.0, 3.0], [2.0, 0.5], 0),
        ([2.0, 0.0, 0.0, 2.0], [1.0, 0.5], -2),
    ];
    let mut worst_mc = 0.0f64;
    for (k, (m, p, i)) in cases.into_iter().enumerate() {
        let d = dilation(m);
        let pv = ExponentVector::new(p.to_vec()).unwrap();
        let got = indicator_ball_norm(&d, &DilatedBall::centered(2, i), &pv, 128)
            .unwrap()
            .value;
        worst_mc = worst_mc.max((got / mc_indicator_norm(&d, i, p, k as u64) - 1.0).abs());
    }
    outcome(
        worst_rect <= 1e-10 && worst_collapse <= 1e-10 && worst_mc < 0.03,
        format!("rectangle {worst_rect:.1e}, collapse {worst_collapse:.1e}, indicator vs MC {worst_mc:.4} on 6 cases"),
    )
}

// 4

fn atom_certification() -> Outcome {
    let d = diag23();
    let (pv, fam) = family(&d, [0.5, 1.0]);
    let f = AtomFactory::new(&d, &pv).unwrap();
    let mut failed = 0;
    let mut worst_moment = 0.0f64;
    let mut count = 0;
    for s in [fam.s, fam.s + 1] {
        for a in f
            .generate_family(100, fam.i0_range, fam.r, s, 4004 + u64::from(s))
            .unwrap()
        {
            let c = a.certificate.as_ref().unwrap();
            worst_moment = worst_moment.max(c.moments.value);
            failed += usize::from(
                !(a.certified && c.support.passed && c.size.passed && c.moments.passed),
            );
            count += 1;
        }
    }
    outcome(
        failed == 0 && worst_moment <= 1e-8,
        format!("{count} atoms, {failed} failed, worst moment {worst_moment:.1e}"),
    )
}

// 5

fn fourier_cross_validation() -> Outcome {
    let d = diag23();
    let dt = transpose_dilation(&d);
    let (pv, fam) = family(&d, [0.5, 1.0]);
    let atoms = AtomFactory::new(&d, &pv)
        .unwrap()
        .generate_family(50, fam.i0_range, fam.r, fam.s, 5005)
        .unwrap();
    let mut worst = 0.0f64;
    let mut worst_origin = 0.0f64;
    let mut unresolved = 0;
    for (k, a) in atoms.iter().enumerate() {
        let i0 = a.ball.index;
        let pts = shell_points(&dt, 20, (-i0 - 3, -i0 + 2), 5005 + k as u64);
        let u = fourier_atom_direct(&d, a, &pts);
        let v = fourier_via_dilation_identity(&d, a, &pts);
        unresolved += u.unresolved_count() + v.unresolved_count();
        let floor = 1e-8 * a.l1_norm();
        for (x, y) in u.values.iter().zip(&v.values) {
            worst = worst.max((x - y).norm() / x.norm().max(y.norm()).max(floor));
        }
        let at0 = AtomTransform::new(&d, a).direct(&[0.0, 0.0]).value.norm();
        worst_origin = worst_origin.max(at0 / a.l1_norm());
    }
    outcome(
        worst <= 1e-6 && worst_origin <= 1e-8 && unresolved == 0,
        format!(
            "50 atoms x 20 points, worst relative gap {worst:.1e} (floor 1e-8|a|_1), |a^(0)|/|a|_1 <= {worst_origin:.1e}"
        ),
    )
}

// 6

fn lemma32() -> Outcome {
    let d = diag23();
    let dt = transpose_dilation(&d);
    let pts = shell_points(&dt, 1000, (-10, 10), 6006);
    let mut ok = true;
    let mut parts = Vec::new();
    for p in EXPONENTS {
        let (pv, fam) = family(&d, p);
        let r = verify_lemma32(&d, &pv, &fam, 200, &pts, 6006).unwrap();
        ok &= r.passed() && verdict(&r, "i0_uniformity") && verdict(&r, "doubling_drift");
        parts.push(format!(
            "p={p:?}: C={:.3e} spread={:.3} drift={:.2e} {}",
            r.constant.unwrap_or(f64::NAN),
            r.metrics["i0_spread"],
            r.stability.unwrap_or(f64::NAN),
            failures(&r)
        ));
    }
    outcome(ok, parts.join("; "))
}

// 7

fn origin_decay() -> Outcome {
    let d = diag23();
    let mut ok = true;
    let mut parts = Vec::new();
    for p in EXPONENTS {
        let (pv, fam) = family(&d, p);
        let sums: Vec<AtomicSum> = AtomFactory::new(&d, &pv)
            .unwrap()
            .generate_family(10, fam.i0_range, fam.r, fam.s, 7007)
            .unwrap()
            .into_iter()
            .map(AtomicSum::single)
            .collect();
        let opts = DecayOptions {
            rays: 8,
            ..DecayOptions::default()
        };
        let r = verify_origin_decay(&sums, &d, &pv, &opts, 7007).unwrap();
        ok &= r.passed() && verdict(&r, "slope_at_least_beta") && verdict(&r, "fit_rms");
        parts.push(format!(
            "p={p:?}: beta={:.3} worst slope={:.3} worst rms={:.3} {}",
            origin_decay_beta(&d, &pv, fam.s),
            r.metrics["worst_slope"],
            r.metrics["worst_fit_rms"],
            failures(&r)
        ));
    }
    outcome(ok, parts.join("; "))
}

// 8

fn hardy_littlewood() -> Outcome {
    let d = diag23();
    let mut ok = true;
    let mut parts = Vec::new();
    for p in EXPONENTS {
        let (pv, fam) = family(&d, p);
        let r = verify_hardy_littlewood(&d, &pv, &fam, 100, &HlOptions::default(), 8008).unwrap();
        let mut pass = r.passed() && verdict(&r, "uniformity") && verdict(&r, "tail_fraction");
        if p[0] == p[1] {
            pass &= verdict(&r, "branch_coincidence");
        }
        ok &= pass;
        parts.push(format!(
            "p={p:?} s={}: C={:.3e} ratio={:.3} tail={:.3} {}",
            fam.s,
            r.constant.unwrap_or(f64::NAN),
            r.metrics["uniformity"],
            r.metrics["worst_tail_fraction"],
            failures(&r)
        ));
    }
    outcome(ok, parts.join("; "))
}

// 9

fn lemma35() -> Outcome {
    let d = diag23();
    let (pv, fam) = family(&d, [0.5, 1.0]);
    let sums = random_sums(&d, &pv, &fam, 100, 4, 9009).unwrap();
    let r = verify_lemma35(&sums, &d, &pv, 64, 9009).unwrap();
    let worst = r.constant.unwrap();
    outcome(
        verdict(&r, "coefficient_sum_bound") && worst <= 1.03,
        format!("100 sums, worst sum|lambda| / atomic norm = {worst:.4}"),
    )
}

// 10

fn csv_payload(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    let mut codes = Vec::new();
    let mut slowest = Duration::ZERO;
    for _ in 0..2 {
        let t = Instant::now();
        let o = Command::new(env!("CARGO_BIN_EXE_aniso-hardy"))
            .args(["all", "--out"])
            .arg(tmp.path())
            .output()
            .unwrap();
        slowest = slowest.max(t.elapsed());
        codes.push(o.status.code());
        let stdout = String::from_utf8_lossy(&o.stdout).into_owned();
        let dir = stdout
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix("output: "))
            .map(PathBuf::from);
        dirs.push(dir);
    }
    let (Some(a), Some(b)) = (&dirs[0], &dirs[1]) else {
        return outcome(false, format!("no output directory, exit codes {codes:?}"));
    };
    let (pa, pb) = (csv_payload(a), csv_payload(b));
    let differing: Vec<String> = pa
        .iter()
        .zip(&pb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    let same = pa.len() == pb.len() && differing.is_empty() && !pa.is_empty();
    outcome(
        same && slowest <= Duration::from_secs(30 * 60),
        format!(
            "{} CSVs per run, {} differing, exit codes {codes:?}, slowest pass {:.0}s",
            pa.len(),
            differing.len() + pa.len().abs_diff(pb.len()),
            slowest.as_secs_f64()
        ),
    )
}

#[test]
fn acceptance() {
    let min = |m: u64| Duration::from_secs(60 * m);
    let results = [
        criterion(
            1,
            "quasi-norm exactness",
            Duration::from_secs(30),
            quasi_norm_exactness,
        ),
        criterion(2, "geometry", min(1), geometry),
        criterion(3, "mixed-norm correctness", min(2), mixed_norms),
        criterion(4, "atom certification", min(2), atom_certification),
        criterion(
            5,
            "Fourier cross-validation",
            min(3),
            fourier_cross_validation,
        ),
        criterion(6, "pointwise Fourier bound", min(10), lemma32),
        criterion(7, "origin decay", min(5), origin_decay),
        criterion(8, "Hardy-Littlewood uniformity", min(10), hardy_littlewood),
        criterion(9, "coefficient sum bound", min(2), lemma35),
        // Two full passes; the limit applies to each.
        criterion(10, "determinism", min(60), determinism),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, &p)| p == Some(false))
        .map(|(k, _)| k + 1)
        .collect();
    let run = results.iter().flatten().count();
    println!(
        "acceptance: {} of {run} criteria passed",
        run - failed.len()
    );
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
