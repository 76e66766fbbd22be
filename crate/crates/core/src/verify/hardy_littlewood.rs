//! Weighted `L^{p₊}` integrals of atom transforms over `ρ*`-shells.
//!
//! On the shell `ρ* = b^j` substitute `x = (A*)^j u` with `u ∈ S = B*_1 \ B*_0`:
//!
//! ```text
//! J_j = b^j W(b^j)^{p₊} ∫_S |â((A*)^j u)|^{p₊} du,
//! W(ρ) = min{ρ^{1-1/p₋-1/p₊}, ρ^{1-2/p₊}}
//! ```
//!
//! and `|â((A*)^j u)| = b^{i0} |κĥ((A*)^{i0+j} u)|`. The `u`-integral is a
//! midpoint rule on the cells of a box grid whose centres fall in `S`.
//! Transforms here only need to be alias-free, so the per-cell phase may go
//! up to `π/2` with at most three refinements. Shells beyond that are left
//! out and covered, together with everything past the shell range, by a
//! geometric tail fitted to the outermost resolved shells.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use super::{certification_verdict, make_family, spread, EstimateReport, FamilySpec, Table};
use crate::atom::{atomic_norm, Atom, AtomicSum, COEFFICIENT_SLACK};
use crate::dilation::{transpose_dilation, Dilation};
use crate::error::{Error, Result};
use crate::fourier::{AtomTransform, PhaseRule};
use crate::grid::{fill_point, shape_of, Axis};
use crate::mixed_norm::ExponentVector;
use crate::sampling::rng_for;

/// Atoms recomputed on the doubled shell grid, and the relative change allowed.
const REFINE_CHECKS: usize = 4;
const REFINE_LIMIT: f64 = 0.02;

pub const SHELL_RULE: PhaseRule = PhaseRule {
    max_level: 3,
    ..PhaseRule::ALIASED
};
pub const TAIL_LIMIT: f64 = 0.10;
pub const HL_UNIFORMITY_LIMIT: f64 = 10.0;
pub const HL_DRIFT_LIMIT: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HlOptions {
    /// Box-grid nodes per axis over `B*_1`.
    pub shell_nodes: usize,
    pub j_range: (i32, i32),
    /// Finite sums drawn from the family for the coefficient bound.
    pub sums: usize,
    pub max_terms: usize,
    /// Resolution of the atomic norm.
    pub resolution: usize,
}

impl Default for HlOptions {
    fn default() -> Self {
        HlOptions {
            shell_nodes: 48,
            j_range: (-10, 10),
            sums: 10,
            max_terms: 4,
            resolution: 64,
        }
    }
}

/// `W(ρ) = min{ρ^{1-1/p₋-1/p₊}, ρ^{1-2/p₊}}`.
pub fn hl_weight(rho: f64, pv: &ExponentVector) -> f64 {
    let (e1, e2) = hl_exponents(pv);
    rho.powf(e1).min(rho.powf(e2))
}

pub fn hl_exponents(pv: &ExponentVector) -> (f64, f64) {
    let (pm, pp) = (pv.p_minus(), pv.p_plus());
    (1.0 - 1.0 / pm - 1.0 / pp, 1.0 - 2.0 / pp)
}

/// Midpoint nodes of the unit shell of `A*`.
#[derive(Debug, Clone)]
pub struct ShellQuadrature {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl ShellQuadrature {
    pub fn new(dt: &Dilation, per_axis: usize) -> Self {
        let axes: Vec<Axis> = dt
            .ball_half_widths(1)
            .iter()
            .map(|&h| Axis::midpoint(-h, h, per_axis))
            .collect();
        let shape = shape_of(&axes);
        let total: usize = shape.iter().product();
        let cell: f64 = axes.iter().map(|a| a.weights[0]).product();
        let mut nodes = Vec::new();
        let mut x = vec![0.0; axes.len()];
        for flat in 0..total {
            fill_point(&axes, &shape, flat, &mut x);
            if dt.ball_membership(&x, 1) && !dt.ball_membership(&x, 0) {
                nodes.push(x.clone());
            }
        }
        let weights = vec![cell; nodes.len()];
        ShellQuadrature { nodes, weights }
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellIntegral {
    /// `(j, J_j)`, `None` when the shell was not resolved.
    pub shells: Vec<(i32, Option<f64>)>,
    /// Sum of the resolved shells.
    pub resolved: f64,
    pub tail_low: f64,
    pub tail_high: f64,
}

impl ShellIntegral {
    pub fn tail(&self) -> f64 {
        self.tail_low + self.tail_high
    }

    pub fn tail_fraction(&self) -> f64 {
        let t = self.tail();
        if t == 0.0 {
            0.0
        } else {
            t / (self.resolved + t)
        }
    }

    /// `TailDominant` past [`TAIL_LIMIT`].
    pub fn check_tail(&self) -> Result<()> {
        if self.tail_fraction() > TAIL_LIMIT {
            return Err(Error::TailDominant {
                tail: self.tail(),
                total: self.resolved + self.tail(),
            });
        }
        Ok(())
    }
}

/// Geometric continuation of `values` (ordered away from the resolved range).
fn geometric_tail(values: &[f64]) -> f64 {
    match values {
        [] => 0.0,
        [_] => f64::INFINITY,
        _ => {
            let q = values
                .windows(2)
                .take(2)
                .map(|w| w[0] / w[1])
                .fold(0.0, f64::max);
            if q < 1.0 {
                values[0] * q / (1.0 - q)
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Shell integrals `J_j` of one atom, `j ∈ j_range`.
pub fn shell_integral(
    d: &Dilation,
    dt: &Dilation,
    quad: &ShellQuadrature,
    atom: &Atom,
    pv: &ExponentVector,
    j_range: (i32, i32),
) -> ShellIntegral {
    let t = AtomTransform::new(d, atom);
    let pp = pv.p_plus();
    let i0 = atom.ball.index;
    let bi0 = d.b_pow(i0);
    let shells: Vec<(i32, Option<f64>)> = (j_range.0..=j_range.1)
        .map(|j| {
            let ys: Vec<Vec<f64>> = quad
                .nodes
                .iter()
                .map(|u| dt.apply_power(i0 + j, u))
                .collect();
            let mut vals = Vec::with_capacity(ys.len());
            for y in &ys {
                let v = t.canonical_with(y, SHELL_RULE);
                if !v.resolved {
                    return (j, None);
                }
                vals.push(v.value.norm());
            }
            let inner: f64 = crate::stats::compensated_sum(
                vals.iter()
                    .zip(&quad.weights)
                    .map(|(v, w)| w * (bi0 * v).powf(pp)),
            );
            let rho = d.b_pow(j);
            (j, Some(rho * hl_weight(rho, pv).powf(pp) * inner))
        })
        .collect();
    let resolved_idx: Vec<usize> = shells
        .iter()
        .enumerate()
        .filter(|(_, s)| s.1.is_some())
        .map(|(k, _)| k)
        .collect();
    let resolved: f64 = shells.iter().filter_map(|s| s.1).sum();
    let (tail_low, tail_high) = match (resolved_idx.first(), resolved_idx.last()) {
        (Some(&lo), Some(&hi)) => {
            let low: Vec<f64> = (lo..=hi).take(3).filter_map(|k| shells[k].1).collect();
            let high: Vec<f64> = (lo..=hi)
                .rev()
                .take(3)
                .filter_map(|k| shells[k].1)
                .collect();
            (geometric_tail(&low), geometric_tail(&high))
        }
        _ => (f64::INFINITY, f64::INFINITY),
    };
    ShellIntegral {
        shells,
        resolved,
        tail_low,
        tail_high,
    }
}

pub fn verify_hardy_littlewood(
    d: &Dilation,
    pv: &ExponentVector,
    family: &FamilySpec,
    atom_count: usize,
    opts: &HlOptions,
    seed: u64,
) -> Result<EstimateReport> {
    pv.require_hardy_range()?;
    if family.r != 2.0 {
        return Err(Error::InvalidParameter {
            name: "r",
            reason: format!("shell integrals use r = 2 atoms, got {}", family.r),
        });
    }
    if atom_count == 0 {
        return Err(Error::InvalidParameter {
            name: "atom_count",
            reason: "need at least one atom".into(),
        });
    }
    let dt = transpose_dilation(d);
    let quad = ShellQuadrature::new(&dt, opts.shell_nodes);
    let atoms = make_family(d, pv, family, 2 * atom_count, seed)?;
    let pp = pv.p_plus();
    let integrals: Vec<ShellIntegral> = atoms
        .par_iter()
        .map(|a| shell_integral(d, &dt, &quad, a, pv, opts.j_range))
        .collect();
    let roots: Vec<f64> = integrals
        .iter()
        .map(|s| s.resolved.powf(1.0 / pp))
        .collect();
    let c_half = roots[..atom_count].iter().copied().fold(0.0, f64::max);
    let c_full = roots.iter().copied().fold(0.0, f64::max);
    let drift = (c_full - c_half) / c_half;
    let uniformity = spread(roots[..atom_count].iter().copied());
    let worst_tail = integrals
        .iter()
        .map(ShellIntegral::tail_fraction)
        .fold(0.0, f64::max);

    // Same integrals on a doubled shell grid for a few atoms spread over the family.
    let fine = ShellQuadrature::new(&dt, 2 * opts.shell_nodes);
    let step = (atom_count / REFINE_CHECKS).max(1);
    let refinement = (0..atom_count)
        .step_by(step)
        .take(REFINE_CHECKS)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&k| {
            let f = shell_integral(d, &dt, &fine, &atoms[k], pv, opts.j_range).resolved;
            ((f - integrals[k].resolved) / f).abs()
        })
        .reduce(|| 0.0, f64::max);

    let mut report = EstimateReport::new("hardy_littlewood", d, pv, seed);
    report.family = Some(family.clone());
    certification_verdict(&mut report, &atoms);
    report.raw = Table::new(&[
        "atom",
        "i0",
        "integral",
        "root",
        "tail_low",
        "tail_high",
        "tail_fraction",
    ]);
    for (k, (a, s)) in atoms.iter().zip(&integrals).enumerate() {
        report.raw.push(vec![
            k as f64,
            f64::from(a.ball.index),
            s.resolved,
            roots[k],
            s.tail_low,
            s.tail_high,
            s.tail_fraction(),
        ]);
    }
    report.plot = Table::new(&["atom", "i0", "j", "shell_integral"]);
    for (k, (a, s)) in atoms.iter().zip(&integrals).enumerate().take(atom_count) {
        for (j, v) in &s.shells {
            if let Some(v) = v {
                report
                    .plot
                    .push(vec![k as f64, f64::from(a.ball.index), f64::from(*j), *v]);
            }
        }
    }

    // Finite sums drawn from the first half of the family.
    let mut worst_coeff = 0.0f64;
    let mut worst_sum_ratio = 0.0f64;
    for k in 0..opts.sums {
        let mut rng = rng_for(seed ^ 0x4c5f_5355_4d53, k as u64);
        let m = rng.random_range(1..=opts.max_terms.max(1));
        let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..atom_count)).collect();
        let coefficients: Vec<Complex64> = (0..m)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let sum = AtomicSum::new(
            coefficients.clone(),
            idx.iter().map(|&i| atoms[i].clone()).collect(),
        )?;
        let norm = atomic_norm(&sum, d, pv, opts.resolution)?;
        let coeff = coefficients
            .iter()
            .map(|l| l.norm().powf(pp))
            .sum::<f64>()
            .powf(1.0 / pp);
        let weighted = coefficients
            .iter()
            .zip(&idx)
            .map(|(l, &i)| l.norm().powf(pp) * integrals[i].resolved)
            .sum::<f64>()
            .powf(1.0 / pp);
        worst_coeff = worst_coeff.max(coeff / norm);
        worst_sum_ratio = worst_sum_ratio.max(weighted / norm);
    }

    let (e1, e2) = hl_exponents(pv);
    report.constant = Some(c_half);
    report.stability = Some(drift);
    report.size("atoms", atom_count);
    report.size("atoms_doubled", 2 * atom_count);
    report.size("shell_nodes", quad.nodes.len());
    report.size("sums", opts.sums);
    report.metric("constant_doubled", c_full);
    report.metric("uniformity", uniformity);
    report.metric("worst_tail_fraction", worst_tail);
    report.metric("shell_area_rel_err", quad.area() / (d.b() - 1.0) - 1.0);
    report.metric("weight_exponent_low", e1);
    report.metric("weight_exponent_high", e2);
    report.metric("sum_ratio", worst_sum_ratio);
    report.metric("shell_refinement", refinement);

    report.assert(
        "constant_finite",
        c_half.is_finite() && c_half > 0.0,
        c_half,
        f64::INFINITY,
    );
    report.assert(
        "uniformity",
        uniformity <= HL_UNIFORMITY_LIMIT,
        uniformity,
        HL_UNIFORMITY_LIMIT,
    );
    report.assert(
        "doubling_drift",
        drift < HL_DRIFT_LIMIT,
        drift,
        HL_DRIFT_LIMIT,
    );
    if pv.p_minus() == pv.p_plus() {
        report.assert("branch_coincidence", e1 == e2, e1 - e2, 0.0);
    }
    if opts.sums > 0 {
        report.assert(
            "coefficient_bound",
            worst_coeff <= 1.0 + COEFFICIENT_SLACK,
            worst_coeff,
            1.0 + COEFFICIENT_SLACK,
        );
        report.assert(
            "sum_bound",
            worst_sum_ratio <= c_full * (1.0 + COEFFICIENT_SLACK),
            worst_sum_ratio,
            c_full * (1.0 + COEFFICIENT_SLACK),
        );
    }
    report.resolution(
        "tail_fraction",
        worst_tail <= TAIL_LIMIT,
        worst_tail,
        TAIL_LIMIT,
    );
    report.resolution(
        "shell_refinement",
        refinement <= REFINE_LIMIT,
        refinement,
        REFINE_LIMIT,
    );
    Ok(report)
}
