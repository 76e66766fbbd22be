//! Truncated radial maximal function `sup_k |f ∗ φ_k|`, `φ_k = b^k φ(A^k ·)`.
//!
//! Each convolution is a midpoint sum over the intersection of an atom's
//! bounding box with the bounding box of `x - A^{-k}Q`, `Q = [-1/2, 1/2]^n`,
//! using the analytic atom values. The kernel is therefore sampled by the
//! same number of nodes at every scale. The sup is taken on a grid covering
//! the atoms' boxes enlarged threefold, so the mixed norm of the result is a
//! lower bound for the true one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{certification_verdict, EstimateReport, Table};
use crate::atom::{atomic_norm, covering_axes, AtomicSum};
use crate::dilation::Dilation;
use crate::error::{Error, Result};
use crate::grid::{fill_point, shape_of};
use crate::mixed_norm::{nested_norm, ExponentVector};

pub const MIN_GRID_NODES: usize = 8;
pub const REFINEMENT_LIMIT: f64 = 0.10;
pub const RATIO_BAND: (f64, f64) = (0.01, 100.0);
/// Enlargement of each ball box for the evaluation grid.
const BOX_GROWTH: f64 = 3.0;

/// `φ(z) = c Π (1 - 4z_i²)^K` on `[-1/2, 1/2]^n` with `∫φ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorBump {
    pub power: u32,
}

impl Default for TensorBump {
    fn default() -> Self {
        TensorBump { power: 4 }
    }
}

impl TensorBump {
    /// `∫_{-1/2}^{1/2} (1 - 4z²)^K dz`.
    pub fn axis_integral(&self) -> f64 {
        // ∫_{-1}^{1} (1-t²)^K dt = 2 Π_{m=1}^{K} 2m/(2m+1).
        let mut i = 2.0;
        for m in 1..=self.power {
            i *= 2.0 * f64::from(m) / (2.0 * f64::from(m) + 1.0);
        }
        i / 2.0
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let c = self.axis_integral().powi(-(z.len() as i32));
        let mut v = c;
        for &t in z {
            let u = 1.0 - 4.0 * t * t;
            if u <= 0.0 {
                return 0.0;
            }
            v *= u.powi(self.power as i32);
        }
        v
    }
}

/// `[-i0_max - 5, -i0_min + 5]`: `φ_k` matches a ball `B_i` when `k = -i`.
pub fn default_k_range(sum: &AtomicSum) -> (i32, i32) {
    let lo = sum.atoms.iter().map(|a| a.ball.index).min().unwrap_or(0);
    let hi = sum.atoms.iter().map(|a| a.ball.index).max().unwrap_or(0);
    (-hi - 5, -lo + 5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximalValue {
    pub norm: f64,
    pub grid: usize,
    pub points: usize,
    pub k_range: (i32, i32),
}

struct Kernel {
    /// `A^k`, row-major.
    ak: Vec<f64>,
    half: Vec<f64>,
    bk: f64,
}

/// `f ∗ φ_k (x)` for every `k` and the largest modulus.
fn sup_convolution(
    sum: &AtomicSum,
    d: &Dilation,
    phi: &TensorBump,
    kernels: &[Kernel],
    boxes: &[(Vec<f64>, Vec<f64>)],
    nodes: usize,
    x: &[f64],
) -> f64 {
    let n = x.len();
    let mut best = 0.0f64;
    let mut t = vec![0.0; n];
    let mut z = vec![0.0; n];
    for ker in kernels {
        let mut acc = num_complex::Complex64::new(0.0, 0.0);
        for ((lam, atom), (lo, hi)) in sum.coefficients.iter().zip(&sum.atoms).zip(boxes) {
            let a: Vec<f64> = (0..n).map(|i| lo[i].max(x[i] - ker.half[i])).collect();
            let b: Vec<f64> = (0..n).map(|i| hi[i].min(x[i] + ker.half[i])).collect();
            if a.iter().zip(&b).any(|(p, q)| p >= q) {
                continue;
            }
            let h: Vec<f64> = a
                .iter()
                .zip(&b)
                .map(|(p, q)| (q - p) / nodes as f64)
                .collect();
            let cell: f64 = h.iter().product();
            let total = nodes.pow(n as u32);
            let mut s = 0.0;
            for flat in 0..total {
                let mut rem = flat;
                for i in (0..n).rev() {
                    t[i] = a[i] + ((rem % nodes) as f64 + 0.5) * h[i];
                    rem /= nodes;
                }
                let av = atom.eval(d, &t);
                if av == 0.0 {
                    continue;
                }
                for (r, zr) in z.iter_mut().enumerate() {
                    *zr = (0..n).map(|c| ker.ak[r * n + c] * (x[c] - t[c])).sum();
                }
                s += av * phi.eval(&z);
            }
            acc += lam * (s * cell * ker.bk);
        }
        best = best.max(acc.norm());
    }
    best
}

/// Mixed norm of the truncated maximal function with `grid` nodes per ball box.
pub fn radial_maximal(
    sum: &AtomicSum,
    d: &Dilation,
    pv: &ExponentVector,
    phi: &TensorBump,
    k_range: (i32, i32),
    grid: usize,
) -> Result<MaximalValue> {
    if grid < MIN_GRID_NODES {
        return Err(Error::GridTooCoarse(format!(
            "{grid} nodes per ball box, need at least {MIN_GRID_NODES}"
        )));
    }
    if k_range.0 > k_range.1 {
        return Err(Error::InvalidParameter {
            name: "k_range",
            reason: format!("empty range {k_range:?}"),
        });
    }
    if sum.is_empty() || sum.coefficients.iter().all(|l| l.norm() == 0.0) {
        return Ok(MaximalValue {
            norm: 0.0,
            grid,
            points: 0,
            k_range,
        });
    }
    let n = d.dim();
    let boxes: Vec<(Vec<f64>, Vec<f64>)> =
        sum.atoms.iter().map(|a| a.ball.bounding_box(d)).collect();
    let grown: Vec<(Vec<f64>, Vec<f64>)> = boxes
        .iter()
        .map(|(lo, hi)| {
            let c: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let w: Vec<f64> = lo
                .iter()
                .zip(hi)
                .map(|(a, b)| 0.5 * BOX_GROWTH * (b - a))
                .collect();
            (
                c.iter().zip(&w).map(|(c, w)| c - w).collect(),
                c.iter().zip(&w).map(|(c, w)| c + w).collect(),
            )
        })
        .collect();
    let axes = covering_axes(&grown, (BOX_GROWTH * grid as f64).round() as usize);
    let kernels: Vec<Kernel> = (k_range.0..=k_range.1)
        .map(|k| {
            let ak = d.power(k);
            let inv = d.power(-k);
            Kernel {
                ak: (0..n * n).map(|f| ak[(f / n, f % n)]).collect(),
                half: (0..n)
                    .map(|r| 0.5 * (0..n).map(|c| inv[(r, c)].abs()).sum::<f64>())
                    .collect(),
                bk: d.b_pow(k),
            }
        })
        .collect();
    let shape = shape_of(&axes);
    let total: usize = shape.iter().product();
    let mags: Vec<f64> = (0..total)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |x, flat| {
                fill_point(&axes, &shape, flat, x);
                sup_convolution(sum, d, phi, &kernels, &boxes, grid, x)
            },
        )
        .collect();
    Ok(MaximalValue {
        norm: nested_norm(&axes, &mags, pv)?,
        grid,
        points: total,
        k_range,
    })
}

pub fn radial_maximal_norm(
    sum: &AtomicSum,
    d: &Dilation,
    pv: &ExponentVector,
    phi: &TensorBump,
    k_range: (i32, i32),
    grid: usize,
) -> Result<f64> {
    Ok(radial_maximal(sum, d, pv, phi, k_range, grid)?.norm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximalOptions {
    pub phi: TensorBump,
    pub grid: usize,
    /// Atomic-norm resolution.
    pub resolution: usize,
}

impl Default for MaximalOptions {
    fn default() -> Self {
        MaximalOptions {
            phi: TensorBump::default(),
            grid: 16,
            resolution: 64,
        }
    }
}

/// Maximal-function norm against atomic norm at `grid` and `2·grid`.
pub fn verify_maximal(
    sums: &[AtomicSum],
    d: &Dilation,
    pv: &ExponentVector,
    opts: &MaximalOptions,
    seed: u64,
) -> Result<EstimateReport> {
    let mut report = EstimateReport::new("maximal_compare", d, pv, seed);
    let all: Vec<_> = sums.iter().flat_map(|s| s.atoms.iter().cloned()).collect();
    certification_verdict(&mut report, &all);
    report.raw = Table::new(&[
        "sum",
        "terms",
        "maximal_coarse",
        "maximal_fine",
        "atomic_norm",
        "ratio",
        "refinement",
    ]);
    let (mut lo, mut hi, mut worst_ref) = (f64::INFINITY, 0.0f64, 0.0f64);
    for (k, sum) in sums.iter().enumerate() {
        let kr = default_k_range(sum);
        let coarse = radial_maximal(sum, d, pv, &opts.phi, kr, opts.grid)?;
        let fine = radial_maximal(sum, d, pv, &opts.phi, kr, 2 * opts.grid)?;
        let norm = atomic_norm(sum, d, pv, opts.resolution)?;
        let ratio = fine.norm / norm;
        let refinement = ((fine.norm - coarse.norm) / fine.norm).abs();
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        worst_ref = worst_ref.max(refinement);
        report.raw.push(vec![
            k as f64,
            sum.len() as f64,
            coarse.norm,
            fine.norm,
            norm,
            ratio,
            refinement,
        ]);
    }
    report.plot = Table::new(&["atomic_norm", "maximal_norm"]);
    for r in &report.raw.rows {
        report.plot.push(vec![r[4], r[3]]);
    }
    report.constant = Some(hi);
    report.stability = Some(worst_ref);
    report.size("sums", sums.len());
    report.size("grid", opts.grid);
    report.metric("min_ratio", lo);
    report.metric("max_ratio", hi);
    report.assert("ratio_lower", lo > RATIO_BAND.0, lo, RATIO_BAND.0);
    report.assert("ratio_upper", hi < RATIO_BAND.1, hi, RATIO_BAND.1);
    report.resolution(
        "grid_refinement",
        worst_ref < REFINEMENT_LIMIT,
        worst_ref,
        REFINEMENT_LIMIT,
    );
    Ok(report)
}
