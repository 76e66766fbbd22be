//! Fourier transforms of atoms by direct quadrature,
//! `â(x) = ∫ a(t) e^{-2πi t·x} dt`.
//!
//! Two paths are provided. The direct path sums over the atom's own grid.
//! The dilation-identity path evaluates the transform of the dilated profile
//! `κ·h` on the canonical grid at `y = (A^{i0})ᵀx` and multiplies by
//! `b^{i0} e^{-2πi x0·x}`.
//!
//! A cell whose phase `2π Σ_k h_k |x_k|` reaches 0.5 rad triggers a resampling
//! of the atom on a grid subdivided `2^L` times per axis, `L <= 4`. Past
//! that the value is returned with an under-resolution flag.
//!
//! Near the origin the transform is tiny because moments vanish, and a
//! plain sum would lose it to cancellation. When every phase `|θ|` on the
//! grid is at most 1, the kernel is replaced by the Taylor remainder
//! `e^{-iθ} - Σ_{m<=s} (-iθ)^m/m!`, which integrates to the same value.
//! The remainder is summed through cached moments of the grid,
//! `Σ_{m>s} (-2πi)^m Σ_{|γ|=m} y^γ M_γ/γ!`, truncated where the series
//! is far below double precision.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atom::{ball_axes, refine_axes, sample_on, Atom, AtomicSum, DilatedBall};
use crate::dilation::Dilation;
use crate::error::{Error, Result};
use crate::grid::{fill_point, shape_of, Axis};
use crate::poly::{degree, monomial, multi_indices, MultiIndex, Poly};

pub const PHASE_LIMIT: f64 = 0.5;
pub const MAX_REFINE: u32 = 4;
const COMPENSATION_LIMIT: f64 = 1.0;
/// Highest Laplacian power in the decay bound; needs `2m <= K - 1`.
const DECAY_POWERS: u32 = 3;
/// Degrees past `s + 1` kept in the moment expansion; `θ <= 1` makes the
/// dropped part smaller than `1/(s+2)···(s+MOMENT_EXTRA+1)` of the first term.
const MOMENT_EXTRA: u32 = 20;

/// Largest residual phase per cell accepted, and the deepest refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRule {
    pub phase_limit: f64,
    pub max_level: u32,
}

impl PhaseRule {
    pub const STRICT: PhaseRule = PhaseRule {
        phase_limit: PHASE_LIMIT,
        max_level: MAX_REFINE,
    };

    /// The sampled profiles are compactly supported and smooth, so the node
    /// sum only errs by aliases `ĥ(y + k/h)`; at `π/2` per cell these sit at
    /// least `3|y|` out. Good enough for integrals and suprema of `|â|`.
    pub const ALIASED: PhaseRule = PhaseRule {
        phase_limit: std::f64::consts::FRAC_PI_2,
        max_level: MAX_REFINE,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    DilationIdentity,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Direct => f.write_str("direct"),
            Method::DilationIdentity => f.write_str("dilation_identity"),
        }
    }
}

/// One transform value with its resolution bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValue {
    pub value: Complex64,
    /// Refinement level used.
    pub level: u32,
    /// Phase per cell at the level used.
    pub phase_err: f64,
    pub compensated: bool,
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierEvaluation {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<Complex64>,
    pub method: Method,
    pub phase_err: Vec<f64>,
    pub levels: Vec<u32>,
    pub compensated: Vec<bool>,
    pub resolved: Vec<bool>,
}

impl FourierEvaluation {
    fn from_points(points: &[Vec<f64>], vals: Vec<PointValue>, method: Method) -> Self {
        FourierEvaluation {
            points: points.to_vec(),
            values: vals.iter().map(|v| v.value).collect(),
            method,
            phase_err: vals.iter().map(|v| v.phase_err).collect(),
            levels: vals.iter().map(|v| v.level).collect(),
            compensated: vals.iter().map(|v| v.compensated).collect(),
            resolved: vals.iter().map(|v| v.resolved).collect(),
        }
    }

    pub fn unresolved_count(&self) -> usize {
        self.resolved.iter().filter(|r| !**r).count()
    }

    /// `PhaseUnderResolved` if any point hit the refinement cap.
    pub fn check_resolved(&self) -> Result<()> {
        let count = self.unresolved_count();
        if count == 0 {
            return Ok(());
        }
        let max_residual = self
            .phase_err
            .iter()
            .zip(&self.resolved)
            .filter(|(_, r)| !**r)
            .map(|(p, _)| *p)
            .fold(0.0, f64::max);
        Err(Error::PhaseUnderResolved {
            count,
            max_residual,
        })
    }
}

/// Weighted real samples on a tensor grid.
struct Samples {
    axes: Vec<Axis>,
    wv: Vec<f64>,
}

impl Samples {
    fn new(axes: Vec<Axis>, values: impl Iterator<Item = f64>) -> Self {
        let shape = shape_of(&axes);
        let wv = values
            .enumerate()
            .map(|(flat, v)| {
                let mut rem = flat;
                let mut w = 1.0;
                for k in (0..axes.len()).rev() {
                    w *= axes[k].weights[rem % shape[k]];
                    rem /= shape[k];
                }
                w * v
            })
            .collect();
        Samples { axes, wv }
    }
}

/// Per-atom evaluator caching the resampled grids and decay-bound norms.
pub struct AtomTransform<'a> {
    d: &'a Dilation,
    atom: &'a Atom,
    direct: [OnceLock<Samples>; (MAX_REFINE + 1) as usize],
    canonical: [OnceLock<Samples>; (MAX_REFINE + 1) as usize],
    laplace_norms: Mutex<BTreeMap<MultiIndex, Arc<Vec<f64>>>>,
    /// Keyed by (direct grid, α).
    moments: Mutex<BTreeMap<(bool, MultiIndex), Arc<MomentTable>>>,
}

impl<'a> AtomTransform<'a> {
    pub fn new(d: &'a Dilation, atom: &'a Atom) -> Self {
        AtomTransform {
            d,
            atom,
            direct: Default::default(),
            canonical: Default::default(),
            laplace_norms: Mutex::new(BTreeMap::new()),
            moments: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn atom(&self) -> &Atom {
        self.atom
    }

    fn direct_samples(&self, level: u32) -> &Samples {
        self.direct[level as usize].get_or_init(|| {
            let g = if level == 0 {
                self.atom.samples.clone()
            } else {
                self.atom.sample(self.d, level)
            };
            Samples::new(g.axes, g.values.iter().map(|v| v.re))
        })
    }

    fn canonical_axes(&self) -> Vec<Axis> {
        ball_axes(
            self.d,
            &DilatedBall::centered(self.d.dim(), 0),
            self.atom.base_nodes,
        )
    }

    fn canonical_samples(&self, level: u32) -> &Samples {
        self.canonical[level as usize].get_or_init(|| {
            let axes = refine_axes(&self.canonical_axes(), level);
            let g = sample_on(&axes, |xi| self.atom.eval_canonical(self.d, xi));
            Samples::new(g.axes, g.values.iter().map(|v| v.re))
        })
    }

    fn moments(&self, direct: bool, alpha: Option<&[u32]>) -> Arc<MomentTable> {
        let n = self.d.dim();
        let key = (direct, alpha.map_or_else(|| vec![0; n], <[u32]>::to_vec));
        if let Some(m) = self.moments.lock().unwrap().get(&key) {
            return m.clone();
        }
        let (samples, center) = if direct {
            (self.direct_samples(0), self.atom.ball.center.clone())
        } else {
            (self.canonical_samples(0), vec![0.0; n])
        };
        let table = Arc::new(MomentTable::new(
            samples,
            &center,
            alpha,
            self.atom.s_order + 1 + MOMENT_EXTRA,
        ));
        self.moments.lock().unwrap().insert(key, table.clone());
        table
    }

    /// `â(x)` on the atom's grid.
    pub fn direct(&self, x: &[f64]) -> PointValue {
        self.direct_with(x, PhaseRule::STRICT)
    }

    pub fn direct_with(&self, x: &[f64], rule: PhaseRule) -> PointValue {
        let center = &self.atom.ball.center;
        let mut pv = evaluate(
            |l| self.direct_samples(l),
            || self.moments(true, None),
            center,
            x,
            None,
            Some(self.atom.s_order),
            rule,
        );
        pv.value *= phase(center, x);
        pv
    }

    /// `κ·ĥ(y)`, the transform of the dilated atom translated to the origin.
    pub fn canonical(&self, y: &[f64]) -> PointValue {
        self.canonical_with(y, PhaseRule::STRICT)
    }

    pub fn canonical_with(&self, y: &[f64], rule: PhaseRule) -> PointValue {
        let zero = vec![0.0; y.len()];
        evaluate(
            |l| self.canonical_samples(l),
            || self.moments(false, None),
            &zero,
            y,
            None,
            Some(self.atom.s_order),
            rule,
        )
    }

    /// `â(x) = b^{i0} e^{-2πi x0·x} κ ĥ((A^{i0})ᵀ x)`.
    pub fn identity(&self, x: &[f64]) -> PointValue {
        let i0 = self.atom.ball.index;
        let y = self.dual(x);
        let mut pv = self.canonical(&y);
        pv.value *= phase(&self.atom.ball.center, x) * self.d.b_pow(i0);
        pv
    }

    /// `y = (A^{i0})ᵀ x`.
    pub fn dual(&self, x: &[f64]) -> Vec<f64> {
        let m = self.d.power(self.atom.ball.index);
        (0..x.len())
            .map(|c| (0..x.len()).map(|r| m[(r, c)] * x[r]).sum())
            .collect()
    }

    /// `∂^α` of the canonical transform at `y`: `∫ (-2πiξ)^α κh(ξ) e^{-2πiξ·y} dξ`.
    pub fn derivative(&self, alpha: &[u32], y: &[f64]) -> PointValue {
        let order = self.atom.s_order as i64 - degree(alpha) as i64;
        let zero = vec![0.0; y.len()];
        let mut pv = evaluate(
            |l| self.canonical_samples(l),
            || self.moments(false, Some(alpha)),
            &zero,
            y,
            Some(alpha),
            u32::try_from(order).ok(),
            PhaseRule::STRICT,
        );
        pv.value *= Complex64::new(0.0, -2.0 * PI).powu(degree(alpha));
        pv
    }

    /// `‖Δ^m(ξ^α h)‖₁` for `m = 0..=3`, cached per `α`.
    fn laplace_norms(&self, alpha: &[u32]) -> Arc<Vec<f64>> {
        if let Some(v) = self.laplace_norms.lock().unwrap().get(alpha) {
            return v.clone();
        }
        let n = self.d.dim();
        let h: Poly = self.atom.profile.as_poly(self.d);
        let g = h.mul(&Poly::from_terms(n, [(alpha.to_vec(), 1.0)]));
        let mut polys = vec![g];
        for m in 0..DECAY_POWERS as usize {
            let next = polys[m].laplacian();
            polys.push(next);
        }
        let axes = self.canonical_axes();
        let shape = shape_of(&axes);
        let total: usize = shape.iter().product();
        let mut acc = vec![0.0; polys.len()];
        let mut x = vec![0.0; n];
        for flat in 0..total {
            fill_point(&axes, &shape, flat, &mut x);
            if !self.d.ball_membership(&x, 0) {
                continue;
            }
            let mut rem = flat;
            let mut w = 1.0;
            for k in (0..n).rev() {
                w *= axes[k].weights[rem % shape[k]];
                rem /= shape[k];
            }
            for (a, p) in acc.iter_mut().zip(&polys) {
                *a += w * p.eval(&x).abs();
            }
        }
        // Quadrature slack on the L¹ norms.
        let norms = Arc::new(acc.into_iter().map(|v| 1.05 * v).collect::<Vec<_>>());
        self.laplace_norms
            .lock()
            .unwrap()
            .insert(alpha.to_vec(), norms.clone());
        norms
    }

    /// Upper bound for `|∂^α(𝓕 D^{i0} a)(y)|` from
    /// `|𝓕g(y)| <= ‖Δ^m g‖₁ / (2π|y|)^{2m}` with `g = ξ^α κh`.
    pub fn derivative_bound(&self, alpha: &[u32], y: &[f64]) -> f64 {
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let norms = self.laplace_norms(alpha);
        let mut best = norms[0];
        for (m, &nm) in norms.iter().enumerate().skip(1) {
            best = best.min(nm / (2.0 * PI * ny).powi(2 * m as i32));
        }
        (2.0 * PI).powi(degree(alpha) as i32) * self.atom.kappa.abs() * best
    }

    /// Upper bound for `|â(x)|`.
    pub fn decay_bound(&self, x: &[f64]) -> f64 {
        let y = self.dual(x);
        let zero = vec![0; x.len()];
        self.d.b_pow(self.atom.ball.index) * self.derivative_bound(&zero, &y)
    }

    /// Refinement level the direct path would use at `x`, with its residual phase.
    pub fn direct_level(&self, x: &[f64]) -> (u32, f64) {
        required_level(&self.direct_samples(0).axes, x)
    }

    /// Refinement level of the canonical grid at `y`.
    pub fn canonical_level(&self, y: &[f64]) -> (u32, f64) {
        required_level(&self.canonical_samples(0).axes, y)
    }
}

fn required_level(axes: &[Axis], y: &[f64]) -> (u32, f64) {
    level_for(axes, y, PHASE_LIMIT, MAX_REFINE)
}

fn level_for(axes: &[Axis], y: &[f64], limit: f64, max_level: u32) -> (u32, f64) {
    let cell_phase = cell_phase(axes, y);
    let mut level = 0;
    while level < max_level && cell_phase / f64::from(1u32 << level) >= limit {
        level += 1;
    }
    (level, cell_phase / f64::from(1u32 << level))
}

/// Largest `|θ| = 2π|(t - c)·y|` bound over the grid box.
fn max_phase(axes: &[Axis], center: &[f64], y: &[f64]) -> f64 {
    2.0 * PI
        * axes
            .iter()
            .zip(center)
            .zip(y)
            .map(|((a, c), v)| {
                let lo = a.nodes[0] - c;
                let hi = a.nodes[a.len() - 1] - c;
                lo.abs().max(hi.abs()) * v.abs()
            })
            .sum::<f64>()
}

fn cell_phase(axes: &[Axis], y: &[f64]) -> f64 {
    2.0 * PI
        * axes
            .iter()
            .zip(y)
            .map(|(a, v)| a.weights.iter().copied().fold(0.0, f64::max) * v.abs())
            .sum::<f64>()
}

fn phase(center: &[f64], x: &[f64]) -> Complex64 {
    let t: f64 = center.iter().zip(x).map(|(c, v)| c * v).sum();
    Complex64::from_polar(1.0, -2.0 * PI * t)
}

/// Σ w v(t) m_α(t) K(θ), `θ = 2π (t - c)·y`, at the coarsest admissible level.
fn evaluate<'s, F, M>(
    samples: F,
    moments: M,
    center: &[f64],
    y: &[f64],
    alpha: Option<&[u32]>,
    comp_order: Option<u32>,
    rule: PhaseRule,
) -> PointValue
where
    F: Fn(u32) -> &'s Samples,
    M: Fn() -> Arc<MomentTable>,
{
    let base = samples(0);
    let cell_phase = cell_phase(&base.axes, y);
    let theta_max = max_phase(&base.axes, center, y);

    if let Some(s) = comp_order {
        if theta_max > 0.0 && theta_max <= COMPENSATION_LIMIT {
            return PointValue {
                value: moments().remainder(y, s),
                level: 0,
                phase_err: cell_phase,
                compensated: true,
                resolved: true,
            };
        }
    }

    let (level, residual) = level_for(&base.axes, y, rule.phase_limit, rule.max_level);
    PointValue {
        value: separable_sum(samples(level), center, y, alpha),
        level,
        phase_err: residual,
        compensated: false,
        resolved: residual < rule.phase_limit,
    }
}

fn separable_sum(s: &Samples, center: &[f64], y: &[f64], alpha: Option<&[u32]>) -> Complex64 {
    let factors: Vec<Vec<Complex64>> = s
        .axes
        .iter()
        .enumerate()
        .map(|(k, a)| {
            a.nodes
                .iter()
                .map(|&t| {
                    let u = t - center[k];
                    let m = alpha.map_or(1.0, |al| t.powi(al[k] as i32));
                    Complex64::from_polar(m, -2.0 * PI * u * y[k])
                })
                .collect()
        })
        .collect();
    let shape = shape_of(&s.axes);
    let mut cur: Vec<Complex64> = s.wv.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for k in (0..shape.len()).rev() {
        let len = shape[k];
        let outer = cur.len() / len;
        let f = &factors[k];
        cur = (0..outer)
            .map(|j| {
                let row = &cur[j * len..(j + 1) * len];
                row.iter().zip(f).map(|(a, b)| a * b).sum()
            })
            .collect();
    }
    cur[0]
}

/// Scaled moments `M_γ/γ!` of `w·v·m_α` about a center, `|γ| <= max_degree`.
struct MomentTable {
    /// Largest `|t_k - c_k|` on the grid; moments are taken in `u_k/scale_k`.
    scale: Vec<f64>,
    indices: Vec<MultiIndex>,
    values: Vec<f64>,
    max_degree: u32,
}

impl MomentTable {
    fn new(s: &Samples, center: &[f64], alpha: Option<&[u32]>, max_degree: u32) -> Self {
        let n = s.axes.len();
        let scale: Vec<f64> = s
            .axes
            .iter()
            .zip(center)
            .map(|(a, c)| {
                let v = (a.nodes[0] - c).abs().max((a.nodes[a.len() - 1] - c).abs());
                if v > 0.0 {
                    v
                } else {
                    1.0
                }
            })
            .collect();
        let indices = multi_indices(n, max_degree);
        let mut values = vec![0.0; indices.len()];
        let shape = shape_of(&s.axes);
        let mut t = vec![0.0; n];
        let mut pows = vec![vec![1.0; max_degree as usize + 1]; n];
        for (flat, &wv) in s.wv.iter().enumerate() {
            if wv == 0.0 {
                continue;
            }
            fill_point(&s.axes, &shape, flat, &mut t);
            let w = wv * alpha.map_or(1.0, |al| monomial(&t, al));
            for k in 0..n {
                let u = (t[k] - center[k]) / scale[k];
                for e in 1..=max_degree as usize {
                    pows[k][e] = pows[k][e - 1] * u;
                }
            }
            for (v, g) in values.iter_mut().zip(&indices) {
                *v += w * g
                    .iter()
                    .enumerate()
                    .map(|(k, &e)| pows[k][e as usize])
                    .product::<f64>();
            }
        }
        for (v, g) in values.iter_mut().zip(&indices) {
            let fact: f64 = g
                .iter()
                .map(|&e| (1..=e).map(f64::from).product::<f64>())
                .product();
            *v /= fact;
        }
        MomentTable {
            scale,
            indices,
            values,
            max_degree,
        }
    }

    /// `Σ_{order < m <= max_degree} (-2πi)^m Σ_{|γ|=m} y^γ M_γ/γ!`.
    fn remainder(&self, y: &[f64], order: u32) -> Complex64 {
        let n = y.len();
        let mut pows = vec![vec![1.0; self.max_degree as usize + 1]; n];
        for k in 0..n {
            let v = y[k] * self.scale[k];
            for e in 1..=self.max_degree as usize {
                pows[k][e] = pows[k][e - 1] * v;
            }
        }
        let mut by_degree = vec![0.0; self.max_degree as usize + 1];
        for (g, &c) in self.indices.iter().zip(&self.values) {
            let m = degree(g);
            if m > order {
                by_degree[m as usize] += c * g
                    .iter()
                    .enumerate()
                    .map(|(k, &e)| pows[k][e as usize])
                    .product::<f64>();
            }
        }
        let z = Complex64::new(0.0, -2.0 * PI);
        let mut zm = z.powu(order + 1);
        let mut acc = Complex64::new(0.0, 0.0);
        for &v in &by_degree[order as usize + 1..] {
            acc += zm * v;
            zm *= z;
        }
        acc
    }
}

pub fn fourier_atom_direct(d: &Dilation, atom: &Atom, points: &[Vec<f64>]) -> FourierEvaluation {
    let t = AtomTransform::new(d, atom);
    let vals = points.par_iter().map(|x| t.direct(x)).collect();
    FourierEvaluation::from_points(points, vals, Method::Direct)
}

pub fn fourier_via_dilation_identity(
    d: &Dilation,
    atom: &Atom,
    points: &[Vec<f64>],
) -> FourierEvaluation {
    let t = AtomTransform::new(d, atom);
    let vals = points.par_iter().map(|x| t.identity(x)).collect();
    FourierEvaluation::from_points(points, vals, Method::DilationIdentity)
}

/// `∂^α(𝓕 D_A^{i0} a)(x)` for the atom translated to the origin.
pub fn fourier_derivative(
    d: &Dilation,
    atom: &Atom,
    alpha: &[u32],
    points: &[Vec<f64>],
) -> Result<FourierEvaluation> {
    if alpha.len() != d.dim() {
        return Err(Error::DimensionMismatch {
            expected: d.dim(),
            got: alpha.len(),
        });
    }
    if degree(alpha) > atom.s_order {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("|alpha| = {} exceeds s = {}", degree(alpha), atom.s_order),
        });
    }
    let t = AtomTransform::new(d, atom);
    let vals = points.par_iter().map(|x| t.derivative(alpha, x)).collect();
    Ok(FourierEvaluation::from_points(points, vals, Method::Direct))
}

/// `F(x) = Σ λ_i â_i(x)` by the direct path.
pub fn fourier_finite_sum(d: &Dilation, sum: &AtomicSum, points: &[Vec<f64>]) -> FourierEvaluation {
    let ts: Vec<AtomTransform<'_>> = sum.atoms.iter().map(|a| AtomTransform::new(d, a)).collect();
    let vals = points
        .par_iter()
        .map(|x| {
            let mut out = PointValue {
                value: Complex64::new(0.0, 0.0),
                level: 0,
                phase_err: 0.0,
                compensated: true,
                resolved: true,
            };
            for (t, l) in ts.iter().zip(&sum.coefficients) {
                let v = t.direct(x);
                out.value += l * v.value;
                out.level = out.level.max(v.level);
                out.phase_err = out.phase_err.max(v.phase_err);
                out.compensated &= v.compensated;
                out.resolved &= v.resolved;
            }
            out
        })
        .collect();
    FourierEvaluation::from_points(points, vals, Method::Direct)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `Σ_{m > s} (-iθ)^m / m!` for `|θ| <= 1`.
    fn taylor_remainder(theta: f64, s: u32) -> Complex64 {
        let z = Complex64::new(0.0, -theta);
        let mut term = Complex64::new(1.0, 0.0);
        for m in 1..=s + 1 {
            term *= z / m as f64;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        let mut m = s + 1;
        while term.norm() > 1e-18 * acc.norm() || acc.norm() == 0.0 && term.norm() > 0.0 {
            acc += term;
            m += 1;
            term *= z / m as f64;
            if m > s + 60 {
                break;
            }
        }
        acc
    }

    fn remainder_sum(
        s: &Samples,
        center: &[f64],
        y: &[f64],
        alpha: Option<&[u32]>,
        order: u32,
    ) -> Complex64 {
        let shape = shape_of(&s.axes);
        let n = shape.len();
        let mut t = vec![0.0; n];
        let mut acc = Complex64::new(0.0, 0.0);
        for (flat, &wv) in s.wv.iter().enumerate() {
            if wv == 0.0 {
                continue;
            }
            fill_point(&s.axes, &shape, flat, &mut t);
            let theta: f64 = 2.0 * PI * (0..n).map(|k| (t[k] - center[k]) * y[k]).sum::<f64>();
            let m = alpha.map_or(1.0, |al| monomial(&t, al));
            acc += taylor_remainder(theta, order) * (wv * m);
        }
        acc
    }

    #[test]
    fn moment_expansion_matches_node_sum() {
        let axes = vec![Axis::midpoint(-0.7, 0.9, 24), Axis::midpoint(-1.1, 0.4, 20)];
        let samples = Samples::new(
            axes.clone(),
            (0..24 * 20).map(|k| ((k * 37 % 101) as f64 / 101.0 - 0.5) * (1.0 + k as f64 / 480.0)),
        );
        let center = [0.3, -0.2];
        for alpha in [None, Some(&[1u32, 0][..]), Some(&[0u32, 2][..])] {
            for order in 0..3u32 {
                let table = MomentTable::new(&samples, &center, alpha, order + 1 + MOMENT_EXTRA);
                for y in [[0.05, -0.1], [0.2, 0.15], [-0.01, 0.003]] {
                    let a = table.remainder(&y, order);
                    let b = remainder_sum(&samples, &center, &y, alpha, order);
                    assert!(
                        (a - b).norm() <= 1e-12 * b.norm() + 1e-300,
                        "{alpha:?} {order} {y:?}: {a} {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn remainder_series_matches_closed_form() {
        for &theta in &[0.9, -0.3, 0.05] {
            for s in 0..4u32 {
                let mut t = Complex64::new(1.0, 0.0);
                let mut poly = Complex64::new(0.0, 0.0);
                for m in 0..=s {
                    if m > 0 {
                        t *= Complex64::new(0.0, -theta) / m as f64;
                    }
                    poly += t;
                }
                let exact = Complex64::from_polar(1.0, -theta) - poly;
                let r = taylor_remainder(theta, s);
                assert!((r - exact).norm() < 1e-15, "{theta} {s}");
            }
        }
    }
}
