//! Certified atoms on dilated balls and finite atomic sums.
//!
//! An atom supported in `x0 + B_{i0}` is `a(x) = κ·h(A^{-i0}(x - x0))` with the
//! canonical profile `h(ξ) = (1 - q(ξ))^K · r(ξ/s0)` on `B_0`, where
//! `q(ξ) = ξᵀPξ / s0²`. The polynomial `r` is a random polynomial minus its
//! projection onto degree `<= s` in the `(1-q)^K`-weighted inner product, so
//! `h` has vanishing moments up to order `s`; these survive the affine
//! transport because monomials pull back to polynomials of the same degree.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::dilation::{quadratic_form, unit_ball_volume, Dilation};
use crate::error::{Error, Result};
use crate::grid::{fill_point, shape_of, Axis, GridFunction};
use crate::mixed_norm::{check_index, indicator_ball_norm, nested_norm, ExponentVector};
use crate::poly::{degree, monomial, multi_indices, MultiIndex, Poly};
use crate::sampling::rng_for;
use crate::stats::compensated_sum;

/// Exponent `K` of the `(1 - q)^K` bump; the profile is `C^{K-1}`.
pub const PROFILE_POWER: u32 = 8;
/// Nodes per axis of an atom grid before the aspect correction.
pub const BASE_NODES: usize = 64;
/// Atoms are scaled to this fraction of the size bound.
pub const SIZE_SATURATION: f64 = 0.9;
pub const SIZE_RTOL: f64 = 1e-6;
pub const MOMENT_RTOL: f64 = 1e-8;
/// Resolution used for `‖1_B‖_{L^p⃗}` in the size normalization.
pub const INDICATOR_RESOLUTION: usize = 64;
pub const MAX_RETRIES: usize = 16;
const DEGENERATE_RTOL: f64 = 1e-10;
const GRAM_COND_LIMIT: f64 = 1e12;
const MAX_ASPECT_FACTOR: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilatedBall {
    pub center: Vec<f64>,
    pub index: i32,
}

impl DilatedBall {
    pub fn new(center: Vec<f64>, index: i32) -> Self {
        DilatedBall { center, index }
    }

    pub fn centered(n: usize, index: i32) -> Self {
        DilatedBall {
            center: vec![0.0; n],
            index,
        }
    }

    pub fn volume(&self, d: &Dilation) -> f64 {
        d.b_pow(self.index)
    }

    pub fn contains(&self, d: &Dilation, x: &[f64]) -> bool {
        d.translated_membership(x, &self.center, self.index)
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self, d: &Dilation) -> (Vec<f64>, Vec<f64>) {
        let hw = d.ball_half_widths(self.index);
        let lo = self.center.iter().zip(&hw).map(|(c, h)| c - h).collect();
        let hi = self.center.iter().zip(&hw).map(|(c, h)| c + h).collect();
        (lo, hi)
    }
}

/// `⌊(1/p₋ − 1)·ln b / ln λ₋⌋`, clamped at zero.
pub fn min_vanishing_order(d: &Dilation, pv: &ExponentVector) -> u32 {
    let v = (1.0 / pv.p_minus() - 1.0) * d.b().ln() / d.lambda_minus().ln();
    if v <= 0.0 {
        0
    } else {
        (v + 1e-9).floor() as u32
    }
}

/// Quadrature axes on the bounding box of `ball`. Tilted balls fill less of
/// their box, so the node count grows with the inverse fill ratio (capped).
pub fn ball_axes(d: &Dilation, ball: &DilatedBall, base_nodes: usize) -> Vec<Axis> {
    let n = d.dim();
    let hw = d.ball_half_widths(ball.index);
    let box_vol: f64 = hw.iter().map(|h| 2.0 * h).product();
    let aligned = unit_ball_volume(n) / 2f64.powi(n as i32);
    let fill = d.b_pow(ball.index) / box_vol;
    let factor = (aligned / fill).sqrt().clamp(1.0, MAX_ASPECT_FACTOR);
    let nodes = (base_nodes as f64 * factor).ceil() as usize;
    hw.iter()
        .zip(&ball.center)
        .map(|(&h, &c)| Axis::midpoint(c - h, c + h, nodes))
        .collect()
}

/// Random part of the canonical profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub power: u32,
    /// Coefficients of `r(z)`, `z = ξ/s0`.
    pub terms: Vec<(MultiIndex, f64)>,
}

impl Profile {
    pub fn poly(&self, n: usize) -> Poly {
        Poly::from_terms(n, self.terms.iter().cloned())
    }

    /// `h(ξ)`; zero outside `B_0` as decided by the dilation's membership test.
    pub fn eval(&self, d: &Dilation, xi: &[f64]) -> f64 {
        if !d.ball_membership(xi, 0) {
            return 0.0;
        }
        let e = d.ellipsoid();
        let s0 = e.radius;
        let q = quadratic_form(&e.p, xi) / (s0 * s0);
        let bump = (1.0 - q).max(0.0).powi(self.power as i32);
        let z: SmallVec<[f64; 4]> = xi.iter().map(|v| v / s0).collect();
        bump * self.eval_r(&z)
    }

    fn eval_r(&self, z: &[f64]) -> f64 {
        self.terms.iter().map(|(a, c)| c * monomial(z, a)).sum()
    }

    /// `h` as a polynomial in `ξ` on `B_0`.
    pub fn as_poly(&self, d: &Dilation) -> Poly {
        let n = d.dim();
        let e = d.ellipsoid();
        let s0 = e.radius;
        let pm: Vec<f64> = e.p.transpose().iter().map(|v| v / (s0 * s0)).collect();
        let one_minus_q = Poly::constant(n, 1.0).add(&Poly::quadratic(n, &pm).scale(-1.0));
        let r = self.poly(n).scale_vars(&vec![1.0 / s0; n]);
        one_minus_q.pow(self.power).mul(&r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomCertificate {
    /// Nonzero samples outside the ball.
    pub support: Check,
    /// `‖a‖_r / (|B|^{1/r} / ‖1_B‖)`.
    pub size: Check,
    /// Largest `|∫a(x)(x-x0)^γ| / (‖a‖_1 diam(B)^{|γ|})` over `|γ| <= s`.
    pub moments: Check,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub ball: DilatedBall,
    pub r_exponent: f64,
    pub s_order: u32,
    pub samples: GridFunction,
    pub certified: bool,
    pub seed: u64,
    pub kappa: f64,
    pub profile: Profile,
    pub base_nodes: usize,
    pub certificate: Option<AtomCertificate>,
}

impl Atom {
    /// Analytic value `a(x)`.
    pub fn eval(&self, d: &Dilation, x: &[f64]) -> f64 {
        let dx: Vec<f64> = x
            .iter()
            .zip(&self.ball.center)
            .map(|(a, c)| a - c)
            .collect();
        if !d.ball_membership(&dx, self.ball.index) {
            return 0.0;
        }
        let xi = d.apply_power(-self.ball.index, &dx);
        self.kappa * self.profile.eval(d, &xi)
    }

    /// `κ·h(ξ)`, the dilated atom translated to the origin.
    pub fn eval_canonical(&self, d: &Dilation, xi: &[f64]) -> f64 {
        self.kappa * self.profile.eval(d, xi)
    }

    pub fn l1_norm(&self) -> f64 {
        crate::mixed_norm::lp_norm(&self.samples, 1.0)
    }

    pub fn lr_norm(&self) -> f64 {
        crate::mixed_norm::lp_norm(&self.samples, self.r_exponent)
    }

    /// Samples the atom on its own grid refined `2^level` times per axis.
    pub fn sample(&self, d: &Dilation, level: u32) -> GridFunction {
        let axes = refine_axes(&self.samples.axes, level);
        sample_on(&axes, |x| self.eval(d, x))
    }
}

pub(crate) fn refine_axes(axes: &[Axis], level: u32) -> Vec<Axis> {
    if level == 0 {
        return axes.to_vec();
    }
    let m = 1usize << level;
    axes.iter()
        .map(|a| {
            let mut nodes = Vec::with_capacity(a.len() * m);
            let mut weights = Vec::with_capacity(a.len() * m);
            for (x, w) in a.nodes.iter().zip(&a.weights) {
                let h = w / m as f64;
                for j in 0..m {
                    nodes.push(x - 0.5 * w + (j as f64 + 0.5) * h);
                    weights.push(h);
                }
            }
            Axis { nodes, weights }
        })
        .collect()
}

pub(crate) fn sample_on<F: Fn(&[f64]) -> f64 + Sync>(axes: &[Axis], f: F) -> GridFunction {
    let shape = shape_of(axes);
    let total: usize = shape.iter().product();
    let n = axes.len();
    let values = (0..total)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |x, flat| {
                fill_point(axes, &shape, flat, x);
                Complex64::new(f(x), 0.0)
            },
        )
        .collect();
    GridFunction {
        axes: axes.to_vec(),
        values,
    }
}

/// Inside nodes of the canonical grid with their weights and bump values.
struct CanonicalNodes {
    z: Vec<Vec<f64>>,
    weight: Vec<f64>,
}

/// Generator bound to one dilation and exponent vector; caches the
/// canonical quadrature and the indicator norms per scale index.
pub struct AtomFactory<'a> {
    d: &'a Dilation,
    pv: ExponentVector,
    base_nodes: usize,
    canonical: CanonicalNodes,
    indicator: Mutex<BTreeMap<i32, f64>>,
}

impl<'a> AtomFactory<'a> {
    pub fn new(d: &'a Dilation, pv: &ExponentVector) -> Result<Self> {
        Self::with_nodes(d, pv, BASE_NODES)
    }

    pub fn with_nodes(d: &'a Dilation, pv: &ExponentVector, base_nodes: usize) -> Result<Self> {
        if pv.dim() != d.dim() {
            return Err(Error::DimensionMismatch {
                expected: d.dim(),
                got: pv.dim(),
            });
        }
        let axes = ball_axes(d, &DilatedBall::centered(d.dim(), 0), base_nodes);
        let shape = shape_of(&axes);
        let total: usize = shape.iter().product();
        let e = d.ellipsoid();
        let s0 = e.radius;
        let mut z = Vec::new();
        let mut weight = Vec::new();
        let mut x = vec![0.0; d.dim()];
        for flat in 0..total {
            fill_point(&axes, &shape, flat, &mut x);
            if !d.ball_membership(&x, 0) {
                continue;
            }
            let q = quadratic_form(&e.p, &x) / (s0 * s0);
            let w: f64 = (0..d.dim())
                .map(|k| {
                    let len = shape[k];
                    let idx = (flat / shape[k + 1..].iter().product::<usize>()) % len;
                    axes[k].weights[idx]
                })
                .product();
            z.push(x.iter().map(|v| v / s0).collect());
            weight.push(w * (1.0 - q).max(0.0).powi(PROFILE_POWER as i32));
        }
        Ok(AtomFactory {
            d,
            pv: pv.clone(),
            base_nodes,
            canonical: CanonicalNodes { z, weight },
            indicator: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn dilation(&self) -> &Dilation {
        self.d
    }

    pub fn exponents(&self) -> &ExponentVector {
        &self.pv
    }

    /// `‖1_{B_i}‖_{L^p⃗}` at the normalization resolution, cached.
    pub fn indicator_norm(&self, i: i32) -> Result<f64> {
        if let Some(&v) = self.indicator.lock().unwrap().get(&i) {
            return Ok(v);
        }
        let v = indicator_ball_norm(
            self.d,
            &DilatedBall::centered(self.d.dim(), i),
            &self.pv,
            INDICATOR_RESOLUTION,
        )?
        .value;
        self.indicator.lock().unwrap().insert(i, v);
        Ok(v)
    }

    /// `|B|^{1/r} / ‖1_B‖_{L^p⃗}`.
    pub fn size_bound(&self, i: i32, r: f64) -> Result<f64> {
        let vol = if r.is_infinite() {
            1.0
        } else {
            self.d.b_pow(i).powf(1.0 / r)
        };
        Ok(vol / self.indicator_norm(i)?)
    }

    fn check_params(&self, r: f64, s: u32) -> Result<()> {
        let lower = self.pv.p_plus().max(1.0);
        if !(r > lower) {
            return Err(Error::InvalidParameter {
                name: "r",
                reason: format!("need r > max(p+, 1) = {lower}, got {r}"),
            });
        }
        let smin = min_vanishing_order(self.d, &self.pv);
        if s < smin {
            return Err(Error::InvalidParameter {
                name: "s",
                reason: format!("need s >= {smin}, got {s}"),
            });
        }
        Ok(())
    }

    /// Projects a random polynomial of degree `s + 2` off the degree-`s`
    /// polynomials; retries with fresh streams when the residual vanishes.
    fn draw_profile(&self, s: u32, seed: u64) -> Result<Profile> {
        let n = self.d.dim();
        let basis = multi_indices(n, s);
        let full = multi_indices(n, s + 2);
        let z = &self.canonical.z;
        let w = &self.canonical.weight;
        let phi: Vec<Vec<f64>> = basis
            .iter()
            .map(|b| z.iter().map(|zz| monomial(zz, b)).collect())
            .collect();
        let inner =
            |u: &[f64], v: &[f64]| compensated_sum((0..w.len()).map(|k| w[k] * u[k] * v[k]));
        let m = basis.len();
        let mut gram = DMatrix::<f64>::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let v = inner(&phi[a], &phi[b]);
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
        }
        let svd = gram.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let well_conditioned = smin > 0.0 && smax / smin <= GRAM_COND_LIMIT;
        let ortho = if well_conditioned {
            None
        } else {
            Some(orthonormal_basis(&phi, &inner))
        };

        for attempt in 0..=MAX_RETRIES {
            let mut rng = rng_for(seed, attempt as u64);
            let coeffs: Vec<f64> = full
                .iter()
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let g: Vec<f64> = z
                .iter()
                .map(|zz| {
                    full.iter()
                        .zip(&coeffs)
                        .map(|(a, c)| c * monomial(zz, a))
                        .sum()
                })
                .collect();
            let c: Vec<f64> = match &ortho {
                None => {
                    let rhs = DVector::from_iterator(m, phi.iter().map(|p| inner(&g, p)));
                    let sol = gram
                        .clone()
                        .svd(true, true)
                        .solve(&rhs, smax * 1e-15)
                        .map_err(|e| Error::InvalidParameter {
                            name: "gram",
                            reason: e.to_string(),
                        })?;
                    sol.iter().copied().collect()
                }
                Some((vecs, transform)) => {
                    let mut c = vec![0.0; m];
                    for (e, t) in vecs.iter().zip(transform) {
                        let proj = inner(&g, e);
                        for (cb, tb) in c.iter_mut().zip(t) {
                            *cb += proj * tb;
                        }
                    }
                    c
                }
            };
            let resid: Vec<f64> = (0..z.len())
                .map(|k| g[k] - (0..m).map(|b| c[b] * phi[b][k]).sum::<f64>())
                .collect();
            let rn = inner(&resid, &resid).sqrt();
            let gn = inner(&g, &g).sqrt();
            if !(rn >= DEGENERATE_RTOL * gn) || !rn.is_finite() {
                log::debug!("degenerate projection on attempt {attempt}");
                continue;
            }
            let mut r = Poly::from_terms(n, full.iter().cloned().zip(coeffs.iter().copied()));
            for (b, cb) in basis.iter().zip(&c) {
                r.add_term(b.clone(), -cb);
            }
            return Ok(Profile {
                power: PROFILE_POWER,
                terms: r.terms().map(|(a, c)| (a.clone(), *c)).collect(),
            });
        }
        Err(Error::DegenerateProjection {
            retries: MAX_RETRIES,
        })
    }

    pub fn generate(&self, ball: &DilatedBall, r: f64, s: u32, seed: u64) -> Result<Atom> {
        if ball.center.len() != self.d.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.d.dim(),
                got: ball.center.len(),
            });
        }
        check_index(ball.index)?;
        self.check_params(r, s)?;
        let profile = self.draw_profile(s, seed)?;
        let axes = ball_axes(self.d, ball, self.base_nodes);
        let mut atom = Atom {
            ball: ball.clone(),
            r_exponent: r,
            s_order: s,
            samples: GridFunction::zeros(Vec::new()),
            certified: false,
            seed,
            kappa: 1.0,
            profile,
            base_nodes: self.base_nodes,
            certificate: None,
        };
        atom.samples = sample_on(&axes, |x| atom.eval(self.d, x));
        let unit = atom.lr_norm();
        if !(unit > 0.0) {
            return Err(Error::DegenerateProjection { retries: 0 });
        }
        let kappa = SIZE_SATURATION * self.size_bound(ball.index, r)? / unit;
        atom.kappa = kappa;
        atom.samples.scale(Complex64::new(kappa, 0.0));
        let cert = self.verify(&atom)?;
        atom.certified = cert.passed;
        atom.certificate = Some(cert);
        Ok(atom)
    }

    pub fn verify(&self, atom: &Atom) -> Result<AtomCertificate> {
        let d = self.d;
        let ball = &atom.ball;
        let f = &atom.samples;
        let shape = f.shape();
        let n = d.dim();

        let outside = (0..f.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |x, k| {
                    if f.values[k].norm() == 0.0 {
                        return 0usize;
                    }
                    fill_point(&f.axes, &shape, k, x);
                    usize::from(!ball.contains(d, x))
                },
            )
            .sum::<usize>();
        let support = Check {
            passed: outside == 0,
            value: outside as f64,
            threshold: 0.0,
        };

        let bound = self.size_bound(ball.index, atom.r_exponent)?;
        let ratio = atom.lr_norm() / bound;
        let size = Check {
            passed: ratio <= 1.0 + SIZE_RTOL,
            value: ratio,
            threshold: 1.0 + SIZE_RTOL,
        };

        let l1 = atom.l1_norm();
        let diam = d.ball_diameter(ball.index);
        let worst = multi_indices(n, atom.s_order)
            .par_iter()
            .map(|g| {
                let mut x = vec![0.0; n];
                let m = compensated_sum((0..f.len()).map(|k| {
                    fill_point(&f.axes, &shape, k, &mut x);
                    for (xv, c) in x.iter_mut().zip(&ball.center) {
                        *xv -= c;
                    }
                    f.weight(k) * f.values[k].re * monomial(&x, g)
                }));
                m.abs() / (l1 * diam.powi(degree(g) as i32))
            })
            .reduce(|| 0.0, f64::max);
        let moments = Check {
            passed: worst <= MOMENT_RTOL,
            value: worst,
            threshold: MOMENT_RTOL,
        };
        Ok(AtomCertificate {
            passed: support.passed && size.passed && moments.passed,
            support,
            size,
            moments,
        })
    }

    /// Atoms `k = 0..count` with `i0 = i0_range.0 + (k mod width)` and centers
    /// `A^{i0} u`, `u` uniform in `[-2, 2]^n`; atom `k` only depends on `(seed, k)`.
    pub fn generate_family(
        &self,
        count: usize,
        i0_range: (i32, i32),
        r: f64,
        s: u32,
        seed: u64,
    ) -> Result<Vec<Atom>> {
        (0..count)
            .into_par_iter()
            .map(|k| {
                let ball = family_ball(self.d, k, i0_range, seed);
                self.generate(&ball, r, s, derive_seed(seed, k as u64))
            })
            .collect()
    }
}

/// Ball of atom `k` in a family; see [`AtomFactory::generate_family`].
pub fn family_ball(d: &Dilation, k: usize, i0_range: (i32, i32), seed: u64) -> DilatedBall {
    let width = (i0_range.1 - i0_range.0 + 1).max(1) as usize;
    let i0 = i0_range.0 + (k % width) as i32;
    let mut rng = rng_for(derive_seed(seed, k as u64), 1 << 32);
    let u: Vec<f64> = (0..d.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
    DilatedBall::new(d.apply_power(i0, &u), i0)
}

/// SplitMix64 mixing of `(seed, k)`.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed
        ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

type InnerFn<'a> = dyn Fn(&[f64], &[f64]) -> f64 + 'a;

/// Modified Gram-Schmidt with one reorthogonalization pass. Returns the
/// orthonormal vectors and their coefficients in the original basis.
fn orthonormal_basis(phi: &[Vec<f64>], inner: &InnerFn<'_>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let m = phi.len();
    let mut vecs: Vec<Vec<f64>> = Vec::new();
    let mut trans: Vec<Vec<f64>> = Vec::new();
    for (j, p) in phi.iter().enumerate() {
        let mut v = p.clone();
        let mut t = vec![0.0; m];
        t[j] = 1.0;
        for _ in 0..2 {
            for (e, te) in vecs.iter().zip(&trans) {
                let c = inner(&v, e);
                for (vk, ek) in v.iter_mut().zip(e) {
                    *vk -= c * ek;
                }
                for (tk, sk) in t.iter_mut().zip(te) {
                    *tk -= c * sk;
                }
            }
        }
        let nrm = inner(&v, &v).sqrt();
        if nrm < 1e-13 {
            continue;
        }
        vecs.push(v.iter().map(|x| x / nrm).collect());
        trans.push(t.iter().map(|x| x / nrm).collect());
    }
    (vecs, trans)
}

pub fn generate_atom(
    d: &Dilation,
    pv: &ExponentVector,
    ball: &DilatedBall,
    r: f64,
    s: u32,
    seed: u64,
) -> Result<Atom> {
    AtomFactory::new(d, pv)?.generate(ball, r, s, seed)
}

pub fn verify_atom(d: &Dilation, pv: &ExponentVector, atom: &Atom) -> Result<AtomCertificate> {
    AtomFactory::with_nodes(d, pv, atom.base_nodes)?.verify(atom)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicSum {
    pub coefficients: Vec<Complex64>,
    pub atoms: Vec<Atom>,
}

impl AtomicSum {
    pub fn new(coefficients: Vec<Complex64>, atoms: Vec<Atom>) -> Result<Self> {
        if coefficients.len() != atoms.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for {} atoms",
                coefficients.len(),
                atoms.len()
            )));
        }
        Ok(AtomicSum {
            coefficients,
            atoms,
        })
    }

    pub fn single(atom: Atom) -> Self {
        AtomicSum {
            coefficients: vec![Complex64::new(1.0, 0.0)],
            atoms: vec![atom],
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn balls(&self) -> Vec<DilatedBall> {
        self.atoms.iter().map(|a| a.ball.clone()).collect()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        AtomicSum {
            coefficients: self.coefficients.iter().map(|l| l * c).collect(),
            atoms: self.atoms.clone(),
        }
    }

    /// Concatenation of two sums.
    pub fn join(&self, other: &AtomicSum) -> Self {
        let mut s = self.clone();
        s.coefficients.extend_from_slice(&other.coefficients);
        s.atoms.extend_from_slice(&other.atoms);
        s
    }

    pub fn eval(&self, d: &Dilation, x: &[f64]) -> Complex64 {
        self.coefficients
            .iter()
            .zip(&self.atoms)
            .map(|(l, a)| l * a.eval(d, x))
            .sum()
    }
}

/// Per-axis composite grid covering all boxes; each interval between box
/// edges gets the finest cell width among the boxes that cover it.
pub fn covering_axes(boxes: &[(Vec<f64>, Vec<f64>)], resolution: usize) -> Vec<Axis> {
    let n = boxes[0].0.len();
    (0..n)
        .map(|k| {
            let mut edges: Vec<f64> = boxes.iter().flat_map(|(lo, hi)| [lo[k], hi[k]]).collect();
            edges.sort_by(|a, b| a.total_cmp(b));
            edges.dedup();
            let cells: Vec<usize> = edges
                .windows(2)
                .map(|w| {
                    let mid = 0.5 * (w[0] + w[1]);
                    let h = boxes
                        .iter()
                        .filter(|(lo, hi)| lo[k] <= mid && mid <= hi[k])
                        .map(|(lo, hi)| (hi[k] - lo[k]) / resolution as f64)
                        .fold(f64::INFINITY, f64::min);
                    if h.is_finite() {
                        ((w[1] - w[0]) / h).ceil().max(1.0) as usize
                    } else {
                        0
                    }
                })
                .collect();
            Axis::piecewise_midpoint(&edges, &cells)
        })
        .collect()
}

/// The atomic norm expression of one decomposition, given its balls and coefficients.
pub fn atomic_norm_balls(
    d: &Dilation,
    pv: &ExponentVector,
    balls: &[DilatedBall],
    coefficients: &[Complex64],
    resolution: usize,
) -> Result<f64> {
    if balls.len() != coefficients.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} coefficients for {} balls",
            coefficients.len(),
            balls.len()
        )));
    }
    if balls.is_empty() {
        return Ok(0.0);
    }
    let pu = pv.p_underline();
    let mut weights = Vec::with_capacity(balls.len());
    for (b, l) in balls.iter().zip(coefficients) {
        let nrm = indicator_ball_norm(d, &DilatedBall::centered(d.dim(), b.index), pv, resolution)?;
        weights.push((l.norm() / nrm.value).powf(pu));
    }
    let boxes: Vec<_> = balls.iter().map(|b| b.bounding_box(d)).collect();
    let axes = covering_axes(&boxes, resolution);
    let shape = shape_of(&axes);
    let total: usize = shape.iter().product();
    let n = d.dim();
    let mags: Vec<f64> = (0..total)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |x, flat| {
                fill_point(&axes, &shape, flat, x);
                let s: f64 = balls
                    .iter()
                    .zip(&weights)
                    .filter(|(b, _)| b.contains(d, x))
                    .map(|(_, w)| w)
                    .sum();
                s.powf(1.0 / pu)
            },
        )
        .collect();
    nested_norm(&axes, &mags, pv)
}

pub fn atomic_norm(
    sum: &AtomicSum,
    d: &Dilation,
    pv: &ExponentVector,
    resolution: usize,
) -> Result<f64> {
    atomic_norm_balls(d, pv, &sum.balls(), &sum.coefficients, resolution)
}

pub const COEFFICIENT_SLACK: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSumReport {
    pub coefficient_sum: f64,
    pub atomic_norm: f64,
    pub passed: bool,
}

pub fn coefficient_sum_check(
    sum: &AtomicSum,
    d: &Dilation,
    pv: &ExponentVector,
    resolution: usize,
) -> Result<CoefficientSumReport> {
    pv.require_hardy_range()?;
    let lhs: f64 = sum.coefficients.iter().map(|l| l.norm()).sum();
    let rhs = atomic_norm(sum, d, pv, resolution)?;
    Ok(CoefficientSumReport {
        coefficient_sum: lhs,
        atomic_norm: rhs,
        passed: lhs <= (1.0 + COEFFICIENT_SLACK) * rhs,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AtomMetadata {
    ball: DilatedBall,
    r: String,
    s: u32,
    seed: u64,
    kappa: f64,
    base_nodes: usize,
    certified: bool,
    profile: Profile,
    certificate: Option<AtomCertificate>,
}

/// Writes `metadata.json` and `samples.csv` into `dir`.
pub fn write_archive(dir: &Path, atom: &Atom) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = AtomMetadata {
        ball: atom.ball.clone(),
        r: atom.r_exponent.to_string(),
        s: atom.s_order,
        seed: atom.seed,
        kappa: atom.kappa,
        base_nodes: atom.base_nodes,
        certified: atom.certified,
        profile: atom.profile.clone(),
        certificate: atom.certificate.clone(),
    };
    fs::write(
        dir.join("metadata.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    let file = fs::File::create(dir.join("samples.csv"))?;
    atom.samples.write_csv(std::io::BufWriter::new(file))
}

pub fn read_archive(dir: &Path) -> Result<Atom> {
    let meta: AtomMetadata = serde_json::from_str(&fs::read_to_string(dir.join("metadata.json"))?)?;
    let samples = GridFunction::read_csv(fs::File::open(dir.join("samples.csv"))?)?;
    let r_exponent = meta
        .r
        .parse()
        .map_err(|_| Error::Format(format!("bad r exponent '{}'", meta.r)))?;
    Ok(Atom {
        ball: meta.ball,
        r_exponent,
        s_order: meta.s,
        samples,
        certified: meta.certified,
        seed: meta.seed,
        kappa: meta.kappa,
        profile: meta.profile,
        base_nodes: meta.base_nodes,
        certificate: meta.certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::validate_dilation;

    fn diag23() -> Dilation {
        validate_dilation(&DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0])).unwrap()
    }

    #[test]
    fn vanishing_order_examples() {
        let d = diag23();
        let one = ExponentVector::constant(1.0, 2).unwrap();
        assert_eq!(min_vanishing_order(&d, &one), 0);
        let opts = crate::dilation::DilationOptions {
            lambda_minus: Some(1.5),
            ..Default::default()
        };
        let iso = Dilation::new(DMatrix::identity(2, 2) * 2.0, opts).unwrap();
        let half = ExponentVector::constant(0.5, 2).unwrap();
        assert_eq!(
            min_vanishing_order(&iso, &half),
            (4f64.ln() / 1.5f64.ln()).floor() as u32
        );
        assert_eq!(min_vanishing_order(&iso, &half), 3);
    }

    #[test]
    fn generated_atom_is_certified() {
        let d = diag23();
        let pv = ExponentVector::new(vec![0.5, 1.0]).unwrap();
        let s = min_vanishing_order(&d, &pv);
        let atom =
            generate_atom(&d, &pv, &DilatedBall::new(vec![0.3, -1.0], 1), 2.0, s, 7).unwrap();
        let cert = atom.certificate.clone().unwrap();
        assert!(atom.certified, "{cert:?}");
        assert!((cert.size.value - SIZE_SATURATION).abs() < 1e-12);
    }

    #[test]
    fn parameter_checks() {
        let d = diag23();
        let pv = ExponentVector::new(vec![0.5, 1.0]).unwrap();
        let ball = DilatedBall::centered(2, 0);
        assert!(generate_atom(&d, &pv, &ball, 1.0, 3, 1).is_err());
        assert!(generate_atom(&d, &pv, &ball, 2.0, 0, 1).is_err());
    }

    #[test]
    fn covering_grid_skips_gaps() {
        let boxes = vec![
            (vec![0.0], vec![1.0]),
            (vec![2.0], vec![2.5]),
            (vec![0.5], vec![0.75]),
        ];
        let axes = covering_axes(&boxes, 4);
        let a = &axes[0];
        let total: f64 = a.weights.iter().sum();
        assert!((total - 1.5).abs() < 1e-12);
        assert!(a.nodes.iter().all(|&x| !(1.0 < x && x < 2.0)));
        assert!(a.weights.iter().any(|&w| (w - 0.0625).abs() < 1e-15));
    }
}
