//! Expansive dilation matrices and the ellipsoid geometry they generate.
//!
//! A [`Dilation`] wraps a real square matrix `A` whose eigenvalues all have
//! modulus greater than one. Validation computes the spectral data
//! (`b = |det A|`, sorted eigenvalue moduli, the bracketing constants
//! `lambda_minus` / `lambda_plus`) and builds an [`EllipsoidForm`] `Δ` of unit
//! volume with `Δ ⊂ rΔ ⊂ AΔ`. The dilated balls are `B_i = A^i Δ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance of the open-ball membership test. Boundary points are
/// always outside.
pub const MEMBERSHIP_RTOL: f64 = 1e-12;

/// Eigenvalue moduli at or below `1 + EXPANSIVE_EPS` are rejected.
pub const EXPANSIVE_EPS: f64 = 1e-9;

const SERIES_MAX_TERMS: usize = 10_000;
const SERIES_TOL: f64 = 1e-14;
const CERTIFICATE_TOL: f64 = 1e-10;

/// Scale indices whose ball forms and matrix powers are precomputed.
const CACHE_RADIUS: i32 = 72;

/// User overrides for the constants the validation would otherwise choose.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DilationOptions {
    pub lambda_minus: Option<f64>,
    pub lambda_plus: Option<f64>,
    /// Geometric ratio of the ellipsoid series; must satisfy `1 < delta <= lambda_minus^2`.
    pub delta: Option<f64>,
}

/// Quadratic form `P` and radius `s0` describing `Δ = {x : xᵀPx < s0²}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidForm {
    pub p: DMatrix<f64>,
    pub radius: f64,
    pub delta: f64,
    /// Number of series terms summed.
    pub terms: usize,
    /// Largest eigenvalue of `P^{-1/2} A^{-T} P A^{-1} P^{-1/2}`; certified `<= 1/delta`.
    pub contraction: f64,
}

impl EllipsoidForm {
    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// Volume from the closed formula `ω_n s0^n / sqrt(det P)`.
    pub fn volume(&self) -> f64 {
        let n = self.dim();
        unit_ball_volume(n) * self.radius.powi(n as i32) / self.p.determinant().sqrt()
    }

    /// `|x|_P = sqrt(xᵀPx)`.
    pub fn norm(&self, x: &[f64]) -> f64 {
        quadratic_form(&self.p, x).sqrt()
    }
}

/// Validated expansive matrix together with its spectral data and ellipsoid.
#[derive(Debug, Clone)]
pub struct Dilation {
    matrix: DMatrix<f64>,
    n: usize,
    b: f64,
    lambda_abs: Vec<f64>,
    lambda_minus: f64,
    lambda_plus: f64,
    ellipsoid: EllipsoidForm,
    expansion_r: f64,
    options: DilationOptions,
    p_inv: DMatrix<f64>,
    /// `A^i` for `i` in `[-CACHE_RADIUS, CACHE_RADIUS]`.
    powers: Vec<DMatrix<f64>>,
    /// `A^{-i T} P A^{-i}` for `i` in `[-CACHE_RADIUS, CACHE_RADIUS]`.
    ball_forms: Vec<DMatrix<f64>>,
}

/// JSON-friendly summary of the spectral data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub matrix: Vec<Vec<f64>>,
    pub b: f64,
    pub lambda_abs: Vec<f64>,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub expansion_r: f64,
}

/// Validates `matrix` with default constants.
pub fn validate_dilation(matrix: &DMatrix<f64>) -> Result<Dilation> {
    Dilation::new(matrix.clone(), DilationOptions::default())
}

/// Returns the validated dilation for `Aᵀ`, carrying over the same overrides.
pub fn transpose_dilation(d: &Dilation) -> Dilation {
    Dilation::new(d.matrix.transpose(), d.options)
        .expect("transpose of an expansive matrix is expansive")
}

impl Dilation {
    pub fn new(matrix: DMatrix<f64>, options: DilationOptions) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.ncols(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "dilation matrix",
            });
        }

        let det = matrix.determinant();
        let scale = matrix.norm().max(f64::MIN_POSITIVE);
        if det.abs() <= f64::EPSILON * scale.powi(n as i32) {
            return Err(Error::Singular { det });
        }

        let lambda_abs = eigenvalue_moduli(&matrix)?;
        let min_modulus = lambda_abs[0];
        if min_modulus <= 1.0 + EXPANSIVE_EPS {
            return Err(Error::NotExpansive { min_modulus });
        }
        let b = det.abs();
        let product: f64 = lambda_abs.iter().product();
        if ((b - product) / b).abs() > 1e-10 {
            return Err(Error::InvalidParameter {
                name: "matrix",
                reason: format!("eigenvalue product {product} disagrees with |det| {b}"),
            });
        }

        let top = lambda_abs[n - 1];
        let lambda_minus = options
            .lambda_minus
            .unwrap_or(1.0 + 0.95 * (min_modulus - 1.0));
        let lambda_plus = options.lambda_plus.unwrap_or(1.05 * top);
        if !(lambda_minus > 1.0 && lambda_minus < min_modulus) {
            return Err(Error::InvalidParameter {
                name: "lambda_minus",
                reason: format!("need 1 < {lambda_minus} < {min_modulus}"),
            });
        }
        if !(lambda_plus > top) {
            return Err(Error::InvalidParameter {
                name: "lambda_plus",
                reason: format!("need {lambda_plus} > {top}"),
            });
        }

        let lm2 = lambda_minus * lambda_minus;
        let delta = match options.delta {
            Some(d) => d,
            None if 0.999 * lm2 > 1.0 => 0.999 * lm2,
            None => 0.5 * (1.0 + lm2),
        };
        if !(delta > 1.0 && delta <= lm2) {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: format!("need 1 < {delta} <= lambda_minus^2 = {lm2}"),
            });
        }

        let ellipsoid = build_ellipsoid(&matrix, delta)?;
        let p_inv = ellipsoid
            .p
            .clone()
            .try_inverse()
            .ok_or(Error::Singular { det: 0.0 })?;

        let inv = matrix
            .clone()
            .try_inverse()
            .ok_or(Error::Singular { det })?;
        let k = CACHE_RADIUS as usize;
        let mut powers = vec![DMatrix::identity(n, n); 2 * k + 1];
        for j in 1..=k {
            powers[k + j] = &powers[k + j - 1] * &matrix;
            powers[k - j] = &powers[k - j + 1] * &inv;
        }
        let ball_forms = (0..=2 * k)
            .map(|idx| {
                // B_i form uses A^{-i}, i.e. powers[k - i].
                let m = &powers[2 * k - idx];
                symmetrize(m.transpose() * &ellipsoid.p * m)
            })
            .collect();

        Ok(Dilation {
            n,
            b,
            lambda_abs,
            lambda_minus,
            lambda_plus,
            expansion_r: delta.sqrt(),
            ellipsoid,
            options,
            p_inv,
            powers,
            ball_forms,
            matrix,
        })
    }

    /// Builds a dilation from row-major rows.
    pub fn from_rows(rows: &[Vec<f64>], options: DilationOptions) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: r.len(),
                });
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Dilation::new(DMatrix::from_row_slice(n, n, &flat), options)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn lambda_abs(&self) -> &[f64] {
        &self.lambda_abs
    }
    pub fn lambda_minus(&self) -> f64 {
        self.lambda_minus
    }
    pub fn lambda_plus(&self) -> f64 {
        self.lambda_plus
    }
    pub fn ellipsoid(&self) -> &EllipsoidForm {
        &self.ellipsoid
    }
    pub fn expansion_r(&self) -> f64 {
        self.expansion_r
    }
    pub fn options(&self) -> DilationOptions {
        self.options
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|r| (0..self.n).map(|c| self.matrix[(r, c)]).collect())
            .collect()
    }

    pub fn spectral_report(&self) -> SpectralReport {
        SpectralReport {
            matrix: self.rows(),
            b: self.b,
            lambda_abs: self.lambda_abs.clone(),
            lambda_minus: self.lambda_minus,
            lambda_plus: self.lambda_plus,
            expansion_r: self.expansion_r,
        }
    }

    /// `b^i` computed by exact index arithmetic on the exponent.
    pub fn b_pow(&self, i: i32) -> f64 {
        self.b.powi(i)
    }

    /// The matrix power `A^i` (negative `i` means powers of the inverse).
    pub fn power(&self, i: i32) -> DMatrix<f64> {
        if i.abs() <= CACHE_RADIUS {
            self.powers[(i + CACHE_RADIUS) as usize].clone()
        } else {
            let base = if i > 0 {
                self.matrix.clone()
            } else {
                self.powers[(CACHE_RADIUS - 1) as usize].clone()
            };
            matrix_power(&base, i.unsigned_abs())
        }
    }

    /// Applies `A^i` to `x`.
    pub fn apply_power(&self, i: i32, x: &[f64]) -> Vec<f64> {
        if i.abs() <= CACHE_RADIUS {
            mat_vec(&self.powers[(i + CACHE_RADIUS) as usize], x)
        } else {
            mat_vec(&self.power(i), x)
        }
    }

    fn ball_form(&self, i: i32) -> std::borrow::Cow<'_, DMatrix<f64>> {
        if i.abs() <= CACHE_RADIUS {
            std::borrow::Cow::Borrowed(&self.ball_forms[(i + CACHE_RADIUS) as usize])
        } else {
            let m = self.power(-i);
            std::borrow::Cow::Owned(symmetrize(m.transpose() * &self.ellipsoid.p * m))
        }
    }

    /// Squared ellipsoid norm `|A^{-i} x|_P^2`.
    pub fn scaled_form(&self, x: &[f64], i: i32) -> f64 {
        quadratic_form(&self.ball_form(i), x)
    }

    /// Open-ball membership `x ∈ B_i`, with the boundary counted as outside.
    pub fn ball_membership(&self, x: &[f64], i: i32) -> bool {
        let s0 = self.ellipsoid.radius;
        let limit = s0 - MEMBERSHIP_RTOL * s0;
        self.scaled_form(x, i).sqrt() < limit
    }

    /// Membership in the translated ball `center + B_i`.
    pub fn translated_membership(&self, x: &[f64], center: &[f64], i: i32) -> bool {
        let d: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
        self.ball_membership(&d, i)
    }

    /// Half-widths of the axis-aligned bounding box of `B_i`.
    pub fn ball_half_widths(&self, i: i32) -> Vec<f64> {
        let m = self.power(i);
        let cov = &m * &self.p_inv * m.transpose();
        let s0 = self.ellipsoid.radius;
        (0..self.n)
            .map(|k| s0 * cov[(k, k)].max(0.0).sqrt())
            .collect()
    }

    /// Euclidean diameter of `B_i` (twice the largest semi-axis).
    pub fn ball_diameter(&self, i: i32) -> f64 {
        let m = self.power(i);
        let cov = symmetrize(&m * &self.p_inv * m.transpose());
        let top = cov
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(0.0_f64, f64::max);
        2.0 * self.ellipsoid.radius * top.sqrt()
    }
}

/// Sums `P = Σ_j δ^j (A^{-j})ᵀ A^{-j}` and scales the radius so `|Δ| = 1`.
pub fn build_ellipsoid(matrix: &DMatrix<f64>, delta: f64) -> Result<EllipsoidForm> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: matrix.ncols(),
        });
    }
    if !(delta.is_finite() && delta > 1.0) {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: format!("need delta > 1, got {delta}"),
        });
    }
    let inv = matrix.clone().try_inverse().ok_or(Error::Singular {
        det: matrix.determinant(),
    })?;

    let mut p = DMatrix::<f64>::identity(n, n);
    // m = δ^{j/2} A^{-j}, so each term is mᵀm.
    let step = &inv * delta.sqrt();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut terms = 1;
    loop {
        if terms >= SERIES_MAX_TERMS {
            return Err(Error::SeriesDivergence { delta, terms });
        }
        m = &m * &step;
        let term = m.transpose() * &m;
        let size = term.norm();
        if !size.is_finite() || size > 1e200 {
            return Err(Error::SeriesDivergence { delta, terms });
        }
        p += &term;
        terms += 1;
        // Frobenius norm bounds the spectral norm from above.
        if size < SERIES_TOL {
            break;
        }
    }
    let p = symmetrize(p);

    let eig = p.clone().symmetric_eigenvalues();
    if eig.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "ellipsoid",
            reason: "quadratic form is not positive definite".into(),
        });
    }
    let det_p = p.determinant();
    let radius = (det_p.sqrt() / unit_ball_volume(n)).powf(1.0 / n as f64);

    let contraction = contraction_eigenvalue(&inv, &p)?;
    if contraction > 1.0 / delta + CERTIFICATE_TOL {
        return Err(Error::InvalidParameter {
            name: "ellipsoid",
            reason: format!(
                "contraction certificate failed: {contraction} > 1/delta = {}",
                1.0 / delta
            ),
        });
    }

    Ok(EllipsoidForm {
        p,
        radius,
        delta,
        terms,
        contraction,
    })
}

/// Largest eigenvalue of `P^{-1/2} A^{-T} P A^{-1} P^{-1/2}` via a Cholesky
/// factor of `P`.
pub fn contraction_eigenvalue(inv: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<f64> {
    let c = inv.transpose() * p * inv;
    let chol = p.clone().cholesky().ok_or(Error::InvalidParameter {
        name: "ellipsoid",
        reason: "quadratic form has no Cholesky factor".into(),
    })?;
    let l_inv = chol.l().try_inverse().ok_or(Error::Singular { det: 0.0 })?;
    let s = symmetrize(&l_inv * c * l_inv.transpose());
    Ok(s.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::MIN, f64::max))
}

/// Eigenvalue moduli from the real Schur form, ascending.
pub fn eigenvalue_moduli(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    let schur = matrix
        .clone()
        .try_schur(f64::EPSILON, 10_000)
        .ok_or(Error::InvalidParameter {
            name: "matrix",
            reason: "Schur decomposition did not converge".into(),
        })?;
    let mut moduli: Vec<f64> = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect();
    moduli.sort_by(|a, b| a.total_cmp(b));
    Ok(moduli)
}

/// Volume of the Euclidean unit ball in `n` dimensions.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / n as f64 * unit_ball_volume(n - 2),
    }
}

pub(crate) fn quadratic_form(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for c in 0..n {
        let mut col = 0.0;
        for r in 0..n {
            col += m[(r, c)] * x[r];
        }
        acc += col * x[c];
    }
    acc
}

pub(crate) fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let n = m.nrows();
    (0..n)
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)] * x[c]).sum())
        .collect()
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn matrix_power(base: &DMatrix<f64>, mut e: u32) -> DMatrix<f64> {
    let n = base.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut sq = base.clone();
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &sq;
        }
        sq = &sq * &sq;
        e >>= 1;
    }
    result
}
