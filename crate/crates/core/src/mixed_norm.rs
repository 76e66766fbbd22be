//! Iterated mixed Lebesgue norms on tensor grids.
//!
//! The norm integrates `x_1` first and `x_n` last:
//! `( ∫ ... ( ∫ |f|^{p_1} dx_1 )^{p_2/p_1} ... dx_n )^{1/p_n}`.
//! An infinite exponent takes the maximum over the grid nodes of that axis,
//! which is a lower bound for the essential supremum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atom::DilatedBall;
use crate::dilation::Dilation;
use crate::error::{Error, Result, Saturation};
use crate::grid::{shape_of, Axis, GridFunction};
use crate::stats::compensated_sum;

/// Scale indices accepted by the indicator-norm routines.
pub const INDICATOR_INDEX_RANGE: (i32, i32) = (-60, 60);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ExponentVector {
    p: Vec<f64>,
}

impl TryFrom<Vec<f64>> for ExponentVector {
    type Error = Error;
    fn try_from(p: Vec<f64>) -> Result<Self> {
        ExponentVector::new(p)
    }
}

impl From<ExponentVector> for Vec<f64> {
    fn from(e: ExponentVector) -> Self {
        e.p
    }
}

impl ExponentVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: "exponent vector is empty".into(),
            });
        }
        if let Some(bad) = p.iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: format!("exponents must lie in (0, inf], got {bad}"),
            });
        }
        Ok(ExponentVector { p })
    }

    pub fn constant(p: f64, n: usize) -> Result<Self> {
        Self::new(vec![p; n])
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn p_minus(&self) -> f64 {
        self.p.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest finite exponent; infinite only when every entry is.
    pub fn p_plus(&self) -> f64 {
        let finite = self
            .p
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if finite.is_finite() {
            finite
        } else {
            f64::INFINITY
        }
    }

    pub fn p_underline(&self) -> f64 {
        self.p_minus().min(1.0)
    }

    /// All exponents lie in `(0, 1]`.
    pub fn is_hardy_range(&self) -> bool {
        self.p.iter().all(|&v| v <= 1.0)
    }

    pub fn require_hardy_range(&self) -> Result<()> {
        if self.is_hardy_range() {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "p",
                reason: format!("Hardy experiments need p in (0,1]^n, got {:?}", self.p),
            })
        }
    }

    /// The exponent vector scaled by `1/t`.
    pub fn divided(&self, t: f64) -> Result<Self> {
        Self::new(self.p.iter().map(|v| v / t).collect())
    }
}

/// Mixed norm of nonnegative samples `mags` laid out on `axes`.
pub fn nested_norm(axes: &[Axis], mags: &[f64], pv: &ExponentVector) -> Result<f64> {
    let shape = shape_of(axes);
    if pv.dim() != axes.len() {
        return Err(Error::ShapeMismatch(format!(
            "exponent vector has {} entries for a {}-dimensional grid",
            pv.dim(),
            axes.len()
        )));
    }
    if shape.iter().product::<usize>() != mags.len() {
        return Err(Error::ShapeMismatch(format!(
            "grid has {} points but {} samples",
            shape.iter().product::<usize>(),
            mags.len()
        )));
    }
    let mut cur: Vec<f64> = mags.to_vec();
    for (k, axis) in axes.iter().enumerate() {
        let len = shape[k];
        let stride = cur.len() / len;
        let p = pv.p()[k];
        let reduce = |j: usize| -> f64 {
            if p.is_infinite() {
                (0..len).map(|i| cur[i * stride + j]).fold(0.0, f64::max)
            } else {
                let s = compensated_sum(
                    (0..len).map(|i| axis.weights[i] * cur[i * stride + j].powf(p)),
                );
                s.powf(1.0 / p)
            }
        };
        cur = if stride >= 64 {
            (0..stride).into_par_iter().map(reduce).collect()
        } else {
            (0..stride).map(reduce).collect()
        };
    }
    Ok(cur[0])
}

pub fn mixed_norm_eval(f: &GridFunction, pv: &ExponentVector) -> Result<f64> {
    f.check()?;
    let mags: Vec<f64> = f.values.iter().map(|v| v.norm()).collect();
    nested_norm(&f.axes, &mags, pv)
}

/// Plain `L^p` norm with the product weights.
pub fn lp_norm(f: &GridFunction, p: f64) -> f64 {
    if p.is_infinite() {
        return f.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    }
    let s = compensated_sum((0..f.len()).map(|k| f.weight(k) * f.values[k].norm().powf(p)));
    s.powf(1.0 / p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorNorm {
    pub value: f64,
    /// Relative change between resolution `res` and `2·res`.
    pub rel_err: f64,
}

pub(crate) fn check_index(i: i32) -> Result<()> {
    let (lo, hi) = INDICATOR_INDEX_RANGE;
    if i < lo || i > hi {
        return Err(Error::IndexSaturation {
            min: lo,
            max: hi,
            direction: if i < lo {
                Saturation::TooSmall
            } else {
                Saturation::TooLarge
            },
        });
    }
    Ok(())
}

/// Cell-centre rasterization of `1_{B_i}` on its bounding box, `res` cells per axis.
pub fn rasterize_ball(d: &Dilation, i: i32, res: usize) -> (Vec<Axis>, Vec<f64>) {
    let hw = d.ball_half_widths(i);
    let axes: Vec<Axis> = hw.iter().map(|&h| Axis::midpoint(-h, h, res)).collect();
    let shape = shape_of(&axes);
    let total: usize = shape.iter().product();
    let n = axes.len();
    let mags = (0..total)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |x, flat| {
                crate::grid::fill_point(&axes, &shape, flat, x);
                if d.ball_membership(x, i) {
                    1.0
                } else {
                    0.0
                }
            },
        )
        .collect();
    (axes, mags)
}

/// `‖1_{x0 + B_i}‖_{L^p⃗}`; the norm is translation invariant so the ball is
/// rasterized at the origin. Evaluated at `res` and `2·res`.
pub fn indicator_ball_norm(
    d: &Dilation,
    ball: &DilatedBall,
    pv: &ExponentVector,
    resolution: usize,
) -> Result<IndicatorNorm> {
    if resolution < 32 {
        return Err(Error::InvalidParameter {
            name: "resolution",
            reason: format!("need at least 32 nodes per axis, got {resolution}"),
        });
    }
    check_index(ball.index)?;
    let coarse = {
        let (axes, mags) = rasterize_ball(d, ball.index, resolution);
        nested_norm(&axes, &mags, pv)?
    };
    let fine = {
        let (axes, mags) = rasterize_ball(d, ball.index, 2 * resolution);
        nested_norm(&axes, &mags, pv)?
    };
    Ok(IndicatorNorm {
        value: fine,
        rel_err: ((fine - coarse) / fine).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorBoundRow {
    pub i: i32,
    pub norm: f64,
    pub est_rel_err: f64,
    /// `‖1_{B_i}‖^{-1} / max{b^{-i/p₋}, b^{-i/p₊}}`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorBoundReport {
    pub rows: Vec<IndicatorBoundRow>,
    pub max_ratio: f64,
    /// Relative growth of the supremum when the two end indices are added.
    pub drift: f64,
    pub passed: bool,
}

pub const INDICATOR_DRIFT_LIMIT: f64 = 0.25;

pub fn indicator_bound_check(
    d: &Dilation,
    pv: &ExponentVector,
    i_range: (i32, i32),
    resolution: usize,
) -> Result<IndicatorBoundReport> {
    pv.require_hardy_range()?;
    let (pm, pp) = (pv.p_minus(), pv.p_plus());
    let mut rows = Vec::new();
    for i in i_range.0..=i_range.1 {
        let ball = DilatedBall::centered(d.dim(), i);
        let nrm = indicator_ball_norm(d, &ball, pv, resolution)?;
        let envelope = d.b().powf(-i as f64 / pm).max(d.b().powf(-i as f64 / pp));
        rows.push(IndicatorBoundRow {
            i,
            norm: nrm.value,
            est_rel_err: nrm.rel_err,
            ratio: 1.0 / nrm.value / envelope,
        });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let inner = if rows.len() > 2 {
        rows[1..rows.len() - 1]
            .iter()
            .map(|r| r.ratio)
            .fold(0.0, f64::max)
    } else {
        max_ratio
    };
    let drift = max_ratio / inner - 1.0;
    Ok(IndicatorBoundReport {
        passed: max_ratio.is_finite() && drift < INDICATOR_DRIFT_LIMIT,
        rows,
        max_ratio,
        drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn rectangle_law() {
        let axes = vec![Axis::midpoint(0.0, 2.0, 40), Axis::midpoint(0.0, 3.0, 30)];
        let f = GridFunction::from_fn(axes, |_| Complex64::new(1.0, 0.0));
        let pv = ExponentVector::new(vec![1.0, 2.0]).unwrap();
        let v = mixed_norm_eval(&f, &pv).unwrap();
        assert!((v - 2.0 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn infinite_axis_is_grid_sup() {
        let axes = vec![Axis::midpoint(0.0, 1.0, 10), Axis::midpoint(0.0, 2.0, 4)];
        let f = GridFunction::from_fn(axes, |x| Complex64::new(x[1], 0.0));
        let pv = ExponentVector::new(vec![1.0, f64::INFINITY]).unwrap();
        assert!((mixed_norm_eval(&f, &pv).unwrap() - 1.75).abs() < 1e-14);
        assert_eq!(pv.p_plus(), 1.0);
        assert_eq!(pv.p_underline(), 1.0);
    }

    #[test]
    fn exponent_validation() {
        assert!(ExponentVector::new(vec![0.0, 1.0]).is_err());
        assert!(ExponentVector::new(vec![f64::NAN]).is_err());
        let pv = ExponentVector::new(vec![0.5, 2.0]).unwrap();
        assert_eq!(
            (pv.p_minus(), pv.p_plus(), pv.p_underline()),
            (0.5, 2.0, 0.5)
        );
        assert!(indicator_bound_check(
            &crate::dilation::validate_dilation(&(nalgebra::DMatrix::identity(2, 2) * 2.0))
                .unwrap(),
            &pv,
            (0, 0),
            32
        )
        .is_err());
    }

    #[test]
    fn shape_mismatch() {
        let axes = vec![Axis::midpoint(0.0, 1.0, 4)];
        let pv = ExponentVector::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            nested_norm(&axes, &[1.0; 4], &pv),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
