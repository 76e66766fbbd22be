//! The step homogeneous quasi-norm `ρ(x) = b^i` for `x ∈ B_{i+1} \ B_i`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dilation::{transpose_dilation, Dilation};
use crate::error::{Error, Result, Saturation};
use crate::sampling::{euclid, rng_for, sample_shell};

pub const DEFAULT_INDEX_RANGE: (i32, i32) = (-60, 60);

/// Resolved scale index of a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RhoIndex {
    Zero,
    Step(i32),
}

impl RhoIndex {
    pub fn step(self) -> Option<i32> {
        match self {
            RhoIndex::Zero => None,
            RhoIndex::Step(i) => Some(i),
        }
    }

    pub fn value(self, b: f64) -> f64 {
        match self {
            RhoIndex::Zero => 0.0,
            RhoIndex::Step(i) => b.powi(i),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuasiNormEvaluator {
    dilation: Dilation,
    i_min: i32,
    i_max: i32,
}

impl QuasiNormEvaluator {
    pub fn new(dilation: Dilation) -> Self {
        Self::with_range(dilation, DEFAULT_INDEX_RANGE.0, DEFAULT_INDEX_RANGE.1)
    }

    pub fn with_range(dilation: Dilation, i_min: i32, i_max: i32) -> Self {
        assert!(i_min <= i_max, "empty index range");
        QuasiNormEvaluator {
            dilation,
            i_min,
            i_max,
        }
    }

    /// Evaluator for `ρ*`, built on the transpose dilation.
    pub fn transpose_of(d: &Dilation) -> Self {
        Self::new(transpose_dilation(d))
    }

    pub fn dilation(&self) -> &Dilation {
        &self.dilation
    }

    pub fn index_range(&self) -> (i32, i32) {
        (self.i_min, self.i_max)
    }

    /// Index `i` with `x ∈ B_{i+1} \ B_i`, by binary search over the nested balls.
    pub fn index(&self, x: &[f64]) -> Result<RhoIndex> {
        if x.len() != self.dilation.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dilation.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "point" });
        }
        if x.iter().all(|&v| v == 0.0) {
            return Ok(RhoIndex::Zero);
        }
        let m = |j: i32| self.dilation.ball_membership(x, j);
        let saturation = |direction| Error::IndexSaturation {
            min: self.i_min,
            max: self.i_max,
            direction,
        };
        // Smallest j in (lo, hi] with x ∈ B_j; m(lo) is false, m(hi) is true.
        let mut lo = self.i_min;
        let mut hi = self.i_max + 1;
        if m(lo) {
            return Err(saturation(Saturation::TooSmall));
        }
        if !m(hi) {
            return Err(saturation(Saturation::TooLarge));
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if m(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if !m(hi + 1) {
            return Err(Error::NonMonotoneMembership { index: hi });
        }
        Ok(RhoIndex::Step(hi - 1))
    }

    pub fn rho(&self, x: &[f64]) -> Result<f64> {
        Ok(self.index(x)?.value(self.dilation.b()))
    }
}

/// Empirical constants for one regime of the Euclidean comparison.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegimeBounds {
    pub count: usize,
    /// Smallest `|x| / ρ^{e_low}`.
    pub min_lower_ratio: f64,
    /// Largest `|x| / ρ^{e_high}`.
    pub max_upper_ratio: f64,
    /// `max(1 / min_lower_ratio, max_upper_ratio)`.
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub exponent_minus: f64,
    pub exponent_plus: f64,
    /// Regime `ρ(x) > 1`: lower exponent `ln λ₋ / ln b`, upper `ln λ₊ / ln b`.
    pub large: RegimeBounds,
    /// Regime `ρ(x) <= 1`: exponents swapped.
    pub small: RegimeBounds,
    pub constant: f64,
}

/// Draws points with `ρ = b^j` for `j` uniform in `j_range` and records the
/// extremal ratios `|x| / ρ^e` per regime.
pub fn lemma33_envelope(
    e: &QuasiNormEvaluator,
    sample_count: usize,
    j_range: (i32, i32),
    seed: u64,
) -> Result<Envelope> {
    if sample_count < 1000 {
        return Err(Error::InvalidParameter {
            name: "sample_count",
            reason: format!("need at least 1000, got {sample_count}"),
        });
    }
    let d = e.dilation();
    let lb = d.b().ln();
    let em = d.lambda_minus().ln() / lb;
    let ep = d.lambda_plus().ln() / lb;

    let samples: Vec<(f64, f64)> = (0..sample_count)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, k as u64);
            let j = rng.random_range(j_range.0..=j_range.1);
            let x = sample_shell(d, j, &mut rng);
            let rho = e.rho(&x)?;
            Ok((euclid(&x), rho))
        })
        .collect::<Result<_>>()?;

    let mut large = RegimeBounds {
        min_lower_ratio: f64::INFINITY,
        ..Default::default()
    };
    let mut small = large.clone();
    for &(norm, rho) in &samples {
        let (reg, lo, hi) = if rho > 1.0 {
            (&mut large, em, ep)
        } else {
            (&mut small, ep, em)
        };
        reg.count += 1;
        reg.min_lower_ratio = reg.min_lower_ratio.min(norm / rho.powf(lo));
        reg.max_upper_ratio = reg.max_upper_ratio.max(norm / rho.powf(hi));
    }
    for reg in [&mut large, &mut small] {
        reg.constant = if reg.count == 0 {
            0.0
        } else {
            (1.0 / reg.min_lower_ratio).max(reg.max_upper_ratio)
        };
    }
    Ok(Envelope {
        exponent_minus: em,
        exponent_plus: ep,
        constant: large.constant.max(small.constant),
        large,
        small,
    })
}

/// Ratio `ρ(x+y) / (ρ(x) + ρ(y))`, with `0` when both sides vanish.
pub fn quasi_triangle_ratio(e: &QuasiNormEvaluator, x: &[f64], y: &[f64]) -> Result<f64> {
    let s: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
    let den = e.rho(x)? + e.rho(y)?;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(e.rho(&s)? / den)
}

/// Largest sampled quasi-triangle ratio over pairs drawn from shells `j ∈ j_range`.
pub fn quasi_triangle_constant(
    e: &QuasiNormEvaluator,
    sample_count: usize,
    j_range: (i32, i32),
    seed: u64,
) -> Result<f64> {
    if sample_count < 1000 {
        return Err(Error::InvalidParameter {
            name: "sample_count",
            reason: format!("need at least 1000, got {sample_count}"),
        });
    }
    let d = e.dilation();
    let ratios: Vec<f64> = (0..sample_count)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, k as u64);
            let jx = rng.random_range(j_range.0..=j_range.1);
            let jy = rng.random_range(j_range.0..=j_range.1);
            let x = sample_shell(d, jx, &mut rng);
            let y = sample_shell(d, jy, &mut rng);
            quasi_triangle_ratio(e, &x, &y)
        })
        .collect::<Result<_>>()?;
    let c = ratios.into_iter().fold(0.0, f64::max);
    if !c.is_finite() {
        return Err(Error::NonFinite {
            what: "quasi-triangle constant",
        });
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn eval(m: &[f64]) -> QuasiNormEvaluator {
        let d = crate::dilation::validate_dilation(&DMatrix::from_row_slice(2, 2, m)).unwrap();
        QuasiNormEvaluator::new(d)
    }

    fn scan(e: &QuasiNormEvaluator, x: &[f64]) -> Option<i32> {
        let d = e.dilation();
        (-20..=20).find(|&j| d.ball_membership(x, j)).map(|j| j - 1)
    }

    #[test]
    fn zero_and_boundary() {
        let e = eval(&[2.0, 0.0, 0.0, 2.0]);
        assert_eq!(e.rho(&[0.0, 0.0]).unwrap(), 0.0);
        let x = [std::f64::consts::PI.powf(-0.5), 0.0];
        assert_eq!(e.index(&x).unwrap(), RhoIndex::Step(0));
        assert_eq!(scan(&e, &x), Some(0));
        assert_eq!(e.rho(&x).unwrap(), 1.0);
    }

    #[test]
    fn diagonal_matches_scan() {
        let e = eval(&[2.0, 0.0, 0.0, 3.0]);
        let x = [0.3, 0.4];
        assert_eq!(e.index(&x).unwrap().step(), scan(&e, &x));
        let es = QuasiNormEvaluator::transpose_of(e.dilation());
        assert_eq!(es.rho(&x).unwrap(), e.rho(&x).unwrap());
    }

    #[test]
    fn saturation_is_reported() {
        let d = crate::dilation::validate_dilation(&DMatrix::from_row_slice(
            2,
            2,
            &[2.0, 0.0, 0.0, 2.0],
        ))
        .unwrap();
        let e = QuasiNormEvaluator::with_range(d, -3, 3);
        assert!(matches!(
            e.index(&[1e3, 0.0]),
            Err(Error::IndexSaturation {
                direction: Saturation::TooLarge,
                ..
            })
        ));
        assert!(matches!(
            e.index(&[1e-4, 0.0]),
            Err(Error::IndexSaturation {
                direction: Saturation::TooSmall,
                ..
            })
        ));
    }

    #[test]
    fn triangle_special_pairs() {
        let e = eval(&[2.0, 0.0, 0.0, 3.0]);
        let x = [0.7, -0.2];
        assert_eq!(quasi_triangle_ratio(&e, &x, &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(quasi_triangle_ratio(&e, &x, &[-0.7, 0.2]).unwrap(), 0.0);
    }

    #[test]
    fn isotropic_envelope_is_tight() {
        let e = eval(&[2.0, 0.0, 0.0, 2.0]);
        let env = lemma33_envelope(&e, 1000, (-8, 8), 1).unwrap();
        assert!(env.constant.is_finite() && env.constant > 0.0);
        assert!(env.large.count + env.small.count == 1000);
    }
}
