//! Vanishing of `F(x)/ρ*(x)^{1/p₊-1}` at the origin.
//!
//! Abscissae lie on straight rays `x = t ω`, `t_j = t_0 λ^{-j}` with `λ` the
//! largest eigenvalue modulus. Near the origin the top eigendirection sets
//! `ρ*` once `ρ* < 1`, so consecutive points drop by about one `ρ*`-shell.
//! `t_0` is the first such radius with
//! `ρ*(t_0 ω) <= b^{-max(i_top+first, first)}`: below the scale of the smallest
//! ball in the sum and deep inside the small-`ρ*` regime, then moved further
//! in until `ρ*` drops exactly one shell per step. Before the top
//! eigendirection alone decides shell membership a ray skips shells
//! irregularly, which shows up as fit residual.
//!
//! Rays rather than dilation orbits: along an orbit the leading Taylor terms
//! decay at different rates and can cancel, while on a ray `F(tω)` is
//! `t^{s+1}P(ω)` to leading order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lemma31::{FIT_RMS_LIMIT, SLOPE_TOLERANCE};
use super::{certification_verdict, EstimateReport, SlopeSummary, Table};
use crate::atom::AtomicSum;
use crate::dilation::{transpose_dilation, Dilation};
use crate::error::{Error, Result};
use crate::fourier::AtomTransform;
use crate::mixed_norm::ExponentVector;
use crate::quasi_norm::{QuasiNormEvaluator, DEFAULT_INDEX_RANGE};
use crate::sampling::{random_direction, rng_for};
use crate::stats::{linear_fit, LinearFit};

pub const DECAY_FACTOR_LIMIT: f64 = 0.05;
/// Consecutive unit shell steps required before the first abscissa.
const SETTLE_STEPS: usize = 6;
const MAX_SETTLE_WALK: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayOptions {
    pub rays: usize,
    /// The first point has `ρ* <= b^{-(i_top+first)}`.
    pub first: i32,
    pub points: usize,
}

impl Default for DecayOptions {
    fn default() -> Self {
        DecayOptions {
            rays: 8,
            first: 16,
            points: 16,
        }
    }
}

/// `β = (s+1) ln λ₋ / ln b + 1 - 1/p₊`.
pub fn origin_decay_beta(d: &Dilation, pv: &ExponentVector, s: u32) -> f64 {
    f64::from(s + 1) * d.lambda_minus().ln() / d.b().ln() + 1.0 - 1.0 / pv.p_plus()
}

struct RayResult {
    sum: usize,
    ray: usize,
    fit: Option<LinearFit>,
    /// `R(last) / R(first)` over the resolved points.
    factor: f64,
    excluded: usize,
    rows: Vec<Vec<f64>>,
}

pub fn verify_origin_decay(
    sums: &[AtomicSum],
    d: &Dilation,
    pv: &ExponentVector,
    opts: &DecayOptions,
    seed: u64,
) -> Result<EstimateReport> {
    pv.require_hardy_range()?;
    if sums.iter().any(AtomicSum::is_empty) || sums.is_empty() {
        return Err(Error::InvalidParameter {
            name: "sums",
            reason: "need nonempty sums".into(),
        });
    }
    // Settled rays can sit far below the default index range.
    let rho = QuasiNormEvaluator::with_range(transpose_dilation(d), -400, DEFAULT_INDEX_RANGE.1);
    let ep = 1.0 / pv.p_plus() - 1.0;
    let s_min = sums
        .iter()
        .flat_map(|s| s.atoms.iter().map(|a| a.s_order))
        .min()
        .unwrap_or(0);
    let beta = origin_decay_beta(d, pv, s_min);

    let jobs: Vec<(usize, usize)> = (0..sums.len())
        .flat_map(|k| (0..opts.rays).map(move |r| (k, r)))
        .collect();
    let results: Vec<RayResult> = jobs
        .par_iter()
        .map(|&(k, ray)| -> Result<RayResult> {
            let sum = &sums[k];
            let top = sum.atoms.iter().map(|a| a.ball.index).max().unwrap_or(0);
            let mut rng = rng_for(seed, (k * opts.rays + ray) as u64);
            let u = random_direction(d.dim(), &mut rng);
            let lam = d.lambda_abs().iter().copied().fold(0.0, f64::max);
            let target = d.b_pow(-(top + opts.first).max(opts.first));
            let at = |t: f64| u.iter().map(|v| v * t).collect::<Vec<_>>();
            let mut t0 = 1.0;
            while rho.rho(&at(t0))? > target {
                t0 /= lam;
            }
            // A ray close to a slower eigendirection switches regime late;
            // wait until each step drops exactly one shell.
            let step = |t: f64| -> Result<i32> {
                rho.index(&at(t))?
                    .step()
                    .ok_or_else(|| Error::InvalidParameter {
                        name: "rays",
                        reason: "ray reached the origin".into(),
                    })
            };
            let mut unit = 0;
            let mut prev = step(t0)?;
            let mut walked = 0;
            while unit < SETTLE_STEPS {
                t0 /= lam;
                let i = step(t0)?;
                unit = if prev - i == 1 { unit + 1 } else { 0 };
                prev = i;
                walked += 1;
                if walked > MAX_SETTLE_WALK {
                    return Err(Error::InvalidParameter {
                        name: "rays",
                        reason: format!("ray {ray} never settled into unit shell steps"),
                    });
                }
            }
            let ts: Vec<AtomTransform<'_>> =
                sum.atoms.iter().map(|a| AtomTransform::new(d, a)).collect();
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            let mut rows = Vec::new();
            let mut excluded = 0;
            for j in 0..opts.points as i32 {
                let tj = t0 * lam.powi(-j);
                let x: Vec<f64> = u.iter().map(|v| v * tj).collect();
                let r = rho.rho(&x)?;
                let mut f = num_complex::Complex64::new(0.0, 0.0);
                let mut ok = true;
                for (t, l) in ts.iter().zip(&sum.coefficients) {
                    let v = t.direct(&x);
                    f += l * v.value;
                    ok &= v.resolved;
                }
                let ratio = f.norm() / r.powf(ep);
                if !ok || !(ratio > 0.0) {
                    excluded += 1;
                    continue;
                }
                xs.push(r.ln());
                ys.push(ratio.ln());
                rows.push(vec![k as f64, ray as f64, tj, r, f.norm(), ratio]);
            }
            let factor = match (ys.first(), ys.last()) {
                (Some(a), Some(b)) if ys.len() > 1 => (b - a).exp(),
                _ => f64::NAN,
            };
            Ok(RayResult {
                sum: k,
                ray,
                fit: linear_fit(&xs, &ys),
                factor,
                excluded,
                rows,
            })
        })
        .collect::<Result<_>>()?;

    let mut report = EstimateReport::new("origin_decay", d, pv, seed);
    let all: Vec<_> = sums.iter().flat_map(|s| s.atoms.iter().cloned()).collect();
    certification_verdict(&mut report, &all);
    report.raw = Table::new(&["sum", "ray", "radius", "rho_star", "abs_f", "ratio"]);
    report.plot = Table::new(&["sum", "ray", "ln_rho_star", "ln_ratio", "fit"]);
    let mut worst_slope = f64::INFINITY;
    let mut worst_rms = 0.0f64;
    let mut worst_factor = 0.0f64;
    let mut min_points = usize::MAX;
    let mut excluded = 0;
    let mut missing = 0;
    for res in &results {
        excluded += res.excluded;
        min_points = min_points.min(res.rows.len());
        report.raw.rows.extend(res.rows.iter().cloned());
        worst_factor = worst_factor.max(if res.factor.is_nan() {
            f64::INFINITY
        } else {
            res.factor
        });
        let Some(fit) = &res.fit else {
            missing += 1;
            continue;
        };
        worst_slope = worst_slope.min(fit.slope);
        worst_rms = worst_rms.max(fit.rms);
        for r in &res.rows {
            let lx = r[3].ln();
            report
                .plot
                .push(vec![r[0], r[1], lx, r[5].ln(), fit.predict(lx)]);
        }
        if res.ray == 0 {
            report.slopes.push(SlopeSummary {
                label: format!("sum={} ray=0", res.sum),
                fit: fit.clone(),
                predicted: beta,
            });
        }
    }
    report.size("sums", sums.len());
    report.size("rays", opts.rays);
    report.size("orbit_points", opts.points);
    report.size("excluded_unresolved", excluded);
    report.metric("beta", beta);
    report.metric("worst_slope", worst_slope);
    report.metric("worst_fit_rms", worst_rms);
    report.metric("worst_decay_factor", worst_factor);

    report.assert("beta_positive", beta > 0.0, beta, 0.0);
    report.assert(
        "slope_at_least_beta",
        worst_slope >= beta - SLOPE_TOLERANCE,
        worst_slope,
        beta - SLOPE_TOLERANCE,
    );
    report.assert(
        "fit_rms",
        worst_rms < FIT_RMS_LIMIT,
        worst_rms,
        FIT_RMS_LIMIT,
    );
    report.assert(
        "ratio_decays",
        worst_factor < DECAY_FACTOR_LIMIT,
        worst_factor,
        DECAY_FACTOR_LIMIT,
    );
    report.resolution(
        "fit_abscissae",
        missing == 0 && min_points >= 12,
        min_points as f64,
        12.0,
    );
    Ok(report)
}
