//! Estimate experiments: empirical constants, slope fits and shell integrals.
//!
//! Every experiment returns an [`EstimateReport`] carrying its verdicts. A
//! verdict is either an assertion about the measured quantity or a
//! resolution check on the numerics behind it; the two map to different
//! exit codes in the command-line driver.

mod decay;
mod hardy_littlewood;
mod lemma31;
mod lemma32;
mod maximal;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atom::{Atom, AtomFactory};
use crate::dilation::{Dilation, SpectralReport};
use crate::error::{Error, Result};
use crate::mixed_norm::ExponentVector;
use crate::sampling::{rng_for, sample_shell};
use crate::stats::LinearFit;

pub use decay::{origin_decay_beta, verify_origin_decay, DecayOptions};
pub use hardy_littlewood::{
    hl_exponents, hl_weight, shell_integral, verify_hardy_littlewood, HlOptions, ShellIntegral,
    ShellQuadrature,
};
pub use lemma31::{default_alphas, verify_lemma31, Lemma31Options};
pub use lemma32::{
    random_sums, theorem31_constant, verify_lemma32, verify_lemma35, verify_theorem31,
    Theorem31Summary, CHEAP_LEVEL,
};
pub use maximal::{
    default_k_range, radial_maximal, radial_maximal_norm, verify_maximal, MaximalOptions,
    MaximalValue, TensorBump,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    /// A claim about the measured estimate.
    Assertion,
    /// A check that the numerics resolved what they measured.
    Resolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub assertion: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub kind: VerdictKind,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: value={:.6e} threshold={:.6e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.assertion,
            self.value,
            self.threshold
        )
    }
}

/// A fitted slope with the value the estimate predicts for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub label: String,
    pub fit: LinearFit,
    pub predicted: f64,
}

/// Numeric table written as CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The atoms an experiment draws: scale range, size exponent and moment order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub i0_range: (i32, i32),
    pub r: f64,
    pub s: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub experiment: String,
    pub seed: u64,
    pub dilation: SpectralReport,
    pub exponents: Vec<f64>,
    pub family: Option<FamilySpec>,
    /// Empirical constant.
    pub constant: Option<f64>,
    /// Relative drift of the constant under sample doubling.
    pub stability: Option<f64>,
    pub slopes: Vec<SlopeSummary>,
    pub sample_sizes: BTreeMap<String, usize>,
    pub metrics: BTreeMap<String, f64>,
    pub verdicts: Vec<Verdict>,
    #[serde(skip)]
    pub raw: Table,
    #[serde(skip)]
    pub plot: Table,
}

impl EstimateReport {
    pub fn new(experiment: &str, d: &Dilation, pv: &ExponentVector, seed: u64) -> Self {
        EstimateReport {
            experiment: experiment.to_string(),
            seed,
            dilation: d.spectral_report(),
            exponents: pv.p().to_vec(),
            family: None,
            constant: None,
            stability: None,
            slopes: Vec::new(),
            sample_sizes: BTreeMap::new(),
            metrics: BTreeMap::new(),
            verdicts: Vec::new(),
            raw: Table::default(),
            plot: Table::default(),
        }
    }

    /// Records `value <= threshold` (or the given outcome) as an assertion.
    pub fn assert(&mut self, name: &str, passed: bool, value: f64, threshold: f64) {
        self.push_verdict(name, passed, value, threshold, VerdictKind::Assertion);
    }

    pub fn resolution(&mut self, name: &str, passed: bool, value: f64, threshold: f64) {
        self.push_verdict(name, passed, value, threshold, VerdictKind::Resolution);
    }

    fn push_verdict(
        &mut self,
        name: &str,
        passed: bool,
        value: f64,
        threshold: f64,
        kind: VerdictKind,
    ) {
        self.verdicts.push(Verdict {
            assertion: name.to_string(),
            passed,
            value,
            threshold,
            kind,
        });
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    pub fn size(&mut self, name: &str, n: usize) {
        self.sample_sizes.insert(name.to_string(), n);
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// 0 when every verdict passes, 2 when a resolution check fails, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else if self
            .verdicts
            .iter()
            .any(|v| !v.passed && v.kind == VerdictKind::Resolution)
        {
            2
        } else {
            1
        }
    }

    /// Appends the verdicts, metrics and sizes of `other` under a prefix.
    pub fn absorb(&mut self, prefix: &str, other: EstimateReport) {
        for mut v in other.verdicts {
            v.assertion = format!("{prefix}.{}", v.assertion);
            self.verdicts.push(v);
        }
        for (k, v) in other.metrics {
            self.metrics.insert(format!("{prefix}.{k}"), v);
        }
        for (k, v) in other.sample_sizes {
            self.sample_sizes.insert(format!("{prefix}.{k}"), v);
        }
        for mut s in other.slopes {
            s.label = format!("{prefix}.{}", s.label);
            self.slopes.push(s);
        }
    }

    /// Writes `report.json`, `raw.csv` and `plot.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        self.raw.write_csv(&dir.join("raw.csv"))?;
        self.plot.write_csv(&dir.join("plot.csv"))?;
        Ok(())
    }
}

/// `max{ρ^{1/p₋-1}, ρ^{1/p₊-1}}`.
pub fn decay_envelope(rho: f64, pv: &ExponentVector) -> f64 {
    let (em, ep) = (1.0 / pv.p_minus() - 1.0, 1.0 / pv.p_plus() - 1.0);
    rho.powf(em).max(rho.powf(ep))
}

/// `count` points `x = (A*)^j u`, `u ∈ B*_1 \ B*_0`, with `j` cycling through `j_range`.
pub fn shell_points(dt: &Dilation, count: usize, j_range: (i32, i32), seed: u64) -> Vec<Vec<f64>> {
    let width = (j_range.1 - j_range.0 + 1).max(1) as usize;
    (0..count)
        .map(|k| {
            let j = j_range.0 + (k % width) as i32;
            let mut rng = rng_for(seed, k as u64);
            sample_shell(dt, j, &mut rng)
        })
        .collect()
}

pub(crate) fn check_family(pv: &ExponentVector, family: &FamilySpec) -> Result<()> {
    if family.i0_range.0 > family.i0_range.1 {
        return Err(Error::InvalidParameter {
            name: "i0_range",
            reason: format!("empty range {:?}", family.i0_range),
        });
    }
    if !(family.r > pv.p_plus().max(1.0)) {
        return Err(Error::InvalidParameter {
            name: "r",
            reason: format!("need r > max(p+, 1), got {}", family.r),
        });
    }
    Ok(())
}

pub(crate) fn make_family(
    d: &Dilation,
    pv: &ExponentVector,
    family: &FamilySpec,
    count: usize,
    seed: u64,
) -> Result<Vec<Atom>> {
    check_family(pv, family)?;
    AtomFactory::new(d, pv)?.generate_family(count, family.i0_range, family.r, family.s, seed)
}

pub(crate) fn certification_verdict(report: &mut EstimateReport, atoms: &[Atom]) {
    let bad = atoms.iter().filter(|a| !a.certified).count();
    report.assert("atoms_certified", bad == 0, bad as f64, 0.0);
}

/// Largest over smallest entry; infinite if the smallest is zero.
pub(crate) fn spread(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let hi = values.clone().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.fold(f64::INFINITY, f64::min);
    hi / lo
}
