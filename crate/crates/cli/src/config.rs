//! Experiment configuration: bundled defaults, TOML file, `KEY=VALUE` overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use aniso_hardy::atom::min_vanishing_order;
use aniso_hardy::{Dilation, DilationOptions, ExponentVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const DEFAULT_CONFIG: &str = include_str!("default.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("bad override '{0}': expected KEY=VALUE")]
    Override(String),
    #[error("{field}: {reason}")]
    Field { field: String, reason: String },
}

fn field(name: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: name.to_string(),
        reason: reason.into(),
    }
}

/// Moment order: a fixed value or the smallest admissible one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentOrder {
    #[default]
    Auto,
    Fixed(u32),
}

impl Serialize for MomentOrder {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            MomentOrder::Auto => s.serialize_str("auto"),
            MomentOrder::Fixed(v) => s.serialize_u32(*v),
        }
    }
}

impl<'de> Deserialize<'de> for MomentOrder {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(MomentOrder::Fixed(v)),
            Raw::Text(t) if t == "auto" => Ok(MomentOrder::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected \"auto\" or a nonnegative integer, got \"{t}\""
            ))),
        }
    }
}

impl fmt::Display for MomentOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MomentOrder::Auto => f.write_str("auto"),
            MomentOrder::Fixed(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DilationSection {
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_minus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_plus: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentSection {
    pub p: Vec<f64>,
    pub r: f64,
    pub s: MomentOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSection {
    pub i0_range: (i32, i32),
    /// Atoms for the Lemma 3.2 and shell-integral experiments (doubled for drift).
    pub count: usize,
    /// Atoms for the derivative experiment (doubled for drift).
    pub derivative_count: usize,
    /// Single-atom sums for the origin-decay experiment.
    pub decay_count: usize,
    /// Random finite sums for the sum-level experiments.
    pub sum_count: usize,
    pub max_terms: usize,
    /// Single-atom sums for the maximal-function comparison.
    pub maximal_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Cells per axis for indicator and atomic norms.
    pub norm_resolution: usize,
    /// Fourier-side evaluation points on `ρ*`-shells.
    pub shell_points: usize,
    pub shell_j_range: (i32, i32),
    /// Nodes per axis of the shell-integral quadrature.
    pub shell_nodes: usize,
    pub derivative_rays: usize,
    pub decay_rays: usize,
    pub decay_points: usize,
    /// Nodes per ball box for the maximal function (doubled for refinement).
    pub maximal_grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSection {
    pub rho_points: usize,
    pub rho_j_range: (i32, i32),
    pub norm_i_range: (i32, i32),
    pub atom_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dilation: DilationSection,
    pub exponents: ExponentSection,
    pub atoms: AtomSection,
    pub grids: GridSection,
    pub tables: TableSection,
}

/// Parses `VALUE` as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| field(key, format!("'{part}' is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl ExperimentConfig {
    /// Bundled defaults, then `path` if given, then each `KEY=VALUE` override.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = DEFAULT_CONFIG
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.to_path_buf(),
                source,
            })?;
            let user: toml::Table = text.parse().map_err(|e: toml::de::Error| {
                ConfigError::Parse(format!("{}: {e}", p.display()))
            })?;
            merge(&mut table, user);
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| ConfigError::Override(o.clone()))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Override(o.clone()));
            }
            set_path(&mut table, k, parse_value(v.trim()))?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dilation_options(&self) -> DilationOptions {
        DilationOptions {
            lambda_minus: self.dilation.lambda_minus,
            lambda_plus: self.dilation.lambda_plus,
            delta: None,
        }
    }

    /// Checks the fields that do not need the dilation itself.
    pub fn validate(&self, hardy: bool) -> Result<(), ConfigError> {
        let n = self.dilation.matrix.len();
        if n == 0 || self.dilation.matrix.iter().any(|r| r.len() != n) {
            return Err(field("dilation.matrix", "must be a nonempty square matrix"));
        }
        if self
            .dilation
            .matrix
            .iter()
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(field("dilation.matrix", "entries must be finite"));
        }
        if self.exponents.p.len() != n {
            return Err(field(
                "exponents.p",
                format!("has {} entries, matrix is {n}x{n}", self.exponents.p.len()),
            ));
        }
        let pv = ExponentVector::new(self.exponents.p.clone())
            .map_err(|e| field("exponents.p", e.to_string()))?;
        if hardy && !pv.is_hardy_range() {
            return Err(field(
                "exponents.p",
                "Hardy experiments need every p_i in (0, 1]",
            ));
        }
        let r = self.exponents.r;
        if !(r > pv.p_plus().max(1.0)) {
            return Err(field(
                "exponents.r",
                format!("need r > max(p+, 1) = {}, got {r}", pv.p_plus().max(1.0)),
            ));
        }
        for (name, (lo, hi)) in [
            ("atoms.i0_range", self.atoms.i0_range),
            ("grids.shell_j_range", self.grids.shell_j_range),
            ("tables.rho_j_range", self.tables.rho_j_range),
            ("tables.norm_i_range", self.tables.norm_i_range),
        ] {
            if lo > hi {
                return Err(field(name, format!("empty range [{lo}, {hi}]")));
            }
        }
        for (name, v, min) in [
            ("atoms.count", self.atoms.count, 2),
            ("atoms.derivative_count", self.atoms.derivative_count, 1),
            ("atoms.decay_count", self.atoms.decay_count, 1),
            ("atoms.sum_count", self.atoms.sum_count, 1),
            ("atoms.max_terms", self.atoms.max_terms, 1),
            ("atoms.maximal_count", self.atoms.maximal_count, 1),
            ("grids.norm_resolution", self.grids.norm_resolution, 32),
            ("grids.shell_points", self.grids.shell_points, 1),
            ("grids.shell_nodes", self.grids.shell_nodes, 2),
            ("grids.derivative_rays", self.grids.derivative_rays, 1),
            ("grids.decay_rays", self.grids.decay_rays, 1),
            ("grids.decay_points", self.grids.decay_points, 2),
            ("grids.maximal_grid", self.grids.maximal_grid, 8),
            ("tables.rho_points", self.tables.rho_points, 1),
            ("tables.atom_count", self.tables.atom_count, 1),
        ] {
            if v < min {
                return Err(field(name, format!("must be at least {min}, got {v}")));
            }
        }
        Ok(())
    }

    /// Resolves `s` against the dilation; a fixed `s` below the minimum is rejected.
    pub fn moment_order(
        &self,
        d: &Dilation,
        pv: &ExponentVector,
        hardy: bool,
    ) -> Result<u32, ConfigError> {
        let s_min = min_vanishing_order(d, pv);
        match self.exponents.s {
            MomentOrder::Auto => Ok(s_min),
            MomentOrder::Fixed(s) if hardy && s < s_min => Err(field(
                "exponents.s",
                format!("must be at least the minimal vanishing order {s_min}, got {s}"),
            )),
            MomentOrder::Fixed(s) => Ok(s),
        }
    }
}
