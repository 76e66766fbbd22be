use std::fs;
use std::path::{Path, PathBuf};

use aniso_hardy::atom::{derive_seed, write_archive, AtomFactory, AtomicSum};
use aniso_hardy::mixed_norm::{indicator_ball_norm, indicator_bound_check};
use aniso_hardy::verify::{
    default_alphas, random_sums, shell_points, verify_hardy_littlewood, verify_lemma31,
    verify_lemma32, verify_lemma35, verify_maximal, verify_origin_decay, verify_theorem31,
    DecayOptions, EstimateReport, FamilySpec, HlOptions, Lemma31Options, MaximalOptions, Table,
};
use aniso_hardy::{transpose_dilation, Dilation, ExponentVector, QuasiNormEvaluator};
use clap::ValueEnum;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::run_dir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    ValidateDilation,
    RhoTable,
    NormTable,
    AtomGen,
    VerifyLemma31,
    VerifyLemma32,
    VerifyThm31,
    DecayOrigin,
    HardyLittlewood,
    MaximalCompare,
    All,
}

impl Subcommand {
    pub const EXPERIMENTS: [Subcommand; 10] = [
        Subcommand::ValidateDilation,
        Subcommand::RhoTable,
        Subcommand::NormTable,
        Subcommand::AtomGen,
        Subcommand::VerifyLemma31,
        Subcommand::VerifyLemma32,
        Subcommand::VerifyThm31,
        Subcommand::DecayOrigin,
        Subcommand::HardyLittlewood,
        Subcommand::MaximalCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::ValidateDilation => "validate-dilation",
            Subcommand::RhoTable => "rho-table",
            Subcommand::NormTable => "norm-table",
            Subcommand::AtomGen => "atom-gen",
            Subcommand::VerifyLemma31 => "verify-lemma31",
            Subcommand::VerifyLemma32 => "verify-lemma32",
            Subcommand::VerifyThm31 => "verify-thm31",
            Subcommand::DecayOrigin => "decay-origin",
            Subcommand::HardyLittlewood => "hardy-littlewood",
            Subcommand::MaximalCompare => "maximal-compare",
            Subcommand::All => "all",
        }
    }

    /// Whether the subcommand needs `p⃗ ∈ (0,1]^n` and an admissible `s`.
    pub fn is_hardy(self) -> bool {
        !matches!(
            self,
            Subcommand::ValidateDilation | Subcommand::RhoTable | Subcommand::NormTable
        )
    }
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("config invalid: {0}")]
    Config(#[from] ConfigError),
    #[error("{kind}: {source}", kind = .source.kind())]
    Core {
        #[from]
        source: aniso_hardy::Error,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    /// One line per verdict.
    pub lines: Vec<String>,
    pub exit_code: i32,
}

struct Setup {
    d: Dilation,
    pv: ExponentVector,
    s: u32,
}

fn setup(cfg: &ExperimentConfig, hardy: bool) -> Result<Setup, CommandError> {
    cfg.validate(hardy)?;
    let d = Dilation::from_rows(&cfg.dilation.matrix, cfg.dilation_options())?;
    let pv = ExponentVector::new(cfg.exponents.p.clone())?;
    let s = cfg.moment_order(&d, &pv, hardy)?;
    Ok(Setup { d, pv, s })
}

fn family(cfg: &ExperimentConfig, st: &Setup) -> FamilySpec {
    FamilySpec {
        i0_range: cfg.atoms.i0_range,
        r: cfg.exponents.r,
        s: st.s,
    }
}

fn single_sums(
    cfg: &ExperimentConfig,
    st: &Setup,
    count: usize,
) -> Result<Vec<AtomicSum>, CommandError> {
    let fam = family(cfg, st);
    let atoms = AtomFactory::new(&st.d, &st.pv)?.generate_family(
        count,
        fam.i0_range,
        fam.r,
        fam.s,
        cfg.seed,
    )?;
    Ok(atoms.into_iter().map(AtomicSum::single).collect())
}

/// Fourier-side evaluation points; seeded apart from the atoms.
fn fourier_points(cfg: &ExperimentConfig, d: &Dilation) -> Vec<Vec<f64>> {
    let dt = transpose_dilation(d);
    shell_points(
        &dt,
        cfg.grids.shell_points,
        cfg.grids.shell_j_range,
        derive_seed(cfg.seed, 0xF0),
    )
}

pub fn execute(sub: Subcommand, cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    if sub == Subcommand::All {
        return run_all(cfg);
    }
    // Reject a bad config before creating any output.
    setup(cfg, sub.is_hardy())?;
    let dir = run_dir(&cfg.output_dir, sub.name(), cfg.seed)?;
    run_into(sub, cfg, &dir)
}

fn run_into(sub: Subcommand, cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome, CommandError> {
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let st = setup(cfg, sub.is_hardy())?;
    log::info!("{} into {}", sub.name(), dir.display());
    let report = match sub {
        Subcommand::ValidateDilation => validate_dilation(cfg, &st)?,
        Subcommand::RhoTable => rho_table(cfg, &st)?,
        Subcommand::NormTable => norm_table(cfg, &st)?,
        Subcommand::AtomGen => atom_gen(cfg, &st, dir)?,
        Subcommand::VerifyLemma31 => {
            let fam = family(cfg, &st);
            let atoms = AtomFactory::new(&st.d, &st.pv)?.generate_family(
                2 * cfg.atoms.derivative_count,
                fam.i0_range,
                fam.r,
                fam.s,
                cfg.seed,
            )?;
            let opts = Lemma31Options {
                rays: cfg.grids.derivative_rays,
                ..Lemma31Options::default()
            };
            verify_lemma31(
                &st.d,
                &st.pv,
                &atoms,
                &default_alphas(st.d.dim(), st.s),
                &opts,
                cfg.seed,
            )?
        }
        Subcommand::VerifyLemma32 => {
            let pts = fourier_points(cfg, &st.d);
            verify_lemma32(
                &st.d,
                &st.pv,
                &family(cfg, &st),
                cfg.atoms.count,
                &pts,
                cfg.seed,
            )?
        }
        Subcommand::VerifyThm31 => {
            let pts = fourier_points(cfg, &st.d);
            let sums = random_sums(
                &st.d,
                &st.pv,
                &family(cfg, &st),
                cfg.atoms.sum_count,
                cfg.atoms.max_terms,
                cfg.seed,
            )?;
            let res = cfg.grids.norm_resolution;
            let mut thm = verify_theorem31(&sums, &st.d, &st.pv, &pts, res, cfg.seed)?;
            let l35 = verify_lemma35(&sums, &st.d, &st.pv, res, cfg.seed)?;
            l35.raw.write_csv(&dir.join("lemma35_raw.csv"))?;
            l35.plot.write_csv(&dir.join("lemma35_plot.csv"))?;
            thm.absorb("lemma35", l35);
            thm
        }
        Subcommand::DecayOrigin => {
            let sums = single_sums(cfg, &st, cfg.atoms.decay_count)?;
            let opts = DecayOptions {
                rays: cfg.grids.decay_rays,
                points: cfg.grids.decay_points,
                ..DecayOptions::default()
            };
            verify_origin_decay(&sums, &st.d, &st.pv, &opts, cfg.seed)?
        }
        Subcommand::HardyLittlewood => {
            // Shell integrals are defined for r = 2 atoms.
            let fam = FamilySpec {
                r: 2.0,
                ..family(cfg, &st)
            };
            let opts = HlOptions {
                shell_nodes: cfg.grids.shell_nodes,
                j_range: cfg.grids.shell_j_range,
                max_terms: cfg.atoms.max_terms,
                resolution: cfg.grids.norm_resolution,
                ..HlOptions::default()
            };
            verify_hardy_littlewood(&st.d, &st.pv, &fam, cfg.atoms.count, &opts, cfg.seed)?
        }
        Subcommand::MaximalCompare => {
            let sums = single_sums(cfg, &st, cfg.atoms.maximal_count)?;
            let opts = MaximalOptions {
                grid: cfg.grids.maximal_grid,
                resolution: cfg.grids.norm_resolution,
                ..MaximalOptions::default()
            };
            verify_maximal(&sums, &st.d, &st.pv, &opts, cfg.seed)?
        }
        Subcommand::All => unreachable!(),
    };
    report.write(dir)?;
    Ok(Outcome {
        dir: dir.to_path_buf(),
        lines: report
            .verdicts
            .iter()
            .map(|v| format!("[{}] {v}", sub.name()))
            .collect(),
        exit_code: report.exit_code(),
    })
}

fn run_all(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    setup(cfg, true)?;
    let dir = run_dir(&cfg.output_dir, Subcommand::All.name(), cfg.seed)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let mut lines = Vec::new();
    let mut exit_code = 0;
    for sub in Subcommand::EXPERIMENTS {
        let sub_dir = dir.join(sub.name());
        fs::create_dir_all(&sub_dir)?;
        match run_into(sub, cfg, &sub_dir) {
            Ok(o) => {
                lines.extend(o.lines);
                exit_code = combine(exit_code, o.exit_code);
            }
            Err(e) => {
                lines.push(format!("[{}] ERROR {e}", sub.name()));
                exit_code = 2;
            }
        }
    }
    Ok(Outcome {
        dir,
        lines,
        exit_code,
    })
}

/// Resolution failures (2) dominate assertion failures (1).
fn combine(a: i32, b: i32) -> i32 {
    if a == 2 || b == 2 {
        2
    } else {
        a.max(b)
    }
}

fn validate_dilation(cfg: &ExperimentConfig, st: &Setup) -> Result<EstimateReport, CommandError> {
    let d = &st.d;
    let e = d.ellipsoid();
    let mut report = EstimateReport::new("validate_dilation", d, &st.pv, cfg.seed);
    let n = d.dim();
    report.raw = Table::new(&["row", "col", "p_entry"]);
    for r in 0..n {
        for c in 0..n {
            report.raw.push(vec![r as f64, c as f64, e.p[(r, c)]]);
        }
    }
    report.plot = Table::new(&["i", "ball_volume", "ball_diameter"]);
    for i in -4..=4 {
        report
            .plot
            .push(vec![f64::from(i), d.b_pow(i), d.ball_diameter(i)]);
    }
    let vol = e.volume();
    report.metric("b", d.b());
    report.metric("lambda_minus", d.lambda_minus());
    report.metric("lambda_plus", d.lambda_plus());
    report.metric("expansion_r", d.expansion_r());
    report.metric("delta", e.delta);
    report.metric("contraction", e.contraction);
    report.metric("ellipsoid_volume", vol);
    report.size("series_terms", e.terms);
    let limit = (1.0 + 1e-10) / e.delta;
    report.assert("containment", e.contraction <= limit, e.contraction, limit);
    report.assert(
        "unit_volume",
        (vol - 1.0).abs() <= 1e-10,
        (vol - 1.0).abs(),
        1e-10,
    );
    Ok(report)
}

fn rho_table(cfg: &ExperimentConfig, st: &Setup) -> Result<EstimateReport, CommandError> {
    let d = &st.d;
    let n = d.dim();
    let q = QuasiNormEvaluator::new(d.clone());
    let (lo, hi) = cfg.tables.rho_j_range;
    let pts = shell_points(d, cfg.tables.rho_points, (lo, hi), cfg.seed);
    let mut header: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    header.extend(["shell", "index", "rho", "rho_ax"].map(String::from));
    let mut report = EstimateReport::new("rho_table", d, &st.pv, cfg.seed);
    report.raw = Table {
        header,
        rows: Vec::new(),
    };
    report.plot = Table::new(&["ln_euclid", "ln_rho"]);
    let width = (hi - lo + 1) as usize;
    let (mut wrong_shell, mut inhomogeneous) = (0, 0);
    for (k, x) in pts.iter().enumerate() {
        let shell = lo + (k % width) as i32;
        let idx = q.index(x)?.step().unwrap_or(i32::MIN);
        let rho = q.rho(x)?;
        let ax = d.apply_power(1, x);
        let rho_ax = q.rho(&ax)?;
        wrong_shell += usize::from(idx != shell);
        // ρ(Ax) = bρ(x) holds at the level of step indices.
        inhomogeneous += usize::from(q.index(&ax)?.step() != Some(idx + 1));
        let mut row = x.clone();
        row.extend([f64::from(shell), f64::from(idx), rho, rho_ax]);
        report.raw.push(row);
        let euclid = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        report.plot.push(vec![euclid.ln(), rho.ln()]);
    }
    report.size("points", pts.len());
    report.assert("shell_index", wrong_shell == 0, wrong_shell as f64, 0.0);
    report.assert("homogeneity", inhomogeneous == 0, inhomogeneous as f64, 0.0);
    Ok(report)
}

/// Largest acceptable change of an indicator norm between `res` and `2·res`.
const NORM_REFINEMENT_LIMIT: f64 = 0.05;

fn norm_table(cfg: &ExperimentConfig, st: &Setup) -> Result<EstimateReport, CommandError> {
    let (d, pv) = (&st.d, &st.pv);
    let res = cfg.grids.norm_resolution;
    let mut report = EstimateReport::new("norm_table", d, pv, cfg.seed);
    report.raw = Table::new(&["i", "norm", "est_rel_err", "ratio"]);
    report.plot = Table::new(&["i", "ln_norm"]);
    let worst_err;
    if pv.is_hardy_range() {
        let b = indicator_bound_check(d, pv, cfg.tables.norm_i_range, res)?;
        for r in &b.rows {
            report
                .raw
                .push(vec![f64::from(r.i), r.norm, r.est_rel_err, r.ratio]);
        }
        worst_err = b.rows.iter().map(|r| r.est_rel_err).fold(0.0, f64::max);
        report.metric("max_ratio", b.max_ratio);
        report.metric("drift", b.drift);
        report.assert(
            "bounded_ratio",
            b.passed,
            b.drift,
            aniso_hardy::mixed_norm::INDICATOR_DRIFT_LIMIT,
        );
    } else {
        let mut w = 0.0f64;
        for i in cfg.tables.norm_i_range.0..=cfg.tables.norm_i_range.1 {
            let ball = aniso_hardy::atom::DilatedBall::centered(d.dim(), i);
            let v = indicator_ball_norm(d, &ball, pv, res)?;
            w = w.max(v.rel_err);
            report
                .raw
                .push(vec![f64::from(i), v.value, v.rel_err, f64::NAN]);
        }
        worst_err = w;
    }
    for r in report.raw.rows.clone() {
        report.plot.push(vec![r[0], r[1].ln()]);
    }
    report.resolution(
        "refinement",
        worst_err < NORM_REFINEMENT_LIMIT,
        worst_err,
        NORM_REFINEMENT_LIMIT,
    );
    Ok(report)
}

fn atom_gen(
    cfg: &ExperimentConfig,
    st: &Setup,
    dir: &Path,
) -> Result<EstimateReport, CommandError> {
    let (d, pv) = (&st.d, &st.pv);
    let fam = family(cfg, st);
    let atoms = AtomFactory::new(d, pv)?.generate_family(
        cfg.tables.atom_count,
        fam.i0_range,
        fam.r,
        fam.s,
        cfg.seed,
    )?;
    let n = d.dim();
    let mut header = vec!["atom".to_string(), "i0".to_string()];
    header.extend((1..=n).map(|k| format!("c{k}")));
    header.extend(["kappa", "support", "size", "moments", "certified"].map(String::from));
    let mut report = EstimateReport::new("atom_gen", d, pv, cfg.seed);
    report.family = Some(fam);
    report.raw = Table {
        header,
        rows: Vec::new(),
    };
    report.plot = Table::new(&["i0", "moments"]);
    let (mut worst_moment, mut worst_size) = (0.0f64, 0.0f64);
    for (k, a) in atoms.iter().enumerate() {
        write_archive(&dir.join(format!("atom_{k:03}")), a)?;
        let cert = a.certificate.as_ref();
        let m = cert.map_or(f64::NAN, |c| c.moments.value);
        let sz = cert.map_or(f64::NAN, |c| c.size.value);
        worst_moment = worst_moment.max(m);
        worst_size = worst_size.max(sz);
        let mut row = vec![k as f64, f64::from(a.ball.index)];
        row.extend(a.ball.center.iter().copied());
        row.extend([
            a.kappa,
            cert.map_or(f64::NAN, |c| c.support.value),
            sz,
            m,
            f64::from(u8::from(a.certified)),
        ]);
        report.raw.push(row);
        report.plot.push(vec![f64::from(a.ball.index), m]);
    }
    let bad = atoms.iter().filter(|a| !a.certified).count();
    report.size("atoms", atoms.len());
    report.metric("worst_moment", worst_moment);
    report.metric("worst_size", worst_size);
    report.assert("atoms_certified", bad == 0, bad as f64, 0.0);
    Ok(report)
}
