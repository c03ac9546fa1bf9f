//! Command-line front end for the ckn library: one subcommand per
//! experiment, flat key = value config files, deterministic output.
//!
//! Data goes to stdout (or `--out`); the one-line run summary and any
//! progress go to stderr, so piped output stays clean. Exit codes: 0 ok,
//! 1 usage or invalid inputs, 2 numerical or I/O failure, 3 acceptance
//! failure from verify-all.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ckn::bubbles::{config_grid, interaction, weighted_norms, BubbleConfig, DEFAULT_VARSIGMA};
use ckn::error::CknError;
use ckn::functionals::{deficit, residual_load_smooth};
use ckn::grid::CylinderGrid;
use ckn::numerics::{linspace, logspace};
use ckn::params::{classify_region, felli_schneider, make_params, CknParams};
use ckn::profiles::{Extremal, SmoothFn, SmoothTerm};
use ckn::reduction::{
    counterexample_state, gap_sweep, solve_projected, ReductionTolerances,
};
use ckn::spectral::{find_symmetry_breaking_b, oracle_spectrum, LinearizedOperator};
use ckn::stability::{
    deficit_vs_distance, multi_bubble_stability, one_bubble_stability, EnsembleSpec,
};
use ckn::verify;

/// Environment variable naming the directory relative output paths land in.
const OUT_DIR_VAR: &str = "CKN_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "ckn",
    version,
    about = "Weighted-inequality stability experiments on the cylinder",
    after_help = "Values may also come from --config FILE (flat `key = value` lines, `#` comments).\n\
                  Command-line flags override config values. Unknown config keys are rejected.\n\
                  Keys: N a b grid_T grid_n step modes a_list s_list r_list R eps_list nu\n\
                        varsigma seed directions newton_tol max_iter out format quick\n\
                  Relative --out paths are placed under $CKN_OUT_DIR when it is set."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ParamArgs {
    /// Space dimension N >= 3
    #[arg(long = "N")]
    n_dim: Option<u32>,
    /// First weight exponent
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    /// Second weight exponent
    #[arg(long, allow_negative_numbers = true)]
    b: Option<f64>,
}

#[derive(Args)]
struct GridArgs {
    /// Half-width of the symmetric grid
    #[arg(long = "grid-T")]
    grid_t: Option<f64>,
    /// Node count (odd keeps t = 0 on the grid)
    #[arg(long = "grid-n")]
    grid_n: Option<usize>,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format: csv or json
    #[arg(long)]
    format: Option<String>,
    /// Shrink grids and sweeps for a fast smoke run
    #[arg(long)]
    quick: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify a parameter triple and print its derived constants
    Region {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Tabulate the ground state and its radial counterpart
    Profile {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Bound states of the linearized operator against the closed form
    Spectrum {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Comma-separated angular modes, e.g. 0,1,2
        #[arg(long)]
        modes: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Symmetry-breaking threshold b*(a) against the closed form
    FsCurve {
        /// Space dimension N >= 3
        #[arg(long = "N")]
        n_dim: Option<u32>,
        /// Comma-separated a values (each < 0)
        #[arg(long = "a-list", allow_hyphen_values = true)]
        a_list: Option<String>,
        /// Grid step for the bisection
        #[arg(long)]
        step: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Deficit and residual of the ground state and bump perturbations
    Deficit {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Comma-separated perturbation sizes
        #[arg(long = "eps-list")]
        eps_list: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Deficit and residual along the two-bubble counterexample family
    Residual {
        #[command(flatten)]
        params: ParamArgs,
        /// Comma-separated center gaps
        #[arg(long = "r-list")]
        r_list: Option<String>,
        /// Grid step
        #[arg(long)]
        step: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Two-bubble interaction strength as a function of the gap
    Interaction {
        #[command(flatten)]
        params: ParamArgs,
        /// Comma-separated center offsets
        #[arg(long = "s-list", allow_hyphen_values = true)]
        s_list: Option<String>,
        /// Grid step
        #[arg(long)]
        step: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Weighted sup-norms of the superposition error across gaps
    ErrorNorms {
        #[command(flatten)]
        params: ParamArgs,
        /// Comma-separated center gaps
        #[arg(long = "r-list")]
        r_list: Option<String>,
        /// Sharpened-exponent parameter in (0, 1)
        #[arg(long)]
        varsigma: Option<f64>,
        /// Grid step
        #[arg(long)]
        step: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// One projected corrector solve at a fixed gap
    Reduce {
        #[command(flatten)]
        params: ParamArgs,
        /// Center gap
        #[arg(long = "R")]
        r: Option<f64>,
        /// Number of bubbles
        #[arg(long)]
        nu: Option<usize>,
        /// Grid step
        #[arg(long)]
        step: Option<f64>,
        /// Relative Newton residual target
        #[arg(long = "newton-tol")]
        newton_tol: Option<f64>,
        /// Newton iteration cap
        #[arg(long = "max-iter")]
        max_iter: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Corrector and multiplier scaling across a gap sweep
    ReduceSweep {
        #[command(flatten)]
        params: ParamArgs,
        /// Comma-separated center gaps
        #[arg(long = "r-list")]
        r_list: Option<String>,
        /// Number of bubbles
        #[arg(long)]
        nu: Option<usize>,
        /// Grid step
        #[arg(long)]
        step: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// One-bubble residual-to-distance rate
    StabilityOne {
        #[command(flatten)]
        params: ParamArgs,
        /// Comma-separated perturbation sizes
        #[arg(long = "eps-list")]
        eps_list: Option<String>,
        /// Grid step
        #[arg(long)]
        step: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Multi-bubble residual-to-distance exponents along the gap sweep
    StabilityMulti {
        #[command(flatten)]
        params: ParamArgs,
        /// Comma-separated center gaps
        #[arg(long = "r-list")]
        r_list: Option<String>,
        /// Number of bubbles
        #[arg(long)]
        nu: Option<usize>,
        /// Grid step
        #[arg(long)]
        step: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Deficit against squared distance over a seeded perturbation ensemble
    DeficitLaw {
        #[command(flatten)]
        params: ParamArgs,
        /// Ensemble size
        #[arg(long)]
        directions: Option<usize>,
        /// Comma-separated perturbation sizes
        #[arg(long = "eps-list")]
        eps_list: Option<String>,
        /// Ensemble seed
        #[arg(long)]
        seed: Option<u64>,
        /// Grid step
        #[arg(long)]
        step: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run every acceptance criterion and print a pass/fail table
    VerifyAll {
        #[command(flatten)]
        common: CommonArgs,
    },
}

// ---------------------------------------------------------------------------
// failure plumbing

enum Failure {
    /// Bad flags, bad config, inputs outside the mathematical domain.
    Usage(String),
    /// A solver or file operation failed at runtime.
    Runtime(String),
    /// verify-all completed and some criterion failed.
    Acceptance,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Acceptance => 3,
        }
    }
}

impl From<CknError> for Failure {
    fn from(e: CknError) -> Self {
        match e {
            CknError::Domain(_) | CknError::GridTooNarrow(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("i/o: {e}"))
    }
}

type CmdResult = Result<(), Failure>;

// ---------------------------------------------------------------------------
// config file

/// Every key the config file may contain.
const CONFIG_KEYS: &[&str] = &[
    "N", "a", "b", "grid_T", "grid_n", "step", "modes", "a_list", "s_list", "r_list", "R",
    "eps_list", "nu", "varsigma", "seed", "directions", "newton_tol", "max_iter", "out",
    "format", "quick",
];

#[derive(Default)]
struct Config {
    map: BTreeMap<String, String>,
}

impl Config {
    fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Failure::Usage(format!(
                    "config {}:{}: expected key = value",
                    path.display(),
                    lineno + 1
                )));
            };
            let key = k.trim().to_string();
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Failure::Usage(format!(
                    "config {}:{}: unknown key `{key}`",
                    path.display(),
                    lineno + 1
                )));
            }
            map.insert(key, v.trim().to_string());
        }
        Ok(Config { map })
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Failure> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Failure::Usage(format!("config key `{key}`: cannot parse `{raw}`"))
            }),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, Failure> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => parse_list(raw).map(Some).map_err(|e| {
                Failure::Usage(format!("config key `{key}`: {e}"))
            }),
        }
    }

    fn flag(&self, key: &str) -> Result<bool, Failure> {
        match self.map.get(key).map(String::as_str) {
            None => Ok(false),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(other) => Err(Failure::Usage(format!(
                "config key `{key}`: expected a boolean, got `{other}`"
            ))),
        }
    }
}

fn parse_list(raw: &str) -> Result<Vec<f64>, String> {
    let vals: Result<Vec<f64>, _> =
        raw.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if !v.is_empty() => Ok(v),
        Ok(_) => Err("empty list".into()),
        Err(_) => Err(format!("cannot parse `{raw}` as comma-separated numbers")),
    }
}

fn parse_mode_list(raw: &str) -> Result<Vec<u32>, Failure> {
    let vals: Result<Vec<u32>, _> =
        raw.split(',').map(|s| s.trim().parse::<u32>()).collect();
    vals.map_err(|_| Failure::Usage(format!("cannot parse `{raw}` as comma-separated modes")))
}

/// Flag beats config beats default.
fn pick<T>(flag: Option<T>, cfg: Option<T>, default: T) -> T {
    flag.or(cfg).unwrap_or(default)
}

fn resolve_params(args: &ParamArgs, cfg: &Config) -> Result<CknParams, Failure> {
    let n_dim = pick(args.n_dim, cfg.parse("N")?, 3);
    let a = pick(args.a, cfg.parse("a")?, 0.0);
    let b = pick(args.b, cfg.parse("b")?, 0.0);
    Ok(make_params(n_dim, a, b))
}

/// Grid defaults T = 60, n = 12001 (h = 0.01); quick halves the resolution.
fn resolve_grid(
    params: CknParams,
    args: &GridArgs,
    cfg: &Config,
    quick: bool,
) -> Result<ckn::grid::GridRef, Failure> {
    let t_max = pick(args.grid_t, cfg.parse("grid_T")?, 60.0);
    let default_n = if quick { 6001 } else { 12001 };
    let n = pick(args.grid_n, cfg.parse("grid_n")?, default_n);
    Ok(CylinderGrid::new(params, t_max, n)?)
}

fn resolve_step(flag: Option<f64>, cfg: &Config, quick: bool) -> Result<f64, Failure> {
    let default = if quick { 0.02 } else { 0.01 };
    Ok(pick(flag, cfg.parse("step")?, default))
}

fn resolve_list(
    flag: Option<&str>,
    cfg: &Config,
    key: &str,
    default: Vec<f64>,
) -> Result<Vec<f64>, Failure> {
    match flag {
        Some(raw) => parse_list(raw).map_err(|e| Failure::Usage(format!("--{key}: {e}"))),
        None => Ok(cfg.list(key)?.unwrap_or(default)),
    }
}

/// Keep the first `keep` entries of a sweep in quick mode.
fn shorten(list: Vec<f64>, quick: bool) -> Vec<f64> {
    if !quick || list.len() <= 2 {
        return list;
    }
    let keep = (list.len() / 2).max(2);
    list.into_iter().take(keep).collect()
}

// ---------------------------------------------------------------------------
// output

#[derive(Clone, Copy, PartialEq)]
enum Format {
    Csv,
    Json,
}

fn resolve_format(common: &CommonArgs, cfg: &Config, default: Format) -> Result<Format, Failure> {
    let raw = match &common.format {
        Some(s) => Some(s.clone()),
        None => cfg.parse::<String>("format")?,
    };
    match raw.as_deref() {
        None => Ok(default),
        Some("csv") => Ok(Format::Csv),
        Some("json") => Ok(Format::Json),
        Some(other) => Err(Failure::Usage(format!("--format: expected csv or json, got `{other}`"))),
    }
}

/// 17 significant digits, round-trip exact, golden-file friendly.
fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

struct Csv {
    text: String,
}

impl Csv {
    fn new(header: &[&str]) -> Self {
        Csv { text: header.join(",") + "\n" }
    }

    fn row(&mut self, tag: Option<&str>, vals: &[f64]) {
        let mut cells: Vec<String> = Vec::with_capacity(vals.len() + 1);
        if let Some(t) = tag {
            cells.push(t.to_string());
        }
        cells.extend(vals.iter().map(|&v| fmt_f(v)));
        let _ = writeln!(self.text, "{}", cells.join(","));
    }
}

fn json_text<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Failure::Runtime(format!("serialize: {e}")))
}

/// Resolve the destination and write the payload; stdout when no --out.
fn emit(common: &CommonArgs, cfg: &Config, payload: &str) -> Result<String, Failure> {
    let out = match &common.out {
        Some(p) => Some(p.clone()),
        None => cfg.parse::<PathBuf>("out")?,
    };
    match out {
        None => {
            print!("{payload}");
            Ok("stdout".into())
        }
        Some(path) => {
            let path = match std::env::var_os(OUT_DIR_VAR) {
                Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
                _ => path,
            };
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(&path, payload)?;
            Ok(path.display().to_string())
        }
    }
}

fn summary(line: &str) {
    eprintln!("{line}");
}

// ---------------------------------------------------------------------------
// subcommands

fn cmd_region(args: &ParamArgs, config: Option<&Path>) -> CmdResult {
    let cfg = Config::load(config)?;
    let q = resolve_params(args, &cfg)?;
    let region = classify_region(q.n_dim, q.a, q.b);
    let b_fs = match felli_schneider(q.n_dim, q.a) {
        Ok(v) => fmt_f(v),
        Err(_) => "undefined".into(),
    };
    println!(
        "N={} a={} b={} p={} c={} b_fs={} region={:?}",
        q.n_dim,
        fmt_f(q.a),
        fmt_f(q.b),
        fmt_f(q.p),
        fmt_f(q.c),
        b_fs,
        region
    );
    Ok(())
}

#[derive(Serialize)]
struct ProfileRow {
    t: f64,
    psi: f64,
    psi_prime: f64,
    w: f64,
    v: f64,
}

fn cmd_profile(args: &ParamArgs, grid: &GridArgs, common: &CommonArgs) -> CmdResult {
    let cfg = Config::load(common.config.as_deref())?;
    let q = resolve_params(args, &cfg)?;
    q.require_supercritical()?;
    let grid = resolve_grid(q, grid, &cfg, common.quick || cfg.flag("quick")?)?;
    let e = Extremal::new(q)?;
    // radial values at r = e^{-t}, evaluated through logs so the r^{-c}
    // growth near the origin cannot overflow
    let rows: Vec<ProfileRow> = grid
        .nodes()
        .iter()
        .map(|&t| ProfileRow {
            t,
            psi: e.psi(t),
            psi_prime: e.psi_prime(t),
            w: e.log_w(-t).exp(),
            v: e.v_dilation_from_ln_r(-t),
        })
        .collect();
    let format = resolve_format(common, &cfg, Format::Csv)?;
    let payload = match format {
        Format::Json => json_text(&rows)?,
        Format::Csv => {
            let mut csv = Csv::new(&["t", "psi", "psi_prime", "w", "v"]);
            for r in &rows {
                csv.row(None, &[r.t, r.psi, r.psi_prime, r.w, r.v]);
            }
            csv.text
        }
    };
    let dest = emit(common, &cfg, &payload)?;
    summary(&format!("profile: ({},{},{}) {} nodes -> {dest}", q.n_dim, q.a, q.b, rows.len()));
    Ok(())
}

#[derive(Serialize)]
struct SpectrumRow {
    mode: u32,
    n: usize,
    eigenvalue_numeric: f64,
    eigenvalue_oracle: f64,
    abs_err: f64,
}

fn cmd_spectrum(
    args: &ParamArgs,
    grid: &GridArgs,
    modes: Option<&str>,
    common: &CommonArgs,
) -> CmdResult {
    let cfg = Config::load(common.config.as_deref())?;
    let q = resolve_params(args, &cfg)?;
    q.require_supercritical()?;
    let quick = common.quick || cfg.flag("quick")?;
    let grid = resolve_grid(q, grid, &cfg, quick)?;
    let modes = match modes {
        Some(raw) => parse_mode_list(raw)?,
        None => match cfg.parse::<String>("modes")? {
            Some(raw) => parse_mode_list(&raw)?,
            None => vec![0, 1, 2],
        },
    };
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for &mode in &modes {
        let op = LinearizedOperator::assemble(&grid, mode)?;
        let numeric = op.bound_states()?;
        let oracle = oracle_spectrum(q, mode)?;
        let count = numeric.eigenvalues.len().min(oracle.len());
        for n in 0..count {
            let row = SpectrumRow {
                mode,
                n,
                eigenvalue_numeric: numeric.eigenvalues[n],
                eigenvalue_oracle: oracle[n],
                abs_err: (numeric.eigenvalues[n] - oracle[n]).abs(),
            };
            worst = worst.max(row.abs_err);
            rows.push(row);
        }
    }
    let format = resolve_format(common, &cfg, Format::Csv)?;
    let payload = match format {
        Format::Json => json_text(&rows)?,
        Format::Csv => {
            let mut csv =
                Csv::new(&["mode", "n", "eigenvalue_numeric", "eigenvalue_oracle", "abs_err"]);
            for r in &rows {
                let _ = writeln!(
                    csv.text,
                    "{},{},{},{},{}",
                    r.mode,
                    r.n,
                    fmt_f(r.eigenvalue_numeric),
                    fmt_f(r.eigenvalue_oracle),
                    fmt_f(r.abs_err)
                );
            }
            csv.text
        }
    };
    let dest = emit(common, &cfg, &payload)?;
    summary(&format!(
        "spectrum: {} bound states over modes {modes:?}, max |err| = {:.3e} -> {dest}",
        rows.len(),
        worst
    ));
    Ok(())
}

#[derive(Serialize)]
struct FsCurveRow {
    a: f64,
    b_fs_closed_form: f64,
    b_star_numeric: f64,
    diff: f64,
}

fn cmd_fs_curve(
    n_dim: Option<u32>,
    a_list: Option<&str>,
    step: Option<f64>,
    common: &CommonArgs,
) -> CmdResult {
    let cfg = Config::load(common.config.as_deref())?;
    let n_dim = pick(n_dim, cfg.parse("N")?, 3);
    let quick = common.quick || cfg.flag("quick")?;
    let a_list = shorten(
        resolve_list(a_list, &cfg, "a_list", vec![-0.5, -1.0, -1.5, -2.0])?,
        quick,
    );
    let h = resolve_step(step, &cfg, quick)?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for &a in &a_list {
        let b_fs = felli_schneider(n_dim, a)?;
        let b_star = find_symmetry_breaking_b(n_dim, a, h)?;
        let diff = b_star - b_fs;
        worst = worst.max(diff.abs());
        rows.push(FsCurveRow { a, b_fs_closed_form: b_fs, b_star_numeric: b_star, diff });
    }
    let format = resolve_format(common, &cfg, Format::Csv)?;
    let payload = match format {
        Format::Json => json_text(&rows)?,
        Format::Csv => {
            let mut csv = Csv::new(&["a", "b_fs_closed_form", "b_star_numeric", "diff"]);
            for r in &rows {
                csv.row(None, &[r.a, r.b_fs_closed_form, r.b_star_numeric, r.diff]);
            }
            csv.text
        }
    };
    let dest = emit(common, &cfg, &payload)?;
    summary(&format!(
        "fs-curve: N={n_dim}, {} thresholds, max |b* - b_fs| = {:.3e} -> {dest}",
        rows.len(),
        worst
    ));
    Ok(())
}

#[derive(Serialize)]
struct DeficitRow {
    tag: String,
    h1_sq: f64,
    lp: f64,
    deficit: f64,
    residual_dual: f64,
}

fn deficit_rows_payload(
    rows: &[DeficitRow],
    format: Format,
) -> Result<String, Failure> {
    match format {
        Format::Json => json_text(&rows),
        Format::Csv => {
            let mut csv = Csv::new(&["tag", "h1_sq", "lp", "deficit", "residual_dual"]);
            for r in rows {
                csv.row(Some(&r.tag), &[r.h1_sq, r.lp, r.deficit, r.residual_dual]);
            }
            Ok(csv.text)
        }
    }
}

fn cmd_deficit(
    args: &ParamArgs,
    grid: &GridArgs,
    eps_list: Option<&str>,
    common: &CommonArgs,
) -> CmdResult {
    let cfg = Config::load(common.config.as_deref())?;
    let q = resolve_params(args, &cfg)?;
    q.require_stable()?;
    let quick = common.quick || cfg.flag("quick")?;
    let grid = resolve_grid(q, grid, &cfg, quick)?;
    let eps_list = resolve_list(eps_list, &cfg, "eps_list", vec![1e-3, 1e-2, 1e-1])?;
    let e = Extremal::new(q)?;
    let mut rows = Vec::new();
    let mut states = vec![("profile".to_string(), 0.0)];
    states.extend(eps_list.iter().map(|&eps| (format!("eps={eps:e}"), eps)));
    for (tag, eps) in states {
        let mut f = SmoothFn::new(e.clone());
        f.push(1.0, SmoothTerm::Profile { s: 0.0 });
        if eps != 0.0 {
            f.push(eps, SmoothTerm::Bump { center: 0.0, width: 5.0, freq: 0, odd: false });
        }
        let v = f.sample(&grid)?;
        let rec = deficit(&v)?;
        let residual_dual = residual_load_smooth(&grid, &f)?.dual_norm();
        rows.push(DeficitRow {
            tag,
            h1_sq: rec.h1_norm_sq,
            lp: rec.lp_norm,
            deficit: rec.deficit,
            residual_dual,
        });
    }
    let format = resolve_format(common, &cfg, Format::Csv)?;
    let payload = deficit_rows_payload(&rows, format)?;
    let dest = emit(common, &cfg, &payload)?;
    summary(&format!(
        "deficit: ({},{},{}) profile deficit {:.3e}, {} perturbed states -> {dest}",
        q.n_dim,
        q.a,
        q.b,
        rows[0].deficit,
        rows.len() - 1
    ));
    Ok(())
}

fn cmd_residual(
    args: &ParamArgs,
    r_list: Option<&str>,
    step: Option<f64>,
    common: &CommonArgs,
) -> CmdResult {
    let cfg = Config::load(common.config.as_deref())?;
    let q = resolve_params(args, &cfg)?;
    q.require_stable()?;
    let quick = common.quick || cfg.flag("quick")?;
    let default: Vec<f64> = [10.0, 15.0, 20.0].iter().map(|cr| cr / q.c).collect();
    let r_list = shorten(resolve_list(r_list, &cfg, "r_list", default)?, quick);
    let h = resolve_step(step, &cfg, quick)?;
    let mut rows = Vec::new();
    for &r in &r_list {
        let config = BubbleConfig::symmetric_pair(q, r)?;
        let cex = counterexample_state(&config, h)?;
        let rec = deficit(&cex.state)?;
        rows.push(DeficitRow {
            tag: format!("R={r}"),
            h1_sq: rec.h1_norm_sq,
            lp: rec.lp_norm,
            deficit: rec.deficit,
            residual_dual: cex.load_dual_norm,
        });
    }
    let format = resolve_format(common, &cfg, Format::Csv)?;
    let payload = deficit_rows_payload(&rows, format)?;
    let dest = emit(common, &cfg, &payload)?;
    summary(&format!(
        "residual: ({},{},{}) {} counterexample states -> {dest}",
        q.n_dim,
        q.a,
        q.b,
        rows.len()
    ));
    Ok(())
}

#[derive(Serialize)]
struct InteractionRow {
    s: f64,
    inner: f64,
    inner_scaled: f64,
}

fn cmd_interaction(
    args: &ParamArgs,
    s_list: Option<&str>,
    step: Option<f64>,
    common: &CommonArgs,
) -> CmdResult {
    let cfg = Config::load(common.config.as_deref())?;
    let q = resolve_params(args, &cfg)?;
    q.require_supercritical()?;
    let quick = common.quick || cfg.flag("quick")?;
    let default = linspace(10.0 / q.c, 20.0 / q.c, 11);
    let s_list = shorten(resolve_list(s_list, &cfg, "s_list", default)?, quick);
    let h = resolve_step(step, &cfg, quick)?;
    let s_max = s_list.iter().fold(0.0_f64, |acc, &s| acc.max(s.abs()));
    let grid = CylinderGrid::for_centers(q, &[0.0, s_max], h)?;
    let mut rows = Vec::new();
    for &s in &s_list {
        let inner = interaction(&grid, 0.0, s)?;
        rows.push(InteractionRow { s, inner, inner_scaled: inner * (q.c * s).exp() });
    }
    let format = resolve_format(common, &cfg, Format::Csv)?;
    let payload = match format {
        Format::Json => json_text(&rows)?,
        Format::Csv => {
            let mut csv = Csv::new(&["s", "inner", "inner_scaled"]);
            for r in &rows {
                csv.row(None, &[r.s, r.inner, r.inner_scaled]);
            }
            csv.text
        }
    };
    let dest = emit(common, &cfg, &payload)?;
    summary(&format!(
        "interaction: ({},{},{}) {} offsets, scaled range [{:.6e}, {:.6e}] -> {dest}",
        q.n_dim,
        q.a,
        q.b,
        rows.len(),
        rows.iter().map(|r| r.inner_scaled).fold(f64::INFINITY, f64::min),
        rows.iter().map(|r| r.inner_scaled).fold(f64::NEG_INFINITY, f64::max)
    ));
    Ok(())
}

#[derive(Serialize)]
struct ErrorNormRow {
    r: f64,
    q: f64,
    natural: f64,
    sharp: f64,
}

fn cmd_error_norms(
    args: &ParamArgs,
    r_list: Option<&str>,
    varsigma: Option<f64>,
    step: Option<f64>,
    common: &CommonArgs,
) -> CmdResult {
    let cfg = Config::load(common.config.as_deref())?;
    let q = resolve_params(args, &cfg)?;
    q.require_supercritical()?;
    let quick = common.quick || cfg.flag("quick")?;
    let default: Vec<f64> = [10.0, 15.0, 20.0, 25.0].iter().map(|cr| cr / q.c).collect();
    let r_list = shorten(resolve_list(r_list, &cfg, "r_list", default)?, quick);
    let varsigma = pick(varsigma, cfg.parse("varsigma")?, DEFAULT_VARSIGMA);
    let h = resolve_step(step, &cfg, quick)?;
    let mut rows = Vec::new();
    for &r in &r_list {
        let config = BubbleConfig::symmetric_pair(q, r)?;
        let grid = config_grid(&config, h)?;
        let err = ckn::bubbles::superposition_error(&grid, &config)?;
        let rep = weighted_norms(&config, &err, varsigma)?;
        rows.push(ErrorNormRow {
            r,
            q: config.interaction_scale(),
            natural: rep.natural_norm,
            sharp: rep.sharp_norm,
        });
    }
    let format = resolve_format(common, &cfg, Format::Csv)?;
    let payload = match format {
        Format::Json => json_text(&rows)?,
        Format::Csv => {
            let mut csv = Csv::new(&["r", "q", "natural", "sharp"]);
            for row in &rows {
                csv.row(None, &[row.r, row.q, row.natural, row.sharp]);
            }
            csv.text
        }
    };
    let dest = emit(common, &cfg, &payload)?;
    summary(&format!(
        "error-norms: ({},{},{}) {} gaps, varsigma {varsigma} -> {dest}",
        q.n_dim,
        q.a,
        q.b,
        rows.len()
    ));
    Ok(())
}

#[derive(Serialize)]
struct ReduceSummary {
    params: ReduceParams,
    r: f64,
    nu: usize,
    multipliers: Vec<f64>,
    phi_h1_norm: f64,
    newton_residual: f64,
    orthogonality_defect: f64,
    jacobian_sigma_min: f64,
    damped: bool,
}

#[derive(Serialize)]
struct ReduceParams {
    #[serde(rename = "N")]
    n_dim: u32,
    a: f64,
    b: f64,
    p: f64,
}

/// Centers for nu bubbles with uniform gap r, centered on t = 0.
fn chain_centers(nu: usize, r: f64) -> Vec<f64> {
    (0..nu).map(|k| (k as f64 - 0.5 * (nu as f64 - 1.0)) * r).collect()
}

fn cmd_reduce(
    args: &ParamArgs,
    r: Option<f64>,
    nu: Option<usize>,
    step: Option<f64>,
    newton_tol: Option<f64>,
    max_iter: Option<usize>,
    common: &CommonArgs,
) -> CmdResult {
    let cfg = Config::load(common.config.as_deref())?;
    let q = resolve_params(args, &cfg)?;
    q.require_supercritical()?;
    let quick = common.quick || cfg.flag("quick")?;
    let r = pick(r, cfg.parse("R")?, 12.0 / q.c);
    let nu = pick(nu, cfg.parse("nu")?, 2);
    let h = resolve_step(step, &cfg, quick)?;
    let mut tols = ReductionTolerances::default();
    if let Some(t) = newton_tol.or(cfg.parse("newton_tol")?) {
        tols.residual_rel = t;
    }
    if let Some(m) = max_iter.or(cfg.parse("max_iter")?) {
        tols.max_iter = m;
    }
    let config = BubbleConfig::new(q, chain_centers(nu, r))?;
    let grid = config_grid(&config, h)?;
    let sol = solve_projected(&grid, &config, &tols)?;
    let phi_norm = sol.phi.h1_norm_sq().sqrt();
    let format = resolve_format(common, &cfg, Format::Csv)?;
    let payload = match format {
        Format::Json => json_text(&ReduceSummary {
            params: ReduceParams { n_dim: q.n_dim, a: q.a, b: q.b, p: q.p },
            r,
            nu,
            multipliers: sol.multipliers.clone(),
            phi_h1_norm: phi_norm,
            newton_residual: sol.newton_residual,
            orthogonality_defect: sol.orthogonality_defect,
            jacobian_sigma_min: sol.jacobian_sigma_min,
            damped: sol.damped,
        })?,
        Format::Csv => {
            let mut csv = Csv::new(&["t", "phi"]);
            for (k, &t) in grid.nodes().iter().enumerate() {
                csv.row(None, &[t, sol.phi.samples()[k]]);
            }
            csv.text
        }
    };
    let dest = emit(common, &cfg, &payload)?;
    summary(&format!(
        "reduce: nu={nu} R={r} |phi| = {:.6e}, multipliers {:?}, residual {:.2e} -> {dest}",
        phi_norm, sol.multipliers, sol.newton_residual
    ));
    Ok(())
}

fn cmd_reduce_sweep(
    args: &ParamArgs,
    r_list: Option<&str>,
    nu: Option<usize>,
    step: Option<f64>,
    common: &CommonArgs,
) -> CmdResult {
    let cfg = Config::load(common.config.as_deref())?;
    let q = resolve_params(args, &cfg)?;
    q.require_supercritical()?;
    let quick = common.quick || cfg.flag("quick")?;
    let default: Vec<f64> =
        [7.5, 10.0, 12.5, 15.0, 17.5, 20.0].iter().map(|cr| cr / q.c).collect();
    let r_list = shorten(resolve_list(r_list, &cfg, "r_list", default)?, quick);
    let nu = pick(nu, cfg.parse("nu")?, 2);
    let h = resolve_step(step, &cfg, quick)?;
    let report = gap_sweep(q, nu, &r_list, h)?;
    let format = resolve_format(common, &cfg, Format::Csv)?;
    let payload = match format {
        Format::Json => json_text(&report)?,
        Format::Csv => {
            let mut csv = Csv::new(&["r", "q", "phi_norm", "multiplier_sum"]);
            for p in &report.points {
                csv.row(None, &[p.r, p.q, p.phi_norm, p.multiplier_abs_sum]);
            }
            csv.text
        }
    };
    let dest = emit(common, &cfg, &payload)?;
    summary(&format!(
        "reduce-sweep: nu={nu}, {} gaps, fitted exponent {:.4} +- {:.4} -> {dest}",
        report.points.len(),
        report.slope,
        report.slope_stderr
    ));
    Ok(())
}

fn report_payload(
    report: &ckn::stability::ExperimentReport,
    format: Format,
) -> Result<String, Failure> {
    match format {
        Format::Json => json_text(report),
        Format::Csv => {
            let mut csv = Csv::new(&["x", "gamma", "distance", "deficit"]);
            for p in &report.sweep {
                csv.row(None, &[p.x, p.gamma, p.distance, p.deficit]);
            }
            Ok(csv.text)
        }
    }
}

fn cmd_stability_one(
    args: &ParamArgs,
    eps_list: Option<&str>,
    step: Option<f64>,
    common: &CommonArgs,
) -> CmdResult {
    let cfg = Config::load(common.config.as_deref())?;
    let q = resolve_params(args, &cfg)?;
    let quick = common.quick || cfg.flag("quick")?;
    let default = logspace(1e-4, 1e-2, 7);
    let eps_list = shorten(resolve_list(eps_list, &cfg, "eps_list", default)?, quick);
    let h = resolve_step(step, &cfg, quick)?;
    let out = one_bubble_stability(q, h, &eps_list, None)?;
    let format = resolve_format(common, &cfg, Format::Json)?;
    let payload = report_payload(&out.report, format)?;
    let dest = emit(common, &cfg, &payload)?;
    summary(&format!(
        "stability-one: rate {:.4} +- {:.4}, ratio spread {:.3}, pass {} -> {dest}",
        out.report.fit.exponent, out.report.fit.stderr, out.ratio_spread, out.report.pass
    ));
    Ok(())
}

fn cmd_stability_multi(
    args: &ParamArgs,
    r_list: Option<&str>,
    nu: Option<usize>,
    step: Option<f64>,
    common: &CommonArgs,
) -> CmdResult {
    let cfg = Config::load(common.config.as_deref())?;
    let q = resolve_params(args, &cfg)?;
    q.require_supercritical()?;
    let quick = common.quick || cfg.flag("quick")?;
    // below p = 2 the clean-scaling window starts further out
    let window: &[f64] = if q.p < 2.0 {
        &[12.5, 15.0, 17.5, 20.0, 22.5, 25.0]
    } else {
        &[7.5, 10.0, 12.5, 15.0, 17.5, 20.0]
    };
    let default: Vec<f64> = window.iter().map(|cr| cr / q.c).collect();
    let r_list = shorten(resolve_list(r_list, &cfg, "r_list", default)?, quick);
    let nu = pick(nu, cfg.parse("nu")?, 2);
    let h = resolve_step(step, &cfg, quick)?;
    let out = multi_bubble_stability(q, nu, &r_list, h)?;
    let format = resolve_format(common, &cfg, Format::Json)?;
    let payload = report_payload(&out.report, format)?;
    let dest = emit(common, &cfg, &payload)?;
    let expected = match out.expected_exponent {
        Some(e) => format!("{e:.4}"),
        None => "log-corrected".into(),
    };
    summary(&format!(
        "stability-multi: nu={nu}, fitted {:.4} +- {:.4} (expected {expected}), pass {} -> {dest}",
        out.report.fit.exponent, out.report.fit.stderr, out.report.pass
    ));
    Ok(())
}

fn cmd_deficit_law(
    args: &ParamArgs,
    directions: Option<usize>,
    eps_list: Option<&str>,
    seed: Option<u64>,
    step: Option<f64>,
    common: &CommonArgs,
) -> CmdResult {
    let cfg = Config::load(common.config.as_deref())?;
    let q = resolve_params(args, &cfg)?;
    let quick = common.quick || cfg.flag("quick")?;
    let base = EnsembleSpec::default();
    let directions = pick(directions, cfg.parse("directions")?, if quick {
        base.directions / 2
    } else {
        base.directions
    });
    let eps = shorten(resolve_list(eps_list, &cfg, "eps_list", base.eps.clone())?, quick);
    let seed = pick(seed, cfg.parse("seed")?, base.seed);
    let h = resolve_step(step, &cfg, quick)?;
    let spec = EnsembleSpec { center: base.center, directions, eps, seed, h };
    let out = deficit_vs_distance(q, &spec)?;
    let format = resolve_format(common, &cfg, Format::Json)?;
    let payload = report_payload(&out.report, format)?;
    let dest = emit(common, &cfg, &payload)?;
    summary(&format!(
        "deficit-law: seed {seed}, {} directions, min e/d^2 = {:.4}, oracle dev {:.4}, pass {} -> {dest}",
        directions, out.min_ratio, out.oracle_max_dev, out.report.pass
    ));
    Ok(())
}

fn cmd_verify_all(common: &CommonArgs) -> CmdResult {
    let cfg = Config::load(common.config.as_deref())?;
    let quick = common.quick || cfg.flag("quick")?;
    let started = std::time::Instant::now();
    let results = verify::run_all(quick, |r| {
        eprintln!(
            "[{:5.1}s] criterion {:2} {} ({:.1}s)",
            started.elapsed().as_secs_f64(),
            r.id,
            if r.passed { "pass" } else { "FAIL" },
            r.seconds
        );
    });
    // table on stdout, timing chatter above on stderr: reruns stay
    // byte-identical
    let mut table = String::new();
    for r in &results {
        let _ = writeln!(
            table,
            "{:2}  {}  {}",
            r.id,
            if r.passed { "pass" } else { "FAIL" },
            r.name
        );
        let _ = writeln!(table, "    {}", r.details);
    }
    let passed = results.iter().filter(|r| r.passed).count();
    let _ = writeln!(table, "{passed}/{} criteria passed", results.len());
    print!("{table}");
    let out_requested = common.out.is_some() || cfg.parse::<PathBuf>("out")?.is_some();
    if out_requested {
        let payload = json_text(&results)?;
        let dest = emit(common, &cfg, &payload)?;
        summary(&format!("verify-all: results -> {dest}"));
    }
    summary(&format!(
        "verify-all{}: {passed}/{} passed in {:.1}s",
        if quick { " --quick" } else { "" },
        results.len(),
        started.elapsed().as_secs_f64()
    ));
    if passed == results.len() {
        Ok(())
    } else {
        Err(Failure::Acceptance)
    }
}

// ---------------------------------------------------------------------------

fn dispatch(cli: Cli) -> CmdResult {
    match &cli.cmd {
        Cmd::Region { params, config } => cmd_region(params, config.as_deref()),
        Cmd::Profile { params, grid, common } => cmd_profile(params, grid, common),
        Cmd::Spectrum { params, grid, modes, common } => {
            cmd_spectrum(params, grid, modes.as_deref(), common)
        }
        Cmd::FsCurve { n_dim, a_list, step, common } => {
            cmd_fs_curve(*n_dim, a_list.as_deref(), *step, common)
        }
        Cmd::Deficit { params, grid, eps_list, common } => {
            cmd_deficit(params, grid, eps_list.as_deref(), common)
        }
        Cmd::Residual { params, r_list, step, common } => {
            cmd_residual(params, r_list.as_deref(), *step, common)
        }
        Cmd::Interaction { params, s_list, step, common } => {
            cmd_interaction(params, s_list.as_deref(), *step, common)
        }
        Cmd::ErrorNorms { params, r_list, varsigma, step, common } => {
            cmd_error_norms(params, r_list.as_deref(), *varsigma, *step, common)
        }
        Cmd::Reduce { params, r, nu, step, newton_tol, max_iter, common } => {
            cmd_reduce(params, *r, *nu, *step, *newton_tol, *max_iter, common)
        }
        Cmd::ReduceSweep { params, r_list, nu, step, common } => {
            cmd_reduce_sweep(params, r_list.as_deref(), *nu, *step, common)
        }
        Cmd::StabilityOne { params, eps_list, step, common } => {
            cmd_stability_one(params, eps_list.as_deref(), *step, common)
        }
        Cmd::StabilityMulti { params, r_list, nu, step, common } => {
            cmd_stability_multi(params, r_list.as_deref(), *nu, *step, common)
        }
        Cmd::DeficitLaw { params, directions, eps_list, seed, step, common } => {
            cmd_deficit_law(params, *directions, eps_list.as_deref(), *seed, *step, common)
        }
        Cmd::VerifyAll { common } => cmd_verify_all(common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/version through the error path
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Runtime(msg) => eprintln!("error: {msg}"),
                Failure::Acceptance => {}
            }
            ExitCode::from(f.code())
        }
    }
}
