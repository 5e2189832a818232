//! Command-line front end. Every subcommand takes `--key value` parameters, which
//! may also come from a `key = value` file given with `--config`; flags win.
//!
//! Exit codes: 0 on success, 2 when a parameter is missing or malformed, 1 when a
//! solver fails.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Arg, ArgMatches, Command};

use crate::abel::{solve_second_kind, AbelProblem, KernelSpec};
use crate::contlab::{self, MonteCarloReport, RandomOrderConfig, Sampler, SweepConfig};
use crate::fracgrid::{fmt_f64, GridFn, SequentialOrders, TimeGrid};
use crate::illposed::{self, InstabilityWitness};
use crate::mlf::{ml_eval, MlQuery};
use crate::seqfde::{solve_sequential, Coefficient, SequentialProblem};
use crate::specdiff::{self, ModeTrajectory, ModeVector};

pub const THREADS_VAR: &str = "FRACCONT_THREADS";

const SOLVE_TOL: f64 = 1e-12;
const SOLVE_MAX_ITER: usize = 5000;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    /// A parameter failed to parse or lies outside its domain.
    Invalid { key: String, message: String },
    /// A solver or experiment reported an error; `name` is its variant.
    Solver { name: String, message: String },
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Invalid { .. } => 2,
            CliError::Solver { .. } | CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Invalid { key, message } => write!(f, "invalid parameter `{key}`: {message}"),
            CliError::Solver { name, message } => write!(f, "{name}: {message}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

fn solver_err<E: std::error::Error>(e: E) -> CliError {
    let debug = format!("{e:?}");
    let name = debug.split(|c: char| !c.is_alphanumeric() && c != '_').next().unwrap_or("Error").to_string();
    CliError::Solver { name, message: e.to_string() }
}

fn io_err(e: io::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn invalid(key: &str, message: impl Into<String>) -> CliError {
    CliError::Invalid { key: key.to_string(), message: message.into() }
}

const SWEEP_KEYS: &[&str] = &[
    "target", "alpha", "beta", "s", "rho", "h0", "levels", "data", "modes", "lambda", "g", "p", "b", "n", "beta0", "delta",
];

/// Parameter keys accepted by each subcommand.
fn command_keys(cmd: &str) -> Vec<&'static str> {
    let mut keys: Vec<&'static str> = match cmd {
        "mlf" => vec!["alpha", "beta", "z", "tol"],
        "abel" => vec!["alpha", "lambda", "g", "t", "n", "gamma", "tol"],
        "seqfde" => vec!["etas", "p", "b", "f", "t", "n", "gamma", "tol"],
        "diffusion" => vec!["alpha", "beta", "length", "modes", "data", "s", "forcing", "t", "n", "nx"],
        "sweep" => SWEEP_KEYS.to_vec(),
        "montecarlo" => SWEEP_KEYS.iter().copied().chain(["sampler", "lo", "hi", "trials", "moment"]).collect(),
        "illposed" => vec!["example", "nmin", "nmax", "a", "alpha"],
        _ => Vec::new(),
    };
    keys.sort_unstable();
    keys.dedup();
    keys
}

fn key_help(key: &str) -> &'static str {
    match key {
        "alpha" => "fractional order",
        "beta" => "second Mittag-Leffler parameter, or operator power",
        "z" => "argument",
        "tol" => "tolerance",
        "lambda" => "relaxation coefficient",
        "g" => "constant forcing",
        "t" => "horizon",
        "n" => "number of time steps",
        "gamma" => "weight of the solution space",
        "etas" => "comma-separated orders",
        "p" => "coefficient(s) p_j, comma-separated",
        "b" => "initial value(s) b_j, comma-separated",
        "f" => "constant right-hand side",
        "length" => "interval length",
        "modes" => "number of sine modes",
        "data" => "initial data: unit or power",
        "s" => "smoothness index of the data",
        "forcing" => "forcing amplitude",
        "nx" => "spatial output points",
        "target" => "spectral, abel, seqfde or forced",
        "rho" => "norm index",
        "h0" => "largest order perturbation",
        "levels" => "number of dyadic halvings",
        "beta0" => "forcing smoothness",
        "delta" => "exponent slack",
        "sampler" => "uniform, twopoint or point",
        "lo" => "lower end of the sampled orders",
        "hi" => "upper end of the sampled orders",
        "trials" => "number of Monte Carlo trials",
        "moment" => "moment exponent",
        "example" => "halfline or exp",
        "nmin" => "first index",
        "nmax" => "last index",
        "a" => "growth rate of the multiplier",
        _ => "",
    }
}

const COMMANDS: &[(&str, &str)] = &[
    ("mlf", "Evaluate the Mittag-Leffler function E_{alpha,beta}(z)"),
    ("abel", "Solve u = g + lambda J^alpha u on [0, t]"),
    ("seqfde", "Solve a sequential fractional relaxation equation with constant coefficients"),
    ("diffusion", "Solve time-fractional diffusion on an interval in the sine basis"),
    ("sweep", "Fit the order-continuity exponent over dyadic perturbations"),
    ("montecarlo", "Random-order Monte Carlo against the calibrated moment bound"),
    ("illposed", "Tabulate instability witnesses"),
];

pub fn build_cli() -> Command {
    let mut cmd = Command::new("fraccont")
        .about("Fractional-order continuity experiments")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(Arg::new("config").long("config").global(true).value_name("FILE").help("key = value parameter file"))
        .arg(Arg::new("out").long("out").global(true).value_name("FILE").help("output CSV path (stdout if absent)"))
        .arg(Arg::new("seed").long("seed").global(true).value_name("INT").help("random seed"));
    for (name, about) in COMMANDS {
        let mut sub = Command::new(*name).about(*about);
        for key in command_keys(name) {
            sub = sub.arg(Arg::new(key).long(key).value_name("VALUE").help(key_help(key)).allow_hyphen_values(true));
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

/// A parsed invocation: command, merged parameters, output path and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub parameters: BTreeMap<String, String>,
    pub output_path: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| invalid("config", format!("line {} is not `key = value`", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl RunConfig {
    fn from_matches(m: &ArgMatches) -> Result<Self, CliError> {
        let (command, sub) = m.subcommand().ok_or_else(|| CliError::Usage("missing subcommand".into()))?;
        let keys = command_keys(command);
        let mut parameters = BTreeMap::new();
        let mut seed_text = sub.get_one::<String>("seed").cloned();
        if let Some(path) = sub.get_one::<String>("config") {
            let text = std::fs::read_to_string(path).map_err(|e| invalid("config", format!("{path}: {e}")))?;
            for (k, v) in parse_config_text(&text)? {
                if k == "seed" {
                    seed_text = seed_text.or(Some(v));
                } else if keys.contains(&k.as_str()) {
                    parameters.insert(k, v);
                } else {
                    return Err(invalid(&k, format!("not a parameter of `{command}`")));
                }
            }
        }
        for key in &keys {
            if let Some(v) = sub.get_one::<String>(key) {
                parameters.insert(key.to_string(), v.clone());
            }
        }
        let seed = seed_text.map(|s| s.trim().parse::<u64>().map_err(|e| invalid("seed", e.to_string()))).transpose()?;
        Ok(Self { command: command.to_string(), parameters, output_path: sub.get_one::<String>("out").map(PathBuf::from), seed })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.parameters.get(key).map(String::as_str)
    }

    fn f64_or(&self, key: &str, default: Option<f64>) -> Result<f64, CliError> {
        match self.raw(key) {
            Some(v) => {
                let x: f64 = v.parse().map_err(|_| invalid(key, format!("`{v}` is not a number")))?;
                if x.is_finite() { Ok(x) } else { Err(invalid(key, "must be finite")) }
            }
            None => default.ok_or_else(|| invalid(key, "required")),
        }
    }

    fn f64(&self, key: &str) -> Result<f64, CliError> {
        self.f64_or(key, None)
    }

    fn opt(&self, key: &str, default: f64) -> Result<f64, CliError> {
        self.f64_or(key, Some(default))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.raw(key) {
            Some(v) => v.parse().map_err(|_| invalid(key, format!("`{v}` is not a nonnegative integer"))),
            None => Ok(default),
        }
    }

    fn list(&self, key: &str, default: Option<&str>) -> Result<Vec<f64>, CliError> {
        let text = self.raw(key).or(default).ok_or_else(|| invalid(key, "required"))?;
        text.split(',').map(|s| s.trim().parse::<f64>().map_err(|_| invalid(key, format!("`{s}` is not a number")))).collect()
    }

    fn choice<'a>(&'a self, key: &str, default: &'a str, allowed: &[&str]) -> Result<&'a str, CliError> {
        let v = self.raw(key).unwrap_or(default);
        if allowed.contains(&v) {
            Ok(v)
        } else {
            Err(invalid(key, format!("`{v}` is not one of {}", allowed.join(", "))))
        }
    }
}

fn require(key: &str, ok: bool, what: &str) -> Result<(), CliError> {
    if ok { Ok(()) } else { Err(invalid(key, what.to_string())) }
}

fn order_in_unit(cfg: &RunConfig, key: &str, default: Option<f64>) -> Result<f64, CliError> {
    let a = cfg.f64_or(key, default)?;
    require(key, a > 0.0 && a <= 1.0, "must lie in (0, 1]")?;
    Ok(a)
}

fn grid_of(cfg: &RunConfig, default_n: usize) -> Result<Arc<TimeGrid>, CliError> {
    let t = cfg.opt("t", 1.0)?;
    require("t", t > 0.0, "must be positive")?;
    let n = cfg.usize_or("n", default_n)?;
    require("n", n >= 2, "must be at least 2")?;
    TimeGrid::uniform(t, n).map(Arc::new).map_err(solver_err)
}

/// What a command produced: text for stdout and an optional CSV body.
struct Output {
    summary: String,
    csv: Option<Vec<u8>>,
}

fn csv_with(f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(io_err)?;
    Ok(buf)
}

fn cmd_mlf(cfg: &RunConfig) -> Result<Output, CliError> {
    let alpha = cfg.f64("alpha")?;
    require("alpha", alpha > 0.0, "must be positive")?;
    let beta = cfg.opt("beta", 1.0)?;
    require("beta", beta > 0.0, "must be positive")?;
    let z = cfg.f64("z")?;
    let tol = cfg.opt("tol", crate::mlf::DEFAULT_TOL)?;
    require("tol", tol > 0.0, "must be positive")?;
    let v = ml_eval(&MlQuery::new(alpha, beta, z).with_tol(tol)).map_err(solver_err)?;
    let csv = format!("alpha,beta,z,value\n{},{},{},{}\n", fmt_f64(alpha), fmt_f64(beta), fmt_f64(z), fmt_f64(v));
    Ok(Output { summary: format!("{v}"), csv: Some(csv.into_bytes()) })
}

fn cmd_abel(cfg: &RunConfig) -> Result<Output, CliError> {
    let alpha = order_in_unit(cfg, "alpha", None)?;
    let lambda = cfg.opt("lambda", -1.0)?;
    let g = cfg.opt("g", 1.0)?;
    let gamma = cfg.opt("gamma", 0.0)?;
    require("gamma", (0.0..1.0).contains(&gamma), "must lie in [0, 1)")?;
    let tol = cfg.opt("tol", SOLVE_TOL)?;
    require("tol", tol > 0.0, "must be positive")?;
    let grid = grid_of(cfg, 256)?;
    let p = AbelProblem::new(KernelSpec::relaxation(lambda, alpha), GridFn::constant(&grid, g), alpha, gamma).map_err(solver_err)?;
    let sol = solve_second_kind(&p, tol, SOLVE_MAX_ITER).map_err(solver_err)?;
    let last = *sol.u.values().last().unwrap_or(&f64::NAN);
    Ok(Output {
        summary: format!("u(T) = {last}, {} iterations", sol.iterations),
        csv: Some(csv_with(|b| sol.u.write_csv(b))?),
    })
}

fn cmd_seqfde(cfg: &RunConfig) -> Result<Output, CliError> {
    let etas = cfg.list("etas", None)?;
    let k = etas.len();
    for e in &etas {
        require("etas", *e > 0.0 && *e <= 1.0, "orders must lie in (0, 1]")?;
    }
    let ps = cfg.list("p", Some("1"))?;
    require("p", ps.len() == k, "needs one coefficient per order")?;
    let bs = cfg.list("b", Some("1"))?;
    require("b", bs.len() == k, "needs one initial value per order")?;
    let f = cfg.opt("f", 0.0)?;
    let tol = cfg.opt("tol", SOLVE_TOL)?;
    require("tol", tol > 0.0, "must be positive")?;
    let grid = grid_of(cfg, 256)?;
    let eta0 = etas.iter().cloned().fold(1.0, f64::min);
    let orders = SequentialOrders::new(etas).map_err(solver_err)?;
    let pcoeffs: Vec<Coefficient> = ps.iter().map(|&c| Arc::new(move |_| c) as Coefficient).collect();
    let bound = bs.iter().fold(1.0f64, |m, b| m.max(b.abs() + 1.0));
    let sp = SequentialProblem::new(orders, pcoeffs, GridFn::constant(&grid, f), bs, eta0, (-bound, bound)).map_err(solver_err)?;
    let gamma = cfg.opt("gamma", sp.default_gamma())?;
    let (_, y) = solve_sequential(&sp, gamma, tol).map_err(solver_err)?;
    let last = *y.values().last().unwrap_or(&f64::NAN);
    Ok(Output { summary: format!("y(T) = {last}"), csv: Some(csv_with(|b| y.write_csv(b))?) })
}

fn cmd_diffusion(cfg: &RunConfig) -> Result<Output, CliError> {
    let alpha = order_in_unit(cfg, "alpha", None)?;
    let beta = cfg.opt("beta", 1.0)?;
    require("beta", beta > 0.0, "must be positive")?;
    let length = cfg.opt("length", 1.0)?;
    require("length", length > 0.0, "must be positive")?;
    let modes = cfg.usize_or("modes", specdiff::DEFAULT_MODES)?;
    require("modes", modes >= 1, "must be at least 1")?;
    let s = cfg.opt("s", 1.0)?;
    require("s", s >= 0.0, "must be nonnegative")?;
    let data = cfg.choice("data", "power", &["power", "unit"])?;
    let forcing = cfg.opt("forcing", 0.0)?;
    let grid = grid_of(cfg, 128)?;
    let op = specdiff::dirichlet_laplacian_1d(length, modes).map_err(solver_err)?;
    let theta = match data {
        "unit" => ModeVector::unit(1, modes),
        _ => ModeVector::from_fn(modes, |p| contlab::power_coefficient(p, s)).map_err(solver_err)?,
    };
    let mut v = specdiff::solve_homogeneous(&theta, &op, alpha, beta, &grid).map_err(solver_err)?;
    if forcing != 0.0 {
        let fm = ModeTrajectory::from_fn(&grid, modes, |_, p| forcing / (p * p) as f64).map_err(solver_err)?;
        let w = specdiff::solve_forced(&fm, &op, alpha, beta).map_err(solver_err)?;
        let frames = v.frames().iter().zip(w.frames()).map(|(a, b)| {
            ModeVector::new(a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x + y).collect())
        });
        v = ModeTrajectory::new(grid.clone(), frames.collect::<Result<_, _>>().map_err(solver_err)?).map_err(solver_err)?;
    }
    let sup = v.sup_hs(&op, s.min(1.0)).map_err(solver_err)?;
    let csv = match cfg.raw("nx") {
        Some(_) => {
            let nx = cfg.usize_or("nx", 0)?;
            require("nx", nx >= 1, "must be at least 1")?;
            csv_with(|b| v.write_physical_csv(length, nx, b))?
        }
        None => csv_with(|b| v.write_csv(b))?,
    };
    Ok(Output { summary: format!("sup_t H^{} norm = {sup}", s.min(1.0)), csv: Some(csv) })
}

fn sweep_config(cfg: &RunConfig) -> Result<SweepConfig, CliError> {
    let target = cfg.choice("target", "spectral", &["spectral", "abel", "seqfde", "forced"])?;
    let alpha = cfg.f64("alpha")?;
    require("alpha", alpha > 0.0 && alpha < 1.0, "must lie in (0, 1)")?;
    let h0 = cfg.opt("h0", 0.1)?;
    require("h0", h0 > 0.0 && alpha + h0 <= 1.0, "needs h0 > 0 and alpha + h0 <= 1")?;
    let levels = cfg.usize_or("levels", 6)?;
    require("levels", levels >= 1, "must be at least 1")?;
    let beta = cfg.opt("beta", 1.0)?;
    require("beta", beta > 0.0, "must be positive")?;
    let rho = cfg.opt("rho", 0.0)?;
    require("rho", rho >= 0.0, "must be nonnegative")?;
    let modes = cfg.usize_or("modes", specdiff::DEFAULT_MODES)?;
    require("modes", modes >= 1, "must be at least 1")?;
    let sc = match target {
        "spectral" => {
            let s = cfg.f64("s")?;
            require("s", s > rho, "must exceed rho")?;
            match cfg.choice("data", "unit", &["unit", "power"])? {
                "unit" => SweepConfig::spectral_unit(s, rho, beta, alpha, h0, levels),
                _ => SweepConfig::spectral_power(s, rho, beta, alpha, h0, levels, modes),
            }
        }
        "abel" => {
            let n = cfg.usize_or("n", 256)?;
            require("n", n >= 2, "must be at least 2")?;
            SweepConfig::abel_linear(cfg.opt("lambda", -1.0)?, cfg.opt("g", 1.0)?, alpha, h0, levels, n)
        }
        "seqfde" => {
            let n = cfg.usize_or("n", 128)?;
            require("n", n >= 2, "must be at least 2")?;
            SweepConfig::seqfde_relaxation(cfg.opt("p", 1.0)?, cfg.opt("b", 1.0)?, alpha, h0, levels, n)
        }
        _ => {
            let beta0 = cfg.opt("beta0", beta)?;
            let delta = cfg.opt("delta", 0.01)?;
            let exponent = specdiff::forced_exponent(beta0, rho, beta, delta).map_err(|e| invalid("beta0", e.to_string()))?;
            let op = specdiff::dirichlet_laplacian_1d(1.0, modes).map_err(solver_err)?;
            let n = cfg.usize_or("n", 64)?;
            require("n", n >= 2, "must be at least 2")?;
            let grid = TimeGrid::uniform(1.0, n).map(Arc::new).map_err(solver_err)?;
            let f = ModeTrajectory::from_fn(&grid, modes, |t, p| (1.0 + t) / (p * p) as f64).map_err(solver_err)?;
            SweepConfig::spectral_forced(op, f, beta, exponent, rho, alpha, h0, levels)
        }
    };
    sc.map_err(solver_err)
}

fn report_summary(r: &contlab::ContinuityReport) -> String {
    format!(
        "slope={} predicted={} constant={} verdict={}",
        r.slope,
        r.predicted,
        r.fitted_constant,
        if r.verdict { "pass" } else { "fail" }
    )
}

fn cmd_sweep(cfg: &RunConfig) -> Result<Output, CliError> {
    let sc = sweep_config(cfg)?;
    let r = contlab::sweep_orders(&sc).map_err(solver_err)?;
    Ok(Output { summary: report_summary(&r), csv: Some(csv_with(|b| r.write_csv(b))?) })
}

fn cmd_montecarlo(cfg: &RunConfig) -> Result<Output, CliError> {
    let sc = sweep_config(cfg)?;
    let (band_lo, band_hi) = sc.band;
    let sampler = match cfg.choice("sampler", "uniform", &["uniform", "twopoint", "point"])? {
        "point" => Sampler::Point(cfg.opt("lo", sc.alpha)?),
        kind => {
            let lo = cfg.opt("lo", (sc.alpha - 0.5 * sc.h0).max(band_lo))?;
            let hi = cfg.opt("hi", (sc.alpha + 0.5 * sc.h0).min(band_hi))?;
            require("lo", lo <= hi, "must not exceed hi")?;
            if kind == "uniform" { Sampler::Uniform { lo, hi } } else { Sampler::TwoPoint { lo, hi } }
        }
    };
    let (lo, hi) = sampler.support();
    require("lo", lo >= band_lo, &format!("must be at least {band_lo}"))?;
    require("hi", hi <= band_hi, &format!("must be at most {band_hi}"))?;
    let trials = cfg.usize_or("trials", 64)?;
    require("trials", trials >= contlab::MIN_TRIALS, &format!("must be at least {}", contlab::MIN_TRIALS))?;
    let moment = cfg.opt("moment", 2.0)?;
    require("moment", moment >= sc.predicted.min(1.0), "must be at least the predicted exponent")?;
    let rc = RandomOrderConfig { sampler, trials, lambda_moment: moment, seed: cfg.seed.unwrap_or(0) };
    let r: MonteCarloReport = contlab::monte_carlo_orders(&rc, &sc).map_err(solver_err)?;
    Ok(Output {
        summary: format!(
            "mean={} bound={} verdict={}",
            r.mean,
            r.bound(),
            if r.verdict { "pass" } else { "fail" }
        ),
        csv: Some(csv_with(|b| r.write_csv(b))?),
    })
}

fn cmd_illposed(cfg: &RunConfig) -> Result<Output, CliError> {
    let example = cfg.choice("example", "halfline", &["halfline", "exp"])?;
    let nmin = cfg.usize_or("nmin", 2)?;
    require("nmin", nmin >= 2, "must be at least 2")?;
    let nmax = cfg.usize_or("nmax", 12)?;
    require("nmax", nmax >= nmin, "must be at least nmin")?;
    let a = cfg.opt("a", 1.0)?;
    require("a", a > 0.0, "must be positive")?;
    let alpha = cfg.opt("alpha", 0.5)?;
    require("alpha", alpha > 0.0, "must be positive")?;
    let ws: Vec<InstabilityWitness> = (nmin..=nmax)
        .map(|n| match example {
            "halfline" => illposed::abel_halfline_instability(n),
            _ => illposed::exp_multiplier_instability(n, a, alpha),
        })
        .collect::<Result<_, _>>()
        .map_err(solver_err)?;
    let last = ws.last().expect("nonempty range");
    Ok(Output {
        summary: format!("n={}: data_norm={} solution_lower={}", last.n, last.data_norm, last.solution_norm_lower),
        csv: Some(csv_with(|b| illposed::write_witness_csv(&ws, b))?),
    })
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| invalid(THREADS_VAR, format!("`{v}` is not a nonnegative integer")))?;
    if n > 0 {
        // a pool may already exist when run() is called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn dispatch(cfg: &RunConfig) -> Result<Output, CliError> {
    match cfg.command.as_str() {
        "mlf" => cmd_mlf(cfg),
        "abel" => cmd_abel(cfg),
        "seqfde" => cmd_seqfde(cfg),
        "diffusion" => cmd_diffusion(cfg),
        "sweep" => cmd_sweep(cfg),
        "montecarlo" => cmd_montecarlo(cfg),
        "illposed" => cmd_illposed(cfg),
        other => Err(CliError::Usage(format!("unknown command {other}"))),
    }
}

fn execute<I, T>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let m = match build_cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                write!(out, "{e}").map_err(io_err)?;
                return Ok(());
            }
            return Err(CliError::Usage(e.to_string()));
        }
    };
    configure_threads()?;
    let cfg = RunConfig::from_matches(&m)?;
    let result = dispatch(&cfg)?;
    match (&cfg.output_path, result.csv) {
        (Some(path), Some(csv)) => {
            let mut f = BufWriter::new(File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?);
            f.write_all(&csv).and_then(|_| f.flush()).map_err(io_err)?;
            writeln!(out, "{}", result.summary).map_err(io_err)?;
        }
        (None, Some(csv)) if cfg.command != "mlf" => {
            out.write_all(&csv).map_err(io_err)?;
        }
        _ => writeln!(out, "{}", result.summary).map_err(io_err)?,
    }
    Ok(())
}

/// Runs one invocation; `args` includes the program name. Never panics on bad input.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match execute(args, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.to_string().trim_end());
            e.exit_code()
        }
    }
}
