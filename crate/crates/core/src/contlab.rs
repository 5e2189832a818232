//! Order-continuity experiments: perturb the fractional order along a dyadic
//! sequence, measure how far the solution moves, and fit the Hölder exponent.

use std::error::Error as StdError;
use std::io::{self, BufRead, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::abel::{solve_second_kind, AbelProblem, KernelSpec};
use crate::conv::{MlKernel, ProductRule};
use crate::fracgrid::{fmt_f64, GridFn, SequentialOrders, TimeGrid};
use crate::mlf::ml;
use crate::seqfde::{solve_sequential, SequentialProblem};
use crate::special::gamma;
use crate::specdiff::{
    dirichlet_laplacian_1d, predicted_exponent, solve_forced, solve_homogeneous, ModeTrajectory, ModeVector,
    SpecError, SpectralOperator,
};

/// Verdict tolerance on the fitted exponent.
pub const SLOPE_TOLERANCE: f64 = 0.1;
/// Discrepancies at or below this are treated as zero.
pub const FIT_FLOOR: f64 = 1e-14;
/// Slack on the calibrated Monte Carlo bound.
pub const MC_SLACK: f64 = 1.5;
pub const MIN_TRIALS: usize = 16;

const SOLVE_TOL: f64 = 1e-13;
const SOLVE_MAX_ITER: usize = 5000;

type BoxedError = Box<dyn StdError + Send + Sync>;

#[derive(Debug, Error)]
pub enum ContError {
    #[error("order {0} outside (0, 1)")]
    AlphaOutOfRange(f64),
    #[error("lambda {0} must be negative")]
    LambdaNotNegative(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sampler support [{lo}, {hi}] leaves the band [{band_lo}, {band_hi}]")]
    SamplerOutOfBand { lo: f64, hi: f64, band_lo: f64, band_hi: f64 },
    #[error("{0} trials, need at least {MIN_TRIALS}")]
    TooFewTrials(usize),
    #[error("solver failed at h = {h}: {source}")]
    SolverFailure {
        h: f64,
        #[source]
        source: BoxedError,
    },
    #[error("all discrepancies below {FIT_FLOOR}")]
    DegenerateFit,
    #[error("report CSV: {0}")]
    Csv(String),
}

/// The solver whose order dependence is measured.
#[derive(Debug, Clone)]
pub enum Target {
    /// u = g + λ J^α u with constant g.
    Abel { lambda: f64, g: f64, grid: Arc<TimeGrid> },
    /// D^α y + p y = 0 with (J^{1-α} y)(0) = b.
    Seqfde { p: f64, b: f64, grid: Arc<TimeGrid> },
    SpectralHomogeneous { op: SpectralOperator, theta: ModeVector, beta: f64, grid: Arc<TimeGrid> },
    SpectralForced { op: SpectralOperator, forcing: ModeTrajectory, beta: f64 },
}

impl Target {
    fn is_spectral(&self) -> bool {
        matches!(self, Target::SpectralHomogeneous { .. } | Target::SpectralForced { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Target::Abel { .. } => "abel",
            Target::Seqfde { .. } => "seqfde",
            Target::SpectralHomogeneous { .. } => "spectral",
            Target::SpectralForced { .. } => "forced",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    /// sup_n t_n^γ |v_n| over the nodes with t_n > 0.
    WeightedSup(f64),
    Lp(f64),
    /// sup_t ‖v(t)‖_{H^ρ}.
    SpectralSup(f64),
    /// (∫ ‖v(t)‖²_{H^ρ} dt)^{1/2}.
    SpectralL2(f64),
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub target: Target,
    pub alpha: f64,
    /// Declared order band [α₀, α₁].
    pub band: (f64, f64),
    pub h0: f64,
    /// Rows m = 0..=levels.
    pub levels: usize,
    pub norm: Norm,
    pub predicted: f64,
}

impl SweepConfig {
    /// Spectral homogeneous sweep with predicted exponent min{1, (s-ρ)/β}.
    pub fn spectral(
        op: SpectralOperator,
        theta: ModeVector,
        s: f64,
        rho: f64,
        beta: f64,
        alpha: f64,
        h0: f64,
        levels: usize,
        grid: Arc<TimeGrid>,
    ) -> Result<Self, ContError> {
        let predicted = predicted_exponent(s, rho, beta).map_err(|e| ContError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            target: Target::SpectralHomogeneous { op, theta, beta, grid },
            alpha,
            band: symmetric_band(alpha, h0),
            h0,
            levels,
            norm: Norm::SpectralSup(rho),
            predicted,
        })
    }

    /// θ = e₁ for the one-mode operator λ₁ = 1.
    pub fn spectral_unit(s: f64, rho: f64, beta: f64, alpha: f64, h0: f64, levels: usize) -> Result<Self, ContError> {
        let op = SpectralOperator::new(vec![1.0], "unit").map_err(|e| ContError::InvalidConfig(e.to_string()))?;
        Self::spectral(op, ModeVector::unit(1, 1), s, rho, beta, alpha, h0, levels, uniform(1.0, 64)?)
    }

    /// Dirichlet Laplacian on (0, 1) with θ_p = p^{-(2s+0.51)}, which lies in H^s
    /// and barely misses H^{s+0.005}.
    pub fn spectral_power(
        s: f64,
        rho: f64,
        beta: f64,
        alpha: f64,
        h0: f64,
        levels: usize,
        modes: usize,
    ) -> Result<Self, ContError> {
        let op = dirichlet_laplacian_1d(1.0, modes).map_err(|e| ContError::InvalidConfig(e.to_string()))?;
        let theta = ModeVector::from_fn(modes, |p| power_coefficient(p, s)).map_err(|e| ContError::InvalidConfig(e.to_string()))?;
        Self::spectral(op, theta, s, rho, beta, alpha, h0, levels, uniform(1.0, 128)?)
    }

    /// Linear Abel equation u = g + λ J^α u in the sup norm, Lipschitz in α.
    pub fn abel_linear(lambda: f64, g: f64, alpha: f64, h0: f64, levels: usize, n: usize) -> Result<Self, ContError> {
        Ok(Self {
            target: Target::Abel { lambda, g, grid: uniform(1.0, n)? },
            alpha,
            band: symmetric_band(alpha, h0),
            h0,
            levels,
            norm: Norm::WeightedSup(0.0),
            predicted: 1.0,
        })
    }

    /// Sequential relaxation D^α y + p y = 0, (J^{1-α} y)(0) = b, in C_γ with
    /// γ = 1 - α₀/2 for the band's lower edge α₀.
    pub fn seqfde_relaxation(p: f64, b: f64, alpha: f64, h0: f64, levels: usize, n: usize) -> Result<Self, ContError> {
        let band = symmetric_band(alpha, h0);
        Ok(Self {
            target: Target::Seqfde { p, b, grid: uniform(1.0, n)? },
            alpha,
            band,
            h0,
            levels,
            norm: Norm::WeightedSup(1.0 - 0.5 * band.0),
            predicted: 1.0,
        })
    }

    /// Forced spectral problem with exponent (β₀-ρ)/(β₀+β₁+δ), measured in sup_t H^ρ.
    pub fn spectral_forced(
        op: SpectralOperator,
        forcing: ModeTrajectory,
        beta: f64,
        exponent: f64,
        rho: f64,
        alpha: f64,
        h0: f64,
        levels: usize,
    ) -> Result<Self, ContError> {
        Ok(Self {
            target: Target::SpectralForced { op, forcing, beta },
            alpha,
            band: symmetric_band(alpha, h0),
            h0,
            levels,
            norm: Norm::SpectralSup(rho),
            predicted: exponent,
        })
    }

    /// Check of the declared band, the norm and the level count.
    pub fn validate(&self) -> Result<(), ContError> {
        let (lo, hi) = self.band;
        let bad = |m: String| Err(ContError::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ContError::AlphaOutOfRange(self.alpha));
        }
        if !(self.h0 > 0.0 && self.h0.is_finite()) {
            return bad(format!("h0 = {} must be positive", self.h0));
        }
        if self.levels == 0 {
            return bad("need at least one level".into());
        }
        if !(lo > 0.0 && lo <= self.alpha && self.alpha + self.h0 <= hi * (1.0 + 1e-15) && hi <= 1.0) {
            return bad(format!("alpha + h0 = {} leaves the band [{lo}, {hi}]", self.alpha + self.h0));
        }
        if !(self.predicted > 0.0 && self.predicted.is_finite()) {
            return bad(format!("predicted exponent {}", self.predicted));
        }
        let spectral_norm = matches!(self.norm, Norm::SpectralSup(_) | Norm::SpectralL2(_));
        if spectral_norm != self.target.is_spectral() {
            return bad(format!("norm {:?} does not apply to the {} target", self.norm, self.target.name()));
        }
        match self.norm {
            Norm::WeightedSup(g) if !(0.0..1.0).contains(&g) => bad(format!("weight {g}")),
            Norm::Lp(p) if !(p >= 1.0) => bad(format!("norm index {p}")),
            Norm::SpectralSup(r) | Norm::SpectralL2(r) if !(r >= 0.0) => bad(format!("rho {r}")),
            _ => Ok(()),
        }
    }

    /// h_m = h₀ 2^{-m}.
    pub fn perturbations(&self) -> Vec<f64> {
        (0..=self.levels).map(|m| self.h0 * 0.5f64.powi(m as i32)).collect()
    }
}

/// [α - h₀, α + h₀] clipped to (0, 1].
pub fn symmetric_band(alpha: f64, h0: f64) -> (f64, f64) {
    ((alpha - h0).max(0.5 * alpha), (alpha + h0).min(1.0))
}

fn uniform(t_end: f64, n: usize) -> Result<Arc<TimeGrid>, ContError> {
    TimeGrid::uniform(t_end, n).map(Arc::new).map_err(|e| ContError::InvalidConfig(e.to_string()))
}

pub fn power_coefficient(p: usize, s: f64) -> f64 {
    (p as f64).powf(-(2.0 * s + 0.51))
}

/// A solved instance, ready for differencing.
#[derive(Debug, Clone)]
pub enum Solution {
    Grid(GridFn),
    Modes(ModeTrajectory),
}

fn boxed(e: impl StdError + Send + Sync + 'static) -> BoxedError {
    Box::new(e)
}

/// Solves the target at order α.
pub fn solve_target(target: &Target, alpha: f64, band: (f64, f64)) -> Result<Solution, BoxedError> {
    match target {
        Target::Abel { lambda, g, grid } => {
            let p = AbelProblem::new(KernelSpec::relaxation(*lambda, alpha), GridFn::constant(grid, *g), alpha, 0.0)?;
            Ok(Solution::Grid(solve_second_kind(&p, SOLVE_TOL, SOLVE_MAX_ITER)?.u))
        }
        Target::Seqfde { p, b, grid } => {
            let pc = *p;
            let orders = SequentialOrders::new(vec![alpha])?;
            let bound = b.abs() + 1.0;
            let sp = SequentialProblem::new(
                orders,
                vec![Arc::new(move |_| pc)],
                GridFn::constant(grid, 0.0),
                vec![*b],
                band.0,
                (-bound, bound),
            )?;
            Ok(Solution::Grid(solve_sequential(&sp, sp.default_gamma(), SOLVE_TOL)?.1))
        }
        Target::SpectralHomogeneous { op, theta, beta, grid } => {
            Ok(Solution::Modes(solve_homogeneous(theta, op, alpha, *beta, grid)?))
        }
        Target::SpectralForced { op, forcing, beta } => Ok(Solution::Modes(solve_forced(forcing, op, alpha, *beta)?)),
    }
}

/// Norm of the difference of two solutions of the same target.
pub fn discrepancy(target: &Target, norm: Norm, a: &Solution, b: &Solution) -> Result<f64, BoxedError> {
    match (a, b) {
        (Solution::Grid(a), Solution::Grid(b)) => {
            if !a.same_grid(b) || a.dim() != b.dim() {
                return Err(boxed(crate::fracgrid::GridError::GridMismatch));
            }
            let t = a.grid().nodes();
            // the two orders may carry different singular weights, so difference raw values
            let diff: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
            let d = a.dim();
            let start = a.first_index().max(b.first_index());
            match norm {
                Norm::WeightedSup(g) => Ok((start..t.len())
                    .map(|n| {
                        let v = diff[n * d..(n + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt();
                        if g == 0.0 { v } else { t[n].powf(g) * v }
                    })
                    .fold(0.0, f64::max)),
                Norm::Lp(p) => {
                    let w = a.weight().max(b.weight());
                    let f = GridFn::new(a.grid().clone(), d, diff, w)?;
                    Ok(f.lp_norm(p)?)
                }
                _ => Err(boxed(SpecError::BadOrdering("spectral norm on a grid solution".into()))),
            }
        }
        (Solution::Modes(a), Solution::Modes(b)) => {
            let op = match target {
                Target::SpectralHomogeneous { op, .. } | Target::SpectralForced { op, .. } => op,
                _ => unreachable!("mode solutions come from spectral targets"),
            };
            let diff = a.sub(b)?;
            match norm {
                Norm::SpectralSup(r) => Ok(diff.sup_hs(op, r)?),
                Norm::SpectralL2(r) => Ok(diff.l2_hs(op, r)?),
                _ => Err(boxed(SpecError::BadOrdering("grid norm on a mode solution".into()))),
            }
        }
        _ => Err(boxed(SpecError::BadOrdering("solutions of different kinds".into()))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityReport {
    /// (h, discrepancy), h decreasing.
    pub rows: Vec<(f64, f64)>,
    pub slope: f64,
    pub predicted: f64,
    pub fitted_constant: f64,
    pub verdict: bool,
    /// Theoretical envelope E²_{α₀,1-γ}(κΓ(α₁) max{T^{α₀}, T^{α₁}}) where one is known.
    pub envelope: Option<f64>,
}

/// Least-squares line through (ln h, ln d) over the rows with d above [`FIT_FLOOR`];
/// returns (slope, intercept).
pub fn fit_loglog(rows: &[(f64, f64)]) -> Result<(f64, f64), ContError> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.1 > FIT_FLOOR && r.0 > 0.0).map(|r| (r.0.ln(), r.1.ln())).collect();
    if pts.len() < 2 {
        return Err(ContError::DegenerateFit);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(ContError::DegenerateFit);
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

impl ContinuityReport {
    pub fn from_rows(rows: Vec<(f64, f64)>, predicted: f64, envelope: Option<f64>) -> Result<Self, ContError> {
        if rows.is_empty() || rows.iter().any(|r| !(r.1 >= 0.0)) {
            return Err(ContError::InvalidConfig("rows must be nonempty with nonnegative discrepancies".into()));
        }
        if rows.iter().all(|r| r.1 < FIT_FLOOR) {
            return Err(ContError::DegenerateFit);
        }
        let (slope, intercept) = fit_loglog(&rows)?;
        let monotone = rows.windows(2).all(|w| w[1].1 <= w[0].1);
        let verdict = slope >= predicted - SLOPE_TOLERANCE && monotone;
        Ok(Self { rows, slope, predicted, fitted_constant: intercept.exp(), verdict, envelope })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "h,discrepancy")?;
        for (h, d) in &self.rows {
            writeln!(w, "{},{}", fmt_f64(*h), fmt_f64(*d))?;
        }
        write!(
            w,
            "slope={},predicted={},constant={},verdict={}",
            fmt_f64(self.slope),
            fmt_f64(self.predicted),
            fmt_f64(self.fitted_constant),
            if self.verdict { "pass" } else { "fail" }
        )?;
        if let Some(e) = self.envelope {
            write!(w, ",envelope={}", fmt_f64(e))?;
        }
        writeln!(w)
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, ContError> {
        let csv = |m: String| ContError::Csv(m);
        let mut rows = Vec::new();
        let mut footer = None;
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| csv(e.to_string()))?;
            if i == 0 {
                if line.trim() != "h,discrepancy" {
                    return Err(csv(format!("unexpected header {line:?}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if line.starts_with("slope=") {
                footer = Some(parse_footer(&line)?);
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 2 {
                return Err(csv(format!("row {line:?}")));
            }
            rows.push((parse_num(f[0])?, parse_num(f[1])?));
        }
        let kv = footer.ok_or_else(|| csv("missing footer".into()))?;
        let get = |k: &str| kv.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone());
        let num = |k: &str| get(k).ok_or_else(|| csv(format!("footer lacks {k}"))).and_then(|v| parse_num(&v));
        Ok(Self {
            rows,
            slope: num("slope")?,
            predicted: num("predicted")?,
            fitted_constant: num("constant")?,
            verdict: get("verdict").as_deref() == Some("pass"),
            envelope: get("envelope").map(|v| parse_num(&v)).transpose()?,
        })
    }
}

fn parse_num(s: &str) -> Result<f64, ContError> {
    s.trim().parse().map_err(|e| ContError::Csv(format!("{s}: {e}")))
}

fn parse_footer(line: &str) -> Result<Vec<(String, String)>, ContError> {
    line.split(',')
        .map(|kv| {
            kv.split_once('=').map(|(k, v)| (k.trim().to_string(), v.trim().to_string())).ok_or_else(|| ContError::Csv(format!("footer item {kv:?}")))
        })
        .collect()
}

/// E²_{α₀,1}(|λ| Γ(α₁) max{T^{α₀}, T^{α₁}}) for the linear Abel target.
fn abel_envelope(cfg: &SweepConfig) -> Option<f64> {
    let Target::Abel { lambda, grid, .. } = &cfg.target else { return None };
    let (a0, a1) = cfg.band;
    let t = grid.horizon();
    let arg = lambda.abs() * gamma(a1) * t.powf(a0).max(t.powf(a1));
    ml(a0, 1.0, arg).ok().map(|e| e * e)
}

/// Solves the base problem and every perturbed order α + h_m, and fits the exponent.
pub fn sweep_orders(cfg: &SweepConfig) -> Result<ContinuityReport, ContError> {
    cfg.validate()?;
    let base = solve_target(&cfg.target, cfg.alpha, cfg.band).map_err(|source| ContError::SolverFailure { h: 0.0, source })?;
    let rows = cfg
        .perturbations()
        .into_par_iter()
        .map(|h| {
            let fail = |source| ContError::SolverFailure { h, source };
            let sol = solve_target(&cfg.target, cfg.alpha + h, cfg.band).map_err(fail)?;
            let d = discrepancy(&cfg.target, cfg.norm, &sol, &base).map_err(fail)?;
            Ok((h, d))
        })
        .collect::<Result<Vec<_>, ContError>>()?;
    ContinuityReport::from_rows(rows, cfg.predicted, abel_envelope(cfg))
}

/// Distribution of the random orders a_n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampler {
    Uniform { lo: f64, hi: f64 },
    /// lo or hi with probability 1/2 each.
    TwoPoint { lo: f64, hi: f64 },
    Point(f64),
}

impl Sampler {
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Sampler::Uniform { lo, hi } | Sampler::TwoPoint { lo, hi } => (lo, hi),
            Sampler::Point(a) => (a, a),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            Sampler::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Sampler::TwoPoint { lo, hi } => {
                if rng.random::<f64>() < 0.5 {
                    lo
                } else {
                    hi
                }
            }
            Sampler::Point(a) => a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomOrderConfig {
    pub sampler: Sampler,
    pub trials: usize,
    /// Moment index λ ≥ ν.
    pub lambda_moment: f64,
    pub seed: u64,
}

/// Generator for trial `trial`: ChaCha8 keyed by the seed, on stream number `trial`.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// (mean |a - α|^λ)^{ν/λ} over the sample.
pub fn sample_moment(samples: &[f64], alpha: f64, lambda: f64, nu: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let m = samples.iter().map(|a| (a - alpha).abs().powf(lambda)).sum::<f64>() / samples.len() as f64;
    m.powf(nu / lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    /// (trial, a, discrepancy) in trial order.
    pub samples: Vec<(usize, f64, f64)>,
    pub mean: f64,
    pub moment: f64,
    pub nu: f64,
    pub lambda_moment: f64,
    /// Constant calibrated by the deterministic sweep.
    pub constant: f64,
    pub verdict: bool,
    pub sweep: ContinuityReport,
}

impl MonteCarloReport {
    pub fn bound(&self) -> f64 {
        MC_SLACK * self.constant * self.moment
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "trial,a,discrepancy")?;
        for (i, a, d) in &self.samples {
            writeln!(w, "{i},{},{}", fmt_f64(*a), fmt_f64(*d))?;
        }
        writeln!(
            w,
            "mean={},moment={},nu={},lambda={},constant={},verdict={}",
            fmt_f64(self.mean),
            fmt_f64(self.moment),
            fmt_f64(self.nu),
            fmt_f64(self.lambda_moment),
            fmt_f64(self.constant),
            if self.verdict { "pass" } else { "fail" }
        )
    }
}

/// Random orders a_n from the sampler: mean discrepancy against the calibrated bound
/// C (E|a_n - α|^λ)^{ν/λ}, with C the sweep's fitted constant and ν its predicted exponent.
pub fn monte_carlo_orders(cfg: &RandomOrderConfig, sweep: &SweepConfig) -> Result<MonteCarloReport, ContError> {
    sweep.validate()?;
    if cfg.trials < MIN_TRIALS {
        return Err(ContError::TooFewTrials(cfg.trials));
    }
    let (lo, hi) = cfg.sampler.support();
    let (band_lo, band_hi) = sweep.band;
    if !(lo >= band_lo && hi <= band_hi && lo <= hi) {
        return Err(ContError::SamplerOutOfBand { lo, hi, band_lo, band_hi });
    }
    let nu = sweep.predicted.min(1.0);
    if !(cfg.lambda_moment >= nu) {
        return Err(ContError::InvalidConfig(format!("moment index {} below nu = {nu}", cfg.lambda_moment)));
    }
    let report = sweep_orders(sweep)?;
    let band = sweep.band;
    let base = solve_target(&sweep.target, sweep.alpha, band).map_err(|source| ContError::SolverFailure { h: 0.0, source })?;
    let samples = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let a = cfg.sampler.sample(&mut trial_rng(cfg.seed, i));
            let h = a - sweep.alpha;
            if h == 0.0 {
                return Ok((i, a, 0.0));
            }
            let fail = |source| ContError::SolverFailure { h, source };
            let sol = solve_target(&sweep.target, a, band).map_err(fail)?;
            Ok((i, a, discrepancy(&sweep.target, sweep.norm, &sol, &base).map_err(fail)?))
        })
        .collect::<Result<Vec<_>, ContError>>()?;
    let mean = samples.iter().map(|s| s.2).sum::<f64>() / samples.len() as f64;
    let orders: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let moment = sample_moment(&orders, sweep.alpha, cfg.lambda_moment, nu);
    let constant = report.fitted_constant;
    let verdict = mean <= MC_SLACK * constant * moment;
    Ok(MonteCarloReport { samples, mean, moment, nu, lambda_moment: cfg.lambda_moment, constant, verdict, sweep: report })
}

/// G(t) = ∫_0^t f(τ) (t-τ)^{α-1} E_{α,α}(λ(t-τ)^α) dτ on the grid of f.
pub fn ml_convolution(f: &GridFn, alpha: f64, lambda: f64) -> Result<GridFn, ContError> {
    if f.is_weighted() {
        return Err(ContError::InvalidConfig("forcing must be bounded".into()));
    }
    let kernel = MlKernel::new(alpha, lambda).map_err(|e| ContError::InvalidConfig(e.to_string()))?;
    let grid = f.grid().clone();
    let rule = ProductRule::new(&kernel, &grid, 0.0);
    let d = f.dim();
    let mut out = vec![0.0; f.values().len()];
    let mut buf = Vec::new();
    for n in 1..grid.len() {
        for c in 0..d {
            out[n * d + c] = rule.apply_component(n, f.values(), d, c, &mut buf);
        }
    }
    GridFn::new(grid, d, out, 0.0).map_err(|e| ContError::InvalidConfig(e.to_string()))
}

/// Grid L² distance of the two convolutions and its ratio to
/// [|α'-α|(1+|λ|) + |λ'-λ|] ‖f‖₂; the ratio is 0 when both sides vanish.
pub fn convolution_continuity(f: &GridFn, alpha: f64, alpha_p: f64, lambda: f64, lambda_p: f64) -> Result<(f64, f64), ContError> {
    for a in [alpha, alpha_p] {
        if !(a > 0.0 && a < 1.0) {
            return Err(ContError::AlphaOutOfRange(a));
        }
    }
    for l in [lambda, lambda_p] {
        if !(l < 0.0) {
            return Err(ContError::LambdaNotNegative(l));
        }
    }
    let g = ml_convolution(f, alpha, lambda)?;
    let gp = ml_convolution(f, alpha_p, lambda_p)?;
    let l2 = |v: &GridFn| v.lp_norm(2.0).map_err(|e| ContError::InvalidConfig(e.to_string()));
    let lhs = l2(&gp.sub(&g).map_err(|e| ContError::InvalidConfig(e.to_string()))?)?;
    if lhs == 0.0 {
        return Ok((0.0, 0.0));
    }
    let scale = ((alpha_p - alpha).abs() * (1.0 + lambda.abs()) + (lambda_p - lambda).abs()) * l2(f)?;
    Ok((lhs, lhs / scale))
}
