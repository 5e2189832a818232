//! Two-parameter Mittag-Leffler function E_{α,β}(z) on the real line, with
//! z-derivative and parameter partials.
//!
//! Small arguments are summed as a power series. Large negative arguments with
//! α < 1 use the algebraic asymptotic expansion when it reaches the tolerance.
//! Everything else goes through the Hankel-type contour made of two rays at angle
//! ±φ and an arc of radius ρ, with the residue term added when z sits to the right
//! of the arc.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::quad::gl16;
use crate::special::rgamma;

/// Default relative tolerance for evaluations.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Series is attempted for |z| up to this radius.
pub const SERIES_RADIUS: f64 = 5.0;
/// At or beyond this z the contour arc is kept to the left of z and the residue term is added.
pub const RESIDUE_SWITCH: f64 = 0.5;

const MAX_SERIES_TERMS: usize = 20_000;
const MAX_ASYMPTOTIC_TERMS: usize = 200;
const MAX_RAY_PANELS: usize = 200_000;
const ROUNDING: f64 = 2.3e-16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlError {
    #[error("alpha must be positive and finite, got {0}")]
    NonPositiveAlpha(f64),
    #[error("parameter must be finite: {0}")]
    NonFinite(&'static str),
    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error("tolerance not reached for alpha={alpha}, beta={beta}, z={z}")]
    ToleranceNotReached { alpha: f64, beta: f64, z: f64 },
    #[error("contour constraint violated: {0}")]
    ContourConstraintViolated(String),
    #[error("contour quadrature did not converge")]
    QuadratureDiverged,
    #[error("residue term needs z > 0, got {0}")]
    NonPositiveZ(f64),
}

/// One evaluation request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlQuery {
    pub alpha: f64,
    pub beta: f64,
    pub z: f64,
    pub tol: f64,
}

impl MlQuery {
    pub fn new(alpha: f64, beta: f64, z: f64) -> Self {
        Self { alpha, beta, z, tol: DEFAULT_TOL }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn validate(&self) -> Result<(), MlError> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(MlError::NonPositiveAlpha(self.alpha));
        }
        if !self.beta.is_finite() {
            return Err(MlError::NonFinite("beta"));
        }
        if !self.z.is_finite() {
            return Err(MlError::NonFinite("z"));
        }
        if !(self.tol > 0.0) {
            return Err(MlError::NonPositiveTolerance(self.tol));
        }
        Ok(())
    }
}

/// Contour geometry: arc radius, ray angle, Gauss nodes per panel, and the α-band it must serve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourSpec {
    pub rho: f64,
    pub phi: f64,
    pub nodes: usize,
    pub alpha_band: (f64, f64),
}

impl ContourSpec {
    /// Default geometry for a single α and argument z.
    pub fn for_alpha(alpha: f64, z: f64) -> Self {
        Self::for_band(alpha, alpha, z)
    }

    /// Geometry valid for every α in [alpha0, alpha1] at argument z.
    pub fn for_band(alpha0: f64, alpha1: f64, z: f64) -> Self {
        let hi = (PI * alpha0).min(PI);
        let lo = 0.5 * PI * alpha1;
        let phi = if alpha0 <= 1.0 && alpha1 <= alpha0 * 1.25 {
            // steepest decay along the ray while staying inside the sector
            (0.8 * PI * alpha0).max(lo + 0.3 * (hi - lo))
        } else {
            0.5 * (lo + hi)
        };
        let rho = if z >= RESIDUE_SWITCH {
            (0.5 * z).min(1.0)
        } else if z >= 0.0 {
            z + 1.0
        } else {
            1.0
        };
        Self { rho, phi, nodes: 16, alpha_band: (alpha0, alpha1) }
    }

    /// Checks the sector condition and the distance between z and the arc.
    pub fn check(&self, alpha: f64, z: f64) -> Result<(), MlError> {
        let (a0, a1) = self.alpha_band;
        if !(a0 > 0.0 && a0 <= a1 && a1 < 2.0) {
            return Err(MlError::ContourConstraintViolated(format!(
                "alpha band [{a0}, {a1}] must satisfy 0 < a0 <= a1 < 2"
            )));
        }
        if alpha < a0 - 1e-15 || alpha > a1 + 1e-15 {
            return Err(MlError::ContourConstraintViolated(format!(
                "alpha {alpha} outside band [{a0}, {a1}]"
            )));
        }
        let lo = 0.5 * PI * a1;
        let hi = (PI * a0).min(PI);
        if !(self.phi > lo && self.phi < hi) {
            return Err(MlError::ContourConstraintViolated(format!(
                "phi {} not in ({lo}, {hi})",
                self.phi
            )));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(MlError::ContourConstraintViolated(format!("rho {} must be positive", self.rho)));
        }
        if (z - self.rho).abs() < 0.05 * self.rho {
            return Err(MlError::ContourConstraintViolated(format!(
                "z = {z} too close to the arc of radius {}",
                self.rho
            )));
        }
        if self.nodes < 4 {
            return Err(MlError::ContourConstraintViolated("need at least 4 nodes per panel".into()));
        }
        Ok(())
    }
}

/// Which representation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Auto,
    Series,
    /// -Σ_{k≥1} z^{-k}/Γ(β - αk), for z < 0 and α < 1 only.
    Asymptotic,
    Contour,
}

/// E_{α,β}(z).
pub fn ml_eval(q: &MlQuery) -> Result<f64, MlError> {
    ml_eval_with(q, Strategy::Auto)
}

/// Convenience form of [`ml_eval`] with the default tolerance.
pub fn ml(alpha: f64, beta: f64, z: f64) -> Result<f64, MlError> {
    ml_eval(&MlQuery::new(alpha, beta, z))
}

/// E_{α,β}(z) with a forced strategy.
pub fn ml_eval_with(q: &MlQuery, strategy: Strategy) -> Result<f64, MlError> {
    q.validate()?;
    let MlQuery { alpha, beta, z, tol } = *q;
    if z == 0.0 {
        return Ok(rgamma(beta));
    }
    match strategy {
        Strategy::Series => {
            let s = series(alpha, beta, z, tol);
            if s.converged && s.accurate(tol) {
                Ok(s.sum)
            } else {
                Err(MlError::ToleranceNotReached { alpha, beta, z })
            }
        }
        Strategy::Asymptotic => asymptotic(alpha, beta, z, tol).ok_or(MlError::ToleranceNotReached { alpha, beta, z }),
        Strategy::Contour => {
            if alpha >= 2.0 {
                return Err(MlError::ContourConstraintViolated(format!(
                    "no admissible contour for alpha = {alpha} >= 2"
                )));
            }
            let spec = ContourSpec::for_alpha(alpha, z);
            Ok(contour(alpha, beta, z, &spec, false)?.value)
        }
        Strategy::Auto => {
            if z.abs() <= SERIES_RADIUS || alpha >= 2.0 {
                let s = series(alpha, beta, z, tol);
                if s.converged && s.accurate(tol) {
                    return Ok(s.sum);
                }
                if alpha >= 2.0 {
                    return Err(MlError::ToleranceNotReached { alpha, beta, z });
                }
            }
            if z < -SERIES_RADIUS {
                if let Some(v) = asymptotic(alpha, beta, z, tol) {
                    return Ok(v);
                }
            }
            let spec = ContourSpec::for_alpha(alpha, z);
            Ok(contour(alpha, beta, z, &spec, false)?.value)
        }
    }
}

/// d/dz E_{α,1}(z) = E_{α,α}(z)/α.
pub fn ml_deriv_z(alpha: f64, z: f64) -> Result<f64, MlError> {
    Ok(ml_eval(&MlQuery::new(alpha, alpha, z))? / alpha)
}

/// Partials of E_{α,β}(z) in α and β, with the envelope constant of the integrand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlPartials {
    pub value: f64,
    pub d_alpha: f64,
    pub d_beta: f64,
    /// (1 + |z|) times the contour integral of |∂F| over the contour, divided by 2π.
    pub envelope: f64,
}

/// ∂E/∂α and ∂E/∂β by differentiating under the contour integral.
pub fn ml_partials(q: &MlQuery, spec: &ContourSpec) -> Result<MlPartials, MlError> {
    q.validate()?;
    spec.check(q.alpha, q.z)?;
    let c = contour(q.alpha, q.beta, q.z, spec, true)?;
    Ok(MlPartials { value: c.value, d_alpha: c.d_alpha, d_beta: c.d_beta, envelope: c.envelope })
}

/// Partials with the default contour for (α, z).
pub fn ml_partials_default(alpha: f64, beta: f64, z: f64) -> Result<MlPartials, MlError> {
    ml_partials(&MlQuery::new(alpha, beta, z), &ContourSpec::for_alpha(alpha, z))
}

/// The residue term (1/α) z^{(1-β)/α} exp(z^{1/α}) and its parameter partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phi0 {
    pub value: f64,
    pub ln_value: f64,
    pub d_alpha: f64,
    pub d_beta: f64,
}

pub fn phi0_eval(alpha: f64, beta: f64, z: f64) -> Result<Phi0, MlError> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(MlError::NonPositiveAlpha(alpha));
    }
    if !beta.is_finite() {
        return Err(MlError::NonFinite("beta"));
    }
    if !(z > 0.0) || !z.is_finite() {
        return Err(MlError::NonPositiveZ(z));
    }
    let lz = z.ln();
    let w = (lz / alpha).exp();
    let ln_value = -alpha.ln() + (1.0 - beta) * lz / alpha + w;
    let value = ln_value.exp();
    let ma = -1.0 / alpha - (1.0 - beta) * lz / (alpha * alpha) - w * lz / (alpha * alpha);
    let mb = -lz / alpha;
    Ok(Phi0 { value, ln_value, d_alpha: value * ma, d_beta: value * mb })
}

struct SeriesOutcome {
    sum: f64,
    abs_sum: f64,
    converged: bool,
}

impl SeriesOutcome {
    fn accurate(&self, tol: f64) -> bool {
        // rounding grows with the condition number Σ|t_k| / |Σ t_k|
        self.sum.is_finite() && self.abs_sum * ROUNDING * 8.0 <= tol * self.sum.abs()
    }
}

fn series(alpha: f64, beta: f64, z: f64, tol: f64) -> SeriesOutcome {
    let lz = z.abs().ln();
    let neg = z < 0.0;
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut abs_sum = 0.0;
    let mut small_run = 0;
    for k in 0..MAX_SERIES_TERMS {
        let kf = k as f64;
        let arg = kf * alpha + beta;
        let mag = if arg <= 0.0 && arg == arg.round() {
            0.0
        } else if arg < 160.0 && kf * lz < 690.0 {
            z.abs().powi(k as i32) * rgamma(arg).abs()
        } else {
            (kf * lz - crate::special::ln_gamma(arg)).exp()
        };
        let sign_gamma = if arg > 0.0 || rgamma(arg) >= 0.0 { 1.0 } else { -1.0 };
        let sign = if neg && k % 2 == 1 { -sign_gamma } else { sign_gamma };
        let term = sign * mag;
        // Neumaier summation
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        abs_sum += mag;
        if !abs_sum.is_finite() {
            return SeriesOutcome { sum: f64::NAN, abs_sum, converged: false };
        }
        if arg > 2.0 && mag <= 1e-2 * tol * (sum + comp).abs() {
            small_run += 1;
            if small_run >= 2 {
                return SeriesOutcome { sum: sum + comp, abs_sum, converged: true };
            }
        } else if arg > 2.0 && mag == 0.0 && sum + comp == 0.0 {
            return SeriesOutcome { sum: 0.0, abs_sum, converged: true };
        } else {
            small_run = 0;
        }
    }
    SeriesOutcome { sum: sum + comp, abs_sum, converged: false }
}

/// For 0 < α < 1 and z < 0 the expansion has no exponential part. Truncation is
/// judged on the envelope |z|^{-k} Γ(1 - β + αk)/π ≥ |z^{-k}/Γ(β - αk)| (reflection
/// formula), which unlike the terms themselves cannot dip near the poles of Γ. The
/// sum is accepted once the envelope is below tol/100 of it, before it starts to grow.
fn asymptotic(alpha: f64, beta: f64, z: f64, tol: f64) -> Option<f64> {
    if !(alpha < 1.0 && z < 0.0) {
        return None;
    }
    let lz = (-z).ln();
    let iz = 1.0 / z;
    let mut pw = 1.0;
    let mut sum: f64 = 0.0;
    let mut last = f64::INFINITY;
    for k in 1..=MAX_ASYMPTOTIC_TERMS {
        let x = beta - alpha * k as f64;
        let env = if x < 0.5 {
            (crate::special::ln_gamma(1.0 - x) - k as f64 * lz).exp() / PI
        } else {
            rgamma(x).abs() * (-(k as f64) * lz).exp()
        };
        if env > last {
            return None;
        }
        if sum != 0.0 && env <= 1e-2 * tol * sum.abs() {
            return Some(sum);
        }
        pw *= iz;
        sum -= pw * rgamma(x);
        last = env;
    }
    None
}

struct ContourSums {
    value: f64,
    d_alpha: f64,
    d_beta: f64,
    envelope: f64,
}

/// Evaluates the contour representation. The integrand is
/// F(ζ) = (1/α) ζ^{(1-β)/α} exp(ζ^{1/α}) / (ζ - z); parameter partials use
/// ∂F/∂α = F·(-1/α - (1-β) ln ζ/α² - ζ^{1/α} ln ζ/α²) and ∂F/∂β = F·(-ln ζ/α).
fn contour(alpha: f64, beta: f64, z: f64, spec: &ContourSpec, partials: bool) -> Result<ContourSums, MlError> {
    spec.check(alpha, z)?;
    let rule = if spec.nodes == 16 { gl16().clone() } else { crate::quad::GaussLegendre::new(spec.nodes) };
    let rho = spec.rho;
    let phi = spec.phi;
    let ia = 1.0 / alpha;
    let one_b = 1.0 - beta;

    // multipliers (1, m_α, m_β) and |F| weights accumulate here
    let mut acc = [0.0f64; 3];
    let mut env = 0.0f64;

    // Rays: ζ = r e^{iφ}, r = u^α. The upper ray contributes Im(∫ G du)/π and the
    // lower ray is its conjugate.
    let eiphi = Complex64::from_polar(1.0, phi);
    let rot = Complex64::from_polar(1.0, phi * ia);
    let pre = Complex64::from_polar(1.0, phi * one_b * ia + phi);
    let decay = rot.re; // negative inside the sector
    if decay >= 0.0 {
        return Err(MlError::ContourConstraintViolated("rays do not decay".into()));
    }
    let u0 = rho.powf(ia);
    let ray_integrand = |u: f64| -> ([f64; 3], f64) {
        let lu = u.ln();
        let r = (alpha * lu).exp();
        let zeta = eiphi * r;
        let ln_zeta = Complex64::new(alpha * lu, phi);
        let w = rot * u;
        let g = pre * ((alpha - beta) * lu).exp() * w.exp() / (zeta - z);
        let (ma, mb) = multipliers(ia, one_b, ln_zeta, w);
        let ga = g * ma;
        let gb = g * mb;
        ([g.im, ga.im, gb.im], if partials { ga.norm() + gb.norm() } else { g.norm() })
    };
    let mut a = u0;
    let mut ray_abs = 0.0;
    let mut panels = 0usize;
    loop {
        // keep the pole at z several half-widths away from the panel in r
        let dist = (eiphi * (alpha * a.ln()).exp() - z).norm();
        let near = 0.5 * dist / (alpha * ((alpha - 1.0) * a.ln()).exp());
        let width = a.min(near).clamp(1e-300, 0.5);
        let b = a + width;
        let half = 0.5 * width;
        let mid = a + half;
        let mut panel_abs = 0.0;
        for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
            let (v, m) = ray_integrand(mid + half * x);
            let ww = wt * half;
            for i in 0..3 {
                acc[i] += ww * v[i] / PI;
            }
            panel_abs += ww * m;
        }
        ray_abs += panel_abs;
        panels += 1;
        // remaining tail bounded by the end value over the exponential decay rate
        let (_, end_mag) = ray_integrand(b);
        let slope = (-decay - ((alpha - beta).abs() + 2.0) / b).max(0.25 * -decay);
        let tail = end_mag / slope * (1.0 + b.ln().abs());
        a = b;
        if tail <= 1e-18 * ray_abs || (end_mag == 0.0 && b > u0 + 1.0) {
            break;
        }
        if panels > MAX_RAY_PANELS || !ray_abs.is_finite() {
            return Err(MlError::QuadratureDiverged);
        }
    }
    env += 2.0 * ray_abs / (2.0 * PI);

    // Arc: θ in [0, φ], contributes (1/π) ∫ Re(F ρ e^{iθ}) dθ.
    let theta_near = if z < 0.0 { phi } else { 0.0 };
    let arc_dist = (rho * rho + z * z - 2.0 * rho * z * theta_near.cos()).max(0.0).sqrt();
    let arc_panels = (((rho.powf(ia) * phi * ia) / 1.5).max(2.0 * rho * phi / arc_dist).ceil() as usize).clamp(2, 4096);
    let lrho = rho.ln();
    let rho_pow = rho.powf(ia);
    let mut arc_abs = 0.0;
    let step = phi / arc_panels as f64;
    for p in 0..arc_panels {
        let a = p as f64 * step;
        let half = 0.5 * step;
        let mid = a + half;
        for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
            let th = mid + half * x;
            let e = Complex64::from_polar(1.0, th);
            let zeta = e * rho;
            let ln_zeta = Complex64::new(lrho, th);
            let w = Complex64::from_polar(rho_pow, th * ia);
            let f = (ln_zeta * (one_b * ia)).exp() * w.exp() * ia / (zeta - z) * zeta;
            let (ma, mb) = multipliers(ia, one_b, ln_zeta, w);
            let fa = f * ma;
            let fb = f * mb;
            let ww = wt * half;
            acc[0] += ww * f.re / PI;
            acc[1] += ww * fa.re / PI;
            acc[2] += ww * fb.re / PI;
            arc_abs += ww * if partials { fa.norm() + fb.norm() } else { f.norm() };
        }
    }
    env += 2.0 * arc_abs / (2.0 * PI);

    if z > rho {
        let p = phi0_eval(alpha, beta, z)?;
        acc[0] += p.value;
        acc[1] += p.d_alpha;
        acc[2] += p.d_beta;
    }
    let wanted = if partials { &acc[..] } else { &acc[..1] };
    if !wanted.iter().all(|v| v.is_finite()) {
        return Err(MlError::QuadratureDiverged);
    }
    Ok(ContourSums { value: acc[0], d_alpha: acc[1], d_beta: acc[2], envelope: env * (1.0 + z.abs()) })
}

fn multipliers(ia: f64, one_b: f64, ln_zeta: Complex64, w: Complex64) -> (Complex64, Complex64) {
    let ma = -ia - ln_zeta * (one_b * ia * ia) - w * ln_zeta * (ia * ia);
    let mb = -ln_zeta * ia;
    (ma, mb)
}
