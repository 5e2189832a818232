//! Abel integral equations of the second and first kind with weakly singular
//! kernels (t - s)^{α-1}, solved on a [`TimeGrid`] by product integration.
//!
//! The second-kind equation is
//!
//! ```text
//! u(t) = g(t) + ∫_0^t (t - s)^{α-1} K(t, s, α, z, u(s)) ds
//! ```
//!
//! and is solved by Picard iteration of the discrete operator.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::conv::{LogPowerKernel, MlKernel, PowerKernel, ProductRule};
use crate::fracgrid::{rl_derivative, GridError, GridFn, TimeGrid};
use crate::mlf::{ml, MlError};
use crate::quad::GaussJacobi;
use crate::special::{gamma, rgamma};

/// K(t, s, α, z, w, out): writes the kernel value (same dimension as w) into `out`.
pub type KernelFn = dyn Fn(f64, f64, f64, &[f64], &[f64], &mut [f64]) + Send + Sync;

/// DK(t, s, α, z, w, out): writes the d×d Jacobian in w, row-major.
pub type JacobianFn = dyn Fn(f64, f64, f64, &[f64], &[f64], &mut [f64]) + Send + Sync;

/// Scalar kernel K0(t, s, α, z) of a first-kind equation, or its t-derivative.
pub type ScalarKernelFn = dyn Fn(f64, f64, f64, &[f64]) -> f64 + Send + Sync;

pub const KERNEL_PROBES: usize = 256;
const PROBE_SEED: u64 = 0xABE1;
/// Slack on the Picard norm bound absorbing the discretization error of the grid norms.
pub const PICARD_BOUND_SLACK: f64 = 1.01;
/// Largest relative residual accepted by [`order_sensitivity`].
pub const SENSITIVITY_RESIDUAL: f64 = 1e-8;
const LINEAR_TOL: f64 = 1e-13;
const LINEAR_MAX_ITER: usize = 5000;
const JACOBI_NODES: usize = 24;

#[derive(Debug, Error)]
pub enum AbelError {
    #[error("order {0} outside the admissible range")]
    AlphaOutOfRange(f64),
    #[error("weight {0} outside [0, 1) or below the weight of the data")]
    GammaOutOfRange(f64),
    #[error("Picard iteration stalled after {iterations} iterations (increment {increment:e})")]
    MaxIterExceeded { iterations: usize, increment: f64 },
    #[error("kernel probe failed: {0}")]
    KernelProbeFailed(String),
    #[error("negative lambda {0}")]
    NegativeLambda(f64),
    #[error("K0(t, t) = {value} at t = {t}, expected 1")]
    DiagonalNotNormalized { t: f64, value: f64 },
    #[error("solution residual {0:e} too large to differentiate")]
    NotConverged(f64),
    #[error("grid too coarse for Picard iteration: κ·max c_nn = {factor}")]
    GridTooCoarse { factor: f64 },
    #[error("forcing is not finite at t = {0}")]
    NonFiniteForcing(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid kernel declaration: {0}")]
    InvalidDeclaration(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Ml(#[from] MlError),
}

/// P(m, t, s, α, z, w, out): the m-th smooth factor of a [`PowerSplit`].
pub type PartFn = dyn Fn(usize, f64, f64, f64, &[f64], &[f64], &mut [f64]) + Send + Sync;

/// Optional decomposition K(t, s, w) = Σ_m (t - s)^{e_m} P_m(t, s, w) with P_m smooth
/// in s. Each term is then integrated exactly against (t - s)^{α + e_m - 1} instead of
/// interpolating the factor (t - s)^{e_m}.
#[derive(Clone)]
pub struct PowerSplit {
    pub exponents: Vec<f64>,
    /// Lipschitz constant of each P_m in w.
    pub kappas: Vec<f64>,
    pub parts: Arc<PartFn>,
}

/// Kernel of a second-kind equation with declared Lipschitz constant `kappa` in w
/// and bound `m0` on ‖K(t, s, α, z, 0)‖.
#[derive(Clone)]
pub struct KernelSpec {
    pub k: Arc<KernelFn>,
    pub kappa: f64,
    pub m0: f64,
    pub z: Vec<f64>,
    pub split: Option<PowerSplit>,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("kappa", &self.kappa)
            .field("m0", &self.m0)
            .field("z", &self.z)
            .field("split", &self.split.as_ref().map(|s| &s.exponents))
            .finish()
    }
}

impl KernelSpec {
    pub fn new(
        k: impl Fn(f64, f64, f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        kappa: f64,
        m0: f64,
        z: Vec<f64>,
    ) -> Result<Self, AbelError> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(AbelError::InvalidDeclaration(format!("kappa = {kappa}")));
        }
        if !(m0 >= 0.0 && m0.is_finite()) {
            return Err(AbelError::InvalidDeclaration(format!("M0 = {m0}")));
        }
        Ok(Self { k: Arc::new(k), kappa, m0, z, split: None })
    }

    /// Attaches a power decomposition of K; the probe checks that it reproduces K.
    pub fn with_split(
        mut self,
        exponents: Vec<f64>,
        kappas: Vec<f64>,
        parts: impl Fn(usize, f64, f64, f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self, AbelError> {
        if exponents.is_empty() || exponents.len() != kappas.len() {
            return Err(AbelError::InvalidDeclaration("split needs one kappa per exponent".into()));
        }
        if let Some(e) = exponents.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return Err(AbelError::InvalidDeclaration(format!("split exponent {e}")));
        }
        if let Some(k) = kappas.iter().find(|k| !(**k >= 0.0 && k.is_finite())) {
            return Err(AbelError::InvalidDeclaration(format!("split kappa {k}")));
        }
        self.split = Some(PowerSplit { exponents, kappas, parts: Arc::new(parts) });
        Ok(self)
    }

    /// K(t, s, α, z, w) = c·w.
    pub fn linear(c: f64) -> Self {
        Self {
            k: Arc::new(move |_, _, _, _, w, out| {
                for (o, v) in out.iter_mut().zip(w) {
                    *o = c * v;
                }
            }),
            kappa: c.abs(),
            m0: 0.0,
            z: Vec::new(),
            split: None,
        }
    }

    /// The relaxation kernel λw/Γ(α), so that u = g + λ J^α u.
    pub fn relaxation(lambda: f64, alpha: f64) -> Self {
        Self::linear(lambda * rgamma(alpha))
    }

    pub fn eval(&self, t: f64, s: f64, alpha: f64, w: &[f64], out: &mut [f64]) {
        (self.k)(t, s, alpha, &self.z, w, out)
    }

    /// Exponents e_m of the power terms; a single zero exponent without a split.
    pub fn exponents(&self) -> Vec<f64> {
        self.split.as_ref().map_or_else(|| vec![0.0], |s| s.exponents.clone())
    }

    fn eval_part(&self, m: usize, t: f64, s: f64, alpha: f64, w: &[f64], out: &mut [f64]) {
        match &self.split {
            Some(sp) => (sp.parts)(m, t, s, alpha, &self.z, w, out),
            None => self.eval(t, s, alpha, w, out),
        }
    }

    fn part_kappa(&self, m: usize) -> f64 {
        self.split.as_ref().map_or(self.kappa, |s| s.kappas[m])
    }
}

#[derive(Debug, Clone)]
pub struct AbelProblem {
    pub kernel: KernelSpec,
    pub g: GridFn,
    pub alpha: f64,
    pub gamma: f64,
}

impl AbelProblem {
    pub fn new(kernel: KernelSpec, g: GridFn, alpha: f64, gamma: f64) -> Result<Self, AbelError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(AbelError::AlphaOutOfRange(alpha));
        }
        if !((0.0..1.0).contains(&gamma) && g.weight() <= gamma) {
            return Err(AbelError::GammaOutOfRange(gamma));
        }
        Ok(Self { kernel, g, alpha, gamma })
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        self.g.grid()
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }
}

#[derive(Debug, Clone)]
pub struct AbelSolution {
    pub u: GridFn,
    /// Picard updates applied to reach `u`.
    pub iterations: usize,
    /// Weighted sup-norm of the last Picard increment, which equals the residual of `u`.
    pub increment: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GronwallCertificate {
    pub factor: f64,
    pub pnorm: f64,
}

impl GronwallCertificate {
    pub fn bound(&self, gnorm: f64) -> f64 {
        self.factor * gnorm
    }
}

/// Integral operator v ↦ Σ_j c_{n,j} F(n, j, v_j) for a convolution weight.
struct Quadrature<'a, K: crate::conv::ConvKernel> {
    rule: ProductRule<'a, K>,
    d: usize,
    j0: usize,
}

impl<'a, K: crate::conv::ConvKernel> Quadrature<'a, K> {
    fn new(kernel: &'a K, grid: &'a TimeGrid, weight: f64, d: usize) -> Self {
        Self { rule: ProductRule::new(kernel, grid, weight), d, j0: usize::from(weight > 0.0) }
    }

    /// The discrete Picard map contracts only if κ·c_nn < 1 at every node.
    fn check_diagonal(&self, kappa: f64, nodes: usize) -> Result<(), AbelError> {
        check_factor(kappa * (1..nodes).map(|n| self.rule.diagonal(n).abs()).fold(0.0, f64::max))
    }

    fn apply<F>(&self, eval: &F, v: &[f64], out: &mut [f64])
    where
        F: Fn(usize, usize, &[f64], &mut [f64]),
    {
        let d = self.d;
        let n_nodes = v.len() / d;
        let mut buf = Vec::new();
        let mut kv = vec![0.0; d];
        out[..d].iter_mut().for_each(|o| *o = if self.j0 == 1 { f64::NAN } else { 0.0 });
        for n in 1..n_nodes {
            let row = self.rule.row_ref(n, &mut buf);
            let acc = &mut out[n * d..(n + 1) * d];
            acc.iter_mut().for_each(|o| *o = 0.0);
            for (j, &c) in row.iter().enumerate().skip(self.j0) {
                eval(n, j, &v[j * d..(j + 1) * d], &mut kv);
                for (a, k) in acc.iter_mut().zip(&kv) {
                    *a += c * k;
                }
            }
        }
    }
}

fn check_factor(factor: f64) -> Result<(), AbelError> {
    if factor >= 1.0 {
        return Err(AbelError::GridTooCoarse { factor });
    }
    Ok(())
}

fn power_kernels(spec: &KernelSpec, alpha: f64) -> Vec<PowerKernel> {
    spec.exponents().into_iter().map(|e| PowerKernel { alpha: alpha + e }).collect()
}

/// The kernel of a second-kind equation discretized term by term.
struct Discrete<'a> {
    spec: &'a KernelSpec,
    t: &'a [f64],
    alpha: f64,
    quads: Vec<Quadrature<'a, PowerKernel>>,
}

impl<'a> Discrete<'a> {
    fn new(spec: &'a KernelSpec, kernels: &'a [PowerKernel], grid: &'a TimeGrid, alpha: f64, weight: f64, d: usize) -> Self {
        let quads = kernels.iter().map(|k| Quadrature::new(k, grid, weight, d)).collect();
        Self { spec, t: grid.nodes(), alpha, quads }
    }

    fn j0(&self) -> usize {
        self.quads[0].j0
    }

    fn check_diagonal(&self) -> Result<(), AbelError> {
        let factor = (1..self.t.len())
            .map(|n| self.quads.iter().enumerate().map(|(m, q)| self.spec.part_kappa(m) * q.rule.diagonal(n).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        check_factor(factor)
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let (t, a) = (self.t, self.alpha);
        let mut tmp = vec![0.0; if self.quads.len() > 1 { out.len() } else { 0 }];
        for (m, q) in self.quads.iter().enumerate() {
            let eval = |n: usize, j: usize, w: &[f64], o: &mut [f64]| self.spec.eval_part(m, t[n], t[j], a, w, o);
            if m == 0 {
                q.apply(&eval, v, out);
            } else {
                q.apply(&eval, v, &mut tmp);
                out.iter_mut().zip(&tmp).for_each(|(o, x)| *o += x);
            }
        }
    }
}

fn weighted_diff(a: &[f64], b: &[f64], t: &[f64], d: usize, j0: usize, gamma: f64) -> f64 {
    let mut m: f64 = 0.0;
    for n in j0..t.len() {
        let mut s = 0.0;
        for c in 0..d {
            let x = a[n * d + c] - b[n * d + c];
            s += x * x;
        }
        let w = if gamma > 0.0 { t[n].powf(gamma) } else { 1.0 };
        m = m.max(w * s.sqrt());
    }
    m
}

fn weighted_norm(a: &[f64], t: &[f64], d: usize, j0: usize, gamma: f64) -> f64 {
    let zeros = vec![0.0; a.len()];
    weighted_diff(a, &zeros, t, d, j0, gamma)
}

/// Picard iteration v ← g + I(v) started from zero. Returns the last iterate whose
/// increment is at most tol·max(1, ‖v‖), so its residual obeys the same bound.
#[allow(clippy::too_many_arguments)]
fn picard(
    apply: impl Fn(&[f64], &mut [f64]),
    g: &[f64],
    t: &[f64],
    d: usize,
    j0: usize,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize, f64), AbelError> {
    let mut cur = vec![0.0; g.len()];
    if j0 == 1 {
        cur[..d].iter_mut().for_each(|v| *v = f64::NAN);
    }
    let mut next = vec![0.0; g.len()];
    let mut last = f64::INFINITY;
    for it in 1..=max_iter + 1 {
        apply(&cur, &mut next);
        for (x, gv) in next.iter_mut().zip(g).skip(j0 * d) {
            *x += gv;
        }
        let inc = weighted_diff(&next, &cur, t, d, j0, gamma);
        if !inc.is_finite() {
            // iterates overflowed before the series turned over
            return Err(AbelError::MaxIterExceeded { iterations: it, increment: inc });
        }
        let scale = weighted_norm(&cur, t, d, j0, gamma).max(1.0);
        if inc <= tol * scale {
            return Ok((cur, it - 1, inc));
        }
        last = inc;
        std::mem::swap(&mut cur, &mut next);
    }
    Err(AbelError::MaxIterExceeded { iterations: max_iter, increment: last })
}

/// Checks the declared κ and M0 at seeded random points of the kernel domain.
pub fn probe_kernel(kernel: &KernelSpec, alpha: f64, t_end: f64, dim: usize, scale: f64) -> Result<(), AbelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let r = 10.0 * scale.max(1.0);
    let zero = vec![0.0; dim];
    let (mut k1, mut k2, mut k0) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut w1 = vec![0.0; dim];
    let mut w2 = vec![0.0; dim];
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..KERNEL_PROBES {
        let t = t_end * rng.random::<f64>();
        let s = t * rng.random::<f64>();
        for c in 0..dim {
            w1[c] = r * (2.0 * rng.random::<f64>() - 1.0);
            w2[c] = r * (2.0 * rng.random::<f64>() - 1.0);
        }
        kernel.eval(t, s, alpha, &w1, &mut k1);
        kernel.eval(t, s, alpha, &w2, &mut k2);
        kernel.eval(t, s, alpha, &zero, &mut k0);
        if k1.iter().chain(&k2).chain(&k0).any(|v| !v.is_finite()) {
            return Err(AbelError::KernelProbeFailed(format!("non-finite value at t = {t}, s = {s}")));
        }
        let dk: Vec<f64> = k1.iter().zip(&k2).map(|(a, b)| a - b).collect();
        let dw: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a - b).collect();
        let lhs = norm(&dk);
        let rhs = kernel.kappa * norm(&dw) * (1.0 + 1e-9) + 1e-14 * (norm(&k1) + norm(&k2));
        if lhs > rhs {
            return Err(AbelError::KernelProbeFailed(format!(
                "Lipschitz ratio {} exceeds kappa = {} at t = {t}, s = {s}",
                lhs / norm(&dw),
                kernel.kappa
            )));
        }
        if let Some(sp) = &kernel.split {
            let mut sum = vec![0.0; dim];
            let mut part = vec![0.0; dim];
            for (m, e) in sp.exponents.iter().enumerate() {
                (sp.parts)(m, t, s, alpha, &kernel.z, &w1, &mut part);
                let f = if *e == 0.0 { 1.0 } else { (t - s).powf(*e) };
                sum.iter_mut().zip(&part).for_each(|(a, b)| *a += f * b);
            }
            let diff: f64 = sum.iter().zip(&k1).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if !(diff <= 1e-10 * (1.0 + norm(&k1))) {
                return Err(AbelError::KernelProbeFailed(format!("power split differs from K by {diff} at t = {t}, s = {s}")));
            }
        }
        let k0n = norm(&k0);
        if k0n > kernel.m0 * (1.0 + 1e-9) + 1e-300 {
            return Err(AbelError::KernelProbeFailed(format!("‖K(t, s, 0)‖ = {k0n} exceeds M0 = {} at t = {t}, s = {s}", kernel.m0)));
        }
    }
    Ok(())
}

fn check_finite(g: &GridFn) -> Result<(), AbelError> {
    let t = g.grid().nodes();
    match (g.first_index()..t.len()).find(|&n| g.at(n).iter().any(|v| !v.is_finite())) {
        Some(n) => Err(AbelError::NonFiniteForcing(t[n])),
        None => Ok(()),
    }
}

fn data_scale(g: &GridFn) -> f64 {
    (g.first_index()..g.grid().len()).map(|n| g.norm_at(n)).filter(|v| v.is_finite()).fold(0.0, f64::max)
}

/// Solves the second-kind equation by Picard iteration; `tol` bounds the final
/// increment relative to max(1, ‖u‖_{C_γ}).
pub fn solve_second_kind(p: &AbelProblem, tol: f64, max_iter: usize) -> Result<AbelSolution, AbelError> {
    let d = p.dim();
    let grid = p.grid().clone();
    check_finite(&p.g)?;
    probe_kernel(&p.kernel, p.alpha, grid.horizon(), d, data_scale(&p.g))?;
    let kernels = power_kernels(&p.kernel, p.alpha);
    let op = Discrete::new(&p.kernel, &kernels, &grid, p.alpha, p.g.weight(), d);
    op.check_diagonal()?;
    let (u, iterations, increment) =
        picard(|v, out| op.apply(v, out), p.g.values(), grid.nodes(), d, op.j0(), p.gamma, tol, max_iter)?;
    Ok(AbelSolution { u: GridFn::new(grid, d, u, p.g.weight())?, iterations, increment })
}

/// A u = ∫_0^t (t - s)^{α-1} K(t, s, α, z, u(s)) ds on the grid.
pub fn apply_operator(p: &AbelProblem, u: &GridFn) -> Result<GridFn, AbelError> {
    if !u.same_grid(&p.g) {
        return Err(GridError::GridMismatch.into());
    }
    if u.dim() != p.dim() {
        return Err(AbelError::DimensionMismatch { expected: p.dim(), got: u.dim() });
    }
    let grid = p.grid().clone();
    let kernels = power_kernels(&p.kernel, p.alpha);
    let op = Discrete::new(&p.kernel, &kernels, &grid, p.alpha, u.weight(), u.dim());
    let mut out = vec![0.0; u.values().len()];
    op.apply(u.values(), &mut out);
    Ok(GridFn::new(grid, u.dim(), out, u.weight())?)
}

/// ‖u - g - A u‖_{C_γ} on the grid.
pub fn second_kind_residual(p: &AbelProblem, u: &GridFn) -> Result<f64, AbelError> {
    let au = apply_operator(p, u)?;
    let r = u.sub(&p.g)?.sub(&au)?;
    Ok(r.weighted_sup(p.gamma))
}

/// g* = g + A 0, the forcing of the equation with K(·, ·, 0) removed from the kernel.
pub fn shifted_forcing(p: &AbelProblem) -> Result<GridFn, AbelError> {
    let zero = GridFn::new(p.grid().clone(), p.dim(), vec![0.0; p.g.values().len()], p.g.weight())?;
    Ok(p.g.add(&apply_operator(p, &zero)?)?)
}

/// Γ(1-γ) E_{α,1-γ}(κΓ(α)T^α) ‖g*‖_{C_γ}, times [`PICARD_BOUND_SLACK`].
///
/// On coarse grids the discrete solution can exceed the continuous bound, so the
/// result is the larger of it and the grid comparison solution v = ‖g*‖ t^{-γ} + κ A v,
/// which dominates |u| node by node because the product weights are positive.
pub fn picard_bound(p: &AbelProblem) -> Result<f64, AbelError> {
    let gs = shifted_forcing(p)?.weighted_sup(p.gamma);
    let m1 = p.kernel.kappa * gamma(p.alpha);
    let e = ml(p.alpha, 1.0 - p.gamma, m1 * p.grid().horizon().powf(p.alpha))?;
    let continuous = gamma(1.0 - p.gamma) * e * gs;
    Ok(PICARD_BOUND_SLACK * continuous.max(comparison_bound(p, gs)?))
}

fn comparison_bound(p: &AbelProblem, gs: f64) -> Result<f64, AbelError> {
    let grid = p.grid().clone();
    let t = grid.nodes();
    let gam = p.gamma;
    let kernels = power_kernels(&p.kernel, p.alpha);
    let op = Discrete::new(&p.kernel, &kernels, &grid, p.alpha, gam, 1);
    op.check_diagonal()?;
    let j0 = op.j0();
    let kap: Vec<f64> = (0..kernels.len()).map(|m| p.kernel.part_kappa(m)).collect();
    let mut v = vec![0.0; t.len()];
    let mut buf = Vec::new();
    let mut best: f64 = 0.0;
    for n in 1..t.len() {
        let mut acc = gs * if gam > 0.0 { t[n].powf(-gam) } else { 1.0 };
        let mut diag = 0.0;
        for (q, k) in op.quads.iter().zip(&kap) {
            let row = q.rule.row_ref(n, &mut buf);
            acc += k * (j0..n).map(|j| row[j] * v[j]).sum::<f64>();
            diag += k * row[n];
        }
        v[n] = acc / (1.0 - diag);
        best = best.max(if gam > 0.0 { t[n].powf(gam) } else { 1.0 } * v[n]);
    }
    if gam == 0.0 {
        best = best.max(gs);
    }
    Ok(best)
}

/// Multiplier bounding ‖u‖_p by ‖g*‖_p, and ‖u_2 - u_1‖_p by ‖g_2 - g_1‖_p, for
/// kernels with Lipschitz constant κ.
///
/// This is the larger of 1 + MT E_{α,α}(MT^α) and the resolvent norm E_{α,1}(MT^α),
/// M = κΓ(α); the first alone is not a bound when MT^α is small.
pub fn stability_factor(kappa: f64, alpha: f64, t_end: f64) -> Result<f64, AbelError> {
    let m = kappa * gamma(alpha);
    Ok(gronwall_factor(m, alpha, t_end)?)
}

fn gronwall_factor(lambda: f64, alpha: f64, t_end: f64) -> Result<f64, MlError> {
    let x = lambda * t_end.powf(alpha);
    let stated = 1.0 + lambda * t_end * ml(alpha, alpha, x)?;
    let resolvent = ml(alpha, 1.0, x)?;
    Ok(stated.max(resolvent))
}

/// Certificate for φ ≤ g + λ J^α φ: ‖φ‖_p ≤ factor·‖g‖_p.
pub fn gronwall_certificate(lambda: f64, alpha: f64, t_end: f64, p: f64) -> Result<GronwallCertificate, AbelError> {
    if lambda < 0.0 || lambda.is_nan() {
        return Err(AbelError::NegativeLambda(lambda));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(AbelError::AlphaOutOfRange(alpha));
    }
    if !(p >= 1.0) {
        return Err(GridError::InvalidNormIndex(p).into());
    }
    Ok(GronwallCertificate { factor: gronwall_factor(lambda, alpha, t_end)?, pnorm: p })
}

/// u = g + λ ∫_0^t (t-s)^{α-1} E_{α,α}(λ(t-s)^α) g(s) ds, the solution of u = g + λ J^α u.
pub fn solve_linear_resolvent(g: &GridFn, lambda: f64, alpha: f64) -> Result<GridFn, AbelError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(AbelError::AlphaOutOfRange(alpha));
    }
    if lambda == 0.0 {
        return Ok(g.clone());
    }
    let kernel = MlKernel::new(alpha, lambda)?;
    let grid = g.grid().clone();
    let d = g.dim();
    let rule = ProductRule::new(&kernel, &grid, g.weight());
    let mut out = g.values().to_vec();
    let mut buf = Vec::new();
    for n in 1..grid.len() {
        for c in 0..d {
            out[n * d + c] += lambda * rule.apply_component(n, g.values(), d, c, &mut buf);
        }
    }
    Ok(GridFn::new(grid, d, out, g.weight())?)
}

/// 𝒜u = (1/Γ(α)) ∫_0^t (t-s)^{α-1} K0(t, s) u(s) ds.
pub fn first_kind_forward(k0: &ScalarKernelFn, u: &GridFn, alpha: f64, z: &[f64]) -> Result<GridFn, AbelError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AbelError::AlphaOutOfRange(alpha));
    }
    let grid = u.grid().clone();
    let d = u.dim();
    let kernel = PowerKernel { alpha };
    let q = Quadrature::new(&kernel, &grid, u.weight(), d);
    let t = grid.nodes();
    let ra = rgamma(alpha);
    let eval = |n: usize, j: usize, w: &[f64], out: &mut [f64]| {
        let k = ra * k0(t[n], t[j], alpha, z);
        for (o, v) in out.iter_mut().zip(w) {
            *o = k * v;
        }
    };
    let mut out = vec![0.0; u.values().len()];
    q.apply(&eval, u.values(), &mut out);
    Ok(GridFn::new(grid, d, out, u.weight())?)
}

/// L(t, s) = -(sin πα/π) ∫_0^1 (1-θ)^{-α} θ^α ∂_t K0(s + θ(t-s), s) dθ.
fn resolvent_kernel_rows(dk0: &ScalarKernelFn, t: &[f64], alpha: f64, z: &[f64]) -> Vec<Vec<f64>> {
    let rule = GaussJacobi::new(JACOBI_NODES, -alpha, alpha);
    let c = -(PI * alpha).sin() / PI;
    (0..t.len())
        .into_par_iter()
        .map(|n| {
            (0..=n)
                .map(|j| {
                    let (tn, s) = (t[n], t[j]);
                    c * rule.integrate(|th| dk0(s + th * (tn - s), s, alpha, z))
                })
                .collect()
        })
        .collect()
}

/// Solves (1/Γ(α)) ∫_0^t (t-s)^{α-1} K0(t, s) u(s) ds = f through u = D^α f + B u,
/// B u(t) = ∫_0^t L(t, s) u(s) ds.
pub fn solve_first_kind(
    k0: &ScalarKernelFn,
    dk0dt: &ScalarKernelFn,
    f: &GridFn,
    alpha: f64,
    z: &[f64],
    tol: f64,
) -> Result<AbelSolution, AbelError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AbelError::AlphaOutOfRange(alpha));
    }
    let grid = f.grid().clone();
    let t = grid.nodes();
    for &tn in t {
        let v = k0(tn, tn, alpha, z);
        if (v - 1.0).abs() > 1e-12 {
            return Err(AbelError::DiagonalNotNormalized { t: tn, value: v });
        }
    }
    let df = rl_derivative(f, alpha)?;
    let d = df.dim();
    let weight = df.weight();
    let j0 = usize::from(weight > 0.0);
    let l = resolvent_kernel_rows(dk0dt, t, alpha, z);
    // trapezoid on [t_j0, t_n]; the power model v_1 (s/t_1)^{-γ} on [0, t_1] when weighted
    let apply = |v: &[f64], out: &mut [f64]| {
        out[..d].iter_mut().for_each(|o| *o = if j0 == 1 { f64::NAN } else { 0.0 });
        for n in 1..t.len() {
            let row = &l[n];
            for c in 0..d {
                let mut s = 0.0;
                if j0 == 1 {
                    s += row[1] * v[d + c] * t[1] / (1.0 - weight);
                }
                for j in j0..n {
                    let h = 0.5 * (t[j + 1] - t[j]);
                    s += h * (row[j] * v[j * d + c] + row[j + 1] * v[(j + 1) * d + c]);
                }
                out[n * d + c] = s;
            }
        }
    };
    let (u, iterations, increment) = picard(apply, df.values(), t, d, j0, weight, tol, LINEAR_MAX_ITER)?;
    Ok(AbelSolution { u: GridFn::new(grid, d, u, weight)?, iterations, increment })
}

/// w = ∂u/∂α from the linear equation
/// w = g_1 + ∫_0^t (t-s)^{α-1} DK(t, s, u(s)) w(s) ds with
/// g_1 = ∂g/∂α + ∫_0^t (t-s)^{α-1} [∂K/∂α(t, s, u(s)) + ln(t-s) K(t, s, u(s))] ds.
pub fn order_sensitivity(
    p: &AbelProblem,
    u: &GridFn,
    dgda: &GridFn,
    dkda: &KernelFn,
    dk: &JacobianFn,
) -> Result<AbelSolution, AbelError> {
    let d = p.dim();
    if dgda.dim() != d {
        return Err(AbelError::DimensionMismatch { expected: d, got: dgda.dim() });
    }
    if !dgda.same_grid(&p.g) {
        return Err(GridError::GridMismatch.into());
    }
    let res = second_kind_residual(p, u)?;
    if res > SENSITIVITY_RESIDUAL * (1.0 + u.weighted_sup(p.gamma)) {
        return Err(AbelError::NotConverged(res));
    }
    let grid = p.grid().clone();
    let t = grid.nodes();
    let (alpha, z) = (p.alpha, &p.kernel.z);
    let weight = u.weight().max(dgda.weight());

    let pk = PowerKernel { alpha };
    let qp = Quadrature::new(&pk, &grid, u.weight(), d);
    let mut a = vec![0.0; u.values().len()];
    qp.apply(&|n: usize, j: usize, w: &[f64], out: &mut [f64]| dkda(t[n], t[j], alpha, z, w, out), u.values(), &mut a);
    let mut g1: Vec<f64> = dgda.values().iter().zip(&a).map(|(x, y)| x + y).collect();
    let mut b = vec![0.0; u.values().len()];
    for (m, e) in p.kernel.exponents().into_iter().enumerate() {
        let lk = LogPowerKernel { alpha: alpha + e };
        let ql = Quadrature::new(&lk, &grid, u.weight(), d);
        ql.apply(&|n: usize, j: usize, w: &[f64], out: &mut [f64]| p.kernel.eval_part(m, t[n], t[j], alpha, w, out), u.values(), &mut b);
        g1.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
    }
    if weight > 0.0 {
        g1[..d].iter_mut().for_each(|v| *v = f64::NAN);
    }

    let q = Quadrature::new(&pk, &grid, weight, d);
    q.check_diagonal(p.kernel.kappa, grid.len())?;
    let uv = u.values();
    let eval = |n: usize, j: usize, w: &[f64], out: &mut [f64]| {
        let mut jac = vec![0.0; d * d];
        dk(t[n], t[j], alpha, z, &uv[j * d..(j + 1) * d], &mut jac);
        for r in 0..d {
            out[r] = (0..d).map(|c| jac[r * d + c] * w[c]).sum();
        }
    };
    let (w, iterations, increment) =
        picard(|v, out| q.apply(&eval, v, out), &g1, t, d, q.j0, p.gamma, LINEAR_TOL, LINEAR_MAX_ITER)?;
    Ok(AbelSolution { u: GridFn::new(grid, d, w, weight)?, iterations, increment })
}
