//! Time-fractional diffusion ∂_t^α u + A^β u = f on an operator with a discrete
//! positive spectrum, solved mode by mode in the eigenbasis:
//!
//! ```text
//! u_p(t) = θ_p E_{α,1}(-λ_p^β t^α) + ∫_0^t f_p(τ) (t-τ)^{α-1} E_{α,α}(-λ_p^β (t-τ)^α) dτ
//! ```

use std::f64::consts::PI;
use std::io::{self, BufRead, Write};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::conv::{MlKernel, ProductRule};
use crate::fracgrid::{fmt_f64, GridError, TimeGrid};
use crate::mlf::{ml, MlError};

pub const DEFAULT_MODES: usize = 64;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("length {0} must be positive")]
    NonPositiveLength(f64),
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("Sobolev index {0} is negative")]
    NegativeS(f64),
    #[error("order {0} outside (0, 1]")]
    AlphaOutOfRange(f64),
    #[error("spectral power {0} must be positive")]
    BetaOutOfRange(f64),
    #[error("trajectory grids differ")]
    GridMismatch,
    #[error("bad parameter ordering: {0}")]
    BadOrdering(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Eigenvalues 0 < λ_1 ≤ λ_2 ≤ … of a truncated operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOperator {
    lambdas: Vec<f64>,
    pub label: String,
}

impl SpectralOperator {
    pub fn new(lambdas: Vec<f64>, label: impl Into<String>) -> Result<Self, SpecError> {
        if lambdas.is_empty() {
            return Err(SpecError::InvalidSpectrum("no eigenvalues".into()));
        }
        if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(SpecError::InvalidSpectrum(format!("eigenvalue {l} is not positive")));
        }
        if lambdas.windows(2).any(|w| w[1] < w[0]) {
            return Err(SpecError::InvalidSpectrum("eigenvalues must be nondecreasing".into()));
        }
        Ok(Self { lambdas, label: label.into() })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// λ_p^β computed as exp(β ln λ_p).
    pub fn powered(&self, beta: f64) -> Vec<f64> {
        self.lambdas.iter().map(|l| (beta * l.ln()).exp()).collect()
    }
}

/// Dirichlet Laplacian on (0, L): λ_n = (nπ/L)², n = 1..P.
pub fn dirichlet_laplacian_1d(length: f64, modes: usize) -> Result<SpectralOperator, SpecError> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(SpecError::NonPositiveLength(length));
    }
    let lambdas = (1..=modes).map(|n| (n as f64 * PI / length).powi(2)).collect();
    SpectralOperator::new(lambdas, format!("dirichlet-laplacian L={length}"))
}

/// Coefficients ⟨v, φ_p⟩ in the eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeVector {
    pub coeffs: Vec<f64>,
}

impl ModeVector {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, SpecError> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(SpecError::NonFinite("mode coefficient"));
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(len: usize) -> Self {
        Self { coeffs: vec![0.0; len] }
    }

    /// The unit vector e_p, with p counted from 1.
    pub fn unit(p: usize, len: usize) -> Self {
        let mut v = Self::zeros(len);
        v.coeffs[p - 1] = 1.0;
        v
    }

    /// Coefficients c_p = f(p) for p = 1..len.
    pub fn from_fn(len: usize, f: impl Fn(usize) -> f64) -> Result<Self, SpecError> {
        Self::new((1..=len).map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn sub(&self, other: &ModeVector) -> Result<ModeVector, SpecError> {
        if self.len() != other.len() {
            return Err(SpecError::LengthMismatch { expected: self.len(), got: other.len() });
        }
        Ok(Self { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect() })
    }
}

/// ‖v‖_{H^s} = (Σ_p λ_p^{2s} v_p²)^{1/2}.
pub fn hs_norm(v: &ModeVector, op: &SpectralOperator, s: f64) -> Result<f64, SpecError> {
    if v.len() != op.len() {
        return Err(SpecError::LengthMismatch { expected: op.len(), got: v.len() });
    }
    if !(s >= 0.0) {
        return Err(SpecError::NegativeS(s));
    }
    Ok(hs_sq(&v.coeffs, &op.lambdas, s).sqrt())
}

fn hs_sq(c: &[f64], lambdas: &[f64], s: f64) -> f64 {
    c.iter().zip(lambdas).map(|(v, l)| if s == 0.0 { v * v } else { (2.0 * s * l.ln()).exp() * v * v }).sum()
}

/// Σ_{p ≥ start} λ_p^{2s} θ_p², the H^s mass discarded by truncating before mode `start`.
/// Summation stops once a block of terms is negligible or after `max_terms`.
pub fn hs_tail(theta: impl Fn(usize) -> f64, lambda: impl Fn(usize) -> f64, s: f64, start: usize, max_terms: usize) -> f64 {
    let mut sum = 0.0;
    let mut quiet = 0;
    for p in start..start + max_terms {
        let term = lambda(p).powf(2.0 * s) * theta(p).powi(2);
        sum += term;
        quiet = if term <= 1e-17 * sum { quiet + 1 } else { 0 };
        if quiet >= 32 {
            break;
        }
    }
    sum
}

/// Mode coefficients at every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTrajectory {
    grid: Arc<TimeGrid>,
    frames: Vec<ModeVector>,
}

impl ModeTrajectory {
    pub fn new(grid: Arc<TimeGrid>, frames: Vec<ModeVector>) -> Result<Self, SpecError> {
        if frames.len() != grid.len() {
            return Err(SpecError::LengthMismatch { expected: grid.len(), got: frames.len() });
        }
        if let Some(f) = frames.iter().find(|f| f.len() != frames[0].len()) {
            return Err(SpecError::LengthMismatch { expected: frames[0].len(), got: f.len() });
        }
        Ok(Self { grid, frames })
    }

    /// Frames p ↦ f(t, p) with p counted from 1.
    pub fn from_fn(grid: &Arc<TimeGrid>, modes: usize, f: impl Fn(f64, usize) -> f64) -> Result<Self, SpecError> {
        let frames = grid.nodes().iter().map(|&t| ModeVector::from_fn(modes, |p| f(t, p))).collect::<Result<_, _>>()?;
        Self::new(grid.clone(), frames)
    }

    fn from_columns(grid: Arc<TimeGrid>, cols: Vec<Vec<f64>>) -> Self {
        let frames = (0..grid.len()).map(|n| ModeVector { coeffs: cols.iter().map(|c| c[n]).collect() }).collect();
        Self { grid, frames }
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn frames(&self) -> &[ModeVector] {
        &self.frames
    }

    pub fn frame(&self, n: usize) -> &ModeVector {
        &self.frames[n]
    }

    pub fn modes(&self) -> usize {
        self.frames[0].len()
    }

    /// Coefficient of mode p (counted from 1) at every node.
    pub fn mode_series(&self, p: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f.coeffs[p - 1]).collect()
    }

    pub fn sub(&self, other: &ModeTrajectory) -> Result<ModeTrajectory, SpecError> {
        if self.grid.nodes() != other.grid.nodes() {
            return Err(SpecError::GridMismatch);
        }
        let frames = self.frames.iter().zip(&other.frames).map(|(a, b)| a.sub(b)).collect::<Result<_, _>>()?;
        Ok(Self { grid: self.grid.clone(), frames })
    }

    /// sup_t ‖v(t)‖_{H^s} over the nodes.
    pub fn sup_hs(&self, op: &SpectralOperator, s: f64) -> Result<f64, SpecError> {
        self.frames.iter().map(|f| hs_norm(f, op, s)).try_fold(0.0f64, |m, v| v.map(|v| m.max(v)))
    }

    /// (∫_0^T ‖v(t)‖²_{H^s} dt)^{1/2} by the trapezoid rule.
    pub fn l2_hs(&self, op: &SpectralOperator, s: f64) -> Result<f64, SpecError> {
        let sq = self.frames.iter().map(|f| hs_norm(f, op, s).map(|v| v * v)).collect::<Result<Vec<_>, _>>()?;
        let t = self.grid.nodes();
        Ok((1..t.len()).map(|n| 0.5 * (t[n] - t[n - 1]) * (sq[n] + sq[n - 1])).sum::<f64>().sqrt())
    }

    /// CSV with header `t,c1,...,cP`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=self.modes()).map(|p| format!("c{p}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for (t, f) in self.grid.nodes().iter().zip(&self.frames) {
            let row: Vec<String> = std::iter::once(fmt_f64(*t)).chain(f.coeffs.iter().map(|c| fmt_f64(*c))).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, SpecError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| SpecError::Csv("empty input".into()))?.map_err(|e| SpecError::Csv(e.to_string()))?;
        let modes = header.split(',').count().saturating_sub(1);
        if modes == 0 {
            return Err(SpecError::Csv("header has no mode columns".into()));
        }
        let mut nodes = Vec::new();
        let mut frames = Vec::new();
        for line in lines {
            let line = line.map_err(|e| SpecError::Csv(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields = line
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| SpecError::Csv(format!("{s}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if fields.len() != modes + 1 {
                return Err(SpecError::Csv(format!("row has {} fields, expected {}", fields.len(), modes + 1)));
            }
            nodes.push(fields[0]);
            frames.push(ModeVector::new(fields[1..].to_vec())?);
        }
        Self::new(Arc::new(TimeGrid::from_nodes(nodes)?), frames)
    }

    /// Physical-space samples u(t, x) = Σ_p c_p √(2/L) sin(pπx/L) for the Dirichlet
    /// Laplacian on (0, L), as `t,x,u` rows on `nx + 1` equispaced points.
    pub fn write_physical_csv<W: Write>(&self, length: f64, nx: usize, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x,u")?;
        let amp = (2.0 / length).sqrt();
        for (t, f) in self.grid.nodes().iter().zip(&self.frames) {
            for i in 0..=nx {
                let x = length * i as f64 / nx.max(1) as f64;
                let u: f64 = f.coeffs.iter().enumerate().map(|(p, c)| c * amp * ((p + 1) as f64 * PI * x / length).sin()).sum();
                writeln!(w, "{},{},{}", fmt_f64(*t), fmt_f64(x), fmt_f64(u))?;
            }
        }
        Ok(())
    }
}

fn check_orders(alpha: f64, beta: f64) -> Result<(), SpecError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(SpecError::AlphaOutOfRange(alpha));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(SpecError::BetaOutOfRange(beta));
    }
    Ok(())
}

/// v_p(t) = θ_p E_{α,1}(-λ_p^β t^α).
pub fn solve_homogeneous(
    theta: &ModeVector,
    op: &SpectralOperator,
    alpha: f64,
    beta: f64,
    grid: &Arc<TimeGrid>,
) -> Result<ModeTrajectory, SpecError> {
    check_orders(alpha, beta)?;
    if theta.len() != op.len() {
        return Err(SpecError::LengthMismatch { expected: op.len(), got: theta.len() });
    }
    let lb = op.powered(beta);
    let t = grid.nodes();
    let cols = theta
        .coeffs
        .par_iter()
        .zip(&lb)
        .map(|(&th, &l)| {
            if th == 0.0 {
                return Ok(vec![0.0; t.len()]);
            }
            t.iter().map(|&tn| if tn == 0.0 { Ok(th) } else { Ok(th * ml(alpha, 1.0, -l * tn.powf(alpha))?) }).collect()
        })
        .collect::<Result<Vec<Vec<f64>>, MlError>>()?;
    Ok(ModeTrajectory::from_columns(grid.clone(), cols))
}

/// w_p(t) = ∫_0^t f_p(τ) (t-τ)^{α-1} E_{α,α}(-λ_p^β (t-τ)^α) dτ by product integration.
pub fn solve_forced(fmodes: &ModeTrajectory, op: &SpectralOperator, alpha: f64, beta: f64) -> Result<ModeTrajectory, SpecError> {
    check_orders(alpha, beta)?;
    if fmodes.modes() != op.len() {
        return Err(SpecError::LengthMismatch { expected: op.len(), got: fmodes.modes() });
    }
    let grid = fmodes.grid().clone();
    let lb = op.powered(beta);
    let cols = (1..=op.len())
        .into_par_iter()
        .map(|p| {
            let f = fmodes.mode_series(p);
            if f.iter().all(|v| *v == 0.0) {
                return Ok(vec![0.0; grid.len()]);
            }
            let kernel = MlKernel::new(alpha, -lb[p - 1])?;
            let rule = ProductRule::new(&kernel, &grid, 0.0);
            let mut buf = Vec::new();
            Ok(std::iter::once(0.0).chain((1..grid.len()).map(|n| rule.apply_component(n, &f, 1, 0, &mut buf))).collect())
        })
        .collect::<Result<Vec<Vec<f64>>, MlError>>()?;
    Ok(ModeTrajectory::from_columns(grid, cols))
}

/// Hölder exponent min{1, (s - ρ)/β_1} of the homogeneous solution in the orders.
pub fn predicted_exponent(s: f64, rho: f64, beta1: f64) -> Result<f64, SpecError> {
    if !(s > rho && rho >= 0.0) {
        return Err(SpecError::BadOrdering(format!("need s > rho >= 0, got s = {s}, rho = {rho}")));
    }
    if !(beta1 > 0.0) {
        return Err(SpecError::BetaOutOfRange(beta1));
    }
    Ok(((s - rho) / beta1).min(1.0))
}

/// Exponent (β_0 - ρ)/(β_0 + β_1 + δ) of the forced solution in the orders.
pub fn forced_exponent(beta0: f64, rho: f64, beta1: f64, delta: f64) -> Result<f64, SpecError> {
    if !(rho >= 0.0 && rho < beta0 && beta0 <= beta1 && delta > 0.0) {
        return Err(SpecError::BadOrdering(format!(
            "need 0 <= rho < beta0 <= beta1 and delta > 0, got rho = {rho}, beta0 = {beta0}, beta1 = {beta1}, delta = {delta}"
        )));
    }
    Ok((beta0 - rho) / (beta0 + beta1 + delta))
}
