//! Time grids, sampled functions and discrete fractional operators.
//!
//! J^α is the product trapezoidal rule. The Riemann-Liouville derivative is the
//! exact inverse of that discrete J^α after the value at t_0 has been split off
//! analytically, so that D^α J^α f = f holds to rounding on the grid.

use rayon::prelude::*;
use std::io::{self, BufRead, Write};
use std::sync::Arc;
use thiserror::Error;

use crate::conv::{PowerKernel, ProductRule};
use crate::special::{gamma, rgamma};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 2 intervals, got {0}")]
    TooFewIntervals(usize),
    #[error("horizon must be positive and finite, got {0}")]
    NonPositiveHorizon(f64),
    #[error("grid must start at 0, got {0}")]
    NonZeroStart(f64),
    #[error("grid nodes must be finite and strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("grading exponent must be >= 1, got {0}")]
    InvalidGrading(f64),
    #[error("order must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("order {0} outside the admissible range")]
    AlphaOutOfRange(f64),
    #[error("grid functions live on different grids")]
    GridMismatch,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("weight must lie in [0, 1), got {0}")]
    InvalidWeight(f64),
    #[error("operation needs a value at t0 (function is weighted)")]
    MissingInitialValue,
    #[error("result weight {0} leaves [0, 1)")]
    WeightTooLarge(f64),
    #[error("composition produced non-finite values at factor {0}")]
    CompositionBlowup(usize),
    #[error("norm index must be >= 1, got {0}")]
    InvalidNormIndex(f64),
    #[error("malformed CSV: {0}")]
    Csv(String),
}

/// Strictly increasing mesh 0 = t_0 < … < t_N = T.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    step: Option<f64>,
}

impl TimeGrid {
    /// N equal intervals on [0, T].
    pub fn uniform(t_end: f64, n: usize) -> Result<Self, GridError> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(GridError::NonPositiveHorizon(t_end));
        }
        if n < 2 {
            return Err(GridError::TooFewIntervals(n));
        }
        let h = t_end / n as f64;
        let mut nodes: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        nodes[n] = t_end;
        Ok(Self { nodes, step: Some(h) })
    }

    /// Graded mesh t_i = T (i/N)^r, clustered at the origin for r > 1.
    pub fn graded(t_end: f64, n: usize, r: f64) -> Result<Self, GridError> {
        if !(r >= 1.0 && r.is_finite()) {
            return Err(GridError::InvalidGrading(r));
        }
        if r == 1.0 {
            return Self::uniform(t_end, n);
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(GridError::NonPositiveHorizon(t_end));
        }
        if n < 2 {
            return Err(GridError::TooFewIntervals(n));
        }
        let nodes = (0..=n).map(|i| t_end * (i as f64 / n as f64).powf(r)).collect();
        Self::from_nodes(nodes)
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, GridError> {
        if nodes.len() < 3 {
            return Err(GridError::TooFewIntervals(nodes.len().saturating_sub(1)));
        }
        if nodes[0] != 0.0 {
            return Err(GridError::NonZeroStart(nodes[0]));
        }
        for i in 1..nodes.len() {
            if !(nodes[i] > nodes[i - 1]) || !nodes[i].is_finite() {
                return Err(GridError::NotIncreasing(i));
            }
        }
        let n = nodes.len() - 1;
        let h = nodes[n] / n as f64;
        let uniform = nodes.iter().enumerate().all(|(i, &t)| (t - i as f64 * h).abs() <= 1e-13 * nodes[n]);
        Ok(Self { nodes, step: if uniform { Some(h) } else { None } })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of intervals N.
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Number of nodes N + 1.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Step length when the grid is uniform.
    pub fn step(&self) -> Option<f64> {
        self.step
    }
}

/// A function sampled on a grid, possibly vector-valued and possibly weighted.
///
/// With weight γ > 0 the function belongs to C_γ: it may blow up like t^{-γ} at
/// the origin and the value slot at t_0 holds NaN.
#[derive(Debug, Clone)]
pub struct GridFn {
    grid: Arc<TimeGrid>,
    dim: usize,
    values: Vec<f64>,
    weight: f64,
}

impl PartialEq for GridFn {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.weight == other.weight
            && self.grid.nodes == other.grid.nodes
            && self.values.iter().zip(&other.values).all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

impl GridFn {
    /// Builds from flat row-major values (N+1 rows of `dim` entries).
    pub fn new(grid: Arc<TimeGrid>, dim: usize, values: Vec<f64>, weight: f64) -> Result<Self, GridError> {
        if dim == 0 {
            return Err(GridError::ZeroDimension);
        }
        if !(0.0..1.0).contains(&weight) {
            return Err(GridError::InvalidWeight(weight));
        }
        let expected = grid.len() * dim;
        if values.len() != expected {
            return Err(GridError::LengthMismatch { expected, got: values.len() });
        }
        let mut values = values;
        if weight > 0.0 {
            values[..dim].iter_mut().for_each(|v| *v = f64::NAN);
        }
        Ok(Self { grid, dim, values, weight })
    }

    /// Scalar function sampled at every node.
    pub fn from_fn(grid: &Arc<TimeGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&t| f(t)).collect();
        Self { grid: grid.clone(), dim: 1, values, weight: 0.0 }
    }

    /// Scalar C_γ function sampled at t_1, …, t_N.
    pub fn weighted_from_fn(grid: &Arc<TimeGrid>, weight: f64, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        if !(0.0..1.0).contains(&weight) {
            return Err(GridError::InvalidWeight(weight));
        }
        let values = grid.nodes().iter().enumerate().map(|(i, &t)| if i == 0 && weight > 0.0 { f64::NAN } else { f(t) }).collect();
        Ok(Self { grid: grid.clone(), dim: 1, values, weight })
    }

    /// Vector function; `f(t, out)` fills `dim` entries.
    pub fn from_vec_fn(grid: &Arc<TimeGrid>, dim: usize, f: impl Fn(f64, &mut [f64])) -> Result<Self, GridError> {
        if dim == 0 {
            return Err(GridError::ZeroDimension);
        }
        let mut values = vec![0.0; grid.len() * dim];
        for (i, &t) in grid.nodes().iter().enumerate() {
            f(t, &mut values[i * dim..(i + 1) * dim]);
        }
        Ok(Self { grid: grid.clone(), dim, values, weight: 0.0 })
    }

    pub fn constant(grid: &Arc<TimeGrid>, c: f64) -> Self {
        Self::from_fn(grid, |_| c)
    }

    pub fn zeros(grid: &Arc<TimeGrid>, dim: usize) -> Self {
        Self { grid: grid.clone(), dim, values: vec![0.0; grid.len() * dim], weight: 0.0 }
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn is_weighted(&self) -> bool {
        self.weight > 0.0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Vector value at node n.
    pub fn at(&self, n: usize) -> &[f64] {
        &self.values[n * self.dim..(n + 1) * self.dim]
    }

    /// First component at node n.
    pub fn scalar(&self, n: usize) -> f64 {
        self.values[n * self.dim]
    }

    /// First component over all nodes.
    pub fn scalars(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|n| self.scalar(n)).collect()
    }

    /// First index carrying a value.
    pub fn first_index(&self) -> usize {
        usize::from(self.is_weighted())
    }

    /// Euclidean norm of the value at node n.
    pub fn norm_at(&self, n: usize) -> f64 {
        self.at(n).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn same_grid(&self, other: &GridFn) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.nodes == other.grid.nodes
    }

    fn check_compatible(&self, other: &GridFn) -> Result<(), GridError> {
        if !self.same_grid(other) {
            return Err(GridError::GridMismatch);
        }
        if self.dim != other.dim {
            return Err(GridError::LengthMismatch { expected: self.dim, got: other.dim });
        }
        Ok(())
    }

    /// a·self + b·other; the result carries the larger weight.
    pub fn lin_comb(&self, a: f64, other: &GridFn, b: f64) -> Result<GridFn, GridError> {
        self.check_compatible(other)?;
        let weight = self.weight.max(other.weight);
        let mut values: Vec<f64> = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        if weight > 0.0 {
            values[..self.dim].iter_mut().for_each(|v| *v = f64::NAN);
        }
        Ok(GridFn { grid: self.grid.clone(), dim: self.dim, values, weight })
    }

    pub fn sub(&self, other: &GridFn) -> Result<GridFn, GridError> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn add(&self, other: &GridFn) -> Result<GridFn, GridError> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn scale(&self, c: f64) -> GridFn {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Applies `f(t, v)` to every stored scalar.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> GridFn {
        let mut out = self.clone();
        let d = self.dim;
        for (i, v) in out.values.iter_mut().enumerate() {
            if !(self.is_weighted() && i < d) {
                *v = f(self.grid.nodes[i / d], *v);
            }
        }
        out
    }

    /// sup_n t_n^γ ‖v_n‖ over nodes carrying a value.
    pub fn weighted_sup(&self, gamma: f64) -> f64 {
        let t = self.grid.nodes();
        (self.first_index()..self.grid.len())
            .map(|n| if t[n] == 0.0 { if gamma == 0.0 { self.norm_at(n) } else { 0.0 } } else { t[n].powf(gamma) * self.norm_at(n) })
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.weighted_sup(0.0)
    }

    /// Grid L^p norm: trapezoid rule on ‖v‖^p; for weighted data the first cell
    /// integrates the power model exactly. `p = f64::INFINITY` gives the node maximum.
    pub fn lp_norm(&self, p: f64) -> Result<f64, GridError> {
        if !(p >= 1.0) {
            return Err(GridError::InvalidNormIndex(p));
        }
        if p.is_infinite() {
            return Ok(self.sup_norm());
        }
        let t = self.grid.nodes();
        let mut s = 0.0;
        let start = if self.is_weighted() {
            let pg = p * self.weight;
            if pg >= 1.0 {
                return Ok(f64::INFINITY);
            }
            s += t[1] * self.norm_at(1).powf(p) / (1.0 - pg);
            1
        } else {
            0
        };
        for n in start..self.grid.intervals() {
            s += 0.5 * (t[n + 1] - t[n]) * (self.norm_at(n).powf(p) + self.norm_at(n + 1).powf(p));
        }
        Ok(s.powf(1.0 / p))
    }

    /// CSV with header `t,v1,...,vd` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = String::from("t");
        for c in 1..=self.dim {
            header.push_str(&format!(",v{c}"));
        }
        writeln!(w, "{header}")?;
        for n in 0..self.grid.len() {
            let mut line = fmt_f64(self.grid.nodes[n]);
            for v in self.at(n) {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads the format written by [`GridFn::write_csv`]; a `nan` first row marks weighted data.
    pub fn read_csv<R: BufRead>(r: R, weight: f64) -> Result<GridFn, GridError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| GridError::Csv("empty input".into()))?.map_err(|e| GridError::Csv(e.to_string()))?;
        let dim = header.split(',').count().saturating_sub(1);
        if dim == 0 {
            return Err(GridError::Csv("header has no value columns".into()));
        }
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            let line = line.map_err(|e| GridError::Csv(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(GridError::Csv(format!("row has {} fields, expected {}", fields.len(), dim + 1)));
            }
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| GridError::Csv(format!("{s}: {e}")));
            nodes.push(parse(fields[0])?);
            for f in &fields[1..] {
                values.push(parse(f)?);
            }
        }
        let grid = Arc::new(TimeGrid::from_nodes(nodes)?);
        GridFn::new(grid, dim, values, weight)
    }
}

/// 17 significant digits, locale independent.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x:.16e}")
    }
}

/// Miller-Ross orders η_1, …, η_k and their partial sums σ_j.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialOrders {
    etas: Vec<f64>,
    sigmas: Vec<f64>,
}

impl SequentialOrders {
    pub fn new(etas: Vec<f64>) -> Result<Self, GridError> {
        if etas.is_empty() {
            return Err(GridError::AlphaOutOfRange(f64::NAN));
        }
        let mut sigmas = Vec::with_capacity(etas.len());
        let mut acc = 0.0;
        for &e in &etas {
            if !(e > 0.0 && e <= 1.0) {
                return Err(GridError::AlphaOutOfRange(e));
            }
            acc += e;
            sigmas.push(acc);
        }
        Ok(Self { etas, sigmas })
    }

    pub fn etas(&self) -> &[f64] {
        &self.etas
    }

    /// σ_j for j = 1..k.
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn len(&self) -> usize {
        self.etas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.etas.is_empty()
    }

    /// σ_j with σ_0 = 0.
    pub fn sigma(&self, j: usize) -> f64 {
        if j == 0 { 0.0 } else { self.sigmas[j - 1] }
    }
}

/// J^α f by product integration.
pub fn frac_integral(f: &GridFn, alpha: f64) -> Result<GridFn, GridError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(GridError::NonPositiveAlpha(alpha));
    }
    let grid = f.grid.clone();
    let kernel = PowerKernel { alpha };
    let rule = ProductRule::new(&kernel, &grid, f.weight);
    let d = f.dim;
    let n_nodes = grid.len();
    let rg = rgamma(alpha);
    let rows: Vec<Vec<f64>> = (1..n_nodes)
        .into_par_iter()
        .map_init(Vec::new, |buf, n| (0..d).map(|c| rule.apply_component(n, &f.values, d, c, buf) * rg).collect())
        .collect();
    let out_weight = (f.weight - alpha).max(0.0);
    let mut values = Vec::with_capacity(n_nodes * d);
    if out_weight > 0.0 {
        values.extend(std::iter::repeat_n(f64::NAN, d));
    } else if f.weight > 0.0 && (f.weight - alpha).abs() < 1e-15 {
        // J^γ of v_1 (s/t_1)^{-γ} tends to v_1 t_1^γ Γ(1-γ) at the origin
        let t1 = grid.nodes[1];
        for c in 0..d {
            values.push(f.values[d + c] * t1.powf(f.weight) * gamma(1.0 - f.weight));
        }
    } else {
        values.extend(std::iter::repeat_n(0.0, d));
    }
    for r in rows {
        values.extend(r);
    }
    Ok(GridFn { grid, dim: d, values, weight: out_weight })
}

/// Solves the discrete first-kind system (J^α_h w)(t_n) = g_n, n ≥ 1, by marching.
///
/// For `w_weight == 0`, g has g(0) = 0 and w_0 is closed by linear extrapolation
/// (the first two equations are solved jointly). For `w_weight > 0` the first cell
/// uses the power model and no closure is needed.
fn invert_integral(g: &GridFn, alpha: f64, w_weight: f64) -> GridFn {
    let grid = g.grid.clone();
    let kernel = PowerKernel { alpha };
    let rule = ProductRule::new(&kernel, &grid, w_weight);
    let d = g.dim;
    let n_nodes = grid.len();
    let ga = gamma(alpha);
    let mut w = vec![0.0; n_nodes * d];
    let mut r1 = Vec::new();
    let mut r2 = Vec::new();
    let mut buf = Vec::new();
    let start;
    if w_weight > 0.0 {
        rule.row(1, &mut r1);
        for c in 0..d {
            w[d + c] = ga * g.values[d + c] / r1[1];
        }
        start = 2;
        w[..d].iter_mut().for_each(|v| *v = f64::NAN);
    } else {
        rule.row(1, &mut r1);
        rule.row(2, &mut r2);
        // linear extrapolation: w_0 = (1 + ρ) w_1 - ρ w_2
        let t = grid.nodes();
        let rho = t[1] / (t[2] - t[1]);
        let a11 = (1.0 + rho) * r1[0] + r1[1];
        let a12 = -rho * r1[0];
        let a21 = (1.0 + rho) * r2[0] + r2[1];
        let a22 = r2[2] - rho * r2[0];
        let det = a11 * a22 - a12 * a21;
        for c in 0..d {
            let b1 = ga * g.values[d + c];
            let b2 = ga * g.values[2 * d + c];
            let w1 = (b1 * a22 - a12 * b2) / det;
            let w2 = (a11 * b2 - a21 * b1) / det;
            w[d + c] = w1;
            w[2 * d + c] = w2;
            w[c] = (1.0 + rho) * w1 - rho * w2;
        }
        start = 3;
    }
    let j0 = if w_weight > 0.0 { 1 } else { 0 };
    for n in start..n_nodes {
        let row = rule.row_ref(n, &mut buf);
        for c in 0..d {
            let mut s = 0.0;
            for j in j0..n {
                s += row[j] * w[j * d + c];
            }
            w[n * d + c] = (ga * g.values[n * d + c] - s) / row[n];
        }
    }
    GridFn { grid, dim: d, values: w, weight: w_weight }
}

/// Riemann-Liouville derivative D^α f, 0 < α < 1.
///
/// The part f(0)·t^{-α}/Γ(1-α) is added analytically; when f(0) ≠ 0 the
/// result is weighted with γ = α. Weighted input of weight γ yields weight γ + α.
pub fn rl_derivative(f: &GridFn, alpha: f64) -> Result<GridFn, GridError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(GridError::AlphaOutOfRange(alpha));
    }
    let d = f.dim;
    if f.is_weighted() {
        let w = f.weight + alpha;
        if w >= 1.0 {
            return Err(GridError::WeightTooLarge(w));
        }
        return Ok(invert_integral(f, alpha, w));
    }
    let f0: Vec<f64> = f.at(0).to_vec();
    let mut g = f.clone();
    for n in 0..f.grid.len() {
        for c in 0..d {
            g.values[n * d + c] -= f0[c];
        }
    }
    let mut w = invert_integral(&g, alpha, 0.0);
    if f0.iter().any(|&v| v != 0.0) {
        let t = f.grid.nodes();
        let rg = rgamma(1.0 - alpha);
        for n in 1..f.grid.len() {
            let p = t[n].powf(-alpha) * rg;
            for c in 0..d {
                w.values[n * d + c] += f0[c] * p;
            }
        }
        w.values[..d].iter_mut().for_each(|v| *v = f64::NAN);
        w.weight = alpha;
    }
    Ok(w)
}

/// Caputo derivative ∂^α f = D^α (f - f(0)).
pub fn caputo_derivative(f: &GridFn, alpha: f64) -> Result<GridFn, GridError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(GridError::AlphaOutOfRange(alpha));
    }
    if f.is_weighted() {
        return Err(GridError::MissingInitialValue);
    }
    let d = f.dim;
    let mut g = f.clone();
    for n in 0..f.grid.len() {
        for c in 0..d {
            g.values[n * d + c] -= f.values[c];
        }
    }
    rl_derivative(&g, alpha)
}

/// Second-order first derivative on a possibly nonuniform grid.
fn grid_gradient(f: &GridFn) -> Result<GridFn, GridError> {
    if f.is_weighted() {
        return Err(GridError::WeightTooLarge(f.weight + 1.0));
    }
    let t = f.grid.nodes();
    let n = f.grid.intervals();
    let d = f.dim;
    let v = &f.values;
    let mut out = vec![0.0; v.len()];
    // three-point Lagrange derivative at node i using nodes (a, b, c)
    let deriv = |i: usize, a: usize, b: usize, c: usize, comp: usize| {
        let (xa, xb, xc, x) = (t[a], t[b], t[c], t[i]);
        let la = ((x - xb) + (x - xc)) / ((xa - xb) * (xa - xc));
        let lb = ((x - xa) + (x - xc)) / ((xb - xa) * (xb - xc));
        let lc = ((x - xa) + (x - xb)) / ((xc - xa) * (xc - xb));
        la * v[a * d + comp] + lb * v[b * d + comp] + lc * v[c * d + comp]
    };
    for comp in 0..d {
        out[comp] = deriv(0, 0, 1, 2, comp);
        for i in 1..n {
            out[i * d + comp] = deriv(i, i - 1, i, i + 1, comp);
        }
        out[n * d + comp] = deriv(n, n - 2, n - 1, n, comp);
    }
    Ok(GridFn { grid: f.grid.clone(), dim: d, values: out, weight: 0.0 })
}

/// Composition D^{η_k} ∘ … ∘ D^{η_1} f; factors with η = 1 use grid differencing.
pub fn sequential_derivative(f: &GridFn, orders: &SequentialOrders) -> Result<GridFn, GridError> {
    let mut cur = f.clone();
    for (i, &eta) in orders.etas().iter().enumerate() {
        cur = if eta == 1.0 { grid_gradient(&cur)? } else { rl_derivative(&cur, eta)? };
        let d = cur.dim;
        if cur.values[cur.first_index() * d..].iter().any(|v| !v.is_finite()) {
            return Err(GridError::CompositionBlowup(i + 1));
        }
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform(1.0, n).unwrap())
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(TimeGrid::uniform(1.0, 1), Err(GridError::TooFewIntervals(1))));
        assert!(matches!(TimeGrid::uniform(0.0, 4), Err(GridError::NonPositiveHorizon(_))));
        assert!(matches!(TimeGrid::from_nodes(vec![0.0, 0.5, 0.5, 1.0]), Err(GridError::NotIncreasing(2))));
        assert!(matches!(TimeGrid::from_nodes(vec![0.1, 0.5, 1.0]), Err(GridError::NonZeroStart(_))));
        let g = TimeGrid::from_nodes(vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        assert!(g.step().is_some());
        let g = TimeGrid::graded(1.0, 8, 2.0).unwrap();
        assert!(g.step().is_none());
        assert_eq!(g.horizon(), 1.0);
    }

    #[test]
    fn integral_of_constant_and_linear() {
        let g = grid(16);
        let one = GridFn::constant(&g, 1.0);
        let j = frac_integral(&one, 0.5).unwrap();
        assert!((j.scalar(16) - rgamma(1.5)).abs() < 1e-14);
        let lin = GridFn::from_fn(&g, |t| t);
        let j = frac_integral(&lin, 0.5).unwrap();
        assert!((j.scalar(16) - rgamma(2.5)).abs() < 1e-14);
    }

    #[test]
    fn rl_of_constant() {
        let g = grid(32);
        let one = GridFn::constant(&g, 1.0);
        let d = rl_derivative(&one, 0.5).unwrap();
        assert!(d.is_weighted());
        assert!((d.scalar(32) - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn caputo_of_constant_vanishes() {
        let g = grid(32);
        let c = GridFn::constant(&g, 3.0);
        let d = caputo_derivative(&c, 0.4).unwrap();
        assert!(d.sup_norm() < 1e-14);
    }

    #[test]
    fn rl_inverts_integral_on_linear_data() {
        let g = grid(64);
        let f = GridFn::from_fn(&g, |t| 1.0 + 2.0 * t);
        let j = frac_integral(&f, 0.3).unwrap();
        let back = rl_derivative(&j, 0.3).unwrap();
        for n in 0..=64 {
            assert!((back.scalar(n) - f.scalar(n)).abs() < 1e-10, "{n}");
        }
    }

    #[test]
    fn weighted_integral_equality_case() {
        // J^α t^{-γ} = Γ(1-γ)/Γ(1-γ+α) t^{α-γ}
        let g = grid(40);
        let v = GridFn::weighted_from_fn(&g, 0.25, |t| t.powf(-0.25)).unwrap();
        let j = frac_integral(&v, 0.5).unwrap();
        for n in 1..=40 {
            let t = g.nodes()[n];
            let exact = gamma(0.75) / gamma(1.25) * t.powf(0.25);
            assert!((j.scalar(n) - exact).abs() < 1e-11 * exact, "{n}: {} {exact}", j.scalar(n));
        }
    }

    #[test]
    fn sequential_with_unit_order_differentiates() {
        let g = grid(20);
        let f = GridFn::from_fn(&g, |t| t * t);
        let o = SequentialOrders::new(vec![1.0]).unwrap();
        let d = sequential_derivative(&f, &o).unwrap();
        for n in 0..=20 {
            assert!((d.scalar(n) - 2.0 * g.nodes()[n]).abs() < 1e-12);
        }
        assert!(SequentialOrders::new(vec![0.5, 1.2]).is_err());
    }

    #[test]
    fn norms() {
        let g = grid(10);
        let f = GridFn::constant(&g, 2.0);
        assert!((f.lp_norm(1.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((f.lp_norm(2.0).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(f.lp_norm(f64::INFINITY).unwrap(), 2.0);
        assert!(f.lp_norm(0.5).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = Arc::new(TimeGrid::graded(1.0, 7, 1.7).unwrap());
        let f = GridFn::from_fn(&g, |t| (3.0 * t).sin() / 7.0);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = GridFn::read_csv(&buf[..], 0.0).unwrap();
        assert_eq!(back, f);
    }
}
