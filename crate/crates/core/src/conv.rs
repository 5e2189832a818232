//! Product integration of convolution kernels k(t - s) against piecewise-linear data.
//!
//! For a target node t_n the integral ∫_0^{t_n} k(t_n - s) v(s) ds is replaced by
//! Σ_j c_{n,j} v_j, where the hat functions of the mesh are integrated exactly
//! against k. Weighted data (no value at t_0) use the power model
//! v(s) ≈ v_1 (s/t_1)^{-γ} on the first cell.

use rayon::prelude::*;

use crate::fracgrid::TimeGrid;
use crate::mlf::{ml, MlError};
use crate::quad::{gl8, tanh_sinh};
use crate::special::incomplete_beta;

/// Convolution kernel k(x), x = t - s > 0.
pub trait ConvKernel: Sync {
    fn eval(&self, x: f64) -> f64;

    /// Weights of the left and right hat functions on the cell x ∈ [b, a]
    /// (a = t_n - t_j, b = t_n - t_{j+1}).
    fn cell(&self, a: f64, b: f64) -> (f64, f64);

    /// ∫_0^{t1} k(tn - s) (s/t1)^{-γ} ds.
    fn first_cell(&self, t1: f64, tn: f64, gamma: f64) -> f64 {
        let off = tn - t1;
        tanh_sinh().integrate(0.0, t1, |_, ds, db| self.eval(off + db) * (ds / t1).powf(-gamma))
    }
}

/// Cell weights from the primitives P1' = k and P2' = P1 (P1(0) = P2(0) = 0),
/// switching to Gauss-Legendre on cells well separated from the origin.
fn cell_via_primitives<K: ConvKernel + ?Sized>(
    k: &K,
    a: f64,
    b: f64,
    p1: impl Fn(f64) -> f64,
    p2: impl Fn(f64) -> f64,
) -> (f64, f64) {
    let d = a - b;
    if b >= 4.0 * d {
        let rule = gl8();
        let mut total = 0.0;
        let mut right = 0.0;
        let half = 0.5 * d;
        let mid = b + half;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let xx = mid + half * x;
            let kv = k.eval(xx) * w * half;
            total += kv;
            right += kv * (a - xx) / d;
        }
        return (total - right, right);
    }
    let p1b = p1(b);
    let total = p1(a) - p1b;
    // ∫_b^a k(x)(a - x) dx = P2(a) - P2(b) - P1(b)(a - b)
    let right = (p2(a) - p2(b) - p1b * d) / d;
    (total - right, right)
}

/// k(x) = x^{α-1}.
#[derive(Debug, Clone, Copy)]
pub struct PowerKernel {
    pub alpha: f64,
}

impl ConvKernel for PowerKernel {
    fn eval(&self, x: f64) -> f64 {
        x.powf(self.alpha - 1.0)
    }

    fn cell(&self, a: f64, b: f64) -> (f64, f64) {
        let al = self.alpha;
        let eps = (a - b) / a;
        let aa = a.powf(al);
        // ∫_b^a x^{α-1} dx = a^α (1 - r^α)/α with r = 1 - ε
        let total = if eps >= 1.0 { aa / al } else { -aa * (al * (-eps).ln_1p()).exp_m1() / al };
        // ∫_b^a x^{α-1}(a - x) dx = a^{α+1} Q(ε), Q(ε) = ∫_0^ε (1-u)^{α-1} u du
        let q = if eps <= 0.5 {
            let mut c = 1.0;
            let mut pw = eps * eps;
            let mut sum = 0.0;
            for k in 0..200 {
                let t = c * pw / (k as f64 + 2.0);
                sum += t;
                if t.abs() <= 1e-17 * sum.abs() {
                    break;
                }
                c *= (k as f64 + 1.0 - al) / (k as f64 + 1.0);
                pw *= eps;
            }
            sum
        } else {
            let r = 1.0 - eps;
            (1.0 - r.powf(al)) / al - (1.0 - r.powf(al + 1.0)) / (al + 1.0)
        };
        let right = aa * q / eps;
        (total - right, right)
    }

    fn first_cell(&self, t1: f64, tn: f64, gamma: f64) -> f64 {
        let q = t1 / tn;
        tn.powf(self.alpha) * q.powf(gamma) * incomplete_beta(1.0 - gamma, self.alpha, q)
    }
}

/// k(x) = x^{α-1} ln x.
#[derive(Debug, Clone, Copy)]
pub struct LogPowerKernel {
    pub alpha: f64,
}

impl LogPowerKernel {
    fn p1(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let a = self.alpha;
        x.powf(a) * (x.ln() / a - 1.0 / (a * a))
    }

    fn p2(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let a = self.alpha;
        let a1 = a + 1.0;
        x.powf(a1) * (x.ln() / (a * a1) - 1.0 / (a * a1 * a1) - 1.0 / (a * a * a1))
    }
}

impl ConvKernel for LogPowerKernel {
    fn eval(&self, x: f64) -> f64 {
        x.powf(self.alpha - 1.0) * x.ln()
    }

    fn cell(&self, a: f64, b: f64) -> (f64, f64) {
        cell_via_primitives(self, a, b, |x| self.p1(x), |x| self.p2(x))
    }
}

/// k(x) = x^{α-1} E_{α,α}(λ x^α), the resolvent kernel of the linear Abel equation.
#[derive(Debug, Clone, Copy)]
pub struct MlKernel {
    pub alpha: f64,
    pub lambda: f64,
}

impl MlKernel {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self, MlError> {
        // probe once so that later evaluations cannot fail on parameter validity
        ml(alpha, alpha, -lambda.abs())?;
        Ok(Self { alpha, lambda })
    }

    fn e(&self, beta: f64, x: f64) -> f64 {
        ml(self.alpha, beta, self.lambda * x.powf(self.alpha)).unwrap_or(f64::NAN)
    }

    /// X^α E_{α,α+1}(λX^α).
    pub fn p1(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        x.powf(self.alpha) * self.e(self.alpha + 1.0, x)
    }

    /// X^{α+1} E_{α,α+2}(λX^α).
    pub fn p2(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        x.powf(self.alpha + 1.0) * self.e(self.alpha + 2.0, x)
    }
}

impl ConvKernel for MlKernel {
    fn eval(&self, x: f64) -> f64 {
        x.powf(self.alpha - 1.0) * self.e(self.alpha, x)
    }

    fn cell(&self, a: f64, b: f64) -> (f64, f64) {
        cell_via_primitives(self, a, b, |x| self.p1(x), |x| self.p2(x))
    }
}

const ROW_CACHE_LIMIT: usize = 4096;
/// Cells near the origin on which weighted data are interpolated as s^γ v(s).
const FACTORED_CELLS: usize = 64;

/// Weights of ∫ k(tn - s) s^{-γ} ℓ(s) ds for the two hat functions of [tj, tj1].
fn factored_cell<K: ConvKernel + ?Sized>(k: &K, tn: f64, tj: f64, tj1: f64, gamma: f64) -> (f64, f64) {
    let d = tj1 - tj;
    let gap = tn - tj1;
    let mut left = 0.0;
    let mut right = 0.0;
    if gap >= 0.5 * d {
        let rule = crate::quad::gl16();
        let half = 0.5 * d;
        let mid = tj + half;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let s = mid + half * x;
            let v = k.eval(tn - s) * s.powf(-gamma) * w * half;
            left += v * (tj1 - s) / d;
            right += v * (s - tj) / d;
        }
    } else {
        let total = tanh_sinh().integrate(tj, tj1, |_, da, db| {
            let s = tj + da;
            k.eval(gap + db) * s.powf(-gamma) * (da / d)
        });
        right = total;
        left = tanh_sinh().integrate(tj, tj1, |_, da, db| {
            let s = tj + da;
            k.eval(gap + db) * s.powf(-gamma) * (db / d)
        });
    }
    (left, right)
}

/// Precomputed product-integration weights for one kernel on one grid.
pub struct ProductRule<'a, K: ConvKernel> {
    kernel: &'a K,
    grid: &'a TimeGrid,
    gamma: f64,
    table: Option<(Vec<f64>, Vec<f64>)>,
    rows: Option<Vec<Vec<f64>>>,
    first: Vec<f64>,
    corrections: Vec<Vec<f64>>,
}

impl<'a, K: ConvKernel> ProductRule<'a, K> {
    /// `gamma` is the weight of the data: 0 for data with a value at t_0.
    pub fn new(kernel: &'a K, grid: &'a TimeGrid, gamma: f64) -> Self {
        let n = grid.intervals();
        let t = grid.nodes();
        let table = grid.step().map(|h| {
            let pairs: Vec<(f64, f64)> =
                (0..n).into_par_iter().map(|m| kernel.cell((m as f64 + 1.0) * h, m as f64 * h)).collect();
            pairs.into_iter().unzip()
        });
        let first = if gamma > 0.0 {
            (0..=n)
                .into_par_iter()
                .map(|k| if k == 0 { 0.0 } else { kernel.first_cell(t[1], t[k], gamma) })
                .collect()
        } else {
            Vec::new()
        };
        let mut rule = Self { kernel, grid, gamma, table, rows: None, first, corrections: Vec::new() };
        if gamma > 0.0 {
            let corr = (0..=n).into_par_iter().map(|k| if k == 0 { Vec::new() } else { rule.weighted_correction(k) }).collect();
            rule.corrections = corr;
        }
        if rule.table.is_none() && n <= ROW_CACHE_LIMIT {
            let rows = (0..=n)
                .into_par_iter()
                .map(|k| {
                    let mut r = Vec::new();
                    rule.fill_row(k, &mut r);
                    r
                })
                .collect();
            rule.rows = Some(rows);
        }
        rule
    }

    pub fn grid(&self) -> &TimeGrid {
        self.grid
    }

    fn fill_row(&self, n: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(n + 1, 0.0);
        if n == 0 {
            return;
        }
        let t = self.grid.nodes();
        let weighted = self.gamma > 0.0;
        match &self.table {
            Some((wl, wr)) => {
                for j in 0..n {
                    let (l, r) = (wl[n - j - 1], wr[n - j - 1]);
                    out[j] += l;
                    out[j + 1] += r;
                }
            }
            None => {
                for j in 0..n {
                    let (l, r) = self.kernel.cell(t[n] - t[j], t[n] - t[j + 1]);
                    out[j] += l;
                    out[j + 1] += r;
                }
            }
        }
        if weighted {
            for (j, c) in self.corrections[n].iter().enumerate() {
                out[j] += c;
            }
            out[0] = 0.0;
        }
    }

    /// Additive changes to the plain row for weighted data: the first cell becomes
    /// the power model and the next cells interpolate s^γ v(s).
    fn weighted_correction(&self, n: usize) -> Vec<f64> {
        let t = self.grid.nodes();
        let g = self.gamma;
        let m = n.min(FACTORED_CELLS);
        let mut out = vec![0.0; m + 1];
        let plain = |j: usize| match &self.table {
            Some((wl, wr)) => (wl[n - j - 1], wr[n - j - 1]),
            None => self.kernel.cell(t[n] - t[j], t[n] - t[j + 1]),
        };
        let (l, r) = plain(0);
        out[0] -= l;
        out[1] += self.first[n] - r;
        for j in 1..m {
            let (l, r) = plain(j);
            let (fl, fr) = factored_cell(self.kernel, t[n], t[j], t[j + 1], g);
            out[j] += fl * t[j].powf(g) - l;
            out[j + 1] += fr * t[j + 1].powf(g) - r;
        }
        out
    }

    /// Coefficients c_{n,j}, j = 0..=n.
    pub fn row(&self, n: usize, out: &mut Vec<f64>) {
        match &self.rows {
            Some(rows) => {
                out.clear();
                out.extend_from_slice(&rows[n]);
            }
            None => self.fill_row(n, out),
        }
    }

    /// Borrowed row when cached, otherwise computed into `buf`.
    pub fn row_ref<'b>(&'b self, n: usize, buf: &'b mut Vec<f64>) -> &'b [f64] {
        match &self.rows {
            Some(rows) => &rows[n],
            None => {
                self.fill_row(n, buf);
                buf
            }
        }
    }

    /// c_{n,n}, the weight of the value at the target node.
    pub fn diagonal(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        if let Some(rows) = &self.rows {
            return rows[n][n];
        }
        if let Some((_, wr)) = &self.table {
            let corr = if self.gamma > 0.0 { self.corrections[n].get(n).copied().unwrap_or(0.0) } else { 0.0 };
            return wr[0] + corr;
        }
        let mut r = Vec::new();
        self.fill_row(n, &mut r);
        r[n]
    }

    /// Σ_j c_{n,j} v_j for strided vector data (component `c` of dimension `d`).
    pub fn apply_component(&self, n: usize, values: &[f64], d: usize, c: usize, buf: &mut Vec<f64>) -> f64 {
        let row = self.row_ref(n, buf);
        let start = if self.gamma > 0.0 { 1 } else { 0 };
        let mut s = 0.0;
        for j in start..=n {
            s += row[j] * values[j * d + c];
        }
        s
    }
}
