//! Fixed quadrature rules shared by the evaluators.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `n`-point rule by Newton iteration on P_n.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared 8-point rule.
pub fn gl8() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(8))
}

/// Shared 16-point rule.
pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

/// Shared 32-point rule.
pub fn gl32() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(32))
}

/// Tanh-sinh rule on (-1, 1); robust against algebraic endpoint singularities.
#[derive(Debug, Clone)]
pub struct TanhSinh {
    /// (distance of node to the nearer endpoint, abscissa sign handled by caller, weight)
    points: Vec<(f64, f64)>,
    step: f64,
}

impl TanhSinh {
    pub fn new(levels: usize) -> Self {
        let step = 2f64.powi(-(levels as i32));
        let mut points = Vec::new();
        let mut k = 0i64;
        loop {
            let t = k as f64 * step;
            let s = 0.5 * PI * t.sinh();
            let c = 0.5 * PI * t.cosh();
            let ch = s.cosh();
            // 1 - tanh(s) computed without cancellation
            let one_minus = 1.0 / (s.exp() * ch);
            let w = c / (ch * ch);
            if one_minus < 1e-300 || w < 1e-300 {
                break;
            }
            points.push((one_minus, w));
            k += 1;
        }
        Self { points, step }
    }

    /// Integrates `f(x)` over `(a, b)`; `f` receives `(x, x - a, b - x)` so that
    /// singular factors can be evaluated from exact endpoint distances.
    pub fn integrate<F: FnMut(f64, f64, f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mut sum = 0.0;
        for (i, &(one_minus, w)) in self.points.iter().enumerate() {
            // node near b: x = b - half*one_minus; node near a: x = a + half*one_minus
            let da = half * one_minus;
            if i == 0 {
                let x = a + half;
                sum += w * f(x, half, half);
                continue;
            }
            let xr = b - da;
            let xl = a + da;
            let vr = f(xr, b - a - da, da);
            let vl = f(xl, da, b - a - da);
            if vr.is_finite() {
                sum += w * vr;
            }
            if vl.is_finite() {
                sum += w * vl;
            }
        }
        sum * half * self.step
    }
}

pub fn tanh_sinh() -> &'static TanhSinh {
    static RULE: OnceLock<TanhSinh> = OnceLock::new();
    RULE.get_or_init(|| TanhSinh::new(6))
}

/// Gauss-Jacobi rule for the weight (1-θ)^a θ^b on [0, 1], a, b > -1 (Golub-Welsch).
#[derive(Debug, Clone)]
pub struct GaussJacobi {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussJacobi {
    pub fn new(n: usize, a: f64, b: f64) -> Self {
        assert!(n >= 1 && a > -1.0 && b > -1.0, "invalid Gauss-Jacobi parameters");
        let ab = a + b;
        let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let kf = k as f64;
            let s = 2.0 * kf + ab;
            jac[(k, k)] = if k == 0 { (b - a) / (ab + 2.0) } else { (b * b - a * a) / (s * (s + 2.0)) };
            if k + 1 < n {
                let m = kf + 1.0;
                let s = 2.0 * m + ab;
                let num = 4.0 * m * (m + a) * (m + b) * (m + ab);
                let off = (num / (s * s * (s + 1.0) * (s - 1.0))).sqrt();
                jac[(k, k + 1)] = off;
                jac[(k + 1, k)] = off;
            }
        }
        let eig = jac.symmetric_eigen();
        // total mass of the weight on [0, 1]
        let mu0 = crate::special::beta(a + 1.0, b + 1.0);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (0.5 * (eig.eigenvalues[i] + 1.0), mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        Self { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}
