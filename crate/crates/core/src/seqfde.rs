//! Fractional differential equations with sequential derivatives,
//!
//! ```text
//! D^{σ_k} y + Σ_{j=1}^{k-1} p_{k-j}(t) D^{σ_j} y + p_k(t) y = f,   D^{σ_j - 1} y(0) = b_j,
//! ```
//!
//! reduced to a second-kind Abel equation for ψ = D^{σ_k} y with weight
//! (t - s)^{η_k - 1}, then reconstructed as
//! y = Σ_j b_j t^{σ_j-1}/Γ(σ_j) + J^{σ_k} ψ.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::abel::{solve_second_kind, AbelError, AbelProblem, KernelSpec};
use crate::fracgrid::{frac_integral, GridError, GridFn, SequentialOrders, TimeGrid};
use crate::special::rgamma;

pub type Coefficient = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const MAX_ITER: usize = 2000;
/// Extra sample points per unit interval used to bound the coefficients.
const COEFF_SAMPLES: usize = 4096;
const COEFF_MARGIN: f64 = 1.01;

#[derive(Debug, Error)]
pub enum SeqError {
    #[error("weight {gamma} outside ({lo}, 1)")]
    GammaOutOfRange { gamma: f64, lo: f64 },
    #[error("coefficient p_{0} is not bounded on the grid")]
    CoefficientUnbounded(usize),
    #[error("expected {expected} {what}, got {got}")]
    CountMismatch { what: &'static str, expected: usize, got: usize },
    #[error("order η_{index} = {eta} outside [{eta0}, 1]")]
    OrderOutOfRange { index: usize, eta: f64, eta0: f64 },
    #[error("initial value b_{index} = {value} outside the declared box")]
    InitialValueOutOfBox { index: usize, value: f64 },
    #[error("forcing must carry a value at t = 0 or a weight below 1 - ν")]
    ForcingWeight,
    #[error(transparent)]
    Abel(#[from] AbelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Clone)]
pub struct SequentialProblem {
    pub orders: SequentialOrders,
    /// p_1, …, p_k.
    pub pcoeffs: Vec<Coefficient>,
    pub f: GridFn,
    /// b_1, …, b_k.
    pub bvals: Vec<f64>,
    /// Declared lower bound η₀ of the orders.
    pub eta0: f64,
}

impl fmt::Debug for SequentialProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SequentialProblem")
            .field("orders", &self.orders)
            .field("bvals", &self.bvals)
            .field("eta0", &self.eta0)
            .finish_non_exhaustive()
    }
}

impl SequentialProblem {
    /// `bbox` is the declared box (B₀, B₁) for the initial data.
    pub fn new(
        orders: SequentialOrders,
        pcoeffs: Vec<Coefficient>,
        f: GridFn,
        bvals: Vec<f64>,
        eta0: f64,
        bbox: (f64, f64),
    ) -> Result<Self, SeqError> {
        let k = orders.len();
        if pcoeffs.len() != k {
            return Err(SeqError::CountMismatch { what: "coefficients", expected: k, got: pcoeffs.len() });
        }
        if bvals.len() != k {
            return Err(SeqError::CountMismatch { what: "initial values", expected: k, got: bvals.len() });
        }
        for (i, &eta) in orders.etas().iter().enumerate() {
            if !(eta0 > 0.0 && eta >= eta0 && eta <= 1.0) {
                return Err(SeqError::OrderOutOfRange { index: i + 1, eta, eta0 });
            }
        }
        for (i, &b) in bvals.iter().enumerate() {
            if !(b >= bbox.0 && b <= bbox.1) {
                return Err(SeqError::InitialValueOutOfBox { index: i + 1, value: b });
            }
        }
        Ok(Self { orders, pcoeffs, f, bvals, eta0 })
    }

    pub fn k(&self) -> usize {
        self.orders.len()
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        self.f.grid()
    }

    /// ν = min η_j.
    pub fn nu(&self) -> f64 {
        self.orders.etas().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Midpoint of (1 - η₀, 1).
    pub fn default_gamma(&self) -> f64 {
        1.0 - 0.5 * self.eta0
    }

    fn p(&self, j: usize, t: f64) -> f64 {
        (self.pcoeffs[j - 1])(t)
    }
}

/// Coefficient c(t, s) of ψ in the kernel, written so that ψ + ∫ (t-s)^{η_k-1} c ψ ds = g:
/// c = p_k(t) (t-s)^{σ_k-η_k}/Γ(σ_k) + Σ_{j=1}^{k-1} p_{k-j}(t) (t-s)^{σ_k-σ_j-η_k}/Γ(σ_k-σ_j).
pub fn kernel_coefficient(sp: &SequentialProblem, t: f64, s: f64) -> f64 {
    let k = sp.k();
    let sig = sp.orders.sigmas();
    let sk = sig[k - 1];
    let ek = sp.orders.etas()[k - 1];
    let x = t - s;
    let mut c = sp.p(k, t) * x.powf(sk - ek) * rgamma(sk);
    for j in 1..k {
        c += sp.p(k - j, t) * x.powf(sk - sig[j - 1] - ek) * rgamma(sk - sig[j - 1]);
    }
    c
}

/// g(t) = f - p_k Σ_j b_j t^{σ_j-1}/Γ(σ_j) - Σ_{j<k} p_{k-j} Σ_{ℓ>j} b_ℓ t^{σ_ℓ-σ_j-1}/Γ(σ_ℓ-σ_j)
/// for t > 0.
pub fn forcing_shift(sp: &SequentialProblem, t: f64) -> f64 {
    let k = sp.k();
    let sig = sp.orders.sigmas();
    let b = &sp.bvals;
    // terms with a zero factor are skipped so that t = 0 never forms 0·∞
    let mut out = 0.0;
    let pk = sp.p(k, t);
    if pk != 0.0 {
        for j in 0..k {
            if b[j] != 0.0 {
                out += pk * b[j] * t.powf(sig[j] - 1.0) * rgamma(sig[j]);
            }
        }
    }
    for j in 1..k {
        let pj = sp.p(k - j, t);
        if pj == 0.0 {
            continue;
        }
        for l in j + 1..=k {
            if b[l - 1] != 0.0 {
                out += pj * b[l - 1] * t.powf(sig[l - 1] - sig[j - 1] - 1.0) * rgamma(sig[l - 1] - sig[j - 1]);
            }
        }
    }
    out
}

/// Sampled max |p_j| for j = 1..k (grid nodes plus a uniform sweep).
fn coefficient_sups(sp: &SequentialProblem) -> Result<Vec<f64>, SeqError> {
    let grid = sp.grid();
    let t_end = grid.horizon();
    (1..=sp.k())
        .map(|j| {
            let mut m: f64 = 0.0;
            let samples = grid.nodes().iter().cloned().chain((0..=COEFF_SAMPLES).map(|i| t_end * i as f64 / COEFF_SAMPLES as f64));
            for t in samples {
                let v = sp.p(j, t);
                if !v.is_finite() {
                    return Err(SeqError::CoefficientUnbounded(j));
                }
                m = m.max(v.abs());
            }
            Ok(m)
        })
        .collect()
}

fn coefficient_bound(sp: &SequentialProblem) -> Result<f64, SeqError> {
    Ok(COEFF_MARGIN * coefficient_sups(sp)?.into_iter().fold(0.0, f64::max))
}

/// Weight of g: the strongest singularity t^{e}, e < 0, among the forcing shift
/// terms whose coefficient and initial value are both nonzero. At most 1 - ν.
pub fn forcing_weight(sp: &SequentialProblem) -> Result<f64, SeqError> {
    let k = sp.k();
    let sig = sp.orders.sigmas();
    let sups = coefficient_sups(sp)?;
    let b = &sp.bvals;
    let mut w: f64 = 0.0;
    if sups[k - 1] > 0.0 {
        for l in 0..k {
            if b[l] != 0.0 {
                w = w.max(1.0 - sig[l]);
            }
        }
    }
    for j in 1..k {
        if sups[k - j - 1] > 0.0 {
            for l in j + 1..=k {
                if b[l - 1] != 0.0 {
                    w = w.max(1.0 - sig[l - 1] + sig[j - 1]);
                }
            }
        }
    }
    Ok(w.max(sp.f.weight()))
}

/// Lipschitz constant of the reduced kernel: the larger of k M_p T_k / Γ((k-1)η₀),
/// T_k = max(1, T^{k-1}), and the supremum of the assembled coefficient.
pub fn reduced_kappa(sp: &SequentialProblem) -> Result<f64, SeqError> {
    let mp = coefficient_bound(sp)?;
    let k = sp.k();
    let t_end = sp.grid().horizon();
    let tk = t_end.powi(k as i32 - 1).max(1.0);
    let stated = k as f64 * mp * tk * rgamma((k as f64 - 1.0) * sp.eta0);
    let sig = sp.orders.sigmas();
    let ek = sp.orders.etas()[k - 1];
    let sk = sig[k - 1];
    let mut direct = t_end.powf(sk - ek) * rgamma(sk).abs();
    for j in 1..k {
        direct += t_end.powf(sk - sig[j - 1] - ek) * rgamma(sk - sig[j - 1]).abs();
    }
    Ok(stated.max(mp * direct))
}

/// The second-kind Abel problem for ψ = D^{σ_k} y, of order η_k.
pub fn reduce_to_abel(sp: &SequentialProblem, gamma: f64) -> Result<AbelProblem, SeqError> {
    let lo = 1.0 - sp.eta0;
    if !(gamma > lo && gamma < 1.0) {
        return Err(SeqError::GammaOutOfRange { gamma, lo });
    }
    let kappa = reduced_kappa(sp)?;
    if sp.f.weight() > gamma {
        return Err(SeqError::ForcingWeight);
    }
    let weight = forcing_weight(sp)?;
    let grid = sp.grid().clone();
    let d = sp.f.dim();
    let t = grid.nodes();
    let mut g = vec![0.0; grid.len() * d];
    for n in usize::from(weight > 0.0)..grid.len() {
        let shift = forcing_shift(sp, t[n]);
        for c in 0..d {
            g[n * d + c] = sp.f.at(n)[c] - shift;
        }
    }
    let g = GridFn::new(grid, d, g, weight)?;
    let alpha = sp.orders.etas()[sp.k() - 1];
    let inner = sp.clone();
    let kernel = KernelSpec::new(
        move |t, s, _, _, w, out| {
            let c = kernel_coefficient(&inner, t, s);
            for (o, v) in out.iter_mut().zip(w) {
                *o = -c * v;
            }
        },
        kappa,
        0.0,
        sp.orders.etas().to_vec(),
    )?;
    // term m carries p_{k-m}(t)/Γ(σ_k - σ_m) (t - s)^{σ_k - σ_m - η_k}, σ_0 = 0
    let k = sp.k();
    let sig = sp.orders.sigmas();
    let sk = sig[k - 1];
    let shifts: Vec<f64> = (0..k).map(|m| if m == 0 { sk } else { sk - sig[m - 1] }).collect();
    let exponents = shifts.iter().map(|x| (x - alpha).max(0.0)).collect();
    let sups = coefficient_sups(sp)?;
    let kappas = shifts.iter().enumerate().map(|(m, x)| COEFF_MARGIN * sups[k - m - 1] * rgamma(*x).abs()).collect();
    let inner = sp.clone();
    let scale: Vec<f64> = shifts.iter().map(|x| rgamma(*x)).collect();
    let kernel = kernel.with_split(exponents, kappas, move |m, t, _, _, _, w, out| {
        let c = inner.p(k - m, t) * scale[m];
        for (o, v) in out.iter_mut().zip(w) {
            *o = -c * v;
        }
    })?;
    Ok(AbelProblem::new(kernel, g, alpha, gamma)?)
}

/// y = Σ_j b_j t^{σ_j-1}/Γ(σ_j) + J^{σ_k} ψ.
pub fn reconstruct(sp: &SequentialProblem, psi: &GridFn) -> Result<GridFn, SeqError> {
    let k = sp.k();
    let sig = sp.orders.sigmas();
    let j = frac_integral(psi, sig[k - 1])?;
    let singular = (0..k).filter(|&i| sp.bvals[i] != 0.0 && sig[i] < 1.0).map(|i| 1.0 - sig[i]).fold(0.0, f64::max);
    let weight = j.weight().max(singular);
    let grid = psi.grid().clone();
    let d = psi.dim();
    let t = grid.nodes();
    let mut y = vec![0.0; grid.len() * d];
    let start = usize::from(weight > 0.0);
    for n in start..grid.len() {
        let mut b = 0.0;
        for i in 0..k {
            if sp.bvals[i] != 0.0 {
                b += sp.bvals[i] * t[n].powf(sig[i] - 1.0) * rgamma(sig[i]);
            }
        }
        for c in 0..d {
            y[n * d + c] = j.at(n)[c] + b;
        }
    }
    Ok(GridFn::new(grid, d, y, weight)?)
}

/// Solves for ψ = D^{σ_k} y and reconstructs y.
pub fn solve_sequential(sp: &SequentialProblem, gamma: f64, tol: f64) -> Result<(GridFn, GridFn), SeqError> {
    let p = reduce_to_abel(sp, gamma)?;
    let psi = solve_second_kind(&p, tol, MAX_ITER)?.u;
    let y = reconstruct(sp, &psi)?;
    Ok((psi, y))
}
