//! Instability witnesses: data sequences that shrink to zero while the
//! corresponding solutions blow up, evaluated in closed form on the Fourier side.

use std::f64::consts::PI;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::fracgrid::fmt_f64;

#[derive(Debug, Error, PartialEq)]
pub enum IllposedError {
    #[error("index {0} below 2")]
    IndexTooSmall(usize),
    #[error("parameter {name} = {value} must be positive")]
    NonPositive { name: &'static str, value: f64 },
    #[error("witness CSV: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstabilityWitness {
    pub n: usize,
    /// α_n - α₀, or the perturbation ε_n of the order.
    pub order_perturbation: f64,
    pub data_norm: f64,
    pub solution_norm_lower: f64,
    pub solution_norm_exact: Option<f64>,
    /// ln of `solution_norm_lower`, finite even when the norm itself is not.
    pub ln_solution_lower: f64,
    /// |order_perturbation| + data_norm.
    pub combined_distance: f64,
}

fn check_index(n: usize) -> Result<f64, IllposedError> {
    if n < 2 {
        return Err(IllposedError::IndexTooSmall(n));
    }
    Ok(n as f64)
}

/// ((1+x)^p - 1)/(p x) for 0 < x ≤ 1/8 by the binomial series, so that the
/// result is never rounded below 1 when p > 1.
fn binomial_ratio(p: f64, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (p - k as f64) / (k as f64 + 1.0) * x;
        sum += term;
        if term.abs() <= 1e-17 * sum {
            break;
        }
    }
    sum
}

/// u = D^{α_n} f on the half line with f̂ = χ_{(a_n, a_n+δ_n)}, a_n = n^n,
/// α_n = δ_n = 1/n: ‖f_n‖² = 1/(nπ) while ‖u_n‖² ≥ a_n^{2α_n} δ_n/π = n/π.
pub fn abel_halfline_instability(n: usize) -> Result<InstabilityWitness, IllposedError> {
    let nf = check_index(n)?;
    let delta = 1.0 / nf;
    let data_sq = delta / PI;
    // a^{2α} = n^{n·2/n}
    let ln_lower_sq = 2.0 * nf.ln() + delta.ln() - PI.ln();
    let lower_sq = (2.0 * nf.ln()).exp() * delta / PI;
    // (1/π)∫_a^{a+δ} τ^{2α} dτ = lower² · ((1+δ/a)^p - 1)/(p δ/a), p = 2α + 1
    let p = 2.0 * delta + 1.0;
    let x = (-nf * nf.ln()).exp() * delta;
    let ratio = if x <= 0.125 { binomial_ratio(p, x) } else { (p * x.ln_1p()).exp_m1() / (p * x) };
    // rounding is monotone, so ratio ≥ 1 keeps exact ≥ lower
    let exact_sq = lower_sq * ratio;
    let data_norm = data_sq.sqrt();
    Ok(InstabilityWitness {
        n,
        order_perturbation: delta,
        data_norm,
        solution_norm_lower: lower_sq.sqrt(),
        solution_norm_exact: Some(exact_sq.sqrt()),
        ln_solution_lower: 0.5 * ln_lower_sq,
        combined_distance: delta + data_norm,
    })
}

/// û = e^{aτ^{α+ε_n}} f̂_n with f̂_n = n χ_{(n^n, n^n+n^{-3})} and ε_n = 1/n.
/// The data size is the integral of |f̂_n|², which is 1/n, and the solution
/// satisfies ‖u_n‖² ≥ e^{2an}/n since τ^{α+ε_n} ≥ n on the support.
pub fn exp_multiplier_instability(n: usize, a: f64, alpha: f64) -> Result<InstabilityWitness, IllposedError> {
    let nf = check_index(n)?;
    if !(a > 0.0 && a.is_finite()) {
        return Err(IllposedError::NonPositive { name: "a", value: a });
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(IllposedError::NonPositive { name: "alpha", value: alpha });
    }
    let eps = 1.0 / nf;
    let data_norm = nf * nf / (nf * nf * nf);
    let ln_lower_sq = 2.0 * a * nf - nf.ln();
    Ok(InstabilityWitness {
        n,
        order_perturbation: eps,
        data_norm,
        solution_norm_lower: (0.5 * ln_lower_sq).exp(),
        solution_norm_exact: None,
        ln_solution_lower: 0.5 * ln_lower_sq,
        combined_distance: eps + data_norm,
    })
}

pub fn write_witness_csv<W: Write>(witnesses: &[InstabilityWitness], mut w: W) -> io::Result<()> {
    writeln!(w, "n,data_norm,solution_lower,solution_exact,combined_distance")?;
    for x in witnesses {
        let exact = x.solution_norm_exact.map(fmt_f64).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            x.n,
            fmt_f64(x.data_norm),
            fmt_f64(x.solution_norm_lower),
            exact,
            fmt_f64(x.combined_distance)
        )?;
    }
    Ok(())
}

/// Rows of a witness CSV as (n, data_norm, solution_lower, solution_exact, combined_distance).
pub fn read_witness_csv<R: BufRead>(r: R) -> Result<Vec<(usize, f64, f64, Option<f64>, f64)>, IllposedError> {
    let err = |m: String| IllposedError::Csv(m);
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| err(format!("{s}: {e}")));
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(err(format!("row {line:?}")));
        }
        let n = f[0].trim().parse::<usize>().map_err(|e| err(format!("{}: {e}", f[0])))?;
        let exact = if f[3].trim().is_empty() { None } else { Some(num(f[3])?) };
        out.push((n, num(f[1])?, num(f[2])?, exact, num(f[4])?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_indices_are_rejected() {
        assert_eq!(abel_halfline_instability(1), Err(IllposedError::IndexTooSmall(1)));
        assert_eq!(exp_multiplier_instability(0, 1.0, 0.5), Err(IllposedError::IndexTooSmall(0)));
        assert!(matches!(exp_multiplier_instability(3, 0.0, 0.5), Err(IllposedError::NonPositive { name: "a", .. })));
        assert!(matches!(exp_multiplier_instability(3, 1.0, -1.0), Err(IllposedError::NonPositive { name: "alpha", .. })));
    }

    #[test]
    fn halfline_n4() {
        let w = abel_halfline_instability(4).unwrap();
        assert!((w.data_norm.powi(2) - 0.0795775).abs() < 1e-7);
        assert!((w.solution_norm_lower.powi(2) - 1.273240).abs() < 1e-6);
    }

    #[test]
    fn binomial_ratio_agrees_with_the_direct_formula() {
        for &(p, x) in &[(1.5f64, 0.1f64), (2.0, 0.05), (1.1, 0.125), (3.0, 0.01)] {
            let direct = ((1.0 + x).powf(p) - 1.0) / (p * x);
            assert!((binomial_ratio(p, x) - direct).abs() < 1e-14, "{p} {x}");
        }
        assert!(binomial_ratio(1.04, 1e-80) >= 1.0);
    }

    #[test]
    fn exp_multiplier_n5() {
        let w = exp_multiplier_instability(5, 1.0, 0.5).unwrap();
        assert_eq!(w.data_norm, 0.2);
        assert!((w.combined_distance - 0.4).abs() < 1e-15);
        assert!(w.solution_norm_exact.is_none());
    }
}
