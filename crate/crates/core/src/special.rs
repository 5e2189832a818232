//! Thin wrappers over the gamma family with the conventions the solvers need.

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// ln|Γ(x)|.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma_r(x).0
}

pub fn digamma(x: f64) -> f64 {
    statrs::function::gamma::digamma(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// 1/Γ(x), zero at the poles of Γ and finite for large arguments.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.round() {
        return 0.0;
    }
    if x > 170.0 {
        return (-ln_gamma(x)).exp();
    }
    1.0 / gamma(x)
}

/// Complete beta function B(p, q) for positive arguments.
pub fn beta(p: f64, q: f64) -> f64 {
    if p + q < 170.0 {
        gamma(p) * gamma(q) / gamma(p + q)
    } else {
        (ln_gamma(p) + ln_gamma(q) - ln_gamma(p + q)).exp()
    }
}

/// ∫_0^q x^(a-1) (1-x)^(b-1) dx for 0 ≤ q ≤ 1.
pub fn incomplete_beta(a: f64, b: f64, q: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return beta(a, b);
    }
    if q <= 0.5 {
        // binomial series in q
        let mut coef = 1.0;
        let mut sum = 0.0;
        let mut qk = q.powf(a);
        for k in 0..2000 {
            let term = coef * qk / (a + k as f64);
            sum += term;
            if term.abs() < 1e-17 * sum.abs() && k > 2 {
                break;
            }
            coef *= (k as f64 + 1.0 - b) / (k as f64 + 1.0);
            qk *= q;
        }
        sum
    } else {
        statrs::function::beta::beta_reg(a, b, q) * beta(a, b)
    }
}
