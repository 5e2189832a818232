//! Fixed-point extended precision used only as a reference in tests.
//!
//! Values are integers scaled by 2^PREC. Elementary functions follow the
//! textbook constructions: argument reduction plus Taylor for exp, atanh series
//! for ln, Machin's formula for π and a shifted Stirling series for ln Γ.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

pub const PREC: u32 = 448;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fx(pub BigInt);

impl PartialOrd for Fx {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.0.cmp(&other.0))
    }
}

impl Fx {
    pub fn zero() -> Self {
        Fx(BigInt::zero())
    }

    pub fn one() -> Self {
        Fx(BigInt::one() << PREC)
    }

    pub fn from_int(i: i64) -> Self {
        Fx(BigInt::from(i) << PREC)
    }

    /// Exact conversion of a finite double.
    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite());
        if x == 0.0 {
            return Fx::zero();
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1 } else { 1 };
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, e) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
        let m = BigInt::from(mant) * sign;
        let shift = PREC as i64 + e;
        if shift >= 0 {
            Fx(m << shift as usize)
        } else {
            Fx(m >> (-shift) as usize)
        }
    }

    pub fn from_ratio(r: &BigRational) -> Self {
        Fx((r.numer().clone() << PREC).div_floor(r.denom()))
    }

    pub fn to_f64(&self) -> f64 {
        if self.0.is_zero() {
            return 0.0;
        }
        let bits = self.0.bits() as i64;
        let s = bits - 64;
        let m = if s > 0 { &self.0 >> s as usize } else { self.0.clone() << (-s) as usize };
        m.to_f64().unwrap() * 2f64.powi((s - PREC as i64) as i32)
    }

    pub fn mul_int(&self, k: i64) -> Self {
        Fx(&self.0 * k)
    }

    pub fn div_int(&self, k: i64) -> Self {
        Fx(&self.0 / k)
    }

    pub fn abs(&self) -> Self {
        Fx(self.0.abs())
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn shl(&self, k: i64) -> Self {
        if k >= 0 {
            Fx(&self.0 << k as usize)
        } else {
            Fx(&self.0 >> (-k) as usize)
        }
    }

    /// Nearest integer.
    pub fn round(&self) -> i64 {
        let half = BigInt::one() << (PREC - 1);
        ((&self.0 + half) >> PREC).to_i64().unwrap()
    }
}

impl Add for &Fx {
    type Output = Fx;
    fn add(self, o: &Fx) -> Fx {
        Fx(&self.0 + &o.0)
    }
}
impl Sub for &Fx {
    type Output = Fx;
    fn sub(self, o: &Fx) -> Fx {
        Fx(&self.0 - &o.0)
    }
}
impl Mul for &Fx {
    type Output = Fx;
    fn mul(self, o: &Fx) -> Fx {
        Fx((&self.0 * &o.0) >> PREC)
    }
}
impl Div for &Fx {
    type Output = Fx;
    fn div(self, o: &Fx) -> Fx {
        Fx((&self.0 << PREC) / &o.0)
    }
}
impl Neg for &Fx {
    type Output = Fx;
    fn neg(self) -> Fx {
        Fx(-&self.0)
    }
}

fn atanh_inv(k: i64) -> Fx {
    // atanh(1/k) = Σ 1/((2j+1) k^{2j+1})
    let mut pow = Fx::one().div_int(k);
    let k2 = k * k;
    let mut sum = Fx::zero();
    let mut j = 0i64;
    while !pow.is_zero() {
        sum = &sum + &pow.div_int(2 * j + 1);
        pow = pow.div_int(k2);
        j += 1;
    }
    sum
}

fn atan_inv(k: i64) -> Fx {
    let mut pow = Fx::one().div_int(k);
    let k2 = k * k;
    let mut sum = Fx::zero();
    let mut j = 0i64;
    while !pow.is_zero() {
        let t = pow.div_int(2 * j + 1);
        sum = if j % 2 == 0 { &sum + &t } else { &sum - &t };
        pow = pow.div_int(k2);
        j += 1;
    }
    sum
}

pub fn ln2() -> &'static Fx {
    static V: OnceLock<Fx> = OnceLock::new();
    V.get_or_init(|| atanh_inv(3).mul_int(2))
}

pub fn pi() -> &'static Fx {
    static V: OnceLock<Fx> = OnceLock::new();
    V.get_or_init(|| &atan_inv(5).mul_int(16) - &atan_inv(239).mul_int(4))
}

pub fn exp(x: &Fx) -> Fx {
    let n = (x / ln2()).round();
    let r = x - &ln2().mul_int(n);
    let squarings = 20;
    let r = r.shl(-squarings);
    let mut term = Fx::one();
    let mut sum = Fx::one();
    let mut k = 1i64;
    loop {
        term = (&term * &r).div_int(k);
        if term.is_zero() {
            break;
        }
        sum = &sum + &term;
        k += 1;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum.shl(n)
}

pub fn ln(x: &Fx) -> Fx {
    assert!(!x.is_negative() && !x.is_zero(), "ln of non-positive value");
    // x = 2^k m, m in [1, 2)
    let k = x.0.bits() as i64 - 1 - PREC as i64;
    let m = x.shl(-k);
    let s = &(&m - &Fx::one()) / &(&m + &Fx::one());
    let s2 = &s * &s;
    let mut pow = s.clone();
    let mut sum = Fx::zero();
    let mut j = 0i64;
    while !pow.is_zero() {
        sum = &sum + &pow.div_int(2 * j + 1);
        pow = &pow * &s2;
        j += 1;
    }
    &sum.mul_int(2) + &ln2().mul_int(k)
}

const STIRLING_SHIFT: i64 = 100;
const STIRLING_TERMS: usize = 64;

fn bernoulli_even() -> &'static Vec<BigRational> {
    // B_2, B_4, ..., via the Akiyama-Tanigawa algorithm
    static V: OnceLock<Vec<BigRational>> = OnceLock::new();
    V.get_or_init(|| {
        let n = 2 * STIRLING_TERMS;
        let mut a: Vec<BigRational> = Vec::with_capacity(n + 1);
        let mut out = Vec::new();
        for m in 0..=n {
            a.push(BigRational::new(BigInt::one(), BigInt::from(m as i64 + 1)));
            for j in (1..=m).rev() {
                let diff = &a[j - 1] - &a[j];
                a[j - 1] = diff * BigRational::from_integer(BigInt::from(j as i64));
            }
            if m >= 2 && m % 2 == 0 {
                out.push(a[0].clone());
            }
        }
        out
    })
}

fn stirling_coeffs() -> &'static Vec<Fx> {
    static V: OnceLock<Vec<Fx>> = OnceLock::new();
    V.get_or_init(|| {
        bernoulli_even()
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let k = (i + 1) as i64;
                let d = BigRational::from_integer(BigInt::from(2 * k * (2 * k - 1)));
                Fx::from_ratio(&(b / d))
            })
            .collect()
    })
}

fn half_ln_2pi() -> &'static Fx {
    static V: OnceLock<Fx> = OnceLock::new();
    V.get_or_init(|| ln(&pi().mul_int(2)).div_int(2))
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: &Fx) -> Fx {
    assert!(!x.is_negative() && !x.is_zero(), "ln_gamma needs x > 0");
    let mut y = x.clone();
    let mut prod = Fx::one();
    let limit = Fx::from_int(STIRLING_SHIFT);
    let mut shifted = false;
    while y < limit {
        prod = &prod * &y;
        y = &y + &Fx::one();
        shifted = true;
    }
    let ly = ln(&y);
    let half = Fx::one().div_int(2);
    let mut s = &(&(&(&y - &half) * &ly) - &y) + half_ln_2pi();
    let inv = &Fx::one() / &y;
    let inv2 = &inv * &inv;
    let mut pw = inv.clone();
    for c in stirling_coeffs() {
        let t = c * &pw;
        if t.is_zero() {
            break;
        }
        s = &s + &t;
        pw = &pw * &inv2;
    }
    if shifted {
        s = &s - &ln(&prod);
    }
    s
}

/// Σ_k z^k / Γ(kα + β) for β > 0, summed until terms vanish at working precision.
pub fn mittag_leffler(alpha: f64, beta: f64, z: f64) -> f64 {
    assert!(alpha > 0.0 && beta > 0.0);
    if z == 0.0 {
        return exp(&(-&ln_gamma(&Fx::from_f64(beta)))).to_f64();
    }
    let a = Fx::from_f64(alpha);
    let b = Fx::from_f64(beta);
    let lz = ln(&Fx::from_f64(z.abs()));
    let mut sum = Fx::zero();
    let mut k = 0i64;
    let mut quiet = 0;
    let mut peak_seen = false;
    let mut prev = f64::NEG_INFINITY;
    loop {
        let arg = &a.mul_int(k) + &b;
        let ln_mag = &lz.mul_int(k) - &ln_gamma(&arg);
        let lm = ln_mag.to_f64();
        let t = if lm < -(PREC as f64) * 0.7 { Fx::zero() } else { exp(&ln_mag) };
        if lm < prev {
            peak_seen = true;
        }
        prev = lm;
        sum = if z < 0.0 && k % 2 == 1 { &sum - &t } else { &sum + &t };
        if peak_seen && t.is_zero() {
            quiet += 1;
            if quiet > 3 {
                break;
            }
        }
        k += 1;
        assert!(k < 400_000, "oracle series did not terminate");
    }
    sum.to_f64()
}

#[cfg(test)]
mod self_check {
    use super::*;

    #[test]
    fn constants_and_functions() {
        assert!((pi().to_f64() - std::f64::consts::PI).abs() < 1e-16);
        assert!((exp(&Fx::one()).to_f64() - std::f64::consts::E).abs() < 1e-15);
        assert!((ln(&Fx::from_int(10)).to_f64() - 10f64.ln()).abs() < 1e-15);
        // Γ(1/2) = √π
        let g = exp(&ln_gamma(&Fx::one().div_int(2))).to_f64();
        assert!((g - std::f64::consts::PI.sqrt()).abs() < 1e-15);
        // Γ(7) = 720
        let g = exp(&ln_gamma(&Fx::from_int(7))).to_f64();
        assert!((g - 720.0).abs() < 1e-11);
    }
}

/// exp(y²)·erfc(y) for y ≥ 0 from the Maclaurin series of erf.
pub fn erfc_scaled(y: f64) -> f64 {
    assert!(y >= 0.0);
    let x = Fx::from_f64(y);
    let x2 = &x * &x;
    // erf(y) = 2/√π Σ (-1)^n y^{2n+1} / (n! (2n+1))
    let mut pow = x.clone();
    let mut sum = Fx::zero();
    let mut n = 0i64;
    while !pow.is_zero() {
        let t = pow.div_int(2 * n + 1);
        sum = if n % 2 == 0 { &sum + &t } else { &sum - &t };
        n += 1;
        pow = (&pow * &x2).div_int(n);
    }
    let two_over_sqrt_pi = &Fx::from_int(2) / &exp(&ln(pi()).div_int(2));
    let erfc = &Fx::one() - &(&two_over_sqrt_pi * &sum);
    (&erfc * &exp(&x2)).to_f64()
}
