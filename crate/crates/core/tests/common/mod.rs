#![allow(dead_code)]

pub mod bigfix;

/// Relative distance with a floor on the denominator.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
