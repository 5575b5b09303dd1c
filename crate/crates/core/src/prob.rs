//! Small helpers shared by the probability code.

use crate::error::{PutError, Result};

/// `p * ln(p / q)` with the `0 · ln 0 = 0` convention.
#[inline]
pub fn plogpq(p: f64, q: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * (p / q).ln()
    }
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

/// Checks nonnegativity and unit mass within `tol`.
pub fn check_simplex(p: &[f64], tol: f64) -> Result<()> {
    if p.is_empty() {
        return Err(PutError::InvalidDistribution("empty vector".into()));
    }
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
        return Err(PutError::InvalidDistribution(format!(
            "entry {i} is {v}"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > tol {
        return Err(PutError::InvalidDistribution(format!("sums to {s}")));
    }
    Ok(())
}

/// Normalizes in place; returns the pre-normalization mass.
pub fn normalize(p: &mut [f64]) -> f64 {
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        p.iter_mut().for_each(|v| *v /= s);
    }
    s
}

/// Index of the first bucket whose cumulative mass exceeds `u`.
/// Falls back to the last positive entry to absorb rounding at the top end.
pub fn sample_index(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1)
}

/// Draws an index from `p` using one uniform variate from `rng`.
pub fn draw<R: rand::Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    sample_index(p, rng.random::<f64>())
}
