//! Exact audit-sampling arithmetic: the probability that c uniform distinct
//! challenges all land on genuine iterations is C(tN, c)/C(N, c), computed
//! with exact rationals so large N costs nothing in precision.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Snap a probability-like f64 to the exact decimal rational it prints as,
/// so 0.7 means 7/10 rather than the nearest binary double.
fn decimal_rational(x: f64) -> Result<BigRational> {
    if !x.is_finite() {
        return Err(Error::TaskConfig(format!("{x} is not a probability")));
    }
    let scaled = (x * 1e9).round() as i64;
    Ok(BigRational::new(
        BigInt::from(scaled),
        BigInt::from(1_000_000_000i64),
    ))
}

/// Probability that at least one of `c` distinct uniform challenges hits a
/// forged iteration, when t_frac of the N claimed iterations are genuine
/// (tN rounded down). Exact rational.
pub fn detection_probability_exact(n: u64, t_frac: f64, c: u64) -> Result<BigRational> {
    if !(0.0..=1.0).contains(&t_frac) {
        return Err(Error::TaskConfig(format!("t_frac {t_frac} out of [0,1]")));
    }
    if c > n {
        return Err(Error::TaskConfig(format!(
            "cannot sample {c} of {n} iterations"
        )));
    }
    let genuine = (decimal_rational(t_frac)? * BigRational::from_integer(BigInt::from(n)))
        .floor()
        .to_integer();
    // p = prod_{i=0}^{c-1} (tN - i) / (N - i); zero once c exceeds tN
    let mut p = BigRational::one();
    for i in 0..c {
        let num = &genuine - BigInt::from(i);
        if num <= BigInt::zero() {
            p = BigRational::zero();
            break;
        }
        p *= BigRational::new(num, BigInt::from(n - i));
    }
    Ok(BigRational::one() - p)
}

pub fn detection_probability(n: u64, t_frac: f64, c: u64) -> Result<f64> {
    Ok(detection_probability_exact(n, t_frac, c)?
        .to_f64()
        .unwrap_or(1.0))
}

/// Soundness bound once forged identifiers may collide: p + (1-p)/(2^l - 1).
pub fn relaxed_soundness_bound(p: f64, l: u32) -> f64 {
    p + (1.0 - p) / ((2f64.powi(l as i32)) - 1.0)
}

/// Smallest challenge count whose detection probability reaches `confidence`.
pub fn required_challenges(n: u64, t_frac: f64, confidence: f64) -> Result<u64> {
    if !(0.0..1.0).contains(&confidence) {
        return Err(Error::TaskConfig(format!(
            "confidence {confidence} out of [0,1)"
        )));
    }
    if t_frac >= 1.0 {
        return Err(Error::TaskConfig("nothing is forged at t_frac = 1".into()));
    }
    let target = decimal_rational(confidence)?;
    for c in 1..=n {
        if detection_probability_exact(n, t_frac, c)? >= target {
            return Ok(c);
        }
    }
    Err(Error::TaskConfig(format!(
        "confidence {confidence} unreachable within N = {n}"
    )))
}

/// Checkpoint storage in bits: l * d * N / m.
pub fn storage_cost(l: u64, d: u64, n: u64, m: u64) -> Result<u64> {
    if m == 0 {
        return Err(Error::TaskConfig(
            "checkpoint interval must be positive".into(),
        ));
    }
    Ok(l * d * n / m)
}
