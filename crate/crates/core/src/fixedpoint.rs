//! Deterministic fixed-point arithmetic with explicit scale tracking.
//!
//! A value is `raw / 2^frac_bits` exactly, with `raw` an arbitrary-precision
//! signed integer. Multiplication does not rescale (the scale doubles,
//! matching circuit semantics); `truncate` shifts back with floor rounding
//! so the remainder witness is always non-negative.

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::{Fe, FieldCtx};

/// Default integer-bit budget: |value| < 2^16.
pub const DEFAULT_INT_BUDGET: u32 = 16;

/// Default fractional bits; a 32-bit fraction shows no observable accuracy
/// loss in the fidelity sweep.
pub const DEFAULT_FRAC_BITS: u32 = 32;

/// Power-of-two amplification bookkeeping for raw products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleTag(pub u32);

impl ScaleTag {
    pub fn combine(self, other: ScaleTag) -> ScaleTag {
        ScaleTag(self.0 + other.0)
    }

    pub fn expect(self, other: ScaleTag) -> Result<()> {
        if self != other {
            return Err(Error::ScaleMismatch(self.0, other.0));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FixedPoint {
    pub raw: BigInt,
    pub frac_bits: u32,
}

impl FixedPoint {
    pub fn from_raw(raw: impl Into<BigInt>, frac_bits: u32) -> Self {
        FixedPoint {
            raw: raw.into(),
            frac_bits,
        }
    }

    pub fn zero(frac_bits: u32) -> Self {
        FixedPoint {
            raw: BigInt::zero(),
            frac_bits,
        }
    }

    pub fn one(frac_bits: u32) -> Self {
        FixedPoint {
            raw: BigInt::one() << frac_bits,
            frac_bits,
        }
    }

    pub fn scale(&self) -> ScaleTag {
        ScaleTag(self.frac_bits)
    }

    pub fn is_zero(&self) -> bool {
        self.raw.is_zero()
    }

    /// |raw| < 2^(int_budget + frac_bits).
    pub fn check_budget(&self, int_budget: u32) -> Result<()> {
        let needed = self.raw.magnitude().bits();
        let budget = (int_budget + self.frac_bits) as u64;
        if needed > budget {
            return Err(Error::Overflow { needed, budget });
        }
        Ok(())
    }

    pub fn to_rational(&self) -> BigRational {
        BigRational::new(self.raw.clone(), BigInt::one() << self.frac_bits)
    }

    pub fn to_f64(&self) -> f64 {
        self.to_rational().to_f64().unwrap_or(f64::NAN)
    }
}

use num_traits::One;

/// Encode a real into fixed point: raw = round(x * 2^l), half away from zero.
pub fn encode(x: f64, frac_bits: u32) -> Result<FixedPoint> {
    encode_with_budget(x, frac_bits, DEFAULT_INT_BUDGET)
}

pub fn encode_with_budget(x: f64, frac_bits: u32, int_budget: u32) -> Result<FixedPoint> {
    if !x.is_finite() {
        return Err(Error::Overflow {
            needed: u64::MAX,
            budget: int_budget as u64,
        });
    }
    let exact = BigRational::from_float(x).ok_or(Error::Overflow {
        needed: u64::MAX,
        budget: int_budget as u64,
    })?;
    let fp = encode_rational(&exact, frac_bits);
    fp.check_budget(int_budget)?;
    Ok(fp)
}

/// Exact-rational encode with round-half-away-from-zero.
pub fn encode_rational(x: &BigRational, frac_bits: u32) -> FixedPoint {
    let scaled = x * BigRational::from_integer(BigInt::one() << frac_bits);
    let (num, den) = (scaled.numer().clone(), scaled.denom().clone());
    // round(num/den) half away from zero; den > 0 by BigRational invariant
    let two_num_abs = num.magnitude() * 2u8;
    let q = num.magnitude() / den.magnitude();
    let rem2 = &two_num_abs - &(&q * den.magnitude() * 2u8);
    let rounded_mag = if rem2 >= *den.magnitude() { q + 1u8 } else { q };
    let raw = BigInt::from_biguint(
        if num.is_negative() {
            Sign::Minus
        } else {
            Sign::Plus
        },
        rounded_mag,
    );
    FixedPoint { raw, frac_bits }
}

/// Product without rescale: scale doubles, matching circuit semantics.
pub fn mul_raw(a: &FixedPoint, b: &FixedPoint) -> Result<FixedPoint> {
    let out = FixedPoint {
        raw: &a.raw * &b.raw,
        frac_bits: a.frac_bits + b.frac_bits,
    };
    out.check_budget(2 * DEFAULT_INT_BUDGET)?;
    Ok(out)
}

/// Floor-toward-negative-infinity rescale down to `target_l` fractional bits.
pub fn truncate(a: &FixedPoint, target_l: u32) -> FixedPoint {
    assert!(
        a.frac_bits >= target_l,
        "truncate cannot raise the scale ({} -> {target_l})",
        a.frac_bits
    );
    let shift = a.frac_bits - target_l;
    FixedPoint {
        raw: &a.raw >> shift, // BigInt shr floors toward negative infinity
        frac_bits: target_l,
    }
}

/// Raise the scale by `shift` bits (exact).
pub fn lift(a: &FixedPoint, shift: u32) -> FixedPoint {
    FixedPoint {
        raw: &a.raw << shift,
        frac_bits: a.frac_bits + shift,
    }
}

pub fn add(a: &FixedPoint, b: &FixedPoint) -> Result<FixedPoint> {
    a.scale().expect(b.scale())?;
    Ok(FixedPoint {
        raw: &a.raw + &b.raw,
        frac_bits: a.frac_bits,
    })
}

pub fn sub(a: &FixedPoint, b: &FixedPoint) -> Result<FixedPoint> {
    a.scale().expect(b.scale())?;
    Ok(FixedPoint {
        raw: &a.raw - &b.raw,
        frac_bits: a.frac_bits,
    })
}

pub fn neg(a: &FixedPoint) -> FixedPoint {
    FixedPoint {
        raw: -&a.raw,
        frac_bits: a.frac_bits,
    }
}

/// Two's-complement embedding of the raw integer into the field.
/// Injective for |raw| < p/2.
pub fn to_field(a: &FixedPoint, ctx: &FieldCtx) -> Result<Fe> {
    raw_to_field(&a.raw, ctx)
}

pub fn raw_to_field(raw: &BigInt, ctx: &FieldCtx) -> Result<Fe> {
    let half = ctx.modulus() >> 1u8;
    if raw.magnitude() >= &half {
        return Err(Error::FieldRange);
    }
    Ok(ctx.from_bigint(raw))
}

impl Serialize for FixedPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            raw: &'a str,
            frac_bits: u32,
        }
        Repr {
            raw: &self.raw.to_string(),
            frac_bits: self.frac_bits,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FixedPoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            raw: String,
            frac_bits: u32,
        }
        let r = Repr::deserialize(deserializer)?;
        let raw: BigInt = r
            .raw
            .parse()
            .map_err(|_| D::Error::custom("bad raw integer"))?;
        Ok(FixedPoint {
            raw,
            frac_bits: r.frac_bits,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldConfig;
    use num_bigint::BigUint;
    use proptest::prelude::*;

    #[test]
    fn encode_dyadic_exact() {
        let fp = encode(0.5, 3).unwrap();
        assert_eq!(fp.raw, BigInt::from(4));
        for l in [0u32, 4, 16, 32] {
            assert_eq!(encode(0.0, l).unwrap().raw, BigInt::zero());
        }
    }

    #[test]
    fn encode_rounds_half_away() {
        // 0.197 * 65536 = 12910.592 -> 12911
        assert_eq!(encode(0.197, 16).unwrap().raw, BigInt::from(12911));
        // exact .5 cases
        let x = BigRational::new(BigInt::from(3), BigInt::from(2)); // 1.5
        assert_eq!(encode_rational(&x, 0).raw, BigInt::from(2));
        let x = BigRational::new(BigInt::from(-3), BigInt::from(2));
        assert_eq!(encode_rational(&x, 0).raw, BigInt::from(-2));
    }

    #[test]
    fn encode_overflow_rejected() {
        assert!(encode(70000.0, 8).is_err());
        assert!(encode(65535.0, 8).is_ok());
    }

    #[test]
    fn mul_doubles_scale() {
        let a = encode(0.5, 3).unwrap();
        let p = mul_raw(&a, &a).unwrap();
        assert_eq!(p.raw, BigInt::from(16));
        assert_eq!(p.frac_bits, 6);
        assert_eq!(p.to_f64(), 0.25);

        let x = encode(1.5, 4).unwrap();
        let y = encode(2.0, 4).unwrap();
        let p = mul_raw(&x, &y).unwrap();
        assert_eq!(p.raw, BigInt::from(768));
        assert_eq!(p.frac_bits, 8);

        let one = FixedPoint::one(4);
        let q = mul_raw(&x, &one).unwrap();
        assert_eq!(q.raw, &x.raw << 4);
        assert_eq!(q.frac_bits, 8);
    }

    #[test]
    fn truncate_floors() {
        let a = FixedPoint::from_raw(16, 6);
        assert_eq!(truncate(&a, 3).raw, BigInt::from(2));
        let a = FixedPoint::from_raw(17, 6);
        assert_eq!(truncate(&a, 3).raw, BigInt::from(2));
        let a = FixedPoint::from_raw(-17, 6);
        assert_eq!(truncate(&a, 3).raw, BigInt::from(-3)); // floor(-2.125) = -3
        let a = FixedPoint::from_raw(42, 5);
        assert_eq!(truncate(&a, 5), a);
    }

    #[test]
    fn field_embedding() {
        let p97 = FieldConfig::by_name("97").ctx().unwrap();
        assert_eq!(
            p97.to_biguint(to_field(&FixedPoint::from_raw(5, 0), &p97).unwrap()),
            BigUint::from(5u8)
        );
        assert_eq!(
            p97.to_biguint(to_field(&FixedPoint::from_raw(-1, 0), &p97).unwrap()),
            BigUint::from(96u8)
        );
        let m61 = FieldConfig::by_name("mersenne61").ctx().unwrap();
        let v = to_field(&FixedPoint::from_raw(-12911, 0), &m61).unwrap();
        assert_eq!(m61.to_biguint(v), m61.modulus() - BigUint::from(12911u32));
        // out of range
        assert!(to_field(&FixedPoint::from_raw(60, 0), &p97).is_err());
    }

    #[test]
    fn serde_is_decimal_string() {
        let fp = FixedPoint::from_raw(-12911, 16);
        let json = serde_json::to_string(&fp).unwrap();
        assert_eq!(json, r#"{"raw":"-12911","frac_bits":16}"#);
        let back: FixedPoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fp);
    }

    proptest! {
        #[test]
        fn roundtrip_dyadic(num in -1_000_000i64..1_000_000, l in 0u32..20) {
            // x = num / 2^l is exactly representable at l fractional bits
            let x = BigRational::new(BigInt::from(num), BigInt::one() << l);
            let fp = encode_rational(&x, l);
            prop_assert_eq!(fp.to_rational(), x);
        }

        #[test]
        fn truncation_error_bounds(raw in -1_000_000_000i64..1_000_000_000, from in 8u32..24, down in 0u32..8) {
            let a = FixedPoint::from_raw(raw, from);
            let t = truncate(&a, from - down);
            let err = a.to_rational() - t.to_rational();
            let ulp = BigRational::new(BigInt::one(), BigInt::one() << (from - down));
            prop_assert!(err >= BigRational::zero());
            prop_assert!(err < ulp);
        }

        #[test]
        fn to_field_ring_hom(a in -100_000i64..100_000, b in -100_000i64..100_000) {
            let ctx = FieldConfig::by_name("mersenne61").ctx().unwrap();
            let fa = raw_to_field(&BigInt::from(a), &ctx).unwrap();
            let fb = raw_to_field(&BigInt::from(b), &ctx).unwrap();
            let prod = raw_to_field(&BigInt::from(a as i128 * b as i128), &ctx).unwrap();
            prop_assert_eq!(ctx.mul(fa, fb), prod);
        }
    }
}
