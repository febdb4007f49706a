//! Prime-field arithmetic over a runtime modulus.
//!
//! Elements are stored in 4x64-bit Montgomery form so the same code path
//! serves the default 254-bit prime and the small test primes (101,
//! 2^31 - 1) selectable through `VERIML_FIELD`.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default circuit field: the 254-bit BN254 scalar prime, pinned so both
/// parties agree bit-exactly.
pub const DEFAULT_FIELD_DECIMAL: &str =
    "21888242871839275222246405745257275088548364400416034343698204186575808495617";

/// Named prime modulus; the versioned constant both parties pin in a task.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct FieldConfig {
    pub name: String,
    /// Decimal string so JSON stays exact for 254-bit values.
    pub modulus: String,
}

impl FieldConfig {
    pub fn default_254bit() -> Self {
        FieldConfig {
            name: "bn254-scalar".into(),
            modulus: DEFAULT_FIELD_DECIMAL.into(),
        }
    }

    pub fn from_modulus(name: &str, modulus: &BigUint) -> Self {
        FieldConfig {
            name: name.into(),
            modulus: modulus.to_string(),
        }
    }

    /// Resolve `VERIML_FIELD`: a known name or a decimal prime.
    pub fn from_env_or_default() -> Self {
        match std::env::var("VERIML_FIELD") {
            Ok(s) if !s.is_empty() => FieldConfig::by_name(&s),
            _ => FieldConfig::default_254bit(),
        }
    }

    pub fn by_name(s: &str) -> Self {
        match s {
            "bn254-scalar" | "default" => FieldConfig::default_254bit(),
            "mersenne31" => FieldConfig {
                name: "mersenne31".into(),
                modulus: "2147483647".into(),
            },
            "mersenne61" => FieldConfig {
                name: "mersenne61".into(),
                modulus: "2305843009213693951".into(),
            },
            other => FieldConfig {
                name: format!("p{other}"),
                modulus: other.into(),
            },
        }
    }

    pub fn ctx(&self) -> Result<FieldCtx> {
        let modulus: BigUint = self
            .modulus
            .parse()
            .map_err(|_| Error::FieldConfig(format!("bad modulus {:?}", self.modulus)))?;
        FieldCtx::new(self.name.clone(), modulus)
    }
}

/// Field element in Montgomery form, little-endian limbs, always reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fe(pub [u64; 4]);

impl Fe {
    pub const ZERO: Fe = Fe([0; 4]);

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 4]
    }
}

/// Precomputed Montgomery context for one modulus.
#[derive(Debug, Clone)]
pub struct FieldCtx {
    pub name: String,
    modulus: [u64; 4],
    modulus_big: BigUint,
    /// -p^{-1} mod 2^64
    n_prime: u64,
    /// 2^256 mod p, i.e. the Montgomery form of 1.
    one: Fe,
    /// 2^512 mod p, for conversion into Montgomery form.
    r2: [u64; 4],
    bits: u64,
    /// Montgomery forms of 2^k for k < 512, the circuit builders' most
    /// frequent constants.
    pow2: Vec<Fe>,
}

fn limbs_from_biguint(x: &BigUint) -> [u64; 4] {
    let digits = x.to_u64_digits();
    let mut out = [0u64; 4];
    for (i, d) in digits.iter().enumerate().take(4) {
        out[i] = *d;
    }
    out
}

fn biguint_from_limbs(l: &[u64; 4]) -> BigUint {
    BigUint::from_slice(&[
        l[0] as u32,
        (l[0] >> 32) as u32,
        l[1] as u32,
        (l[1] >> 32) as u32,
        l[2] as u32,
        (l[2] >> 32) as u32,
        l[3] as u32,
        (l[3] >> 32) as u32,
    ])
}

#[inline]
fn geq(a: &[u64; 4], b: &[u64; 4]) -> bool {
    for i in (0..4).rev() {
        if a[i] != b[i] {
            return a[i] > b[i];
        }
    }
    true
}

#[inline]
fn sub_limbs(a: &[u64; 4], b: &[u64; 4]) -> [u64; 4] {
    let mut out = [0u64; 4];
    let mut borrow = 0u64;
    for i in 0..4 {
        let (d, b1) = a[i].overflowing_sub(b[i]);
        let (d, b2) = d.overflowing_sub(borrow);
        out[i] = d;
        borrow = (b1 as u64) + (b2 as u64);
    }
    out
}

impl FieldCtx {
    pub fn new(name: String, modulus: BigUint) -> Result<Self> {
        if modulus.bits() > 255 {
            return Err(Error::FieldConfig("modulus must fit in 255 bits".into()));
        }
        if modulus <= BigUint::from(2u8) || &modulus % 2u8 == BigUint::zero() {
            return Err(Error::FieldConfig(
                "modulus must be an odd prime > 2".into(),
            ));
        }
        let p0 = modulus.to_u64_digits()[0];
        // p0^{-1} mod 2^64 by Newton iteration, then negate.
        let mut inv: u64 = 1;
        for _ in 0..6 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(p0.wrapping_mul(inv)));
        }
        let n_prime = inv.wrapping_neg();
        let r = (BigUint::one() << 256u32) % &modulus;
        let r2 = (&r * &r) % &modulus;
        let mut ctx = FieldCtx {
            name,
            modulus: limbs_from_biguint(&modulus),
            bits: modulus.bits(),
            modulus_big: modulus,
            n_prime,
            one: Fe(limbs_from_biguint(&r)),
            r2: limbs_from_biguint(&r2),
            pow2: Vec::new(),
        };
        let two = ctx.from_biguint(&BigUint::from(2u8));
        let mut table = Vec::with_capacity(512);
        let mut cur = ctx.one;
        for _ in 0..512 {
            table.push(cur);
            cur = ctx.mul(cur, two);
        }
        ctx.pow2 = table;
        Ok(ctx)
    }

    /// Montgomery form of 2^k.
    pub fn pow2(&self, k: u64) -> Fe {
        match self.pow2.get(k as usize) {
            Some(fe) => *fe,
            None => self.from_biguint(&(BigUint::one() << k)),
        }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus_big
    }

    pub fn modulus_bits(&self) -> u64 {
        self.bits
    }

    pub fn one(&self) -> Fe {
        self.one
    }

    /// CIOS Montgomery multiplication.
    pub fn mul(&self, a: Fe, b: Fe) -> Fe {
        let p = &self.modulus;
        let mut t = [0u64; 6];
        for i in 0..4 {
            let ai = a.0[i] as u128;
            let mut carry: u128 = 0;
            for j in 0..4 {
                let v = t[j] as u128 + ai * b.0[j] as u128 + carry;
                t[j] = v as u64;
                carry = v >> 64;
            }
            let v = t[4] as u128 + carry;
            t[4] = v as u64;
            t[5] = (v >> 64) as u64;

            let m = (t[0].wrapping_mul(self.n_prime)) as u128;
            let v = t[0] as u128 + m * p[0] as u128;
            let mut carry = v >> 64;
            for j in 1..4 {
                let v = t[j] as u128 + m * p[j] as u128 + carry;
                t[j - 1] = v as u64;
                carry = v >> 64;
            }
            let v = t[4] as u128 + carry;
            t[3] = v as u64;
            t[4] = t[5].wrapping_add((v >> 64) as u64);
            t[5] = 0;
        }
        let mut out = [t[0], t[1], t[2], t[3]];
        if t[4] != 0 || geq(&out, p) {
            out = sub_limbs(&out, p);
        }
        Fe(out)
    }

    pub fn add(&self, a: Fe, b: Fe) -> Fe {
        let mut out = [0u64; 4];
        let mut carry = 0u64;
        for i in 0..4 {
            let (s, c1) = a.0[i].overflowing_add(b.0[i]);
            let (s, c2) = s.overflowing_add(carry);
            out[i] = s;
            carry = (c1 as u64) + (c2 as u64);
        }
        if carry != 0 || geq(&out, &self.modulus) {
            out = sub_limbs(&out, &self.modulus);
        }
        Fe(out)
    }

    pub fn sub(&self, a: Fe, b: Fe) -> Fe {
        if geq(&a.0, &b.0) {
            Fe(sub_limbs(&a.0, &b.0))
        } else {
            let t = sub_limbs(&b.0, &a.0);
            Fe(sub_limbs(&self.modulus, &t))
        }
    }

    pub fn neg(&self, a: Fe) -> Fe {
        if a.is_zero() {
            a
        } else {
            Fe(sub_limbs(&self.modulus, &a.0))
        }
    }

    pub fn square(&self, a: Fe) -> Fe {
        self.mul(a, a)
    }

    /// Inverse via Fermat (modulus is prime); inverse of zero is zero.
    pub fn inv(&self, a: Fe) -> Fe {
        if a.is_zero() {
            return Fe::ZERO;
        }
        let e = &self.modulus_big - BigUint::from(2u8);
        self.pow(a, &e)
    }

    pub fn pow(&self, base: Fe, exp: &BigUint) -> Fe {
        let mut acc = self.one;
        for i in (0..exp.bits()).rev() {
            acc = self.square(acc);
            if exp.bit(i) {
                acc = self.mul(acc, base);
            }
        }
        acc
    }

    pub fn from_biguint(&self, x: &BigUint) -> Fe {
        let red = x % &self.modulus_big;
        self.mul(Fe(limbs_from_biguint(&red)), Fe(self.r2))
    }

    /// Two's-complement embedding: negative integers map to p - |x| mod p.
    pub fn from_bigint(&self, x: &BigInt) -> Fe {
        match x.sign() {
            Sign::NoSign => Fe::ZERO,
            Sign::Plus => self.from_biguint(x.magnitude()),
            Sign::Minus => self.neg(self.from_biguint(x.magnitude())),
        }
    }

    pub fn from_u64(&self, x: u64) -> Fe {
        self.from_biguint(&BigUint::from(x))
    }

    pub fn from_i64(&self, x: i64) -> Fe {
        self.from_bigint(&BigInt::from(x))
    }

    /// Canonical (non-Montgomery) integer in [0, p).
    pub fn to_biguint(&self, a: Fe) -> BigUint {
        let std = self.mul(a, Fe([1, 0, 0, 0]));
        biguint_from_limbs(&std.0)
    }

    /// Canonical 32-byte little-endian encoding.
    pub fn to_bytes_le(&self, a: Fe) -> [u8; 32] {
        let std = self.mul(a, Fe([1, 0, 0, 0]));
        let mut out = [0u8; 32];
        for i in 0..4 {
            out[8 * i..8 * i + 8].copy_from_slice(&std.0[i].to_le_bytes());
        }
        out
    }

    /// Centered lift: values above p/2 come back negative.
    pub fn to_bigint_centered(&self, a: Fe) -> BigInt {
        let v = self.to_biguint(a);
        if &v * 2u8 > self.modulus_big {
            BigInt::from_biguint(Sign::Plus, v)
                - BigInt::from_biguint(Sign::Plus, self.modulus_big.clone())
        } else {
            BigInt::from_biguint(Sign::Plus, v)
        }
    }
}
