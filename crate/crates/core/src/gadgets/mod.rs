//! Circuit builders for the ML verification primitives, with exact
//! constraint-count formulas asserted against live `count()` deltas.
//!
//! Value semantics: a wire carries the two's-complement field embedding of a
//! raw fixed-point integer. Range gadgets (`split`, comparisons, truncation)
//! interpret the canonical representative, so callers keep magnitudes below
//! p/2; the task setup check guarantees this for every scale the schedules
//! produce.

pub mod sha256;

use num_bigint::{BigInt, BigUint};
use num_traits::One;

use crate::error::{Error, Result};
use crate::field::Fe;
use crate::r1cs::{Builder, Lc, Visibility, Wire};

/// Cost of one gadget instantiation.
///
/// `constraints` follows the default accounting policy (the documented
/// formulas); `raw_constraints` is the measured builder delta. The split
/// encoding makes the two equal by construction, and tests assert it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GadgetCost {
    pub constraints: usize,
    pub raw_constraints: usize,
    pub witness_wires: usize,
    /// Wire-by-wire multiplication constraints.
    pub mults: usize,
    /// Multiplications by circuit constants (linear, no constraints).
    pub const_mults: usize,
}

impl GadgetCost {
    fn merge(&mut self, other: GadgetCost) {
        self.constraints += other.constraints;
        self.raw_constraints += other.raw_constraints;
        self.witness_wires += other.witness_wires;
        self.mults += other.mults;
        self.const_mults += other.const_mults;
    }
}

fn pow2(b: &Builder, bits: u64) -> Fe {
    b.field().pow2(bits)
}

/// Centered integer value of an LC under the prover assignment.
pub fn centered_value(b: &Builder, lc: &Lc) -> Option<BigInt> {
    b.value_of(lc).map(|fe| b.field().to_bigint_centered(fe))
}

/// Bit-decompose `x` into `bits` little-endian boolean wires.
///
/// Enforces booleanity per bit, packs the bits into a fresh wire, and binds
/// that wire to the input: exactly `bits + 2` constraints.
pub fn split(b: &mut Builder, x: &Lc, bits: u32) -> Result<(Vec<Wire>, GadgetCost)> {
    // The decomposition is a range proof only while 2^bits stays below the
    // modulus. bits == modulus_bits is allowed solely for the full-element
    // decomposition feeding the hash (a non-canonical choice there can only
    // change the digest against the prover).
    if bits as u64 > b.field().modulus_bits() {
        return Err(Error::TaskConfig(format!(
            "split range 2^{bits} exceeds the field ({} bits)",
            b.field().modulus_bits()
        )));
    }
    let before = b.num_constraints();
    let value = b.value_of(x).map(|fe| b.field().to_biguint(fe));
    if let Some(v) = &value {
        if v.bits() > bits as u64 {
            return Err(Error::WitnessRange {
                gadget: "split",
                detail: format!("value needs {} bits, range is {bits}", v.bits()),
            });
        }
    }
    let ctx = b.field().clone();
    let one = ctx.one();
    let mut bit_wires = Vec::with_capacity(bits as usize);
    let mut packed_lc = Lc::zero();
    for i in 0..bits {
        let bit_val = value
            .as_ref()
            .map(|v| if v.bit(i as u64) { one } else { Fe::ZERO });
        let w = b.new_wire(Visibility::Witness, bit_val)?;
        // b * (b - 1) = 0
        let mut minus_one = Lc::single(w, &ctx);
        minus_one.add_term(&ctx, Wire(0), ctx.neg(one));
        b.enforce(Lc::single(w, &ctx), minus_one, Lc::zero(), "split.bool")?;
        packed_lc.0.push((w.0, pow2(b, i as u64))); // fresh ascending wires
        bit_wires.push(w);
    }
    let packed = b.bind_witness(&packed_lc, "split.pack")?;
    let mut diff = Lc::single(packed, &ctx);
    for &(w, c) in &x.0 {
        diff.add_term(&ctx, Wire(w), ctx.neg(c));
    }
    b.enforce_zero(diff, "split.bind")?;
    let raw = b.num_constraints() - before;
    Ok((
        bit_wires,
        GadgetCost {
            constraints: bits as usize + 2,
            raw_constraints: raw,
            witness_wires: bits as usize + 1,
            mults: 0,
            const_mults: 0,
        },
    ))
}

/// Enforce lc in [0, 2^bits) (a one-sided range proof); the bound form of a
/// comparison whose outcome is required rather than observed.
pub fn enforce_nonneg(b: &mut Builder, lc: &Lc, bits: u32) -> Result<GadgetCost> {
    let (_, cost) = split(b, lc, bits)?;
    Ok(cost)
}

/// Boolean wire = 1 iff a <= b, for |a|, |b| < 2^bits.
/// Realized as the sign bit of split(b - a + 2^bits, bits + 1).
pub fn compare_leq(b: &mut Builder, lhs: &Lc, rhs: &Lc, bits: u32) -> Result<(Wire, GadgetCost)> {
    let ctx = b.field().clone();
    let mut shifted = rhs.clone();
    for &(w, c) in &lhs.0 {
        shifted.add_term(&ctx, Wire(w), ctx.neg(c));
    }
    shifted.add_term(&ctx, Wire(0), pow2(b, bits as u64));
    let (bit_wires, cost) = split(b, &shifted, bits + 1)?;
    Ok((bit_wires[bits as usize], cost))
}

/// Enforce full = truncated * 2^shift + r with r in [0, 2^shift);
/// the floor-truncation consistency check.
pub fn truncation_check(
    b: &mut Builder,
    full: &Lc,
    truncated: &Lc,
    shift: u32,
) -> Result<GadgetCost> {
    let ctx = b.field().clone();
    let mut rem = full.clone();
    let scale = pow2(b, shift as u64);
    for &(w, c) in &truncated.0 {
        rem.add_term(&ctx, Wire(w), ctx.neg(ctx.mul(c, scale)));
    }
    enforce_nonneg(b, &rem, shift)
}

/// Allocate the floor-truncation of `full` by `shift` bits as a fresh wire,
/// constrained via `truncation_check`.
pub fn truncate_to(b: &mut Builder, full: &Lc, shift: u32) -> Result<(Wire, GadgetCost)> {
    let ctx = b.field().clone();
    let tval = centered_value(b, full).map(|v| ctx.from_bigint(&(v >> shift)));
    let t = b.new_wire(Visibility::Witness, tval)?;
    let mut cost = truncation_check(b, full, &Lc::single(t, &ctx), shift)?;
    cost.witness_wires += 1;
    Ok((t, cost))
}

/// Output wire = sum x_i * y_i with exactly n multiplication constraints
/// (the final product folds the accumulated sum on its c-side).
pub fn inner_product(b: &mut Builder, xs: &[Lc], ys: &[Lc]) -> Result<(Wire, GadgetCost)> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: xs.len().max(1),
            got: ys.len(),
        });
    }
    let before = b.num_constraints();
    let ctx = b.field().clone();
    let n = xs.len();
    let mut partial = Lc::zero();
    for i in 0..n - 1 {
        let t = b.mul(&xs[i], &ys[i], "ip.term")?;
        partial.add_term(&ctx, t, ctx.one());
    }
    let out_val = match (
        b.value_of(&partial),
        b.value_of(&xs[n - 1]),
        b.value_of(&ys[n - 1]),
    ) {
        (Some(p), Some(x), Some(y)) => Some(ctx.add(p, ctx.mul(x, y))),
        _ => None,
    };
    let out = b.new_wire(Visibility::Witness, out_val)?;
    let mut c_side = Lc::single(out, &ctx);
    for &(w, c) in &partial.0 {
        c_side.add_term(&ctx, Wire(w), ctx.neg(c));
    }
    b.enforce(xs[n - 1].clone(), ys[n - 1].clone(), c_side, "ip.fold")?;
    Ok((
        out,
        GadgetCost {
            constraints: n,
            raw_constraints: b.num_constraints() - before,
            witness_wires: n,
            mults: n,
            const_mults: 0,
        },
    ))
}

/// Flag wire = 1 iff lc == 0, using an inverse witness: 2 constraints.
pub fn is_zero(b: &mut Builder, lc: &Lc) -> Result<(Wire, GadgetCost)> {
    let before = b.num_constraints();
    let ctx = b.field().clone();
    let v = b.value_of(lc);
    let (inv_v, flag_v) = match v {
        Some(x) if x.is_zero() => (Some(Fe::ZERO), Some(ctx.one())),
        Some(x) => (Some(ctx.inv(x)), Some(Fe::ZERO)),
        None => (None, None),
    };
    let inv = b.new_wire(Visibility::Witness, inv_v)?;
    let flag = b.new_wire(Visibility::Witness, flag_v)?;
    // lc * inv = 1 - flag
    let mut one_minus_flag = Lc::constant(ctx.one());
    one_minus_flag.add_term(&ctx, flag, ctx.neg(ctx.one()));
    b.enforce(
        lc.clone(),
        Lc::single(inv, &ctx),
        one_minus_flag,
        "iszero.inv",
    )?;
    // lc * flag = 0
    b.enforce(
        lc.clone(),
        Lc::single(flag, &ctx),
        Lc::zero(),
        "iszero.zero",
    )?;
    Ok((
        flag,
        GadgetCost {
            constraints: 2,
            raw_constraints: b.num_constraints() - before,
            witness_wires: 2,
            mults: 2,
            const_mults: 0,
        },
    ))
}

/// Enforce dividend * 2^shift = divisor * quotient + r with 0 <= r < divisor.
/// Quotient is the prover-supplied floor quotient; divisor = 0 is unsatisfiable.
pub fn division_check(
    b: &mut Builder,
    dividend: &Lc,
    divisor: &Lc,
    quotient: &Lc,
    shift: u32,
    range_bits: u32,
) -> Result<GadgetCost> {
    let before = b.num_constraints();
    let ctx = b.field().clone();
    let t = b.mul(divisor, quotient, "div.prod")?;
    // r = dividend * 2^shift - divisor*quotient
    let mut r = dividend.scaled(&ctx, pow2(b, shift as u64));
    r.add_term(&ctx, t, ctx.neg(ctx.one()));
    let mut cost = GadgetCost {
        constraints: 1,
        raw_constraints: 0,
        witness_wires: 1,
        mults: 1,
        const_mults: 0,
    };
    cost.merge(enforce_nonneg(b, &r, range_bits)?);
    // divisor - 1 - r >= 0
    let mut upper = divisor.clone();
    upper.add_term(&ctx, Wire(0), ctx.neg(ctx.one()));
    for &(w, c) in &r.0 {
        upper.add_term(&ctx, Wire(w), ctx.neg(c));
    }
    cost.merge(enforce_nonneg(b, &upper, range_bits)?);
    cost.raw_constraints = b.num_constraints() - before;
    cost.constraints = cost.raw_constraints;
    Ok(cost)
}

/// Enforce s = floor(sqrt(x)): s^2 <= x < (s+1)^2.
pub fn sqrt_check(b: &mut Builder, x: &Lc, s: &Lc, range_bits: u32) -> Result<GadgetCost> {
    let before = b.num_constraints();
    let ctx = b.field().clone();
    let t = b.mul(s, s, "sqrt.sq")?;
    // x - s^2 >= 0
    let mut low = x.clone();
    low.add_term(&ctx, t, ctx.neg(ctx.one()));
    let mut cost = GadgetCost {
        constraints: 1,
        raw_constraints: 0,
        witness_wires: 1,
        mults: 1,
        const_mults: 0,
    };
    cost.merge(enforce_nonneg(b, &low, range_bits)?);
    // (s+1)^2 - 1 - x = s^2 + 2s - x >= 0
    let mut high = Lc::single(t, &ctx);
    for &(w, c) in &s.0 {
        high.add_term(&ctx, Wire(w), ctx.mul(c, ctx.from_u64(2)));
    }
    for &(w, c) in &x.0 {
        high.add_term(&ctx, Wire(w), ctx.neg(c));
    }
    cost.merge(enforce_nonneg(b, &high, range_bits)?);
    cost.raw_constraints = b.num_constraints() - before;
    cost.constraints = cost.raw_constraints;
    Ok(cost)
}

/// Polynomial sigmoid approximations over [-5, 5].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmoidVariant {
    Remez,
    Taylor,
}

impl SigmoidVariant {
    /// (c3, c1, c0) encoded at scale 2^l with round-half-away-from-zero.
    pub fn coefficients(self, l: u32) -> (BigInt, BigInt, BigInt) {
        use crate::fixedpoint::encode_rational;
        use num_rational::BigRational;
        let r = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));
        let (c3, c1, c0) = match self {
            SigmoidVariant::Remez => (r(-4, 1000), r(197, 1000), r(1, 2)),
            SigmoidVariant::Taylor => (r(-1, 48), r(1, 4), r(1, 2)),
        };
        (
            encode_rational(&c3, l).raw,
            encode_rational(&c1, l).raw,
            encode_rational(&c0, l).raw,
        )
    }

    /// Native mirror of the gadget: raw in at scale l, raw out at scale l.
    pub fn eval_raw(self, x: &BigInt, l: u32) -> BigInt {
        let (c3, c1, c0) = self.coefficients(l);
        let s1 = x * x; // 2l
        let s1t = &s1 >> l; // l
        let s2 = &s1t * x; // 2l
        let poly = &c3 * &s2 + &c1 * (x << l) + (&c0 << (2 * l)); // 3l
        poly >> (2 * l)
    }
}

/// Cubic sigmoid evaluation: 2 multiplications plus the two truncations.
/// Input wire at scale l, output wire at scale l; the caller pre-clamps the
/// real value into the approximation range.
pub fn sigmoid_poly(
    b: &mut Builder,
    x: &Lc,
    variant: SigmoidVariant,
    l: u32,
) -> Result<(Wire, GadgetCost)> {
    let before = b.num_constraints();
    let ctx = b.field().clone();
    let (c3, c1, c0) = variant.coefficients(l);
    let s1 = b.mul(x, x, "sig.x2")?; // 2l
    let (s1t, mut cost) = truncate_to(b, &Lc::single(s1, &ctx), l)?; // l
    cost.mults += 2;
    let s2 = b.mul(&Lc::single(s1t, &ctx), x, "sig.x3")?; // 2l
    let mut poly = Lc::wire(s2, ctx.from_bigint(&c3));
    let c1_lifted = ctx.from_bigint(&(&c1 << l));
    for &(w, c) in &x.0 {
        poly.add_term(&ctx, Wire(w), ctx.mul(c, c1_lifted));
    }
    poly.add_term(&ctx, Wire(0), ctx.from_bigint(&(&c0 << (2 * l))));
    let (out, tcost) = truncate_to(b, &poly, 2 * l)?;
    cost.merge(tcost);
    cost.constraints += 2;
    cost.raw_constraints = b.num_constraints() - before;
    cost.constraints = cost.raw_constraints;
    Ok((out, cost))
}

/// One fixed-point SGD step for linear regression.
///
/// Inputs at scale l; the update LCs come back at scale 4l and the truncated
/// next-state wires at scale l. With the learning-rate-over-batch constant
/// folded in, a batch-size increase of one adds exactly 2d multiplication
/// constraints; supplying alpha as a wire instead adds d more.
pub struct SgdStepOut {
    pub updates: Vec<Lc>,
    pub next_state: Vec<Wire>,
    pub cost: GadgetCost,
}

pub fn sgd_linreg_step(
    b: &mut Builder,
    w: &[Lc],
    x: &[Vec<Lc>],
    y: &[Lc],
    alpha_over_b: AlphaMode,
    l: u32,
) -> Result<SgdStepOut> {
    let before = b.num_constraints();
    let ctx = b.field().clone();
    let d = w.len();
    let mut cost = GadgetCost::default();
    let mut grads: Vec<Lc> = vec![Lc::zero(); d];
    for (xi, yi) in x.iter().zip(y) {
        if xi.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: xi.len(),
            });
        }
        let (pred, c) = inner_product(b, xi, w)?; // 2l
        cost.merge(c);
        let mut resid = Lc::single(pred, &ctx);
        let lift = pow2(b, l as u64);
        for &(wi, co) in &yi.0 {
            resid.add_term(&ctx, Wire(wi), ctx.neg(ctx.mul(co, lift)));
        }
        for (j, xij) in xi.iter().enumerate() {
            let t = b.mul(&resid, xij, "sgd.gradterm")?; // 3l
            grads[j].add_term(&ctx, t, ctx.one());
            cost.mults += 1;
        }
    }
    let mut updates = Vec::with_capacity(d);
    let mut next_state = Vec::with_capacity(d);
    let w_lift = pow2(b, (3 * l) as u64);
    for j in 0..d {
        let mut upd = w[j].scaled(&ctx, w_lift);
        match &alpha_over_b {
            AlphaMode::Constant(c_raw) => {
                let neg_c = ctx.neg(ctx.from_bigint(c_raw));
                for &(wi, co) in &grads[j].0 {
                    upd.add_term(&ctx, Wire(wi), ctx.mul(co, neg_c));
                }
                cost.const_mults += 1;
            }
            AlphaMode::Wire(c_lc) => {
                let t = b.mul(c_lc, &grads[j], "sgd.alpha")?;
                upd.add_term(&ctx, t, ctx.neg(ctx.one()));
                cost.mults += 1;
            }
        }
        let (w_next, tc) = truncate_to(b, &upd, 3 * l)?;
        cost.merge(tc);
        updates.push(upd);
        next_state.push(w_next);
    }
    cost.raw_constraints = b.num_constraints() - before;
    cost.constraints = cost.raw_constraints;
    Ok(SgdStepOut {
        updates,
        next_state,
        cost,
    })
}

/// Learning-rate constant c = round((alpha/b) * 2^l), or a circuit wire for
/// variable-rate mode.
pub enum AlphaMode {
    Constant(BigInt),
    Wire(Lc),
}

/// Mean squared error over a batch at scale l; b_size must be a power of two
/// so the mean folds into the truncation shift as a constant 2^-log2(b).
pub fn mse(
    b: &mut Builder,
    w: &[Lc],
    x: &[Vec<Lc>],
    y: &[Lc],
    l: u32,
) -> Result<(Wire, GadgetCost)> {
    let b_size = x.len();
    if !b_size.is_power_of_two() {
        return Err(Error::TaskConfig(format!(
            "in-circuit MSE needs a power-of-two batch, got {b_size}"
        )));
    }
    let before = b.num_constraints();
    let ctx = b.field().clone();
    let mut cost = GadgetCost::default();
    let mut acc = Lc::zero(); // 4l
    for (xi, yi) in x.iter().zip(y) {
        let (pred, c) = inner_product(b, xi, w)?;
        cost.merge(c);
        let mut resid = Lc::single(pred, &ctx); // 2l
        let lift = pow2(b, l as u64);
        for &(wi, co) in &yi.0 {
            resid.add_term(&ctx, Wire(wi), ctx.neg(ctx.mul(co, lift)));
        }
        let sq = b.mul(&resid, &resid, "mse.sq")?; // 4l
        acc.add_term(&ctx, sq, ctx.one());
        cost.mults += 1;
    }
    // divide by b (power of two) and rescale 4l -> l in one floor shift
    let shift = 3 * l + b_size.trailing_zeros();
    let (out, tc) = truncate_to(b, &acc, shift)?;
    cost.merge(tc);
    cost.raw_constraints = b.num_constraints() - before;
    cost.constraints = cost.raw_constraints;
    Ok((out, cost))
}

/// Freivald check A(Br) = Cr for claimed product C of A (n x m) and B (m x q),
/// with the challenge vector r baked in as constants. Exactly n*m wire
/// multiplications; Br and Cr are constant-weighted linear combinations.
pub fn freivald_matmul_check(
    b: &mut Builder,
    a: &[Vec<Lc>],
    bm: &[Vec<Lc>],
    c: &[Vec<Lc>],
    r: &[Fe],
) -> Result<GadgetCost> {
    let before = b.num_constraints();
    let n = a.len();
    let m = bm.len();
    let q = r.len();
    if n == 0 || m == 0 || q == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    if a[0].len() != m || c.len() != n || c[0].len() != q || bm[0].len() != q {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: a[0].len(),
        });
    }
    let ctx = b.field().clone();
    // Br: m linear combinations
    let mut br: Vec<Lc> = Vec::with_capacity(m);
    for row in bm {
        let mut lc = Lc::zero();
        for (k, cell) in row.iter().enumerate() {
            for &(wi, co) in &cell.0 {
                lc.add_term(&ctx, Wire(wi), ctx.mul(co, r[k]));
            }
        }
        br.push(lc);
    }
    let mut mults = 0usize;
    for i in 0..n {
        // Cr_i
        let mut cr = Lc::zero();
        for (k, cell) in c[i].iter().enumerate() {
            for &(wi, co) in &cell.0 {
                cr.add_term(&ctx, Wire(wi), ctx.mul(co, r[k]));
            }
        }
        // sum_j a[i][j] * br[j] = cr_i, folding the sum into the final product
        let mut partial = Lc::zero();
        for j in 0..m - 1 {
            let t = b.mul(&a[i][j], &br[j], "freivald.term")?;
            partial.add_term(&ctx, t, ctx.one());
            mults += 1;
        }
        let mut c_side = cr;
        for &(wi, co) in &partial.0 {
            c_side.add_term(&ctx, Wire(wi), ctx.neg(co));
        }
        b.enforce(
            a[i][m - 1].clone(),
            br[m - 1].clone(),
            c_side,
            "freivald.fold",
        )?;
        mults += 1;
    }
    let raw = b.num_constraints() - before;
    Ok(GadgetCost {
        constraints: raw,
        raw_constraints: raw,
        witness_wires: n * (m - 1),
        mults,
        const_mults: m * q + n * q,
    })
}

/// Square-softmax consistency: probs_i * sum_j(logits_j^2) = logits_i^2 * 2^l
/// up to the floor remainder, plus the sum-to-one range bound. When every
/// logit is zero the divisor degenerates; the zero flag swaps in divisor 1 so
/// probs collapse to the all-zero vector, mirroring the native rule.
pub fn softmax_square_check(
    b: &mut Builder,
    logits: &[Lc],
    probs: &[Lc],
    l: u32,
    range_bits: u32,
) -> Result<GadgetCost> {
    let before = b.num_constraints();
    let ctx = b.field().clone();
    let kappa = logits.len();
    if probs.len() != kappa || kappa == 0 {
        return Err(Error::DimensionMismatch {
            expected: kappa.max(1),
            got: probs.len(),
        });
    }
    let mut cost = GadgetCost::default();
    let mut denom = Lc::zero(); // 2l
    let mut squares = Vec::with_capacity(kappa);
    for lg in logits {
        let s = b.mul(lg, lg, "softmax.sq")?;
        denom.add_term(&ctx, s, ctx.one());
        squares.push(s);
        cost.mults += 1;
    }
    let (zflag, zc) = is_zero(b, &denom)?;
    cost.merge(zc);
    let mut divisor = denom.clone();
    divisor.add_term(&ctx, zflag, ctx.one());
    for i in 0..kappa {
        let dividend = Lc::single(squares[i], &ctx);
        cost.merge(division_check(
            b, &dividend, &divisor, &probs[i], l, range_bits,
        )?);
    }
    // sum probs in (2^l - kappa, 2^l], shifted up by 2^l when degenerate
    let mut sum_probs = Lc::zero();
    for p in probs {
        sum_probs.add_lc(&ctx, p);
    }
    let small_bits = 64 - (kappa as u64).leading_zeros() + 1;
    let mut lower = sum_probs.clone();
    lower.add_term(&ctx, zflag, pow2(b, l as u64));
    let low_bound = (BigUint::one() << l) - BigUint::from(kappa) + BigUint::one();
    lower.add_term(&ctx, Wire(0), ctx.neg(ctx.from_biguint(&low_bound)));
    cost.merge(enforce_nonneg(b, &lower, small_bits)?);
    let mut upper = Lc::constant(pow2(b, l as u64));
    for &(wi, co) in &sum_probs.0 {
        upper.add_term(&ctx, Wire(wi), ctx.neg(co));
    }
    cost.merge(enforce_nonneg(b, &upper, l + 1)?);
    cost.raw_constraints = b.num_constraints() - before;
    cost.constraints = cost.raw_constraints;
    Ok(cost)
}

/// Closest-distance certificate: candidate <= d_j for all j and at least one
/// exact match; the returned flags mark every attained minimum, and the
/// one-hot assignment derived from them tie-breaks by lowest index.
pub struct ClosestOut {
    pub min_flags: Vec<Wire>,
    pub one_hot: Vec<Lc>,
    pub cost: GadgetCost,
}

pub fn closest_distance_check(
    b: &mut Builder,
    distances: &[Lc],
    candidate: &Lc,
    range_bits: u32,
) -> Result<ClosestOut> {
    let before = b.num_constraints();
    let ctx = b.field().clone();
    let k = distances.len();
    if k == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    let mut cost = GadgetCost::default();
    let mut flags = Vec::with_capacity(k);
    for d in distances {
        let mut gap = d.clone();
        for &(wi, co) in &candidate.0 {
            gap.add_term(&ctx, Wire(wi), ctx.neg(co));
        }
        cost.merge(enforce_nonneg(b, &gap, range_bits)?);
        let (flag, fc) = is_zero(b, &gap)?;
        cost.merge(fc);
        flags.push(flag);
    }
    let mut flag_sum = Lc::zero();
    for &f in &flags {
        flag_sum.add_term(&ctx, f, ctx.one());
    }
    flag_sum.add_term(&ctx, Wire(0), ctx.neg(ctx.one()));
    let small_bits = 64 - (k as u64).leading_zeros() + 1;
    cost.merge(enforce_nonneg(b, &flag_sum, small_bits)?);
    // one-hot with lowest-index tie-break: a_j = flag_j * prod_{i<j}(1-flag_i)
    let mut one_hot = Vec::with_capacity(k);
    let mut none_so_far = Lc::constant(ctx.one());
    for (j, &f) in flags.iter().enumerate() {
        let a = b.mul(&Lc::single(f, &ctx), &none_so_far, "closest.onehot")?;
        cost.mults += 1;
        one_hot.push(Lc::single(a, &ctx));
        if j + 1 < k {
            // none' = none - a  (1-flag_j factors fold because flags are 0/1)
            let mut next = none_so_far.clone();
            next.add_term(&ctx, a, ctx.neg(ctx.one()));
            none_so_far = next;
        }
    }
    cost.raw_constraints = b.num_constraints() - before;
    cost.constraints = cost.raw_constraints;
    Ok(ClosestOut {
        min_flags: flags,
        one_hot,
        cost,
    })
}

/// parent_j = left_j + right_j over aligned bins: linear constraints only.
pub fn histogram_sum_check(
    b: &mut Builder,
    parent: &[Lc],
    left: &[Lc],
    right: &[Lc],
) -> Result<GadgetCost> {
    if parent.len() != left.len() || parent.len() != right.len() {
        return Err(Error::DimensionMismatch {
            expected: parent.len(),
            got: left.len().min(right.len()),
        });
    }
    let before = b.num_constraints();
    let ctx = b.field().clone();
    for ((p, lft), rgt) in parent.iter().zip(left).zip(right) {
        let mut diff = p.clone();
        for &(wi, co) in &lft.0 {
            diff.add_term(&ctx, Wire(wi), ctx.neg(co));
        }
        for &(wi, co) in &rgt.0 {
            diff.add_term(&ctx, Wire(wi), ctx.neg(co));
        }
        b.enforce_zero(diff, "hist.sum")?;
    }
    let raw = b.num_constraints() - before;
    Ok(GadgetCost {
        constraints: raw,
        raw_constraints: raw,
        witness_wires: 0,
        mults: 0,
        const_mults: 0,
    })
}

/// Conditional select: flag * a + (1-flag) * b (one multiplication).
pub fn select(b: &mut Builder, flag: Wire, if_one: &Lc, if_zero: &Lc) -> Result<(Lc, GadgetCost)> {
    let before = b.num_constraints();
    let ctx = b.field().clone();
    let mut diff = if_one.clone();
    for &(wi, co) in &if_zero.0 {
        diff.add_term(&ctx, Wire(wi), ctx.neg(co));
    }
    let t = b.mul(&Lc::single(flag, &ctx), &diff, "select")?;
    let mut out = if_zero.clone();
    out.add_term(&ctx, t, ctx.one());
    Ok((
        out,
        GadgetCost {
            constraints: 1,
            raw_constraints: b.num_constraints() - before,
            witness_wires: 1,
            mults: 1,
            const_mults: 0,
        },
    ))
}
