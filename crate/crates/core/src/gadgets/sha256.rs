//! SHA-256 as an arithmetic circuit over boolean wires.
//!
//! Messages are byte sequences (bits LSB-first within each byte); standard
//! padding is applied, so a message of up to 447 bits compresses in a single
//! block while the 64-byte identifier payload takes two, the second block's
//! message schedule being fully constant. Constant subexpressions fold at
//! build time and cost no constraints.

use super::GadgetCost;
use crate::error::{Error, Result};
use crate::field::Fe;
use crate::r1cs::{Builder, Lc, Visibility, Wire};

const K: [u32; 64] = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
];

const IV: [u32; 8] = [
    0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
];

/// One in-circuit bit: an LC whose value is 0/1, with build-time constant
/// folding and the prover-side boolean value when available.
#[derive(Debug, Clone)]
pub struct BitLc {
    pub lc: Lc,
    pub konst: Option<bool>,
    pub val: Option<bool>,
}

impl BitLc {
    pub fn constant(b: &Builder, v: bool) -> Self {
        let lc = if v {
            Lc::constant(b.field().one())
        } else {
            Lc::zero()
        };
        BitLc {
            lc,
            konst: Some(v),
            val: Some(v),
        }
    }

    pub fn from_wire(b: &Builder, w: Wire) -> Self {
        let val = b.wire_value(w).map(|fe| !fe.is_zero());
        BitLc {
            lc: Lc::single(w, b.field()),
            konst: None,
            val,
        }
    }

    pub fn not(&self, b: &Builder) -> Self {
        let ctx = b.field();
        let mut lc = Lc::constant(ctx.one());
        for &(w, c) in &self.lc.0 {
            lc.add_term(ctx, Wire(w), ctx.neg(c));
        }
        BitLc {
            lc,
            konst: self.konst.map(|v| !v),
            val: self.val.map(|v| !v),
        }
    }
}

fn alloc_bit(b: &mut Builder, val: Option<bool>) -> Result<BitLc> {
    let fe = val.map(|v| if v { b.field().one() } else { Fe::ZERO });
    let w = b.new_wire(Visibility::Witness, fe)?;
    Ok(BitLc {
        lc: Lc::single(w, b.field()),
        konst: None,
        val,
    })
}

/// a XOR b: one constraint unless a side is constant.
fn xor(b: &mut Builder, x: &BitLc, y: &BitLc) -> Result<BitLc> {
    match (x.konst, y.konst) {
        (Some(a), Some(c)) => Ok(BitLc::constant(b, a ^ c)),
        (Some(false), None) => Ok(y.clone()),
        (Some(true), None) => Ok(y.not(b)),
        (None, Some(false)) => Ok(x.clone()),
        (None, Some(true)) => Ok(x.not(b)),
        (None, None) => {
            let ctx = b.field().clone();
            let val = match (x.val, y.val) {
                (Some(a), Some(c)) => Some(a ^ c),
                _ => None,
            };
            let out = alloc_bit(b, val)?;
            // 2x * y = x + y - out
            let two_x = x.lc.scaled(&ctx, ctx.from_u64(2));
            let mut c_side = x.lc.clone();
            c_side.add_lc(&ctx, &y.lc);
            for &(w, c) in &out.lc.0 {
                c_side.add_term(&ctx, Wire(w), ctx.neg(c));
            }
            b.enforce(two_x, y.lc.clone(), c_side, "sha.xor")?;
            Ok(out)
        }
    }
}

fn xor3(b: &mut Builder, x: &BitLc, y: &BitLc, z: &BitLc) -> Result<BitLc> {
    let t = xor(b, x, y)?;
    xor(b, &t, z)
}

/// Ch(e,f,g) = g + e*(f-g): one constraint in the variable case.
fn ch(b: &mut Builder, e: &BitLc, f: &BitLc, g: &BitLc) -> Result<BitLc> {
    match e.konst {
        Some(true) => return Ok(f.clone()),
        Some(false) => return Ok(g.clone()),
        None => {}
    }
    if f.konst.is_some() && f.konst == g.konst {
        return Ok(f.clone());
    }
    let ctx = b.field().clone();
    let val = match (e.val, f.val, g.val) {
        (Some(ev), Some(fv), Some(gv)) => Some(if ev { fv } else { gv }),
        _ => None,
    };
    let out = alloc_bit(b, val)?;
    let mut f_minus_g = f.lc.clone();
    for &(w, c) in &g.lc.0 {
        f_minus_g.add_term(&ctx, Wire(w), ctx.neg(c));
    }
    let mut c_side = out.lc.clone();
    for &(w, c) in &g.lc.0 {
        c_side.add_term(&ctx, Wire(w), ctx.neg(c));
    }
    b.enforce(e.lc.clone(), f_minus_g, c_side, "sha.ch")?;
    Ok(out)
}

/// Maj(a,b,c) = t + a*(b + c - 2t) with t = b*c: two constraints.
fn maj(bd: &mut Builder, a: &BitLc, b: &BitLc, c: &BitLc) -> Result<BitLc> {
    if let (Some(av), Some(bv), Some(cv)) = (a.konst, b.konst, c.konst) {
        return Ok(BitLc::constant(bd, (av & bv) | (av & cv) | (bv & cv)));
    }
    let ctx = bd.field().clone();
    // t = b & c
    let t = match (b.konst, c.konst) {
        (Some(false), _) | (_, Some(false)) => BitLc::constant(bd, false),
        (Some(true), _) => c.clone(),
        (_, Some(true)) => b.clone(),
        _ => {
            let val = match (b.val, c.val) {
                (Some(x), Some(y)) => Some(x & y),
                _ => None,
            };
            let out = alloc_bit(bd, val)?;
            bd.enforce(b.lc.clone(), c.lc.clone(), out.lc.clone(), "sha.maj.and")?;
            out
        }
    };
    let val = match (a.val, b.val, c.val) {
        (Some(x), Some(y), Some(z)) => Some((x & y) | (x & z) | (y & z)),
        _ => None,
    };
    let out = alloc_bit(bd, val)?;
    // a * (b + c - 2t) = out - t
    let mut mid = b.lc.clone();
    mid.add_lc(&ctx, &c.lc);
    for &(w, co) in &t.lc.0 {
        mid.add_term(&ctx, Wire(w), ctx.neg(ctx.mul(co, ctx.from_u64(2))));
    }
    let mut c_side = out.lc.clone();
    for &(w, co) in &t.lc.0 {
        c_side.add_term(&ctx, Wire(w), ctx.neg(co));
    }
    bd.enforce(a.lc.clone(), mid, c_side, "sha.maj")?;
    Ok(out)
}

/// 32 bits, LSB first.
#[derive(Debug, Clone)]
struct WordBits(Vec<BitLc>);

impl WordBits {
    fn constant(b: &Builder, v: u32) -> Self {
        WordBits(
            (0..32)
                .map(|i| BitLc::constant(b, (v >> i) & 1 == 1))
                .collect(),
        )
    }

    fn as_const(&self) -> Option<u32> {
        let mut v = 0u32;
        for (i, bit) in self.0.iter().enumerate() {
            v |= (bit.konst? as u32) << i;
        }
        Some(v)
    }

    fn rotr(&self, n: usize) -> WordBits {
        WordBits((0..32).map(|j| self.0[(j + n) % 32].clone()).collect())
    }

    fn shr(&self, b: &Builder, n: usize) -> WordBits {
        WordBits(
            (0..32)
                .map(|j| {
                    if j + n < 32 {
                        self.0[j + n].clone()
                    } else {
                        BitLc::constant(b, false)
                    }
                })
                .collect(),
        )
    }
}

fn xor3_word(b: &mut Builder, x: &WordBits, y: &WordBits, z: &WordBits) -> Result<WordBits> {
    let mut out = Vec::with_capacity(32);
    for j in 0..32 {
        out.push(xor3(b, &x.0[j], &y.0[j], &z.0[j])?);
    }
    Ok(WordBits(out))
}

/// Sum words mod 2^32 with one split of the full sum; all-constant sums fold.
fn add_words(b: &mut Builder, terms: &[&WordBits]) -> Result<WordBits> {
    if terms.iter().all(|t| t.as_const().is_some()) {
        let sum = terms
            .iter()
            .map(|t| t.as_const().unwrap() as u64)
            .sum::<u64>();
        return Ok(WordBits::constant(b, sum as u32));
    }
    let ctx = b.field().clone();
    let mut raw_terms = Vec::new();
    for t in terms {
        for (j, bit) in t.0.iter().enumerate() {
            let p = ctx.pow2(j as u64);
            for &(w, c) in &bit.lc.0 {
                raw_terms.push((w, ctx.mul(c, p)));
            }
        }
    }
    let lc = Lc::from_terms(&ctx, raw_terms);
    let extra = usize::BITS - (terms.len() - 1).leading_zeros();
    let (bits, _) = super::split(b, &lc, 32 + extra)?;
    Ok(WordBits(
        bits[..32].iter().map(|&w| BitLc::from_wire(b, w)).collect(),
    ))
}

pub struct ShaOut {
    /// 256 digest bits, byte order with LSB-first bits per byte.
    pub digest: Vec<BitLc>,
    pub cost: GadgetCost,
    pub blocks: usize,
}

/// Standard SHA-256 over a byte-aligned message given as bit LCs
/// (message.len() % 8 == 0, bits LSB-first within each byte).
pub fn sha256_digest(b: &mut Builder, message: &[BitLc]) -> Result<ShaOut> {
    if message.len() % 8 != 0 {
        return Err(Error::TaskConfig(
            "sha256 message must be byte aligned".into(),
        ));
    }
    let before = b.num_constraints();
    let wires_before = b.num_wires();
    let bit_len = message.len() as u64;
    // pad: 0x80 byte, zero bytes, 8-byte big-endian bit length
    let mut padded: Vec<BitLc> = message.to_vec();
    let one_byte = 0x80u8;
    for i in 0..8 {
        padded.push(BitLc::constant(b, (one_byte >> i) & 1 == 1));
    }
    while (padded.len() + 64) % 512 != 0 {
        padded.push(BitLc::constant(b, false));
    }
    for byte in bit_len.to_be_bytes() {
        for i in 0..8 {
            padded.push(BitLc::constant(b, (byte >> i) & 1 == 1));
        }
    }
    let blocks = padded.len() / 512;

    let mut state: Vec<WordBits> = IV.iter().map(|&v| WordBits::constant(b, v)).collect();
    for blk in 0..blocks {
        let block_bits = &padded[blk * 512..(blk + 1) * 512];
        // bytes -> big-endian words; word bit j comes from byte (3 - j/8), bit j%8
        let mut w: Vec<WordBits> = Vec::with_capacity(64);
        for t in 0..16 {
            let bytes: Vec<&[BitLc]> = (0..4)
                .map(|k| &block_bits[(4 * t + k) * 8..(4 * t + k + 1) * 8])
                .collect();
            let mut bits = Vec::with_capacity(32);
            for j in 0..32 {
                bits.push(bytes[3 - j / 8][j % 8].clone());
            }
            w.push(WordBits(bits));
        }
        for t in 16..64 {
            let s0 = {
                let x = &w[t - 15];
                let (a, c, d) = (x.rotr(7), x.rotr(18), x.shr(b, 3));
                xor3_word(b, &a, &c, &d)?
            };
            let s1 = {
                let x = &w[t - 2];
                let (a, c, d) = (x.rotr(17), x.rotr(19), x.shr(b, 10));
                xor3_word(b, &a, &c, &d)?
            };
            let wt = add_words(b, &[&w[t - 16], &s0, &w[t - 7], &s1])?;
            w.push(wt);
        }

        let (mut a, mut bb, mut c, mut d, mut e, mut f, mut g, mut h) = (
            state[0].clone(),
            state[1].clone(),
            state[2].clone(),
            state[3].clone(),
            state[4].clone(),
            state[5].clone(),
            state[6].clone(),
            state[7].clone(),
        );
        for t in 0..64 {
            let s1 = {
                let (x, y, z) = (e.rotr(6), e.rotr(11), e.rotr(25));
                xor3_word(b, &x, &y, &z)?
            };
            let ch_w = {
                let mut bits = Vec::with_capacity(32);
                for j in 0..32 {
                    bits.push(ch(b, &e.0[j], &f.0[j], &g.0[j])?);
                }
                WordBits(bits)
            };
            let s0 = {
                let (x, y, z) = (a.rotr(2), a.rotr(13), a.rotr(22));
                xor3_word(b, &x, &y, &z)?
            };
            let maj_w = {
                let mut bits = Vec::with_capacity(32);
                for j in 0..32 {
                    bits.push(maj(b, &a.0[j], &bb.0[j], &c.0[j])?);
                }
                WordBits(bits)
            };
            let k_w = WordBits::constant(b, K[t]);
            // new_e = d + h + s1 + ch + k + w[t]; new_a = h + s1 + ch + k + w[t] + s0 + maj
            let new_e = add_words(b, &[&d, &h, &s1, &ch_w, &k_w, &w[t]])?;
            let new_a = add_words(b, &[&h, &s1, &ch_w, &k_w, &w[t], &s0, &maj_w])?;
            h = g;
            g = f;
            f = e;
            e = new_e;
            d = c;
            c = bb;
            bb = a;
            a = new_a;
        }
        let worked = [a, bb, c, d, e, f, g, h];
        for (i, wk) in worked.into_iter().enumerate() {
            state[i] = add_words(b, &[&state[i], &wk])?;
        }
    }

    // state words -> digest bytes big-endian per word
    let mut digest = Vec::with_capacity(256);
    for word in &state {
        for byte_idx in 0..4 {
            let base = (3 - byte_idx) * 8;
            for i in 0..8 {
                digest.push(word.0[base + i].clone());
            }
        }
    }
    let raw = b.num_constraints() - before;
    Ok(ShaOut {
        digest,
        cost: GadgetCost {
            constraints: raw,
            raw_constraints: raw,
            witness_wires: b.num_wires() - wires_before,
            mults: raw,
            const_mults: 0,
        },
        blocks,
    })
}

/// Pack digest bits into field elements, `chunk` bits per element (LSB first).
pub fn pack_bits(b: &Builder, bits: &[BitLc], chunk: usize) -> Vec<Lc> {
    let ctx = b.field();
    bits.chunks(chunk)
        .map(|group| {
            let mut terms = Vec::with_capacity(group.len());
            for (i, bit) in group.iter().enumerate() {
                let p = ctx.pow2(i as u64);
                for &(w, c) in &bit.lc.0 {
                    terms.push((w, ctx.mul(c, p)));
                }
            }
            Lc::from_terms(ctx, terms)
        })
        .collect()
}

/// Digest bytes of a bit vector whose values are known (prover side).
pub fn bits_to_bytes(bits: &[BitLc]) -> Option<Vec<u8>> {
    let mut out = vec![0u8; bits.len() / 8];
    for (i, bit) in bits.iter().enumerate() {
        if bit.val? {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    Some(out)
}

/// Bytes -> constant bit LCs (tests and constant payload segments).
pub fn const_bits(b: &Builder, bytes: &[u8]) -> Vec<BitLc> {
    bytes
        .iter()
        .flat_map(|&byte| (0..8).map(move |i| (byte >> i) & 1 == 1))
        .map(|v| BitLc::constant(b, v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldConfig;
    use sha2::{Digest, Sha256};

    fn bld(with_values: bool) -> Builder {
        Builder::new(FieldConfig::default_254bit(), "sha", with_values).unwrap()
    }

    fn reference(bytes: &[u8]) -> Vec<u8> {
        Sha256::digest(bytes).to_vec()
    }

    #[test]
    fn constant_message_folds_to_reference_digest() {
        let mut b = bld(false);
        for msg in [&b""[..], b"abc", &[0u8; 64][..], &[7u8; 100][..]] {
            let bits = const_bits(&b, msg);
            let out = sha256_digest(&mut b, &bits).unwrap();
            assert_eq!(out.cost.raw_constraints, 0, "constant path must be free");
            let got: Vec<u8> = out
                .digest
                .chunks(8)
                .map(|byte| {
                    byte.iter()
                        .enumerate()
                        .fold(0u8, |acc, (i, bit)| acc | ((bit.konst.unwrap() as u8) << i))
                })
                .collect();
            assert_eq!(got, reference(msg), "msg len {}", msg.len());
        }
    }

    #[test]
    fn witness_message_matches_reference_and_satisfies() {
        let payload: Vec<u8> = (0u8..64).collect();
        let mut b = bld(true);
        let ctx = b.field().clone();
        // allocate message bits as booleanity-constrained witnesses
        let mut bits = Vec::new();
        for &byte in &payload {
            for i in 0..8 {
                let v = (byte >> i) & 1 == 1;
                let w = b
                    .new_wire(
                        Visibility::Witness,
                        Some(if v { ctx.one() } else { Fe::ZERO }),
                    )
                    .unwrap();
                let mut minus_one = Lc::single(w, &ctx);
                minus_one.add_term(&ctx, Wire(0), ctx.neg(ctx.one()));
                b.enforce(Lc::single(w, &ctx), minus_one, Lc::zero(), "bool")
                    .unwrap();
                bits.push(BitLc::from_wire(&b, w));
            }
        }
        let out = sha256_digest(&mut b, &bits).unwrap();
        assert_eq!(out.blocks, 2, "64-byte payload pads into two blocks");
        assert_eq!(bits_to_bytes(&out.digest).unwrap(), reference(&payload));
        // constraint count is an implementation property; pin the order of magnitude
        assert!(
            out.cost.raw_constraints > 10_000 && out.cost.raw_constraints < 120_000,
            "constraints = {}",
            out.cost.raw_constraints
        );
        let (c, a) = b.freeze();
        assert!(c.evaluate(&a.unwrap()).unwrap().satisfied);
    }

    #[test]
    fn short_message_single_block() {
        let payload = [0xabu8; 55]; // 440 bits <= 447
        let mut b = bld(true);
        let ctx = b.field().clone();
        let mut bits = Vec::new();
        for &byte in &payload {
            for i in 0..8 {
                let v = (byte >> i) & 1 == 1;
                let w = b
                    .new_wire(
                        Visibility::Witness,
                        Some(if v { ctx.one() } else { Fe::ZERO }),
                    )
                    .unwrap();
                bits.push(BitLc::from_wire(&b, w));
            }
        }
        let out = sha256_digest(&mut b, &bits).unwrap();
        assert_eq!(out.blocks, 1);
        assert_eq!(bits_to_bytes(&out.digest).unwrap(), reference(&payload));
        // one more byte pushes past the 447-bit single-block limit
        let bits2 = const_bits(&b, &[0u8; 56]);
        let out2 = sha256_digest(&mut b, &bits2).unwrap();
        assert_eq!(out2.blocks, 2);
    }

    #[test]
    fn distinct_messages_distinct_digests() {
        // Monte Carlo collision probe over 10^4 random payload pairs, zero
        // collisions expected. The gadget equals the reference digest (the
        // witness and constant-path tests above plus the spot checks here),
        // so the bulk scan runs on the reference.
        use crate::prng::PinnedPrng;
        let mut prng = PinnedPrng::new(42, b"sha-collide");
        let gadget_digest = |msg: &[u8]| -> Vec<u8> {
            let mut bb = bld(false);
            let bits = const_bits(&bb, msg);
            let out = sha256_digest(&mut bb, &bits).unwrap();
            out.digest
                .chunks(8)
                .map(|byte| {
                    byte.iter()
                        .enumerate()
                        .fold(0u8, |acc, (i, bit)| acc | ((bit.konst.unwrap() as u8) << i))
                })
                .collect()
        };
        for pair in 0..10_000u32 {
            let mut a = [0u8; 64];
            let mut c = [0u8; 64];
            prng.fill_bytes(&mut a);
            prng.fill_bytes(&mut c);
            if a == c {
                continue;
            }
            let (da, dc) = (reference(&a), reference(&c));
            assert_ne!(da, dc, "collision");
            if pair % 500 == 0 {
                assert_eq!(gadget_digest(&a), da);
                assert_eq!(gadget_digest(&c), dc);
            }
        }
    }
}
