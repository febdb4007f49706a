//! Per-iteration verification circuits for the six algorithms.
//!
//! Every iteration circuit shares the same spine: public batch data and
//! nonces, a witness input state tied to the previous committed preimage by
//! the authenticity bound, the algorithm's step gadget replaying the native
//! scale schedule, and two in-circuit identifier recomputations whose packed
//! digests are public outputs the client compares against the commitment.
//! The verifier builds the identical structure with no values, so both
//! sides agree on the circuit digest.

mod nn_step;
pub mod predict;
mod steps;

pub use predict::{build_attestation, build_prediction, AttestationInputs, PredictionInputs};

use num_bigint::{BigInt, BigUint};
use num_traits::One;

use crate::commitment::CoefficientVector;
use crate::error::{Error, Result};
use crate::field::{Fe, FieldConfig};
use crate::fixedpoint::raw_to_field;
use crate::gadgets::sha256::{pack_bits, sha256_digest, BitLc};
use crate::gadgets::{self, SigmoidVariant};
use crate::models::{Activation, ModelKind};
use crate::r1cs::{Builder, Circuit, Lc, Visibility, Wire};

/// Everything both parties need to derive an iteration circuit. All fields
/// are public task data; the Freivald challenges are fixed only after the
/// commitment arrives.
#[derive(Debug, Clone)]
pub struct IterParams {
    pub field: FieldConfig,
    pub algorithm: ModelKind,
    pub l: u32,
    pub int_budget: u32,
    /// Flattened state length (coefficient-vector dimension).
    pub state_len: usize,
    /// Feature dimension of one sample.
    pub feat_dim: usize,
    pub batch: usize,
    pub coeffs: CoefficientVector,
    pub strict_tolerance: bool,
    pub alpha_over_b: BigInt,
    pub lambda_raw: BigInt,
    pub k_clusters: usize,
    pub nn_shape: Vec<usize>,
    pub activation: Activation,
    pub sigmoid: SigmoidVariant,
    /// Per-matmul Freivald challenge vectors (NN only).
    pub freivald_r: Vec<Vec<Fe>>,
    /// Partition position for tree circuits.
    pub tree_position: usize,
    pub tree_per_node: usize,
    pub tree_depth: usize,
}

impl IterParams {
    /// Scale of the untruncated update this algorithm commits.
    pub fn untrunc_scale(&self) -> u32 {
        crate::models::untrunc_scale(self.algorithm, self.l)
    }

    /// Labels are part of the public batch for these algorithms.
    pub fn has_labels(&self) -> bool {
        !matches!(self.algorithm, ModelKind::Kmeans | ModelKind::Dtree)
    }

    pub fn has_batch(&self) -> bool {
        self.algorithm != ModelKind::Dtree
    }

    /// SVM circuits take the iteration counter as a public wire.
    pub fn has_iter_wire(&self) -> bool {
        self.algorithm == ModelKind::Svm
    }

    /// Generous bound (in bits) on any raw value at scale `s`.
    pub fn value_bits(&self, scale: u32) -> u32 {
        let dims = self.state_len.max(self.batch).max(self.feat_dim).max(2);
        self.int_budget + scale + (usize::BITS - dims.leading_zeros()) + 2
    }

    /// Field capacity check: every scale the schedule produces must embed
    /// injectively, with room for the range proofs.
    pub fn validate(&self) -> Result<()> {
        let ctx = self.field.ctx()?;
        let worst = self.value_bits(self.untrunc_scale() + self.l) + 1;
        if (worst as u64) >= ctx.modulus_bits() {
            return Err(Error::TaskConfig(format!(
                "scale schedule needs {worst} bits but the field has {}",
                ctx.modulus_bits()
            )));
        }
        Ok(())
    }
}

/// Prover-side values for one challenged iteration.
#[derive(Debug, Clone)]
pub struct IterationInputs {
    pub x: Vec<Vec<BigInt>>,
    pub y: Vec<BigInt>,
    pub w_in: Vec<BigInt>,
    /// Next-state values; only tree circuits consume them (children slots).
    pub w_out: Vec<BigInt>,
    /// Committed preimage of the previous iteration, raw at scale 2l.
    pub s_prev: BigInt,
    pub nonce_prev: BigUint,
    pub nonce_cur: BigUint,
    pub t_iter: u64,
}

/// Wire layout of the public prefix, identical on both sides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicLayout {
    pub x_wires: usize,
    pub y_wires: usize,
    pub iter_wires: usize,
    pub nonce_bits: usize,
    pub digest_chunk_bits: usize,
    pub digest_chunks: usize,
}

impl PublicLayout {
    pub fn total(&self) -> usize {
        self.x_wires + self.y_wires + self.iter_wires + 2 * self.nonce_bits + 2 * self.digest_chunks
    }
}

pub fn digest_chunk_bits(field: &FieldConfig) -> Result<usize> {
    let ctx = field.ctx()?;
    Ok(std::cmp::min(128, ctx.modulus_bits() as usize - 1))
}

/// Pack a 32-byte digest into field elements of `chunk` bits, LSB-first —
/// the client-side mirror of the in-circuit packing.
pub fn pack_digest(digest: &[u8; 32], chunk: usize, field: &FieldConfig) -> Result<Vec<Fe>> {
    let ctx = field.ctx()?;
    let mut bits = Vec::with_capacity(256);
    for byte in digest {
        for i in 0..8 {
            bits.push((byte >> i) & 1 == 1);
        }
    }
    Ok(bits
        .chunks(chunk)
        .map(|group| {
            let mut v = BigUint::ZERO;
            for (i, &bit) in group.iter().enumerate() {
                if bit {
                    v |= BigUint::one() << i;
                }
            }
            ctx.from_biguint(&v)
        })
        .collect())
}

/// The client's public-input vector for verify, in wire order.
#[allow(clippy::too_many_arguments)]
pub fn assemble_public_io(
    params: &IterParams,
    x: &[Vec<BigInt>],
    y: &[BigInt],
    t_iter: u64,
    nonce_prev: &BigUint,
    nonce_cur: &BigUint,
    id_prev: &[u8; 32],
    id_cur: &[u8; 32],
) -> Result<Vec<Fe>> {
    let ctx = params.field.ctx()?;
    let chunk = digest_chunk_bits(&params.field)?;
    let mut io = Vec::new();
    for row in x {
        for v in row {
            io.push(raw_to_field(v, &ctx)?);
        }
    }
    for v in y {
        io.push(raw_to_field(v, &ctx)?);
    }
    if params.has_iter_wire() {
        io.push(ctx.from_u64(t_iter));
    }
    for nonce in [nonce_prev, nonce_cur] {
        for i in 0..254u64 {
            io.push(if nonce.bit(i) { ctx.one() } else { Fe::ZERO });
        }
    }
    for digest in [id_prev, id_cur] {
        io.extend(pack_digest(digest, chunk, &params.field)?);
    }
    Ok(io)
}

pub(crate) struct PublicWires {
    pub x: Vec<Vec<Lc>>,
    pub y: Vec<Lc>,
    pub t_iter: Option<Lc>,
    pub nonce_prev: Vec<BitLc>,
    pub nonce_cur: Vec<BitLc>,
    pub id_prev: Vec<Wire>,
    pub id_cur: Vec<Wire>,
    pub layout: PublicLayout,
}

/// Allocate the shared public prefix in canonical order.
pub(crate) fn alloc_public(
    b: &mut Builder,
    params: &IterParams,
    data: Option<&IterationInputs>,
    id_prev: Option<&[u8; 32]>,
    id_cur: Option<&[u8; 32]>,
) -> Result<PublicWires> {
    let ctx = b.field().clone();
    let chunk = digest_chunk_bits(&params.field)?;
    let chunks = 256usize.div_ceil(chunk);
    let (rows, cols) = if params.has_batch() {
        (params.batch, params.feat_dim)
    } else {
        (0, 0)
    };
    let mut x = Vec::with_capacity(rows);
    for i in 0..rows {
        let mut row = Vec::with_capacity(cols);
        for j in 0..cols {
            let v = match data {
                Some(d) => Some(raw_to_field(&d.x[i][j], &ctx)?),
                None => None,
            };
            row.push(Lc::single(b.new_wire(Visibility::PublicInput, v)?, &ctx));
        }
        x.push(row);
    }
    let y_count = if params.has_labels() { params.batch } else { 0 };
    let mut y = Vec::with_capacity(y_count);
    for i in 0..y_count {
        let v = match data {
            Some(d) => Some(raw_to_field(&d.y[i], &ctx)?),
            None => None,
        };
        y.push(Lc::single(b.new_wire(Visibility::PublicInput, v)?, &ctx));
    }
    let t_iter = if params.has_iter_wire() {
        let v = data.map(|d| ctx.from_u64(d.t_iter));
        Some(Lc::single(b.new_wire(Visibility::PublicInput, v)?, &ctx))
    } else {
        None
    };
    let alloc_nonce = |b: &mut Builder, nonce: Option<&BigUint>| -> Result<Vec<BitLc>> {
        let mut bits = Vec::with_capacity(256);
        for i in 0..254u64 {
            let v = nonce.map(|n| if n.bit(i) { ctx.one() } else { Fe::ZERO });
            let w = b.new_wire(Visibility::PublicInput, v)?;
            bits.push(BitLc::from_wire(b, w));
        }
        Ok(bits)
    };
    let nonce_prev = alloc_nonce(b, data.map(|d| &d.nonce_prev))?;
    let nonce_cur = alloc_nonce(b, data.map(|d| &d.nonce_cur))?;
    let alloc_digest = |b: &mut Builder, digest: Option<&[u8; 32]>| -> Result<Vec<Wire>> {
        let packed = match digest {
            Some(dg) => Some(pack_digest(dg, chunk, &params.field)?),
            None => None,
        };
        (0..chunks)
            .map(|i| b.new_wire(Visibility::PublicOutput, packed.as_ref().map(|p| p[i])))
            .collect()
    };
    let id_prev = alloc_digest(b, id_prev)?;
    let id_cur = alloc_digest(b, id_cur)?;
    Ok(PublicWires {
        x,
        y,
        t_iter,
        nonce_prev,
        nonce_cur,
        id_prev,
        id_cur,
        layout: PublicLayout {
            x_wires: rows * cols,
            y_wires: y_count,
            iter_wires: params.has_iter_wire() as usize,
            nonce_bits: 254,
            digest_chunk_bits: chunk,
            digest_chunks: chunks,
        },
    })
}

/// Recompute an identifier in-circuit: decompose the committed sum into the
/// 32-byte little-endian wire format, append the nonce bits, hash, and bind
/// the packed digest to the public output wires.
pub(crate) fn identifier_subcircuit(
    b: &mut Builder,
    sum: &Lc,
    nonce_bits: &[BitLc],
    id_out: &[Wire],
    chunk: usize,
) -> Result<()> {
    let ctx = b.field().clone();
    let field_bits = ctx.modulus_bits() as u32;
    let (sum_bits, _) = gadgets::split(b, sum, field_bits)?;
    let mut message: Vec<BitLc> = Vec::with_capacity(512);
    for i in 0..256usize {
        if i < field_bits as usize {
            message.push(BitLc::from_wire(b, sum_bits[i]));
        } else {
            message.push(BitLc::constant(b, false));
        }
    }
    message.extend_from_slice(nonce_bits);
    message.push(BitLc::constant(b, false));
    message.push(BitLc::constant(b, false));
    debug_assert_eq!(message.len(), 512);
    let sha = sha256_digest(b, &message)?;
    let packed = pack_bits(b, &sha.digest, chunk);
    if packed.len() != id_out.len() {
        return Err(Error::LayoutMismatch {
            expected: id_out.len(),
            got: packed.len(),
        });
    }
    for (lc, w) in packed.iter().zip(id_out) {
        let mut diff = lc.clone();
        diff.add_term(&ctx, *w, ctx.neg(ctx.one()));
        b.enforce_zero(diff, "id.bind")?;
    }
    Ok(())
}

/// |s_prev - <w_in, v>| < tolerance, both sides at raw scale 2l.
pub(crate) fn authenticity_subcircuit(
    b: &mut Builder,
    params: &IterParams,
    s_prev: &Lc,
    w_in: &[Lc],
    input_scale: u32,
) -> Result<()> {
    let ctx = b.field().clone();
    let mut inner = Lc::zero();
    // lift <w_in, v> from input_scale + l up to 2l if the state sits below l
    let lift = 2 * params.l - (input_scale + params.coeffs.frac_bits);
    for (w, c) in w_in.iter().zip(&params.coeffs.v) {
        let coeff = ctx.from_bigint(&(&c.raw << lift));
        for &(wi, co) in &w.0 {
            inner.add_term(&ctx, Wire(wi), ctx.mul(co, coeff));
        }
    }
    let tol = crate::commitment::authenticity_tolerance(
        &params.coeffs,
        params.state_len,
        params.strict_tolerance,
    ) << lift;
    let bits = ((&tol << 1u32) - BigInt::one()).bits() as u32 + 1;
    let mut diff = s_prev.clone();
    for &(wi, co) in &inner.0 {
        diff.add_term(&ctx, Wire(wi), ctx.neg(co));
    }
    // diff + (tol - 1) in [0, 2 tol - 2]
    let mut low = diff.clone();
    low.add_term(&ctx, Wire(0), ctx.from_bigint(&(&tol - BigInt::one())));
    gadgets::enforce_nonneg(b, &low, bits)?;
    let mut high = Lc::constant(ctx.from_bigint(&(&tol - BigInt::one())));
    for &(wi, co) in &diff.0 {
        high.add_term(&ctx, Wire(wi), ctx.neg(co));
    }
    gadgets::enforce_nonneg(b, &high, bits)?;
    Ok(())
}

/// Weighted sum of the untruncated update, normalized to scale 2l the same
/// way the native commitment does (truncate above, lift below).
pub(crate) fn committed_sum(
    b: &mut Builder,
    params: &IterParams,
    untruncated: &[Lc],
) -> Result<Lc> {
    let ctx = b.field().clone();
    let sum_scale = params.untrunc_scale() + params.coeffs.frac_bits;
    let mut full = Lc::zero();
    for (u, c) in untruncated.iter().zip(&params.coeffs.v) {
        let coeff = ctx.from_bigint(&c.raw);
        for &(wi, co) in &u.0 {
            full.add_term(&ctx, Wire(wi), ctx.mul(co, coeff));
        }
    }
    let target = 2 * params.l;
    if sum_scale > target {
        let (w, _) = gadgets::truncate_to(b, &full, sum_scale - target)?;
        Ok(Lc::single(w, &ctx))
    } else {
        Ok(full.scaled(
            &ctx,
            ctx.from_biguint(&(BigUint::one() << (target - sum_scale))),
        ))
    }
}

/// A frozen iteration circuit plus its layout and, on the prover side, the
/// full assignment.
pub struct StepCircuit {
    pub circuit: Circuit,
    pub layout: PublicLayout,
    pub assignment: Option<Vec<Fe>>,
}

/// Build the iteration circuit for the algorithm in `params`. `data` with
/// identifiers present selects prover-side synthesis.
pub fn build_iteration(
    params: &IterParams,
    data: Option<(&IterationInputs, &[u8; 32], &[u8; 32])>,
) -> Result<StepCircuit> {
    params.validate()?;
    let label = format!("{:?}-iteration", params.algorithm);
    let mut b = Builder::new(params.field.clone(), &label, data.is_some())?;
    let publics = alloc_public(
        &mut b,
        params,
        data.map(|d| d.0),
        data.map(|d| d.1),
        data.map(|d| d.2),
    )?;

    // witness input state at its native scale
    let ctx = b.field().clone();
    let input_scale = match params.algorithm {
        ModelKind::Dtree => 0,
        _ => params.l,
    };
    let mut w_in = Vec::with_capacity(params.state_len);
    for i in 0..params.state_len {
        let v = match data {
            Some((d, _, _)) => Some(raw_to_field(&d.w_in[i], &ctx)?),
            None => None,
        };
        w_in.push(Lc::single(b.new_wire(Visibility::Witness, v)?, &ctx));
    }
    let s_prev_val = match data {
        Some((d, _, _)) => Some(raw_to_field(&d.s_prev, &ctx)?),
        None => None,
    };
    let s_prev = Lc::single(b.new_wire(Visibility::Witness, s_prev_val)?, &ctx);

    authenticity_subcircuit(&mut b, params, &s_prev, &w_in, input_scale)?;

    let untruncated = match params.algorithm {
        ModelKind::Linreg => steps::linreg(&mut b, params, &publics, &w_in)?,
        ModelKind::Logreg => steps::logreg(&mut b, params, &publics, &w_in)?,
        ModelKind::Svm => steps::svm(&mut b, params, &publics, &w_in)?,
        ModelKind::Kmeans => steps::kmeans(&mut b, params, &publics, &w_in)?,
        ModelKind::Dtree => steps::tree(&mut b, params, &w_in, data.map(|d| d.0))?,
        ModelKind::Nn => nn_step::nn(&mut b, params, &publics, &w_in)?,
    };

    let s_cur = committed_sum(&mut b, params, &untruncated)?;
    let chunk = publics.layout.digest_chunk_bits;
    identifier_subcircuit(
        &mut b,
        &s_prev,
        &publics.nonce_prev,
        &publics.id_prev,
        chunk,
    )?;
    identifier_subcircuit(&mut b, &s_cur, &publics.nonce_cur, &publics.id_cur, chunk)?;

    let layout = publics.layout;
    let (circuit, assignment) = b.freeze();
    Ok(StepCircuit {
        circuit,
        layout,
        assignment,
    })
}

/// Column counts of the Freivald challenge vectors, in the order the NN
/// iteration circuit consumes them (forward products, then per layer from
/// the top: the weight gradient and, below the top, the delta propagation).
pub fn freivald_lengths(shape: &[usize]) -> Vec<usize> {
    let layers = shape.len() - 1;
    let mut v: Vec<usize> = (0..layers).map(|li| shape[li + 1]).collect();
    for li in (0..layers).rev() {
        v.push(shape[li + 1]);
        if li > 0 {
            v.push(shape[li]);
        }
    }
    v
}

pub(crate) fn value_to_bigint(b: &Builder, lc: &Lc) -> Option<BigInt> {
    b.value_of(lc).map(|fe| b.field().to_bigint_centered(fe))
}

#[cfg(test)]
mod tests;
