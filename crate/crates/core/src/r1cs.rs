//! Rank-1 constraint system over a configurable prime field.
//!
//! Wire 0 is the constant 1; public wires form a contiguous prefix after it.
//! The builder optionally carries an assignment so the prover synthesizes
//! values while the verifier builds the identical structure valueless; both
//! sides freeze to byte-identical circuits and therefore identical digests.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{Fe, FieldConfig, FieldCtx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Wire(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    ConstantOne,
    PublicInput,
    PublicOutput,
    Witness,
}

impl Visibility {
    fn tag(self) -> u8 {
        match self {
            Visibility::ConstantOne => 0,
            Visibility::PublicInput => 1,
            Visibility::PublicOutput => 2,
            Visibility::Witness => 3,
        }
    }

    pub fn is_public(self) -> bool {
        !matches!(self, Visibility::Witness)
    }
}

/// Sparse linear combination, terms sorted by wire index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lc(pub Vec<(u32, Fe)>);

impl Lc {
    pub fn zero() -> Self {
        Lc(Vec::new())
    }

    pub fn constant(v: Fe) -> Self {
        if v.is_zero() {
            Lc::zero()
        } else {
            Lc(vec![(0, v)])
        }
    }

    pub fn wire(w: Wire, coeff: Fe) -> Self {
        if coeff.is_zero() {
            Lc::zero()
        } else {
            Lc(vec![(w.0, coeff)])
        }
    }

    pub fn single(w: Wire, ctx: &FieldCtx) -> Self {
        Lc(vec![(w.0, ctx.one())])
    }

    pub fn add_term(&mut self, ctx: &FieldCtx, w: Wire, coeff: Fe) {
        match self.0.binary_search_by_key(&w.0, |t| t.0) {
            Ok(i) => {
                let merged = ctx.add(self.0[i].1, coeff);
                if merged.is_zero() {
                    self.0.remove(i);
                } else {
                    self.0[i].1 = merged;
                }
            }
            Err(i) => {
                if !coeff.is_zero() {
                    self.0.insert(i, (w.0, coeff));
                }
            }
        }
    }

    /// Bulk constructor: sort once, merge duplicates.
    pub fn from_terms(ctx: &FieldCtx, mut terms: Vec<(u32, Fe)>) -> Lc {
        terms.sort_unstable_by_key(|t| t.0);
        let mut out: Vec<(u32, Fe)> = Vec::with_capacity(terms.len());
        for (w, c) in terms {
            match out.last_mut() {
                Some(last) if last.0 == w => {
                    last.1 = ctx.add(last.1, c);
                }
                _ => out.push((w, c)),
            }
        }
        out.retain(|t| !t.1.is_zero());
        Lc(out)
    }

    pub fn add_lc(&mut self, ctx: &FieldCtx, other: &Lc) {
        for &(w, c) in &other.0 {
            self.add_term(ctx, Wire(w), c);
        }
    }

    pub fn scaled(&self, ctx: &FieldCtx, k: Fe) -> Lc {
        if k.is_zero() {
            return Lc::zero();
        }
        Lc(self.0.iter().map(|&(w, c)| (w, ctx.mul(c, k))).collect())
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&(w, _)| w == 0)
    }

    pub fn max_wire(&self) -> u32 {
        self.0.last().map(|t| t.0).unwrap_or(0)
    }

    pub fn eval(&self, ctx: &FieldCtx, assignment: &[Fe]) -> Fe {
        let one = ctx.one();
        let mut acc = Fe::ZERO;
        for &(w, c) in &self.0 {
            let v = assignment[w as usize];
            let term = if c == one { v } else { ctx.mul(c, v) };
            acc = ctx.add(acc, term);
        }
        acc
    }
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub a: Lc,
    pub b: Lc,
    pub c: Lc,
    pub label: &'static str,
}

/// Frozen, immutable constraint system.
#[derive(Debug, Clone)]
pub struct Circuit {
    pub field: FieldCtx,
    pub config: FieldConfig,
    pub label: String,
    wires: Vec<Visibility>,
    constraints: Vec<Constraint>,
    digest_cache: std::sync::OnceLock<[u8; 32]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireCounts {
    pub constraints: usize,
    pub witness_wires: usize,
    pub public_wires: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOutcome {
    pub satisfied: bool,
    pub first_violation: Option<usize>,
}

impl Circuit {
    pub fn wires(&self) -> &[Visibility] {
        &self.wires
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Number of public wires including the constant-one wire.
    pub fn num_public(&self) -> usize {
        self.wires.iter().filter(|v| v.is_public()).count()
    }

    pub fn count(&self) -> WireCounts {
        let public_wires = self.num_public();
        WireCounts {
            constraints: self.constraints.len(),
            witness_wires: self.wires.len() - public_wires,
            public_wires,
        }
    }

    /// Check every constraint; deterministic in (circuit, assignment).
    pub fn evaluate(&self, assignment: &[Fe]) -> Result<EvalOutcome> {
        if assignment.len() != self.wires.len() {
            return Err(Error::LayoutMismatch {
                expected: self.wires.len(),
                got: assignment.len(),
            });
        }
        if assignment[0] != self.field.one() {
            return Err(Error::MissingAssignment(0));
        }
        for (i, cons) in self.constraints.iter().enumerate() {
            let a = cons.a.eval(&self.field, assignment);
            let b = cons.b.eval(&self.field, assignment);
            let c = cons.c.eval(&self.field, assignment);
            if self.field.mul(a, b) != c {
                return Ok(EvalOutcome {
                    satisfied: false,
                    first_violation: Some(i),
                });
            }
        }
        Ok(EvalOutcome {
            satisfied: true,
            first_violation: None,
        })
    }

    /// SHA-256 over the canonical serialization: field modulus, wire table,
    /// constraints in order, integers little-endian and length-prefixed.
    pub fn digest(&self) -> [u8; 32] {
        *self.digest_cache.get_or_init(|| self.compute_digest())
    }

    fn compute_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"veriml-circuit-v1");
        let modulus = self.field.modulus().to_bytes_le();
        h.update((modulus.len() as u64).to_le_bytes());
        h.update(&modulus);
        h.update((self.wires.len() as u64).to_le_bytes());
        for v in &self.wires {
            h.update([v.tag()]);
        }
        h.update((self.constraints.len() as u64).to_le_bytes());
        let emit_lc = |h: &mut Sha256, lc: &Lc| {
            h.update((lc.0.len() as u64).to_le_bytes());
            for &(w, c) in &lc.0 {
                h.update(w.to_le_bytes());
                h.update(self.field.to_bytes_le(c));
            }
        };
        for cons in &self.constraints {
            emit_lc(&mut h, &cons.a);
            emit_lc(&mut h, &cons.b);
            emit_lc(&mut h, &cons.c);
        }
        h.finalize().into()
    }
}

/// Single-owner circuit builder; freezing yields the immutable circuit.
pub struct Builder {
    field: FieldCtx,
    config: FieldConfig,
    label: String,
    wires: Vec<Visibility>,
    constraints: Vec<Constraint>,
    assignment: Option<Vec<Fe>>,
    saw_witness: bool,
}

impl Builder {
    /// `with_values` selects prover-side synthesis (wire values supplied and
    /// computed) versus verifier-side structure-only building.
    pub fn new(config: FieldConfig, label: &str, with_values: bool) -> Result<Self> {
        let field = config.ctx()?;
        let assignment = with_values.then(|| vec![field.one()]);
        Ok(Builder {
            field,
            config,
            label: label.to_string(),
            wires: vec![Visibility::ConstantOne],
            constraints: Vec::new(),
            assignment,
            saw_witness: false,
        })
    }

    pub fn field(&self) -> &FieldCtx {
        &self.field
    }

    pub fn has_values(&self) -> bool {
        self.assignment.is_some()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_wires(&self) -> usize {
        self.wires.len()
    }

    /// Freezing consumes the builder, so allocation after freeze is
    /// unrepresentable rather than a runtime error.
    pub fn new_wire(&mut self, vis: Visibility, value: Option<Fe>) -> Result<Wire> {
        if vis == Visibility::ConstantOne {
            return Err(Error::TaskConfig("wire 0 is reserved".into()));
        }
        if vis.is_public() && self.saw_witness {
            return Err(Error::PublicAfterWitness);
        }
        if vis == Visibility::Witness {
            self.saw_witness = true;
        }
        let idx = self.wires.len() as u32;
        self.wires.push(vis);
        if let Some(ass) = &mut self.assignment {
            ass.push(value.ok_or(Error::MissingAssignment(idx))?);
        }
        Ok(Wire(idx))
    }

    /// Evaluate an LC under the current partial assignment (prover side only).
    pub fn value_of(&self, lc: &Lc) -> Option<Fe> {
        self.assignment.as_ref().map(|a| lc.eval(&self.field, a))
    }

    pub fn wire_value(&self, w: Wire) -> Option<Fe> {
        self.assignment.as_ref().map(|a| a[w.0 as usize])
    }

    /// Enforce <a,z> * <b,z> = <c,z>.
    pub fn enforce(&mut self, a: Lc, b: Lc, c: Lc, label: &'static str) -> Result<()> {
        let max = a.max_wire().max(b.max_wire()).max(c.max_wire());
        if max as usize >= self.wires.len() {
            return Err(Error::UnknownWire(max));
        }
        self.constraints.push(Constraint { a, b, c, label });
        Ok(())
    }

    /// Enforce lc == 0 (as lc * 1 = 0).
    pub fn enforce_zero(&mut self, lc: Lc, label: &'static str) -> Result<()> {
        let one = Lc::constant(self.field.one());
        self.enforce(lc, one, Lc::zero(), label)
    }

    /// Allocate a witness wire bound to equal `lc` (one linear constraint).
    pub fn bind_witness(&mut self, lc: &Lc, label: &'static str) -> Result<Wire> {
        let v = self.value_of(lc);
        let w = self.new_wire(Visibility::Witness, v)?;
        let mut diff = lc.clone();
        diff.add_term(&self.field, w, self.field.neg(self.field.one()));
        self.enforce_zero(diff, label)?;
        Ok(w)
    }

    /// Allocate a witness wire carrying a * b with one multiplication constraint.
    pub fn mul(&mut self, a: &Lc, b: &Lc, label: &'static str) -> Result<Wire> {
        let v = match (self.value_of(a), self.value_of(b)) {
            (Some(x), Some(y)) => Some(self.field.mul(x, y)),
            _ => None,
        };
        let w = self.new_wire(Visibility::Witness, v)?;
        self.enforce(a.clone(), b.clone(), Lc::single(w, &self.field), label)?;
        Ok(w)
    }

    pub fn freeze(self) -> (Circuit, Option<Vec<Fe>>) {
        (
            Circuit {
                field: self.field,
                config: self.config,
                label: self.label,
                wires: self.wires,
                constraints: self.constraints,
                digest_cache: std::sync::OnceLock::new(),
            },
            self.assignment,
        )
    }
}
