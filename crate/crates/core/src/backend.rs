//! KeyGen/Prove/Verify behind a backend interface, with a transparent
//! re-execution backend as the standard implementation: the proof is the
//! witness itself, giving exact (non-succinct, non-zero-knowledge)
//! soundness for desk-scale verification. Succinct backends plug in behind
//! the same three calls.

use crate::error::{Error, Result};
use crate::field::Fe;
use crate::r1cs::Circuit;

pub const RE_EXECUTION_TAG: u8 = 1;
const PROOF_MAGIC: &[u8; 4] = b"VMLP";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalKey {
    pub circuit_digest: [u8; 32],
    pub backend_tag: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifKey {
    pub circuit_digest: [u8; 32],
    pub backend_tag: u8,
    /// Number of public wires including the constant-one wire.
    pub public_wires: usize,
    pub total_wires: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proof {
    pub backend_tag: u8,
    pub circuit_digest: [u8; 32],
    /// Re-execution payload: the witness assignment (non-public wires).
    pub payload: Vec<Fe>,
}

pub trait ProofBackend {
    fn keygen(&self, circuit: &Circuit, security_lambda: u32) -> Result<(EvalKey, VerifKey)>;
    fn prove(&self, ek: &EvalKey, circuit: &Circuit, assignment: &[Fe]) -> Result<Proof>;
    fn verify(
        &self,
        vk: &VerifKey,
        circuit: &Circuit,
        public_io: &[Fe],
        proof: &Proof,
    ) -> Result<bool>;
}

/// The transparent backend: verification re-checks every constraint against
/// the revealed witness. The security parameter is recorded but unused.
#[derive(Debug, Clone, Default)]
pub struct ReExecutionBackend;

impl ProofBackend for ReExecutionBackend {
    fn keygen(&self, circuit: &Circuit, _security_lambda: u32) -> Result<(EvalKey, VerifKey)> {
        let digest = circuit.digest();
        Ok((
            EvalKey {
                circuit_digest: digest,
                backend_tag: RE_EXECUTION_TAG,
            },
            VerifKey {
                circuit_digest: digest,
                backend_tag: RE_EXECUTION_TAG,
                public_wires: circuit.num_public(),
                total_wires: circuit.wires().len(),
            },
        ))
    }

    fn prove(&self, ek: &EvalKey, circuit: &Circuit, assignment: &[Fe]) -> Result<Proof> {
        let digest = circuit.digest();
        if digest != ek.circuit_digest {
            return Err(Error::DigestMismatch);
        }
        let outcome = circuit.evaluate(assignment)?;
        if !outcome.satisfied {
            let index = outcome.first_violation.unwrap_or(0);
            return Err(Error::Unsatisfied {
                index,
                label: Some(circuit.constraints()[index].label.to_string()),
            });
        }
        let public = circuit.num_public();
        Ok(Proof {
            backend_tag: RE_EXECUTION_TAG,
            circuit_digest: digest,
            payload: assignment[public..].to_vec(),
        })
    }

    fn verify(
        &self,
        vk: &VerifKey,
        circuit: &Circuit,
        public_io: &[Fe],
        proof: &Proof,
    ) -> Result<bool> {
        if proof.backend_tag != vk.backend_tag {
            return Err(Error::Malformed("backend tag mismatch".into()));
        }
        if proof.circuit_digest != vk.circuit_digest || circuit.digest() != vk.circuit_digest {
            return Err(Error::DigestMismatch);
        }
        // public_io excludes the constant-one wire
        if public_io.len() != vk.public_wires - 1 {
            return Err(Error::LayoutMismatch {
                expected: vk.public_wires - 1,
                got: public_io.len(),
            });
        }
        if proof.payload.len() != vk.total_wires - vk.public_wires {
            return Err(Error::LayoutMismatch {
                expected: vk.total_wires - vk.public_wires,
                got: proof.payload.len(),
            });
        }
        let mut assignment = Vec::with_capacity(vk.total_wires);
        assignment.push(circuit.field.one());
        assignment.extend_from_slice(public_io);
        assignment.extend_from_slice(&proof.payload);
        Ok(circuit.evaluate(&assignment)?.satisfied)
    }
}

impl Proof {
    /// Binary format: magic, backend tag, circuit digest, little-endian
    /// length-prefixed field elements.
    pub fn to_bytes(&self, circuit: &Circuit) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 32 * self.payload.len());
        out.extend_from_slice(PROOF_MAGIC);
        out.push(self.backend_tag);
        out.extend_from_slice(&self.circuit_digest);
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        for fe in &self.payload {
            out.extend_from_slice(&circuit.field.to_bytes_le(*fe));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], circuit: &Circuit) -> Result<Proof> {
        if bytes.len() < 45 || &bytes[0..4] != PROOF_MAGIC {
            return Err(Error::Malformed("bad proof header".into()));
        }
        let backend_tag = bytes[4];
        let mut digest = [0u8; 32];
        digest.copy_from_slice(&bytes[5..37]);
        let count = u64::from_le_bytes(bytes[37..45].try_into().unwrap()) as usize;
        if bytes.len() != 45 + 32 * count {
            return Err(Error::Malformed("proof length mismatch".into()));
        }
        let mut payload = Vec::with_capacity(count);
        for i in 0..count {
            let chunk = &bytes[45 + 32 * i..45 + 32 * (i + 1)];
            let v = num_bigint::BigUint::from_bytes_le(chunk);
            if &v >= circuit.field.modulus() {
                return Err(Error::Malformed("field element out of range".into()));
            }
            payload.push(circuit.field.from_biguint(&v));
        }
        Ok(Proof {
            backend_tag,
            circuit_digest: digest,
            payload,
        })
    }
}
