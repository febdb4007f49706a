//! Pinned deterministic byte stream shared by both parties.
//!
//! block_j = SHA-256("VERIML-PRNG" || domain-tag || seed as 8-byte LE || j as 8-byte LE),
//! integers drawn by rejection sampling so every consumer reproduces the
//! exact same values from (seed, domain) alone.

use num_bigint::BigUint;
use num_traits::Zero;
use sha2::{Digest, Sha256};

const LABEL: &[u8] = b"VERIML-PRNG";

#[derive(Debug, Clone)]
pub struct PinnedPrng {
    seed: u64,
    domain: Vec<u8>,
    next_block: u64,
    buf: Vec<u8>,
    pos: usize,
}

impl PinnedPrng {
    pub fn new(seed: u64, domain: &[u8]) -> Self {
        PinnedPrng {
            seed,
            domain: domain.to_vec(),
            next_block: 0,
            buf: Vec::new(),
            pos: 0,
        }
    }

    /// Domain built from a tag plus context bytes (e.g. an epoch counter).
    pub fn with_context(seed: u64, tag: &str, context: &[u8]) -> Self {
        let mut domain = tag.as_bytes().to_vec();
        domain.extend_from_slice(context);
        PinnedPrng::new(seed, &domain)
    }

    /// The j-th raw 32-byte block of the stream, independent of cursor state.
    pub fn block(seed: u64, domain: &[u8], j: u64) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(LABEL);
        h.update(domain);
        h.update(seed.to_le_bytes());
        h.update(j.to_le_bytes());
        h.finalize().into()
    }

    fn refill(&mut self) {
        self.buf = Self::block(self.seed, &self.domain, self.next_block).to_vec();
        self.next_block += 1;
        self.pos = 0;
    }

    pub fn fill_bytes(&mut self, out: &mut [u8]) {
        for b in out.iter_mut() {
            if self.pos >= self.buf.len() {
                self.refill();
            }
            *b = self.buf[self.pos];
            self.pos += 1;
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut b = [0u8; 8];
        self.fill_bytes(&mut b);
        u64::from_le_bytes(b)
    }

    /// Uniform in [0, bound) by rejection sampling, bound > 0.
    pub fn next_below_u64(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        if bound == 1 {
            return 0;
        }
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }

    /// Uniform BigUint in [0, bound) by rejection over ceil(bits/8) bytes.
    pub fn next_below(&mut self, bound: &BigUint) -> BigUint {
        assert!(!bound.is_zero());
        let bits = bound.bits();
        let nbytes = bits.div_ceil(8) as usize;
        let top_mask: u8 = if bits % 8 == 0 {
            0xff
        } else {
            (1u8 << (bits % 8)) - 1
        };
        let mut bytes = vec![0u8; nbytes];
        loop {
            self.fill_bytes(&mut bytes);
            *bytes.last_mut().unwrap() &= top_mask;
            let v = BigUint::from_bytes_le(&bytes);
            if &v < bound {
                return v;
            }
        }
    }

    /// Uniform f64 in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller.
    pub fn next_gaussian(&mut self) -> f64 {
        loop {
            let u1 = self.next_f64();
            if u1 > 1e-300 {
                let u2 = self.next_f64();
                return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below_u64(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Sample `count` distinct values from [0, n), sorted ascending.
    pub fn sample_distinct(&mut self, n: u64, count: usize) -> Vec<u64> {
        assert!(count as u64 <= n);
        // partial Fisher-Yates over a sparse map keeps this O(count) in memory
        let mut swapped = std::collections::HashMap::new();
        let mut picked = Vec::with_capacity(count);
        for i in 0..count as u64 {
            let j = i + self.next_below_u64(n - i);
            let vj = *swapped.get(&j).unwrap_or(&j);
            let vi = *swapped.get(&i).unwrap_or(&i);
            swapped.insert(j, vi);
            picked.push(vj);
        }
        picked.sort_unstable();
        picked
    }
}
