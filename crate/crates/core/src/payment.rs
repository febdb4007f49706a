//! Simulated hash-locked fair exchange: symmetric encryption of the
//! delivery, escrow posting, preimage redemption, timeout refund. The clock
//! is a logical tick so timeout paths are deterministic.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscrowState {
    Open,
    Redeemed,
    Refunded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscrowTx {
    pub id: u64,
    #[serde(with = "hex::serde")]
    pub hash_lock: [u8; 32],
    pub fee: u64,
    pub timeout: u64,
    pub state: EscrowState,
    pub payer: String,
    pub payee: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub accounts: std::collections::BTreeMap<String, u64>,
    pub txs: Vec<EscrowTx>,
    pub clock: u64,
}

impl Ledger {
    pub fn with_accounts(accounts: &[(&str, u64)]) -> Ledger {
        Ledger {
            accounts: accounts.iter().map(|(n, b)| (n.to_string(), *b)).collect(),
            txs: Vec::new(),
            clock: 0,
        }
    }

    pub fn balance(&self, account: &str) -> u64 {
        self.accounts.get(account).copied().unwrap_or(0)
    }

    /// Total balance plus open escrow; conserved by every operation.
    pub fn total_value(&self) -> u64 {
        let held: u64 = self
            .txs
            .iter()
            .filter(|t| t.state == EscrowState::Open)
            .map(|t| t.fee)
            .sum();
        self.accounts.values().sum::<u64>() + held
    }

    pub fn tick(&mut self, by: u64) {
        self.clock += by;
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Ledger> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Keystream cipher: block_i = SHA-256(k || i as 8-byte LE) XORed with the
/// plaintext; decryption is the same operation.
pub fn encrypt_delivery(key: &[u8; 32], data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len());
    let mut block = 0u64;
    let mut stream = [0u8; 32];
    for (i, byte) in data.iter().enumerate() {
        if i % 32 == 0 {
            let mut h = Sha256::new();
            h.update(key);
            h.update(block.to_le_bytes());
            stream = h.finalize().into();
            block += 1;
        }
        out.push(byte ^ stream[i % 32]);
    }
    out
}

pub fn decrypt_delivery(key: &[u8; 32], data: &[u8]) -> Vec<u8> {
    encrypt_delivery(key, data)
}

pub fn key_digest(key: &[u8; 32]) -> [u8; 32] {
    Sha256::digest(key).into()
}

/// Move the fee into escrow, locked on `hash_lock` until `timeout`.
pub fn post_escrow(
    ledger: &mut Ledger,
    payer: &str,
    payee: &str,
    hash_lock: [u8; 32],
    fee: u64,
    timeout: u64,
) -> Result<u64> {
    let balance = ledger.balance(payer);
    if balance < fee {
        return Err(Error::InsufficientBalance {
            account: payer.to_string(),
            balance,
            needed: fee,
        });
    }
    *ledger.accounts.get_mut(payer).unwrap() -= fee;
    let id = ledger.txs.len() as u64;
    ledger.txs.push(EscrowTx {
        id,
        hash_lock,
        fee,
        timeout,
        state: EscrowState::Open,
        payer: payer.to_string(),
        payee: payee.to_string(),
    });
    Ok(id)
}

/// Redeem with a preimage; true iff SHA-256(preimage) matches the lock.
/// A wrong preimage leaves the transaction open and the ledger unchanged.
pub fn redeem(ledger: &mut Ledger, tx_id: u64, preimage: &[u8]) -> Result<bool> {
    let clock = ledger.clock;
    let tx = ledger
        .txs
        .get_mut(tx_id as usize)
        .ok_or_else(|| Error::Malformed(format!("no escrow {tx_id}")))?;
    if tx.state != EscrowState::Open {
        return Err(Error::EscrowClosed);
    }
    if clock >= tx.timeout {
        return Err(Error::EscrowClosed);
    }
    let digest: [u8; 32] = Sha256::digest(preimage).into();
    if digest != tx.hash_lock {
        return Ok(false);
    }
    tx.state = EscrowState::Redeemed;
    let (payee, fee) = (tx.payee.clone(), tx.fee);
    *ledger.accounts.entry(payee).or_insert(0) += fee;
    Ok(true)
}

/// Return the fee to the payer once the timeout has passed.
pub fn refund(ledger: &mut Ledger, tx_id: u64) -> Result<bool> {
    let clock = ledger.clock;
    let tx = ledger
        .txs
        .get_mut(tx_id as usize)
        .ok_or_else(|| Error::Malformed(format!("no escrow {tx_id}")))?;
    if tx.state != EscrowState::Open {
        return Err(Error::EscrowClosed);
    }
    if clock < tx.timeout {
        return Err(Error::EscrowNotExpired);
    }
    tx.state = EscrowState::Refunded;
    let (payer, fee) = (tx.payer.clone(), tx.fee);
    *ledger.accounts.entry(payer).or_insert(0) += fee;
    Ok(true)
}
