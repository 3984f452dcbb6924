//! Hash-linked, append-only provenance chain.
//!
//! The kernel appends one [`ProvenanceRecord`] per decision while it executes,
//! so the chain is the execution history itself rather than a log kept beside
//! it. Each record commits to its predecessor:
//!
//! ```text
//! this_hash = SHA-256(prev_hash || canonical_json(record without this_hash))
//! ```
//!
//! The genesis record links to 32 zero bytes.
//!
//! Chains serialize as JSON Lines. Each line holds the fields in the fixed order
//! `seq, directive, decision, exec_status, result_digest, prev_hash, this_hash`,
//! and hashes are lowercase hex. Import accepts only byte-exact canonical
//! lines, so any edit to an exported file is detected.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::directive::{Directive, Scalar};
use crate::kernel::Decision;

/// 32-byte SHA-256 digest, serialized as 64 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Hash32(pub [u8; 32]);

impl Hash32 {
    pub const ZERO: Hash32 = Hash32([0; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Strict parse: exactly 64 lowercase hex digits.
    pub fn from_hex(s: &str) -> Result<Self, String> {
        if s.len() != 64 {
            return Err(format!("expected 64 hex digits, got {}", s.len()));
        }
        if let Some(c) = s.chars().find(|c| !matches!(c, '0'..='9' | 'a'..='f')) {
            return Err(format!("invalid hex digit {c:?}"));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| e.to_string())?;
        Ok(Hash32(out))
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 32]
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash32({})", self.to_hex())
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Hash32 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut buf = [0u8; 64];
        hex::encode_to_slice(self.0, &mut buf).expect("64 bytes hold 32 hex-encoded bytes");
        s.serialize_str(std::str::from_utf8(&buf).expect("hex is ASCII"))
    }
}

impl<'de> Deserialize<'de> for Hash32 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        Hash32::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

fn write_hex(out: &mut Vec<u8>, h: &Hash32) {
    let mut buf = [0u8; 64];
    hex::encode_to_slice(h.0, &mut buf).expect("64 bytes hold 32 hex-encoded bytes");
    out.push(b'"');
    out.extend_from_slice(&buf);
    out.push(b'"');
}

/// Digest of a handler result: SHA-256 over the result's canonical JSON.
pub fn result_digest(result: &Scalar) -> Hash32 {
    Hash32(Sha256::digest(crate::canonical::to_vec(result)).into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    /// Allowed and the handler ran to completion.
    Executed,
    /// Denied; no handler was invoked.
    Skipped,
    /// Allowed by policy, but no handler provides the capability.
    HandlerMissing,
    /// Allowed, the handler ran and rejected its parameters. No mutation.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvenanceRecord {
    pub seq: u64,
    pub directive: Directive,
    pub decision: Decision,
    pub exec_status: ExecStatus,
    pub result_digest: Hash32,
    pub prev_hash: Hash32,
    pub this_hash: Hash32,
}

/// Hash preimage: every record field except `this_hash`, keys in sorted order.
#[cfg(test)]
#[derive(Serialize)]
struct RecordBody<'a> {
    decision: &'a Decision,
    directive: &'a Directive,
    exec_status: ExecStatus,
    prev_hash: &'a Hash32,
    result_digest: &'a Hash32,
    seq: u64,
}

impl ProvenanceRecord {
    #[cfg(test)]
    fn body(&self) -> RecordBody<'_> {
        RecordBody {
            decision: &self.decision,
            directive: &self.directive,
            exec_status: self.exec_status,
            prev_hash: &self.prev_hash,
            result_digest: &self.result_digest,
            seq: self.seq,
        }
    }

    /// Canonical bytes of the record minus `this_hash`.
    pub fn preimage_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(512);
        self.write_preimage(&mut out);
        out
    }

    fn write_preimage(&self, out: &mut Vec<u8>) {
        use crate::directive::write_json;
        out.extend_from_slice(b"{\"decision\":");
        write_json(out, &self.decision);
        out.extend_from_slice(b",\"directive\":");
        self.directive.write_canonical(out);
        out.extend_from_slice(b",\"exec_status\":");
        write_json(out, &self.exec_status);
        out.extend_from_slice(b",\"prev_hash\":");
        write_hex(out, &self.prev_hash);
        out.extend_from_slice(b",\"result_digest\":");
        write_hex(out, &self.result_digest);
        out.extend_from_slice(b",\"seq\":");
        write_json(out, &self.seq);
        out.push(b'}');
    }

    pub fn compute_hash(&self) -> Hash32 {
        let mut buf = Vec::with_capacity(544);
        buf.extend_from_slice(&self.prev_hash.0);
        self.write_preimage(&mut buf);
        Hash32(Sha256::digest(&buf).into())
    }

    /// One JSONL line, without the trailing newline.
    pub fn to_line(&self) -> String {
        crate::canonical::to_string(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub valid: bool,
    pub first_bad_index: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("chain fails verification at index {0}")]
    Broken(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImportError {
    /// The line is not JSON.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    /// The line is JSON but not a well-formed record.
    #[error("line {line}: invalid record: {message}")]
    InvalidRecord { line: usize, message: String },
    #[error("line {line}: record is not in canonical form")]
    NonCanonical { line: usize },
    #[error("chain fails verification at index {index}")]
    Verification { index: u64 },
}

impl ImportError {
    /// Zero-based index of the first record the error is attributed to.
    pub fn record_index(&self) -> u64 {
        match self {
            ImportError::Parse { line, .. }
            | ImportError::InvalidRecord { line, .. }
            | ImportError::NonCanonical { line } => *line as u64 - 1,
            ImportError::Verification { index } => *index,
        }
    }
}

/// Append-only sequence of provenance records.
///
/// There is no operation that removes, replaces or reorders records.
#[derive(Debug, Clone, Default)]
pub struct Chain {
    records: Vec<ProvenanceRecord>,
    // Prefix length already checked; appends only re-check what lies beyond.
    verified: usize,
}

impl PartialEq for Chain {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl Eq for Chain {}

fn check_record(records: &[ProvenanceRecord], index: usize) -> bool {
    let r = &records[index];
    let expected_prev = match index {
        0 => Hash32::ZERO,
        i => records[i - 1].this_hash,
    };
    r.seq == index as u64 && r.prev_hash == expected_prev && r.compute_hash() == r.this_hash
}

impl Chain {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps records without checking them. `verify` reports any damage and
    /// `append` refuses to extend a damaged chain.
    pub fn from_records_unchecked(records: Vec<ProvenanceRecord>) -> Self {
        Chain {
            records,
            verified: 0,
        }
    }

    pub fn from_records(records: Vec<ProvenanceRecord>) -> Result<Self, ChainError> {
        let mut chain = Self::from_records_unchecked(records);
        chain.ensure_verified()?;
        Ok(chain)
    }

    pub fn records(&self) -> &[ProvenanceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&ProvenanceRecord> {
        self.records.last()
    }

    pub fn head_hash(&self) -> Hash32 {
        self.records.last().map_or(Hash32::ZERO, |r| r.this_hash)
    }

    pub fn verify(&self) -> VerificationReport {
        let first_bad = (0..self.records.len()).find(|&i| !check_record(&self.records, i));
        VerificationReport {
            valid: first_bad.is_none(),
            first_bad_index: first_bad.map(|i| i as u64),
        }
    }

    fn ensure_verified(&mut self) -> Result<(), ChainError> {
        while self.verified < self.records.len() {
            if !check_record(&self.records, self.verified) {
                return Err(ChainError::Broken(self.verified as u64));
            }
            self.verified += 1;
        }
        Ok(())
    }

    /// Links a new record to the current head. Refuses if the chain is damaged.
    pub fn append(
        &mut self,
        directive: Directive,
        decision: Decision,
        exec_status: ExecStatus,
        result_digest: Hash32,
    ) -> Result<&ProvenanceRecord, ChainError> {
        self.ensure_verified()?;
        let mut record = ProvenanceRecord {
            seq: self.records.len() as u64,
            directive,
            decision,
            exec_status,
            result_digest,
            prev_hash: self.head_hash(),
            this_hash: Hash32::ZERO,
        };
        record.this_hash = record.compute_hash();
        self.records.push(record);
        self.verified = self.records.len();
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn export<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn export_to_vec(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.export(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Parses JSON Lines and verifies the result. Line numbers are 1-based.
    pub fn import(bytes: &[u8]) -> Result<Chain, ImportError> {
        let mut records = Vec::new();
        let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
        if !body.is_empty() {
            for (i, line) in body.split(|&b| b == b'\n').enumerate() {
                let line_no = i + 1;
                let record: ProvenanceRecord = serde_json::from_slice(line).map_err(|e| {
                    let message = e.to_string();
                    if e.is_data() {
                        ImportError::InvalidRecord {
                            line: line_no,
                            message,
                        }
                    } else {
                        ImportError::Parse {
                            line: line_no,
                            message,
                        }
                    }
                })?;
                if crate::canonical::to_vec(&record) != line {
                    return Err(ImportError::NonCanonical { line: line_no });
                }
                records.push(record);
            }
        }
        Chain::from_records(records)
            .map_err(|ChainError::Broken(index)| ImportError::Verification { index })
    }
}
