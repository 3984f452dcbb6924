//! Directives: inert descriptions of intended effects.
//!
//! A [`Directive`] is the only thing the computation layer can produce that
//! has any bearing on the world. Building one never touches a world; only the
//! governance boundary ([`crate::kernel::Kernel`]) turns an allowed directive
//! into an effect.
//!
//! Directives have a canonical JSON encoding (sorted keys, no whitespace) that
//! is used verbatim inside provenance records and as the hashing preimage.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DirectiveError {
    #[error("effect kind must not be empty")]
    EmptyKind,
    #[error("invalid character {ch:?} at byte {position} in effect kind {kind:?}")]
    InvalidChar {
        kind: String,
        ch: char,
        position: usize,
    },
    #[error("effect kind {0:?} has an empty segment")]
    EmptySegment(String),
    #[error("required capability {capability} does not match kind {kind}")]
    CapabilityMismatch { kind: String, capability: String },
    #[error("malformed directive: {0}")]
    Malformed(String),
}

/// Dot-separated effect identifier such as `email.send`.
///
/// Grammar: `[a-z0-9_]+(\.[a-z0-9_]+)*`. Equality is exact string equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String")]
pub struct EffectKind(#[serde(serialize_with = "serialize_str")] String);

fn serialize_str<S: serde::Serializer>(s: &str, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_str(s)
}

impl EffectKind {
    pub fn new(name: impl Into<String>) -> Result<Self, DirectiveError> {
        let name = name.into();
        validate_kind(&name)?;
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn validate_kind(name: &str) -> Result<(), DirectiveError> {
    if name.is_empty() {
        return Err(DirectiveError::EmptyKind);
    }
    for (position, ch) in name.char_indices() {
        let ok = ch.is_ascii_lowercase() || ch.is_ascii_digit() || ch == '_' || ch == '.';
        if !ok {
            return Err(DirectiveError::InvalidChar {
                kind: name.to_owned(),
                ch,
                position,
            });
        }
    }
    if name.split('.').any(str::is_empty) {
        return Err(DirectiveError::EmptySegment(name.to_owned()));
    }
    Ok(())
}

impl TryFrom<String> for EffectKind {
    type Error = DirectiveError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<EffectKind> for String {
    fn from(kind: EffectKind) -> Self {
        kind.0
    }
}

impl FromStr for EffectKind {
    type Err = DirectiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Trust rank of a directive's issuer. Ordered by ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrustLevel {
    Untrusted = 0,
    Agent = 1,
    Operator = 2,
    System = 3,
}

impl TrustLevel {
    pub const ALL: [TrustLevel; 4] = [
        TrustLevel::Untrusted,
        TrustLevel::Agent,
        TrustLevel::Operator,
        TrustLevel::System,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }
}

/// Lifecycle stage a directive declares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Plan,
    Execute,
    Finalize,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Plan, Phase::Execute, Phase::Finalize];
}

/// Flat parameter value. Nested payloads are not representable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    Str(String),
}

impl Scalar {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Int(i) => write!(f, "{i}"),
            Scalar::Str(s) => f.write_str(s),
        }
    }
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Str(s.to_owned())
    }
}

impl From<String> for Scalar {
    fn from(s: String) -> Self {
        Scalar::Str(s)
    }
}

impl From<i64> for Scalar {
    fn from(i: i64) -> Self {
        Scalar::Int(i)
    }
}

impl From<bool> for Scalar {
    fn from(b: bool) -> Self {
        Scalar::Bool(b)
    }
}

/// Parameter map. `BTreeMap` keeps keys unique and lexicographically sorted.
pub type Params = BTreeMap<String, Scalar>;

/// One intended effect, described as data.
///
/// Field declaration order is alphabetical so the derived serializer already
/// emits canonical key order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDirective")]
pub struct Directive {
    id: u64,
    issuer: String,
    kind: EffectKind,
    params: Params,
    phase: Phase,
    required_capability: EffectKind,
    trust: TrustLevel,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDirective {
    id: u64,
    issuer: String,
    kind: EffectKind,
    params: Params,
    phase: Phase,
    required_capability: EffectKind,
    trust: TrustLevel,
}

impl TryFrom<RawDirective> for Directive {
    type Error = DirectiveError;

    fn try_from(raw: RawDirective) -> Result<Self, Self::Error> {
        if raw.kind != raw.required_capability {
            return Err(DirectiveError::CapabilityMismatch {
                kind: raw.kind.0,
                capability: raw.required_capability.0,
            });
        }
        Ok(Directive {
            id: raw.id,
            issuer: raw.issuer,
            kind: raw.kind,
            params: raw.params,
            phase: raw.phase,
            required_capability: raw.required_capability,
            trust: raw.trust,
        })
    }
}

impl Directive {
    pub fn new(
        kind: EffectKind,
        params: Params,
        issuer: impl Into<String>,
        trust: TrustLevel,
        phase: Phase,
        id: u64,
    ) -> Self {
        Directive {
            id,
            issuer: issuer.into(),
            required_capability: kind.clone(),
            kind,
            params,
            phase,
            trust,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn kind(&self) -> &EffectKind {
        &self.kind
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn param(&self, key: &str) -> Option<&Scalar> {
        self.params.get(key)
    }

    pub fn issuer(&self) -> &str {
        &self.issuer
    }

    pub fn trust(&self) -> TrustLevel {
        self.trust
    }

    pub fn required_capability(&self) -> &EffectKind {
        &self.required_capability
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Same directive under a different sequence number.
    pub fn with_id(mut self, id: u64) -> Self {
        self.id = id;
        self
    }
}

/// Builds a directive from a kind string. Pure: no world is involved.
pub fn make_directive(
    kind: &str,
    params: Params,
    issuer: impl Into<String>,
    trust: TrustLevel,
    phase: Phase,
    id: u64,
) -> Result<Directive, DirectiveError> {
    let kind = EffectKind::new(kind)?;
    Ok(Directive::new(kind, params, issuer, trust, phase, id))
}

impl Directive {
    /// Appends the canonical encoding to `out`. Byte-identical to
    /// [`canonical_bytes`] but skips the generic serializer on the hot path.
    pub(crate) fn write_canonical(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(b"{\"id\":");
        write_json(out, &self.id);
        out.extend_from_slice(b",\"issuer\":");
        write_json(out, self.issuer.as_str());
        out.extend_from_slice(b",\"kind\":");
        write_json(out, self.kind.as_str());
        out.extend_from_slice(b",\"params\":{");
        for (i, (k, v)) in self.params.iter().enumerate() {
            if i > 0 {
                out.push(b',');
            }
            write_json(out, k.as_str());
            out.push(b':');
            write_json(out, v);
        }
        out.extend_from_slice(b"},\"phase\":");
        write_json(out, &self.phase);
        out.extend_from_slice(b",\"required_capability\":");
        write_json(out, self.required_capability.as_str());
        out.extend_from_slice(b",\"trust\":");
        write_json(out, &self.trust);
        out.push(b'}');
    }
}

pub(crate) fn write_json<T: Serialize + ?Sized>(out: &mut Vec<u8>, value: &T) {
    serde_json::to_writer(out, value).expect("canonical types always serialize")
}

/// Canonical encoding: UTF-8 JSON, sorted keys, no insignificant whitespace.
pub fn canonical_bytes(d: &Directive) -> Vec<u8> {
    crate::canonical::to_vec(d)
}

pub fn parse_directive(bytes: &[u8]) -> Result<Directive, DirectiveError> {
    serde_json::from_slice(bytes).map_err(|e| DirectiveError::Malformed(e.to_string()))
}
