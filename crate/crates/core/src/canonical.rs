//! Canonical JSON: UTF-8, lexicographically sorted object keys, no
//! insignificant whitespace, base-10 integers.
//!
//! Types serialized through here declare their struct fields in alphabetical
//! order and use `BTreeMap` for maps, so the direct serializer output is
//! already canonical. [`via_value`] re-sorts through `serde_json::Value` and
//! exists so tests can check that claim independently.

use serde::Serialize;

pub fn to_vec<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    // Only non-string map keys or a failing Serialize impl can make this fail;
    // none of the crate's types have either.
    serde_json::to_vec(value).expect("canonical types always serialize")
}

pub fn to_string<T: Serialize + ?Sized>(value: &T) -> String {
    String::from_utf8(to_vec(value)).expect("serde_json emits UTF-8")
}

/// Slow path: serialize to a `Value` (whose maps sort their keys) and back.
pub fn via_value<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let v = serde_json::to_value(value).expect("canonical types always serialize");
    serde_json::to_vec(&v).expect("values always serialize")
}
