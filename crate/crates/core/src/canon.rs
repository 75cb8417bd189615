//! Canonical JSON documents and content digests.
//!
//! Every byte that leaves this crate (log lines, state dumps, plan exports,
//! benchmark files) goes through [`canonical_json`]: object keys sorted,
//! compact separators, UTF-8, shortest-form numbers. Two documents that are
//! equal up to key order serialize to identical bytes and therefore hash
//! equal.

use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CanonError {
    #[error("non-finite number cannot enter a canonical document")]
    NonFiniteNumber,
    #[error("invalid json: {0}")]
    InvalidJson(String),
    #[error("document root must be an object")]
    RootNotObject,
}

/// Serializes a value to its canonical byte form.
///
/// `serde_json`'s default object representation is a BTreeMap, so keys are
/// already sorted; compact mode leaves no insignificant whitespace. Numbers
/// are shortest-round-trip (itoa/ryu), which keeps the encoding
/// byte-deterministic. Non-finite floats are unrepresentable in
/// `serde_json::Number`, so serialization cannot fail.
pub fn canonical_json(value: &Value) -> String {
    serde_json::to_string(value).expect("canonical values always serialize")
}

/// SHA-256 of the canonical serialization, as 64 lowercase hex digits.
pub fn canonical_hash(value: &Value) -> String {
    let bytes = canonical_json(value);
    let digest = Sha256::digest(bytes.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        write!(out, "{byte:02x}").expect("writing to a String cannot fail");
    }
    out
}

/// Converts a float into a canonical number, rejecting NaN and infinities.
pub fn finite_number(value: f64) -> Result<Number, CanonError> {
    Number::from_f64(value).ok_or(CanonError::NonFiniteNumber)
}

/// Parses a JSON string into a value suitable for canonical treatment.
pub fn parse_json(text: &str) -> Result<Value, CanonError> {
    serde_json::from_str(text).map_err(|e| CanonError::InvalidJson(e.to_string()))
}

/// Parses a JSON string whose root must be an object.
pub fn parse_document(text: &str) -> Result<Map<String, Value>, CanonError> {
    match parse_json(text)? {
        Value::Object(map) => Ok(map),
        _ => Err(CanonError::RootNotObject),
    }
}
