use std::fmt;

use chrono::{DateTime, SecondsFormat, Utc};
use serde_json::Value as Json;
use thiserror::Error;

/// A typed scalar or list carried by constraints, conditions and request
/// context.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    /// Seconds since the Unix epoch, UTC.
    Timestamp(i64),
    Text(String),
    Integer(u64),
    TextList(Vec<String>),
}

/// Declared type of a condition parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamType {
    Timestamp,
    Text,
    Integer,
    TextList,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("unsupported JSON value `{0}`")]
    Unsupported(String),
    #[error("invalid timestamp `{0}`")]
    BadTimestamp(String),
}

impl ParamType {
    pub fn name(self) -> &'static str {
        match self {
            ParamType::Timestamp => "timestamp",
            ParamType::Text => "text",
            ParamType::Integer => "integer",
            ParamType::TextList => "text_list",
        }
    }
}

impl Value {
    pub fn param_type(&self) -> ParamType {
        match self {
            Value::Timestamp(_) => ParamType::Timestamp,
            Value::Text(_) => ParamType::Text,
            Value::Integer(_) => ParamType::Integer,
            Value::TextList(_) => ParamType::TextList,
        }
    }

    /// Interprets `value` as `expected`, allowing the one lossless widening
    /// the untyped encodings need: an RFC 3339 text read where text was
    /// declared.
    pub fn coerce(&self, expected: ParamType) -> Option<Value> {
        match (self, expected) {
            (v, t) if v.param_type() == t => Some(v.clone()),
            (Value::Timestamp(ts), ParamType::Text) => Some(Value::Text(render_timestamp(*ts))),
            (Value::Text(t), ParamType::Timestamp) => parse_timestamp(t).ok().map(Value::Timestamp),
            _ => None,
        }
    }

    /// Decodes the untyped JSON encoding: RFC 3339-shaped strings are
    /// timestamps, other strings text, non-negative integers integers and
    /// arrays of strings text lists.
    pub fn from_json(json: &Json) -> Result<Value, ValueError> {
        match json {
            Json::String(s) => Ok(Value::from_text(s)),
            Json::Number(n) => n
                .as_u64()
                .map(Value::Integer)
                .ok_or_else(|| ValueError::Unsupported(n.to_string())),
            Json::Array(items) => items
                .iter()
                .map(|i| match i {
                    Json::String(s) => Ok(s.clone()),
                    other => Err(ValueError::Unsupported(other.to_string())),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Value::TextList),
            other => Err(ValueError::Unsupported(other.to_string())),
        }
    }

    /// Parses shell-style untyped input: timestamp if RFC 3339-shaped,
    /// integer if digit-only, else text.
    pub fn from_text(s: &str) -> Value {
        if looks_like_rfc3339(s) {
            if let Ok(ts) = parse_timestamp(s) {
                return Value::Timestamp(ts);
            }
        }
        if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(n) = s.parse() {
                return Value::Integer(n);
            }
        }
        Value::Text(s.to_string())
    }

    pub fn to_json(&self) -> Json {
        match self {
            Value::Timestamp(ts) => Json::String(render_timestamp(*ts)),
            Value::Text(t) => Json::String(t.clone()),
            Value::Integer(n) => Json::from(*n),
            Value::TextList(items) => Json::Array(items.iter().cloned().map(Json::String).collect()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Timestamp(ts) => f.write_str(&render_timestamp(*ts)),
            Value::Text(t) => f.write_str(t),
            Value::Integer(n) => write!(f, "{n}"),
            Value::TextList(items) => write!(f, "[{}]", items.join(", ")),
        }
    }
}

fn looks_like_rfc3339(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() >= 20
        && b[..4].iter().all(u8::is_ascii_digit)
        && b[4] == b'-'
        && b[7] == b'-'
        && (b[10] == b'T' || b[10] == b't')
        && b[13] == b':'
}

pub fn parse_timestamp(s: &str) -> Result<i64, ValueError> {
    DateTime::parse_from_rfc3339(s)
        .map(|dt| dt.with_timezone(&Utc).timestamp())
        .map_err(|_| ValueError::BadTimestamp(s.to_string()))
}

pub fn render_timestamp(ts: i64) -> String {
    match DateTime::<Utc>::from_timestamp(ts, 0) {
        Some(dt) => dt.to_rfc3339_opts(SecondsFormat::Secs, true),
        None => ts.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn untyped_text_inference() {
        assert_eq!(
            Value::from_text("2026-01-01T00:00:00Z"),
            Value::Timestamp(1_767_225_600)
        );
        assert_eq!(Value::from_text("42"), Value::Integer(42));
        assert_eq!(Value::from_text("research"), Value::Text("research".into()));
        assert_eq!(Value::from_text("-3"), Value::Text("-3".into()));
        assert_eq!(Value::from_text(""), Value::Text(String::new()));
    }

    #[test]
    fn offsets_normalize_to_utc() {
        let a = parse_timestamp("2026-01-01T01:00:00+01:00").unwrap();
        assert_eq!(a, parse_timestamp("2026-01-01T00:00:00Z").unwrap());
        assert_eq!(render_timestamp(a), "2026-01-01T00:00:00Z");
    }

    #[test]
    fn json_encoding() {
        for v in [
            Value::Timestamp(0),
            Value::Text("x".into()),
            Value::Integer(7),
            Value::TextList(vec!["a".into(), "b".into()]),
        ] {
            assert_eq!(Value::from_json(&v.to_json()).unwrap(), v);
        }
        assert!(Value::from_json(&json!(-1)).is_err());
        assert!(Value::from_json(&json!(null)).is_err());
        assert!(Value::from_json(&json!([1])).is_err());
    }

    #[test]
    fn coercion() {
        let ts = Value::Timestamp(0);
        assert_eq!(
            ts.coerce(ParamType::Text),
            Some(Value::Text("1970-01-01T00:00:00Z".into()))
        );
        assert_eq!(Value::Integer(1).coerce(ParamType::Text), None);
        assert_eq!(Value::Text("nope".into()).coerce(ParamType::Timestamp), None);
    }
}
