use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IriError {
    #[error("IRI is empty")]
    Empty,
    #[error("IRI `{0}` has no scheme")]
    MissingScheme(String),
    #[error("IRI `{0}` contains whitespace")]
    Whitespace(String),
}

/// An absolute IRI.
///
/// Equality ignores case in the scheme and host only; the original text is
/// kept for rendering.
#[derive(Clone)]
pub struct Iri {
    text: String,
    key: String,
}

impl Iri {
    pub fn parse(text: impl Into<String>) -> Result<Self, IriError> {
        let text = text.into();
        if text.is_empty() {
            return Err(IriError::Empty);
        }
        if text.chars().any(char::is_whitespace) {
            return Err(IriError::Whitespace(text));
        }
        let Some(colon) = text.find(':') else {
            return Err(IriError::MissingScheme(text));
        };
        let scheme = &text[..colon];
        let scheme_ok = scheme
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic())
            && scheme
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
        if !scheme_ok {
            return Err(IriError::MissingScheme(text));
        }
        let key = normalize(&text, colon);
        Ok(Self { text, key })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// The last non-empty segment after `/`, `#` or `:`.
    pub fn last_segment(&self) -> &str {
        self.text
            .trim_end_matches(['/', '#'])
            .rsplit(['/', '#', ':'])
            .next()
            .unwrap_or("")
    }
}

fn normalize(text: &str, colon: usize) -> String {
    let scheme = text[..colon].to_ascii_lowercase();
    let rest = &text[colon + 1..];
    let Some(after) = rest.strip_prefix("//") else {
        return format!("{scheme}:{rest}");
    };
    let end = after.find(['/', '?', '#']).unwrap_or(after.len());
    let (authority, tail) = after.split_at(end);
    let authority = match authority.rfind('@') {
        Some(at) => format!(
            "{}@{}",
            &authority[..at],
            authority[at + 1..].to_ascii_lowercase()
        ),
        None => authority.to_ascii_lowercase(),
    };
    format!("{scheme}://{authority}{tail}")
}

impl PartialEq for Iri {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for Iri {}

impl Hash for Iri {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key.hash(state);
    }
}

impl PartialOrd for Iri {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Iri {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

impl fmt::Debug for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Iri({})", self.text)
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl Serialize for Iri {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Iri {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Iri::parse(text).map_err(serde::de::Error::custom)
    }
}
