//! Machine-readable diagnostics shared by policy and model validation.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl Severity {
    pub fn label(self) -> &'static str {
        match self {
            Severity::Error => "ERROR",
            Severity::Warning => "WARNING",
        }
    }
}

/// Policy profile rules.
pub mod codes {
    /// Agreement rule missing an assignee or assigner.
    pub const MISSING_PARTY: &str = "ODS001";
    /// Term text resolves to no registry entry.
    pub const UNKNOWN_TERM: &str = "ODS002";
    /// Constraint operand, operator and value do not fit together.
    pub const CONSTRAINT_MISMATCH: &str = "ODS003";
    /// Duty attached to a prohibition or obligation.
    pub const DUTY_ON_NON_PERMISSION: &str = "ODS004";
    /// Role term where a concrete identity is required.
    pub const ROLE_NOT_IDENTITY: &str = "ODS005";
    /// Unknown key carried through unchanged.
    pub const UNKNOWN_KEY: &str = "ODS100";
    /// ODS terms used without declaring the ODS profile.
    pub const PROFILE_UNDECLARED: &str = "ODS101";
    /// Retention without a temporal or count bound.
    pub const RETENTION_UNBOUNDED: &str = "ODS102";
    /// Monitor party attached to a permission.
    pub const MONITOR_ON_PERMISSION: &str = "ODS103";

    /// Duplicate type name.
    pub const DUPLICATE_TYPE: &str = "FGA001";
    /// Type or relation name is not a lowercase identifier.
    pub const BAD_IDENTIFIER: &str = "FGA002";
    /// Rewrite node references a relation that does not exist.
    pub const DANGLING_RELATION: &str = "FGA003";
    /// Assignable-type metadata disagrees with the presence of a direct leaf.
    pub const METADATA_MISMATCH: &str = "FGA004";
    /// Assignable user type names an unknown type or relation.
    pub const UNKNOWN_USER_TYPE: &str = "FGA005";
    /// Unknown condition referenced.
    pub const UNKNOWN_CONDITION: &str = "FGA006";
    /// Union or intersection with fewer than two children.
    pub const NARROW_SET_OPERATION: &str = "FGA007";
    /// Rewrite tree deeper than the limit.
    pub const TREE_TOO_DEEP: &str = "FGA008";
    /// Types or relations not in canonical order.
    pub const NON_CANONICAL: &str = "FGA009";
    /// Unsupported schema version.
    pub const SCHEMA_VERSION: &str = "FGA010";
    /// Condition predicate mentions an undeclared parameter.
    pub const UNDECLARED_PARAMETER: &str = "FGA011";
    /// Dependency cycle passing through an exclusion's subtracted branch.
    pub const UNSTRATIFIED_EXCLUSION: &str = "FGA012";

    pub const POLICY_CATALOGUE: &[&str] = &[
        MISSING_PARTY,
        UNKNOWN_TERM,
        CONSTRAINT_MISMATCH,
        DUTY_ON_NON_PERMISSION,
        ROLE_NOT_IDENTITY,
        UNKNOWN_KEY,
        PROFILE_UNDECLARED,
        RETENTION_UNBOUNDED,
        MONITOR_ON_PERMISSION,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    pub path: String,
}

impl Diagnostic {
    pub fn error(code: &str, path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            code: code.to_string(),
            message: message.into(),
            path: path.into(),
        }
    }

    pub fn warning(code: &str, path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            code: code.to_string(),
            message: message.into(),
            path: path.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}: {}",
            self.severity.label(),
            self.code,
            self.path,
            self.message
        )
    }
}

/// Orders paths segment by segment, comparing numeric segments as numbers.
pub fn compare_paths(a: &str, b: &str) -> Ordering {
    let mut left = a.split('/');
    let mut right = b.split('/');
    loop {
        match (left.next(), right.next()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) => {
                let ord = match (x.parse::<u64>(), y.parse::<u64>()) {
                    (Ok(m), Ok(n)) => m.cmp(&n),
                    _ => x.cmp(y),
                };
                if ord != Ordering::Equal {
                    return ord;
                }
            }
        }
    }
}

/// Sorts by path, then code, and drops exact duplicates.
pub fn sort_diagnostics(diagnostics: &mut Vec<Diagnostic>) {
    diagnostics.sort_by(|a, b| {
        compare_paths(&a.path, &b.path)
            .then_with(|| a.code.cmp(&b.code))
            .then_with(|| a.message.cmp(&b.message))
    });
    diagnostics.dedup();
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(Diagnostic::is_error)
}

/// One `SEVERITY CODE path: message` line per diagnostic.
pub fn render_text(diagnostics: &[Diagnostic]) -> String {
    diagnostics.iter().map(|d| format!("{d}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_segments_sort_numerically() {
        let mut d = vec![
            Diagnostic::error("ODS003", "/permission/10", "x"),
            Diagnostic::error("ODS003", "/permission/2", "x"),
            Diagnostic::warning("ODS101", "/profile", "x"),
            Diagnostic::error("ODS001", "/permission/2", "x"),
        ];
        sort_diagnostics(&mut d);
        let order: Vec<_> = d.iter().map(|d| (d.path.as_str(), d.code.as_str())).collect();
        assert_eq!(
            order,
            [
                ("/permission/2", "ODS001"),
                ("/permission/2", "ODS003"),
                ("/permission/10", "ODS003"),
                ("/profile", "ODS101"),
            ]
        );
    }

    #[test]
    fn text_rendering() {
        let d = Diagnostic::error("ODS004", "/prohibition/0/duty", "duties are only allowed on permissions");
        assert_eq!(
            render_text(&[d]),
            "ERROR ODS004 /prohibition/0/duty: duties are only allowed on permissions\n"
        );
    }
}
