//! ODS profile conformance rules, checked before compilation.

use crate::diag::{codes, sort_diagnostics, Diagnostic};
use crate::iri::Iri;
use crate::odrl::terms::ODS_NAMESPACE;
use crate::odrl::{
    parse_policy, ActionTerm, Extensions, LeftOperand, OdrlPolicy, ParseError, PartyRef, PolicyKind,
    Role, Rule, RuleKind, TermKind,
};

/// The profile IRI a policy declares when it uses ODS terms.
pub fn ods_profile() -> Iri {
    Iri::parse(ODS_NAMESPACE).expect("namespace is an absolute IRI")
}

/// Every profile diagnostic for `policy`, sorted by path then code.
/// An empty list means the policy conforms.
pub fn validate(policy: &OdrlPolicy) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    extension_warnings(&policy.extensions, "", &mut out);

    if policy.uses_ods_terms() && !policy.profile.contains(&ods_profile()) {
        out.push(Diagnostic::warning(
            codes::PROFILE_UNDECLARED,
            "/profile",
            format!("ODS terms are used but profile {ODS_NAMESPACE} is not declared"),
        ));
    }

    for (kind, index, rule) in policy.rules() {
        let path = format!("/{}/{index}", kind.key());
        if policy.kind == PolicyKind::Agreement {
            for (field, party) in [("assigner", &rule.assigner), ("assignee", &rule.assignee)] {
                if party.is_none() {
                    out.push(Diagnostic::error(
                        codes::MISSING_PARTY,
                        format!("{path}/{field}"),
                        format!("an Agreement rule must name its {field}"),
                    ));
                }
            }
            if let Some(PartyRef::Role(role)) = &rule.assigner {
                out.push(Diagnostic::error(
                    codes::ROLE_NOT_IDENTITY,
                    format!("{path}/assigner"),
                    format!(
                        "an Agreement assigner must be a concrete party, not the role {}",
                        role.compact()
                    ),
                ));
            }
        }
        if kind != RuleKind::Permission && !rule.duties.is_empty() {
            out.push(Diagnostic::error(
                codes::DUTY_ON_NON_PERMISSION,
                format!("{path}/duty"),
                format!("duties are only allowed on permissions, not on a {}", kind.key()),
            ));
        }
        if kind == RuleKind::Permission {
            for (field, party) in [("assigner", &rule.assigner), ("assignee", &rule.assignee)] {
                if party == &Some(PartyRef::Role(Role::Monitor)) {
                    out.push(Diagnostic::warning(
                        codes::MONITOR_ON_PERMISSION,
                        format!("{path}/{field}"),
                        "a Monitor oversees compliance and is not expected to take part in data usage",
                    ));
                }
            }
        }
        rule_checks(rule, &path, &mut out);
    }
    sort_diagnostics(&mut out);
    out
}

fn rule_checks(rule: &Rule, path: &str, out: &mut Vec<Diagnostic>) {
    extension_warnings(&rule.extensions, path, out);
    for (i, c) in rule.constraints.iter().enumerate() {
        let cpath = format!("{path}/constraint/{i}");
        if let Err(reason) = c.check_well_formed() {
            out.push(Diagnostic::error(codes::CONSTRAINT_MISMATCH, cpath.clone(), reason));
        }
        extension_warnings(&c.extensions, &cpath, out);
    }
    if rule.action == ActionTerm::Retention
        && !rule
            .constraints
            .iter()
            .any(|c| matches!(c.left_operand, LeftOperand::DateTime | LeftOperand::Count))
    {
        out.push(Diagnostic::warning(
            codes::RETENTION_UNBOUNDED,
            format!("{path}/action"),
            "retention without a dateTime or count constraint sets no retention bound",
        ));
    }
    for (i, duty) in rule.duties.iter().enumerate() {
        let dpath = format!("{path}/duty/{i}");
        if !duty.duties.is_empty() {
            out.push(Diagnostic::error(
                codes::DUTY_ON_NON_PERMISSION,
                format!("{dpath}/duty"),
                "duties are only allowed on permissions, not on a duty",
            ));
        }
        rule_checks(duty, &dpath, out);
    }
}

fn extension_warnings(extensions: &Extensions, path: &str, out: &mut Vec<Diagnostic>) {
    for key in extensions.keys() {
        out.push(Diagnostic::warning(
            codes::UNKNOWN_KEY,
            format!("{path}/{}", escape_segment(key)),
            format!("unknown key `{key}` is kept but not interpreted"),
        ));
    }
}

fn escape_segment(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

/// Outcome of checking one policy document end to end.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub policy: Option<OdrlPolicy>,
    pub diagnostics: Vec<Diagnostic>,
    /// Set when the document could not be read as a policy at all.
    pub parse_error: Option<ParseError>,
}

impl Analysis {
    pub fn has_errors(&self) -> bool {
        self.parse_error.is_some() || crate::diag::has_errors(&self.diagnostics)
    }
}

/// Parses and validates a document. Unknown action and party terms become
/// ODS002 diagnostics and unknown constraint terms ODS003; other parse
/// failures are reported through `parse_error`.
pub fn analyze_document(document: &[u8]) -> Analysis {
    match parse_policy(document) {
        Ok(policy) => Analysis {
            diagnostics: validate(&policy),
            policy: Some(policy),
            parse_error: None,
        },
        Err(err) => match term_diagnostic(&err) {
            Some(d) => Analysis {
                policy: None,
                diagnostics: vec![d],
                parse_error: None,
            },
            None => Analysis {
                policy: None,
                diagnostics: Vec::new(),
                parse_error: Some(err),
            },
        },
    }
}

fn term_diagnostic(err: &ParseError) -> Option<Diagnostic> {
    let ParseError::UnknownTerm { path, text, kind } = err else {
        return None;
    };
    let (code, what) = match kind {
        TermKind::Action => (codes::UNKNOWN_TERM, "action"),
        TermKind::Party => (codes::UNKNOWN_TERM, "party"),
        TermKind::LeftOperand => (codes::CONSTRAINT_MISMATCH, "left operand"),
        TermKind::Operator => (codes::CONSTRAINT_MISMATCH, "operator"),
        TermKind::PolicyType => return None,
    };
    Some(Diagnostic::error(
        code,
        path.clone(),
        format!("unknown {what} term `{text}`"),
    ))
}
