//! The compact policy document form.
//!
//! A JSON document with keys `@context`, `@type`, `uid`, `profile`,
//! `permission`, `prohibition` and `obligation`. Terms are written with the
//! fixed `odrl:` / `ods:` prefixes or as absolute IRIs.

use serde_json::{Map, Value as Json};
use thiserror::Error;

use super::terms::{self, ParentClass, Term, PREFIXES};
use super::{
    Constraint, Extensions, LeftOperand, OdrlPolicy, Operator, PartyRef, PolicyKind, Rule, RuleKind,
};
use crate::iri::Iri;
use crate::value::{parse_timestamp, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    Action,
    Party,
    LeftOperand,
    Operator,
    PolicyType,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed document at {path}: {reason}")]
    MalformedDocument { path: String, reason: String },
    #[error("unknown {kind:?} term `{text}` at {path}")]
    UnknownTerm {
        path: String,
        text: String,
        kind: TermKind,
    },
    #[error("missing required {path}")]
    MissingRequired { path: String },
}

impl ParseError {
    pub fn path(&self) -> &str {
        match self {
            ParseError::MalformedDocument { path, .. }
            | ParseError::UnknownTerm { path, .. }
            | ParseError::MissingRequired { path } => path,
        }
    }

    fn malformed(path: &str, reason: impl Into<String>) -> Self {
        ParseError::MalformedDocument {
            path: path.to_string(),
            reason: reason.into(),
        }
    }
}

type Result<T> = std::result::Result<T, ParseError>;

/// Parses a compact policy document.
///
/// Policy-level `assigner`/`assignee` are pushed down onto rules that lack
/// their own, and duties without a target inherit their permission's, so the
/// result is fully resolved.
pub fn parse_policy(document: &[u8]) -> Result<OdrlPolicy> {
    let text = std::str::from_utf8(document)
        .map_err(|e| ParseError::malformed("", format!("not UTF-8: {e}")))?;
    let json: Json =
        serde_json::from_str(text).map_err(|e| ParseError::malformed("", e.to_string()))?;
    let Json::Object(mut obj) = json else {
        return Err(ParseError::malformed("", "document is not an object"));
    };

    obj.remove("@context");
    let kind = match obj.remove("@type") {
        None => PolicyKind::Set,
        Some(Json::String(s)) => parse_policy_kind(&s)?,
        Some(_) => return Err(ParseError::malformed("/@type", "expected a string")),
    };
    let uid = match obj.remove("uid") {
        None => {
            return Err(ParseError::MissingRequired {
                path: "/uid".into(),
            })
        }
        Some(v) => parse_iri(&v, "/uid")?,
    };
    let profile = match obj.remove("profile") {
        None => Vec::new(),
        Some(Json::String(s)) => vec![iri_text(&s, "/profile")?],
        Some(Json::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| parse_iri(v, &format!("/profile/{i}")))
            .collect::<Result<_>>()?,
        Some(_) => return Err(ParseError::malformed("/profile", "expected a string or list")),
    };
    let default_assigner = obj
        .remove("assigner")
        .map(|v| parse_party(&v, "/assigner"))
        .transpose()?;
    let default_assignee = obj
        .remove("assignee")
        .map(|v| parse_party(&v, "/assignee"))
        .transpose()?;

    let mut lists = Vec::new();
    for kind in [RuleKind::Permission, RuleKind::Prohibition, RuleKind::Obligation] {
        let key = kind.key();
        let rules = match obj.remove(key) {
            None => Vec::new(),
            Some(Json::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, item)| parse_rule(item, &format!("/{key}/{i}"), None))
                .collect::<Result<Vec<_>>>()?,
            Some(item @ Json::Object(_)) => vec![parse_rule(&item, &format!("/{key}/0"), None)?],
            Some(_) => return Err(ParseError::malformed(&format!("/{key}"), "expected a list")),
        };
        lists.push(rules);
    }
    let obligations = lists.pop().unwrap_or_default();
    let prohibitions = lists.pop().unwrap_or_default();
    let permissions = lists.pop().unwrap_or_default();

    let mut policy = OdrlPolicy {
        uid,
        kind,
        profile,
        permissions,
        prohibitions,
        obligations,
        extensions: obj.into_iter().collect(),
    };
    if policy.rule_count() == 0 {
        return Err(ParseError::MissingRequired {
            path: "/permission".into(),
        });
    }
    for rules in [
        &mut policy.permissions,
        &mut policy.prohibitions,
        &mut policy.obligations,
    ] {
        for rule in rules.iter_mut() {
            if rule.assigner.is_none() {
                rule.assigner = default_assigner.clone();
            }
            if rule.assignee.is_none() {
                rule.assignee = default_assignee.clone();
            }
        }
    }
    Ok(policy)
}

fn parse_policy_kind(text: &str) -> Result<PolicyKind> {
    let local = text.strip_prefix("odrl:").unwrap_or(text);
    let local = local.strip_prefix(terms::ODRL_NAMESPACE).unwrap_or(local);
    match local {
        "Set" | "Policy" => Ok(PolicyKind::Set),
        "Offer" => Ok(PolicyKind::Offer),
        "Agreement" => Ok(PolicyKind::Agreement),
        _ => Err(ParseError::UnknownTerm {
            path: "/@type".into(),
            text: text.to_string(),
            kind: TermKind::PolicyType,
        }),
    }
}

fn iri_text(text: &str, path: &str) -> Result<Iri> {
    Iri::parse(terms::expand(text)).map_err(|e| ParseError::malformed(path, e.to_string()))
}

fn parse_iri(value: &Json, path: &str) -> Result<Iri> {
    match value {
        Json::String(s) => iri_text(s, path),
        Json::Object(o) => match o.get("uid").or_else(|| o.get("@id")) {
            Some(Json::String(s)) => iri_text(s, path),
            _ => Err(ParseError::malformed(path, "expected an IRI")),
        },
        _ => Err(ParseError::malformed(path, "expected an IRI")),
    }
}

fn parse_party(value: &Json, path: &str) -> Result<PartyRef> {
    let text = match value {
        Json::String(s) => s.as_str(),
        Json::Object(o) => match o.get("uid").or_else(|| o.get("@id")) {
            Some(Json::String(s)) => s.as_str(),
            _ => return Err(ParseError::malformed(path, "expected a party")),
        },
        _ => return Err(ParseError::malformed(path, "expected a party")),
    };
    if terms::split_known(text).is_some() {
        let unknown = || ParseError::UnknownTerm {
            path: path.to_string(),
            text: text.to_string(),
            kind: TermKind::Party,
        };
        let entry = terms::resolve_term(text).map_err(|_| unknown())?;
        return match entry.term {
            Term::Party(role) => Ok(PartyRef::Role(role)),
            Term::Action(_) => Err(unknown()),
        };
    }
    iri_text(text, path).map(PartyRef::Concrete)
}

fn parse_action(value: &Json, path: &str) -> Result<super::ActionTerm> {
    let text = match value {
        Json::String(s) => s.as_str(),
        Json::Object(o) => match o.get("rdf:value").or_else(|| o.get("@id")) {
            Some(Json::String(s)) => s.as_str(),
            _ => return Err(ParseError::malformed(path, "expected an action")),
        },
        _ => return Err(ParseError::malformed(path, "expected an action")),
    };
    match terms::resolve_term(text) {
        Ok(entry) if entry.parent_class == ParentClass::Action => match entry.term {
            Term::Action(a) => Ok(a),
            Term::Party(_) => unreachable!("action entries carry action terms"),
        },
        _ => Err(ParseError::UnknownTerm {
            path: path.to_string(),
            text: text.to_string(),
            kind: TermKind::Action,
        }),
    }
}

fn parse_rule(value: &Json, path: &str, inherited_target: Option<&Iri>) -> Result<Rule> {
    let Json::Object(obj) = value else {
        return Err(ParseError::malformed(path, "rule is not an object"));
    };
    let mut obj = obj.clone();
    let action = match obj.remove("action") {
        None => {
            return Err(ParseError::MissingRequired {
                path: format!("{path}/action"),
            })
        }
        Some(v) => parse_action(&v, &format!("{path}/action"))?,
    };
    let target = match obj.remove("target") {
        Some(v) => parse_iri(&v, &format!("{path}/target"))?,
        None => match inherited_target {
            Some(t) => t.clone(),
            None => {
                return Err(ParseError::MissingRequired {
                    path: format!("{path}/target"),
                })
            }
        },
    };
    let assigner = obj
        .remove("assigner")
        .map(|v| parse_party(&v, &format!("{path}/assigner")))
        .transpose()?;
    let assignee = obj
        .remove("assignee")
        .map(|v| parse_party(&v, &format!("{path}/assignee")))
        .transpose()?;
    let constraints = match obj.remove("constraint") {
        None => Vec::new(),
        Some(Json::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, c)| parse_constraint(c, &format!("{path}/constraint/{i}")))
            .collect::<Result<_>>()?,
        Some(c @ Json::Object(_)) => vec![parse_constraint(&c, &format!("{path}/constraint/0"))?],
        Some(_) => return Err(ParseError::malformed(&format!("{path}/constraint"), "expected a list")),
    };
    let duties = match obj.remove("duty") {
        None => Vec::new(),
        Some(Json::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, d)| parse_rule(d, &format!("{path}/duty/{i}"), Some(&target)))
            .collect::<Result<_>>()?,
        Some(d @ Json::Object(_)) => vec![parse_rule(&d, &format!("{path}/duty/0"), Some(&target))?],
        Some(_) => return Err(ParseError::malformed(&format!("{path}/duty"), "expected a list")),
    };
    Ok(Rule {
        action,
        target,
        assigner,
        assignee,
        constraints,
        duties,
        extensions: obj.into_iter().collect(),
    })
}

fn parse_constraint(value: &Json, path: &str) -> Result<Constraint> {
    let Json::Object(obj) = value else {
        return Err(ParseError::malformed(path, "constraint is not an object"));
    };
    let mut obj = obj.clone();
    let term = |obj: &mut Map<String, Json>, key: &str| -> Result<String> {
        match obj.remove(key) {
            Some(Json::String(s)) => Ok(s),
            Some(_) => Err(ParseError::malformed(&format!("{path}/{key}"), "expected a string")),
            None => Err(ParseError::MissingRequired {
                path: format!("{path}/{key}"),
            }),
        }
    };
    let left_text = term(&mut obj, "leftOperand")?;
    let left_operand = LeftOperand::parse(&left_text).ok_or_else(|| ParseError::UnknownTerm {
        path: format!("{path}/leftOperand"),
        text: left_text.clone(),
        kind: TermKind::LeftOperand,
    })?;
    let op_text = term(&mut obj, "operator")?;
    let operator = Operator::parse(&op_text).ok_or_else(|| ParseError::UnknownTerm {
        path: format!("{path}/operator"),
        text: op_text.clone(),
        kind: TermKind::Operator,
    })?;
    let right_path = format!("{path}/rightOperand");
    let right_operand = match obj.remove("rightOperand") {
        None => return Err(ParseError::MissingRequired { path: right_path }),
        Some(v) => parse_right_operand(left_operand, &v, &right_path)?,
    };
    let unit = match obj.remove("unit") {
        None => None,
        Some(Json::String(s)) => Some(s),
        Some(_) => return Err(ParseError::malformed(&format!("{path}/unit"), "expected a string")),
    };
    Ok(Constraint {
        left_operand,
        operator,
        right_operand,
        unit,
        extensions: obj.into_iter().collect(),
    })
}

/// Reads the right operand as the type its left operand calls for, falling
/// back to the literal JSON shape so mismatches survive to validation.
fn parse_right_operand(left: LeftOperand, value: &Json, path: &str) -> Result<Value> {
    let value = match value {
        Json::Object(o) => o
            .get("@value")
            .ok_or_else(|| ParseError::malformed(path, "expected a literal"))?,
        v => v,
    };
    match value {
        Json::String(s) if left == LeftOperand::DateTime => Ok(parse_timestamp(s)
            .map(Value::Timestamp)
            .unwrap_or_else(|_| Value::Text(s.clone()))),
        Json::String(s) => Ok(Value::Text(s.clone())),
        Json::Number(n) => n
            .as_u64()
            .map(Value::Integer)
            .ok_or_else(|| ParseError::malformed(path, "numbers must be non-negative integers")),
        Json::Array(items) => items
            .iter()
            .map(|i| match i {
                Json::String(s) => Ok(s.clone()),
                _ => Err(ParseError::malformed(path, "list items must be strings")),
            })
            .collect::<Result<Vec<_>>>()
            .map(Value::TextList),
        _ => Err(ParseError::malformed(path, "unsupported literal")),
    }
}

/// Canonical compact form: fixed key order, two-space indent, trailing
/// newline. Unknown keys follow the known ones in sorted order.
pub fn serialize_policy(policy: &OdrlPolicy) -> Vec<u8> {
    let mut obj = Map::new();
    let context: Map<String, Json> = PREFIXES
        .iter()
        .map(|(p, ns)| (p.to_string(), Json::String(ns.to_string())))
        .collect();
    obj.insert("@context".into(), Json::Object(context));
    obj.insert("@type".into(), Json::String(policy.kind.name().into()));
    obj.insert("uid".into(), Json::String(policy.uid.to_string()));
    if !policy.profile.is_empty() {
        obj.insert(
            "profile".into(),
            Json::Array(policy.profile.iter().map(|p| Json::String(p.to_string())).collect()),
        );
    }
    for (key, rules) in [
        ("permission", &policy.permissions),
        ("prohibition", &policy.prohibitions),
        ("obligation", &policy.obligations),
    ] {
        if !rules.is_empty() {
            obj.insert(key.into(), Json::Array(rules.iter().map(rule_json).collect()));
        }
    }
    append_extensions(&mut obj, &policy.extensions);
    let mut out = serde_json::to_vec_pretty(&Json::Object(obj)).expect("JSON values serialize");
    out.push(b'\n');
    out
}

fn append_extensions(obj: &mut Map<String, Json>, extensions: &Extensions) {
    for (k, v) in extensions {
        obj.insert(k.clone(), v.clone());
    }
}

fn rule_json(rule: &Rule) -> Json {
    let mut obj = Map::new();
    obj.insert("action".into(), Json::String(rule.action.compact().into()));
    obj.insert("target".into(), Json::String(rule.target.to_string()));
    if let Some(p) = &rule.assigner {
        obj.insert("assigner".into(), Json::String(p.to_string()));
    }
    if let Some(p) = &rule.assignee {
        obj.insert("assignee".into(), Json::String(p.to_string()));
    }
    if !rule.constraints.is_empty() {
        obj.insert(
            "constraint".into(),
            Json::Array(rule.constraints.iter().map(constraint_json).collect()),
        );
    }
    if !rule.duties.is_empty() {
        obj.insert("duty".into(), Json::Array(rule.duties.iter().map(rule_json).collect()));
    }
    append_extensions(&mut obj, &rule.extensions);
    Json::Object(obj)
}

fn constraint_json(c: &Constraint) -> Json {
    let mut obj = Map::new();
    obj.insert("leftOperand".into(), Json::String(c.left_operand.compact().into()));
    obj.insert("operator".into(), Json::String(c.operator.compact().into()));
    obj.insert("rightOperand".into(), c.right_operand.to_json());
    if let Some(unit) = &c.unit {
        obj.insert("unit".into(), Json::String(unit.clone()));
    }
    append_extensions(&mut obj, &c.extensions);
    Json::Object(obj)
}

#[cfg(test)]
mod tests {
    use super::super::{ActionTerm, Role};
    use super::*;

    fn parse(s: &str) -> Result<OdrlPolicy> {
        parse_policy(s.as_bytes())
    }

    #[test]
    fn single_train_permission() {
        let p = parse(
            r#"{"@type":"Set","uid":"https://example.org/policy/1",
                "permission":[{"action":"ods:train","target":"https://example.org/data/ds1",
                               "assignee":"https://example.org/party/alice"}]}"#,
        )
        .unwrap();
        assert_eq!(p.permissions.len(), 1);
        assert_eq!(p.permissions[0].action, ActionTerm::Train);
        assert_eq!(p.kind, PolicyKind::Set);
    }

    #[test]
    fn empty_rule_lists_are_rejected() {
        let err = parse(r#"{"uid":"https://example.org/p","permission":[]}"#).unwrap_err();
        assert!(matches!(err, ParseError::MissingRequired { .. }));
    }

    #[test]
    fn missing_uid_action_target() {
        let err = parse(r#"{"permission":[{"action":"odrl:use","target":"urn:a"}]}"#).unwrap_err();
        assert_eq!(err, ParseError::MissingRequired { path: "/uid".into() });
        let err = parse(r#"{"uid":"urn:p","permission":[{"target":"urn:a"}]}"#).unwrap_err();
        assert_eq!(err.path(), "/permission/0/action");
        let err = parse(r#"{"uid":"urn:p","permission":[{"action":"odrl:use"}]}"#).unwrap_err();
        assert_eq!(err.path(), "/permission/0/target");
    }

    #[test]
    fn unknown_terms() {
        let err = parse(r#"{"uid":"urn:p","permission":[{"action":"ods:Destroy","target":"urn:a"}]}"#)
            .unwrap_err();
        assert!(matches!(err, ParseError::UnknownTerm { kind: TermKind::Action, .. }));
        let err = parse(
            r#"{"uid":"urn:p","permission":[{"action":"odrl:use","target":"urn:a","assignee":"ods:Seller"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::UnknownTerm { kind: TermKind::Party, .. }));
        let err = parse(
            r#"{"uid":"urn:p","permission":[{"action":"odrl:use","target":"urn:a",
                "constraint":[{"leftOperand":"odrl:spatial","operator":"odrl:eq","rightOperand":"EU"}]}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::UnknownTerm { kind: TermKind::LeftOperand, .. }));
        // A party term is not an action.
        let err = parse(r#"{"uid":"urn:p","permission":[{"action":"ods:Consumer","target":"urn:a"}]}"#)
            .unwrap_err();
        assert!(matches!(err, ParseError::UnknownTerm { kind: TermKind::Action, .. }));
    }

    #[test]
    fn malformed_documents() {
        assert!(matches!(parse("{"), Err(ParseError::MalformedDocument { .. })));
        assert!(matches!(parse("[]"), Err(ParseError::MalformedDocument { .. })));
        assert!(matches!(
            parse_policy(&[0xff, 0xfe]),
            Err(ParseError::MalformedDocument { .. })
        ));
        let err = parse(r#"{"uid":"urn:p","permission":[{"action":"odrl:use","target":"ds1"}]}"#)
            .unwrap_err();
        assert_eq!(err.path(), "/permission/0/target");
    }

    #[test]
    fn roles_and_inheritance() {
        let p = parse(
            r#"{"@type":"Agreement","uid":"urn:p","assigner":"https://example.org/prov",
                "permission":[{"action":"ods:Subscribe","target":"urn:a","assignee":"ods:Consumer",
                  "duty":[{"action":"ods:Retention"}]}]}"#,
        )
        .unwrap();
        let rule = &p.permissions[0];
        assert_eq!(rule.assignee, Some(PartyRef::Role(Role::Consumer)));
        assert_eq!(
            rule.assigner,
            Some(PartyRef::Concrete(Iri::parse("https://example.org/prov").unwrap()))
        );
        assert_eq!(rule.duties[0].target, rule.target);
    }

    #[test]
    fn unknown_keys_are_kept() {
        let p = parse(
            r#"{"uid":"urn:p","x-note":"hi","permission":[{"action":"odrl:use","target":"urn:a","x-rule":1}]}"#,
        )
        .unwrap();
        assert_eq!(p.extensions.get("x-note"), Some(&Json::String("hi".into())));
        assert_eq!(p.permissions[0].extensions.get("x-rule"), Some(&Json::from(1)));
        let again = parse_policy(&serialize_policy(&p)).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn right_operand_follows_left_operand() {
        let p = parse(
            r#"{"uid":"urn:p","permission":[{"action":"odrl:use","target":"urn:a","constraint":[
                {"leftOperand":"odrl:dateTime","operator":"odrl:lteq","rightOperand":"2026-01-01T00:00:00Z"},
                {"leftOperand":"odrl:purpose","operator":"odrl:eq","rightOperand":"2026-01-01T00:00:00Z"},
                {"leftOperand":"odrl:count","operator":"odrl:lteq","rightOperand":5,"unit":"times"},
                {"leftOperand":"odrl:dateTime","operator":"odrl:lt","rightOperand":"tomorrow"}]}]}"#,
        )
        .unwrap();
        let c = &p.permissions[0].constraints;
        assert_eq!(c[0].right_operand, Value::Timestamp(1_767_225_600));
        assert_eq!(c[1].right_operand, Value::Text("2026-01-01T00:00:00Z".into()));
        assert_eq!(c[2].right_operand, Value::Integer(5));
        assert_eq!(c[2].unit.as_deref(), Some("times"));
        assert_eq!(c[3].right_operand, Value::Text("tomorrow".into()));
        assert!(c[3].check_well_formed().is_err());
    }

    #[test]
    fn serialization_is_canonical() {
        let p = parse(
            r#"{"permission":[{"target":"urn:a","action":"ods:train"}],"uid":"urn:p","@type":"Offer"}"#,
        )
        .unwrap();
        let out = String::from_utf8(serialize_policy(&p)).unwrap();
        assert_eq!(out, serialize_policy(&p).iter().map(|&b| b as char).collect::<String>());
        let expected = r#"{
  "@context": {
    "odrl": "http://www.w3.org/ns/odrl/2/",
    "ods": "https://w3id.org/ods/"
  },
  "@type": "Offer",
  "uid": "urn:p",
  "permission": [
    {
      "action": "ods:Train",
      "target": "urn:a"
    }
  ]
}
"#;
        assert_eq!(out, expected);
    }
}
