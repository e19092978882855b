//! ODRL policies restricted to the subset the ODS profile needs.

mod document;
pub mod terms;

use std::collections::BTreeMap;
use std::fmt;

pub use document::{parse_policy, serialize_policy, ParseError, TermKind};
pub use terms::{resolve_term, ActionTerm, ParentClass, Role, Term, TermRegistryEntry, UnknownTerm};

use crate::iri::Iri;
use crate::value::Value;

/// Keys not understood by the parser, carried through unchanged.
pub type Extensions = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Set,
    Offer,
    Agreement,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Set => "Set",
            PolicyKind::Offer => "Offer",
            PolicyKind::Agreement => "Agreement",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    Permission,
    Prohibition,
    Obligation,
}

impl RuleKind {
    pub fn key(self) -> &'static str {
        match self {
            RuleKind::Permission => "permission",
            RuleKind::Prohibition => "prohibition",
            RuleKind::Obligation => "obligation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdrlPolicy {
    pub uid: Iri,
    pub kind: PolicyKind,
    pub profile: Vec<Iri>,
    pub permissions: Vec<Rule>,
    pub prohibitions: Vec<Rule>,
    pub obligations: Vec<Rule>,
    pub extensions: Extensions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub action: ActionTerm,
    pub target: Iri,
    pub assigner: Option<PartyRef>,
    pub assignee: Option<PartyRef>,
    pub constraints: Vec<Constraint>,
    pub duties: Vec<Rule>,
    pub extensions: Extensions,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartyRef {
    Concrete(Iri),
    Role(Role),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LeftOperand {
    DateTime,
    Purpose,
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operator {
    Eq,
    Lt,
    Lteq,
    Gt,
    Gteq,
    IsAnyOf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub left_operand: LeftOperand,
    pub operator: Operator,
    pub right_operand: Value,
    pub unit: Option<String>,
    pub extensions: Extensions,
}

impl OdrlPolicy {
    /// Rules of each kind with their kind tag, in document order.
    pub fn rules(&self) -> impl Iterator<Item = (RuleKind, usize, &Rule)> {
        fn tag(kind: RuleKind, rules: &[Rule]) -> impl Iterator<Item = (RuleKind, usize, &Rule)> {
            rules.iter().enumerate().map(move |(i, r)| (kind, i, r))
        }
        tag(RuleKind::Permission, &self.permissions)
            .chain(tag(RuleKind::Prohibition, &self.prohibitions))
            .chain(tag(RuleKind::Obligation, &self.obligations))
    }

    pub fn rule_count(&self) -> usize {
        self.permissions.len() + self.prohibitions.len() + self.obligations.len()
    }

    /// Whether any action or party term of the ODS namespace appears.
    pub fn uses_ods_terms(&self) -> bool {
        fn rule_uses(r: &Rule) -> bool {
            let role = |p: &Option<PartyRef>| matches!(p, Some(PartyRef::Role(_)));
            r.action.is_ods() || role(&r.assigner) || role(&r.assignee) || r.duties.iter().any(rule_uses)
        }
        self.rules().any(|(_, _, r)| rule_uses(r))
    }
}

impl Rule {
    pub fn new(action: ActionTerm, target: Iri) -> Self {
        Self {
            action,
            target,
            assigner: None,
            assignee: None,
            constraints: Vec::new(),
            duties: Vec::new(),
            extensions: Extensions::new(),
        }
    }
}

impl Constraint {
    pub fn new(left_operand: LeftOperand, operator: Operator, right_operand: Value) -> Self {
        Self {
            left_operand,
            operator,
            right_operand,
            unit: None,
            extensions: Extensions::new(),
        }
    }

    /// Checks that operand, operator and value fit together. Returns the
    /// reason when they do not.
    pub fn check_well_formed(&self) -> Result<(), String> {
        use LeftOperand::*;
        use Operator::*;
        let value_ok = matches!(
            (self.left_operand, &self.right_operand),
            (DateTime, Value::Timestamp(_)) | (Purpose, Value::Text(_) | Value::TextList(_)) | (Count, Value::Integer(_))
        );
        if !value_ok {
            return Err(format!(
                "{} does not accept a {} value",
                self.left_operand.compact(),
                self.right_operand.param_type().name()
            ));
        }
        let is_list = matches!(self.right_operand, Value::TextList(_));
        match self.operator {
            IsAnyOf if !is_list => Err("isAnyOf requires a list value".into()),
            Eq | Lt | Lteq | Gt | Gteq if is_list => {
                Err(format!("{} requires a single value", self.operator.compact()))
            }
            Lt | Lteq | Gt | Gteq if self.left_operand == Purpose => Err(format!(
                "{} is an ordering operator and cannot compare purposes",
                self.operator.compact()
            )),
            _ => Ok(()),
        }
    }
}

impl LeftOperand {
    pub const ALL: [LeftOperand; 3] = [LeftOperand::DateTime, LeftOperand::Purpose, LeftOperand::Count];

    pub fn compact(self) -> &'static str {
        match self {
            LeftOperand::DateTime => "odrl:dateTime",
            LeftOperand::Purpose => "odrl:purpose",
            LeftOperand::Count => "odrl:count",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        let (ns, local) = terms::split_known(text)?;
        if ns != terms::ODRL_NAMESPACE {
            return None;
        }
        Self::ALL
            .into_iter()
            .find(|o| o.compact()["odrl:".len()..].eq_ignore_ascii_case(local))
    }
}

impl Operator {
    pub const ALL: [Operator; 6] = [
        Operator::Eq,
        Operator::Lt,
        Operator::Lteq,
        Operator::Gt,
        Operator::Gteq,
        Operator::IsAnyOf,
    ];

    pub fn compact(self) -> &'static str {
        match self {
            Operator::Eq => "odrl:eq",
            Operator::Lt => "odrl:lt",
            Operator::Lteq => "odrl:lteq",
            Operator::Gt => "odrl:gt",
            Operator::Gteq => "odrl:gteq",
            Operator::IsAnyOf => "odrl:isAnyOf",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        let (ns, local) = terms::split_known(text)?;
        if ns != terms::ODRL_NAMESPACE {
            return None;
        }
        Self::ALL
            .into_iter()
            .find(|o| o.compact()["odrl:".len()..].eq_ignore_ascii_case(local))
    }
}

impl fmt::Display for PartyRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyRef::Concrete(iri) => write!(f, "{iri}"),
            PartyRef::Role(role) => f.write_str(role.compact()),
        }
    }
}
