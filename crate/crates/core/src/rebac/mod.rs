//! Zanzibar-style authorization models, relationship tuples and the
//! OpenFGA-compatible interchange form.

mod expr;
mod interchange;
mod tuple;
mod validate;

use std::collections::BTreeMap;

use thiserror::Error;

pub use interchange::{export_model, import_model};
pub(crate) use tuple::valid_id;
pub use tuple::{
    parse_context, parse_tuple_file, render_tuple_file, Edge, ObjectRef, RelationshipTuple, TupleCondition,
    TupleError, TupleFile, TupleSet, UserRef,
};
pub use validate::{validate_model, validate_tuple, TupleViolation};

use crate::diag::Diagnostic;
use crate::odrl::{Constraint, LeftOperand};
use crate::value::ParamType;

pub const SCHEMA_VERSION: &str = "1.1";
/// Deepest rewrite tree a model may declare.
pub const MAX_TREE_DEPTH: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("malformed interchange document: {0}")]
    MalformedDocument(String),
    #[error("invalid model: {}", summarize(.0))]
    InvalidModel(Vec<Diagnostic>),
}

fn summarize(diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .map(|d| format!("{} {}: {}", d.code, d.path, d.message))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuthorizationModel {
    pub schema_version: String,
    pub type_definitions: Vec<TypeDefinition>,
    pub conditions: BTreeMap<String, ConditionDef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeDefinition {
    pub name: String,
    pub relations: BTreeMap<String, RewriteTree>,
    pub assignable: BTreeMap<String, Vec<AssignableType>>,
}

/// One entry of a relation's directly-related user types.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AssignableType {
    pub type_name: String,
    pub relation: Option<String>,
    pub condition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RewriteTree {
    /// Users related through stored tuples.
    Direct,
    ComputedUserset(String),
    TupleToUserset { tupleset: String, computed: String },
    Union(Vec<RewriteTree>),
    Intersection(Vec<RewriteTree>),
    Exclusion {
        base: Box<RewriteTree>,
        subtract: Box<RewriteTree>,
    },
}

/// A named predicate over request and tuple context.
///
/// The predicate compares the parameter implied by its left operand
/// (`current_time`, `purpose` or `count`) against the constant right operand.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionDef {
    pub name: String,
    pub parameters: BTreeMap<String, ParamType>,
    pub predicate: Constraint,
}

impl AuthorizationModel {
    pub fn empty() -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            type_definitions: Vec::new(),
            conditions: BTreeMap::new(),
        }
    }

    /// Builds a model in canonical order.
    pub fn new(
        mut type_definitions: Vec<TypeDefinition>,
        conditions: impl IntoIterator<Item = ConditionDef>,
    ) -> Self {
        type_definitions.sort_by(|a, b| a.name.cmp(&b.name));
        for t in &mut type_definitions {
            t.canonicalize();
        }
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            type_definitions,
            conditions: conditions.into_iter().map(|c| (c.name.clone(), c)).collect(),
        }
    }

    pub fn type_def(&self, name: &str) -> Option<&TypeDefinition> {
        self.type_definitions.iter().find(|t| t.name == name)
    }

    pub fn relation(&self, type_name: &str, relation: &str) -> Option<&RewriteTree> {
        self.type_def(type_name)?.relations.get(relation)
    }
}

impl TypeDefinition {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            relations: BTreeMap::new(),
            assignable: BTreeMap::new(),
        }
    }

    pub fn with_relation(mut self, name: &str, tree: RewriteTree, assignable: Vec<AssignableType>) -> Self {
        self.relations.insert(name.to_string(), tree);
        if !assignable.is_empty() {
            self.assignable.insert(name.to_string(), assignable);
        }
        self
    }

    /// Sorts and deduplicates assignable-type lists.
    pub fn canonicalize(&mut self) {
        for list in self.assignable.values_mut() {
            list.sort();
            list.dedup();
        }
    }
}

impl AssignableType {
    pub fn user(type_name: &str) -> Self {
        Self {
            type_name: type_name.to_string(),
            relation: None,
            condition: None,
        }
    }

    pub fn userset(type_name: &str, relation: &str) -> Self {
        Self {
            type_name: type_name.to_string(),
            relation: Some(relation.to_string()),
            condition: None,
        }
    }

    pub fn with_condition(mut self, condition: &str) -> Self {
        self.condition = Some(condition.to_string());
        self
    }
}

impl RewriteTree {
    pub fn computed(relation: &str) -> Self {
        RewriteTree::ComputedUserset(relation.to_string())
    }

    pub fn tuple_to_userset(tupleset: &str, computed: &str) -> Self {
        RewriteTree::TupleToUserset {
            tupleset: tupleset.to_string(),
            computed: computed.to_string(),
        }
    }

    pub fn exclusion(base: RewriteTree, subtract: RewriteTree) -> Self {
        RewriteTree::Exclusion {
            base: Box::new(base),
            subtract: Box::new(subtract),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            RewriteTree::Direct | RewriteTree::ComputedUserset(_) | RewriteTree::TupleToUserset { .. } => 1,
            RewriteTree::Union(c) | RewriteTree::Intersection(c) => {
                1 + c.iter().map(RewriteTree::depth).max().unwrap_or(0)
            }
            RewriteTree::Exclusion { base, subtract } => 1 + base.depth().max(subtract.depth()),
        }
    }

    pub fn has_direct(&self) -> bool {
        match self {
            RewriteTree::Direct => true,
            RewriteTree::ComputedUserset(_) | RewriteTree::TupleToUserset { .. } => false,
            RewriteTree::Union(c) | RewriteTree::Intersection(c) => c.iter().any(RewriteTree::has_direct),
            RewriteTree::Exclusion { base, subtract } => base.has_direct() || subtract.has_direct(),
        }
    }

    pub fn has_exclusion(&self) -> bool {
        match self {
            RewriteTree::Exclusion { .. } => true,
            RewriteTree::Union(c) | RewriteTree::Intersection(c) => c.iter().any(RewriteTree::has_exclusion),
            _ => false,
        }
    }
}

impl ConditionDef {
    /// Condition over `predicate`, declaring its one parameter.
    pub fn new(name: impl Into<String>, predicate: Constraint) -> Self {
        let param = parameter_for(predicate.left_operand);
        Self {
            name: name.into(),
            parameters: BTreeMap::from([(param.0.to_string(), param.1)]),
            predicate,
        }
    }

    pub fn predicate_parameter(&self) -> &'static str {
        parameter_for(self.predicate.left_operand).0
    }
}

/// Context parameter compared by a predicate on `operand`, with its type.
pub fn parameter_for(operand: LeftOperand) -> (&'static str, ParamType) {
    match operand {
        LeftOperand::DateTime => ("current_time", ParamType::Timestamp),
        LeftOperand::Purpose => ("purpose", ParamType::Text),
        LeftOperand::Count => ("count", ParamType::Integer),
    }
}

pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}
