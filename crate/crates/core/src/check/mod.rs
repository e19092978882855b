//! Authorization checks over a model and a tuple snapshot.

mod condition;
mod expand;
mod oracle;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

pub use condition::{evaluate_condition, ConditionError};
pub use expand::{expand, ExpandBody, ExpandLeaf, ExpandNode};
pub use oracle::oracle_check;

use crate::rebac::{
    validate_tuple, AuthorizationModel, Edge, ObjectRef, RelationshipTuple, RewriteTree, TupleSet,
    TupleViolation, UserRef,
};
use crate::value::Value;

pub const DEFAULT_MAX_DEPTH: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRequest {
    pub object: ObjectRef,
    pub relation: String,
    pub user: ObjectRef,
    pub context: BTreeMap<String, Value>,
    /// Evaluated as if stored, never persisted.
    pub contextual_tuples: Vec<RelationshipTuple>,
}

impl CheckRequest {
    pub fn new(user: ObjectRef, relation: impl Into<String>, object: ObjectRef) -> Self {
        Self {
            object,
            relation: relation.into(),
            user,
            context: BTreeMap::new(),
            contextual_tuples: Vec::new(),
        }
    }

    pub fn with_context(mut self, key: &str, value: Value) -> Self {
        self.context.insert(key.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckOptions {
    pub max_depth: usize,
    pub memoize: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            max_depth: DEFAULT_MAX_DEPTH,
            memoize: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Decision {
    pub allowed: bool,
    pub nodes_visited: usize,
    pub max_depth_reached: usize,
    /// Some branch was cut at the depth cap and counted as false.
    pub depth_exceeded: bool,
    pub cycle_detected: bool,
    /// Sorted, without duplicates.
    pub missing_context: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("unknown type or relation: {0}")]
    UnknownTypeOrRelation(String),
    #[error("malformed context: {0}")]
    MalformedContext(String),
    #[error("invalid contextual tuple {tuple}: {reason}")]
    InvalidContextualTuple { tuple: String, reason: String },
}

/// Stored tuples plus the request's contextual tuples.
pub(crate) struct Graph<'a> {
    stored: &'a TupleSet,
    extra: TupleSet,
}

impl<'a> Graph<'a> {
    pub(crate) fn new(stored: &'a TupleSet, extra: TupleSet) -> Self {
        Self { stored, extra }
    }

    pub(crate) fn edges<'b>(&'b self, object: &ObjectRef, relation: &str) -> impl Iterator<Item = &'b Edge> + 'b {
        let extra: Vec<&Edge> = self
            .extra
            .edges(object, relation)
            .filter(|e| {
                !self.stored.contains(&RelationshipTuple {
                    user: e.user.clone(),
                    relation: relation.to_string(),
                    object: object.clone(),
                    condition: e.condition.clone(),
                })
            })
            .collect();
        self.stored.edges(object, relation).chain(extra)
    }

    pub(crate) fn tuples(&self) -> impl Iterator<Item = RelationshipTuple> + '_ {
        self.stored.iter().chain(self.extra.iter().filter(|t| !self.stored.contains(t)))
    }
}

/// Validates a request against the model and returns the contextual tuples
/// as a set, with their context values typed.
pub(crate) fn prepare(model: &AuthorizationModel, request: &CheckRequest) -> Result<TupleSet, CheckError> {
    let type_name = &request.object.type_name;
    if model.relation(type_name, &request.relation).is_none() {
        return Err(CheckError::UnknownTypeOrRelation(format!(
            "{type_name}#{}",
            request.relation
        )));
    }
    condition::check_context_types(model.conditions.values(), &request.context).map_err(|(name, ty)| {
        CheckError::MalformedContext(format!("parameter `{name}` expects a {} value", ty.name()))
    })?;
    let mut extra = TupleSet::new();
    for t in &request.contextual_tuples {
        let t = validate_tuple(model, t).map_err(|e| match e {
            TupleViolation::UnknownTypeOrRelation(m) => CheckError::UnknownTypeOrRelation(m),
            other => CheckError::InvalidContextualTuple {
                tuple: t.to_string(),
                reason: other.to_string(),
            },
        })?;
        extra.insert(t);
    }
    Ok(extra)
}

/// Typed request context, coerced to each declared parameter type.
pub(crate) fn typed_context(model: &AuthorizationModel, context: &BTreeMap<String, Value>) -> BTreeMap<String, Value> {
    context
        .iter()
        .map(|(k, v)| {
            let declared = model.conditions.values().find_map(|c| c.parameters.get(k));
            let v = declared.and_then(|ty| v.coerce(*ty)).unwrap_or_else(|| v.clone());
            (k.clone(), v)
        })
        .collect()
}

pub fn check(
    tuples: &TupleSet,
    model: &AuthorizationModel,
    request: &CheckRequest,
) -> Result<Decision, CheckError> {
    check_with(tuples, model, request, CheckOptions::default())
}

pub fn check_with(
    tuples: &TupleSet,
    model: &AuthorizationModel,
    request: &CheckRequest,
    options: CheckOptions,
) -> Result<Decision, CheckError> {
    let extra = prepare(model, request)?;
    let context = typed_context(model, &request.context);
    let mut eval = Evaluator {
        graph: Graph::new(tuples, extra),
        model,
        user: &request.user,
        context: &context,
        options,
        memo: HashMap::new(),
        active: HashMap::new(),
        depth: 0,
        missing: BTreeSet::new(),
        decision: Decision::default(),
    };
    let result = eval.node(&request.object, &request.relation);
    let mut decision = eval.decision;
    decision.allowed = result.value;
    decision.missing_context = eval.missing.into_iter().collect();
    Ok(decision)
}

/// A branch result. `taint` is the shallowest active frame (1-based) the
/// result depended on through a cycle, `DEPTH_CUT` after a depth cut, or
/// `CLEAN`.
#[derive(Clone, Copy)]
struct Eval {
    value: bool,
    taint: usize,
}

const CLEAN: usize = usize::MAX;
const DEPTH_CUT: usize = 0;

impl Eval {
    fn exact(value: bool) -> Self {
        Self { value, taint: CLEAN }
    }
}

struct Evaluator<'a> {
    graph: Graph<'a>,
    model: &'a AuthorizationModel,
    user: &'a ObjectRef,
    context: &'a BTreeMap<String, Value>,
    options: CheckOptions,
    memo: HashMap<(ObjectRef, String), bool>,
    active: HashMap<(ObjectRef, String), usize>,
    depth: usize,
    missing: BTreeSet<String>,
    decision: Decision,
}

impl Evaluator<'_> {
    fn node(&mut self, object: &ObjectRef, relation: &str) -> Eval {
        self.decision.nodes_visited += 1;
        let key = (object.clone(), relation.to_string());
        if let Some(&v) = self.memo.get(&key) {
            return Eval::exact(v);
        }
        if let Some(&frame) = self.active.get(&key) {
            self.decision.cycle_detected = true;
            return Eval { value: false, taint: frame };
        }
        if self.depth >= self.options.max_depth {
            self.decision.depth_exceeded = true;
            return Eval { value: false, taint: DEPTH_CUT };
        }
        let Some(tree) = self.model.relation(&object.type_name, relation) else {
            return Eval::exact(false);
        };
        self.depth += 1;
        let frame = self.depth;
        self.decision.max_depth_reached = self.decision.max_depth_reached.max(self.depth);
        self.active.insert(key.clone(), frame);
        let mut result = self.tree(object, relation, tree);
        self.active.remove(&key);
        self.depth -= 1;
        if result.taint >= frame {
            result.taint = CLEAN;
            if self.options.memoize {
                self.memo.insert(key, result.value);
            }
        }
        result
    }

    fn tree(&mut self, object: &ObjectRef, relation: &str, tree: &RewriteTree) -> Eval {
        match tree {
            RewriteTree::Direct => self.direct(object, relation),
            RewriteTree::ComputedUserset(r) => self.node(object, r),
            RewriteTree::TupleToUserset { tupleset, computed } => {
                let edges: Vec<Edge> = self.graph.edges(object, tupleset).cloned().collect();
                let mut taint = CLEAN;
                for e in &edges {
                    let UserRef::Direct(parent) = &e.user else {
                        continue;
                    };
                    if !self.condition_holds(e) {
                        continue;
                    }
                    let r = self.node(parent, computed);
                    taint = taint.min(r.taint);
                    if r.value {
                        return Eval { value: true, taint };
                    }
                }
                Eval { value: false, taint }
            }
            RewriteTree::Union(children) => {
                let mut taint = CLEAN;
                for child in children {
                    let r = self.tree(object, relation, child);
                    taint = taint.min(r.taint);
                    if r.value {
                        return Eval { value: true, taint };
                    }
                }
                Eval { value: false, taint }
            }
            RewriteTree::Intersection(children) => {
                let mut taint = CLEAN;
                for child in children {
                    let r = self.tree(object, relation, child);
                    taint = taint.min(r.taint);
                    if !r.value {
                        return Eval { value: false, taint };
                    }
                }
                Eval { value: !children.is_empty(), taint }
            }
            RewriteTree::Exclusion { base, subtract } => {
                let b = self.tree(object, relation, base);
                if !b.value {
                    return b;
                }
                let s = self.tree(object, relation, subtract);
                // A subtract branch cut at the depth cap cannot prove absence.
                let value = !s.value && s.taint != DEPTH_CUT;
                Eval {
                    value,
                    taint: b.taint.min(s.taint),
                }
            }
        }
    }

    fn direct(&mut self, object: &ObjectRef, relation: &str) -> Eval {
        let edges: Vec<Edge> = self.graph.edges(object, relation).cloned().collect();
        for e in &edges {
            if let UserRef::Direct(u) = &e.user {
                if u == self.user && self.condition_holds(e) {
                    return Eval::exact(true);
                }
            }
        }
        let mut taint = CLEAN;
        for e in &edges {
            if let UserRef::Userset(o, r) = &e.user {
                if !self.condition_holds(e) {
                    continue;
                }
                let res = self.node(o, r);
                taint = taint.min(res.taint);
                if res.value {
                    return Eval { value: true, taint };
                }
            }
        }
        Eval { value: false, taint }
    }

    fn condition_holds(&mut self, edge: &Edge) -> bool {
        let Some(tc) = &edge.condition else {
            return true;
        };
        let Some(def) = self.model.conditions.get(&tc.name) else {
            return false;
        };
        match evaluate_condition(def, &tc.context, self.context) {
            Ok(v) => v,
            Err(ConditionError::MissingParameter(p)) => {
                self.missing.insert(p);
                false
            }
            Err(ConditionError::TypeMismatch { .. }) => false,
        }
    }
}
