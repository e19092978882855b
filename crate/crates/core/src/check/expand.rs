use std::collections::{BTreeMap, BTreeSet};

use super::{evaluate_condition, CheckError, DEFAULT_MAX_DEPTH};
use crate::rebac::{AuthorizationModel, Edge, ObjectRef, RewriteTree, TupleSet, UserRef};

/// The expansion of one `(object, relation)` userset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandNode {
    pub object: ObjectRef,
    pub relation: String,
    pub body: ExpandBody,
}

/// Mirrors a rewrite tree, with stored tuples resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExpandBody {
    Leaves(Vec<ExpandLeaf>),
    Computed(Box<ExpandNode>),
    TupleToUserset(Vec<ExpandNode>),
    Union(Vec<ExpandBody>),
    Intersection(Vec<ExpandBody>),
    Exclusion {
        base: Box<ExpandBody>,
        subtract: Box<ExpandBody>,
    },
    /// Not expanded: a cycle back to an enclosing node, or the depth cap.
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExpandLeaf {
    User(ObjectRef),
    Userset(ExpandNode),
}

/// Expands `(object, relation)` into a tree of resolved users.
///
/// Conditioned tuples are kept only when their condition holds on the
/// tuple's own context. Pass `None` for the default depth cap.
pub fn expand(
    tuples: &TupleSet,
    model: &AuthorizationModel,
    object: &ObjectRef,
    relation: &str,
    max_depth: Option<usize>,
) -> Result<ExpandNode, CheckError> {
    if model.relation(&object.type_name, relation).is_none() {
        return Err(CheckError::UnknownTypeOrRelation(format!(
            "{}#{relation}",
            object.type_name
        )));
    }
    let mut ex = Expander {
        tuples,
        model,
        max_depth: max_depth.unwrap_or(DEFAULT_MAX_DEPTH),
        path: Vec::new(),
    };
    Ok(ex.node(object, relation))
}

struct Expander<'a> {
    tuples: &'a TupleSet,
    model: &'a AuthorizationModel,
    max_depth: usize,
    path: Vec<(ObjectRef, String)>,
}

impl Expander<'_> {
    fn node(&mut self, object: &ObjectRef, relation: &str) -> ExpandNode {
        let key = (object.clone(), relation.to_string());
        let body = match self.model.relation(&object.type_name, relation) {
            _ if self.path.contains(&key) || self.path.len() >= self.max_depth => ExpandBody::Truncated,
            None => ExpandBody::Leaves(Vec::new()),
            Some(tree) => {
                self.path.push(key);
                let body = self.body(object, relation, tree);
                self.path.pop();
                body
            }
        };
        ExpandNode {
            object: object.clone(),
            relation: relation.to_string(),
            body,
        }
    }

    fn holds(&self, edge: &Edge) -> bool {
        let Some(tc) = &edge.condition else {
            return true;
        };
        self.model
            .conditions
            .get(&tc.name)
            .is_some_and(|def| evaluate_condition(def, &tc.context, &BTreeMap::new()) == Ok(true))
    }

    fn body(&mut self, object: &ObjectRef, relation: &str, tree: &RewriteTree) -> ExpandBody {
        match tree {
            RewriteTree::Direct => {
                let edges: Vec<Edge> = self.tuples.edges(object, relation).filter(|e| self.holds(e)).cloned().collect();
                let leaves = edges
                    .into_iter()
                    .map(|e| match e.user {
                        UserRef::Direct(u) => ExpandLeaf::User(u),
                        UserRef::Userset(o, r) => ExpandLeaf::Userset(self.node(&o, &r)),
                    })
                    .collect();
                ExpandBody::Leaves(leaves)
            }
            RewriteTree::ComputedUserset(r) => ExpandBody::Computed(Box::new(self.node(object, r))),
            RewriteTree::TupleToUserset { tupleset, computed } => {
                let parents: Vec<ObjectRef> = self
                    .tuples
                    .edges(object, tupleset)
                    .filter(|e| self.holds(e))
                    .filter_map(|e| match &e.user {
                        UserRef::Direct(o) => Some(o.clone()),
                        UserRef::Userset(..) => None,
                    })
                    .collect();
                ExpandBody::TupleToUserset(parents.iter().map(|p| self.node(p, computed)).collect())
            }
            RewriteTree::Union(c) => ExpandBody::Union(c.iter().map(|t| self.body(object, relation, t)).collect()),
            RewriteTree::Intersection(c) => {
                ExpandBody::Intersection(c.iter().map(|t| self.body(object, relation, t)).collect())
            }
            RewriteTree::Exclusion { base, subtract } => ExpandBody::Exclusion {
                base: Box::new(self.body(object, relation, base)),
                subtract: Box::new(self.body(object, relation, subtract)),
            },
        }
    }
}

impl ExpandNode {
    /// Users the tree resolves to, applying its set operations.
    pub fn flatten(&self) -> BTreeSet<ObjectRef> {
        self.body.flatten()
    }
}

impl ExpandBody {
    pub fn flatten(&self) -> BTreeSet<ObjectRef> {
        match self {
            ExpandBody::Leaves(leaves) => leaves
                .iter()
                .flat_map(|l| match l {
                    ExpandLeaf::User(u) => BTreeSet::from([u.clone()]),
                    ExpandLeaf::Userset(n) => n.flatten(),
                })
                .collect(),
            ExpandBody::Computed(n) => n.flatten(),
            ExpandBody::TupleToUserset(nodes) => nodes.iter().flat_map(ExpandNode::flatten).collect(),
            ExpandBody::Union(c) => c.iter().flat_map(ExpandBody::flatten).collect(),
            ExpandBody::Intersection(c) => {
                let mut sets = c.iter().map(ExpandBody::flatten);
                let Some(first) = sets.next() else {
                    return BTreeSet::new();
                };
                sets.fold(first, |acc, s| acc.intersection(&s).cloned().collect())
            }
            ExpandBody::Exclusion { base, subtract } => {
                base.flatten().difference(&subtract.flatten()).cloned().collect()
            }
            ExpandBody::Truncated => BTreeSet::new(),
        }
    }

    /// Number of leaves, counting users only.
    pub fn leaf_count(&self) -> usize {
        match self {
            ExpandBody::Leaves(leaves) => leaves
                .iter()
                .map(|l| match l {
                    ExpandLeaf::User(_) => 1,
                    ExpandLeaf::Userset(n) => n.body.leaf_count(),
                })
                .sum(),
            ExpandBody::Computed(n) => n.body.leaf_count(),
            ExpandBody::TupleToUserset(nodes) => nodes.iter().map(|n| n.body.leaf_count()).sum(),
            ExpandBody::Union(c) | ExpandBody::Intersection(c) => c.iter().map(ExpandBody::leaf_count).sum(),
            ExpandBody::Exclusion { base, subtract } => base.leaf_count() + subtract.leaf_count(),
            ExpandBody::Truncated => 0,
        }
    }
}
