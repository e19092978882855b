//! Reference semantics: a stratified least fixpoint over every
//! `(object, relation)` pair, computed without search or memoization.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::visit::Dfs;

use super::{evaluate_condition, prepare, typed_context, CheckError, CheckRequest, Decision, Graph};
use crate::rebac::{AuthorizationModel, Edge, ObjectRef, RewriteTree, TupleSet, UserRef};
use crate::value::Value;

type Pair = (String, String);
type Users = BTreeSet<ObjectRef>;

/// Same contract as [`super::check`], computed by brute force.
///
/// `cycle_detected` reports whether the requested relation depends on a
/// recursive group of relations. `nodes_visited` counts pair evaluations.
pub fn oracle_check(
    tuples: &TupleSet,
    model: &AuthorizationModel,
    request: &CheckRequest,
) -> Result<Decision, CheckError> {
    let extra = prepare(model, request)?;
    let context = typed_context(model, &request.context);
    let graph = Graph::new(tuples, extra);

    let mut objects: BTreeMap<String, BTreeSet<ObjectRef>> = BTreeMap::new();
    let mut note = |o: &ObjectRef| {
        objects.entry(o.type_name.clone()).or_default().insert(o.clone());
    };
    for t in graph.tuples() {
        note(&t.object);
        note(t.user.object());
    }
    note(&request.object);
    note(&request.user);

    let (deps, index) = dependency_graph(model);
    let mut state = Fixpoint {
        model,
        graph: &graph,
        context: &context,
        sets: HashMap::new(),
        missing: BTreeSet::new(),
        evaluations: 0,
    };
    let groups = tarjan_scc(&deps);
    for group in &groups {
        let pairs: Vec<&Pair> = group.iter().map(|n| &deps[*n]).collect();
        loop {
            let mut changed = false;
            for (type_name, relation) in &pairs {
                for object in objects.get(type_name).into_iter().flatten() {
                    let tree = &model.type_def(type_name).expect("type in graph").relations[relation];
                    let users = state.eval(object, tree, relation);
                    state.evaluations += 1;
                    let key = (object.clone(), relation.to_string());
                    if state.sets.get(&key) != Some(&users) {
                        state.sets.insert(key, users);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }

    let root = index[&(request.object.type_name.clone(), request.relation.clone())];
    let recursive: HashSet<NodeIndex> = groups
        .iter()
        .filter(|g| g.len() > 1 || deps.contains_edge(g[0], g[0]))
        .flatten()
        .copied()
        .collect();
    let mut cyclic = false;
    let mut dfs = Dfs::new(&deps, root);
    while let Some(n) = dfs.next(&deps) {
        if recursive.contains(&n) {
            cyclic = true;
            break;
        }
    }

    let allowed = state
        .sets
        .get(&(request.object.clone(), request.relation.clone()))
        .is_some_and(|s| s.contains(&request.user));
    Ok(Decision {
        allowed,
        nodes_visited: state.evaluations,
        max_depth_reached: 0,
        depth_exceeded: false,
        cycle_detected: cyclic,
        missing_context: state.missing.into_iter().collect(),
    })
}

/// Edges run from a relation to the relations its value is computed from.
fn dependency_graph(model: &AuthorizationModel) -> (DiGraph<Pair, ()>, HashMap<Pair, NodeIndex>) {
    let mut g = DiGraph::new();
    let mut index = HashMap::new();
    for t in &model.type_definitions {
        for r in t.relations.keys() {
            let key = (t.name.clone(), r.clone());
            index.insert(key.clone(), g.add_node(key));
        }
    }
    for t in &model.type_definitions {
        for (r, tree) in &t.relations {
            let from = index[&(t.name.clone(), r.clone())];
            let mut targets = Vec::new();
            collect(model, &t.name, r, tree, &mut targets);
            for target in targets {
                if let Some(&to) = index.get(&target) {
                    g.update_edge(from, to, ());
                }
            }
        }
    }
    (g, index)
}

fn collect(model: &AuthorizationModel, type_name: &str, relation: &str, tree: &RewriteTree, out: &mut Vec<Pair>) {
    match tree {
        RewriteTree::Direct => {
            let assignable = model.type_def(type_name).and_then(|t| t.assignable.get(relation));
            for a in assignable.into_iter().flatten() {
                if let Some(r) = &a.relation {
                    out.push((a.type_name.clone(), r.clone()));
                }
            }
        }
        RewriteTree::ComputedUserset(r) => out.push((type_name.to_string(), r.clone())),
        RewriteTree::TupleToUserset { tupleset, computed } => {
            out.push((type_name.to_string(), tupleset.clone()));
            for t in &model.type_definitions {
                if t.relations.contains_key(computed) {
                    out.push((t.name.clone(), computed.clone()));
                }
            }
        }
        RewriteTree::Union(c) | RewriteTree::Intersection(c) => {
            for child in c {
                collect(model, type_name, relation, child, out);
            }
        }
        RewriteTree::Exclusion { base, subtract } => {
            collect(model, type_name, relation, base, out);
            collect(model, type_name, relation, subtract, out);
        }
    }
}

struct Fixpoint<'a> {
    model: &'a AuthorizationModel,
    graph: &'a Graph<'a>,
    context: &'a BTreeMap<String, Value>,
    sets: HashMap<(ObjectRef, String), Users>,
    missing: BTreeSet<String>,
    evaluations: usize,
}

impl Fixpoint<'_> {
    fn members(&self, object: &ObjectRef, relation: &str) -> Users {
        self.sets
            .get(&(object.clone(), relation.to_string()))
            .cloned()
            .unwrap_or_default()
    }

    fn holds(&mut self, edge: &Edge) -> bool {
        let Some(tc) = &edge.condition else {
            return true;
        };
        let Some(def) = self.model.conditions.get(&tc.name) else {
            return false;
        };
        match evaluate_condition(def, &tc.context, self.context) {
            Ok(v) => v,
            Err(super::ConditionError::MissingParameter(p)) => {
                self.missing.insert(p);
                false
            }
            Err(_) => false,
        }
    }

    fn eval(&mut self, object: &ObjectRef, tree: &RewriteTree, relation: &str) -> Users {
        match tree {
            RewriteTree::Direct => {
                let edges: Vec<Edge> = self.graph.edges(object, relation).cloned().collect();
                let mut out = Users::new();
                for e in &edges {
                    if !self.holds(e) {
                        continue;
                    }
                    match &e.user {
                        UserRef::Direct(u) => {
                            out.insert(u.clone());
                        }
                        UserRef::Userset(o, r) => out.extend(self.members(o, r)),
                    }
                }
                out
            }
            RewriteTree::ComputedUserset(r) => self.members(object, r),
            RewriteTree::TupleToUserset { tupleset, computed } => {
                let edges: Vec<Edge> = self.graph.edges(object, tupleset).cloned().collect();
                let mut out = Users::new();
                for e in &edges {
                    if let UserRef::Direct(parent) = &e.user {
                        if self.holds(e) {
                            out.extend(self.members(parent, computed));
                        }
                    }
                }
                out
            }
            RewriteTree::Union(children) => {
                let mut out = Users::new();
                for c in children {
                    out.extend(self.eval(object, c, relation));
                }
                out
            }
            RewriteTree::Intersection(children) => {
                let mut sets = children.iter().map(|c| self.eval(object, c, relation)).collect::<Vec<_>>();
                let Some(mut out) = sets.pop() else {
                    return Users::new();
                };
                for s in &sets {
                    out.retain(|u| s.contains(u));
                }
                out
            }
            RewriteTree::Exclusion { base, subtract } => {
                let b = self.eval(object, base, relation);
                let s = self.eval(object, subtract, relation);
                b.difference(&s).cloned().collect()
            }
        }
    }
}
