use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::{
    is_identifier, parameter_for, AuthorizationModel, RewriteTree, TypeDefinition, MAX_TREE_DEPTH,
    RelationshipTuple, UserRef, SCHEMA_VERSION,
};
use thiserror::Error;

use crate::diag::{codes, sort_diagnostics, Diagnostic};

/// Checks every model invariant. An empty list means the model is valid.
pub fn validate_model(model: &AuthorizationModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if model.schema_version != SCHEMA_VERSION {
        out.push(Diagnostic::error(
            codes::SCHEMA_VERSION,
            "/schema_version",
            format!(
                "schema version `{}` is not supported; expected {SCHEMA_VERSION}",
                model.schema_version
            ),
        ));
    }

    let mut seen = HashSet::new();
    for t in &model.type_definitions {
        if !seen.insert(t.name.as_str()) {
            out.push(Diagnostic::error(
                codes::DUPLICATE_TYPE,
                format!("/type_definitions/{}", t.name),
                format!("type `{}` is defined more than once", t.name),
            ));
        }
    }
    if model
        .type_definitions
        .windows(2)
        .any(|w| w[0].name > w[1].name)
    {
        out.push(Diagnostic::error(
            codes::NON_CANONICAL,
            "/type_definitions",
            "type definitions are not sorted by name",
        ));
    }

    for t in &model.type_definitions {
        check_type(model, t, &mut out);
    }

    for (name, cond) in &model.conditions {
        let path = format!("/conditions/{name}");
        if &cond.name != name {
            out.push(Diagnostic::error(
                codes::NON_CANONICAL,
                path.clone(),
                format!("condition keyed `{name}` is named `{}`", cond.name),
            ));
        }
        let (param, ty) = parameter_for(cond.predicate.left_operand);
        match cond.parameters.get(param) {
            None => out.push(Diagnostic::error(
                codes::UNDECLARED_PARAMETER,
                path.clone(),
                format!("predicate uses undeclared parameter `{param}`"),
            )),
            Some(declared) if *declared != ty => out.push(Diagnostic::error(
                codes::UNDECLARED_PARAMETER,
                path.clone(),
                format!("parameter `{param}` must be declared as {}", ty.name()),
            )),
            Some(_) => {}
        }
        if let Err(reason) = cond.predicate.check_well_formed() {
            out.push(Diagnostic::error(codes::UNDECLARED_PARAMETER, path, reason));
        }
    }

    if out.iter().all(|d| !d.is_error()) {
        for (type_name, relation) in unstratified(model) {
            out.push(Diagnostic::error(
                codes::UNSTRATIFIED_EXCLUSION,
                format!("/type_definitions/{type_name}/relations/{relation}"),
                "relation depends on itself through the subtracted side of an exclusion",
            ));
        }
    }
    sort_diagnostics(&mut out);
    out
}

fn check_type(model: &AuthorizationModel, t: &TypeDefinition, out: &mut Vec<Diagnostic>) {
    let tpath = format!("/type_definitions/{}", t.name);
    if !is_identifier(&t.name) {
        out.push(Diagnostic::error(
            codes::BAD_IDENTIFIER,
            tpath.clone(),
            format!("type name `{}` is not a lowercase identifier", t.name),
        ));
    }
    for name in t.assignable.keys() {
        if !t.relations.contains_key(name) {
            out.push(Diagnostic::error(
                codes::METADATA_MISMATCH,
                format!("{tpath}/metadata/{name}"),
                format!("metadata for undefined relation `{name}`"),
            ));
        }
    }
    for (name, tree) in &t.relations {
        let rpath = format!("{tpath}/relations/{name}");
        if !is_identifier(name) {
            out.push(Diagnostic::error(
                codes::BAD_IDENTIFIER,
                rpath.clone(),
                format!("relation name `{name}` is not a lowercase identifier"),
            ));
        }
        if tree.depth() > MAX_TREE_DEPTH {
            out.push(Diagnostic::error(
                codes::TREE_TOO_DEEP,
                rpath.clone(),
                format!("rewrite depth {} exceeds {MAX_TREE_DEPTH}", tree.depth()),
            ));
        }
        let assignable = t.assignable.get(name).map(Vec::as_slice).unwrap_or_default();
        match (tree.has_direct(), assignable.is_empty()) {
            (true, true) => out.push(Diagnostic::error(
                codes::METADATA_MISMATCH,
                rpath.clone(),
                "direct relation declares no assignable user types",
            )),
            (false, false) => out.push(Diagnostic::error(
                codes::METADATA_MISMATCH,
                rpath.clone(),
                "assignable user types declared for a relation without a direct leaf",
            )),
            _ => {}
        }
        if assignable.windows(2).any(|w| w[0] >= w[1]) {
            out.push(Diagnostic::error(
                codes::NON_CANONICAL,
                rpath.clone(),
                "assignable user types are not sorted and unique",
            ));
        }
        for a in assignable {
            match model.type_def(&a.type_name) {
                None => out.push(Diagnostic::error(
                    codes::UNKNOWN_USER_TYPE,
                    rpath.clone(),
                    format!("assignable type `{}` is not defined", a.type_name),
                )),
                Some(ut) => {
                    if let Some(rel) = &a.relation {
                        if !ut.relations.contains_key(rel) {
                            out.push(Diagnostic::error(
                                codes::UNKNOWN_USER_TYPE,
                                rpath.clone(),
                                format!("assignable userset `{}#{rel}` names an undefined relation", a.type_name),
                            ));
                        }
                    }
                }
            }
            if let Some(c) = &a.condition {
                if !model.conditions.contains_key(c) {
                    out.push(Diagnostic::error(
                        codes::UNKNOWN_CONDITION,
                        rpath.clone(),
                        format!("condition `{c}` is not defined"),
                    ));
                }
            }
        }
        check_tree(model, t, tree, &rpath, out);
    }
}

fn check_tree(
    model: &AuthorizationModel,
    t: &TypeDefinition,
    tree: &RewriteTree,
    path: &str,
    out: &mut Vec<Diagnostic>,
) {
    let dangling = |out: &mut Vec<Diagnostic>, rel: &str, on: &str| {
        out.push(Diagnostic::error(
            codes::DANGLING_RELATION,
            path.to_string(),
            format!("references relation `{rel}` which does not exist on `{on}`"),
        ))
    };
    match tree {
        RewriteTree::Direct => {}
        RewriteTree::ComputedUserset(rel) => {
            if !t.relations.contains_key(rel) {
                dangling(out, rel, &t.name);
            }
        }
        RewriteTree::TupleToUserset { tupleset, computed } => {
            if !t.relations.contains_key(tupleset) {
                dangling(out, tupleset, &t.name);
                return;
            }
            let targets: Vec<_> = t
                .assignable
                .get(tupleset)
                .into_iter()
                .flatten()
                .filter(|a| a.relation.is_none())
                .filter_map(|a| model.type_def(&a.type_name))
                .collect();
            if !targets.iter().any(|u| u.relations.contains_key(computed)) {
                dangling(out, computed, &format!("any type related through `{tupleset}`"));
            }
        }
        RewriteTree::Union(children) | RewriteTree::Intersection(children) => {
            if children.len() < 2 {
                out.push(Diagnostic::error(
                    codes::NARROW_SET_OPERATION,
                    path.to_string(),
                    "union and intersection need at least two children",
                ));
            }
            for c in children {
                check_tree(model, t, c, path, out);
            }
        }
        RewriteTree::Exclusion { base, subtract } => {
            check_tree(model, t, base, path, out);
            check_tree(model, t, subtract, path, out);
        }
    }
}

type Node<'a> = (&'a str, &'a str);

/// Relations that reach themselves through a subtracted branch.
fn unstratified(model: &AuthorizationModel) -> BTreeSet<(String, String)> {
    let mut edges: BTreeMap<Node, Vec<(Node, bool)>> = BTreeMap::new();
    for t in &model.type_definitions {
        for (name, tree) in &t.relations {
            let from = (t.name.as_str(), name.as_str());
            let list = edges.entry(from).or_default();
            collect_edges(model, t, name, tree, false, list);
        }
    }
    let reaches = |start: Node, goal: Node| -> bool {
        let mut stack = vec![start];
        let mut seen = HashSet::new();
        while let Some(n) = stack.pop() {
            if n == goal {
                return true;
            }
            if seen.insert(n) {
                stack.extend(edges.get(&n).into_iter().flatten().map(|(m, _)| *m));
            }
        }
        false
    };
    let mut bad = BTreeSet::new();
    for (from, list) in &edges {
        for (to, negative) in list {
            if *negative && reaches(*to, *from) {
                bad.insert((from.0.to_string(), from.1.to_string()));
            }
        }
    }
    bad
}

fn collect_edges<'a>(
    model: &'a AuthorizationModel,
    t: &'a TypeDefinition,
    relation: &str,
    tree: &'a RewriteTree,
    negative: bool,
    out: &mut Vec<(Node<'a>, bool)>,
) {
    match tree {
        RewriteTree::Direct => {
            for a in t.assignable.get(relation).into_iter().flatten() {
                if let Some(rel) = &a.relation {
                    out.push(((a.type_name.as_str(), rel.as_str()), negative));
                }
            }
        }
        RewriteTree::ComputedUserset(rel) => out.push(((t.name.as_str(), rel.as_str()), negative)),
        RewriteTree::TupleToUserset { tupleset, computed } => {
            out.push(((t.name.as_str(), tupleset.as_str()), negative));
            for a in t.assignable.get(tupleset).into_iter().flatten() {
                if let Some(u) = model.type_def(&a.type_name) {
                    if u.relations.contains_key(computed) {
                        out.push(((u.name.as_str(), computed.as_str()), negative));
                    }
                }
            }
        }
        RewriteTree::Union(c) | RewriteTree::Intersection(c) => {
            for child in c {
                collect_edges(model, t, relation, child, negative, out);
            }
        }
        RewriteTree::Exclusion { base, subtract } => {
            collect_edges(model, t, relation, base, negative, out);
            collect_edges(model, t, relation, subtract, true, out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TupleViolation {
    #[error("unknown type or relation: {0}")]
    UnknownTypeOrRelation(String),
    #[error("{0}")]
    NotAssignable(String),
    #[error("{0}")]
    BadCondition(String),
}

/// Checks a tuple against a model and returns it with condition context
/// values converted to their declared parameter types.
pub fn validate_tuple(
    model: &AuthorizationModel,
    tuple: &RelationshipTuple,
) -> Result<RelationshipTuple, TupleViolation> {
    let object_type = &tuple.object.type_name;
    let t = model
        .type_def(object_type)
        .ok_or_else(|| TupleViolation::UnknownTypeOrRelation(format!("type `{object_type}`")))?;
    if !t.relations.contains_key(&tuple.relation) {
        return Err(TupleViolation::UnknownTypeOrRelation(format!(
            "relation `{}` on type `{object_type}`",
            tuple.relation
        )));
    }
    let user_type = &tuple.user.object().type_name;
    if model.type_def(user_type).is_none() {
        return Err(TupleViolation::UnknownTypeOrRelation(format!("type `{user_type}`")));
    }
    let user_relation = match &tuple.user {
        UserRef::Direct(_) => None,
        UserRef::Userset(_, r) => Some(r.as_str()),
    };
    let condition = tuple.condition.as_ref().map(|c| c.name.as_str());
    let allowed = t.assignable.get(&tuple.relation).into_iter().flatten().any(|a| {
        a.type_name == *user_type && a.relation.as_deref() == user_relation && a.condition.as_deref() == condition
    });
    if !allowed {
        let shown = match (user_relation, condition) {
            (Some(r), Some(c)) => format!("{user_type}#{r} with {c}"),
            (Some(r), None) => format!("{user_type}#{r}"),
            (None, Some(c)) => format!("{user_type} with {c}"),
            (None, None) => user_type.clone(),
        };
        return Err(TupleViolation::NotAssignable(format!(
            "`{shown}` is not assignable to `{object_type}#{}`",
            tuple.relation
        )));
    }
    let mut out = tuple.clone();
    if let Some(tc) = &mut out.condition {
        let def = model
            .conditions
            .get(&tc.name)
            .ok_or_else(|| TupleViolation::BadCondition(format!("condition `{}` is not defined", tc.name)))?;
        for (key, value) in tc.context.iter_mut() {
            let ty = def.parameters.get(key).ok_or_else(|| {
                TupleViolation::BadCondition(format!("condition `{}` has no parameter `{key}`", tc.name))
            })?;
            *value = value.coerce(*ty).ok_or_else(|| {
                TupleViolation::BadCondition(format!("parameter `{key}` expects a {} value", ty.name()))
            })?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{AssignableType, ConditionDef};
    use super::*;
    use crate::odrl::{Constraint, LeftOperand, Operator};
    use crate::value::Value;

    fn codes(d: &[Diagnostic]) -> Vec<&str> {
        d.iter().map(|d| d.code.as_str()).collect()
    }

    fn user() -> TypeDefinition {
        TypeDefinition::new("user")
    }

    #[test]
    fn empty_model_is_valid() {
        assert!(validate_model(&AuthorizationModel::empty()).is_empty());
    }

    #[test]
    fn dangling_computed_relation() {
        let asset = TypeDefinition::new("asset").with_relation(
            "can_train",
            RewriteTree::computed("consumer"),
            vec![],
        );
        let d = validate_model(&AuthorizationModel::new(vec![asset, user()], []));
        assert_eq!(codes(&d), ["FGA003"]);
        assert!(d[0].is_error());
    }

    #[test]
    fn metadata_must_match_direct_leaves() {
        let asset = TypeDefinition::new("asset").with_relation("owner", RewriteTree::Direct, vec![]);
        let d = validate_model(&AuthorizationModel::new(vec![asset, user()], []));
        assert_eq!(codes(&d), ["FGA004"]);

        let asset = TypeDefinition::new("asset")
            .with_relation("owner", RewriteTree::Direct, vec![AssignableType::user("user")])
            .with_relation("viewer", RewriteTree::computed("owner"), vec![AssignableType::user("user")]);
        let d = validate_model(&AuthorizationModel::new(vec![asset, user()], []));
        assert_eq!(codes(&d), ["FGA004"]);
    }

    #[test]
    fn unknown_types_and_conditions() {
        let asset = TypeDefinition::new("asset").with_relation(
            "owner",
            RewriteTree::Direct,
            vec![
                AssignableType::user("group"),
                AssignableType::user("user").with_condition("nope"),
            ],
        );
        let d = validate_model(&AuthorizationModel::new(vec![asset, user()], []));
        assert_eq!(codes(&d), ["FGA005", "FGA006"]);
    }

    #[test]
    fn narrow_union_and_depth() {
        let asset = TypeDefinition::new("asset")
            .with_relation("owner", RewriteTree::Direct, vec![AssignableType::user("user")])
            .with_relation("x", RewriteTree::Union(vec![RewriteTree::computed("owner")]), vec![]);
        let d = validate_model(&AuthorizationModel::new(vec![asset, user()], []));
        assert_eq!(codes(&d), ["FGA007"]);

        let mut deep = RewriteTree::computed("owner");
        for _ in 0..10 {
            deep = RewriteTree::exclusion(deep, RewriteTree::computed("owner"));
        }
        let asset = TypeDefinition::new("asset")
            .with_relation("owner", RewriteTree::Direct, vec![AssignableType::user("user")])
            .with_relation("x", deep, vec![]);
        let d = validate_model(&AuthorizationModel::new(vec![asset, user()], []));
        assert_eq!(codes(&d), ["FGA008"]);
    }

    #[test]
    fn ordering_and_version() {
        let mut m = AuthorizationModel::new(vec![user(), TypeDefinition::new("asset")], []);
        m.type_definitions.swap(0, 1);
        m.schema_version = "1.0".into();
        assert_eq!(codes(&validate_model(&m)), ["FGA010", "FGA009"]);
    }

    #[test]
    fn condition_parameters() {
        let mut c = ConditionDef::new(
            "c",
            Constraint::new(LeftOperand::DateTime, Operator::Lt, Value::Timestamp(0)),
        );
        c.parameters.clear();
        let d = validate_model(&AuthorizationModel::new(vec![], [c]));
        assert_eq!(codes(&d), ["FGA011"]);
    }

    #[test]
    fn tuple_to_userset_targets() {
        let folder = TypeDefinition::new("folder")
            .with_relation("viewer", RewriteTree::Direct, vec![AssignableType::user("user")]);
        let doc = TypeDefinition::new("doc")
            .with_relation("parent", RewriteTree::Direct, vec![AssignableType::user("folder")])
            .with_relation("viewer", RewriteTree::tuple_to_userset("parent", "viewer"), vec![])
            .with_relation("editor", RewriteTree::tuple_to_userset("parent", "editor"), vec![]);
        let d = validate_model(&AuthorizationModel::new(vec![doc, folder, user()], []));
        assert_eq!(codes(&d), ["FGA003"]);
        assert_eq!(d[0].path, "/type_definitions/doc/relations/editor");
    }

    #[test]
    fn exclusion_cycles_are_rejected() {
        let doc = TypeDefinition::new("doc")
            .with_relation("banned", RewriteTree::Direct, vec![AssignableType::user("user")])
            .with_relation(
                "a",
                RewriteTree::exclusion(RewriteTree::computed("banned"), RewriteTree::computed("b")),
                vec![],
            )
            .with_relation("b", RewriteTree::computed("a"), vec![]);
        let d = validate_model(&AuthorizationModel::new(vec![doc, user()], []));
        assert_eq!(codes(&d), ["FGA012"]);

        // A positive cycle is fine.
        let doc = TypeDefinition::new("doc")
            .with_relation(
                "a",
                RewriteTree::Union(vec![RewriteTree::Direct, RewriteTree::computed("b")]),
                vec![AssignableType::user("user")],
            )
            .with_relation("b", RewriteTree::computed("a"), vec![]);
        assert!(validate_model(&AuthorizationModel::new(vec![doc, user()], [])).is_empty());
    }

    #[test]
    fn exclusion_cycle_through_userset_metadata() {
        let group = TypeDefinition::new("group")
            .with_relation("banned", RewriteTree::Direct, vec![AssignableType::user("user")])
            .with_relation(
                "member",
                RewriteTree::exclusion(RewriteTree::Direct, RewriteTree::computed("banned")),
                vec![AssignableType::user("user")],
            )
            .with_relation(
                "blocked",
                RewriteTree::exclusion(RewriteTree::Direct, RewriteTree::computed("member")),
                vec![AssignableType::userset("group", "blocked"), AssignableType::user("user")],
            );
        let d = validate_model(&AuthorizationModel::new(vec![group, user()], []));
        assert!(d.is_empty(), "{d:?}");

        let group = TypeDefinition::new("group").with_relation(
            "member",
            RewriteTree::exclusion(RewriteTree::Direct, RewriteTree::Direct),
            vec![AssignableType::userset("group", "member"), AssignableType::user("user")],
        );
        let d = validate_model(&AuthorizationModel::new(vec![group, user()], []));
        assert_eq!(codes(&d), ["FGA012"]);
    }
}
