//! Seeded random instances for property and conformance tests.

use std::collections::BTreeMap;

use ods_core::check::CheckRequest;
use ods_core::odrl::{
    ActionTerm, Constraint, Extensions, LeftOperand, OdrlPolicy, Operator, PartyRef, PolicyKind, Role, Rule,
};
use ods_core::profile::ods_profile;
use ods_core::rebac::{
    validate_model, AssignableType, AuthorizationModel, ConditionDef, ObjectRef, RelationshipTuple, RewriteTree,
    TupleSet, TypeDefinition, UserRef,
};
use ods_core::{Iri, Value};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

pub mod openfga;

pub use rand;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Bound of the generated time condition: 2026-01-01T00:00:00Z.
pub const TIME_BOUND: i64 = 1_767_225_600;
pub const PURPOSE_CONDITION: &str = "cond_purpose";
pub const TIME_CONDITION: &str = "cond_time";

const IDS: [&str; 3] = ["a", "b", "c"];
const USERS: [&str; 4] = ["u0", "u1", "u2", "u3"];

fn conditions() -> Vec<ConditionDef> {
    vec![
        ConditionDef::new(
            PURPOSE_CONDITION,
            Constraint::new(LeftOperand::Purpose, Operator::Eq, Value::Text("research".into())),
        ),
        ConditionDef::new(
            TIME_CONDITION,
            Constraint::new(LeftOperand::DateTime, Operator::Lteq, Value::Timestamp(TIME_BOUND)),
        ),
    ]
}

/// Options for [`random_model`].
#[derive(Debug, Clone, Copy)]
pub struct ModelShape {
    pub max_types: usize,
    pub max_relations: usize,
    pub max_depth: usize,
    pub exclusion: bool,
    pub conditions: bool,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            max_types: 5,
            max_relations: 4,
            max_depth: 4,
            exclusion: true,
            conditions: true,
        }
    }
}

/// A valid model with object types `t0`, `t1`, ... and subject type `user`.
/// Every object type's `r0` is a plain direct relation.
pub fn random_model(rng: &mut StdRng, shape: ModelShape) -> AuthorizationModel {
    loop {
        let model = model_candidate(rng, shape);
        if validate_model(&model).is_empty() {
            return model;
        }
    }
}

fn model_candidate(rng: &mut StdRng, shape: ModelShape) -> AuthorizationModel {
    let type_count = rng.random_range(1..=shape.max_types);
    let names: Vec<String> = (0..type_count).map(|i| format!("t{i}")).collect();
    let relation_counts: Vec<usize> = (0..type_count)
        .map(|_| rng.random_range(1..=shape.max_relations))
        .collect();
    let relations_of = |t: usize| (0..relation_counts[t]).map(|r| format!("r{r}")).collect::<Vec<_>>();

    let mut types = vec![TypeDefinition::new("user")];
    for t in 0..type_count {
        let mut def = TypeDefinition::new(&names[t]);
        let r0_types = direct_types(rng, &names, &relation_counts, shape, true);
        def = def.with_relation("r0", RewriteTree::Direct, r0_types.clone());
        for r in 1..relation_counts[t] {
            let ctx = TreeContext {
                relations: relations_of(t),
                own: format!("r{r}"),
                parents: r0_types
                    .iter()
                    .filter(|a| a.relation.is_none() && a.type_name != "user")
                    .map(|a| {
                        let i: usize = a.type_name[1..].parse().expect("generated name");
                        relations_of(i)
                    })
                    .collect(),
                shape,
            };
            let tree = random_tree(rng, &ctx, shape.max_depth);
            let assignable = if tree.has_direct() {
                direct_types(rng, &names, &relation_counts, shape, false)
            } else {
                Vec::new()
            };
            def = def.with_relation(&format!("r{r}"), tree, assignable);
        }
        types.push(def);
    }
    let conds = if shape.conditions { conditions() } else { Vec::new() };
    let used: Vec<ConditionDef> = conds
        .into_iter()
        .filter(|c| {
            types.iter().any(|t| {
                t.assignable
                    .values()
                    .flatten()
                    .any(|a| a.condition.as_deref() == Some(c.name.as_str()))
            })
        })
        .collect();
    AuthorizationModel::new(types, used)
}

fn direct_types(
    rng: &mut StdRng,
    names: &[String],
    relation_counts: &[usize],
    shape: ModelShape,
    plain_objects: bool,
) -> Vec<AssignableType> {
    let mut out = vec![AssignableType::user("user")];
    if shape.conditions && rng.random_bool(0.3) {
        let c = *[PURPOSE_CONDITION, TIME_CONDITION].choose(rng).expect("non-empty");
        out.push(AssignableType::user("user").with_condition(c));
    }
    for _ in 0..rng.random_range(0..=2) {
        let t = rng.random_range(0..names.len());
        if plain_objects || rng.random_bool(0.5) {
            out.push(AssignableType::user(&names[t]));
        } else {
            let r = rng.random_range(0..relation_counts[t]);
            out.push(AssignableType::userset(&names[t], &format!("r{r}")));
        }
    }
    out
}

struct TreeContext {
    relations: Vec<String>,
    own: String,
    /// Relations of each object type assignable to `r0`.
    parents: Vec<Vec<String>>,
    shape: ModelShape,
}

fn random_tree(rng: &mut StdRng, ctx: &TreeContext, depth: usize) -> RewriteTree {
    let leaf = depth <= 1 || rng.random_bool(0.45);
    if leaf {
        return match rng.random_range(0..4) {
            0 => RewriteTree::Direct,
            1 if !ctx.parents.is_empty() => {
                let rels = ctx.parents.choose(rng).expect("non-empty");
                RewriteTree::tuple_to_userset("r0", rels.choose(rng).expect("r0 exists"))
            }
            2 => RewriteTree::computed(&ctx.own),
            _ => RewriteTree::computed(ctx.relations.choose(rng).expect("r0 exists")),
        };
    }
    let op = rng.random_range(0..if ctx.shape.exclusion { 3 } else { 2 });
    match op {
        0 | 1 => {
            let n = rng.random_range(2..=3);
            let children = (0..n).map(|_| random_tree(rng, ctx, depth - 1)).collect();
            if op == 0 {
                RewriteTree::Union(children)
            } else {
                RewriteTree::Intersection(children)
            }
        }
        _ => RewriteTree::exclusion(random_tree(rng, ctx, depth - 1), random_tree(rng, ctx, depth - 1)),
    }
}

/// Every object the generators may mention, including users.
pub fn universe(model: &AuthorizationModel) -> Vec<ObjectRef> {
    let mut out = Vec::new();
    for t in &model.type_definitions {
        let ids: &[&str] = if t.name == "user" { &USERS } else { &IDS };
        out.extend(ids.iter().map(|id| ObjectRef::new(&t.name, *id)));
    }
    out
}

fn object_of(rng: &mut StdRng, type_name: &str) -> ObjectRef {
    let ids: &[&str] = if type_name == "user" { &USERS } else { &IDS };
    ObjectRef::new(type_name, *ids.choose(rng).expect("non-empty"))
}

/// One tuple allowed by the model's assignable types.
pub fn random_tuple(rng: &mut StdRng, model: &AuthorizationModel) -> Option<RelationshipTuple> {
    let slots: Vec<(&str, &str, &AssignableType)> = model
        .type_definitions
        .iter()
        .flat_map(|t| {
            t.assignable
                .iter()
                .flat_map(move |(r, list)| list.iter().map(move |a| (t.name.as_str(), r.as_str(), a)))
        })
        .collect();
    let (type_name, relation, a) = *slots.choose(rng)?;
    let user_object = object_of(rng, &a.type_name);
    let user = match &a.relation {
        Some(r) => UserRef::Userset(user_object, r.clone()),
        None => UserRef::Direct(user_object),
    };
    let mut tuple = RelationshipTuple::new(user, relation, object_of(rng, type_name));
    if let Some(c) = &a.condition {
        let mut ctx = BTreeMap::new();
        if rng.random_bool(0.3) {
            if c == PURPOSE_CONDITION {
                ctx.insert("purpose".to_string(), random_purpose(rng));
            } else {
                ctx.insert("current_time".to_string(), random_time(rng));
            }
        }
        tuple = tuple.with_condition(c, ctx);
    }
    Some(tuple)
}

pub fn random_tuples(rng: &mut StdRng, model: &AuthorizationModel, max: usize) -> TupleSet {
    let n = rng.random_range(0..=max);
    (0..n).filter_map(|_| random_tuple(rng, model)).collect()
}

fn random_purpose(rng: &mut StdRng) -> Value {
    Value::Text((*["research", "resale"].choose(rng).expect("non-empty")).to_string())
}

fn random_time(rng: &mut StdRng) -> Value {
    Value::Timestamp(TIME_BOUND + rng.random_range(-1..=1))
}

/// A request for a random user on a random relation, with a random subset
/// of condition context and up to two contextual tuples.
pub fn random_request(rng: &mut StdRng, model: &AuthorizationModel) -> CheckRequest {
    let typed: Vec<&TypeDefinition> = model.type_definitions.iter().filter(|t| !t.relations.is_empty()).collect();
    let t = *typed.choose(rng).expect("models have object types");
    let relation = t.relations.keys().collect::<Vec<_>>();
    let relation = (*relation.choose(rng).expect("non-empty")).clone();
    let user = if rng.random_bool(0.85) {
        object_of(rng, "user")
    } else {
        let other = model.type_definitions.choose(rng).expect("non-empty");
        object_of(rng, &other.name)
    };
    let mut request = CheckRequest::new(user, relation, object_of(rng, &t.name));
    if rng.random_bool(0.6) {
        request.context.insert("purpose".into(), random_purpose(rng));
    }
    if rng.random_bool(0.6) {
        request.context.insert("current_time".into(), random_time(rng));
    }
    for _ in 0..rng.random_range(0..=2) {
        if rng.random_bool(0.5) {
            if let Some(t) = random_tuple(rng, model) {
                request.contextual_tuples.push(t);
            }
        }
    }
    request
}

fn iri(text: String) -> Iri {
    Iri::parse(text).expect("generated IRIs are absolute")
}

pub fn asset_iri(n: usize) -> Iri {
    iri(format!("https://example.org/data/ds{n}"))
}

pub fn party_iri(name: &str) -> Iri {
    iri(format!("https://example.org/party/{name}"))
}

fn random_constraint(rng: &mut StdRng) -> Constraint {
    let mut c = match rng.random_range(0..4) {
        0 => Constraint::new(
            LeftOperand::DateTime,
            *[Operator::Lteq, Operator::Lt, Operator::Gteq, Operator::Eq]
                .choose(rng)
                .expect("non-empty"),
            Value::Timestamp(TIME_BOUND + rng.random_range(-86_400..86_400)),
        ),
        1 => Constraint::new(LeftOperand::Purpose, Operator::Eq, random_purpose(rng)),
        2 => Constraint::new(
            LeftOperand::Purpose,
            Operator::IsAnyOf,
            Value::TextList(vec!["research".into(), "audit".into()]),
        ),
        _ => Constraint::new(
            LeftOperand::Count,
            *[Operator::Lteq, Operator::Gt].choose(rng).expect("non-empty"),
            Value::Integer(rng.random_range(0..100)),
        ),
    };
    if rng.random_bool(0.1) {
        c.unit = Some("https://example.org/unit/item".into());
    }
    c
}

fn random_party(rng: &mut StdRng) -> Option<PartyRef> {
    match rng.random_range(0..3) {
        0 => None,
        1 => Some(PartyRef::Role(*Role::ALL.choose(rng).expect("non-empty"))),
        _ => Some(PartyRef::Concrete(party_iri(
            ["alice", "bob", "carol"].choose(rng).expect("non-empty"),
        ))),
    }
}

fn extensions(rng: &mut StdRng) -> Extensions {
    let mut ext = Extensions::new();
    if rng.random_bool(0.15) {
        ext.insert("dct:title".into(), format!("note {}", rng.random_range(0..10)).into());
    }
    ext
}

fn random_rule(rng: &mut StdRng, duties: bool) -> Rule {
    let action = *ActionTerm::ALL.choose(rng).expect("non-empty");
    let mut rule = Rule::new(action, asset_iri(rng.random_range(1..=3)));
    rule.assigner = random_party(rng);
    rule.assignee = random_party(rng);
    rule.constraints = (0..rng.random_range(0..=2)).map(|_| random_constraint(rng)).collect();
    if duties {
        rule.duties = (0..rng.random_range(0..=1)).map(|_| random_rule(rng, false)).collect();
    }
    rule.extensions = extensions(rng);
    rule
}

/// Any structurally valid policy, conformant or not.
pub fn random_policy(rng: &mut StdRng) -> OdrlPolicy {
    let kind = *[PolicyKind::Set, PolicyKind::Offer, PolicyKind::Agreement]
        .choose(rng)
        .expect("non-empty");
    let mut policy = OdrlPolicy {
        uid: iri(format!("https://example.org/policy/{}", rng.random_range(0..1000))),
        kind,
        profile: if rng.random_bool(0.7) { vec![ods_profile()] } else { Vec::new() },
        permissions: (0..rng.random_range(0..=2)).map(|_| random_rule(rng, true)).collect(),
        prohibitions: (0..rng.random_range(0..=2)).map(|_| random_rule(rng, false)).collect(),
        obligations: (0..rng.random_range(0..=1)).map(|_| random_rule(rng, false)).collect(),
        extensions: extensions(rng),
    };
    if policy.rule_count() == 0 {
        policy.permissions.push(random_rule(rng, true));
    }
    policy
}

/// A compilable policy in which every prohibition overlaps some permission
/// on action and target.
pub fn overlapping_policy(rng: &mut StdRng) -> OdrlPolicy {
    let people = ["alice", "bob", "carol", "dave"];
    let agreement = rng.random_bool(0.3);
    let provider = PartyRef::Concrete(party_iri("provider"));
    let mut permissions = Vec::new();
    for _ in 0..rng.random_range(1..=3) {
        let action = *ActionTerm::ALL.choose(rng).expect("non-empty");
        let mut rule = Rule::new(action, asset_iri(rng.random_range(1..=2)));
        if rng.random_bool(0.4) {
            let role = *[Role::Consumer, Role::Broker, Role::Provider].choose(rng).expect("non-empty");
            rule.assignee = Some(PartyRef::Role(role));
        } else {
            rule.assignee = Some(PartyRef::Concrete(party_iri(people.choose(rng).expect("non-empty"))));
            if rng.random_bool(0.3) {
                rule.constraints.push(if rng.random_bool(0.5) {
                    Constraint::new(LeftOperand::Purpose, Operator::Eq, Value::Text("research".into()))
                } else {
                    Constraint::new(LeftOperand::DateTime, Operator::Lteq, Value::Timestamp(TIME_BOUND))
                });
            }
        }
        if agreement {
            rule.assigner = Some(provider.clone());
        }
        permissions.push(rule);
    }
    let mut prohibitions = Vec::new();
    for _ in 0..rng.random_range(1..=3) {
        let base = permissions.choose(rng).expect("non-empty");
        let mut rule = Rule::new(base.action, base.target.clone());
        rule.assignee = Some(if rng.random_bool(0.3) {
            PartyRef::Role(*Role::ALL.choose(rng).expect("non-empty"))
        } else {
            PartyRef::Concrete(party_iri(people.choose(rng).expect("non-empty")))
        });
        if agreement {
            rule.assigner = Some(provider.clone());
        }
        prohibitions.push(rule);
    }
    OdrlPolicy {
        uid: iri(format!("https://example.org/policy/{}", rng.random_range(0..1000))),
        kind: if agreement { PolicyKind::Agreement } else { PolicyKind::Set },
        profile: vec![ods_profile()],
        permissions,
        prohibitions,
        obligations: Vec::new(),
        extensions: Extensions::new(),
    }
}
