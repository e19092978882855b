//! Lowers ODS policies to an authorization model, relationship tuples and
//! obligation records.

mod backend;
mod obligation;

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backend::{Artifact, Backend, OpenFgaBackend};
pub use obligation::{render_obligations, ObligationRecord};

use crate::diag::{has_errors, Diagnostic};
use crate::iri::Iri;
use crate::odrl::{Constraint, LeftOperand, OdrlPolicy, PartyRef, PolicyKind, Role, Rule, RuleKind};
use crate::profile::validate;
use crate::rebac::{
    valid_id, validate_model, AssignableType, AuthorizationModel, ConditionDef, ObjectRef,
    RelationshipTuple, RewriteTree, TupleFile, TypeDefinition, UserRef,
};

pub const ASSET_TYPE: &str = "asset";
pub const USER_TYPE: &str = "user";

#[derive(Debug, Clone, PartialEq)]
pub struct CompilationResult {
    pub model: AuthorizationModel,
    /// Sorted and deduplicated.
    pub tuples: Vec<RelationshipTuple>,
    pub obligations: Vec<ObligationRecord>,
    /// Warnings only.
    pub diagnostics: Vec<Diagnostic>,
    /// Compiled object (`type:id`) to source IRI.
    pub iri_map: BTreeMap<String, String>,
}

impl CompilationResult {
    pub fn tuple_file(&self) -> TupleFile {
        TupleFile {
            iri_map: self.iri_map.clone(),
            tuples: self.tuples.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("policy has validation errors")]
    ValidationFailed(Vec<Diagnostic>),
    #[error("unsupported construct at {path}: {reason}")]
    UnsupportedConstruct { path: String, reason: String },
    #[error("`{first}` and `{second}` both compile to {object}")]
    IdCollision {
        object: String,
        first: String,
        second: String,
    },
    #[error("conflicting definitions of {type_name}#{relation}")]
    MergeConflict { type_name: String, relation: String },
    #[error("compiled model is invalid: {0:?}")]
    InvalidOutput(Vec<Diagnostic>),
}

fn unsupported(path: impl Into<String>, reason: impl Into<String>) -> CompileError {
    CompileError::UnsupportedConstruct {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Builds the condition a constraint lowers to.
///
/// The name is `cond_<operand>_<operator>_<hash8>`, where the hash covers
/// `role_hint` and the constraint, so equal constraints under the same hint
/// share a condition.
pub fn compile_constraint(constraint: &Constraint, role_hint: &str) -> Result<ConditionDef, CompileError> {
    constraint
        .check_well_formed()
        .map_err(|reason| unsupported("/constraint", reason))?;
    if constraint.left_operand == LeftOperand::Count {
        return Err(unsupported(
            "/constraint",
            "odrl:count constraints need a usage counter and have no relationship mapping",
        ));
    }
    let mut hasher = Sha256::new();
    for part in [
        role_hint,
        constraint.left_operand.compact(),
        constraint.operator.compact(),
        &constraint.right_operand.to_json().to_string(),
        constraint.unit.as_deref().unwrap_or(""),
    ] {
        hasher.update(part.as_bytes());
        hasher.update([0]);
    }
    let digest = hex::encode(hasher.finalize());
    let local = |compact: &'static str| compact["odrl:".len()..].to_ascii_lowercase();
    let name = format!(
        "cond_{}_{}_{}",
        local(constraint.left_operand.compact()),
        local(constraint.operator.compact()),
        &digest[..8]
    );
    let mut predicate = constraint.clone();
    predicate.extensions.clear();
    Ok(ConditionDef::new(name, predicate))
}

pub fn compile_policy(policy: &OdrlPolicy) -> Result<CompilationResult, CompileError> {
    let diagnostics = validate(policy);
    if has_errors(&diagnostics) {
        return Err(CompileError::ValidationFailed(
            diagnostics.into_iter().filter(Diagnostic::is_error).collect(),
        ));
    }
    let mut lowering = Lowering::default();
    for (kind, index, rule) in policy.rules() {
        let path = format!("/{}/{index}", kind.key());
        match kind {
            RuleKind::Permission => {
                lowering.permission(policy, rule, &path)?;
                for (d, duty) in rule.duties.iter().enumerate() {
                    let duty_path = format!("{}#{path}/duty/{d}", policy.uid);
                    lowering.obligations.push(ObligationRecord::from_rule(duty, duty_path));
                }
            }
            RuleKind::Prohibition => lowering.prohibition(policy, rule, &path)?,
            RuleKind::Obligation => {
                let source = format!("{}#{path}", policy.uid);
                lowering.obligations.push(ObligationRecord::from_rule(rule, source));
            }
        }
    }
    let mut result = lowering.finish()?;
    result.diagnostics = diagnostics;
    Ok(result)
}

/// Compiles each policy and merges the results. Relations defined by more
/// than one policy must have identical rewrite trees.
pub fn compile_policy_set(policies: &[OdrlPolicy]) -> Result<CompilationResult, CompileError> {
    let mut merged: Option<CompilationResult> = None;
    for policy in policies {
        let next = compile_policy(policy)?;
        merged = Some(match merged {
            None => next,
            Some(acc) => merge(acc, next)?,
        });
    }
    match merged {
        Some(result) => Ok(result),
        None => Lowering::default().finish(),
    }
}

fn merge(mut acc: CompilationResult, next: CompilationResult) -> Result<CompilationResult, CompileError> {
    let mut types: BTreeMap<String, TypeDefinition> = acc
        .model
        .type_definitions
        .into_iter()
        .map(|t| (t.name.clone(), t))
        .collect();
    for t in next.model.type_definitions {
        let Some(existing) = types.get_mut(&t.name) else {
            types.insert(t.name.clone(), t);
            continue;
        };
        for (relation, tree) in t.relations {
            match existing.relations.get(&relation) {
                Some(current) if *current != tree => {
                    return Err(CompileError::MergeConflict {
                        type_name: t.name.clone(),
                        relation,
                    })
                }
                Some(_) => {}
                None => {
                    existing.relations.insert(relation, tree);
                }
            }
        }
        for (relation, list) in t.assignable {
            existing.assignable.entry(relation).or_default().extend(list);
        }
    }
    let mut conditions = acc.model.conditions;
    for (name, cond) in next.model.conditions {
        if let Some(current) = conditions.get(&name) {
            if *current != cond {
                return Err(CompileError::MergeConflict {
                    type_name: "condition".into(),
                    relation: name,
                });
            }
        }
        conditions.insert(name, cond);
    }
    for (object, iri) in next.iri_map {
        match acc.iri_map.get(&object) {
            Some(existing) if !same_iri(existing, &iri) => {
                return Err(CompileError::IdCollision {
                    object,
                    first: existing.clone(),
                    second: iri,
                })
            }
            Some(_) => {}
            None => {
                acc.iri_map.insert(object, iri);
            }
        }
    }
    let model = AuthorizationModel::new(types.into_values().collect(), conditions.into_values());
    check_output(&model)?;
    acc.model = model;
    acc.tuples.extend(next.tuples);
    acc.tuples.sort();
    acc.tuples.dedup();
    acc.obligations.extend(next.obligations);
    acc.obligations.sort_by(|a, b| a.source_rule_path.cmp(&b.source_rule_path));
    acc.diagnostics.extend(next.diagnostics);
    Ok(acc)
}

fn same_iri(a: &str, b: &str) -> bool {
    match (Iri::parse(a), Iri::parse(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}

fn check_output(model: &AuthorizationModel) -> Result<(), CompileError> {
    let diagnostics = validate_model(model);
    if has_errors(&diagnostics) {
        return Err(CompileError::InvalidOutput(diagnostics));
    }
    Ok(())
}

/// Relations contributed to one action's triple.
#[derive(Default)]
struct ActionParts {
    grant_roles: Vec<Role>,
    deny_roles: Vec<Role>,
    conditions: Vec<ConditionDef>,
}

#[derive(Default)]
struct Lowering {
    actions: BTreeMap<&'static str, ActionParts>,
    tuples: Vec<RelationshipTuple>,
    obligations: Vec<ObligationRecord>,
    iri_map: BTreeMap<String, String>,
    iris: BTreeMap<String, Iri>,
}

impl Lowering {
    fn object(&mut self, type_name: &str, iri: &Iri, path: &str) -> Result<ObjectRef, CompileError> {
        let id = iri.last_segment().to_lowercase();
        if !valid_id(&id) {
            return Err(unsupported(path, format!("no usable id can be derived from `{iri}`")));
        }
        let object = ObjectRef::new(type_name, id);
        let key = object.to_string();
        match self.iris.get(&key) {
            Some(existing) if existing != iri => {
                return Err(CompileError::IdCollision {
                    object: key,
                    first: existing.to_string(),
                    second: iri.to_string(),
                })
            }
            Some(_) => {}
            None => {
                self.iri_map.insert(key.clone(), iri.to_string());
                self.iris.insert(key, iri.clone());
            }
        }
        Ok(object)
    }

    fn single_constraint<'r>(&self, rule: &'r Rule, path: &str) -> Result<Option<&'r Constraint>, CompileError> {
        match rule.constraints.as_slice() {
            [] => Ok(None),
            [c] => Ok(Some(c)),
            _ => Err(unsupported(
                format!("{path}/constraint"),
                "a rule may carry at most one constraint",
            )),
        }
    }

    fn provider(&mut self, policy: &OdrlPolicy, rule: &Rule, asset: &ObjectRef, path: &str) -> Result<(), CompileError> {
        if policy.kind != PolicyKind::Agreement {
            return Ok(());
        }
        if let Some(PartyRef::Concrete(iri)) = &rule.assigner {
            let user = self.object(USER_TYPE, iri, &format!("{path}/assigner"))?;
            self.tuples
                .push(RelationshipTuple::new(UserRef::Direct(user), Role::Provider.relation(), asset.clone()));
        }
        Ok(())
    }

    fn permission(&mut self, policy: &OdrlPolicy, rule: &Rule, path: &str) -> Result<(), CompileError> {
        let asset = self.object(ASSET_TYPE, &rule.target, &format!("{path}/target"))?;
        let constraint = self.single_constraint(rule, path)?;
        let stem = rule.action.relation_stem();
        let grant = format!("{stem}_grant");
        let condition = match constraint {
            Some(c) => Some(compile_constraint(c, &grant).map_err(|e| match e {
                CompileError::UnsupportedConstruct { reason, .. } => unsupported(format!("{path}/constraint/0"), reason),
                other => other,
            })?),
            None => None,
        };
        let parts = self.actions.entry(stem).or_default();
        match rule.assignee.clone().unwrap_or(PartyRef::Role(Role::Consumer)) {
            PartyRef::Role(role) => {
                if condition.is_some() {
                    return Err(unsupported(
                        format!("{path}/constraint"),
                        "constraints on role-scoped permissions are not supported",
                    ));
                }
                parts.grant_roles.push(role);
            }
            PartyRef::Concrete(iri) => {
                let user = self.object(USER_TYPE, &iri, &format!("{path}/assignee"))?;
                let mut tuple = RelationshipTuple::new(UserRef::Direct(user), grant, asset.clone());
                if let Some(cond) = condition {
                    tuple = tuple.with_condition(&cond.name, BTreeMap::new());
                    self.actions.get_mut(stem).expect("entry exists").conditions.push(cond);
                }
                self.tuples.push(tuple);
            }
        }
        self.provider(policy, rule, &asset, path)
    }

    fn prohibition(&mut self, policy: &OdrlPolicy, rule: &Rule, path: &str) -> Result<(), CompileError> {
        let asset = self.object(ASSET_TYPE, &rule.target, &format!("{path}/target"))?;
        if !rule.constraints.is_empty() {
            return Err(unsupported(
                format!("{path}/constraint"),
                "constraints on prohibitions are not supported",
            ));
        }
        let stem = rule.action.relation_stem();
        match &rule.assignee {
            None => {
                return Err(unsupported(
                    format!("{path}/assignee"),
                    "a prohibition must name the party or role it applies to",
                ))
            }
            Some(PartyRef::Role(role)) => self.actions.entry(stem).or_default().deny_roles.push(*role),
            Some(PartyRef::Concrete(iri)) => {
                self.actions.entry(stem).or_default();
                let user = self.object(USER_TYPE, iri, &format!("{path}/assignee"))?;
                self.tuples
                    .push(RelationshipTuple::new(UserRef::Direct(user), format!("{stem}_deny"), asset.clone()));
            }
        }
        self.provider(policy, rule, &asset, path)
    }

    fn finish(self) -> Result<CompilationResult, CompileError> {
        let user = || AssignableType::user(USER_TYPE);
        let mut asset = TypeDefinition::new(ASSET_TYPE);
        let mut conditions = Vec::new();
        if !self.actions.is_empty() {
            for role in Role::ALL {
                asset = asset.with_relation(role.relation(), RewriteTree::Direct, vec![user()]);
            }
        }
        for (stem, mut parts) in self.actions {
            let grant = format!("{stem}_grant");
            let deny = format!("{stem}_deny");
            let mut grant_types = vec![user()];
            grant_types.extend(parts.conditions.iter().map(|c| user().with_condition(&c.name)));
            conditions.append(&mut parts.conditions);
            asset = asset
                .with_relation(&grant, RewriteTree::Direct, grant_types)
                .with_relation(&deny, with_roles(RewriteTree::Direct, parts.deny_roles), vec![user()])
                .with_relation(
                    &format!("can_{stem}"),
                    RewriteTree::exclusion(
                        with_roles(RewriteTree::computed(&grant), parts.grant_roles),
                        RewriteTree::computed(&deny),
                    ),
                    Vec::new(),
                );
        }
        let mut types = vec![TypeDefinition::new(USER_TYPE)];
        if !asset.relations.is_empty() {
            types.push(asset);
        }
        let model = AuthorizationModel::new(types, conditions);
        check_output(&model)?;
        let mut tuples = self.tuples;
        tuples.sort();
        tuples.dedup();
        Ok(CompilationResult {
            model,
            tuples,
            obligations: self.obligations,
            diagnostics: Vec::new(),
            iri_map: self.iri_map,
        })
    }
}

/// `first` alone, or a union of `first` and one computed branch per role in
/// canonical role order.
fn with_roles(first: RewriteTree, mut roles: Vec<Role>) -> RewriteTree {
    roles.sort_by_key(|r| Role::ALL.iter().position(|x| x == r));
    roles.dedup();
    if roles.is_empty() {
        return first;
    }
    let mut children = vec![first];
    children.extend(roles.into_iter().map(|r| RewriteTree::computed(r.relation())));
    RewriteTree::Union(children)
}
