use std::collections::BTreeMap;

use ods_core::check::{check, oracle_check, CheckRequest};
use ods_core::compiler::{
    compile_constraint, compile_policy, compile_policy_set, Backend, CompileError, OpenFgaBackend,
};
use ods_core::odrl::{parse_policy, ActionTerm, Constraint, LeftOperand, Operator, PartyRef, Role};
use ods_core::rebac::{export_model, validate_model, ObjectRef, RelationshipTuple, RewriteTree, TupleSet, UserRef};
use ods_core::{ParamType, Value};
use ods_testkit::{overlapping_policy, rng};

const T: i64 = 1_767_225_600;

fn policy(json: &str) -> ods_core::odrl::OdrlPolicy {
    parse_policy(json.as_bytes()).unwrap()
}

fn obj(s: &str) -> ObjectRef {
    s.parse().unwrap()
}

const TRAIN_ALICE: &str = r#"{
  "@context": {"odrl": "http://www.w3.org/ns/odrl/2/", "ods": "https://w3id.org/ods/"},
  "@type": "Set", "uid": "https://example.org/policy/train", "profile": "https://w3id.org/ods/",
  "permission": [{"action": "ods:Train", "target": "https://example.org/data/ds1",
                  "assignee": "https://example.org/party/alice"}]
}"#;

#[test]
fn train_permission_lowers_to_grant_tuple() {
    let result = compile_policy(&policy(TRAIN_ALICE)).unwrap();
    let asset = result.model.type_def("asset").unwrap();
    assert_eq!(asset.relations["train_grant"], RewriteTree::Direct);
    assert_eq!(asset.relations["train_deny"], RewriteTree::Direct);
    assert_eq!(
        asset.relations["can_train"],
        RewriteTree::exclusion(RewriteTree::computed("train_grant"), RewriteTree::computed("train_deny"))
    );
    assert!(result.model.type_def("user").is_some());
    assert_eq!(
        result.tuples,
        vec![RelationshipTuple::parse("user:alice", "train_grant", "asset:ds1").unwrap()]
    );
    assert_eq!(result.iri_map["asset:ds1"], "https://example.org/data/ds1");
    assert_eq!(result.iri_map["user:alice"], "https://example.org/party/alice");
    assert!(validate_model(&result.model).is_empty());
    assert!(result.obligations.is_empty());
}

#[test]
fn one_rule_yields_one_action_triple() {
    let result = compile_policy(&policy(TRAIN_ALICE)).unwrap();
    let asset = result.model.type_def("asset").unwrap();
    let actions: Vec<&String> = asset.relations.keys().filter(|r| r.starts_with("can_")).collect();
    assert_eq!(actions, vec!["can_train"]);
    let roles = ["broker", "consumer", "monitor", "provider"];
    assert_eq!(asset.relations.len(), 3 + roles.len());
}

#[test]
fn role_permission_with_concrete_prohibition() {
    let p = policy(
        r#"{"uid": "https://example.org/policy/sub", "profile": "https://w3id.org/ods/",
            "permission": [{"action": "ods:Subscribe", "target": "https://example.org/data/feed",
                            "assignee": "ods:Consumer"}],
            "prohibition": [{"action": "ods:Subscribe", "target": "https://example.org/data/feed",
                             "assignee": "https://example.org/party/bob"}]}"#,
    );
    let result = compile_policy(&p).unwrap();
    let mut tuples: TupleSet = result.tuples.iter().cloned().collect();
    for who in ["alice", "bob"] {
        tuples.insert(RelationshipTuple::parse(&format!("user:{who}"), "consumer", "asset:feed").unwrap());
    }
    let ask = |who: &str| {
        let req = CheckRequest::new(obj(&format!("user:{who}")), "can_subscribe", obj("asset:feed"));
        let d = check(&tuples, &result.model, &req).unwrap();
        assert_eq!(d.allowed, oracle_check(&tuples, &result.model, &req).unwrap().allowed);
        d.allowed
    };
    assert!(ask("alice"));
    assert!(!ask("bob"));
    assert!(!ask("carol"));
}

#[test]
fn retention_duty_becomes_an_obligation() {
    let p = policy(
        r#"{"uid": "https://example.org/policy/ret", "profile": "https://w3id.org/ods/",
            "permission": [{"action": "odrl:use", "target": "https://example.org/data/ds1",
                            "assignee": "https://example.org/party/alice",
                            "duty": [{"action": "ods:Retention",
                                      "constraint": [{"leftOperand": "odrl:dateTime", "operator": "odrl:lteq",
                                                      "rightOperand": "2026-01-01T00:00:00Z"}]}]}]}"#,
    );
    let without = policy(
        r#"{"uid": "https://example.org/policy/ret", "profile": "https://w3id.org/ods/",
            "permission": [{"action": "odrl:use", "target": "https://example.org/data/ds1",
                            "assignee": "https://example.org/party/alice"}]}"#,
    );
    let result = compile_policy(&p).unwrap();
    assert_eq!(result.obligations.len(), 1);
    let o = &result.obligations[0];
    assert_eq!(o.action, ActionTerm::Retention);
    assert_eq!(o.target.as_str(), "https://example.org/data/ds1");
    assert_eq!(o.parameters, BTreeMap::from([("datetime_lteq".to_string(), Value::Timestamp(T))]));
    assert_eq!(o.source_rule_path, "https://example.org/policy/ret#/permission/0/duty/0");
    let plain = compile_policy(&without).unwrap();
    assert_eq!(result.model, plain.model);
    assert_eq!(result.tuples, plain.tuples);
}

#[test]
fn constraint_lowering() {
    let deadline = Constraint::new(LeftOperand::DateTime, Operator::Lteq, Value::Timestamp(T));
    let c = compile_constraint(&deadline, "train_grant").unwrap();
    assert!(c.name.starts_with("cond_datetime_lteq_"));
    assert_eq!(c.name.len(), "cond_datetime_lteq_".len() + 8);
    assert_eq!(c.parameters, BTreeMap::from([("current_time".to_string(), ParamType::Timestamp)]));
    let none = BTreeMap::new();
    for (at, expected) in [(T - 1, true), (T, true), (T + 1, false)] {
        let ctx = BTreeMap::from([("current_time".to_string(), Value::Timestamp(at))]);
        assert_eq!(ods_core::check::evaluate_condition(&c, &none, &ctx), Ok(expected));
    }
    assert_eq!(compile_constraint(&deadline, "train_grant").unwrap().name, c.name);
    assert_ne!(compile_constraint(&deadline, "read_grant").unwrap().name, c.name);

    let purpose = Constraint::new(LeftOperand::Purpose, Operator::Eq, Value::Text("research".into()));
    let p = compile_constraint(&purpose, "train_grant").unwrap();
    assert_eq!(p.parameters, BTreeMap::from([("purpose".to_string(), ParamType::Text)]));

    let count = Constraint::new(LeftOperand::Count, Operator::Gteq, Value::Integer(3));
    assert!(matches!(
        compile_constraint(&count, "train_grant"),
        Err(CompileError::UnsupportedConstruct { .. })
    ));
}

#[test]
fn constrained_grant_carries_a_condition() {
    let p = policy(
        r#"{"uid": "https://example.org/policy/c", "profile": "https://w3id.org/ods/",
            "permission": [{"action": "ods:Train", "target": "https://example.org/data/ds1",
                            "assignee": "https://example.org/party/alice",
                            "constraint": [{"leftOperand": "odrl:purpose", "operator": "odrl:eq",
                                            "rightOperand": "research"}]}]}"#,
    );
    let result = compile_policy(&p).unwrap();
    let name = result.model.conditions.keys().next().unwrap().clone();
    assert_eq!(result.tuples[0].condition.as_ref().unwrap().name, name);
    let tuples: TupleSet = result.tuples.iter().cloned().collect();
    let base = CheckRequest::new(obj("user:alice"), "can_train", obj("asset:ds1"));
    let research = base.clone().with_context("purpose", Value::Text("research".into()));
    let resale = base.clone().with_context("purpose", Value::Text("resale".into()));
    assert!(check(&tuples, &result.model, &research).unwrap().allowed);
    assert!(!check(&tuples, &result.model, &resale).unwrap().allowed);
    assert_eq!(check(&tuples, &result.model, &base).unwrap().missing_context, vec!["purpose"]);
}

#[test]
fn unsupported_constructs_name_their_path() {
    let cases = [
        (
            r#"{"uid": "https://example.org/p", "profile": "https://w3id.org/ods/",
                "permission": [{"action": "ods:Train", "target": "https://example.org/data/ds1",
                                "assignee": "https://example.org/party/alice",
                                "constraint": [{"leftOperand": "odrl:count", "operator": "odrl:lteq", "rightOperand": 3}]}]}"#,
            "/permission/0/constraint/0",
        ),
        (
            r#"{"uid": "https://example.org/p", "profile": "https://w3id.org/ods/",
                "permission": [{"action": "ods:Train", "target": "https://example.org/data/ds1",
                                "assignee": "ods:Consumer",
                                "constraint": [{"leftOperand": "odrl:purpose", "operator": "odrl:eq", "rightOperand": "x"}]}]}"#,
            "/permission/0/constraint",
        ),
        (
            r#"{"uid": "https://example.org/p", "profile": "https://w3id.org/ods/",
                "prohibition": [{"action": "ods:Train", "target": "https://example.org/data/ds1"}]}"#,
            "/prohibition/0/assignee",
        ),
    ];
    for (doc, expected) in cases {
        match compile_policy(&policy(doc)) {
            Err(CompileError::UnsupportedConstruct { path, .. }) => assert_eq!(path, expected),
            other => panic!("expected UnsupportedConstruct at {expected}, got {other:?}"),
        }
    }
}

#[test]
fn validation_errors_abort_compilation() {
    let p = policy(
        r#"{"@type": "Agreement", "uid": "https://example.org/p",
            "permission": [{"action": "ods:Train", "target": "https://example.org/data/ds1"}]}"#,
    );
    match compile_policy(&p) {
        Err(CompileError::ValidationFailed(d)) => {
            assert!(d.iter().all(|d| d.is_error()));
            assert!(d.iter().any(|d| d.code == "ODS001"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn id_collisions_are_errors() {
    let p = policy(
        r#"{"uid": "https://example.org/p", "profile": "https://w3id.org/ods/",
            "permission": [{"action": "ods:Train", "target": "https://a.example/data/ds1",
                            "assignee": "https://example.org/party/alice"},
                           {"action": "ods:Train", "target": "https://b.example/DS1",
                            "assignee": "https://example.org/party/alice"}]}"#,
    );
    match compile_policy(&p) {
        Err(CompileError::IdCollision { object, first, second }) => {
            assert_eq!(object, "asset:ds1");
            assert_eq!(first, "https://a.example/data/ds1");
            assert_eq!(second, "https://b.example/DS1");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn agreement_assigner_becomes_provider() {
    let p = policy(
        r#"{"@type": "Agreement", "uid": "https://example.org/p", "profile": "https://w3id.org/ods/",
            "assigner": "https://example.org/party/acme",
            "permission": [{"action": "ods:Request_data", "target": "https://example.org/data/ds1",
                            "assignee": "https://example.org/party/alice"}]}"#,
    );
    let result = compile_policy(&p).unwrap();
    let provider = RelationshipTuple::parse("user:acme", "provider", "asset:ds1").unwrap();
    assert!(result.tuples.contains(&provider));
    assert!(result.model.relation("asset", "can_request_data").is_some());
}

#[test]
fn singleton_set_equals_single_compile() {
    let p = policy(TRAIN_ALICE);
    assert_eq!(compile_policy_set(std::slice::from_ref(&p)).unwrap(), compile_policy(&p).unwrap());
}

#[test]
fn policies_on_different_actions_merge() {
    let a = policy(TRAIN_ALICE);
    let b = policy(
        r#"{"uid": "https://example.org/policy/kill", "profile": "https://w3id.org/ods/",
            "permission": [{"action": "ods:Kill_job", "target": "https://example.org/data/ds1",
                            "assignee": "https://example.org/party/bob"}]}"#,
    );
    let merged = compile_policy_set(&[a.clone(), b.clone()]).unwrap();
    let reversed = compile_policy_set(&[b.clone(), a.clone()]).unwrap();
    assert_eq!(export_model(&merged.model).unwrap(), export_model(&reversed.model).unwrap());
    assert_eq!(merged.tuples, reversed.tuples);
    let asset = merged.model.type_def("asset").unwrap();
    assert!(asset.relations.contains_key("can_train"));
    assert!(asset.relations.contains_key("can_kill_job"));

    let tuples: TupleSet = merged.tuples.iter().cloned().collect();
    for (single, relation) in [(&a, "can_train"), (&b, "can_kill_job")] {
        let alone = compile_policy(single).unwrap();
        let alone_tuples: TupleSet = alone.tuples.iter().cloned().collect();
        for who in ["alice", "bob", "carol"] {
            let req = CheckRequest::new(obj(&format!("user:{who}")), relation, obj("asset:ds1"));
            assert_eq!(
                oracle_check(&tuples, &merged.model, &req).unwrap().allowed,
                oracle_check(&alone_tuples, &alone.model, &req).unwrap().allowed
            );
        }
    }
}

#[test]
fn conflicting_trees_do_not_merge() {
    let a = policy(TRAIN_ALICE);
    let b = policy(
        r#"{"uid": "https://example.org/policy/role", "profile": "https://w3id.org/ods/",
            "permission": [{"action": "ods:Train", "target": "https://example.org/data/ds1",
                            "assignee": "ods:Broker"}]}"#,
    );
    match compile_policy_set(&[a, b]) {
        Err(CompileError::MergeConflict { type_name, relation }) => {
            assert_eq!(type_name, "asset");
            assert_eq!(relation, "can_train");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn backend_emits_three_files() {
    let result = compile_policy(&policy(TRAIN_ALICE)).unwrap();
    let files = OpenFgaBackend.emit(&result).unwrap();
    let names: Vec<&str> = files.iter().map(|a| a.file_name.as_str()).collect();
    assert_eq!(names, ["model.fga.json", "tuples.jsonl", "obligations.jsonl"]);
    let tuples = String::from_utf8(files[1].bytes.clone()).unwrap();
    assert_eq!(tuples.lines().filter(|l| !l.starts_with('#')).count(), 1);
    assert!(files[2].bytes.is_empty());
}

/// Users a prohibition applies to, given role holders.
fn prohibited_users(rule: &ods_core::odrl::Rule, holders: &BTreeMap<Role, Vec<&str>>) -> Vec<String> {
    match rule.assignee.as_ref().unwrap() {
        PartyRef::Concrete(iri) => vec![iri.last_segment().to_lowercase()],
        PartyRef::Role(role) => holders.get(role).into_iter().flatten().map(|s| s.to_string()).collect(),
    }
}

#[test]
fn prohibitions_dominate_permissions() {
    let people = ["alice", "bob", "carol", "dave", "provider"];
    let mut violations = 0;
    let mut checked = 0;
    for seed in 0..200u64 {
        let mut r = rng(seed);
        let p = overlapping_policy(&mut r);
        let result = compile_policy(&p).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        let mut tuples: TupleSet = result.tuples.iter().cloned().collect();
        let mut holders: BTreeMap<Role, Vec<&str>> = BTreeMap::new();
        for (i, role) in Role::ALL.into_iter().enumerate() {
            for (j, who) in people.iter().enumerate() {
                if (seed as usize + i + j).is_multiple_of(3) {
                    holders.entry(role).or_default().push(who);
                    for asset in ["ds1", "ds2"] {
                        tuples.insert(RelationshipTuple::new(
                            UserRef::Direct(ObjectRef::new("user", *who)),
                            role.relation(),
                            ObjectRef::new("asset", asset),
                        ));
                    }
                }
            }
        }
        for rule in &p.prohibitions {
            let asset = ObjectRef::new("asset", rule.target.last_segment().to_lowercase());
            for who in prohibited_users(rule, &holders) {
                let mut req = CheckRequest::new(
                    ObjectRef::new("user", who.as_str()),
                    format!("can_{}", rule.action.relation_stem()),
                    asset.clone(),
                );
                req = req
                    .with_context("purpose", Value::Text("research".into()))
                    .with_context("current_time", Value::Timestamp(T - 10));
                let d = check(&tuples, &result.model, &req).unwrap();
                let o = oracle_check(&tuples, &result.model, &req).unwrap();
                checked += 1;
                if d.allowed || o.allowed {
                    violations += 1;
                }
            }
        }
    }
    assert!(checked > 200, "only {checked} prohibited pairs checked");
    assert_eq!(violations, 0);
}

#[test]
fn every_prohibition_yields_an_exclusion() {
    for seed in 0..200u64 {
        let mut r = rng(seed);
        let p = overlapping_policy(&mut r);
        let result = compile_policy(&p).unwrap();
        for rule in &p.prohibitions {
            let relation = format!("can_{}", rule.action.relation_stem());
            let tree = result.model.relation("asset", &relation).unwrap();
            assert!(matches!(tree, RewriteTree::Exclusion { .. }), "seed {seed}");
        }
    }
}
