//! Structural checks of exported models against the OpenFGA 1.1 JSON
//! schema, written against `serde_json::Value` so they share no code with
//! the exporter.

use std::collections::BTreeSet;

use serde_json::{Map, Value};

const TYPE_NAMES: &[&str] = &[
    "TYPE_NAME_ANY",
    "TYPE_NAME_BOOL",
    "TYPE_NAME_STRING",
    "TYPE_NAME_INT",
    "TYPE_NAME_UINT",
    "TYPE_NAME_DOUBLE",
    "TYPE_NAME_DURATION",
    "TYPE_NAME_TIMESTAMP",
    "TYPE_NAME_MAP",
    "TYPE_NAME_LIST",
    "TYPE_NAME_IPADDRESS",
];

fn object<'a>(v: &'a Value, at: &str) -> Result<&'a Map<String, Value>, String> {
    v.as_object().ok_or_else(|| format!("{at}: expected an object"))
}

fn string<'a>(v: &'a Value, at: &str) -> Result<&'a str, String> {
    v.as_str().ok_or_else(|| format!("{at}: expected a string"))
}

fn only_keys(m: &Map<String, Value>, allowed: &[&str], at: &str) -> Result<(), String> {
    match m.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(format!("{at}: unexpected key `{k}`")),
        None => Ok(()),
    }
}

fn identifier(s: &str, at: &str) -> Result<(), String> {
    let ok = !s.is_empty()
        && s.len() <= 50
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(format!("{at}: `{s}` is not a valid identifier"))
    }
}

/// Checks a userset node and returns whether it contains `this`.
fn userset(v: &Value, relations: &Map<String, Value>, at: &str) -> Result<bool, String> {
    let m = object(v, at)?;
    if m.len() != 1 {
        return Err(format!("{at}: a userset needs exactly one operator"));
    }
    let (op, body) = m.iter().next().unwrap();
    let at = format!("{at}/{op}");
    match op.as_str() {
        "this" => {
            if !object(body, &at)?.is_empty() {
                return Err(format!("{at}: must be empty"));
            }
            Ok(true)
        }
        "computedUserset" => {
            let b = object(body, &at)?;
            only_keys(b, &["object", "relation"], &at)?;
            let r = string(b.get("relation").ok_or(format!("{at}: missing relation"))?, &at)?;
            if !relations.contains_key(r) {
                return Err(format!("{at}: unknown relation `{r}`"));
            }
            Ok(false)
        }
        "tupleToUserset" => {
            let b = object(body, &at)?;
            only_keys(b, &["tupleset", "computedUserset"], &at)?;
            for key in ["tupleset", "computedUserset"] {
                let inner = object(b.get(key).ok_or(format!("{at}: missing {key}"))?, &at)?;
                string(inner.get("relation").ok_or(format!("{at}/{key}: missing relation"))?, &at)?;
            }
            let ts = b["tupleset"]["relation"].as_str().unwrap();
            if !relations.contains_key(ts) {
                return Err(format!("{at}: unknown tupleset `{ts}`"));
            }
            Ok(false)
        }
        "union" | "intersection" => {
            let b = object(body, &at)?;
            only_keys(b, &["child"], &at)?;
            let children = b
                .get("child")
                .and_then(Value::as_array)
                .ok_or(format!("{at}: child must be an array"))?;
            if children.len() < 2 {
                return Err(format!("{at}: needs at least two children"));
            }
            let mut direct = false;
            for (i, c) in children.iter().enumerate() {
                direct |= userset(c, relations, &format!("{at}/child/{i}"))?;
            }
            Ok(direct)
        }
        "difference" => {
            let b = object(body, &at)?;
            only_keys(b, &["base", "subtract"], &at)?;
            let base = userset(b.get("base").ok_or(format!("{at}: missing base"))?, relations, &at)?;
            let sub = userset(b.get("subtract").ok_or(format!("{at}: missing subtract"))?, relations, &at)?;
            Ok(base || sub)
        }
        _ => Err(format!("{at}: unknown operator")),
    }
}

/// Checks one exported model document.
pub fn check_model(doc: &Value) -> Result<(), String> {
    let root = object(doc, "")?;
    only_keys(root, &["schema_version", "type_definitions", "conditions"], "")?;
    if root.get("schema_version") != Some(&Value::from("1.1")) {
        return Err("schema_version must be \"1.1\"".into());
    }
    let conditions = match root.get("conditions") {
        Some(c) => object(c, "/conditions")?.clone(),
        None => Map::new(),
    };
    for (name, c) in &conditions {
        let at = format!("/conditions/{name}");
        let c = object(c, &at)?;
        only_keys(c, &["name", "expression", "parameters", "metadata"], &at)?;
        if c.get("name").and_then(Value::as_str) != Some(name.as_str()) {
            return Err(format!("{at}: name must match its key"));
        }
        if string(c.get("expression").ok_or(format!("{at}: missing expression"))?, &at)?.is_empty() {
            return Err(format!("{at}: empty expression"));
        }
        for (p, t) in object(c.get("parameters").unwrap_or(&Value::Null), &at).into_iter().flatten() {
            let tn = t.get("type_name").and_then(Value::as_str).unwrap_or("");
            if !TYPE_NAMES.contains(&tn) {
                return Err(format!("{at}/parameters/{p}: bad type_name `{tn}`"));
            }
        }
    }

    let types = root
        .get("type_definitions")
        .and_then(Value::as_array)
        .ok_or("type_definitions must be an array")?;
    let mut names = BTreeSet::new();
    let mut all_relations = Vec::new();
    for (i, t) in types.iter().enumerate() {
        let at = format!("/type_definitions/{i}");
        let t = object(t, &at)?;
        only_keys(t, &["type", "relations", "metadata"], &at)?;
        let name = string(t.get("type").ok_or(format!("{at}: missing type"))?, &at)?;
        identifier(name, &at)?;
        if !names.insert(name.to_string()) {
            return Err(format!("{at}: duplicate type `{name}`"));
        }
        let empty = Map::new();
        let relations = match t.get("relations") {
            Some(r) => object(r, &at)?,
            None => &empty,
        };
        all_relations.push((name.to_string(), relations.clone(), t.get("metadata").cloned()));
    }

    for (type_name, relations, metadata) in &all_relations {
        let meta = metadata
            .as_ref()
            .and_then(|m| m.get("relations"))
            .and_then(Value::as_object)
            .cloned()
            .unwrap_or_default();
        for (rel, tree) in relations {
            let at = format!("{type_name}#{rel}");
            identifier(rel, &at)?;
            let direct = userset(tree, relations, &at)?;
            let assignable = meta
                .get(rel)
                .and_then(|m| m.get("directly_related_user_types"))
                .and_then(Value::as_array)
                .cloned()
                .unwrap_or_default();
            if direct && assignable.is_empty() {
                return Err(format!("{at}: direct relation without assignable types"));
            }
            if !direct && !assignable.is_empty() {
                return Err(format!("{at}: assignable types on a relation without `this`"));
            }
            for a in &assignable {
                let a = object(a, &at)?;
                only_keys(a, &["type", "relation", "wildcard", "condition"], &at)?;
                let ty = string(a.get("type").ok_or(format!("{at}: missing type"))?, &at)?;
                let target = all_relations
                    .iter()
                    .find(|(n, _, _)| n == ty)
                    .ok_or(format!("{at}: unknown user type `{ty}`"))?;
                if let Some(r) = a.get("relation") {
                    let r = string(r, &at)?;
                    if !target.1.contains_key(r) {
                        return Err(format!("{at}: unknown userset `{ty}#{r}`"));
                    }
                }
                if let Some(c) = a.get("condition") {
                    let c = string(c, &at)?;
                    if !conditions.contains_key(c) {
                        return Err(format!("{at}: unknown condition `{c}`"));
                    }
                }
            }
        }
        for rel in meta.keys() {
            if !relations.contains_key(rel) {
                return Err(format!("{type_name}: metadata for unknown relation `{rel}`"));
            }
        }
    }
    Ok(())
}
