//! OpenFGA schema 1.1 JSON.
//!
//! Canonical layout: top-level `schema_version`, `type_definitions`,
//! `conditions`; each type `type`, `relations`, `metadata`; each condition
//! `name`, `expression`, `parameters`. Types and relations are sorted by name,
//! output is indented by two spaces and ends with a newline.

use std::collections::BTreeMap;

use serde_json::{Map, Value as Json};

use super::{
    expr, validate_model, AssignableType, AuthorizationModel, ConditionDef, ModelError, RewriteTree,
    TypeDefinition,
};
use crate::diag::has_errors;
use crate::value::ParamType;

pub fn export_model(model: &AuthorizationModel) -> Result<Vec<u8>> {
    let diagnostics = validate_model(model);
    if has_errors(&diagnostics) {
        return Err(ModelError::InvalidModel(diagnostics));
    }
    let mut root = Map::new();
    root.insert("schema_version".into(), Json::String(model.schema_version.clone()));
    root.insert(
        "type_definitions".into(),
        Json::Array(model.type_definitions.iter().map(type_json).collect()),
    );
    let conditions: Map<String, Json> = model
        .conditions
        .iter()
        .map(|(name, c)| (name.clone(), condition_json(c)))
        .collect();
    root.insert("conditions".into(), Json::Object(conditions));
    let mut out = serde_json::to_vec_pretty(&Json::Object(root)).expect("JSON values serialize");
    out.push(b'\n');
    Ok(out)
}

fn type_json(t: &TypeDefinition) -> Json {
    let mut obj = Map::new();
    obj.insert("type".into(), Json::String(t.name.clone()));
    if t.relations.is_empty() {
        return Json::Object(obj);
    }
    let relations: Map<String, Json> = t
        .relations
        .iter()
        .map(|(name, tree)| (name.clone(), rewrite_json(tree)))
        .collect();
    obj.insert("relations".into(), Json::Object(relations));
    let meta: Map<String, Json> = t
        .assignable
        .iter()
        .map(|(name, list)| {
            let types = list.iter().map(assignable_json).collect();
            let mut entry = Map::new();
            entry.insert("directly_related_user_types".into(), Json::Array(types));
            (name.clone(), Json::Object(entry))
        })
        .collect();
    let mut metadata = Map::new();
    metadata.insert("relations".into(), Json::Object(meta));
    obj.insert("metadata".into(), Json::Object(metadata));
    Json::Object(obj)
}

fn assignable_json(a: &AssignableType) -> Json {
    let mut obj = Map::new();
    obj.insert("type".into(), Json::String(a.type_name.clone()));
    if let Some(r) = &a.relation {
        obj.insert("relation".into(), Json::String(r.clone()));
    }
    if let Some(c) = &a.condition {
        obj.insert("condition".into(), Json::String(c.clone()));
    }
    Json::Object(obj)
}

fn single(key: &str, value: Json) -> Json {
    let mut obj = Map::new();
    obj.insert(key.to_string(), value);
    Json::Object(obj)
}

fn relation_ref(relation: &str) -> Json {
    single("relation", Json::String(relation.to_string()))
}

fn rewrite_json(tree: &RewriteTree) -> Json {
    match tree {
        RewriteTree::Direct => single("this", Json::Object(Map::new())),
        RewriteTree::ComputedUserset(r) => single("computedUserset", relation_ref(r)),
        RewriteTree::TupleToUserset { tupleset, computed } => {
            let mut obj = Map::new();
            obj.insert("tupleset".into(), relation_ref(tupleset));
            obj.insert("computedUserset".into(), relation_ref(computed));
            single("tupleToUserset", Json::Object(obj))
        }
        RewriteTree::Union(children) => single(
            "union",
            single("child", Json::Array(children.iter().map(rewrite_json).collect())),
        ),
        RewriteTree::Intersection(children) => single(
            "intersection",
            single("child", Json::Array(children.iter().map(rewrite_json).collect())),
        ),
        RewriteTree::Exclusion { base, subtract } => {
            let mut obj = Map::new();
            obj.insert("base".into(), rewrite_json(base));
            obj.insert("subtract".into(), rewrite_json(subtract));
            single("difference", Json::Object(obj))
        }
    }
}

fn type_name_json(t: ParamType) -> Json {
    let name = |n: &str| single("type_name", Json::String(n.to_string()));
    match t {
        ParamType::Timestamp => name("TYPE_NAME_TIMESTAMP"),
        ParamType::Text => name("TYPE_NAME_STRING"),
        ParamType::Integer => name("TYPE_NAME_INT"),
        ParamType::TextList => {
            let mut obj = Map::new();
            obj.insert("type_name".into(), Json::String("TYPE_NAME_LIST".into()));
            obj.insert("generic_types".into(), Json::Array(vec![name("TYPE_NAME_STRING")]));
            Json::Object(obj)
        }
    }
}

fn condition_json(c: &ConditionDef) -> Json {
    let mut obj = Map::new();
    obj.insert("name".into(), Json::String(c.name.clone()));
    obj.insert("expression".into(), Json::String(expr::render(&c.predicate)));
    let params: Map<String, Json> = c
        .parameters
        .iter()
        .map(|(k, t)| (k.clone(), type_name_json(*t)))
        .collect();
    obj.insert("parameters".into(), Json::Object(params));
    Json::Object(obj)
}

type Result<T> = std::result::Result<T, ModelError>;

fn invalid(path: &str, message: impl Into<String>) -> ModelError {
    ModelError::MalformedDocument(format!("{path}: {}", message.into()))
}

/// Reads interchange JSON. Types are put into canonical order; the result is
/// validated before it is returned.
pub fn import_model(document: &[u8]) -> Result<AuthorizationModel> {
    let json: Json = serde_json::from_slice(document)
        .map_err(|e| ModelError::MalformedDocument(e.to_string()))?;
    let root = json
        .as_object()
        .ok_or_else(|| ModelError::MalformedDocument("document is not an object".into()))?;
    let version = match root.get("schema_version") {
        Some(Json::String(v)) => v.clone(),
        _ => return Err(ModelError::MalformedDocument("missing schema_version".into())),
    };
    let types = match root.get("type_definitions") {
        Some(Json::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, t)| read_type(t, &format!("/type_definitions/{i}")))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
        Some(_) => return Err(ModelError::MalformedDocument("type_definitions is not a list".into())),
    };
    let conditions = match root.get("conditions") {
        None | Some(Json::Null) => Vec::new(),
        Some(Json::Object(map)) => map
            .iter()
            .map(|(name, c)| read_condition(name, c))
            .collect::<Result<Vec<_>>>()?,
        Some(_) => return Err(ModelError::MalformedDocument("conditions is not an object".into())),
    };
    let mut model = AuthorizationModel::new(types, conditions);
    model.schema_version = version;
    let diagnostics = validate_model(&model);
    if has_errors(&diagnostics) {
        return Err(ModelError::InvalidModel(diagnostics));
    }
    Ok(model)
}

fn read_type(json: &Json, path: &str) -> Result<TypeDefinition> {
    let obj = json.as_object().ok_or_else(|| invalid(path, "type definition is not an object"))?;
    let name = obj
        .get("type")
        .and_then(Json::as_str)
        .ok_or_else(|| invalid(path, "type definition without `type`"))?;
    let mut t = TypeDefinition::new(name);
    if let Some(relations) = obj.get("relations").filter(|r| !r.is_null()) {
        let relations = relations
            .as_object()
            .ok_or_else(|| invalid(path, "`relations` is not an object"))?;
        for (rel, tree) in relations {
            let tree = read_rewrite(tree, &format!("{path}/relations/{rel}"), 0)?;
            t.relations.insert(rel.clone(), tree);
        }
    }
    let meta = obj
        .get("metadata")
        .and_then(|m| m.get("relations"))
        .filter(|m| !m.is_null());
    if let Some(meta) = meta {
        let meta = meta
            .as_object()
            .ok_or_else(|| invalid(path, "`metadata.relations` is not an object"))?;
        for (rel, entry) in meta {
            let list = match entry.get("directly_related_user_types") {
                None | Some(Json::Null) => Vec::new(),
                Some(Json::Array(items)) => items
                    .iter()
                    .map(|i| read_assignable(i, &format!("{path}/metadata/{rel}")))
                    .collect::<Result<Vec<_>>>()?,
                Some(_) => return Err(invalid(path, "directly_related_user_types is not a list")),
            };
            if !list.is_empty() {
                t.assignable.insert(rel.clone(), list);
            }
        }
    }
    Ok(t)
}

fn read_assignable(json: &Json, path: &str) -> Result<AssignableType> {
    let obj = json.as_object().ok_or_else(|| invalid(path, "user type is not an object"))?;
    if obj.contains_key("wildcard") {
        return Err(invalid(path, "wildcard user types are not supported"));
    }
    let text = |k: &str| -> Result<Option<String>> {
        match obj.get(k) {
            None | Some(Json::Null) => Ok(None),
            Some(Json::String(s)) if s.is_empty() => Ok(None),
            Some(Json::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(invalid(path, format!("`{k}` is not a string"))),
        }
    };
    Ok(AssignableType {
        type_name: text("type")?.ok_or_else(|| invalid(path, "user type without `type`"))?,
        relation: text("relation")?,
        condition: text("condition")?,
    })
}

fn read_relation_ref(json: &Json, path: &str) -> Result<String> {
    json.get("relation")
        .and_then(Json::as_str)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .ok_or_else(|| invalid(path, "expected an object with `relation`"))
}

fn read_rewrite(json: &Json, path: &str, depth: usize) -> Result<RewriteTree> {
    if depth > 64 {
        return Err(invalid(path, "rewrite nesting too deep"));
    }
    let obj = json.as_object().ok_or_else(|| invalid(path, "rewrite is not an object"))?;
    if obj.len() != 1 {
        return Err(invalid(path, "rewrite must have exactly one key"));
    }
    let (key, body) = obj.iter().next().expect("one entry");
    let children = |body: &Json| -> Result<Vec<RewriteTree>> {
        body.get("child")
            .and_then(Json::as_array)
            .ok_or_else(|| invalid(path, format!("`{key}` without `child` list")))?
            .iter()
            .map(|c| read_rewrite(c, path, depth + 1))
            .collect()
    };
    match key.as_str() {
        "this" => Ok(RewriteTree::Direct),
        "computedUserset" => Ok(RewriteTree::ComputedUserset(read_relation_ref(body, path)?)),
        "tupleToUserset" => Ok(RewriteTree::TupleToUserset {
            tupleset: read_relation_ref(
                body.get("tupleset").ok_or_else(|| invalid(path, "missing `tupleset`"))?,
                path,
            )?,
            computed: read_relation_ref(
                body.get("computedUserset")
                    .ok_or_else(|| invalid(path, "missing `computedUserset`"))?,
                path,
            )?,
        }),
        "union" => Ok(RewriteTree::Union(children(body)?)),
        "intersection" => Ok(RewriteTree::Intersection(children(body)?)),
        "difference" => Ok(RewriteTree::exclusion(
            read_rewrite(body.get("base").ok_or_else(|| invalid(path, "missing `base`"))?, path, depth + 1)?,
            read_rewrite(
                body.get("subtract").ok_or_else(|| invalid(path, "missing `subtract`"))?,
                path,
                depth + 1,
            )?,
        )),
        other => Err(invalid(path, format!("unknown rewrite `{other}`"))),
    }
}

fn read_param_type(json: &Json, path: &str) -> Result<ParamType> {
    let name = json.get("type_name").and_then(Json::as_str).unwrap_or("");
    match name {
        "TYPE_NAME_TIMESTAMP" => Ok(ParamType::Timestamp),
        "TYPE_NAME_STRING" => Ok(ParamType::Text),
        "TYPE_NAME_INT" => Ok(ParamType::Integer),
        "TYPE_NAME_LIST" => {
            let generic = json
                .get("generic_types")
                .and_then(Json::as_array)
                .and_then(|g| g.first())
                .and_then(|g| g.get("type_name"))
                .and_then(Json::as_str);
            match generic {
                Some("TYPE_NAME_STRING") => Ok(ParamType::TextList),
                _ => Err(invalid(path, "only lists of strings are supported")),
            }
        }
        other => Err(invalid(path, format!("unsupported parameter type `{other}`"))),
    }
}

fn read_condition(key: &str, json: &Json) -> Result<ConditionDef> {
    let path = format!("/conditions/{key}");
    let obj = json.as_object().ok_or_else(|| invalid(&path, "condition is not an object"))?;
    let name = obj.get("name").and_then(Json::as_str).unwrap_or(key);
    let expression = obj
        .get("expression")
        .and_then(Json::as_str)
        .ok_or_else(|| invalid(&path, "condition without `expression`"))?;
    let predicate = expr::parse(expression).map_err(|e| invalid(&path, e))?;
    let parameters = match obj.get("parameters") {
        None | Some(Json::Null) => BTreeMap::new(),
        Some(Json::Object(params)) => params
            .iter()
            .map(|(k, v)| read_param_type(v, &path).map(|t| (k.clone(), t)))
            .collect::<Result<_>>()?,
        Some(_) => return Err(invalid(&path, "`parameters` is not an object")),
    };
    Ok(ConditionDef {
        name: name.to_string(),
        parameters,
        predicate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odrl::{Constraint, LeftOperand, Operator};
    use crate::value::Value;

    fn sample() -> AuthorizationModel {
        let cond = ConditionDef::new(
            "cond_datetime_lteq_0000abcd",
            Constraint::new(LeftOperand::DateTime, Operator::Lteq, Value::Timestamp(1_767_225_600)),
        );
        let asset = TypeDefinition::new("asset")
            .with_relation(
                "train_grant",
                RewriteTree::Direct,
                vec![
                    AssignableType::user("user"),
                    AssignableType::user("user").with_condition(&cond.name),
                ],
            )
            .with_relation("train_deny", RewriteTree::Direct, vec![AssignableType::user("user")])
            .with_relation(
                "can_train",
                RewriteTree::exclusion(RewriteTree::computed("train_grant"), RewriteTree::computed("train_deny")),
                vec![],
            );
        AuthorizationModel::new(vec![asset, TypeDefinition::new("user")], [cond])
    }

    #[test]
    fn direct_relation_exports_this_leaf() {
        let asset = TypeDefinition::new("asset").with_relation(
            "train_grant",
            RewriteTree::Direct,
            vec![AssignableType::user("user")],
        );
        let model = AuthorizationModel::new(vec![asset, TypeDefinition::new("user")], []);
        let text = String::from_utf8(export_model(&model).unwrap()).unwrap();
        let json: Json = serde_json::from_str(&text).unwrap();
        assert_eq!(json["schema_version"], "1.1");
        assert_eq!(json["type_definitions"][0]["relations"]["train_grant"], serde_json::json!({"this": {}}));
        assert!(text.ends_with("}\n"));
        assert!(text.contains("\n  \"type_definitions\""));
    }

    #[test]
    fn export_is_deterministic_and_roundtrips() {
        let m = sample();
        let a = export_model(&m).unwrap();
        assert_eq!(a, export_model(&m).unwrap());
        assert_eq!(import_model(&a).unwrap(), m);
    }

    #[test]
    fn version_gate() {
        let text = String::from_utf8(export_model(&sample()).unwrap())
            .unwrap()
            .replace("\"1.1\"", "\"1.0\"");
        assert!(matches!(import_model(text.as_bytes()), Err(ModelError::InvalidModel(_))));
    }

    #[test]
    fn difference_node_becomes_exclusion() {
        let doc = br#"{"schema_version":"1.1","type_definitions":[
            {"type":"user"},
            {"type":"doc","relations":{
                "blocked":{"this":{}},
                "viewer":{"difference":{"base":{"this":{}},"subtract":{"computedUserset":{"object":"","relation":"blocked"}}}}},
             "metadata":{"relations":{"blocked":{"directly_related_user_types":[{"type":"user"}]},
                                      "viewer":{"directly_related_user_types":[{"type":"user"}]}}}}]}"#;
        let m = import_model(doc).unwrap();
        assert_eq!(m.type_definitions[0].name, "doc");
        assert_eq!(
            m.relation("doc", "viewer"),
            Some(&RewriteTree::exclusion(RewriteTree::Direct, RewriteTree::computed("blocked")))
        );
    }

    #[test]
    fn malformed_and_invalid_documents() {
        assert!(matches!(import_model(b"{"), Err(ModelError::MalformedDocument(_))));
        assert!(matches!(import_model(b"{}"), Err(ModelError::MalformedDocument(_))));
        let unknown = br#"{"schema_version":"1.1","type_definitions":[{"type":"doc","relations":{"x":{"magic":{}}}}]}"#;
        assert!(matches!(import_model(unknown), Err(ModelError::MalformedDocument(_))));
        let wildcard = br#"{"schema_version":"1.1","type_definitions":[{"type":"user"},{"type":"doc","relations":{"x":{"this":{}}},
            "metadata":{"relations":{"x":{"directly_related_user_types":[{"type":"user","wildcard":{}}]}}}}]}"#;
        assert!(matches!(import_model(wildcard), Err(ModelError::MalformedDocument(_))));
    }

    #[test]
    fn invalid_models_do_not_export() {
        let asset = TypeDefinition::new("asset").with_relation("x", RewriteTree::computed("y"), vec![]);
        let m = AuthorizationModel::new(vec![asset], []);
        assert!(matches!(export_model(&m), Err(ModelError::InvalidModel(_))));
    }
}
