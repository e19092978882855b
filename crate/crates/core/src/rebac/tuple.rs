use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde_json::{Map, Value as Json};
use thiserror::Error;

use super::is_identifier;
use crate::value::{Value, ValueError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TupleError {
    #[error("invalid object `{0}`: expected `type:id`")]
    BadObject(String),
    #[error("invalid user `{0}`: expected `type:id` or `type:id#relation`")]
    BadUser(String),
    #[error("invalid relation `{0}`")]
    BadRelation(String),
    #[error("line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("context value for `{key}`: {source}")]
    BadContext { key: String, source: ValueError },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectRef {
    pub type_name: String,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UserRef {
    Direct(ObjectRef),
    Userset(ObjectRef, String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TupleCondition {
    pub name: String,
    pub context: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RelationshipTuple {
    pub user: UserRef,
    pub relation: String,
    pub object: ObjectRef,
    pub condition: Option<TupleCondition>,
}

pub(crate) fn valid_id(id: &str) -> bool {
    !id.is_empty() && !id.contains([':', '#']) && !id.chars().any(char::is_whitespace)
}

impl ObjectRef {
    pub fn new(type_name: impl Into<String>, id: impl Into<String>) -> Self {
        Self {
            type_name: type_name.into(),
            id: id.into(),
        }
    }
}

impl FromStr for ObjectRef {
    type Err = TupleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TupleError::BadObject(s.to_string());
        let (t, id) = s.split_once(':').ok_or_else(bad)?;
        if !is_identifier(t) || !valid_id(id) {
            return Err(bad());
        }
        Ok(ObjectRef::new(t, id))
    }
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.type_name, self.id)
    }
}

impl UserRef {
    pub fn object(&self) -> &ObjectRef {
        match self {
            UserRef::Direct(o) | UserRef::Userset(o, _) => o,
        }
    }
}

impl FromStr for UserRef {
    type Err = TupleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TupleError::BadUser(s.to_string());
        match s.split_once('#') {
            None => s.parse().map(UserRef::Direct).map_err(|_| bad()),
            Some((obj, rel)) => {
                if !is_identifier(rel) {
                    return Err(bad());
                }
                let obj = obj.parse().map_err(|_| bad())?;
                Ok(UserRef::Userset(obj, rel.to_string()))
            }
        }
    }
}

impl fmt::Display for UserRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UserRef::Direct(o) => write!(f, "{o}"),
            UserRef::Userset(o, r) => write!(f, "{o}#{r}"),
        }
    }
}

impl RelationshipTuple {
    pub fn new(user: UserRef, relation: impl Into<String>, object: ObjectRef) -> Self {
        Self {
            user,
            relation: relation.into(),
            object,
            condition: None,
        }
    }

    /// Parses `user`, `relation` and `object` strings.
    pub fn parse(user: &str, relation: &str, object: &str) -> Result<Self, TupleError> {
        if !is_identifier(relation) {
            return Err(TupleError::BadRelation(relation.to_string()));
        }
        Ok(Self::new(user.parse()?, relation, object.parse()?))
    }

    pub fn with_condition(mut self, name: &str, context: BTreeMap<String, Value>) -> Self {
        self.condition = Some(TupleCondition {
            name: name.to_string(),
            context,
        });
        self
    }

    /// Fields `user`, `relation`, `object`, optional `condition`.
    pub fn to_json(&self) -> Json {
        let mut obj = Map::new();
        obj.insert("user".into(), Json::String(self.user.to_string()));
        obj.insert("relation".into(), Json::String(self.relation.clone()));
        obj.insert("object".into(), Json::String(self.object.to_string()));
        if let Some(c) = &self.condition {
            let mut cond = Map::new();
            cond.insert("name".into(), Json::String(c.name.clone()));
            if !c.context.is_empty() {
                let ctx = c.context.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
                cond.insert("context".into(), Json::Object(ctx));
            }
            obj.insert("condition".into(), Json::Object(cond));
        }
        Json::Object(obj)
    }

    pub fn from_json(json: &Json) -> Result<Self, String> {
        let obj = json.as_object().ok_or("tuple is not an object")?;
        let field = |k: &str| -> Result<&str, String> {
            obj.get(k)
                .and_then(Json::as_str)
                .ok_or_else(|| format!("missing string field `{k}`"))
        };
        if let Some(extra) = obj
            .keys()
            .find(|k| !matches!(k.as_str(), "user" | "relation" | "object" | "condition"))
        {
            return Err(format!("unknown field `{extra}`"));
        }
        let mut tuple = Self::parse(field("user")?, field("relation")?, field("object")?)
            .map_err(|e| e.to_string())?;
        match obj.get("condition") {
            None | Some(Json::Null) => {}
            Some(Json::Object(c)) => {
                let name = c
                    .get("name")
                    .and_then(Json::as_str)
                    .ok_or("condition without a name")?;
                let context = match c.get("context") {
                    None | Some(Json::Null) => BTreeMap::new(),
                    Some(Json::Object(ctx)) => parse_context(ctx).map_err(|e| e.to_string())?,
                    Some(_) => return Err("condition context is not an object".into()),
                };
                tuple = tuple.with_condition(name, context);
            }
            Some(_) => return Err("condition is not an object".into()),
        }
        Ok(tuple)
    }

    /// One-line canonical rendering.
    pub fn render(&self) -> String {
        self.to_json().to_string()
    }

    fn sort_key(&self) -> (&ObjectRef, &str, &UserRef, &Option<TupleCondition>) {
        (&self.object, &self.relation, &self.user, &self.condition)
    }
}

/// Decodes a JSON context object with the untyped value rules.
pub fn parse_context(ctx: &Map<String, Json>) -> Result<BTreeMap<String, Value>, TupleError> {
    ctx.iter()
        .map(|(k, v)| {
            Value::from_json(v)
                .map(|v| (k.clone(), v))
                .map_err(|source| TupleError::BadContext { key: k.clone(), source })
        })
        .collect()
}

/// Canonical order: object, relation, user, condition.
impl Ord for RelationshipTuple {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for RelationshipTuple {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for RelationshipTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}@{}", self.object, self.relation, self.user)?;
        if let Some(c) = &self.condition {
            write!(f, "[{}]", c.name)?;
        }
        Ok(())
    }
}

/// The user side of a stored tuple, keyed under its object and relation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub user: UserRef,
    pub condition: Option<TupleCondition>,
}

/// A set of tuples indexed by object then relation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TupleSet {
    index: BTreeMap<ObjectRef, BTreeMap<String, BTreeSet<Edge>>>,
    len: usize,
}

impl TupleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert(&mut self, tuple: RelationshipTuple) -> bool {
        let added = self
            .index
            .entry(tuple.object)
            .or_default()
            .entry(tuple.relation)
            .or_default()
            .insert(Edge {
                user: tuple.user,
                condition: tuple.condition,
            });
        if added {
            self.len += 1;
        }
        added
    }

    pub fn remove(&mut self, tuple: &RelationshipTuple) -> bool {
        let Some(relations) = self.index.get_mut(&tuple.object) else {
            return false;
        };
        let Some(edges) = relations.get_mut(&tuple.relation) else {
            return false;
        };
        let removed = edges.remove(&Edge {
            user: tuple.user.clone(),
            condition: tuple.condition.clone(),
        });
        if removed {
            self.len -= 1;
            if edges.is_empty() {
                relations.remove(&tuple.relation);
            }
            if relations.is_empty() {
                self.index.remove(&tuple.object);
            }
        }
        removed
    }

    pub fn contains(&self, tuple: &RelationshipTuple) -> bool {
        self.edges(&tuple.object, &tuple.relation).any(|e| {
            e.user == tuple.user && e.condition == tuple.condition
        })
    }

    /// Edges stored under `(object, relation)` in canonical order.
    pub fn edges<'a>(&'a self, object: &ObjectRef, relation: &str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.index
            .get(object)
            .and_then(|r| r.get(relation))
            .into_iter()
            .flatten()
    }

    /// All tuples in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = RelationshipTuple> + '_ {
        self.index.iter().flat_map(|(object, relations)| {
            relations.iter().flat_map(move |(relation, edges)| {
                edges.iter().map(move |e| RelationshipTuple {
                    user: e.user.clone(),
                    relation: relation.clone(),
                    object: object.clone(),
                    condition: e.condition.clone(),
                })
            })
        })
    }

    pub fn objects(&self) -> impl Iterator<Item = &ObjectRef> {
        self.index.keys()
    }
}

impl FromIterator<RelationshipTuple> for TupleSet {
    fn from_iter<I: IntoIterator<Item = RelationshipTuple>>(iter: I) -> Self {
        let mut set = TupleSet::new();
        for t in iter {
            set.insert(t);
        }
        set
    }
}

/// Line-delimited tuple records, optionally preceded by a `# iri-map` header
/// that maps compiled ids back to the IRIs they came from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TupleFile {
    pub iri_map: BTreeMap<String, String>,
    pub tuples: Vec<RelationshipTuple>,
}

const IRI_MAP_HEADER: &str = "# iri-map ";

pub fn render_tuple_file(file: &TupleFile) -> String {
    let mut out = String::new();
    if !file.iri_map.is_empty() {
        let map: Map<String, Json> = file
            .iri_map
            .iter()
            .map(|(k, v)| (k.clone(), Json::String(v.clone())))
            .collect();
        out.push_str(IRI_MAP_HEADER);
        out.push_str(&Json::Object(map).to_string());
        out.push('\n');
    }
    for t in &file.tuples {
        out.push_str(&t.render());
        out.push('\n');
    }
    out
}

/// Reads tuple lines. Blank lines and `#` comments are skipped; the
/// `# iri-map` header is kept.
pub fn parse_tuple_file(text: &str) -> Result<TupleFile, TupleError> {
    let mut file = TupleFile::default();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        let bad = |reason: String| TupleError::BadLine { line: n + 1, reason };
        if let Some(map) = line.strip_prefix(IRI_MAP_HEADER) {
            let parsed: BTreeMap<String, String> =
                serde_json::from_str(map).map_err(|e| bad(e.to_string()))?;
            file.iri_map.extend(parsed);
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let json: Json = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        file.tuples.push(RelationshipTuple::from_json(&json).map_err(bad)?);
    }
    Ok(file)
}
