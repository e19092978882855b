use std::collections::BTreeMap;

use serde_json::{json, Map, Value as Json};

use crate::iri::Iri;
use crate::odrl::{ActionTerm, Constraint, Rule};
use crate::value::Value;

/// A duty the relationship model cannot enforce, kept for a usage-control
/// runtime.
#[derive(Debug, Clone, PartialEq)]
pub struct ObligationRecord {
    pub action: ActionTerm,
    pub target: Iri,
    /// One entry per constraint, keyed `<operand>_<operator>`, plus
    /// `<operand>_<operator>_unit` when the constraint has a unit.
    pub parameters: BTreeMap<String, Value>,
    /// `<policy uid>#<JSON pointer of the rule>`.
    pub source_rule_path: String,
}

impl ObligationRecord {
    pub(crate) fn from_rule(rule: &Rule, source_rule_path: String) -> Self {
        let mut parameters = BTreeMap::new();
        for c in &rule.constraints {
            let key = parameter_key(c);
            if let Some(unit) = &c.unit {
                parameters.insert(format!("{key}_unit"), Value::Text(unit.clone()));
            }
            parameters.insert(key, c.right_operand.clone());
        }
        Self {
            action: rule.action,
            target: rule.target.clone(),
            parameters,
            source_rule_path,
        }
    }

    pub fn to_json(&self) -> Json {
        let parameters: Map<String, Json> = self.parameters.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
        json!({
            "action": self.action.compact(),
            "target": self.target.as_str(),
            "parameters": parameters,
            "source_rule_path": self.source_rule_path,
        })
    }
}

fn parameter_key(c: &Constraint) -> String {
    let local = |compact: &str| compact["odrl:".len()..].to_ascii_lowercase();
    format!("{}_{}", local(c.left_operand.compact()), local(c.operator.compact()))
}

/// One compact JSON object per line.
pub fn render_obligations(records: &[ObligationRecord]) -> String {
    records.iter().map(|r| format!("{}\n", r.to_json())).collect()
}
