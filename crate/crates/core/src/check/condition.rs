use std::collections::BTreeMap;

use thiserror::Error;

use crate::odrl::Operator;
use crate::rebac::ConditionDef;
use crate::value::{ParamType, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConditionError {
    #[error("missing context parameter `{0}`")]
    MissingParameter(String),
    #[error("parameter `{param}` expects a {expected} value")]
    TypeMismatch { param: String, expected: &'static str },
}

/// Evaluates a condition's predicate.
///
/// Request context overrides tuple context on key collisions. A referenced
/// parameter absent from both yields [`ConditionError::MissingParameter`].
pub fn evaluate_condition(
    cond: &ConditionDef,
    tuple_context: &BTreeMap<String, Value>,
    request_context: &BTreeMap<String, Value>,
) -> Result<bool, ConditionError> {
    let param = cond.predicate_parameter();
    let declared = cond.parameters.get(param).copied();
    let raw = request_context
        .get(param)
        .or_else(|| tuple_context.get(param))
        .ok_or_else(|| ConditionError::MissingParameter(param.to_string()))?;
    let expected = declared.unwrap_or(raw.param_type());
    let mismatch = || ConditionError::TypeMismatch {
        param: param.to_string(),
        expected: expected.name(),
    };
    let actual = raw.coerce(expected).ok_or_else(mismatch)?;
    let op = cond.predicate.operator;
    match (&actual, &cond.predicate.right_operand) {
        (Value::Timestamp(a), Value::Timestamp(b)) => order(op, a, b).ok_or_else(mismatch),
        (Value::Integer(a), Value::Integer(b)) => order(op, a, b).ok_or_else(mismatch),
        (Value::Text(a), Value::Text(b)) if op == Operator::Eq => Ok(a == b),
        (Value::Text(a), Value::TextList(items)) if op == Operator::IsAnyOf => {
            Ok(items.iter().any(|i| i == a))
        }
        _ => Err(mismatch()),
    }
}

fn order<T: Ord>(op: Operator, actual: &T, bound: &T) -> Option<bool> {
    Some(match op {
        Operator::Eq => actual == bound,
        Operator::Lt => actual < bound,
        Operator::Lteq => actual <= bound,
        Operator::Gt => actual > bound,
        Operator::Gteq => actual >= bound,
        Operator::IsAnyOf => return None,
    })
}

/// Checks request context values against every declared parameter of the
/// same name.
pub(crate) fn check_context_types<'a>(
    conditions: impl IntoIterator<Item = &'a ConditionDef>,
    context: &BTreeMap<String, Value>,
) -> Result<(), (String, ParamType)> {
    for cond in conditions {
        for (name, ty) in &cond.parameters {
            if let Some(v) = context.get(name) {
                if v.coerce(*ty).is_none() {
                    return Err((name.clone(), *ty));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odrl::{Constraint, LeftOperand};

    fn cond(l: LeftOperand, op: Operator, v: Value) -> ConditionDef {
        ConditionDef::new("c", Constraint::new(l, op, v))
    }

    fn ctx(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn inclusive_datetime_bound() {
        let c = cond(LeftOperand::DateTime, Operator::Lteq, Value::Timestamp(100));
        let none = BTreeMap::new();
        for (t, expected) in [(99, true), (100, true), (101, false)] {
            let r = ctx(&[("current_time", Value::Timestamp(t))]);
            assert_eq!(evaluate_condition(&c, &none, &r), Ok(expected), "t={t}");
        }
        assert_eq!(
            evaluate_condition(&c, &none, &none),
            Err(ConditionError::MissingParameter("current_time".into()))
        );
    }

    #[test]
    fn purpose_membership() {
        let c = cond(
            LeftOperand::Purpose,
            Operator::IsAnyOf,
            Value::TextList(vec!["research".into(), "audit".into()]),
        );
        let none = BTreeMap::new();
        let research = ctx(&[("purpose", Value::Text("research".into()))]);
        let resale = ctx(&[("purpose", Value::Text("resale".into()))]);
        assert_eq!(evaluate_condition(&c, &none, &research), Ok(true));
        assert_eq!(evaluate_condition(&c, &none, &resale), Ok(false));
    }

    #[test]
    fn request_overrides_tuple_context() {
        let c = cond(LeftOperand::Count, Operator::Lt, Value::Integer(3));
        let tuple = ctx(&[("count", Value::Integer(1))]);
        let request = ctx(&[("count", Value::Integer(5))]);
        assert_eq!(evaluate_condition(&c, &tuple, &BTreeMap::new()), Ok(true));
        assert_eq!(evaluate_condition(&c, &tuple, &request), Ok(false));
    }

    #[test]
    fn type_mismatch() {
        let c = cond(LeftOperand::DateTime, Operator::Lt, Value::Timestamp(0));
        let r = ctx(&[("current_time", Value::Integer(5))]);
        assert!(matches!(
            evaluate_condition(&c, &BTreeMap::new(), &r),
            Err(ConditionError::TypeMismatch { .. })
        ));
        let c = cond(LeftOperand::Purpose, Operator::Eq, Value::Text("x".into()));
        let r = ctx(&[("purpose", Value::Timestamp(0))]);
        assert_eq!(evaluate_condition(&c, &BTreeMap::new(), &r), Ok(false));
    }
}
