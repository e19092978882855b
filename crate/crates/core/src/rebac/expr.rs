//! Condition expression text for the interchange form.
//!
//! Rendering produces CEL-compatible text such as
//! `current_time <= timestamp("2026-01-01T00:00:00Z")`. Reading accepts only
//! that exact shape back; expressions are never evaluated from text.

use serde_json::Value as Json;

use super::parameter_for;
use crate::odrl::{Constraint, LeftOperand, Operator};
use crate::value::{parse_timestamp, render_timestamp, Value};

fn symbol(op: Operator) -> &'static str {
    match op {
        Operator::Eq => "==",
        Operator::Lt => "<",
        Operator::Lteq => "<=",
        Operator::Gt => ">",
        Operator::Gteq => ">=",
        Operator::IsAnyOf => "in",
    }
}

pub(super) fn render(predicate: &Constraint) -> String {
    let (param, _) = parameter_for(predicate.left_operand);
    let literal = match &predicate.right_operand {
        Value::Timestamp(ts) => format!("timestamp({})", Json::String(render_timestamp(*ts))),
        Value::Text(t) => Json::String(t.clone()).to_string(),
        Value::Integer(n) => n.to_string(),
        Value::TextList(items) => {
            let quoted: Vec<String> = items.iter().map(|i| Json::String(i.clone()).to_string()).collect();
            format!("[{}]", quoted.join(", "))
        }
    };
    format!("{param} {} {literal}", symbol(predicate.operator))
}

pub(super) fn parse(expression: &str) -> Result<Constraint, String> {
    let bad = || format!("unsupported condition expression `{expression}`");
    let (param, rest) = expression.trim().split_once(' ').ok_or_else(bad)?;
    let (op_text, literal) = rest.trim_start().split_once(' ').ok_or_else(bad)?;
    let left = LeftOperand::ALL
        .into_iter()
        .find(|l| parameter_for(*l).0 == param)
        .ok_or_else(bad)?;
    let operator = Operator::ALL
        .into_iter()
        .find(|o| symbol(*o) == op_text)
        .ok_or_else(bad)?;
    let literal = literal.trim();
    let value = if let Some(inner) = literal
        .strip_prefix("timestamp(")
        .and_then(|s| s.strip_suffix(')'))
    {
        let Json::String(s) = serde_json::from_str(inner).map_err(|_| bad())? else {
            return Err(bad());
        };
        Value::Timestamp(parse_timestamp(&s).map_err(|_| bad())?)
    } else {
        match serde_json::from_str(literal).map_err(|_| bad())? {
            Json::String(s) => Value::Text(s),
            Json::Number(n) => Value::Integer(n.as_u64().ok_or_else(bad)?),
            Json::Array(items) => Value::TextList(
                items
                    .into_iter()
                    .map(|i| match i {
                        Json::String(s) => Ok(s),
                        _ => Err(bad()),
                    })
                    .collect::<Result<_, _>>()?,
            ),
            _ => return Err(bad()),
        }
    };
    Ok(Constraint::new(left, operator, value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_each_shape() {
        let c = Constraint::new(LeftOperand::DateTime, Operator::Lteq, Value::Timestamp(1_767_225_600));
        assert_eq!(render(&c), r#"current_time <= timestamp("2026-01-01T00:00:00Z")"#);
        let c = Constraint::new(
            LeftOperand::Purpose,
            Operator::IsAnyOf,
            Value::TextList(vec!["research".into(), "audit".into()]),
        );
        assert_eq!(render(&c), r#"purpose in ["research", "audit"]"#);
        let c = Constraint::new(LeftOperand::Count, Operator::Gteq, Value::Integer(3));
        assert_eq!(render(&c), "count >= 3");
        let c = Constraint::new(LeftOperand::Purpose, Operator::Eq, Value::Text("a \"b\"".into()));
        assert_eq!(render(&c), r#"purpose == "a \"b\"""#);
    }

    #[test]
    fn reads_back_what_it_renders() {
        for c in [
            Constraint::new(LeftOperand::DateTime, Operator::Gt, Value::Timestamp(-5)),
            Constraint::new(LeftOperand::Purpose, Operator::Eq, Value::Text("x y".into())),
            Constraint::new(LeftOperand::Purpose, Operator::IsAnyOf, Value::TextList(vec![])),
            Constraint::new(LeftOperand::Count, Operator::Lt, Value::Integer(0)),
        ] {
            assert_eq!(parse(&render(&c)).unwrap(), c);
        }
    }

    #[test]
    fn rejects_other_expressions() {
        assert!(parse("current_time < expires_at").is_err());
        assert!(parse("a && b").is_err());
        assert!(parse("purpose != \"x\"").is_err());
        assert!(parse("count >= -1").is_err());
    }
}
