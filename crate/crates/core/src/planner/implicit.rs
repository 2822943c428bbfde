use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use super::parse::blacklist_hits;
use super::{ColumnRef, LogicalPlan, MacroOperator, MacroOperatorKind, PlanError};
use crate::llm::{bindings, Prompter};
use crate::model::{SchemaCatalog, MAX_SAMPLES};

const TEXTUAL: &[&str] = &[
    "TEXT", "VARCHAR", "VARCHAR2", "NVARCHAR", "NVARCHAR2", "CHAR", "NCHAR", "CHARACTER", "STRING", "CLOB",
    "NCLOB", "NTEXT", "TINYTEXT", "MEDIUMTEXT", "LONGTEXT",
];

static NUMERIC_INTENT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(sum|summed|total|averag|mean|add up|greater|less than|more than|fewer than|exceed|above|below|highest|lowest|largest|smallest|maximum|minimum|multipl|divid|ratio|percent)",
    )
    .unwrap()
});
static DECORATED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:[$€£¥]|[A-Z]{3})?\s*-?\d{1,3}(?:,?\d{3})*(?:\.\d+)?\s*(?:[A-Za-z]{1,4}|%)?\s*$").unwrap()
});

/// Upper-cased leading word of a type, without length arguments.
pub(crate) fn base_type(physical_type: &str) -> String {
    physical_type
        .split(|c: char| c == '(' || c.is_whitespace())
        .next()
        .unwrap_or("")
        .to_ascii_uppercase()
}

pub fn is_textual_type(physical_type: &str) -> bool {
    TEXTUAL.contains(&base_type(physical_type).as_str())
}

pub fn has_numeric_intent(description: &str) -> bool {
    NUMERIC_INTENT.is_match(description)
}

/// Number wrapped in currency symbols, thousands separators or unit text.
pub fn looks_decorated_numeric(sample: &str) -> bool {
    sample.trim().parse::<f64>().is_err() && DECORATED.is_match(sample)
}

fn numeric_shaped(sample: &str) -> bool {
    sample.trim().parse::<f64>().is_ok() || looks_decorated_numeric(sample)
}

fn conflict(op: &MacroOperator, r: &ColumnRef, schema: &SchemaCatalog) -> bool {
    if !matches!(
        op.kind,
        MacroOperatorKind::Flt | MacroOperatorKind::Agg | MacroOperatorKind::Cal | MacroOperatorKind::Org
    ) {
        return false;
    }
    let def = schema.column(&r.table, &r.column);
    let ty = def.map(|d| d.physical_type.as_str()).unwrap_or(&r.physical_type);
    if !is_textual_type(ty) || !has_numeric_intent(&op.description) {
        return false;
    }
    let samples = def.map(|d| d.samples.as_slice()).unwrap_or_default();
    samples.is_empty() || samples.iter().any(|s| numeric_shaped(s))
}

fn key(r: &ColumnRef) -> (String, String) {
    (r.table.to_ascii_lowercase(), r.column.to_ascii_lowercase())
}

/// Inserts a calculation step before every operator that uses a text column
/// as a number, unless an earlier calculation already covers that column.
pub fn mine_implicit_logic(
    plan: &LogicalPlan,
    schema: &SchemaCatalog,
    llm: &Prompter<'_>,
) -> Result<LogicalPlan, PlanError> {
    let mut covered: BTreeSet<(String, String)> = BTreeSet::new();
    let mut out = Vec::with_capacity(plan.operators.len());
    for op in &plan.operators {
        for r in &op.refs {
            if covered.contains(&key(r)) || !conflict(op, r, schema) {
                continue;
            }
            let samples: Vec<String> = schema
                .column(&r.table, &r.column)
                .map(|d| d.samples.iter().take(MAX_SAMPLES).map(|s| format!("\"{s}\"")).collect())
                .unwrap_or_default();
            let reply = llm.ask(
                "mine_implicit",
                &bindings([
                    ("column", format!("{}.{}", r.table, r.column)),
                    ("type", r.physical_type.clone()),
                    ("samples", if samples.is_empty() { "(none)".into() } else { samples.join(", ") }),
                    ("operation", op.description.clone()),
                ]),
            )?;
            let description = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
            if description.is_empty() || description.contains('|') {
                return Err(PlanError::Format(format!("implicit step for {}.{}: {reply:?}", r.table, r.column)));
            }
            let hits = blacklist_hits(description);
            if !hits.is_empty() {
                return Err(PlanError::Blacklist(format!("implicit step uses {}", hits.join(", "))));
            }
            tracing::info!(column = %format!("{}.{}", r.table, r.column), "implicit calculation inserted");
            out.push(MacroOperator::new(MacroOperatorKind::Cal, description, vec![r.clone()]));
            covered.insert(key(r));
        }
        if op.kind == MacroOperatorKind::Cal {
            covered.extend(op.refs.iter().map(key));
        }
        out.push(op.clone());
    }
    Ok(LogicalPlan::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{StubBackend, StubRule, TemplateSet};
    use crate::model::{parse_schema_ddl, SampleMap};

    fn schema(ty: &str) -> SchemaCatalog {
        let mut samples = SampleMap::new();
        samples.insert("transactions.amount".into(), vec!["$ 1,234.56 USD".into(), "$ 88.00 USD".into()]);
        parse_schema_ddl(
            &format!("CREATE TABLE transactions(tx_id BIGINT, user_id BIGINT, amount {ty})"),
            Some(&samples),
        )
        .unwrap()
    }

    fn amount(ty: &str) -> ColumnRef {
        ColumnRef {
            table: "transactions".into(),
            column: "amount".into(),
            physical_type: ty.into(),
        }
    }

    fn plan(ty: &str) -> LogicalPlan {
        LogicalPlan::new(vec![
            MacroOperator::new(MacroOperatorKind::Src, "read the transactions", vec![]),
            MacroOperator::new(MacroOperatorKind::Agg, "sum the amount per user", vec![amount(ty)]),
            MacroOperator::new(MacroOperatorKind::Org, "show user and total", vec![]),
        ])
    }

    fn stub() -> StubBackend {
        StubBackend::new(vec![StubRule::new(
            "mine_implicit",
            "$ 1,234.56 USD",
            "strip symbols and commas, cast to numeric",
        )])
    }

    #[test]
    fn decorated_text_gets_a_calculation() {
        let backend = stub();
        let templates = TemplateSet::builtin();
        let out = mine_implicit_logic(&plan("TEXT"), &schema("TEXT"), &Prompter::new(&backend, &templates)).unwrap();
        assert_eq!(out.operators.len(), 4);
        assert_eq!(out.operators[1].kind, MacroOperatorKind::Cal);
        assert_eq!(out.operators[1].description, "strip symbols and commas, cast to numeric");
        assert_eq!(out.operators[2].kind, MacroOperatorKind::Agg);
        assert_eq!(out.operators[2].order_index, 2);
        // a second pass finds the column already covered
        let again = mine_implicit_logic(&out, &schema("TEXT"), &Prompter::new(&backend, &templates)).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn numeric_column_is_untouched() {
        let backend = StubBackend::default();
        let templates = TemplateSet::builtin();
        let p = plan("REAL");
        assert_eq!(mine_implicit_logic(&p, &schema("REAL"), &Prompter::new(&backend, &templates)).unwrap(), p);
        let empty = LogicalPlan::new(vec![MacroOperator::new(MacroOperatorKind::Src, "read", vec![])]);
        assert_eq!(mine_implicit_logic(&empty, &schema("TEXT"), &Prompter::new(&backend, &templates)).unwrap(), empty);
    }

    #[test]
    fn sample_shapes() {
        assert!(looks_decorated_numeric("$ 1,234.56 USD"));
        assert!(looks_decorated_numeric("45%"));
        assert!(looks_decorated_numeric("EUR 12"));
        assert!(!looks_decorated_numeric("12.5"));
        assert!(!looks_decorated_numeric("alice"));
        assert!(!looks_decorated_numeric("user12"));
        assert!(is_textual_type("varchar(64)"));
        assert!(!is_textual_type("DECIMAL(10,2)"));
    }
}
