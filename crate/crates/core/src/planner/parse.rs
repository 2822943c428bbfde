use std::sync::LazyLock;

use regex::Regex;

use super::{ColumnRef, LogicalPlan, MacroOperator, MacroOperatorKind, PlanError};
use crate::model::SchemaCatalog;

/// SQL keywords that may not appear as standalone words in a description.
pub const BLACKLIST: [&str; 8] = ["SELECT", "FROM", "WHERE", "GROUP", "JOIN", "ORDER", "HAVING", "LIMIT"];

/// Function names whose call syntax `NAME(` gives SQL away.
const KNOWN_FUNCTIONS: &[&str] = &[
    "AGE", "AVG", "CAST", "CEIL", "COALESCE", "CONCAT", "CONVERT", "COUNT", "DATEADD", "DATEDIFF",
    "DATEPART", "DATE_FORMAT", "DATE_PART", "DATE_TRUNC", "DECODE", "EXTRACT", "FORMAT", "GROUP_CONCAT",
    "IFNULL", "INSTR", "ISNULL", "JSON_EXTRACT", "LAG", "LEAD", "LEFT", "LEN", "LENGTH", "LISTAGG",
    "LOWER", "LPAD", "LTRIM", "MAX", "MIN", "NOW", "NULLIF", "NVL", "RANK", "REGEXP_LIKE",
    "REGEXP_REPLACE", "REGEXP_SUBSTR", "REPLACE", "RIGHT", "ROUND", "ROW_NUMBER", "RPAD", "RTRIM",
    "STRFTIME", "STRING_AGG", "STR_TO_DATE", "SUBSTR", "SUBSTRING", "SUM", "TIMESTAMPDIFF", "TO_CHAR",
    "TO_DATE", "TO_NUMBER", "TRIM", "TRUNC", "UPPER", "YEAR",
];

static KEYWORD_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i)\b({})\b", BLACKLIST.join("|"))).unwrap());
static CALL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i)\b({})\s*\(", KNOWN_FUNCTIONS.join("|"))).unwrap());
static LINE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[(\d+)\]\s*([A-Za-z]+)\s*\|([^|]*)\|([^|]*)$").unwrap());
static TYPE_SUFFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s*\([^)]*\)\s*$").unwrap());

/// Blacklisted keywords and function-call tokens found in `text`.
pub fn blacklist_hits(text: &str) -> Vec<String> {
    let mut hits: Vec<String> = KEYWORD_RE
        .find_iter(text)
        .map(|m| m.as_str().to_ascii_uppercase())
        .collect();
    hits.extend(CALL_RE.captures_iter(text).map(|c| format!("{}(", c[1].to_ascii_uppercase())));
    hits
}

fn resolve_ref(raw: &str, schema: &SchemaCatalog, line: usize) -> Result<ColumnRef, PlanError> {
    let name = TYPE_SUFFIX.replace(raw.trim(), "");
    let (table, column) = name
        .split_once('.')
        .ok_or_else(|| PlanError::Format(format!("line {line}: reference {raw:?} is not table.column")))?;
    let (table, column) = (table.trim(), column.trim());
    let def = schema
        .column(table, column)
        .ok_or_else(|| PlanError::Format(format!("line {line}: unknown column {table}.{column}")))?;
    let table_name = &schema.table(table).expect("column implies table").name;
    Ok(ColumnRef {
        table: table_name.clone(),
        column: def.name.clone(),
        physical_type: def.physical_type.clone(),
    })
}

/// Strict parse of the line-oriented plan format. Blank lines and code
/// fences are skipped; every other line must be an operator line numbered
/// consecutively from 1.
pub fn parse_plan(text: &str, schema: &SchemaCatalog) -> Result<LogicalPlan, PlanError> {
    let mut ops = Vec::new();
    for (lineno, raw) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if raw.is_empty() || raw.starts_with("```") {
            continue;
        }
        let caps = LINE_RE
            .captures(raw)
            .ok_or_else(|| PlanError::Format(format!("line {lineno}: expected `[k] KIND | description | refs`")))?;
        let k: usize = caps[1].parse().map_err(|_| PlanError::Format(format!("line {lineno}: bad index")))?;
        if k != ops.len() + 1 {
            return Err(PlanError::Format(format!("line {lineno}: expected index {}, got {k}", ops.len() + 1)));
        }
        let kind: MacroOperatorKind = caps[2].parse()?;
        let description = caps[3].trim();
        if description.is_empty() {
            return Err(PlanError::Format(format!("line {lineno}: empty description")));
        }
        let refs = caps[4]
            .split(';')
            .filter(|r| !r.trim().is_empty())
            .map(|r| resolve_ref(r, schema, lineno))
            .collect::<Result<Vec<_>, _>>()?;
        ops.push(MacroOperator::new(kind, description, refs));
    }
    if ops.is_empty() {
        return Err(PlanError::Format("no operators".into()));
    }
    Ok(LogicalPlan::new(ops))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_schema_ddl;

    fn schema() -> SchemaCatalog {
        parse_schema_ddl(
            "CREATE TABLE users(user_id BIGINT, username TEXT);
             CREATE TABLE transactions(tx_id BIGINT, user_id BIGINT, amount TEXT);",
            None,
        )
        .unwrap()
    }

    #[test]
    fn parses_and_annotates() {
        let text = "```\n[1] SRC | link each transaction to its user | transactions.user_id; users.user_id\n\
                    [2] ORG | show usernames | users.username (TEXT)\n```";
        let plan = parse_plan(text, &schema()).unwrap();
        assert_eq!(plan.operators.len(), 2);
        assert_eq!(plan.operators[0].refs[1].to_string(), "users.user_id (BIGINT)");
        assert_eq!(plan.operators[1].order_index, 1);
    }

    #[test]
    fn rejects_malformed_lines() {
        let s = schema();
        assert!(matches!(parse_plan("", &s), Err(PlanError::Format(_))));
        assert!(matches!(parse_plan("1. SRC users", &s), Err(PlanError::Format(_))));
        assert!(matches!(parse_plan("[2] SRC | users | ", &s), Err(PlanError::Format(_))));
        assert!(matches!(parse_plan("[1] MAP | users | ", &s), Err(PlanError::Format(_))));
        assert!(matches!(parse_plan("[1] SRC |  | ", &s), Err(PlanError::Format(_))));
        let err = parse_plan("[1] SRC | users | users.nickname", &s).unwrap_err();
        assert!(err.to_string().contains("users.nickname"));
    }

    #[test]
    fn blacklist_words_and_calls() {
        assert_eq!(blacklist_hits("keep rows where x is 1"), vec!["WHERE"]);
        assert_eq!(blacklist_hits("apply SUBSTR (name, 1)"), vec!["SUBSTR("]);
        assert!(blacklist_hits("sum the amounts per username, sorted descending").is_empty());
        assert!(blacklist_hits("the grouping of orders_total").is_empty());
    }
}
