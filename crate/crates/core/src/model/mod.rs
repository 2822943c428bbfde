//! Shared domain types: dialects, schema catalogs, translation tasks, SQL text
//! and execution outcomes.

mod ddl;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ddl::{parse_schema_ddl, SampleMap};

/// Maximum number of sample values kept per column.
pub const MAX_SAMPLES: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("DDL parse error: {0}")]
    Parse(String),
    #[error("duplicate object: {0}")]
    DuplicateObject(String),
    #[error("sample map references unknown column {0}")]
    UnknownSampleColumn(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("unknown dialect '{0}'")]
    UnknownDialect(String),
    #[error("SQL text is empty")]
    EmptySql,
}

/// Target database system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    Sqlite,
    Postgresql,
    Mysql,
    Sqlserver,
    Duckdb,
    Oracle,
}

impl Dialect {
    /// All six dialects, in report column order.
    pub const ALL: [Dialect; 6] = [
        Dialect::Sqlite,
        Dialect::Postgresql,
        Dialect::Mysql,
        Dialect::Sqlserver,
        Dialect::Duckdb,
        Dialect::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dialect::Sqlite => "sqlite",
            Dialect::Postgresql => "postgresql",
            Dialect::Mysql => "mysql",
            Dialect::Sqlserver => "sqlserver",
            Dialect::Duckdb => "duckdb",
            Dialect::Oracle => "oracle",
        }
    }

    /// Human-readable product name.
    pub fn display_name(self) -> &'static str {
        match self {
            Dialect::Sqlite => "SQLite",
            Dialect::Postgresql => "PostgreSQL",
            Dialect::Mysql => "MySQL",
            Dialect::Sqlserver => "SQL Server",
            Dialect::Duckdb => "DuckDB",
            Dialect::Oracle => "Oracle",
        }
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dialect {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Dialect::ALL
            .into_iter()
            .find(|d| d.name() == lower)
            .or(match lower.as_str() {
                "postgres" | "pg" => Some(Dialect::Postgresql),
                "mssql" | "tsql" => Some(Dialect::Sqlserver),
                _ => None,
            })
            .ok_or_else(|| ModelError::UnknownDialect(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    #[serde(rename = "type")]
    pub physical_type: String,
    #[serde(default)]
    pub samples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

impl TableDef {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

/// Tables, columns, physical types and sample values of one database.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaCatalog {
    pub tables: Vec<TableDef>,
}

impl SchemaCatalog {
    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, table: &str, column: &str) -> Option<&ColumnDef> {
        self.table(table).and_then(|t| t.column(column))
    }

    /// Every (table, column) pair in declaration order.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.tables
            .iter()
            .flat_map(|t| t.columns.iter().map(move |c| (t.name.as_str(), c.name.as_str())))
    }

    /// Invariant violations; empty when the catalog is well formed.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen_tables = BTreeSet::new();
        let mut seen_pairs = BTreeSet::new();
        for table in &self.tables {
            if table.name.trim().is_empty() {
                out.push("table name empty".to_string());
            }
            if !seen_tables.insert(table.name.to_ascii_lowercase()) {
                out.push(format!("duplicate table {}", table.name));
            }
            for col in &table.columns {
                if col.name.trim().is_empty() {
                    out.push(format!("column name empty in table {}", table.name));
                }
                if col.physical_type.trim().is_empty() {
                    out.push(format!("column {}.{} has empty type", table.name, col.name));
                }
                if col.samples.len() > MAX_SAMPLES {
                    out.push(format!(
                        "column {}.{} has {} samples (max {MAX_SAMPLES})",
                        table.name,
                        col.name,
                        col.samples.len()
                    ));
                }
                let key = (table.name.to_ascii_lowercase(), col.name.to_ascii_lowercase());
                if !seen_pairs.insert(key) {
                    out.push(format!("duplicate column {}.{}", table.name, col.name));
                }
            }
        }
        out
    }

    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let catalog: SchemaCatalog =
            serde_json::from_str(text).map_err(|e| ModelError::InvalidSchema(e.to_string()))?;
        match catalog.violations().into_iter().next() {
            Some(v) => Err(ModelError::InvalidSchema(v)),
            None => Ok(catalog),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    /// Compact DDL-like rendering for prompts: one line per table, types and
    /// up to [`MAX_SAMPLES`] samples inline.
    pub fn render_for_prompt(&self) -> String {
        let mut out = String::new();
        for table in &self.tables {
            out.push_str(&table.name);
            out.push('(');
            let cols: Vec<String> = table
                .columns
                .iter()
                .map(|c| {
                    if c.samples.is_empty() {
                        format!("{} {}", c.name, c.physical_type)
                    } else {
                        let samples: Vec<String> = c
                            .samples
                            .iter()
                            .take(MAX_SAMPLES)
                            .map(|s| format!("\"{s}\""))
                            .collect();
                        format!("{} {} e.g. {}", c.name, c.physical_type, samples.join(", "))
                    }
                })
                .collect();
            out.push_str(&cols.join("; "));
            out.push_str(")\n");
        }
        out
    }
}

/// A (table, column) reference supplied as ground-truth schema context.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SchemaElement {
    pub table: String,
    pub column: String,
}

impl SchemaElement {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        Self {
            table: table.into(),
            column: column.into(),
        }
    }
}

/// One pipeline input: question, schema and target dialect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationTask {
    pub question: String,
    pub schema: SchemaCatalog,
    pub dialect: Dialect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_elements: Option<Vec<SchemaElement>>,
}

/// Lists every violated task invariant. Violations are data, not failures.
pub fn validate_task(task: &TranslationTask) -> Vec<String> {
    let mut out = Vec::new();
    if task.question.trim().is_empty() {
        out.push("question empty".to_string());
    }
    for v in task.schema.violations() {
        out.push(format!("schema: {v}"));
    }
    if let Some(elements) = &task.gold_elements {
        for e in elements {
            if task.schema.column(&e.table, &e.column).is_none() {
                out.push(format!(
                    "gold_elements: unknown column {}.{}",
                    e.table, e.column
                ));
            }
        }
    }
    out
}

/// SQL text bound to the dialect it targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlText {
    pub text: String,
    pub dialect: Dialect,
}

impl SqlText {
    pub fn new(text: impl Into<String>, dialect: Dialect) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ModelError::EmptySql);
        }
        Ok(Self { text, dialect })
    }
}

impl fmt::Display for SqlText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// A single result cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Int(i64),
    Float(f64),
    Text(String),
}

pub type Rows = Vec<Vec<Cell>>;

/// Character span of the SQL fragment an error points at.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTrace {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vendor_code: Option<String>,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failing_segment: Option<Segment>,
}

impl ErrorTrace {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            vendor_code: None,
            message: message.into(),
            failing_segment: None,
        }
    }
}

impl fmt::Display for ErrorTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.vendor_code {
            Some(code) if !self.message.contains(code.as_str()) => {
                write!(f, "{code}: {}", self.message)
            }
            _ => f.write_str(&self.message),
        }
    }
}

/// Result of running a query: rows on success, an error trace otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ExecutionOutcome {
    Success { rows: Rows },
    Error { trace: ErrorTrace },
}

impl ExecutionOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, ExecutionOutcome::Success { .. })
    }

    pub fn rows(&self) -> Option<&Rows> {
        match self {
            ExecutionOutcome::Success { rows } => Some(rows),
            ExecutionOutcome::Error { .. } => None,
        }
    }

    pub fn trace(&self) -> Option<&ErrorTrace> {
        match self {
            ExecutionOutcome::Success { .. } => None,
            ExecutionOutcome::Error { trace } => Some(trace),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crypto_schema() -> SchemaCatalog {
        parse_schema_ddl(
            "CREATE TABLE users(user_id BIGINT PRIMARY KEY, username TEXT);\
             CREATE TABLE transactions(transaction_id BIGINT, user_id BIGINT, amount TEXT);",
            None,
        )
        .unwrap()
    }

    #[test]
    fn dialect_names_round_trip() {
        for d in Dialect::ALL {
            assert_eq!(d.name().parse::<Dialect>().unwrap(), d);
            assert_eq!(serde_json::to_string(&d).unwrap(), format!("\"{}\"", d.name()));
        }
        assert_eq!(Dialect::ALL.len(), 6);
        assert!("db2".parse::<Dialect>().is_err());
    }

    #[test]
    fn well_formed_task_has_no_violations() {
        let task = TranslationTask {
            question: "list all usernames".into(),
            schema: crypto_schema(),
            dialect: Dialect::Oracle,
            gold_elements: Some(vec![SchemaElement::new("users", "username")]),
        };
        assert!(validate_task(&task).is_empty());
    }

    #[test]
    fn unknown_gold_element_is_named() {
        let task = TranslationTask {
            question: "list all usernames".into(),
            schema: crypto_schema(),
            dialect: Dialect::Oracle,
            gold_elements: Some(vec![SchemaElement::new("users", "nickname")]),
        };
        let v = validate_task(&task);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("users.nickname"), "{v:?}");
    }

    #[test]
    fn empty_question_is_reported() {
        let task = TranslationTask {
            question: "  ".into(),
            schema: crypto_schema(),
            dialect: Dialect::Mysql,
            gold_elements: None,
        };
        assert_eq!(validate_task(&task), vec!["question empty".to_string()]);
    }

    #[test]
    fn sql_text_rejects_blank() {
        assert_eq!(SqlText::new("  \n", Dialect::Sqlite), Err(ModelError::EmptySql));
        assert!(SqlText::new("SELECT 1", Dialect::Sqlite).is_ok());
    }

    #[test]
    fn outcome_serializes_with_status_tag() {
        let ok = ExecutionOutcome::Success {
            rows: vec![vec![Cell::Int(1), Cell::Text("a".into()), Cell::Null]],
        };
        let json = serde_json::to_string(&ok).unwrap();
        assert_eq!(json, r#"{"status":"success","rows":[[1,"a",null]]}"#);
        let back: ExecutionOutcome = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ok);
        let err = ExecutionOutcome::Error {
            trace: ErrorTrace::new("boom"),
        };
        assert!(serde_json::to_string(&err).unwrap().contains("\"status\":\"error\""));
    }

    #[test]
    fn catalog_json_uses_type_key() {
        let json = crypto_schema().to_json_string();
        assert!(json.contains("\"type\": \"TEXT\""));
        let back = SchemaCatalog::from_json_str(&json).unwrap();
        assert_eq!(back, crypto_schema());
    }

    #[test]
    fn from_json_rejects_duplicate_pairs() {
        let json = r#"{"tables":[{"name":"t","columns":[{"name":"a","type":"INT"},{"name":"A","type":"INT"}]}]}"#;
        assert!(matches!(
            SchemaCatalog::from_json_str(json),
            Err(ModelError::InvalidSchema(_))
        ));
    }
}
