use std::sync::{LazyLock, Mutex};

use regex::Regex;
use rusqlite::types::ValueRef;
use rusqlite::Connection;

use super::locate::find_segment;
use super::{Capability, ExecError, Executor};
use crate::model::{Cell, Dialect, ErrorTrace, ExecutionOutcome, Rows, SchemaCatalog, SqlText};

static NEAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"near "([^"]+)""#).unwrap());
static NO_SUCH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:no such (?:column|table|function)|ambiguous column name): ([\w.$]+)").unwrap());

/// In-memory SQLite connection; calls are serialized on the connection.
pub struct SqliteExecutor {
    conn: Mutex<Connection>,
}

impl SqliteExecutor {
    pub fn in_memory() -> Result<Self, ExecError> {
        let conn = Connection::open_in_memory().map_err(|e| ExecError::Seed(e.to_string()))?;
        Ok(Self { conn: Mutex::new(conn) })
    }

    /// Runs a batch of statements (DDL and inserts) before any query.
    pub fn with_seed(seed: &str) -> Result<Self, ExecError> {
        let exec = Self::in_memory()?;
        exec.conn
            .lock()
            .unwrap()
            .execute_batch(seed)
            .map_err(|e| ExecError::Seed(e.to_string()))?;
        Ok(exec)
    }

    /// Empty tables mirroring the catalog, so column references resolve.
    pub fn from_schema(schema: &SchemaCatalog) -> Result<Self, ExecError> {
        let mut ddl = String::new();
        for t in &schema.tables {
            let cols: Vec<String> = t
                .columns
                .iter()
                .map(|c| format!("\"{}\" {}", c.name.replace('"', "\"\""), c.physical_type))
                .collect();
            ddl.push_str(&format!(
                "CREATE TABLE \"{}\" ({});\n",
                t.name.replace('"', "\"\""),
                cols.join(", ")
            ));
        }
        Self::with_seed(&ddl)
    }

    /// Runs a further batch, typically inserts, on the live connection.
    pub fn load(&self, batch: &str) -> Result<(), ExecError> {
        self.conn
            .lock()
            .unwrap()
            .execute_batch(batch)
            .map_err(|e| ExecError::Seed(e.to_string()))
    }

    fn run(&self, sql: &str) -> Result<Rows, rusqlite::Error> {
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn.prepare(sql)?;
        let ncols = stmt.column_count();
        let mut rows = stmt.query([])?;
        let mut out = Vec::new();
        while let Some(row) = rows.next()? {
            let mut cells = Vec::with_capacity(ncols);
            for i in 0..ncols {
                cells.push(match row.get_ref(i)? {
                    ValueRef::Null => Cell::Null,
                    ValueRef::Integer(v) => Cell::Int(v),
                    ValueRef::Real(v) => Cell::Float(v),
                    ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
                    ValueRef::Blob(b) => Cell::Text(hex::encode(b)),
                });
            }
            out.push(cells);
        }
        Ok(out)
    }
}

fn trace_for(sql: &str, err: &rusqlite::Error) -> ErrorTrace {
    let (code, message) = match err {
        rusqlite::Error::SqliteFailure(e, msg) => (
            Some(format!("SQLITE_{}", e.extended_code)),
            msg.clone().unwrap_or_else(|| e.to_string()),
        ),
        other => (None, other.to_string()),
    };
    let needle = NEAR
        .captures(&message)
        .or_else(|| NO_SUCH.captures(&message))
        .map(|c| c[1].to_string());
    let failing_segment = needle.and_then(|n| {
        let short = n.rsplit('.').next().unwrap_or(&n).to_string();
        find_segment(sql, &regex::escape(&n), false, |_| true)
            .or_else(|| find_segment(sql, &regex::escape(&short), false, |_| true))
    });
    ErrorTrace {
        vendor_code: code,
        message,
        failing_segment,
    }
}

impl Executor for SqliteExecutor {
    fn dialect(&self) -> Dialect {
        Dialect::Sqlite
    }

    fn capability(&self) -> Capability {
        Capability::Live
    }

    fn execute(&self, sql: &SqlText) -> ExecutionOutcome {
        match self.run(&sql.text) {
            Ok(rows) => ExecutionOutcome::Success { rows },
            Err(e) => ExecutionOutcome::Error {
                trace: trace_for(&sql.text, &e),
            },
        }
    }
}

/// Runs `sql` on a fresh embedded engine seeded with `seed`.
pub fn execute_embedded(sql: &SqlText, seed: Option<&str>) -> Result<ExecutionOutcome, ExecError> {
    if sql.dialect != Dialect::Sqlite {
        return Err(ExecError::AdapterUnavailable(sql.dialect));
    }
    let exec = match seed {
        Some(s) => SqliteExecutor::with_seed(s)?,
        None => SqliteExecutor::in_memory()?,
    };
    Ok(exec.execute(sql))
}
