use std::sync::LazyLock;

use regex::Regex;
use sqlparser::ast::{SetExpr, Statement};
use sqlparser::dialect::{
    Dialect as ParserDialect, DuckDbDialect, MsSqlDialect, MySqlDialect, OracleDialect, PostgreSqlDialect,
    SQLiteDialect,
};
use sqlparser::parser::Parser;

use crate::model::{Dialect, ErrorTrace, Segment};
use crate::sqlutil;

static PARSER_POSITION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"found: (.*?) at Line: (\d+), Column: (\d+)").unwrap());

/// Per-dialect configuration over the shared SQL parser.
pub struct GrammarProfile {
    pub dialect: Dialect,
    parser: Box<dyn ParserDialect + Send + Sync>,
    /// `SELECT TOP n` accepted.
    pub top_allowed: bool,
}

/// A statement the profile rejects before any catalog rule runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseFailure {
    pub trace: ErrorTrace,
    pub line: usize,
    pub column: usize,
}

impl GrammarProfile {
    pub fn for_dialect(dialect: Dialect) -> Self {
        let parser: Box<dyn ParserDialect + Send + Sync> = match dialect {
            Dialect::Sqlite => Box::new(SQLiteDialect {}),
            Dialect::Postgresql => Box::new(PostgreSqlDialect {}),
            Dialect::Mysql => Box::new(MySqlDialect {}),
            Dialect::Sqlserver => Box::new(MsSqlDialect {}),
            Dialect::Duckdb => Box::new(DuckDbDialect {}),
            Dialect::Oracle => Box::new(OracleDialect {}),
        };
        Self {
            dialect,
            parser,
            top_allowed: dialect == Dialect::Sqlserver,
        }
    }

    pub fn parser_dialect(&self) -> &dyn ParserDialect {
        self.parser.as_ref()
    }

    pub fn parse(&self, sql: &str) -> Result<Vec<Statement>, ParseFailure> {
        let stmts = Parser::parse_sql(self.parser.as_ref(), sql).map_err(|e| {
            let msg = e.to_string();
            let (token, line, column) = match PARSER_POSITION.captures(&msg) {
                Some(c) => (
                    c[1].to_string(),
                    c[2].parse().unwrap_or(1),
                    c[3].parse().unwrap_or(1),
                ),
                None => ("EOF".to_string(), 1, 1),
            };
            self.syntax_failure(sql, &token, line, column, msg.contains("an SQL statement"))
        })?;
        if stmts.is_empty() {
            return Err(self.syntax_failure(sql, "EOF", 1, 1, true));
        }
        if !self.top_allowed {
            let mut top = false;
            let _ = sqlutil::visit_queries::<()>(&stmts, |q| {
                if let SetExpr::Select(s) = q.body.as_ref() {
                    top |= s.top.is_some();
                }
                std::ops::ControlFlow::Continue(())
            });
            if top {
                let (line, column) = find_word(sql, "TOP").unwrap_or((1, 1));
                return Err(self.syntax_failure(sql, "TOP", line, column, false));
            }
        }
        Ok(stmts)
    }

    fn syntax_failure(&self, sql: &str, token: &str, line: usize, column: usize, statement_level: bool) -> ParseFailure {
        let tok = token.trim_matches('"');
        let (code, message) = match self.dialect {
            Dialect::Sqlite => (None, format!("near \"{tok}\": syntax error")),
            Dialect::Postgresql => (Some("42601"), format!("ERROR: syntax error at or near \"{tok}\"")),
            Dialect::Mysql => (
                Some("1064"),
                format!(
                    "ERROR 1064 (42000): You have an error in your SQL syntax; check the manual that \
                     corresponds to your MySQL server version for the right syntax to use near '{tok}'"
                ),
            ),
            Dialect::Sqlserver => (
                Some("102"),
                format!("Msg 102, Level 15, State 1: Incorrect syntax near '{tok}'."),
            ),
            Dialect::Duckdb => (Some("Parser"), format!("Parser Error: syntax error at or near \"{tok}\"")),
            Dialect::Oracle if statement_level => (Some("ORA-00900"), "ORA-00900: invalid SQL statement".into()),
            Dialect::Oracle => (Some("ORA-00933"), "ORA-00933: SQL command not properly ended".into()),
        };
        let start = char_offset(sql, line, column);
        let len = if tok == "EOF" { 0 } else { tok.chars().count() };
        let end = (start + len).min(sql.chars().count());
        ParseFailure {
            trace: ErrorTrace {
                vendor_code: code.map(str::to_string),
                message,
                failing_segment: Some(Segment {
                    text: sql.chars().skip(start).take(end - start).collect(),
                    start,
                    end,
                }),
            },
            line,
            column,
        }
    }
}

fn char_offset(sql: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in sql.split('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(sql.chars().count());
        }
        offset += l.chars().count() + 1;
    }
    sql.chars().count()
}

fn find_word(sql: &str, word: &str) -> Option<(usize, usize)> {
    let re = Regex::new(&format!(r"(?i)\b{word}\b")).ok()?;
    let m = re.find(sql)?;
    let before = &sql[..m.start()];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().unwrap_or("").chars().count() + 1;
    Some((line, column))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn garbage_yields_positioned_syntax_error() {
        let p = GrammarProfile::for_dialect(Dialect::Postgresql);
        let f = p.parse("SELECT a FROM t WHERE").unwrap_err();
        assert_eq!(f.trace.vendor_code.as_deref(), Some("42601"));
        assert!(f.trace.message.contains("syntax error"));
    }

    #[test]
    fn oracle_rejects_non_statement() {
        let p = GrammarProfile::for_dialect(Dialect::Oracle);
        let f = p.parse("SELEC x FROM t").unwrap_err();
        assert_eq!(f.trace.vendor_code.as_deref(), Some("ORA-00900"));
        assert_eq!(f.trace.failing_segment.unwrap().text, "SELEC");
    }

    #[test]
    fn top_only_on_sqlserver() {
        let sql = "SELECT TOP 3 name FROM users";
        assert!(GrammarProfile::for_dialect(Dialect::Sqlserver).parse(sql).is_ok());
        let f = GrammarProfile::for_dialect(Dialect::Postgresql).parse(sql);
        if let Err(f) = f {
            assert_eq!(f.trace.failing_segment.unwrap().text, "TOP");
        }
    }

    #[test]
    fn multi_line_offsets() {
        assert_eq!(char_offset("ab\ncd", 2, 2), 4);
    }
}
