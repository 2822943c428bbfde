use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{Dialect, ErrorTrace};

pub const ID: &str = "⟨id⟩";
pub const LIT: &str = "⟨lit⟩";
pub const NUM: &str = "⟨num⟩";

/// Error message reduced to its shape, keyed by vendor code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ErrorSignature {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vendor_code: Option<String>,
    pub template: String,
    pub dialect: Dialect,
}

impl fmt::Display for ErrorSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.vendor_code {
            Some(code) => write!(f, "{code}: {}", self.template),
            None => f.write_str(&self.template),
        }
    }
}

static ORA: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(ORA-\d{5})\s*:?\s*").unwrap());
static MYSQL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*ERROR\s+(\d{4})\s*(?:\(\w{5}\))?\s*(?:at line \d+)?\s*:?\s*").unwrap());
static MSSQL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*Msg\s+(\d+)\s*,\s*Level\s+\d+\s*,\s*State\s+\d+\s*(?:,\s*Line\s+\d+)?\s*:?\s*").unwrap()
});
static PG_PREFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:ERROR:\s*)+").unwrap());
static DOUBLE_QUOTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""[^"]*""#).unwrap());
static BACKTICK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"`[^`]*`").unwrap());
static BRACKET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[[^\]\s]*\]").unwrap());
static SINGLE_QUOTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"'(?:[^']|'')*'").unwrap());
static BARE_OBJECT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(no such (?:column|table|function)|ambiguous column name):\s*[A-Za-z_][\w.$]*").unwrap()
});
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b\d+(?:\.\d+)?\b").unwrap());
static SPACES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());

/// Reduces an error trace to a reusable signature: vendor code split off,
/// quoted identifiers, literals and numbers replaced by placeholders.
/// Applying it to its own output changes nothing.
pub fn normalize_signature(trace: &ErrorTrace, dialect: Dialect) -> ErrorSignature {
    let mut msg = trace.message.trim().to_string();
    let mut code = None;
    for re in [&*ORA, &*MYSQL, &*MSSQL] {
        if let Some(c) = re.captures(&msg) {
            code = Some(c[1].to_string());
            msg = msg[c.get(0).unwrap().end()..].to_string();
            break;
        }
    }
    msg = PG_PREFIX.replace(&msg, "").into_owned();
    msg = DOUBLE_QUOTED.replace_all(&msg, ID).into_owned();
    msg = BACKTICK.replace_all(&msg, ID).into_owned();
    msg = BRACKET.replace_all(&msg, ID).into_owned();
    msg = SINGLE_QUOTED.replace_all(&msg, LIT).into_owned();
    msg = BARE_OBJECT.replace_all(&msg, format!("$1: {ID}")).into_owned();
    msg = NUMBER.replace_all(&msg, NUM).into_owned();
    msg = SPACES.replace_all(&msg, " ").trim().to_string();
    if msg.is_empty() {
        msg = "error".to_string();
    }
    ErrorSignature {
        vendor_code: trace.vendor_code.clone().or(code),
        template: msg,
        dialect,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm(msg: &str) -> ErrorSignature {
        normalize_signature(&ErrorTrace::new(msg), Dialect::Mysql)
    }

    #[test]
    fn literal_is_replaced() {
        let s = norm("Unknown column 'users.nme'");
        assert_eq!(s.template, "Unknown column ⟨lit⟩");
        assert_eq!(s.vendor_code, None);
    }

    #[test]
    fn oracle_code_is_split_off() {
        let s = normalize_signature(&ErrorTrace::new("ORA-00904: \"YEAR\": invalid identifier"), Dialect::Oracle);
        assert_eq!(s.vendor_code.as_deref(), Some("ORA-00904"));
        assert_eq!(s.template, "⟨id⟩: invalid identifier");
    }

    #[test]
    fn mysql_code_is_split_off() {
        let s = norm("ERROR 1241 (21000): Operand should contain 1 column(s)");
        assert_eq!(s.vendor_code.as_deref(), Some("1241"));
        assert_eq!(s.template, "Operand should contain ⟨num⟩ column(s)");
    }

    #[test]
    fn sqlserver_code_is_split_off() {
        let s = norm("Msg 8127, Level 16, State 1: Column \"m.revenue\" is invalid in the ORDER BY clause");
        assert_eq!(s.vendor_code.as_deref(), Some("8127"));
        assert_eq!(s.template, "Column ⟨id⟩ is invalid in the ORDER BY clause");
    }

    #[test]
    fn sqlite_bare_identifiers_are_replaced() {
        assert_eq!(norm("no such column: u.nme").template, "no such column: ⟨id⟩");
    }

    #[test]
    fn trace_code_wins() {
        let mut t = ErrorTrace::new("ERROR: column \"english\" does not exist");
        t.vendor_code = Some("42703".into());
        let s = normalize_signature(&t, Dialect::Postgresql);
        assert_eq!(s.vendor_code.as_deref(), Some("42703"));
        assert_eq!(s.template, "column ⟨id⟩ does not exist");
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(msg in r#"[A-Za-z0-9 '"`:.,()_-]{1,60}"#) {
            let once = norm(&msg);
            let twice = normalize_signature(&ErrorTrace::new(once.template.clone()), Dialect::Mysql);
            prop_assert_eq!(&once.template, &twice.template);
        }
    }
}
