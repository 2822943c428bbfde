//! Ingestion of generic ANSI `CREATE TABLE` statements.
//!
//! Only names and physical types are kept; constraints are skipped. Types are
//! preserved as written in the source text.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;

use super::{ColumnDef, ModelError, SchemaCatalog, TableDef, MAX_SAMPLES};

/// Sample values keyed by `"table.column"` (case-insensitive).
pub type SampleMap = BTreeMap<String, Vec<String>>;

static CREATE_TABLE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?is)\bcreate\s+(?:(?:global\s+|local\s+)?temp(?:orary)?\s+)?table\s+(?:if\s+not\s+exists\s+)?",
    )
    .unwrap()
});

const TABLE_CONSTRAINT_LEADS: &[&str] = &[
    "constraint", "primary", "foreign", "unique", "check", "key", "index", "exclude",
];

const COLUMN_CONSTRAINT_WORDS: &[&str] = &[
    "not", "null", "primary", "default", "unique", "references", "check", "constraint",
    "collate", "auto_increment", "autoincrement", "identity", "generated", "comment", "on",
];

pub fn parse_schema_ddl(ddl: &str, samples: Option<&SampleMap>) -> Result<SchemaCatalog, ModelError> {
    let text = strip_comments(ddl);
    let mut tables: Vec<TableDef> = Vec::new();
    let mut seen = BTreeSet::new();

    for m in CREATE_TABLE.find_iter(&text) {
        let rest = &text[m.end()..];
        let (name, after_name) = read_identifier(rest)
            .ok_or_else(|| ModelError::Parse(format!("missing table name at byte {}", m.end())))?;
        let after_name = after_name.trim_start();
        if !after_name.starts_with('(') {
            return Err(ModelError::Parse(format!("expected '(' after table {name}")));
        }
        let body = balanced_body(after_name)
            .ok_or_else(|| ModelError::Parse(format!("unbalanced parentheses in table {name}")))?;
        if !seen.insert(name.to_ascii_lowercase()) {
            return Err(ModelError::DuplicateObject(format!("table {name}")));
        }
        let columns = parse_columns(&name, body)?;
        if columns.is_empty() {
            return Err(ModelError::Parse(format!("table {name} declares no columns")));
        }
        tables.push(TableDef { name, columns });
    }

    if tables.is_empty() {
        return Err(ModelError::Parse("no CREATE TABLE statement found".into()));
    }

    let mut catalog = SchemaCatalog { tables };
    if let Some(samples) = samples {
        attach_samples(&mut catalog, samples)?;
    }
    Ok(catalog)
}

fn attach_samples(catalog: &mut SchemaCatalog, samples: &SampleMap) -> Result<(), ModelError> {
    for (key, values) in samples {
        let (table, column) = key
            .split_once('.')
            .ok_or_else(|| ModelError::UnknownSampleColumn(key.clone()))?;
        let col = catalog
            .tables
            .iter_mut()
            .find(|t| t.name.eq_ignore_ascii_case(table))
            .and_then(|t| t.columns.iter_mut().find(|c| c.name.eq_ignore_ascii_case(column)))
            .ok_or_else(|| ModelError::UnknownSampleColumn(key.clone()))?;
        col.samples = values.iter().take(MAX_SAMPLES).cloned().collect();
    }
    Ok(())
}

fn parse_columns(table: &str, body: &str) -> Result<Vec<ColumnDef>, ModelError> {
    let mut columns: Vec<ColumnDef> = Vec::new();
    for item in split_top_level(body) {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let first_word = item
            .split(|c: char| c.is_whitespace() || c == '(')
            .next()
            .unwrap_or("")
            .to_ascii_lowercase();
        if TABLE_CONSTRAINT_LEADS.contains(&first_word.as_str()) {
            continue;
        }
        let (name, rest) = read_identifier(item)
            .ok_or_else(|| ModelError::Parse(format!("bad column definition in {table}: {item}")))?;
        let physical_type = column_type(rest);
        if physical_type.is_empty() {
            return Err(ModelError::Parse(format!("column {table}.{name} has no type")));
        }
        if columns.iter().any(|c| c.name.eq_ignore_ascii_case(&name)) {
            return Err(ModelError::DuplicateObject(format!("column {table}.{name}")));
        }
        columns.push(ColumnDef {
            name,
            physical_type,
            samples: Vec::new(),
        });
    }
    Ok(columns)
}

/// Type text up to the first column-constraint keyword outside parentheses.
fn column_type(rest: &str) -> String {
    let rest = rest.trim();
    let mut depth = 0usize;
    let mut cut = rest.len();
    let mut word_start: Option<usize> = None;
    let bytes: Vec<(usize, char)> = rest.char_indices().collect();
    for (i, &(pos, ch)) in bytes.iter().enumerate() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            _ => {}
        }
        let is_word = ch.is_alphanumeric() || ch == '_';
        if is_word && word_start.is_none() {
            word_start = Some(pos);
        }
        let next_is_word = bytes
            .get(i + 1)
            .map(|&(_, c)| c.is_alphanumeric() || c == '_')
            .unwrap_or(false);
        if is_word && !next_is_word {
            let start = word_start.take().unwrap();
            let word = rest[start..pos + ch.len_utf8()].to_ascii_lowercase();
            if depth == 0 && start > 0 && COLUMN_CONSTRAINT_WORDS.contains(&word.as_str()) {
                cut = start;
                break;
            }
            if depth == 0 && start == 0 && COLUMN_CONSTRAINT_WORDS.contains(&word.as_str()) {
                cut = 0;
                break;
            }
        }
    }
    rest[..cut].trim().to_string()
}

/// Reads a possibly quoted, possibly schema-qualified identifier; returns the
/// last name part and the remaining text.
fn read_identifier(s: &str) -> Option<(String, &str)> {
    let mut rest = s.trim_start();
    let mut name;
    loop {
        let (part, after) = read_name_part(rest)?;
        name = part;
        if let Some(stripped) = after.strip_prefix('.') {
            rest = stripped;
            continue;
        }
        return Some((name, after));
    }
}

fn read_name_part(s: &str) -> Option<(String, &str)> {
    let mut chars = s.chars();
    let first = chars.next()?;
    let close = match first {
        '"' => Some('"'),
        '`' => Some('`'),
        '[' => Some(']'),
        _ => None,
    };
    if let Some(close) = close {
        let inner = &s[1..];
        let end = inner.find(close)?;
        let name = &inner[..end];
        if name.is_empty() {
            return None;
        }
        return Some((name.to_string(), &inner[end + 1..]));
    }
    let end = s
        .char_indices()
        .find(|(_, c)| !(c.is_alphanumeric() || *c == '_' || *c == '$'))
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    if end == 0 {
        return None;
    }
    Some((s[..end].to_string(), &s[end..]))
}

/// Contents between the leading '(' and its matching ')'.
fn balanced_body(s: &str) -> Option<&str> {
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    for (i, ch) in s.char_indices() {
        if let Some(q) = quote {
            if ch == q {
                quote = None;
            }
            continue;
        }
        match ch {
            '\'' | '"' | '`' => quote = Some(ch),
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&s[1..i]);
                }
            }
            _ => {}
        }
    }
    None
}

fn split_top_level(body: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut start = 0;
    for (i, ch) in body.char_indices() {
        if let Some(q) = quote {
            if ch == q {
                quote = None;
            }
            continue;
        }
        match ch {
            '\'' | '"' | '`' => quote = Some(ch),
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(&body[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&body[start..]);
    parts
}

fn strip_comments(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars().peekable();
    let mut quote: Option<char> = None;
    while let Some(ch) = chars.next() {
        if let Some(q) = quote {
            out.push(ch);
            if ch == q {
                quote = None;
            }
            continue;
        }
        match ch {
            '\'' | '"' | '`' => {
                quote = Some(ch);
                out.push(ch);
            }
            '-' if chars.peek() == Some(&'-') => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        out.push('\n');
                        break;
                    }
                }
            }
            '/' if chars.peek() == Some(&'*') => {
                chars.next();
                let mut prev = '\0';
                for c in chars.by_ref() {
                    if prev == '*' && c == '/' {
                        break;
                    }
                    prev = c;
                }
                out.push(' ');
            }
            _ => out.push(ch),
        }
    }
    out
}
