use serde::{Deserialize, Serialize};

use super::implicit::base_type;
use super::{LogicalPlan, MacroOperator, MacroOperatorKind};
use crate::model::SchemaCatalog;

/// Read-only inputs of the sensitivity cascade.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelConfig {
    pub lexicon: Vec<String>,
    pub sensitive_types: Vec<String>,
    /// Words marking a sorting, limiting or pagination facet on an
    /// organization step.
    pub org_facets: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            lexicon: strings(&[
                "extract", "regex", "cast", "convert", "format", "concatenate", "truncate", "substring", "pivot",
                "window", "rank", "percentile", "json", "split", "pad", "interval", "timezone",
            ]),
            sensitive_types: strings(&[
                "TIMESTAMP", "DATETIME", "DATE", "TIME", "JSON", "JSONB", "ARRAY", "BLOB", "INTERVAL", "UUID",
            ]),
            org_facets: strings(&[
                "sort", "ascending", "descending", "top", "first", "limit", "paginat", "page", "offset", "highest",
                "lowest", "largest", "smallest", "only",
            ]),
        }
    }
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric() && c != '_')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Some word of `text` starts with one of `prefixes`.
fn mentions(text: &str, prefixes: &[String]) -> bool {
    words(text).any(|w| prefixes.iter().any(|p| !p.is_empty() && w.starts_with(&p.to_lowercase())))
}

/// Calculations always diverge; organization steps diverge when they sort,
/// cap or paginate.
pub fn category_check(op: &MacroOperator, config: &LabelConfig) -> bool {
    match op.kind {
        MacroOperatorKind::Cal => true,
        MacroOperatorKind::Org => mentions(&op.description, &config.org_facets),
        _ => false,
    }
}

pub fn lexicon_check(op: &MacroOperator, config: &LabelConfig) -> bool {
    mentions(&op.description, &config.lexicon)
}

pub fn type_check(op: &MacroOperator, schema: &SchemaCatalog, config: &LabelConfig) -> bool {
    op.refs.iter().any(|r| {
        let ty = schema
            .column(&r.table, &r.column)
            .map(|c| c.physical_type.as_str())
            .unwrap_or(&r.physical_type);
        let base = base_type(ty);
        config.sensitive_types.iter().any(|t| t.eq_ignore_ascii_case(&base))
    })
}

/// Sets `sensitive` on every operator from the three checks. Pure and
/// LLM-free.
pub fn label_operators(plan: &LogicalPlan, schema: &SchemaCatalog, config: &LabelConfig) -> LogicalPlan {
    let mut out = plan.clone();
    for op in &mut out.operators {
        op.sensitive =
            category_check(op, config) || lexicon_check(op, config) || type_check(op, schema, config);
    }
    out
}
