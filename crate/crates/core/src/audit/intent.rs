use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::trace::{canonical_date, canonical_number, JoinKey, Stage};
use crate::model::SchemaCatalog;
use crate::planner::{ColumnRef, DialectAwarePlan, MacroOperator, MacroOperatorKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterIntent {
    pub step: usize,
    pub column: Option<String>,
    pub comparator: Option<String>,
    pub value: Option<String>,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateIntent {
    pub step: usize,
    pub function: String,
    pub argument: Option<String>,
    pub distinct: bool,
}

/// Structured reading of a plan's operator descriptions and references.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanIntent {
    pub tables: BTreeSet<String>,
    pub joins: BTreeSet<JoinKey>,
    pub filters: Vec<FilterIntent>,
    pub aggregates: Vec<AggregateIntent>,
    pub group_dims: BTreeSet<String>,
    pub calculated: BTreeSet<String>,
    pub outputs: Vec<String>,
    pub aliases: Vec<String>,
}

pub(crate) fn ref_key(r: &ColumnRef) -> String {
    format!("{}.{}", r.table.to_lowercase(), r.column.to_lowercase())
}

static QUOTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"'([^']*)'|"([^"]*)""#).unwrap());
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^|[\s(=<>])(-?\d+(?:\.\d+)?)\b").unwrap());
static YEAR_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\byear\b").unwrap());
static YEAR_VALUE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(1[89]\d\d|2\d{3})\b").unwrap());
static ALIAS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:aliased as|named|labell?ed|called)\s+[`'\x22]?([A-Za-z_][A-Za-z0-9_]*)").unwrap()
});

/// Comparator phrases, most specific first.
const COMPARATORS: &[(&str, &[&str])] = &[
    ("<>", &["not equal", "is not", "other than", "differs from", "different from"]),
    (">=", &["at least", "greater than or equal", "no less than", "on or after"]),
    ("<=", &["at most", "less than or equal", "no more than", "on or before"]),
    (">", &["greater than", "more than", "exceeds", "exceed", "above", "over", "after", "later than"]),
    ("<", &["less than", "fewer than", "below", "under", "before", "earlier than"]),
    ("like", &["contains", "containing", "starts with", "ends with", "matches the pattern"]),
    ("is null", &["is missing", "is null", "is empty", "has no value"]),
];

fn has_phrase(text: &str, phrase: &str) -> bool {
    Regex::new(&format!(r"\b{}\b", regex::escape(phrase))).unwrap().is_match(text)
}

fn filter_intent(op: &MacroOperator, stage: Stage) -> FilterIntent {
    let text = op.description.to_lowercase();
    let column = op.refs.first().map(ref_key);
    let date_ref = op.refs.first().is_some_and(|r| {
        let t = r.physical_type.to_uppercase();
        t.contains("DATE") || t.contains("TIME")
    });
    if YEAR_WORD.is_match(&text) || date_ref {
        if let Some(y) = YEAR_VALUE.captures(&op.description) {
            if QUOTED.captures(&op.description).is_none_or(|q| q.get(0).unwrap().as_str().contains(&y[1])) {
                return FilterIntent {
                    step: op.order_index,
                    column,
                    comparator: Some("year=".into()),
                    value: Some(y[1].to_string()),
                    stage,
                };
            }
        }
    }
    let value = QUOTED
        .captures(&op.description)
        .map(|c| canonical_date(c.get(1).or(c.get(2)).unwrap().as_str()))
        .or_else(|| NUMBER.captures(&op.description).map(|c| canonical_number(&c[1])));
    let mut comparator = COMPARATORS
        .iter()
        .find(|(_, phrases)| phrases.iter().any(|p| has_phrase(&text, p)))
        .map(|(c, _)| c.to_string());
    if comparator.is_none() && value.is_some() {
        comparator = Some("=".into());
    }
    FilterIntent {
        step: op.order_index,
        column,
        comparator,
        value,
        stage,
    }
}

/// Aggregate function words, checked in order at each position.
const AGG_WORDS: &[(&str, &str, bool)] = &[
    ("number of distinct", "COUNT", true),
    ("count distinct", "COUNT", true),
    ("count the distinct", "COUNT", true),
    ("number of unique", "COUNT", true),
    ("number of", "COUNT", false),
    ("count", "COUNT", false),
    ("how many", "COUNT", false),
    ("average", "AVG", false),
    ("mean", "AVG", false),
    ("sum", "SUM", false),
    ("total", "SUM", false),
    ("add up", "SUM", false),
    ("maximum", "MAX", false),
    ("highest", "MAX", false),
    ("largest", "MAX", false),
    ("latest", "MAX", false),
    ("minimum", "MIN", false),
    ("lowest", "MIN", false),
    ("smallest", "MIN", false),
    ("earliest", "MIN", false),
    ("concatenate", "STRING_AGG", false),
    ("concatenated", "STRING_AGG", false),
    ("comma-separated list", "STRING_AGG", false),
];
const DIM_WORDS: &[&str] = &["per", "by", "for each", "for every", "of each", "grouped by"];

fn mention(text: &str, r: &ColumnRef) -> Option<(usize, usize)> {
    let full = ref_key(r);
    text.find(&full).map(|p| (p, p + full.len())).or_else(|| {
        Regex::new(&format!(r"\b{}\b", regex::escape(&r.column.to_lowercase())))
            .ok()?
            .find(text)
            .map(|m| (m.start(), m.end()))
    })
}

fn word_positions(text: &str, word: &str) -> Vec<usize> {
    Regex::new(&format!(r"\b{}\b", regex::escape(word)))
        .unwrap()
        .find_iter(text)
        .map(|m| m.start())
        .collect()
}

/// Function words bind to the next mentioned column; columns after a
/// grouping word are dimensions.
fn aggregate_intents(op: &MacroOperator) -> (Vec<AggregateIntent>, Vec<String>) {
    let text = op.description.to_lowercase();
    let mut events: Vec<(usize, usize, Event)> = Vec::new();
    let mut unmentioned = Vec::new();
    // Column mentions are reserved first so `orders.total` is not a function word.
    let mut taken: Vec<(usize, usize)> = Vec::new();
    for (i, r) in op.refs.iter().enumerate() {
        match mention(&text, r) {
            Some(span) => {
                events.push((span.0, 2, Event::Col(i)));
                taken.push(span);
            }
            None => unmentioned.push(i),
        }
    }
    for (word, func, distinct) in AGG_WORDS {
        for p in word_positions(&text, word) {
            let span = (p, p + word.len());
            if taken.iter().any(|(a, b)| span.0 < *b && *a < span.1) {
                continue;
            }
            taken.push(span);
            events.push((p, 0, Event::Func(func, *distinct)));
        }
    }
    for w in DIM_WORDS {
        for p in word_positions(&text, w) {
            if !taken.iter().any(|(a, b)| p < *b && *a < p + w.len()) {
                events.push((p, 1, Event::Dim));
            }
        }
    }
    events.sort_by_key(|(p, order, _)| (*p, *order));
    let mut aggs: Vec<AggregateIntent> = Vec::new();
    let mut dims: Vec<String> = Vec::new();
    let mut dim_mode = false;
    let mut open: Option<usize> = None;
    for (_, _, ev) in events {
        match ev {
            Event::Func(f, distinct) => {
                aggs.push(AggregateIntent {
                    step: op.order_index,
                    function: f.to_string(),
                    argument: None,
                    distinct,
                });
                open = Some(aggs.len() - 1);
                dim_mode = false;
            }
            Event::Dim => dim_mode = true,
            Event::Col(i) => {
                let key = ref_key(&op.refs[i]);
                match open.take() {
                    Some(a) if !dim_mode => aggs[a].argument = Some(key),
                    other => {
                        open = other;
                        dims.push(key);
                    }
                }
            }
        }
    }
    for i in unmentioned {
        let key = ref_key(&op.refs[i]);
        match aggs.iter_mut().find(|a| a.argument.is_none() && a.function != "COUNT") {
            Some(a) => a.argument = Some(key),
            None => dims.push(key),
        }
    }
    for a in &mut aggs {
        if a.function == "COUNT" && a.argument.is_none() {
            a.argument = Some("*".into());
        }
    }
    (aggs, dims)
}

enum Event {
    Func(&'static str, bool),
    Dim,
    Col(usize),
}

/// Reads the plan's intent. Source references pair up as join keys; source
/// tables also come from schema table names in source descriptions.
pub fn extract_intent(plan: &DialectAwarePlan, schema: Option<&SchemaCatalog>) -> PlanIntent {
    let mut intent = PlanIntent::default();
    let mut seen_agg = false;
    for op in &plan.base.operators {
        match op.kind {
            MacroOperatorKind::Src => {
                for r in &op.refs {
                    intent.tables.insert(r.table.to_lowercase());
                }
                for pair in op.refs.chunks(2) {
                    if let [a, b] = pair {
                        if !a.table.eq_ignore_ascii_case(&b.table) {
                            intent.joins.insert(JoinKey::new(ref_key(a), ref_key(b)));
                        }
                    }
                }
                if let Some(s) = schema {
                    let text = op.description.to_lowercase();
                    for t in &s.tables {
                        if has_phrase(&text, &t.name.to_lowercase()) {
                            intent.tables.insert(t.name.to_lowercase());
                        }
                    }
                }
            }
            MacroOperatorKind::Flt => {
                let stage = if seen_agg { Stage::PostAggregation } else { Stage::Row };
                intent.filters.push(filter_intent(op, stage));
            }
            MacroOperatorKind::Agg => {
                seen_agg = true;
                let (aggs, dims) = aggregate_intents(op);
                intent.aggregates.extend(aggs);
                intent.group_dims.extend(dims);
            }
            MacroOperatorKind::Cal => intent.calculated.extend(op.refs.iter().map(ref_key)),
            MacroOperatorKind::Org => {
                for r in &op.refs {
                    let k = ref_key(r);
                    if !intent.outputs.contains(&k) {
                        intent.outputs.push(k);
                    }
                }
                intent
                    .aliases
                    .extend(ALIAS.captures_iter(&op.description).map(|c| c[1].to_lowercase()));
            }
            MacroOperatorKind::Aux => {}
        }
    }
    intent
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dialect;
    use crate::planner::LogicalPlan;

    fn r(t: &str, c: &str, ty: &str) -> ColumnRef {
        ColumnRef {
            table: t.into(),
            column: c.into(),
            physical_type: ty.into(),
        }
    }

    #[test]
    fn reads_the_running_example() {
        let plan = DialectAwarePlan::plain(
            LogicalPlan::new(vec![
                MacroOperator::new(
                    MacroOperatorKind::Src,
                    "link transactions to their logs and users",
                    vec![
                        r("transactions", "tx_id", "BIGINT"),
                        r("transaction_logs", "tx_id", "BIGINT"),
                        r("transactions", "user_id", "BIGINT"),
                        r("users", "user_id", "BIGINT"),
                    ],
                ),
                MacroOperator::new(
                    MacroOperatorKind::Flt,
                    "keep records whose transaction_logs.action is 'viewed'",
                    vec![r("transaction_logs", "action", "TEXT")],
                ),
                MacroOperator::new(
                    MacroOperatorKind::Agg,
                    "sum transactions.amount per users.username",
                    vec![r("transactions", "amount", "TEXT"), r("users", "username", "TEXT")],
                ),
                MacroOperator::new(
                    MacroOperatorKind::Org,
                    "show users.username and the total aliased as total_amount",
                    vec![r("users", "username", "TEXT"), r("transactions", "amount", "TEXT")],
                ),
            ]),
            Dialect::Mysql,
        );
        let i = extract_intent(&plan, None);
        assert_eq!(i.joins.len(), 2);
        assert_eq!(i.tables.len(), 3);
        assert_eq!(i.filters[0].comparator.as_deref(), Some("="));
        assert_eq!(i.filters[0].value.as_deref(), Some("viewed"));
        assert_eq!(i.aggregates[0].function, "SUM");
        assert_eq!(i.aggregates[0].argument.as_deref(), Some("transactions.amount"));
        assert_eq!(i.group_dims.iter().collect::<Vec<_>>(), ["users.username"]);
        assert_eq!(i.aliases, ["total_amount"]);
    }

    #[test]
    fn comparators_and_years() {
        let f = |d: &str, ty: &str| {
            let op = MacroOperator::new(MacroOperatorKind::Flt, d, vec![r("t", "c", ty)]);
            let i = filter_intent(&op, Stage::Row);
            (i.comparator.unwrap_or_default(), i.value.unwrap_or_default())
        };
        assert_eq!(f("keep rows whose t.c is greater than 100", "INT"), (">".into(), "100".into()));
        assert_eq!(f("keep rows whose t.c is at least 5", "INT"), (">=".into(), "5".into()));
        assert_eq!(f("keep rows whose t.c is not 'x'", "TEXT"), ("<>".into(), "x".into()));
        assert_eq!(f("keep rows created in the year 2017", "TIMESTAMP"), ("year=".into(), "2017".into()));
        assert_eq!(f("keep rows dated in 2017", "DATE"), ("year=".into(), "2017".into()));
    }

    #[test]
    fn function_word_inside_column_name() {
        let op = MacroOperator::new(
            MacroOperatorKind::Agg,
            "sum invoices.total per clients.segment",
            vec![r("invoices", "total", "INT"), r("clients", "segment", "TEXT")],
        );
        let (aggs, dims) = aggregate_intents(&op);
        assert_eq!(aggs.len(), 1);
        assert_eq!(aggs[0].argument.as_deref(), Some("invoices.total"));
        assert_eq!(dims, ["clients.segment"]);
    }

    #[test]
    fn count_distinct_and_dims() {
        let op = MacroOperator::new(
            MacroOperatorKind::Agg,
            "number of distinct orders.customer_id for each orders.region",
            vec![r("orders", "customer_id", "INT"), r("orders", "region", "TEXT")],
        );
        let (aggs, dims) = aggregate_intents(&op);
        assert_eq!(aggs.len(), 1);
        assert!(aggs[0].distinct);
        assert_eq!(aggs[0].argument.as_deref(), Some("orders.customer_id"));
        assert_eq!(dims, ["orders.region"]);
    }
}
