use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use sqlparser::ast::{
    visit_expressions, BinaryOperator, DuplicateTreatment, Expr, FunctionArguments, GroupByExpr,
    LimitClause, Query, SetExpr, Statement, TableFactor, Value,
};

use super::locate::find_segment;
use super::ExecError;
use crate::model::{Dialect, SchemaCatalog, Segment};
use crate::sqlutil::{self, columns_outside_aggregates, expr_key, func_arg_count, func_name};

const BUILTIN_RULES: &str = include_str!("rules.jsonl");

/// A message or code given once or per dialect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerDialect {
    One(String),
    Each(BTreeMap<Dialect, String>),
}

impl PerDialect {
    pub fn get(&self, d: Dialect) -> Option<&str> {
        match self {
            PerDialect::One(s) => Some(s),
            PerDialect::Each(m) => m.get(&d).map(String::as_str),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleStage {
    /// Rejected while parsing, before other rules.
    Parse,
    #[default]
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleExample {
    pub anti: String,
    pub gold: String,
}

/// Parameterized predicate over parsed SQL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Detector {
    ForbiddenFunction { names: Vec<String> },
    FunctionArity { name: String, max: usize },
    CastTarget { types: Vec<String> },
    Placeholder,
    TableAliasAs,
    SelectWithoutFrom,
    DerivedTableAlias,
    DistinctInWindow,
    NestedAggregate,
    GroupOrderBy,
    ScalarSubqueryRows,
    ScalarSubqueryColumns,
    LimitClause,
    DistinctOrderBy,
    DoubleQuotedLiteral,
}

fn string_list(args: &Json, key: &str) -> Result<Vec<String>, String> {
    args.get(key)
        .and_then(Json::as_array)
        .ok_or_else(|| format!("detector_args.{key} must be a list"))?
        .iter()
        .map(|v| {
            v.as_str()
                .map(str::to_ascii_uppercase)
                .ok_or_else(|| format!("detector_args.{key} must hold strings"))
        })
        .collect()
}

impl Detector {
    pub fn from_kind(kind: &str, args: &Json) -> Result<Self, String> {
        Ok(match kind {
            "forbidden_function" => Detector::ForbiddenFunction {
                names: string_list(args, "names")?,
            },
            "function_arity" => Detector::FunctionArity {
                name: args
                    .get("name")
                    .and_then(Json::as_str)
                    .ok_or("detector_args.name missing")?
                    .to_ascii_uppercase(),
                max: args
                    .get("max")
                    .and_then(Json::as_u64)
                    .ok_or("detector_args.max missing")? as usize,
            },
            "cast_target" => Detector::CastTarget {
                types: string_list(args, "types")?,
            },
            "placeholder" => Detector::Placeholder,
            "table_alias_as" => Detector::TableAliasAs,
            "select_without_from" => Detector::SelectWithoutFrom,
            "derived_table_alias" => Detector::DerivedTableAlias,
            "distinct_in_window" => Detector::DistinctInWindow,
            "nested_aggregate" => Detector::NestedAggregate,
            "group_order_by" => Detector::GroupOrderBy,
            "scalar_subquery_rows" => Detector::ScalarSubqueryRows,
            "scalar_subquery_columns" => Detector::ScalarSubqueryColumns,
            "limit_clause" => Detector::LimitClause,
            "distinct_order_by" => Detector::DistinctOrderBy,
            "double_quoted_literal" => Detector::DoubleQuotedLiteral,
            other => return Err(format!("unknown detector_kind '{other}'")),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleRecord {
    rule_id: String,
    dialects: BTreeSet<Dialect>,
    detector_kind: String,
    #[serde(default)]
    detector_args: Json,
    message_template: PerDialect,
    #[serde(default)]
    vendor_code: Option<PerDialect>,
    gold_hint: String,
    #[serde(default)]
    stage: RuleStage,
    #[serde(default)]
    example: Option<RuleExample>,
}

/// One catalog entry: where it applies, what it detects, how the engine
/// reports it and what the compliant form looks like.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialectRule {
    pub rule_id: String,
    pub dialects: BTreeSet<Dialect>,
    pub stage: RuleStage,
    pub detector_kind: String,
    pub detector: Detector,
    pub message_template: PerDialect,
    pub vendor_code: Option<PerDialect>,
    pub gold_hint: String,
    pub example: Option<RuleExample>,
}

/// What a detector found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hit {
    pub name: String,
    pub segment: Option<Segment>,
}

pub struct DetectCtx<'a> {
    pub sql: &'a str,
    pub stmts: &'a [Statement],
    pub schema: Option<&'a SchemaCatalog>,
}

impl DialectRule {
    pub fn applies_to(&self, d: Dialect) -> bool {
        self.dialects.contains(&d)
    }

    pub fn message(&self, d: Dialect, hit: &Hit) -> String {
        let seg = hit.segment.as_ref().map(|s| s.text.as_str()).unwrap_or("");
        self.message_template
            .get(d)
            .unwrap_or("error")
            .replace("{name}", &hit.name)
            .replace("{segment}", seg)
    }

    pub fn code(&self, d: Dialect) -> Option<String> {
        self.vendor_code.as_ref().and_then(|c| c.get(d)).map(str::to_string)
    }

    pub fn detect(&self, ctx: &DetectCtx) -> Option<Hit> {
        detect(&self.detector, ctx)
    }
}

/// The ordered rule catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleCatalog {
    rules: Vec<DialectRule>,
}

impl RuleCatalog {
    pub fn builtin() -> Self {
        Self::from_jsonl(BUILTIN_RULES).expect("builtin rule catalog is valid")
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ExecError> {
        let mut rules = Vec::new();
        let mut ids = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| ExecError::Catalog { line: i + 1, message };
            let rec: RuleRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            let detector = Detector::from_kind(&rec.detector_kind, &rec.detector_args).map_err(err)?;
            if !ids.insert(rec.rule_id.clone()) {
                return Err(err(format!("duplicate rule_id {}", rec.rule_id)));
            }
            rules.push(DialectRule {
                rule_id: rec.rule_id,
                dialects: rec.dialects,
                stage: rec.stage,
                detector_kind: rec.detector_kind,
                detector,
                message_template: rec.message_template,
                vendor_code: rec.vendor_code,
                gold_hint: rec.gold_hint,
                example: rec.example,
            });
        }
        rules.sort_by(|a, b| (a.stage, &a.rule_id).cmp(&(b.stage, &b.rule_id)));
        Ok(Self { rules })
    }

    /// Rules in evaluation order: parse stage first, then by rule id.
    pub fn rules(&self) -> &[DialectRule] {
        &self.rules
    }

    pub fn get(&self, rule_id: &str) -> Option<&DialectRule> {
        self.rules.iter().find(|r| r.rule_id == rule_id)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

fn all_exprs(stmts: &[Statement], mut f: impl FnMut(&Expr) -> Option<Hit>) -> Option<Hit> {
    for s in stmts {
        if let ControlFlow::Break(hit) = visit_expressions(s, |e| match f(e) {
            Some(hit) => ControlFlow::Break(hit),
            None => ControlFlow::Continue(()),
        }) {
            return Some(hit);
        }
    }
    None
}

fn all_queries(stmts: &[Statement], mut f: impl FnMut(&Query) -> Option<Hit>) -> Option<Hit> {
    match sqlutil::visit_queries(stmts, |q| match f(q) {
        Some(hit) => ControlFlow::Break(hit),
        None => ControlFlow::Continue(()),
    }) {
        ControlFlow::Break(hit) => Some(hit),
        ControlFlow::Continue(()) => None,
    }
}

fn call_segment(sql: &str, name: &str) -> Option<Segment> {
    find_segment(sql, &format!(r"\b{}\s*\(", regex::escape(name)), true, |_| true)
}

fn is_comparison(op: &BinaryOperator) -> bool {
    matches!(
        op,
        BinaryOperator::Eq
            | BinaryOperator::NotEq
            | BinaryOperator::Lt
            | BinaryOperator::LtEq
            | BinaryOperator::Gt
            | BinaryOperator::GtEq
    )
}

fn is_column_ref(e: &Expr) -> bool {
    match e {
        Expr::Identifier(i) => i.quote_style.is_none(),
        Expr::CompoundIdentifier(_) => true,
        _ => false,
    }
}

fn row_limited(q: &Query) -> bool {
    let limit = match &q.limit_clause {
        Some(LimitClause::LimitOffset { limit, .. }) => limit.is_some(),
        Some(LimitClause::OffsetCommaLimit { .. }) => true,
        None => false,
    };
    let top = matches!(q.body.as_ref(), SetExpr::Select(s) if s.top.is_some());
    limit || top || q.fetch.is_some()
}

fn group_by_exprs(s: &sqlparser::ast::Select) -> &[Expr] {
    match &s.group_by {
        GroupByExpr::Expressions(v, _) => v,
        GroupByExpr::All(_) => &[],
    }
}

fn last_part(e: &Expr) -> Option<String> {
    match e {
        Expr::Identifier(i) => Some(i.value.to_ascii_lowercase()),
        Expr::CompoundIdentifier(parts) => parts.last().map(|i| i.value.to_ascii_lowercase()),
        _ => None,
    }
}

fn ordered_after(sql: &str, needle: &str) -> Option<Segment> {
    find_segment(
        sql,
        &format!(r"\bORDER\s+BY\b[\s\S]*?({})", regex::escape(needle)),
        false,
        |_| true,
    )
}

fn scalar_subquery_segment(sql: &str) -> Option<Segment> {
    find_segment(
        sql,
        r"(?:=|<>|!=|<=|>=|<|>|\bIN)\s*(\(\s*SELECT\b)",
        true,
        |_| true,
    )
}

/// Subqueries used as scalar operands of comparisons.
fn scalar_operands(e: &Expr) -> Vec<&Query> {
    match e {
        Expr::BinaryOp { left, op, right } if is_comparison(op) => [left, right]
            .into_iter()
            .filter_map(|side| match side.as_ref() {
                Expr::Subquery(q) => Some(q.as_ref()),
                _ => None,
            })
            .collect(),
        _ => Vec::new(),
    }
}

fn detect(detector: &Detector, ctx: &DetectCtx) -> Option<Hit> {
    let sql = ctx.sql;
    match detector {
        Detector::ForbiddenFunction { names } => all_exprs(ctx.stmts, |e| match e {
            Expr::Function(f) if names.contains(&func_name(f)) => {
                let name = func_name(f);
                Some(Hit {
                    segment: call_segment(sql, &name),
                    name,
                })
            }
            _ => None,
        }),
        Detector::FunctionArity { name, max } => all_exprs(ctx.stmts, |e| match e {
            Expr::Function(f) if &func_name(f) == name && func_arg_count(f) > *max => Some(Hit {
                name: name.clone(),
                segment: call_segment(sql, name),
            }),
            _ => None,
        }),
        Detector::CastTarget { types } => all_exprs(ctx.stmts, |e| {
            let target = match e {
                Expr::Cast { data_type, .. } => data_type.to_string().to_ascii_uppercase(),
                Expr::Convert {
                    data_type: Some(data_type),
                    ..
                } => data_type.to_string().to_ascii_uppercase(),
                _ => return None,
            };
            let ty = types.iter().find(|t| target == **t || target.starts_with(&format!("{t}(")))?;
            let pattern = format!(r"\bAS\s+{}\b", regex::escape(ty));
            let re = regex::RegexBuilder::new(&pattern).case_insensitive(true).build().ok()?;
            let segment = find_segment(sql, r"\bCAST\s*\(", true, |t| re.is_match(t))
                .or_else(|| find_segment(sql, r"\bCONVERT\s*\(", true, |t| t.to_uppercase().contains(ty.as_str())));
            // The engine quotes the text from the offending type onward.
            let near = segment.as_ref().and_then(|s| {
                let m = re.find(&s.text)?;
                let from = s.text[..m.start()].chars().count() + 3;
                let tail: String = sql.chars().skip(s.start + from).collect();
                Some(tail.trim_start().to_string())
            });
            Some(Hit {
                name: ty.clone(),
                segment: segment.map(|s| Segment {
                    text: near.unwrap_or(s.text),
                    ..s
                }),
            })
        }),
        Detector::Placeholder => all_exprs(ctx.stmts, |e| match e {
            Expr::Value(v) => match &v.value {
                Value::Placeholder(p) => Some(Hit {
                    name: p.trim_start_matches([':', '$', '@']).to_string(),
                    segment: find_segment(sql, &regex::escape(p), false, |_| true),
                }),
                _ => None,
            },
            _ => None,
        }),
        Detector::TableAliasAs => {
            let mut hit = None;
            let _ = sqlutil::visit_table_factors(ctx.stmts, |t| {
                let alias = match t {
                    TableFactor::Table { alias: Some(a), .. } | TableFactor::Derived { alias: Some(a), .. } => a,
                    _ => return ControlFlow::Continue(()),
                };
                if alias.explicit {
                    hit = Some(Hit {
                        name: alias.name.value.clone(),
                        segment: find_segment(
                            sql,
                            &format!(r#"\bAS\s+["`\[]?{}\b"#, regex::escape(&alias.name.value)),
                            false,
                            |_| true,
                        ),
                    });
                    return ControlFlow::Break(());
                }
                ControlFlow::Continue(())
            });
            hit
        }
        Detector::SelectWithoutFrom => all_queries(ctx.stmts, |q| {
            sqlutil::selects(&q.body)
                .into_iter()
                .find(|s| s.from.is_empty())
                .map(|_| Hit {
                    name: "SELECT".into(),
                    segment: find_segment(sql, r"\bSELECT\b[^;]*", false, |_| true).map(|s| Segment {
                        text: s.text.trim_end().to_string(),
                        end: s.start + s.text.trim_end().chars().count(),
                        ..s
                    }),
                })
        }),
        Detector::DerivedTableAlias => {
            let mut hit = None;
            let _ = sqlutil::visit_table_factors(ctx.stmts, |t| {
                if let TableFactor::Derived { alias: None, .. } = t {
                    hit = Some(Hit {
                        name: "derived table".into(),
                        segment: find_segment(
                            sql,
                            r"(?:\bFROM|\bJOIN|,)\s*(\(\s*(?:SELECT|WITH)\b)",
                            true,
                            |_| true,
                        ),
                    });
                    return ControlFlow::Break(());
                }
                ControlFlow::Continue(())
            });
            hit
        }
        Detector::DistinctInWindow => all_exprs(ctx.stmts, |e| match e {
            Expr::Function(f) if f.over.is_some() => match &f.args {
                FunctionArguments::List(l) if l.duplicate_treatment == Some(DuplicateTreatment::Distinct) => {
                    let name = func_name(f);
                    Some(Hit {
                        segment: find_segment(
                            sql,
                            &format!(r"\b{}\s*\(\s*DISTINCT\b", regex::escape(&name)),
                            true,
                            |_| true,
                        ),
                        name,
                    })
                }
                _ => None,
            },
            _ => None,
        }),
        Detector::NestedAggregate => all_exprs(ctx.stmts, |e| match e {
            Expr::Function(f) if sqlutil::is_plain_aggregate(f) => {
                let inner = sqlutil::func_args(f).into_iter().find_map(|a| {
                    let mut found = None;
                    sqlutil::walk(a, &mut |x| {
                        if let Expr::Function(g) = x {
                            if found.is_none() && sqlutil::is_plain_aggregate(g) {
                                found = Some(func_name(g));
                            }
                        }
                    });
                    found
                })?;
                let outer = func_name(f);
                let segment = find_segment(
                    sql,
                    &format!(
                        r"\b{}\s*\(\s*(?:DISTINCT\s+)?{}\s*\(",
                        regex::escape(&outer),
                        regex::escape(&inner)
                    ),
                    true,
                    |_| true,
                )
                .or_else(|| call_segment(sql, &outer));
                Some(Hit {
                    name: format!("{outer}({inner})"),
                    segment,
                })
            }
            _ => None,
        }),
        Detector::GroupOrderBy => all_queries(ctx.stmts, |q| {
            let SetExpr::Select(s) = q.body.as_ref() else {
                return None;
            };
            let groups = group_by_exprs(s);
            if groups.is_empty() {
                return None;
            }
            let group_keys: BTreeSet<String> = groups.iter().map(expr_key).collect();
            let group_last: BTreeSet<String> = groups.iter().filter_map(last_part).collect();
            let aliases: BTreeSet<String> = s
                .projection
                .iter()
                .filter_map(|p| match p {
                    sqlparser::ast::SelectItem::ExprWithAlias { alias, .. } => {
                        Some(alias.value.to_ascii_lowercase())
                    }
                    _ => None,
                })
                .collect();
            for o in sqlutil::order_by_exprs(q) {
                if group_keys.contains(&expr_key(o)) || matches!(o, Expr::Value(_)) {
                    continue;
                }
                if let Expr::Identifier(i) = o {
                    if aliases.contains(&i.value.to_ascii_lowercase()) {
                        continue;
                    }
                }
                for col in columns_outside_aggregates(o) {
                    let key = expr_key(col);
                    let last = last_part(col).unwrap_or_default();
                    let grouped = group_keys.contains(&key)
                        || (matches!(col, Expr::Identifier(_)) && group_last.contains(&last))
                        || (matches!(col, Expr::Identifier(_)) && aliases.contains(&last));
                    if !grouped {
                        let text = col.to_string();
                        return Some(Hit {
                            segment: ordered_after(sql, &text),
                            name: text,
                        });
                    }
                }
            }
            None
        }),
        Detector::ScalarSubqueryRows => all_exprs(ctx.stmts, |e| {
            scalar_operands(e).into_iter().find_map(|q| {
                if row_limited(q) {
                    return None;
                }
                let selects = sqlutil::selects(&q.body);
                let s = selects.first()?;
                let aggregate_only = group_by_exprs(s).is_empty()
                    && s.projection.iter().all(|p| {
                        sqlutil::select_item_expr(p).is_some_and(sqlutil::contains_plain_aggregate)
                    });
                let ranked = q.order_by.is_some() || s.selection.is_none();
                (!aggregate_only && ranked).then(|| Hit {
                    name: "subquery".into(),
                    segment: scalar_subquery_segment(sql),
                })
            })
        }),
        Detector::ScalarSubqueryColumns => all_exprs(ctx.stmts, |e| {
            let mut candidates = scalar_operands(e);
            if let Expr::InSubquery { subquery, .. } = e {
                candidates.push(subquery);
            }
            candidates.into_iter().find_map(|q| {
                let s = *sqlutil::selects(&q.body).first()?;
                (s.projection.len() > 1).then(|| Hit {
                    name: "subquery".into(),
                    segment: scalar_subquery_segment(sql),
                })
            })
        }),
        Detector::LimitClause => all_queries(ctx.stmts, |q| {
            let limited = matches!(
                &q.limit_clause,
                Some(LimitClause::LimitOffset { limit: Some(_), .. }) | Some(LimitClause::OffsetCommaLimit { .. })
            );
            limited.then(|| Hit {
                name: "LIMIT".into(),
                segment: find_segment(sql, r"\bLIMIT\s+[^\s;)]+", false, |_| true),
            })
        }),
        Detector::DistinctOrderBy => all_queries(ctx.stmts, |q| {
            let SetExpr::Select(s) = q.body.as_ref() else {
                return None;
            };
            if !matches!(s.distinct, Some(sqlparser::ast::Distinct::Distinct)) {
                return None;
            }
            if s.projection.iter().any(|p| sqlutil::select_item_expr(p).is_none()) {
                return None;
            }
            let mut allowed: BTreeSet<String> = BTreeSet::new();
            for p in &s.projection {
                if let Some(e) = sqlutil::select_item_expr(p) {
                    allowed.insert(expr_key(e));
                }
                if let sqlparser::ast::SelectItem::ExprWithAlias { alias, .. } = p {
                    allowed.insert(alias.value.to_ascii_lowercase());
                }
            }
            sqlutil::order_by_exprs(q).into_iter().find_map(|o| {
                if allowed.contains(&expr_key(o)) || matches!(o, Expr::Value(_)) {
                    return None;
                }
                let text = o.to_string();
                Some(Hit {
                    segment: ordered_after(sql, &text),
                    name: text,
                })
            })
        }),
        Detector::DoubleQuotedLiteral => all_exprs(ctx.stmts, |e| {
            let quoted = |x: &Expr| match x {
                Expr::Identifier(i) if i.quote_style == Some('"') => Some(i.value.clone()),
                _ => None,
            };
            let known = |name: &str| {
                ctx.schema.is_some_and(|s| {
                    s.tables
                        .iter()
                        .any(|t| t.column(name).is_some() || t.name.eq_ignore_ascii_case(name))
                })
            };
            let value = match e {
                Expr::BinaryOp { left, op, right } if is_comparison(op) => {
                    if is_column_ref(left) {
                        quoted(right)
                    } else if is_column_ref(right) {
                        quoted(left)
                    } else {
                        None
                    }
                }
                Expr::InList { list, .. } => list.iter().find_map(quoted),
                _ => None,
            }?;
            if known(&value) {
                return None;
            }
            Some(Hit {
                segment: find_segment(sql, &format!("\"{}\"", regex::escape(&value)), false, |_| true),
                name: value,
            })
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_catalog_loads_in_order() {
        let c = RuleCatalog::builtin();
        assert!(c.len() >= 16);
        assert_eq!(c.rules()[0].stage, RuleStage::Parse);
        let semantic: Vec<&str> = c
            .rules()
            .iter()
            .filter(|r| r.stage == RuleStage::Semantic)
            .map(|r| r.rule_id.as_str())
            .collect();
        let mut sorted = semantic.clone();
        sorted.sort();
        assert_eq!(semantic, sorted);
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let line = r#"{"rule_id":"X","dialects":["oracle"],"detector_kind":"placeholder","message_template":"m","gold_hint":"g"}"#;
        let err = RuleCatalog::from_jsonl(&format!("{line}\n{line}")).unwrap_err();
        assert_eq!(
            err,
            ExecError::Catalog {
                line: 2,
                message: "duplicate rule_id X".into()
            }
        );
    }

    #[test]
    fn unknown_detector_is_rejected() {
        let line = r#"{"rule_id":"X","dialects":["oracle"],"detector_kind":"nope","message_template":"m","gold_hint":"g"}"#;
        assert!(matches!(
            RuleCatalog::from_jsonl(line),
            Err(ExecError::Catalog { line: 1, .. })
        ));
    }

    #[test]
    fn per_dialect_messages_resolve() {
        let c = RuleCatalog::builtin();
        let m6 = c.get("M6").unwrap();
        let hit = Hit {
            name: String::new(),
            segment: None,
        };
        assert!(m6.message(Dialect::Mysql, &hit).contains("1248"));
        assert!(m6.message(Dialect::Postgresql, &hit).contains("must have an alias"));
        assert_eq!(m6.code(Dialect::Mysql).as_deref(), Some("1248"));
    }
}
