use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sqlparser::ast::{
    BinaryOperator, DateTimeField, DuplicateTreatment, Expr, FunctionArguments, GroupByExpr, Ident, JoinConstraint,
    JoinOperator, Query, Select, SelectItem, SetExpr, Statement, TableFactor, UnaryOperator, Value, VisitMut,
    VisitorMut,
};

use crate::model::SchemaCatalog;
use crate::sqlutil::{func_args, func_name, has_wildcard_arg, is_plain_aggregate, order_by_exprs, walk};

/// Equality between two columns, sides in lexical order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JoinKey {
    pub left: String,
    pub right: String,
}

impl JoinKey {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        let (a, b) = (a.into(), b.into());
        if a <= b {
            Self { left: a, right: b }
        } else {
            Self { left: b, right: a }
        }
    }

    /// `(left table, right table)` of the key.
    pub fn tables(&self) -> (&str, &str) {
        fn t(s: &str) -> &str {
            s.rsplit_once('.').map_or("", |(t, _)| t)
        }
        (t(&self.left), t(&self.right))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Row,
    PostAggregation,
}

/// Normalized `(column, comparator, value)` triple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Predicate {
    pub column: String,
    pub comparator: String,
    pub value: String,
    pub stage: Stage,
}

impl Predicate {
    fn new(column: impl Into<String>, comparator: impl Into<String>, value: impl Into<String>, stage: Stage) -> Self {
        Self {
            column: column.into(),
            comparator: comparator.into(),
            value: value.into(),
            stage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Aggregate {
    pub function: String,
    /// Column the aggregate consumes, `*`, or the canonical argument text.
    pub argument: String,
    pub distinct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionItem {
    pub expression: String,
    pub alias: Option<String>,
    pub columns: BTreeSet<String>,
    pub aggregates: Vec<Aggregate>,
}

/// Logical units recovered from a query.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorTrace {
    pub tables: BTreeSet<String>,
    pub joins: BTreeSet<JoinKey>,
    pub predicates: BTreeSet<Predicate>,
    pub aggregates: BTreeSet<Aggregate>,
    pub group_dims: BTreeSet<String>,
    pub projection: Vec<ProjectionItem>,
    /// Every resolved column mentioned anywhere.
    pub columns: BTreeSet<String>,
    /// Constructs the trace does not model, such as set operations.
    pub unmodeled: Vec<String>,
}

impl OperatorTrace {
    pub fn predicates_at(&self, stage: Stage) -> impl Iterator<Item = &Predicate> {
        self.predicates.iter().filter(move |p| p.stage == stage)
    }
}

fn ident_key(i: &Ident) -> String {
    if i.quote_style.is_some() {
        i.value.clone()
    } else {
        i.value.to_lowercase()
    }
}

#[derive(Default, Clone)]
struct Scope {
    aliases: BTreeMap<String, String>,
    tables: Vec<String>,
}

struct Ctx<'a> {
    schema: Option<&'a SchemaCatalog>,
    ctes: BTreeSet<String>,
    trace: OperatorTrace,
    last_scope: Option<Scope>,
}

impl Scope {
    fn add(&mut self, table: String, alias: Option<String>) {
        if let Some(a) = alias {
            self.aliases.insert(a, table.clone());
        }
        self.aliases.insert(table.clone(), table.clone());
        self.tables.push(table);
    }
}

fn resolve(e: &Expr, scope: &Scope, schema: Option<&SchemaCatalog>) -> Option<String> {
    match e {
        Expr::Identifier(i) => {
            let c = ident_key(i);
            if scope.tables.len() == 1 {
                return Some(format!("{}.{c}", scope.tables[0]));
            }
            let owners: Vec<&String> = scope
                .tables
                .iter()
                .filter(|t| schema.is_some_and(|s| s.column(t, &c).is_some()))
                .collect();
            Some(match owners.as_slice() {
                [t] => format!("{t}.{c}"),
                _ => c,
            })
        }
        Expr::CompoundIdentifier(parts) if parts.len() >= 2 => {
            let q = ident_key(&parts[parts.len() - 2]);
            let table = scope.aliases.get(&q).cloned().unwrap_or(q);
            Some(format!("{table}.{}", ident_key(&parts[parts.len() - 1])))
        }
        Expr::Nested(inner) => resolve(inner, scope, schema),
        _ => None,
    }
}

struct Canon<'a> {
    scope: &'a Scope,
    schema: Option<&'a SchemaCatalog>,
}

impl VisitorMut for Canon<'_> {
    type Break = ();
    fn post_visit_expr(&mut self, e: &mut Expr) -> ControlFlow<()> {
        if matches!(e, Expr::Identifier(_) | Expr::CompoundIdentifier(_)) {
            if let Some(r) = resolve(e, self.scope, self.schema) {
                *e = Expr::Identifier(Ident::new(r));
            }
        }
        ControlFlow::Continue(())
    }
}

/// Expression text with columns resolved to `table.column`, lower-cased.
fn canon(e: &Expr, scope: &Scope, schema: Option<&SchemaCatalog>) -> String {
    let mut copy = e.clone();
    let _ = copy.visit(&mut Canon { scope, schema });
    copy.to_string().to_lowercase()
}

fn columns_in(e: &Expr, scope: &Scope, schema: Option<&SchemaCatalog>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    walk(e, &mut |x| {
        if matches!(x, Expr::Identifier(_) | Expr::CompoundIdentifier(_)) {
            out.extend(resolve(x, scope, schema));
        }
    });
    out
}

/// Dialect spellings of one aggregate share a name.
fn canonical_aggregate(name: String) -> String {
    match name.as_str() {
        "GROUP_CONCAT" | "LISTAGG" | "STRING_AGG" => "STRING_AGG".to_string(),
        _ => name,
    }
}

static DATE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\d{4})[-/](\d{1,2})[-/](\d{1,2})(?:[ T](\d{1,2}):(\d{2})(?::(\d{2})(?:\.\d+)?)?)?$").unwrap()
});
static YEAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d{4}$").unwrap());

/// ISO-8601 date (and time when not midnight) or the input unchanged.
pub fn canonical_date(s: &str) -> String {
    match DATE.captures(s.trim()) {
        Some(c) => {
            let n = |i: usize| c.get(i).map_or(0, |m| m.as_str().parse::<u32>().unwrap_or(0));
            let date = format!("{}-{:02}-{:02}", &c[1], n(2), n(3));
            if n(4) == 0 && n(5) == 0 && n(6) == 0 {
                date
            } else {
                format!("{date} {:02}:{:02}:{:02}", n(4), n(5), n(6))
            }
        }
        None => s.to_string(),
    }
}

pub fn canonical_number(s: &str) -> String {
    match s.trim().parse::<f64>() {
        Ok(f) if f.fract() == 0.0 && f.abs() < 1e15 => format!("{}", f as i64),
        Ok(f) => format!("{f}"),
        Err(_) => s.to_string(),
    }
}

fn literal(e: &Expr) -> Option<String> {
    match e {
        Expr::Value(v) => match &v.value {
            Value::Number(n, _) => Some(canonical_number(n)),
            Value::SingleQuotedString(s)
            | Value::DoubleQuotedString(s)
            | Value::NationalStringLiteral(s)
            | Value::EscapedStringLiteral(s) => Some(canonical_date(s)),
            Value::Boolean(b) => Some(b.to_string()),
            Value::Null => Some("null".into()),
            _ => None,
        },
        Expr::TypedString(ts) => match &ts.value.value {
            Value::SingleQuotedString(s) | Value::DoubleQuotedString(s) => Some(canonical_date(s)),
            _ => None,
        },
        Expr::UnaryOp { op: UnaryOperator::Minus, expr } => literal(expr).map(|v| canonical_number(&format!("-{v}"))),
        Expr::Nested(inner) => literal(inner),
        Expr::Cast { expr, .. } => literal(expr),
        Expr::Function(f)
            if matches!(func_name(f).as_str(), "TO_DATE" | "TO_TIMESTAMP" | "DATE" | "DATETIME" | "TIMESTAMP") =>
        {
            func_args(f).first().and_then(|a| literal(a))
        }
        _ => None,
    }
}

fn string_arg(e: &Expr) -> Option<String> {
    match e {
        Expr::Value(v) => match &v.value {
            Value::SingleQuotedString(s) | Value::DoubleQuotedString(s) => Some(s.clone()),
            _ => None,
        },
        Expr::Identifier(i) => Some(i.value.clone()),
        _ => None,
    }
}

/// Column whose calendar year `e` computes, across dialect spellings.
fn year_of(e: &Expr, scope: &Scope, schema: Option<&SchemaCatalog>) -> Option<String> {
    match e {
        Expr::Extract {
            field: DateTimeField::Year,
            expr,
            ..
        } => resolve(expr, scope, schema),
        Expr::Nested(inner) | Expr::Cast { expr: inner, .. } => year_of(inner, scope, schema),
        Expr::Function(f) => {
            let args = func_args(f);
            let is_year = |a: Option<&&Expr>| {
                a.and_then(|x| string_arg(x))
                    .is_some_and(|s| matches!(s.to_lowercase().as_str(), "year" | "yy" | "yyyy" | "%y" | "years"))
            };
            let col = |a: Option<&&Expr>| a.and_then(|x| resolve(x, scope, schema));
            match func_name(f).as_str() {
                "YEAR" if args.len() == 1 => col(args.first()),
                "STRFTIME" if is_year(args.first()) => col(args.get(1)),
                "TO_CHAR" if is_year(args.get(1)) => col(args.first()),
                "DATEPART" | "DATE_PART" if is_year(args.first()) => col(args.get(1)),
                _ => None,
            }
        }
        _ => None,
    }
}

fn comparator(op: &BinaryOperator) -> Option<&'static str> {
    Some(match op {
        BinaryOperator::Eq => "=",
        BinaryOperator::NotEq => "<>",
        BinaryOperator::Gt => ">",
        BinaryOperator::Lt => "<",
        BinaryOperator::GtEq => ">=",
        BinaryOperator::LtEq => "<=",
        _ => return None,
    })
}

fn flip(op: &str) -> &str {
    match op {
        ">" => "<",
        "<" => ">",
        ">=" => "<=",
        "<=" => ">=",
        other => other,
    }
}

fn conjuncts(e: &Expr) -> Vec<&Expr> {
    match e {
        Expr::BinaryOp {
            left,
            op: BinaryOperator::And,
            right,
        } => {
            let mut v = conjuncts(left);
            v.extend(conjuncts(right));
            v
        }
        Expr::Nested(inner) if matches!(**inner, Expr::BinaryOp { op: BinaryOperator::And, .. }) => conjuncts(inner),
        _ => vec![e],
    }
}

fn year_bounds(low: &str, high: &str) -> Option<String> {
    let (ly, lrest) = low.split_at_checked(4)?;
    let (hy, hrest) = high.split_at_checked(4)?;
    (ly == hy && lrest == "-01-01" && hrest.starts_with("-12-31") && YEAR.is_match(ly)).then(|| ly.to_string())
}

impl Ctx<'_> {
    fn column_or_canon(&self, e: &Expr, scope: &Scope) -> String {
        resolve(e, scope, self.schema).unwrap_or_else(|| canon(e, scope, self.schema))
    }

    fn atom(&mut self, e: &Expr, scope: &Scope, stage: Stage, joins_allowed: bool) {
        let schema = self.schema;
        match e {
            Expr::BinaryOp { left, op, right } if comparator(op).is_some() => {
                let op = comparator(op).unwrap();
                if let (Some(a), Some(b)) = (
                    resolve(left, scope, schema),
                    resolve(right, scope, schema),
                ) {
                    let ta = a.rsplit_once('.').map(|x| x.0);
                    let tb = b.rsplit_once('.').map(|x| x.0);
                    if joins_allowed && op == "=" && ta.is_some() && tb.is_some() && ta != tb {
                        self.trace.joins.insert(JoinKey::new(a, b));
                        return;
                    }
                }
                if let (Some(col), Some(v)) = (year_of(left, scope, schema), literal(right)) {
                    if YEAR.is_match(&v) {
                        self.trace.predicates.insert(Predicate::new(col, format!("year{op}"), v, stage));
                        return;
                    }
                }
                if let (Some(v), Some(col)) = (literal(left), year_of(right, scope, schema)) {
                    if YEAR.is_match(&v) {
                        self.trace.predicates.insert(Predicate::new(col, format!("year{}", flip(op)), v, stage));
                        return;
                    }
                }
                match (literal(left), literal(right)) {
                    (None, Some(v)) => {
                        let col = self.column_or_canon(left, scope);
                        self.trace.predicates.insert(Predicate::new(col, op, v, stage));
                    }
                    (Some(v), None) => {
                        let col = self.column_or_canon(right, scope);
                        self.trace.predicates.insert(Predicate::new(col, flip(op), v, stage));
                    }
                    _ => {
                        let (l, r) = (canon(left, scope, schema), canon(right, scope, schema));
                        self.trace.predicates.insert(Predicate::new(l, op, r, stage));
                    }
                }
            }
            Expr::Between {
                expr,
                negated: false,
                low,
                high,
            } => {
                let col = self.column_or_canon(expr, scope);
                match (literal(low), literal(high)) {
                    (Some(l), Some(h)) => match year_bounds(&l, &h) {
                        Some(y) => {
                            self.trace.predicates.insert(Predicate::new(col, "year=", y, stage));
                        }
                        None => {
                            self.trace.predicates.insert(Predicate::new(col.clone(), ">=", l, stage));
                            self.trace.predicates.insert(Predicate::new(col, "<=", h, stage));
                        }
                    },
                    _ => {
                        self.trace.predicates.insert(Predicate::new(canon(e, scope, schema), "expr", "", stage));
                    }
                }
            }
            Expr::InList { expr, list, negated } => {
                let col = self.column_or_canon(expr, scope);
                let mut vals: Vec<String> = list.iter().map(|x| literal(x).unwrap_or_else(|| canon(x, scope, schema))).collect();
                vals.sort();
                let op = if *negated { "not in" } else { "in" };
                self.trace.predicates.insert(Predicate::new(col, op, vals.join(","), stage));
            }
            Expr::Like {
                negated, expr, pattern, ..
            }
            | Expr::ILike {
                negated, expr, pattern, ..
            } => {
                let col = self.column_or_canon(expr, scope);
                let v = literal(pattern).unwrap_or_else(|| canon(pattern, scope, schema));
                let op = if *negated { "not like" } else { "like" };
                self.trace.predicates.insert(Predicate::new(col, op, v, stage));
            }
            Expr::IsNull(x) | Expr::IsNotNull(x) => {
                let col = self.column_or_canon(x, scope);
                let op = if matches!(e, Expr::IsNull(_)) { "is null" } else { "is not null" };
                self.trace.predicates.insert(Predicate::new(col, op, "", stage));
            }
            _ => {
                self.trace.predicates.insert(Predicate::new(canon(e, scope, schema), "expr", "", stage));
            }
        }
    }

    fn aggregates_in(&mut self, e: &Expr, scope: &Scope) -> Vec<Aggregate> {
        let mut found = Vec::new();
        let schema = self.schema;
        walk(e, &mut |x| {
            if let Expr::Function(f) = x {
                if is_plain_aggregate(f) {
                    let distinct = matches!(
                        &f.args,
                        FunctionArguments::List(l) if l.duplicate_treatment == Some(DuplicateTreatment::Distinct)
                    );
                    let argument = if has_wildcard_arg(f) {
                        "*".to_string()
                    } else {
                        match func_args(f).first() {
                            Some(a) => resolve(a, scope, schema)
                                .or_else(|| columns_in(a, scope, schema).into_iter().next())
                                .unwrap_or_else(|| canon(a, scope, schema)),
                            None => "*".to_string(),
                        }
                    };
                    found.push(Aggregate {
                        function: canonical_aggregate(func_name(f)),
                        argument,
                        distinct,
                    });
                }
            }
        });
        self.trace.aggregates.extend(found.iter().cloned());
        found
    }

    fn factor(&mut self, f: &TableFactor, scope: &mut Scope) {
        match f {
            TableFactor::Table { name, alias, .. } => {
                let table = name
                    .0
                    .last()
                    .and_then(|p| p.as_ident())
                    .map(ident_key)
                    .unwrap_or_else(|| name.to_string().to_lowercase());
                if !self.ctes.contains(&table) {
                    self.trace.tables.insert(table.clone());
                }
                scope.add(table, alias.as_ref().map(|a| ident_key(&a.name)));
            }
            TableFactor::Derived { subquery, alias, .. } => {
                self.query(subquery, false);
                let name = alias.as_ref().map(|a| ident_key(&a.name)).unwrap_or_else(|| "(derived)".into());
                scope.add(name, None);
            }
            other => self.trace.unmodeled.push(format!("table factor {other}")),
        }
    }

    fn select(&mut self, s: &Select, outer: bool) {
        let schema = self.schema;
        let mut scope = Scope::default();
        let mut pending: Vec<(Expr, Vec<String>)> = Vec::new();
        for twj in &s.from {
            self.factor(&twj.relation, &mut scope);
            for j in &twj.joins {
                let left_tables = scope.tables.clone();
                self.factor(&j.relation, &mut scope);
                let right = scope.tables.last().cloned().unwrap_or_default();
                let constraint = match &j.join_operator {
                    JoinOperator::Join(c)
                    | JoinOperator::Inner(c)
                    | JoinOperator::Left(c)
                    | JoinOperator::LeftOuter(c)
                    | JoinOperator::Right(c)
                    | JoinOperator::RightOuter(c)
                    | JoinOperator::FullOuter(c)
                    | JoinOperator::CrossJoin(c)
                    | JoinOperator::StraightJoin(c) => Some(c),
                    _ => None,
                };
                match constraint {
                    Some(JoinConstraint::On(e)) => pending.push((e.clone(), left_tables)),
                    Some(JoinConstraint::Using(cols)) => {
                        for c in cols {
                            let col = c.to_string().to_lowercase();
                            let owner = left_tables
                                .iter()
                                .rev()
                                .find(|t| schema.is_none_or(|s| s.column(t, &col).is_some()))
                                .cloned()
                                .unwrap_or_default();
                            self.trace.joins.insert(JoinKey::new(format!("{owner}.{col}"), format!("{right}.{col}")));
                        }
                    }
                    _ => {}
                }
            }
        }
        for (on, _) in &pending {
            for a in conjuncts(on) {
                self.atom(a, &scope, Stage::Row, true);
            }
        }
        if let Some(w) = &s.selection {
            for a in conjuncts(w) {
                self.atom(a, &scope, Stage::Row, true);
            }
        }
        let mut items = Vec::new();
        for item in &s.projection {
            let (expr, alias) = match item {
                SelectItem::UnnamedExpr(e) => (Some(e), None),
                SelectItem::ExprWithAlias { expr, alias } => (Some(expr), Some(ident_key(alias))),
                _ => (None, None),
            };
            match expr {
                Some(e) => {
                    let aggs = self.aggregates_in(e, &scope);
                    self.trace.columns.extend(columns_in(e, &scope, schema));
                    items.push(ProjectionItem {
                        expression: canon(e, &scope, schema),
                        alias,
                        columns: columns_in(e, &scope, schema),
                        aggregates: aggs,
                    });
                }
                None => items.push(ProjectionItem {
                    expression: item.to_string().to_lowercase(),
                    alias: None,
                    columns: BTreeSet::new(),
                    aggregates: Vec::new(),
                }),
            }
        }
        if let GroupByExpr::Expressions(exprs, _) = &s.group_by {
            for g in exprs {
                let by_alias = match g {
                    Expr::Identifier(i) => s.projection.iter().find_map(|p| match p {
                        SelectItem::ExprWithAlias { expr, alias } if ident_key(alias) == ident_key(i) => Some(expr),
                        _ => None,
                    }),
                    Expr::Value(v) => match &v.value {
                        Value::Number(n, _) => n
                            .parse::<usize>()
                            .ok()
                            .and_then(|k| s.projection.get(k.wrapping_sub(1)))
                            .and_then(crate::sqlutil::select_item_expr),
                        _ => None,
                    },
                    _ => None,
                };
                let g = by_alias.unwrap_or(g);
                let dim = year_of(g, &scope, schema)
                    .map(|c| format!("year({c})"))
                    .unwrap_or_else(|| self.column_or_canon(g, &scope));
                self.trace.group_dims.insert(dim);
                self.trace.columns.extend(columns_in(g, &scope, schema));
            }
        }
        if let Some(h) = &s.having {
            self.aggregates_in(h, &scope);
            for a in conjuncts(h) {
                self.atom(a, &scope, Stage::PostAggregation, false);
            }
        }
        for (on, _) in &pending {
            self.trace.columns.extend(columns_in(on, &scope, schema));
        }
        for e in s.selection.iter().chain(s.having.iter()) {
            self.trace.columns.extend(columns_in(e, &scope, schema));
        }
        if outer {
            self.trace.projection = items;
        }
        self.last_scope = Some(scope);
    }

    fn query(&mut self, q: &Query, outer: bool) {
        if let Some(with) = &q.with {
            for cte in &with.cte_tables {
                self.query(&cte.query, false);
                self.ctes.insert(ident_key(&cte.alias.name));
            }
        }
        self.body(&q.body, outer);
        let scope = self.last_scope.take().unwrap_or_default();
        for e in order_by_exprs(q) {
            // aliases of projection items resolve to nothing new
            self.aggregates_in(e, &scope);
        }
    }

    fn body(&mut self, b: &SetExpr, outer: bool) {
        match b {
            SetExpr::Select(s) => self.select(s, outer),
            SetExpr::Query(q) => self.query(q, outer),
            SetExpr::SetOperation { op, left, right, .. } => {
                self.trace.unmodeled.push(op.to_string().to_uppercase());
                self.body(left, outer);
                self.body(right, false);
            }
            other => self.trace.unmodeled.push(format!("{other}")),
        }
    }
}

/// Merges `c >= 'Y-01-01' AND c < 'Y+1-01-01'` (or `<= 'Y-12-31'`) into a
/// year predicate.
fn merge_year_ranges(preds: &mut BTreeSet<Predicate>) {
    let lows: Vec<Predicate> = preds
        .iter()
        .filter(|p| p.comparator == ">=" && p.value.len() >= 10 && p.value[4..10] == *"-01-01")
        .cloned()
        .collect();
    for low in lows {
        let y = &low.value[..4];
        let Ok(year) = y.parse::<u32>() else { continue };
        let next = format!("{}-01-01", year + 1);
        let high = preds
            .iter()
            .find(|p| {
                p.column == low.column
                    && p.stage == low.stage
                    && ((p.comparator == "<" && p.value == next)
                        || (p.comparator == "<=" && p.value.starts_with(&format!("{y}-12-31"))))
            })
            .cloned();
        if let Some(high) = high {
            preds.remove(&low);
            preds.remove(&high);
            preds.insert(Predicate::new(low.column.clone(), "year=", y, low.stage));
        }
    }
}

/// Logical trace of the first query statement. `schema` resolves
/// unqualified columns in multi-table scopes.
pub fn derive_trace(stmts: &[Statement], schema: Option<&SchemaCatalog>) -> OperatorTrace {
    let mut ctx = Ctx {
        schema,
        ctes: BTreeSet::new(),
        trace: OperatorTrace::default(),
        last_scope: None,
    };
    match stmts.iter().find_map(|s| match s {
        Statement::Query(q) => Some(q),
        _ => None,
    }) {
        Some(q) => ctx.query(q, true),
        None => ctx.trace.unmodeled.push("non-query statement".into()),
    }
    merge_year_ranges(&mut ctx.trace.predicates);
    ctx.trace
}
