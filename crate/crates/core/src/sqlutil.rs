//! Small helpers over the `sqlparser` AST shared by the simulator and the
//! auditor.

use std::ops::ControlFlow;

use sqlparser::ast::{
    Expr, Function, FunctionArg, FunctionArgExpr, FunctionArguments, OrderByKind, Query, SelectItem,
    SetExpr, Statement, TableFactor, Visit, Visitor,
};

pub const AGGREGATES: &[&str] = &[
    "COUNT", "SUM", "AVG", "MIN", "MAX", "GROUP_CONCAT", "LISTAGG", "STRING_AGG", "ARRAY_AGG",
    "STDDEV", "STDDEV_POP", "STDDEV_SAMP", "VARIANCE", "VAR_POP", "VAR_SAMP", "MEDIAN",
];

/// Unqualified, unquoted, upper-case function name.
pub fn func_name(f: &Function) -> String {
    let full = f.name.to_string();
    let last = full.rsplit('.').next().unwrap_or(&full);
    last.trim_matches(|c| c == '"' || c == '`' || c == '[' || c == ']')
        .to_ascii_uppercase()
}

/// Aggregate call that is not a window function.
pub fn is_plain_aggregate(f: &Function) -> bool {
    f.over.is_none() && AGGREGATES.contains(&func_name(f).as_str())
}

pub fn func_arg_count(f: &Function) -> usize {
    match &f.args {
        FunctionArguments::List(list) => list.args.len(),
        FunctionArguments::Subquery(_) => 1,
        FunctionArguments::None => 0,
    }
}

/// Expression arguments of a call, skipping wildcards.
pub fn func_args(f: &Function) -> Vec<&Expr> {
    match &f.args {
        FunctionArguments::List(list) => list
            .args
            .iter()
            .filter_map(|a| match a {
                FunctionArg::Unnamed(FunctionArgExpr::Expr(e))
                | FunctionArg::Named { arg: FunctionArgExpr::Expr(e), .. }
                | FunctionArg::ExprNamed { arg: FunctionArgExpr::Expr(e), .. } => Some(e),
                _ => None,
            })
            .collect(),
        _ => Vec::new(),
    }
}

pub fn has_wildcard_arg(f: &Function) -> bool {
    match &f.args {
        FunctionArguments::List(list) => list.args.iter().any(|a| {
            matches!(
                a,
                FunctionArg::Unnamed(FunctionArgExpr::Wildcard | FunctionArgExpr::QualifiedWildcard(_))
            )
        }),
        _ => false,
    }
}

/// Direct sub-expressions, not descending into subqueries.
pub fn children(e: &Expr) -> Vec<&Expr> {
    match e {
        Expr::BinaryOp { left, right, .. } => vec![left, right],
        Expr::AnyOp { left, right, .. } | Expr::AllOp { left, right, .. } => vec![left, right],
        Expr::UnaryOp { expr, .. }
        | Expr::Nested(expr)
        | Expr::IsNull(expr)
        | Expr::IsNotNull(expr)
        | Expr::IsTrue(expr)
        | Expr::IsNotTrue(expr)
        | Expr::IsFalse(expr)
        | Expr::IsNotFalse(expr)
        | Expr::IsUnknown(expr)
        | Expr::IsNotUnknown(expr)
        | Expr::Cast { expr, .. }
        | Expr::Convert { expr, .. }
        | Expr::Extract { expr, .. }
        | Expr::Ceil { expr, .. }
        | Expr::Floor { expr, .. }
        | Expr::Collate { expr, .. }
        | Expr::InSubquery { expr, .. } => vec![expr],
        Expr::IsDistinctFrom(a, b) | Expr::IsNotDistinctFrom(a, b) => vec![a, b],
        Expr::AtTimeZone { timestamp, time_zone } => vec![timestamp, time_zone],
        Expr::Position { expr, r#in } => vec![expr, r#in],
        Expr::InList { expr, list, .. } => {
            let mut v: Vec<&Expr> = vec![expr];
            v.extend(list.iter());
            v
        }
        Expr::Between { expr, low, high, .. } => vec![expr, low, high],
        Expr::Like { expr, pattern, .. }
        | Expr::ILike { expr, pattern, .. }
        | Expr::SimilarTo { expr, pattern, .. }
        | Expr::RLike { expr, pattern, .. } => vec![expr, pattern],
        Expr::Substring {
            expr,
            substring_from,
            substring_for,
            ..
        } => {
            let mut v: Vec<&Expr> = vec![expr];
            v.extend(substring_from.as_deref());
            v.extend(substring_for.as_deref());
            v
        }
        Expr::Trim { expr, trim_what, .. } => {
            let mut v: Vec<&Expr> = vec![expr];
            v.extend(trim_what.as_deref());
            v
        }
        Expr::Function(f) => {
            let mut v = func_args(f);
            v.extend(f.filter.as_deref());
            v.extend(f.within_group.iter().map(|o| &o.expr));
            v
        }
        Expr::Case {
            operand,
            conditions,
            else_result,
            ..
        } => {
            let mut v: Vec<&Expr> = Vec::new();
            v.extend(operand.as_deref());
            for c in conditions {
                v.push(&c.condition);
                v.push(&c.result);
            }
            v.extend(else_result.as_deref());
            v
        }
        Expr::Tuple(items) => items.iter().collect(),
        _ => Vec::new(),
    }
}

/// Pre-order walk over an expression tree (subqueries excluded).
pub fn walk<'a>(e: &'a Expr, f: &mut dyn FnMut(&'a Expr)) {
    f(e);
    for c in children(e) {
        walk(c, f);
    }
}

/// Column references outside of any plain aggregate call.
pub fn columns_outside_aggregates(e: &Expr) -> Vec<&Expr> {
    let mut out = Vec::new();
    fn go<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
        match e {
            Expr::Identifier(_) | Expr::CompoundIdentifier(_) => out.push(e),
            Expr::Function(f) if is_plain_aggregate(f) => {}
            _ => {
                for c in children(e) {
                    go(c, out);
                }
            }
        }
    }
    go(e, &mut out);
    out
}

pub fn contains_plain_aggregate(e: &Expr) -> bool {
    let mut found = false;
    walk(e, &mut |x| {
        if let Expr::Function(f) = x {
            if is_plain_aggregate(f) {
                found = true;
            }
        }
    });
    found
}

/// Expression text used for structural comparisons.
pub fn expr_key(e: &Expr) -> String {
    e.to_string().to_ascii_lowercase()
}

pub fn order_by_exprs(q: &Query) -> Vec<&Expr> {
    match q.order_by.as_ref().map(|o| &o.kind) {
        Some(OrderByKind::Expressions(items)) => items.iter().map(|o| &o.expr).collect(),
        _ => Vec::new(),
    }
}

pub fn select_item_expr(item: &SelectItem) -> Option<&Expr> {
    match item {
        SelectItem::UnnamedExpr(e) | SelectItem::ExprWithAlias { expr: e, .. } => Some(e),
        SelectItem::ExprWithAliases { expr, .. } => Some(expr),
        _ => None,
    }
}

struct QueryWalker<F>(F);

impl<B, F: FnMut(&Query) -> ControlFlow<B>> Visitor for QueryWalker<F> {
    type Break = B;
    fn pre_visit_query(&mut self, query: &Query) -> ControlFlow<B> {
        (self.0)(query)
    }
}

/// Visits every query (including nested ones) in statement order.
pub fn visit_queries<B>(stmts: &[Statement], f: impl FnMut(&Query) -> ControlFlow<B>) -> ControlFlow<B> {
    let mut walker = QueryWalker(f);
    for s in stmts {
        s.visit(&mut walker)?;
    }
    ControlFlow::Continue(())
}

struct TableFactorWalker<F>(F);

impl<B, F: FnMut(&TableFactor) -> ControlFlow<B>> Visitor for TableFactorWalker<F> {
    type Break = B;
    fn pre_visit_table_factor(&mut self, t: &TableFactor) -> ControlFlow<B> {
        (self.0)(t)
    }
}

pub fn visit_table_factors<B>(
    stmts: &[Statement],
    f: impl FnMut(&TableFactor) -> ControlFlow<B>,
) -> ControlFlow<B> {
    let mut walker = TableFactorWalker(f);
    for s in stmts {
        s.visit(&mut walker)?;
    }
    ControlFlow::Continue(())
}

/// Every SELECT block reachable from a set expression.
pub fn selects(body: &SetExpr) -> Vec<&sqlparser::ast::Select> {
    match body {
        SetExpr::Select(s) => vec![s],
        SetExpr::Query(q) => selects(&q.body),
        SetExpr::SetOperation { left, right, .. } => {
            let mut v = selects(left);
            v.extend(selects(right));
            v
        }
        _ => Vec::new(),
    }
}
