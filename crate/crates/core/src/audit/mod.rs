//! Plan-to-query consistency checks over four invariants.

mod intent;
mod trace;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use intent::{extract_intent, AggregateIntent, FilterIntent, PlanIntent};
pub use trace::{
    canonical_date, canonical_number, derive_trace, Aggregate, JoinKey, OperatorTrace, Predicate, ProjectionItem,
    Stage,
};

use crate::exec::GrammarProfile;
use crate::model::{SchemaCatalog, SqlText};
use crate::planner::DialectAwarePlan;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("parse error at {line}:{column}: {message}")]
    Parse { message: String, line: usize, column: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Invariant {
    Topology,
    Constraints,
    Computation,
    Projection,
}

impl Invariant {
    pub const ALL: [Invariant; 4] = [Self::Topology, Self::Constraints, Self::Computation, Self::Projection];

    pub fn name(self) -> &'static str {
        match self {
            Self::Topology => "topology",
            Self::Constraints => "constraints",
            Self::Computation => "computation",
            Self::Projection => "projection",
        }
    }
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detail {
    pub invariant: Invariant,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub verdicts: BTreeMap<Invariant, Verdict>,
    pub details: Vec<Detail>,
    pub passed: bool,
}

impl AuditReport {
    fn from_details(details: Vec<Detail>) -> Self {
        let verdicts: BTreeMap<Invariant, Verdict> = Invariant::ALL
            .iter()
            .map(|&i| {
                let v = if details.iter().any(|d| d.invariant == i) { Verdict::Fail } else { Verdict::Pass };
                (i, v)
            })
            .collect();
        let passed = verdicts.values().all(|v| *v == Verdict::Pass);
        Self {
            verdicts,
            details,
            passed,
        }
    }

    pub fn verdict(&self, i: Invariant) -> Verdict {
        self.verdicts.get(&i).copied().unwrap_or(Verdict::Pass)
    }

    pub fn failed(&self) -> Vec<Invariant> {
        self.verdicts.iter().filter(|(_, v)| **v == Verdict::Fail).map(|(i, _)| *i).collect()
    }

    /// Deviation lines fed back to the generator.
    pub fn feedback(&self) -> String {
        self.details
            .iter()
            .map(|d| format!("- {} ({}): {}", d.invariant, d.kind, d.message))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub fn parse_sql(sql: &SqlText) -> Result<Vec<sqlparser::ast::Statement>, AuditError> {
    GrammarProfile::for_dialect(sql.dialect).parse(&sql.text).map_err(|f| AuditError::Parse {
        message: f.trace.message,
        line: f.line,
        column: f.column,
    })
}

/// Columns match when equal, or when one side is unqualified and the
/// column names agree.
fn col_eq(plan: &str, trace: &str) -> bool {
    if plan == trace {
        return true;
    }
    match (plan.rsplit_once('.'), trace.rsplit_once('.')) {
        (Some(_), Some(_)) => false,
        (Some((_, c)), None) => c == trace,
        (None, Some((_, c))) => c == plan,
        (None, None) => false,
    }
}

fn col_in(plan: &str, expr: &str) -> bool {
    col_eq(plan, expr) || expr.contains(plan)
}

fn join_eq(a: &JoinKey, b: &JoinKey) -> bool {
    (col_eq(&a.left, &b.left) && col_eq(&a.right, &b.right)) || (col_eq(&a.left, &b.right) && col_eq(&a.right, &b.left))
}

fn value_eq(comparator: &str, plan: &str, trace: &str) -> bool {
    let (p, t) = (plan.to_lowercase(), trace.to_lowercase());
    if comparator.contains("like") {
        return p.trim_matches('%') == t.trim_matches('%');
    }
    p == t
}

struct Findings(Vec<Detail>);

impl Findings {
    fn add(&mut self, invariant: Invariant, kind: &str, message: String) {
        self.0.push(Detail {
            invariant,
            kind: kind.to_string(),
            message,
        });
    }
}

fn topology(intent: &PlanIntent, trace: &OperatorTrace, out: &mut Findings) {
    for u in &trace.unmodeled {
        out.add(Invariant::Topology, "unmodeled construct", format!("query uses {u}"));
    }
    for j in &intent.joins {
        if !trace.joins.iter().any(|t| join_eq(j, t)) {
            out.add(Invariant::Topology, "missing join", format!("{} = {}", j.left, j.right));
        }
    }
    for t in &trace.joins {
        if !intent.joins.iter().any(|j| join_eq(j, t)) {
            out.add(Invariant::Topology, "extra join", format!("{} = {}", t.left, t.right));
        }
    }
    if !intent.tables.is_empty() {
        for t in intent.tables.difference(&trace.tables) {
            out.add(Invariant::Topology, "missing table", t.clone());
        }
        for t in trace.tables.difference(&intent.tables) {
            out.add(Invariant::Topology, "extra table", t.clone());
        }
    }
}

fn constraints(intent: &PlanIntent, trace: &OperatorTrace, out: &mut Findings) {
    let mut used: Vec<&Predicate> = Vec::new();
    for f in &intent.filters {
        let on_column: Vec<&Predicate> = trace
            .predicates_at(f.stage)
            .filter(|p| match &f.column {
                Some(c) if f.stage == Stage::PostAggregation || p.comparator == "expr" => col_in(c, &p.column),
                Some(c) => col_eq(c, &p.column),
                None => true,
            })
            .collect();
        let label = f.column.clone().unwrap_or_else(|| format!("step {}", f.step));
        if on_column.is_empty() {
            out.add(Invariant::Constraints, "missing filter", format!("no predicate on {label}"));
            continue;
        }
        let Some(cmp) = &f.comparator else {
            used.extend(on_column);
            continue;
        };
        let same_cmp: Vec<&Predicate> = on_column.iter().copied().filter(|p| &p.comparator == cmp).collect();
        if same_cmp.is_empty() {
            out.add(
                Invariant::Constraints,
                "comparator flip",
                format!("{label}: expected {cmp}, found {}", on_column[0].comparator),
            );
            continue;
        }
        match &f.value {
            Some(v) => match same_cmp.iter().find(|p| value_eq(cmp, v, &p.value)) {
                Some(p) => used.push(p),
                None => out.add(
                    Invariant::Constraints,
                    "value mismatch",
                    format!("{label} {cmp}: expected {v}, found {}", same_cmp[0].value),
                ),
            },
            None => used.extend(same_cmp),
        }
    }
    for p in &trace.predicates {
        if !used.contains(&p) {
            out.add(
                Invariant::Constraints,
                "unplanned filter",
                format!("{} {} {}", p.column, p.comparator, p.value).trim_end().to_string(),
            );
        }
    }
}

fn agg_matches(i: &AggregateIntent, a: &Aggregate) -> bool {
    if i.function != a.function || (i.distinct && !a.distinct) {
        return false;
    }
    match i.argument.as_deref() {
        Some("*") | None => i.function == "COUNT" || a.argument == "*",
        Some(col) => col_in(col, &a.argument) || (i.function == "COUNT" && a.argument == "*"),
    }
}

fn computation(intent: &PlanIntent, trace: &OperatorTrace, out: &mut Findings) {
    if intent.aggregates.is_empty() {
        for a in &trace.aggregates {
            out.add(Invariant::Computation, "unplanned aggregate", format!("{}({})", a.function, a.argument));
        }
        for g in &trace.group_dims {
            out.add(Invariant::Computation, "unplanned grouping", g.clone());
        }
    } else {
        for i in &intent.aggregates {
            if trace.aggregates.iter().any(|a| agg_matches(i, a)) {
                continue;
            }
            let arg = i.argument.clone().unwrap_or_else(|| "*".into());
            match trace.aggregates.iter().find(|a| col_in(&arg, &a.argument)) {
                Some(a) => out.add(
                    Invariant::Computation,
                    "aggregate substitution",
                    format!("substitution {}→{} on {arg}", i.function, a.function),
                ),
                None => out.add(Invariant::Computation, "missing aggregate", format!("{}({arg})", i.function)),
            }
        }
        for a in &trace.aggregates {
            if !intent.aggregates.iter().any(|i| agg_matches(i, a) || i.argument.as_deref().is_some_and(|c| col_in(c, &a.argument))) {
                out.add(Invariant::Computation, "unplanned aggregate", format!("{}({})", a.function, a.argument));
            }
        }
        let dim_eq = |p: &str, t: &str| col_eq(p, t) || col_eq(&format!("year({p})"), t);
        for d in &intent.group_dims {
            if !trace.group_dims.iter().any(|t| dim_eq(d, t)) {
                out.add(Invariant::Computation, "missing grouping", d.clone());
            }
        }
        for t in &trace.group_dims {
            if !intent.group_dims.iter().any(|d| dim_eq(d, t)) {
                out.add(Invariant::Computation, "extra grouping", t.clone());
            }
        }
    }
    for c in &intent.calculated {
        if !trace.columns.iter().any(|t| col_eq(c, t)) {
            out.add(Invariant::Computation, "missing calculation input", c.clone());
        }
    }
}

fn projection(intent: &PlanIntent, trace: &OperatorTrace, out: &mut Findings) {
    if !intent.outputs.is_empty() {
        let star = trace.projection.iter().any(|p| p.expression.ends_with('*') && p.aggregates.is_empty());
        for o in &intent.outputs {
            if !star && !trace.projection.iter().any(|p| p.columns.iter().any(|c| col_eq(o, c))) {
                out.add(Invariant::Projection, "missing output", o.clone());
            }
        }
        let planned = |c: &String| {
            intent.outputs.iter().any(|o| col_eq(o, c))
                || intent.group_dims.iter().any(|o| col_eq(o, c))
                || intent.aggregates.iter().any(|a| a.argument.as_ref().is_some_and(|o| col_eq(o, c)))
        };
        for p in &trace.projection {
            let ok = if p.aggregates.is_empty() {
                p.expression.ends_with('*') || p.columns.iter().any(planned)
            } else {
                p.aggregates.iter().all(|a| intent.aggregates.iter().any(|i| agg_matches(i, a)))
                    || p.columns.iter().any(planned)
            };
            if !ok {
                out.add(Invariant::Projection, "unplanned output", p.expression.clone());
            }
        }
    }
    for a in &intent.aliases {
        if !trace.projection.iter().any(|p| p.alias.as_ref().is_some_and(|x| x.eq_ignore_ascii_case(a))) {
            out.add(Invariant::Projection, "missing alias", a.clone());
        }
    }
}

/// Compares a parsed trace against the plan's intent.
pub fn audit_trace(intent: &PlanIntent, trace: &OperatorTrace) -> AuditReport {
    let mut f = Findings(Vec::new());
    topology(intent, trace, &mut f);
    constraints(intent, trace, &mut f);
    computation(intent, trace, &mut f);
    projection(intent, trace, &mut f);
    AuditReport::from_details(f.0)
}

/// Parses `sql` and checks it against `plan`. Each invariant gets its own
/// verdict; the query passes only when all four pass.
pub fn audit(sql: &SqlText, plan: &DialectAwarePlan, schema: Option<&SchemaCatalog>) -> Result<AuditReport, AuditError> {
    let stmts = parse_sql(sql)?;
    let trace = derive_trace(&stmts, schema);
    Ok(audit_trace(&extract_intent(plan, schema), &trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dialect;
    use crate::planner::{ColumnRef, LogicalPlan, MacroOperator, MacroOperatorKind};

    fn r(t: &str, c: &str, ty: &str) -> ColumnRef {
        ColumnRef {
            table: t.into(),
            column: c.into(),
            physical_type: ty.into(),
        }
    }

    fn running_plan() -> DialectAwarePlan {
        DialectAwarePlan::plain(
            LogicalPlan::new(vec![
                MacroOperator::new(
                    MacroOperatorKind::Src,
                    "link transactions to transaction_logs and users",
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
                    vec![r("transactions", "amount", "DECIMAL"), r("users", "username", "TEXT")],
                ),
                MacroOperator::new(
                    MacroOperatorKind::Org,
                    "show users.username and the total aliased as total_amount",
                    vec![r("users", "username", "TEXT"), r("transactions", "amount", "DECIMAL")],
                ),
            ]),
            Dialect::Mysql,
        )
    }

    const FAITHFUL: &str = "SELECT u.username, SUM(t.amount) AS total_amount FROM transactions t \
        JOIN transaction_logs l ON t.tx_id = l.tx_id JOIN users u ON t.user_id = u.user_id \
        WHERE l.action = 'viewed' GROUP BY u.username";

    fn run(sql: &str) -> AuditReport {
        audit(&SqlText::new(sql, Dialect::Mysql).unwrap(), &running_plan(), None).unwrap()
    }

    fn trace_of(sql: &str, d: Dialect) -> OperatorTrace {
        derive_trace(&parse_sql(&SqlText::new(sql, d).unwrap()).unwrap(), None)
    }

    #[test]
    fn faithful_query_passes() {
        let rep = run(FAITHFUL);
        assert!(rep.passed, "{:?}", rep.details);
    }

    #[test]
    fn sum_to_avg_fails_computation_only() {
        let rep = run(&FAITHFUL.replace("SUM(", "AVG("));
        assert_eq!(rep.failed(), [Invariant::Computation]);
        assert!(rep.details[0].message.contains("SUM→AVG"));
    }

    #[test]
    fn dropped_filter_fails_constraints_only() {
        let rep = run(&FAITHFUL.replace(" WHERE l.action = 'viewed'", ""));
        assert_eq!(rep.failed(), [Invariant::Constraints]);
    }

    #[test]
    fn union_is_unmodeled() {
        let rep = run(&format!("{FAITHFUL} UNION {FAITHFUL}"));
        assert_eq!(rep.verdict(Invariant::Topology), Verdict::Fail);
        assert_eq!(rep.details[0].kind, "unmodeled construct");
    }

    #[test]
    fn parse_error_has_position() {
        let e = audit(&SqlText::new("SELEC x FROM", Dialect::Mysql).unwrap(), &running_plan(), None).unwrap_err();
        assert!(matches!(e, AuditError::Parse { line: 1, .. }));
    }

    #[test]
    fn year_forms_normalize_alike() {
        let forms = [
            ("SELECT id FROM orders WHERE EXTRACT(YEAR FROM created_at) = 2017", Dialect::Postgresql),
            ("SELECT id FROM orders WHERE created_at BETWEEN '2017-01-01' AND '2017-12-31'", Dialect::Postgresql),
            ("SELECT id FROM orders WHERE YEAR(created_at) = 2017", Dialect::Mysql),
            ("SELECT id FROM orders WHERE strftime('%Y', created_at) = '2017'", Dialect::Sqlite),
            (
                "SELECT id FROM orders WHERE created_at >= DATE '2017-01-01' AND created_at < DATE '2018-01-01'",
                Dialect::Postgresql,
            ),
        ];
        let sets: Vec<_> = forms.iter().map(|(s, d)| trace_of(s, *d).predicates).collect();
        for s in &sets[1..] {
            assert_eq!(s, &sets[0]);
        }
        assert_eq!(sets[0].iter().next().unwrap().comparator, "year=");
    }

    #[test]
    fn no_where_means_no_predicates() {
        assert!(trace_of("SELECT a FROM t", Dialect::Sqlite).predicates.is_empty());
    }

    #[test]
    fn comparator_flip_is_named() {
        let rep = run(&FAITHFUL.replace("l.action = 'viewed'", "l.action <> 'viewed'"));
        assert_eq!(rep.failed(), [Invariant::Constraints]);
        assert_eq!(rep.details[0].kind, "comparator flip");
    }

    #[test]
    fn cte_tables_stay_visible() {
        let t = trace_of(
            "WITH v AS (SELECT tx_id FROM transaction_logs WHERE action = 'viewed') SELECT t.amount FROM transactions t JOIN v ON t.tx_id = v.tx_id",
            Dialect::Postgresql,
        );
        assert!(t.tables.contains("transaction_logs"));
        assert!(t.tables.contains("transactions"));
        assert!(!t.tables.contains("v"));
    }

    #[test]
    fn verdicts_serialize_lowercase() {
        let json = serde_json::to_string(&run(FAITHFUL).verdicts).unwrap();
        assert_eq!(json, r#"{"topology":"pass","constraints":"pass","computation":"pass","projection":"pass"}"#);
    }
}
