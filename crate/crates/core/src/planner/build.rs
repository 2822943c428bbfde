use super::parse::{blacklist_hits, parse_plan};
use super::{LogicalPlan, MacroOperatorKind, PlanError};
use crate::llm::{bindings, Prompter};
use crate::model::TranslationTask;

/// Repair prompts sent after the first reply fails to parse or validate.
pub const PLAN_RETRIES: usize = 2;

/// Position class in relational execution order; `None` for unconstrained
/// auxiliary steps. Filters, calculations and aggregations share a class:
/// a filter placed after an aggregation is a post-aggregation predicate.
fn phase(kind: MacroOperatorKind) -> Option<u8> {
    match kind {
        MacroOperatorKind::Src => Some(0),
        MacroOperatorKind::Flt | MacroOperatorKind::Cal | MacroOperatorKind::Agg => Some(1),
        MacroOperatorKind::Org => Some(2),
        MacroOperatorKind::Aux => None,
    }
}

/// Index pairs `(i, j)`, `i < j`, whose kinds appear out of execution order.
pub fn ordering_violations(plan: &LogicalPlan) -> Vec<(usize, usize)> {
    let ops = &plan.operators;
    let mut out = Vec::new();
    for i in 0..ops.len() {
        for j in i + 1..ops.len() {
            if let (Some(a), Some(b)) = (phase(ops[i].kind), phase(ops[j].kind)) {
                if a > b {
                    out.push((i, j));
                }
            }
        }
    }
    out
}

/// Stable reorder into execution order: sources first, organization last.
/// Auxiliary steps keep the phase of the step before them.
pub fn normalize_order(plan: &LogicalPlan) -> LogicalPlan {
    let mut last = 0u8;
    let mut keyed: Vec<(u8, usize, _)> = plan
        .operators
        .iter()
        .enumerate()
        .map(|(i, op)| {
            let p = phase(op.kind).unwrap_or(last);
            last = p;
            (p, i, op.clone())
        })
        .collect();
    keyed.sort_by_key(|(p, i, _)| (*p, *i));
    LogicalPlan::new(keyed.into_iter().map(|(_, _, op)| op).collect())
}

fn validate(reply: &str, task: &TranslationTask) -> Result<LogicalPlan, PlanError> {
    let plan = parse_plan(reply, &task.schema)?;
    for op in &plan.operators {
        let hits = blacklist_hits(&op.description);
        if !hits.is_empty() {
            return Err(PlanError::Blacklist(format!(
                "step {} uses {}",
                op.order_index + 1,
                hits.join(", ")
            )));
        }
    }
    if !ordering_violations(&plan).is_empty() {
        tracing::warn!("plan steps out of execution order; reordering");
        return Ok(normalize_order(&plan));
    }
    Ok(plan)
}

/// Asks the model for a plan and validates it, with up to
/// [`PLAN_RETRIES`] repair rounds.
pub fn build_logical_plan(task: &TranslationTask, llm: &Prompter<'_>) -> Result<LogicalPlan, PlanError> {
    let schema = task.schema.render_for_prompt();
    let mut reply = llm.ask(
        "plan",
        &bindings([
            ("dialect", task.dialect.display_name().to_string()),
            ("schema", schema.clone()),
            ("question", task.question.clone()),
        ]),
    )?;
    let mut attempt = 0;
    loop {
        match validate(&reply, task) {
            Ok(plan) => return Ok(plan),
            Err(e @ (PlanError::Format(_) | PlanError::Blacklist(_))) if attempt < PLAN_RETRIES => {
                attempt += 1;
                tracing::info!(attempt, error = %e, "plan repair");
                reply = llm.ask(
                    "plan_repair",
                    &bindings([
                        ("problem", e.to_string()),
                        ("previous", reply.trim().to_string()),
                        ("schema", schema.clone()),
                        ("question", task.question.clone()),
                    ]),
                )?;
            }
            Err(e) => return Err(e),
        }
    }
}
