use std::collections::BTreeSet;

use super::{AideError, RepairStage, RepairTrajectory, StepOutcome};
use crate::audit::audit;
use crate::exec::{normalize_signature, Executor};
use crate::kb::{ConstraintEntry, FunctionEntry, KbConfig, KbError, SharedKb};
use crate::llm::{bindings, EmbeddingProvider, Prompter};
use crate::model::{ErrorTrace, ExecutionOutcome, SchemaCatalog, SqlText};
use crate::planner::DialectAwarePlan;

const GENERATION_RETRIES: usize = 2;

/// Everything the repair loop reads.
#[derive(Clone, Copy)]
pub struct AideContext<'a> {
    pub prompter: Prompter<'a>,
    pub embedder: &'a dyn EmbeddingProvider,
    pub kb: &'a SharedKb,
    pub kb_config: &'a KbConfig,
    pub executor: &'a dyn Executor,
    pub schema: &'a SchemaCatalog,
    /// Retrieval from the knowledge base; off for the no-KB variant.
    pub use_kb: bool,
}

/// Remaining fix steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub syntax: usize,
    pub semantic: usize,
}

/// SQL from a model reply: the first fenced block if any, trimmed, without
/// a trailing semicolon.
pub fn extract_sql(reply: &str) -> Option<String> {
    let body = match reply.find("```") {
        Some(start) => {
            let rest = &reply[start + 3..];
            let rest = rest.split_once('\n').map_or(rest, |(tag, body)| if tag.trim().contains(' ') { rest } else { body });
            rest.split("```").next().unwrap_or(rest)
        }
        None => reply,
    };
    let sql = body.trim().trim_end_matches(';').trim();
    (!sql.is_empty()).then(|| sql.to_string())
}

fn ask_sql(ctx: &AideContext, template: &str, b: &std::collections::BTreeMap<&str, String>) -> Result<SqlText, AideError> {
    let dialect = ctx.executor.dialect();
    for _ in 0..=GENERATION_RETRIES {
        if let Some(sql) = extract_sql(&ctx.prompter.ask(template, b)?) {
            return SqlText::new(sql, dialect).map_err(|e| AideError::Generation(e.to_string()));
        }
    }
    Err(AideError::Generation(format!("{template}: no SQL in reply")))
}

fn render_functions(entries: &[FunctionEntry]) -> String {
    if entries.is_empty() {
        return "(none)".to_string();
    }
    entries
        .iter()
        .map(|e| format!("- [{}] {}\n{}", e.category, e.specification, e.implementation))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_cases(rule: &ConstraintEntry) -> String {
    rule.cases
        .iter()
        .map(|c| format!("Wrong: {}\nRight: {}\n", c.erroneous, c.correct))
        .collect()
}

/// Top-k function entries per enriched operator, first occurrence kept.
fn retrieve_templates(ctx: &AideContext, plan: &DialectAwarePlan) -> Result<Vec<FunctionEntry>, AideError> {
    let kb = ctx.kb.read().expect("knowledge base lock");
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for op in &plan.enriched {
        match kb.retrieve_functions(op, plan.dialect, ctx.kb_config.k, ctx.embedder) {
            Ok(hits) => {
                for (_, e) in hits {
                    if seen.insert(e.id.clone()) {
                        out.push(e.clone());
                    }
                }
            }
            Err(KbError::EmptyRepository(_)) => break,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

/// Knowledge-grounded first draft. Retrieved entries appear verbatim in the
/// prompt; returns the query and the ids used.
pub fn generate_initial(
    ctx: &AideContext,
    plan: &DialectAwarePlan,
    question: &str,
) -> Result<(SqlText, Vec<String>), AideError> {
    let entries = if ctx.use_kb { retrieve_templates(ctx, plan)? } else { Vec::new() };
    let sql = ask_sql(
        ctx,
        "generate_sql",
        &bindings([
            ("dialect", plan.dialect.display_name().to_string()),
            ("schema", ctx.schema.render_for_prompt()),
            ("question", question.to_string()),
            ("plan", plan.render()),
            ("functions", render_functions(&entries)),
        ]),
    )?;
    Ok((sql, entries.into_iter().map(|e| e.id).collect()))
}

/// Plan lines the deep diagnosis must preserve.
fn sensitive_lines(plan: Option<&DialectAwarePlan>) -> String {
    let Some(plan) = plan else {
        return "(no plan)".to_string();
    };
    let lines: Vec<String> = plan
        .base
        .operators
        .iter()
        .filter(|o| o.sensitive)
        .map(|o| o.render_line())
        .collect();
    if lines.is_empty() {
        plan.base.render()
    } else {
        lines.join("\n")
    }
}

fn last_error(traj: &RepairTrajectory) -> Option<ErrorTrace> {
    match &traj.steps.last()?.outcome {
        StepOutcome::Execution(ExecutionOutcome::Error { trace }) => Some(trace.clone()),
        _ => None,
    }
}

/// Repairs the trajectory's last query until it executes, spending at most
/// `max_steps` fix steps from `budget.syntax`. A retrieved rule is tried
/// first; when none matches or the rewrite still fails, one deep diagnosis
/// follows.
pub fn syntactic_recovery(
    ctx: &AideContext,
    plan: Option<&DialectAwarePlan>,
    traj: &mut RepairTrajectory,
    budget: &mut Budget,
    max_steps: usize,
) -> Result<SqlText, AideError> {
    let dialect = ctx.executor.dialect();
    let mut steps = 0;
    let dialect_name = dialect.display_name().to_string();
    loop {
        let current = traj
            .steps
            .last()
            .ok_or_else(|| AideError::Precondition("empty trajectory".into()))?
            .sql
            .clone();
        let Some(trace) = last_error(traj) else {
            return Ok(current);
        };
        if budget.syntax == 0 || steps == max_steps {
            return Err(AideError::RecoveryExhausted);
        }
        let mut rule_failed = false;
        if ctx.use_kb {
            let sig = normalize_signature(&trace, dialect);
            let segment = trace.failing_segment.as_ref().map(|s| s.text.clone()).unwrap_or_default();
            let rule = {
                let kb = ctx.kb.read().expect("knowledge base lock");
                match kb.retrieve_rules(&sig, &segment, dialect, ctx.kb_config.tau_rule, ctx.embedder) {
                    Ok(r) => r.cloned(),
                    Err(KbError::EmptyRepository(_)) => None,
                    Err(e) => return Err(e.into()),
                }
            };
            if let Some(rule) = rule {
                let revised = ask_sql(
                    ctx,
                    "apply_rule",
                    &bindings([
                        ("dialect", dialect_name.clone()),
                        ("sql", current.text.clone()),
                        ("error", trace.to_string()),
                        ("rule", rule.rule_spec.clone()),
                        ("cases", render_cases(&rule)),
                    ]),
                )?;
                let outcome = ctx.executor.execute(&revised);
                let ok = outcome.is_success();
                traj.push(RepairStage::RuleFix, revised.clone(), StepOutcome::Execution(outcome), Some(rule.id));
                budget.syntax -= 1;
                steps += 1;
                if ok {
                    return Ok(revised);
                }
                if budget.syntax == 0 || steps == max_steps {
                    return Err(AideError::RecoveryExhausted);
                }
                rule_failed = true;
            }
        }
        let flawed = traj.steps.last().unwrap().sql.clone();
        let newest = if rule_failed { last_error(traj).unwrap_or(trace) } else { trace };
        let revised = ask_sql(
            ctx,
            "deep_diagnose",
            &bindings([
                ("dialect", dialect_name.clone()),
                ("sql", flawed.text.clone()),
                ("error", newest.to_string()),
                ("plan", sensitive_lines(plan)),
            ]),
        )?;
        let outcome = ctx.executor.execute(&revised);
        traj.push(RepairStage::DeepFix, revised, StepOutcome::Execution(outcome), None);
        budget.syntax -= 1;
        steps += 1;
    }
}

/// Audits the trajectory's last (executable) query against the plan and
/// asks for targeted repairs until all invariants hold. A repair that
/// stops executing gets one recovery step before the next audit.
pub fn verify_semantics(
    ctx: &AideContext,
    plan: &DialectAwarePlan,
    traj: &mut RepairTrajectory,
    budget: &mut Budget,
) -> Result<SqlText, AideError> {
    let dialect_name = plan.dialect.display_name().to_string();
    loop {
        let last = traj
            .steps
            .last_mut()
            .ok_or_else(|| AideError::Precondition("empty trajectory".into()))?;
        if !last.outcome.executed() {
            return Err(AideError::Precondition("query does not execute".into()));
        }
        let report = audit(&last.sql, plan, Some(ctx.schema))?;
        let passed = report.passed;
        let feedback = report.feedback();
        last.outcome = StepOutcome::Audit(report);
        let current = last.sql.clone();
        traj.seal();
        if passed {
            return Ok(current);
        }
        if budget.semantic == 0 {
            return Err(AideError::VerificationExhausted);
        }
        budget.semantic -= 1;
        let revised = ask_sql(
            ctx,
            "semantic_fix",
            &bindings([
                ("dialect", dialect_name.clone()),
                ("sql", current.text.clone()),
                ("report", feedback),
                ("plan", plan.render()),
            ]),
        )?;
        let outcome = ctx.executor.execute(&revised);
        traj.push(RepairStage::SemanticFix, revised, StepOutcome::Execution(outcome), None);
        if !traj.steps.last().unwrap().outcome.executed() {
            let mut one = Budget { syntax: 1, semantic: 0 };
            syntactic_recovery(ctx, Some(plan), traj, &mut one, 1)?;
        }
    }
}
