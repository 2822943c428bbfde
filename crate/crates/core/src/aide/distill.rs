use regex::Regex;

use super::{AideError, RepairTrajectory, StepOutcome};
use crate::exec::{normalize_signature, ID};
use crate::kb::KnowledgePrimitive;
use crate::llm::{bindings, Prompter};
use crate::model::{ExecutionOutcome, SchemaCatalog};

/// Replaces schema table and column names with the identifier placeholder.
pub fn template_identifiers(text: &str, schema: &SchemaCatalog) -> String {
    let mut names: Vec<String> = schema
        .tables
        .iter()
        .flat_map(|t| std::iter::once(t.name.clone()).chain(t.columns.iter().map(|c| c.name.clone())))
        .filter(|n| !n.is_empty())
        .map(|n| regex::escape(&n))
        .collect();
    if names.is_empty() {
        return text.to_string();
    }
    names.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    names.dedup();
    let re = Regex::new(&format!(r"(?i)\b(?:{})\b", names.join("|"))).expect("escaped identifiers");
    re.replace_all(text, ID).into_owned()
}

fn labeled<'a>(reply: &'a str, label: &str) -> Option<&'a str> {
    reply.lines().find_map(|l| {
        let l = l.trim().trim_start_matches(['-', '*', ' ']);
        let (head, rest) = l.split_once(':')?;
        head.trim().eq_ignore_ascii_case(label).then(|| rest.trim()).filter(|s| !s.is_empty())
    })
}

/// Turns a verified repair into a reusable primitive. The incorrect pattern
/// carries the violation signature and the malformed fragment of the first
/// failing step, with schema identifiers templated; the exemplar is the
/// final query unchanged.
pub fn distill_primitive(
    traj: &RepairTrajectory,
    llm: &Prompter<'_>,
    schema: &SchemaCatalog,
) -> Result<KnowledgePrimitive, AideError> {
    let final_sql = traj
        .final_sql
        .as_ref()
        .ok_or_else(|| AideError::Precondition("trajectory has no verified final query".into()))?;
    if traj.fix_count() == 0 {
        return Err(AideError::Precondition("trajectory has no fix step".into()));
    }
    let dialect = final_sql.dialect;
    let failing = traj
        .steps
        .iter()
        .find(|s| matches!(s.outcome, StepOutcome::Execution(ExecutionOutcome::Error { .. })))
        .or_else(|| traj.steps.iter().find(|s| matches!(&s.outcome, StepOutcome::Audit(r) if !r.passed)))
        .ok_or_else(|| AideError::Precondition("trajectory has no failing step".into()))?;
    let (violation, error, malformed) = match &failing.outcome {
        StepOutcome::Execution(ExecutionOutcome::Error { trace }) => (
            normalize_signature(trace, dialect).to_string(),
            trace.to_string(),
            trace
                .failing_segment
                .as_ref()
                .map_or_else(|| failing.sql.text.clone(), |s| s.text.clone()),
        ),
        StepOutcome::Audit(r) => {
            let d = r.details.first();
            (
                d.map_or_else(|| "audit".to_string(), |d| format!("audit {}: {}", d.invariant, d.kind)),
                r.feedback(),
                failing.sql.text.clone(),
            )
        }
        StepOutcome::Execution(_) => unreachable!("failing step"),
    };
    let reply = llm.ask(
        "distill",
        &bindings([
            ("dialect", dialect.display_name().to_string()),
            ("failing_sql", failing.sql.text.clone()),
            ("error", error),
            ("final_sql", final_sql.text.clone()),
        ]),
    )?;
    let (Some(structure), Some(root_cause)) = (labeled(&reply, "incorrect_pattern"), labeled(&reply, "root_cause"))
    else {
        return Err(AideError::Generation("distill reply lacks incorrect_pattern or root_cause".into()));
    };
    Ok(KnowledgePrimitive {
        incorrect_pattern: format!(
            "violation: {violation}\npattern: {}\nstructure: {}",
            template_identifiers(&malformed, schema),
            template_identifiers(structure, schema)
        ),
        corrective_exemplar: final_sql.text.clone(),
        root_cause: template_identifiers(root_cause, schema),
        dialect,
    })
}
