use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::distill::distill_primitive;
use super::recover::{generate_initial, syntactic_recovery, verify_semantics, AideContext, Budget};
use super::{AideError, DebugConfig, RepairStage, RepairTrajectory, StepOutcome};
use crate::audit::{audit, AuditReport};
use crate::exec::{executor_for, Executor};
use crate::kb::{route_primitive, KbConfig, KnowledgePrimitive, RouteTarget, SharedKb};
use crate::llm::{bindings, ChatBackend, EmbeddingProvider, Exchange, Prompter, TemplateSet, TranscriptBackend};
use crate::model::{validate_task, SqlText, TranslationTask};
use crate::planner::{
    build_logical_plan, label_operators, map_functional_categories, mine_implicit_logic, DialectAwarePlan, LabelConfig,
};

/// Variant switches. Each removes one part of the pipeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Generate directly from the question, without a logical plan.
    pub no_plan: bool,
    /// No knowledge-base retrieval and no consolidation.
    pub no_kb: bool,
    /// Stop after the first draft.
    pub no_correction: bool,
}

pub struct PipelineDeps<'a> {
    pub llm: &'a dyn ChatBackend,
    pub templates: &'a TemplateSet,
    pub embedder: &'a dyn EmbeddingProvider,
    pub kb: &'a SharedKb,
    pub kb_config: KbConfig,
    pub label: LabelConfig,
    pub debug: DebugConfig,
    pub ablation: Ablation,
    /// Defaults to the dialect's embedded engine or simulator.
    pub executor: Option<&'a dyn Executor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Executes and passes every audit invariant.
    Verified,
    /// Executes; no plan was available to audit against.
    Executed,
    /// The first draft was kept without repair and does not fully pass.
    Unrepaired,
    RecoveryExhausted,
    VerificationExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationEvent {
    pub primitive: KnowledgePrimitive,
    pub target: RouteTarget,
    pub similarity: f64,
    pub entry_id: String,
    pub merged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub task_hash: String,
    pub status: RunStatus,
    pub passed: bool,
    /// Final query, or the best candidate when not verified.
    pub final_sql: Option<SqlText>,
    pub stages: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<DialectAwarePlan>,
    pub retrieved_functions: Vec<String>,
    pub trajectory: RepairTrajectory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditReport>,
    pub consolidation: Vec<ConsolidationEvent>,
    pub transcript: Vec<Exchange>,
}

impl RunOutcome {
    pub fn repair_stages(&self) -> Vec<RepairStage> {
        self.trajectory.stages()
    }
}

/// Short content hash of a task, used to name trajectory dumps.
pub fn task_hash(task: &TranslationTask) -> String {
    let json = serde_json::to_string(task).expect("task serializes");
    hex::encode(&Sha256::digest(json.as_bytes())[..8])
}

/// Last executable query, else the last query.
fn best_candidate(traj: &RepairTrajectory) -> Option<SqlText> {
    traj.final_sql.clone().or_else(|| {
        traj.steps
            .iter()
            .rev()
            .find(|s| s.outcome.executed())
            .or(traj.steps.last())
            .map(|s| s.sql.clone())
    })
}

/// Plans, generates, repairs, verifies and, after a verified repair,
/// consolidates what was learned. Budget exhaustion is reported through
/// `status`, with the trajectory kept for inspection.
pub fn run_pipeline(task: &TranslationTask, deps: &PipelineDeps<'_>) -> Result<RunOutcome, AideError> {
    let problems = validate_task(task);
    if !problems.is_empty() {
        return Err(AideError::Precondition(problems.join("; ")));
    }
    let problems = deps.debug.violations();
    if !problems.is_empty() {
        return Err(AideError::Precondition(problems.join("; ")));
    }
    let transcript = TranscriptBackend::new(deps.llm);
    let prompter = Prompter::new(&transcript, deps.templates);
    let owned_executor;
    let executor: &dyn Executor = match deps.executor {
        Some(e) => e,
        None => {
            owned_executor = executor_for(task.dialect, &task.schema);
            owned_executor.as_ref()
        }
    };
    let ab = deps.ablation;
    let ctx = AideContext {
        prompter,
        embedder: deps.embedder,
        kb: deps.kb,
        kb_config: &deps.kb_config,
        executor,
        schema: &task.schema,
        use_kb: !ab.no_kb,
    };
    let mut stages: Vec<String> = Vec::new();
    let mut stage = |s: &str| stages.push(s.to_string());

    let mut plan = None;
    let mut retrieved = Vec::new();
    let initial = if ab.no_plan {
        stage("direct_generate");
        let reply = prompter.ask(
            "direct_generate",
            &bindings([
                ("dialect", task.dialect.display_name().to_string()),
                ("schema", task.schema.render_for_prompt()),
                ("question", task.question.clone()),
            ]),
        )?;
        let sql = super::extract_sql(&reply).ok_or_else(|| AideError::Generation("direct_generate: no SQL".into()))?;
        SqlText::new(sql, task.dialect).map_err(|e| AideError::Generation(e.to_string()))?
    } else {
        stage("plan");
        let logical = build_logical_plan(task, &prompter)?;
        stage("implicit_logic");
        let logical = mine_implicit_logic(&logical, &task.schema, &prompter)?;
        stage("label");
        let logical = label_operators(&logical, &task.schema, &deps.label);
        stage("categories");
        let csr = deps.kb.read().expect("knowledge base lock").csr.clone();
        let p = map_functional_categories(&logical, &csr, &prompter, task.dialect)?;
        if !ab.no_kb {
            stage("retrieve");
        }
        stage("generate");
        let (sql, ids) = generate_initial(&ctx, &p, &task.question)?;
        retrieved = ids;
        plan = Some(p);
        sql
    };

    let mut traj = RepairTrajectory::default();
    let outcome = executor.execute(&initial);
    traj.push(RepairStage::Init, initial, StepOutcome::Execution(outcome), None);
    let mut budget = Budget {
        syntax: deps.debug.max_syntax_iters,
        semantic: deps.debug.max_semantic_iters,
    };

    let mut status = if ab.no_correction {
        if let (Some(p), true) = (&plan, traj.steps[0].outcome.executed()) {
            stage("audit");
            let report = audit(&traj.steps[0].sql, p, Some(&task.schema))?;
            traj.steps[0].outcome = StepOutcome::Audit(report);
            traj.seal();
        }
        match (&plan, traj.steps[0].outcome.executed()) {
            _ if traj.final_sql.is_some() => RunStatus::Verified,
            (None, true) => RunStatus::Executed,
            _ => RunStatus::Unrepaired,
        }
    } else {
        stage("recover");
        match syntactic_recovery(&ctx, plan.as_ref(), &mut traj, &mut budget, deps.debug.max_syntax_iters) {
            Err(AideError::RecoveryExhausted) => RunStatus::RecoveryExhausted,
            Err(e) => return Err(e),
            Ok(_) => match &plan {
                None => RunStatus::Executed,
                Some(p) => {
                    stage("verify");
                    match verify_semantics(&ctx, p, &mut traj, &mut budget) {
                        Ok(_) => RunStatus::Verified,
                        Err(AideError::RecoveryExhausted) => RunStatus::RecoveryExhausted,
                        Err(AideError::VerificationExhausted) => RunStatus::VerificationExhausted,
                        Err(e) => return Err(e),
                    }
                }
            },
        }
    };
    if traj.final_sql.is_none() && status == RunStatus::Verified {
        status = RunStatus::VerificationExhausted;
    }

    let mut consolidation = Vec::new();
    if status == RunStatus::Verified && traj.fix_count() > 0 && !ab.no_kb {
        stage("consolidate");
        let p = plan.as_ref().expect("verified runs have a plan");
        let primitive = distill_primitive(&traj, &prompter, &task.schema)?;
        let decision = route_primitive(&primitive, p, deps.embedder, deps.kb_config.route_threshold)?;
        let inserted = deps.kb.write().expect("knowledge base lock").commit(&decision);
        consolidation.push(ConsolidationEvent {
            primitive,
            target: decision.target,
            similarity: decision.similarity,
            entry_id: inserted.id,
            merged: inserted.merged,
        });
    }

    let audit_report = traj.steps.iter().rev().find_map(|s| match &s.outcome {
        StepOutcome::Audit(r) => Some(r.clone()),
        StepOutcome::Execution(_) => None,
    });
    Ok(RunOutcome {
        task_hash: task_hash(task),
        passed: matches!(status, RunStatus::Verified | RunStatus::Executed),
        status,
        final_sql: best_candidate(&traj),
        stages,
        plan,
        retrieved_functions: retrieved,
        trajectory: traj,
        audit: audit_report,
        consolidation,
        transcript: transcript.take(),
    })
}

/// Writes the run as pretty JSON to `<dir>/<task hash>.json`. With
/// `redact`, prompt and reply texts are blanked.
pub fn write_dump(outcome: &RunOutcome, dir: &Path, redact: bool) -> std::io::Result<PathBuf> {
    let mut out = outcome.clone();
    if redact {
        for e in &mut out.transcript {
            e.prompt = "[redacted]".into();
            e.reply = "[redacted]".into();
        }
    }
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.json", outcome.task_hash));
    let mut text = serde_json::to_string_pretty(&out).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}
