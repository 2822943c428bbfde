//! Repair loop: executability recovery, plan-faithfulness verification and
//! knowledge consolidation around one translation task.

mod distill;
mod pipeline;
mod recover;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use distill::{distill_primitive, template_identifiers};
pub use pipeline::{
    run_pipeline, task_hash, write_dump, Ablation, ConsolidationEvent, PipelineDeps, RunOutcome, RunStatus,
};
pub use recover::{extract_sql, generate_initial, syntactic_recovery, verify_semantics, AideContext, Budget};

use crate::audit::{AuditError, AuditReport};
use crate::kb::KbError;
use crate::llm::LlmError;
use crate::model::{ExecutionOutcome, SqlText};
use crate::planner::PlanError;

#[derive(Debug, Error)]
pub enum AideError {
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("syntactic recovery budget spent")]
    RecoveryExhausted,
    #[error("semantic verification budget spent")]
    VerificationExhausted,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Audit(#[from] AuditError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairStage {
    Init,
    RuleFix,
    DeepFix,
    SemanticFix,
}

impl RepairStage {
    pub fn is_fix(self) -> bool {
        self != Self::Init
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepOutcome {
    Execution(ExecutionOutcome),
    Audit(AuditReport),
}

impl StepOutcome {
    pub fn executed(&self) -> bool {
        match self {
            Self::Execution(o) => o.is_success(),
            Self::Audit(_) => true,
        }
    }

    pub fn fully_passed(&self) -> bool {
        matches!(self, Self::Audit(r) if r.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub stage: RepairStage,
    pub sql: SqlText,
    pub outcome: StepOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applied_rule: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RepairTrajectory {
    pub steps: Vec<TrajectoryStep>,
    #[serde(rename = "final")]
    pub final_sql: Option<SqlText>,
}

impl RepairTrajectory {
    pub fn push(&mut self, stage: RepairStage, sql: SqlText, outcome: StepOutcome, applied_rule: Option<String>) {
        self.steps.push(TrajectoryStep {
            stage,
            sql,
            outcome,
            applied_rule,
        });
    }

    pub fn fix_count(&self) -> usize {
        self.steps.iter().filter(|s| s.stage.is_fix()).count()
    }

    pub fn stages(&self) -> Vec<RepairStage> {
        self.steps.iter().map(|s| s.stage).collect()
    }

    /// Sets `final` from the last step.
    fn seal(&mut self) {
        self.final_sql = self
            .steps
            .last()
            .filter(|s| s.outcome.fully_passed())
            .map(|s| s.sql.clone());
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.steps.first().is_some_and(|s| s.stage != RepairStage::Init) {
            v.push("first step is not init".to_string());
        }
        if self.steps.iter().skip(1).any(|s| s.stage == RepairStage::Init) {
            v.push("init after the first step".to_string());
        }
        let last_passes = self.steps.last().is_some_and(|s| s.outcome.fully_passed());
        if self.final_sql.is_some() != last_passes {
            v.push("final does not match the last outcome".to_string());
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DebugConfig {
    pub max_syntax_iters: usize,
    pub max_semantic_iters: usize,
    pub deterministic_mode: bool,
}

impl Default for DebugConfig {
    fn default() -> Self {
        Self {
            max_syntax_iters: 5,
            max_semantic_iters: 3,
            deterministic_mode: true,
        }
    }
}

impl DebugConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.max_syntax_iters == 0 {
            v.push("max_syntax_iters must be at least 1".to_string());
        }
        if self.max_semantic_iters == 0 {
            v.push("max_semantic_iters must be at least 1".to_string());
        }
        v
    }

    /// Upper bound on trajectory length.
    pub fn max_steps(&self) -> usize {
        1 + self.max_syntax_iters + 2 * self.max_semantic_iters
    }
}
