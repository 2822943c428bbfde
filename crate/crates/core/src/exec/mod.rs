//! Dialect execution: a rule-driven simulator for engines that are not
//! available locally, an embedded SQLite adapter, error-signature
//! normalization and result-set comparison.

mod compare;
mod locate;
mod profile;
mod rules;
mod signature;
mod simulate;
mod sqlite;

use thiserror::Error;

use crate::model::{Dialect, ExecutionOutcome, SchemaCatalog, SqlText};

pub use compare::{cells_equal, compare_result_sets, has_top_level_order_by, REL_TOLERANCE};
pub use locate::find_segment;
pub use profile::{GrammarProfile, ParseFailure};
pub use rules::{Detector, DialectRule, PerDialect, RuleCatalog, RuleExample, RuleStage};
pub use signature::{normalize_signature, ErrorSignature, ID, LIT, NUM};
pub use simulate::{simulate, Simulator, Violation};
pub use sqlite::{execute_embedded, SqliteExecutor};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error("no embedded engine for dialect {0}")]
    AdapterUnavailable(Dialect),
    #[error("seeding failed: {0}")]
    Seed(String),
    #[error("rule catalog line {line}: {message}")]
    Catalog { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capability {
    Live,
    Simulated,
}

/// Runs SQL for one dialect.
pub trait Executor: Send + Sync {
    fn dialect(&self) -> Dialect;
    fn capability(&self) -> Capability;
    fn execute(&self, sql: &SqlText) -> ExecutionOutcome;
}

/// Live SQLite over the schema's empty tables, simulation for everything else.
pub fn executor_for(dialect: Dialect, schema: &SchemaCatalog) -> Box<dyn Executor> {
    if dialect == Dialect::Sqlite {
        if let Ok(exec) = SqliteExecutor::from_schema(schema) {
            return Box::new(exec);
        }
    }
    Box::new(Simulator::builtin(dialect).with_schema(schema.clone()))
}
