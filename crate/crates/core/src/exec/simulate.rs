use std::sync::{Arc, LazyLock};

use super::profile::GrammarProfile;
use super::rules::{DetectCtx, RuleCatalog};
use super::{Capability, Executor};
use crate::model::{Dialect, ErrorTrace, ExecutionOutcome, SchemaCatalog, SqlText};

static BUILTIN: LazyLock<Arc<RuleCatalog>> = LazyLock::new(|| Arc::new(RuleCatalog::builtin()));

/// The first problem found in a statement. `rule_id` is `None` for plain
/// syntax errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule_id: Option<String>,
    pub trace: ErrorTrace,
}

/// Validates SQL for one dialect without evaluating it.
pub struct Simulator {
    dialect: Dialect,
    profile: GrammarProfile,
    catalog: Arc<RuleCatalog>,
    schema: Option<SchemaCatalog>,
}

impl Simulator {
    pub fn builtin(dialect: Dialect) -> Self {
        Self::new(dialect, BUILTIN.clone())
    }

    pub fn new(dialect: Dialect, catalog: Arc<RuleCatalog>) -> Self {
        Self {
            dialect,
            profile: GrammarProfile::for_dialect(dialect),
            catalog,
            schema: None,
        }
    }

    /// Lets detectors tell schema identifiers from misquoted literals.
    pub fn with_schema(mut self, schema: SchemaCatalog) -> Self {
        self.schema = Some(schema);
        self
    }

    pub fn check(&self, sql: &str) -> Result<(), Violation> {
        let stmts = self.profile.parse(sql).map_err(|f| Violation {
            rule_id: None,
            trace: f.trace,
        })?;
        let ctx = DetectCtx {
            sql,
            stmts: &stmts,
            schema: self.schema.as_ref(),
        };
        for rule in self.catalog.rules().iter().filter(|r| r.applies_to(self.dialect)) {
            if let Some(hit) = rule.detect(&ctx) {
                return Err(Violation {
                    rule_id: Some(rule.rule_id.clone()),
                    trace: ErrorTrace {
                        vendor_code: rule.code(self.dialect),
                        message: rule.message(self.dialect, &hit),
                        failing_segment: hit.segment,
                    },
                });
            }
        }
        Ok(())
    }
}

impl Executor for Simulator {
    fn dialect(&self) -> Dialect {
        self.dialect
    }

    fn capability(&self) -> Capability {
        Capability::Simulated
    }

    fn execute(&self, sql: &SqlText) -> ExecutionOutcome {
        match self.check(&sql.text) {
            Ok(()) => ExecutionOutcome::Success { rows: Vec::new() },
            Err(v) => ExecutionOutcome::Error { trace: v.trace },
        }
    }
}

/// Simulates `sql` against the builtin catalog for its dialect.
pub fn simulate(sql: &SqlText) -> ExecutionOutcome {
    Simulator::builtin(sql.dialect).execute(sql)
}
