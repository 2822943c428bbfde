//! Natural-language logical query plans: construction, implicit-logic
//! mining, dialect-sensitivity labeling and category mapping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::LlmError;
use crate::model::Dialect;

mod build;
mod categories;
mod implicit;
mod label;
mod parse;

pub use build::{build_logical_plan, normalize_order, ordering_violations, PLAN_RETRIES};
pub use categories::{map_functional_categories, AUX_CATEGORY, CATEGORY_RETRIES};
pub use implicit::{has_numeric_intent, is_textual_type, looks_decorated_numeric, mine_implicit_logic};
pub use label::{category_check, label_operators, lexicon_check, type_check, LabelConfig};
pub use parse::{blacklist_hits, parse_plan, BLACKLIST};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("plan format error: {0}")]
    Format(String),
    #[error("SQL tokens in plan description: {0}")]
    Blacklist(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MacroOperatorKind {
    Src,
    Flt,
    Cal,
    Agg,
    Org,
    Aux,
}

impl MacroOperatorKind {
    pub const ALL: [MacroOperatorKind; 6] = [Self::Src, Self::Flt, Self::Cal, Self::Agg, Self::Org, Self::Aux];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Src => "SRC",
            Self::Flt => "FLT",
            Self::Cal => "CAL",
            Self::Agg => "AGG",
            Self::Org => "ORG",
            Self::Aux => "AUX",
        }
    }
}

impl FromStr for MacroOperatorKind {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| PlanError::Format(format!("unknown operator kind {s:?}")))
    }
}

impl fmt::Display for MacroOperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Schema column touched by an operator, annotated with its physical type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
    #[serde(rename = "type")]
    pub physical_type: String,
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{} ({})", self.table, self.column, self.physical_type)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroOperator {
    pub kind: MacroOperatorKind,
    pub description: String,
    #[serde(default)]
    pub refs: Vec<ColumnRef>,
    #[serde(default)]
    pub sensitive: bool,
    pub order_index: usize,
}

impl MacroOperator {
    pub fn new(kind: MacroOperatorKind, description: impl Into<String>, refs: Vec<ColumnRef>) -> Self {
        Self {
            kind,
            description: description.into(),
            refs,
            sensitive: false,
            order_index: 0,
        }
    }

    /// `[k] KIND | description | t.c (TYPE); ...` with 1-based `k`.
    pub fn render_line(&self) -> String {
        let refs: Vec<String> = self.refs.iter().map(|r| r.to_string()).collect();
        format!(
            "[{}] {} | {} | {}",
            self.order_index + 1,
            self.kind,
            self.description,
            refs.join("; ")
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalPlan {
    pub operators: Vec<MacroOperator>,
}

impl LogicalPlan {
    pub fn new(operators: Vec<MacroOperator>) -> Self {
        let mut plan = Self { operators };
        plan.renumber();
        plan
    }

    pub fn renumber(&mut self) {
        for (i, op) in self.operators.iter_mut().enumerate() {
            op.order_index = i;
        }
    }

    pub fn render(&self) -> String {
        self.operators
            .iter()
            .map(MacroOperator::render_line)
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn sensitive_count(&self) -> usize {
        self.operators.iter().filter(|o| o.sensitive).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardizedOperator {
    pub category: String,
    pub standard_description: String,
    pub source_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialectAwarePlan {
    #[serde(flatten)]
    pub base: LogicalPlan,
    pub enriched: Vec<StandardizedOperator>,
    pub dialect: Dialect,
}

impl DialectAwarePlan {
    /// Plan without any sensitive operators or enrichment.
    pub fn plain(base: LogicalPlan, dialect: Dialect) -> Self {
        Self {
            base,
            enriched: Vec::new(),
            dialect,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    /// Prompt form: operator lines, each sensitive one followed by its
    /// standardized category.
    pub fn render(&self) -> String {
        let mut out = Vec::new();
        for op in &self.base.operators {
            out.push(op.render_line());
            for e in self.enriched.iter().filter(|e| e.source_index == op.order_index) {
                out.push(format!("    <{}> {}", e.category, e.standard_description));
            }
        }
        out.join("\n")
    }

    pub fn enriched_for(&self, index: usize) -> Option<&StandardizedOperator> {
        self.enriched.iter().find(|e| e.source_index == index)
    }
}
