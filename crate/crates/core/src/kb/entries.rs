use serde::{Deserialize, Serialize};

use crate::model::Dialect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    DistilledFromDocs,
    Consolidated,
}

/// Intent-keyed function knowledge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionEntry {
    pub id: String,
    pub dialect: Dialect,
    pub category: String,
    pub scenarios: Vec<String>,
    pub specification: String,
    pub implementation: String,
    pub embedding: Vec<f64>,
    pub origin: Origin,
}

impl FunctionEntry {
    /// Text the embedding indexes.
    pub fn index_text(&self) -> String {
        index_text(&self.category, &self.scenarios, &self.specification)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.scenarios.is_empty() || self.scenarios.iter().any(|s| s.trim().is_empty()) {
            v.push("scenarios must be non-empty".to_string());
        }
        if self.implementation.trim().is_empty() {
            v.push("implementation must be non-empty".to_string());
        }
        let norm = self.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            v.push(format!("embedding norm {norm} is not 1"));
        }
        v
    }
}

pub fn index_text(category: &str, scenarios: &[String], specification: &str) -> String {
    format!("{category} | {} | {specification}", scenarios.join("; "))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseExample {
    pub erroneous: String,
    pub correct: String,
}

/// Diagnostics-keyed structural rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintEntry {
    pub id: String,
    pub dialect: Dialect,
    pub rule_spec: String,
    /// Glob patterns over `code: template`, optionally followed by
    /// ` @ <segment glob>`.
    pub signature_patterns: Vec<String>,
    #[serde(default)]
    pub cases: Vec<CaseExample>,
    pub origin: Origin,
}

impl ConstraintEntry {
    pub fn match_text(&self) -> String {
        format!("{} | {}", self.rule_spec, self.signature_patterns.join("; "))
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.rule_spec.trim().is_empty() {
            v.push("rule_spec must be non-empty".to_string());
        }
        if self
            .cases
            .iter()
            .any(|c| c.erroneous.trim().is_empty() || c.correct.trim().is_empty())
        {
            v.push("case with an empty side".to_string());
        }
        v
    }
}

/// Distilled lesson of one successful repair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgePrimitive {
    /// `violation: <signature>` and `pattern: <malformed structure>` lines.
    pub incorrect_pattern: String,
    /// Verified SQL with the original identifiers.
    pub corrective_exemplar: String,
    pub root_cause: String,
    pub dialect: Dialect,
}

impl KnowledgePrimitive {
    pub fn is_valid(&self) -> bool {
        [&self.incorrect_pattern, &self.corrective_exemplar, &self.root_cause]
            .iter()
            .all(|s| !s.trim().is_empty())
    }

    fn field(&self, name: &str) -> Option<&str> {
        self.incorrect_pattern
            .lines()
            .find_map(|l| l.trim().strip_prefix(name))
            .map(str::trim)
            .filter(|s| !s.is_empty())
    }

    pub fn violation(&self) -> Option<&str> {
        self.field("violation:")
    }

    /// Malformed structure, or the whole incorrect pattern when unlabeled.
    pub fn malformed(&self) -> &str {
        self.field("pattern:").unwrap_or(self.incorrect_pattern.trim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitive_fields() {
        let g = KnowledgePrimitive {
            incorrect_pattern: "violation: ORA-00904: ⟨id⟩: invalid identifier\npattern: GROUP_CONCAT(ip)".into(),
            corrective_exemplar: "SELECT 1 FROM DUAL".into(),
            root_cause: "Oracle has no GROUP_CONCAT".into(),
            dialect: Dialect::Oracle,
        };
        assert!(g.is_valid());
        assert_eq!(g.violation(), Some("ORA-00904: ⟨id⟩: invalid identifier"));
        assert_eq!(g.malformed(), "GROUP_CONCAT(ip)");
    }
}
