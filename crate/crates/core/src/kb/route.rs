use serde::{Deserialize, Serialize};

use super::entries::{index_text, CaseExample, ConstraintEntry, FunctionEntry, KnowledgePrimitive, Origin};
use super::store::{HintKb, Insertion};
use super::KbError;
use crate::llm::{cosine, EmbeddingProvider};
use crate::planner::{DialectAwarePlan, AUX_CATEGORY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteTarget {
    ToFFunc,
    ToRRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaterializedEntry {
    Function(FunctionEntry),
    Constraint(ConstraintEntry),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub target: RouteTarget,
    pub similarity: f64,
    pub entry: MaterializedEntry,
}

/// Text of a primitive compared against the plan.
pub fn primitive_text(g: &KnowledgePrimitive) -> String {
    format!("{}\n{}", g.incorrect_pattern, g.root_cause)
}

/// Glob that matches the signature text literally (wildcards in the text
/// are widened to single-character matches).
fn literal_glob(s: &str) -> String {
    s.replace('*', "?")
}

/// Sends a primitive to the function repository when it is close to the
/// plan's intent (similarity at or above `threshold`), else to the rule
/// repository. Pure: the knowledge base is untouched.
pub fn route_primitive(
    g: &KnowledgePrimitive,
    plan: &DialectAwarePlan,
    embedder: &dyn EmbeddingProvider,
    threshold: f64,
) -> Result<RouteDecision, KbError> {
    if !g.is_valid() {
        return Err(KbError::Document("knowledge primitive has an empty field".into()));
    }
    let gv = embedder.embed(&primitive_text(g))?;
    let similarity = cosine(&gv, &embedder.embed(&plan.to_json())?);
    if similarity >= threshold {
        // Category of the enriched operator closest to the primitive.
        let mut best: Option<(f64, &crate::planner::StandardizedOperator)> = None;
        for e in &plan.enriched {
            let s = cosine(&gv, &embedder.embed(&format!("{} | {}", e.category, e.standard_description))?);
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, e));
            }
        }
        let (category, specification) = match best {
            Some((_, e)) => (e.category.clone(), e.standard_description.clone()),
            None => (AUX_CATEGORY.to_string(), g.root_cause.clone()),
        };
        let scenarios = vec![g.root_cause.clone()];
        let embedding = embedder.embed(&index_text(&category, &scenarios, &specification))?;
        return Ok(RouteDecision {
            target: RouteTarget::ToFFunc,
            similarity,
            entry: MaterializedEntry::Function(FunctionEntry {
                id: String::new(),
                dialect: g.dialect,
                category,
                scenarios,
                specification,
                implementation: g.corrective_exemplar.clone(),
                embedding,
                origin: Origin::Consolidated,
            }),
        });
    }
    Ok(RouteDecision {
        target: RouteTarget::ToRRule,
        similarity,
        entry: MaterializedEntry::Constraint(ConstraintEntry {
            id: String::new(),
            dialect: g.dialect,
            rule_spec: g.root_cause.clone(),
            signature_patterns: g.violation().map(|v| vec![literal_glob(v)]).unwrap_or_default(),
            cases: vec![CaseExample {
                erroneous: g.malformed().to_string(),
                correct: g.corrective_exemplar.clone(),
            }],
            origin: Origin::Consolidated,
        }),
    })
}

impl HintKb {
    /// Stores a routed entry, merging with an existing duplicate.
    pub fn commit(&mut self, decision: &RouteDecision) -> Insertion {
        match &decision.entry {
            MaterializedEntry::Function(f) => self.insert_function(f.clone()),
            MaterializedEntry::Constraint(r) => self.insert_rule(r.clone()),
        }
    }
}
