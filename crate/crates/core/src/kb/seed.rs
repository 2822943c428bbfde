use serde::{Deserialize, Serialize};

use super::entries::{index_text, CaseExample, ConstraintEntry, FunctionEntry, Origin};
use super::store::{HintKb, Insertion};
use super::KbError;
use crate::llm::EmbeddingProvider;
use crate::model::Dialect;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedFunction {
    pub dialect: Dialect,
    pub category: String,
    pub scenarios: Vec<String>,
    pub specification: String,
    pub implementation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedConstraint {
    pub dialect: Dialect,
    pub rule_spec: String,
    pub signature_patterns: Vec<String>,
    #[serde(default)]
    pub cases: Vec<CaseExample>,
}

/// Hand-written entries without ids or embeddings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedFile {
    pub functions: Vec<SeedFunction>,
    pub rules: Vec<SeedConstraint>,
}

impl SeedFile {
    pub fn from_json_str(text: &str) -> Result<Self, KbError> {
        serde_json::from_str(text).map_err(|e| KbError::Document(format!("seed file: {e}")))
    }

    /// Embeds and inserts every entry, in file order.
    pub fn apply(&self, kb: &mut HintKb, embedder: &dyn EmbeddingProvider) -> Result<Vec<Insertion>, KbError> {
        let mut out = Vec::new();
        for f in &self.functions {
            let embedding = embedder.embed(&index_text(&f.category, &f.scenarios, &f.specification))?;
            out.push(kb.insert_function(FunctionEntry {
                id: String::new(),
                dialect: f.dialect,
                category: f.category.clone(),
                scenarios: f.scenarios.clone(),
                specification: f.specification.clone(),
                implementation: f.implementation.clone(),
                embedding,
                origin: Origin::DistilledFromDocs,
            }));
        }
        for r in &self.rules {
            out.push(kb.insert_rule(ConstraintEntry {
                id: String::new(),
                dialect: r.dialect,
                rule_spec: r.rule_spec.clone(),
                signature_patterns: r.signature_patterns.clone(),
                cases: r.cases.clone(),
                origin: Origin::DistilledFromDocs,
            }));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::HashingEmbedder;

    #[test]
    fn seed_entries_get_ids() {
        let seed = SeedFile::from_json_str(
            r#"{"functions":[{"dialect":"oracle","category":"String Manipulation","scenarios":["s"],"specification":"x","implementation":"LISTAGG(a, ',')"}],
                "rules":[{"dialect":"oracle","rule_spec":"r","signature_patterns":["ORA-00904: *"]}]}"#,
        )
        .unwrap();
        let mut kb = HintKb::default();
        let ins = seed.apply(&mut kb, &HashingEmbedder::default()).unwrap();
        assert_eq!(ins.iter().map(|i| i.id.as_str()).collect::<Vec<_>>(), ["oracle.f.0001", "oracle.r.0001"]);
        assert!(kb.functions[0].violations().is_empty());
    }
}
