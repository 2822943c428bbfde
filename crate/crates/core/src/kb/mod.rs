//! Dialect knowledge base: canonical reference, function repository and
//! constraint repository, with construction from documentation and
//! consolidation of repair lessons.

use thiserror::Error;

use crate::llm::LlmError;
use crate::model::Dialect;

mod construct;
mod csr;
mod docs;
mod entries;
mod route;
mod seed;
mod store;

pub use construct::{
    build_from_corpus, builtin_seed_rules, generate_entries, has_contrastive_cue, map_syntax, BuildReport, Generated,
    MapTarget, MappedSection, SeedRule, SyntaxMapping, CONTRASTIVE_CUES,
};
pub use csr::{normalize_category, AtomicSyntaxPoint, CanonicalCategory, CanonicalReference};
pub use docs::{tag_documents, DocFormat, Section, TaggedCorpus};
pub use entries::{index_text, CaseExample, ConstraintEntry, FunctionEntry, KnowledgePrimitive, Origin};
pub use route::{primitive_text, route_primitive, MaterializedEntry, RouteDecision, RouteTarget};
pub use seed::{SeedConstraint, SeedFile, SeedFunction};
pub use store::{signature_pattern_matches, HintKb, Insertion, KbConfig, SharedKb, CSR_FILE, F_FILE, R_FILE};

#[derive(Debug, Error, PartialEq)]
pub enum KbError {
    #[error("I/O error: {0}")]
    Io(String),
    #[error("corrupt record in {file} line {line}: {message}")]
    CorruptRecord { file: String, line: usize, message: String },
    #[error("no function entries for {0}")]
    EmptyRepository(Dialect),
    #[error("unsupported document format {0:?}")]
    UnsupportedFormat(String),
    #[error("document error: {0}")]
    Document(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

impl From<std::io::Error> for KbError {
    fn from(e: std::io::Error) -> Self {
        KbError::Io(e.to_string())
    }
}
