//! Knowledge-grounded, dialect-specific NL-to-SQL translation engine.

pub mod model;
pub mod llm;
pub mod exec;
pub mod sqlutil;
pub mod planner;
pub mod kb;
pub mod audit;
pub mod aide;
pub mod eval;
