//! Benchmark loading and Exec / Acc / DFC scoring.

mod run;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use run::{render_markdown, run_benchmark, write_report, BenchContext, PairResult};

use crate::exec::compare_result_sets;
use crate::model::{Dialect, ExecutionOutcome, SchemaElement};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("io: {0}")]
    Io(String),
    #[error("items.jsonl line {line}: {message}")]
    CorruptItem { line: usize, message: String },
    #[error("invalid pattern {pattern:?}: {message}")]
    InvalidPattern { pattern: String, message: String },
    #[error("item {qid} has no outcome for {dialect}")]
    MissingDialectOutcome { qid: String, dialect: Dialect },
}

impl From<std::io::Error> for EvalError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialectGold {
    pub gold_sql: String,
    #[serde(default)]
    pub feature_patterns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub qid: String,
    pub question: String,
    pub schema_ref: PathBuf,
    /// Statements run after the schema on live engines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_ref: Option<PathBuf>,
    pub gold: BTreeMap<Dialect, DialectGold>,
    #[serde(default)]
    pub gold_elements: Vec<SchemaElement>,
}

pub const ITEMS_FILE: &str = "items.jsonl";

/// Reads `<dir>/items.jsonl`. Blank lines are skipped.
pub fn load_items(dir: &Path) -> Result<Vec<BenchmarkItem>, EvalError> {
    let text = std::fs::read_to_string(dir.join(ITEMS_FILE))?;
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: BenchmarkItem = serde_json::from_str(line).map_err(|e| EvalError::CorruptItem {
            line: i + 1,
            message: e.to_string(),
        })?;
        if item.gold.is_empty() {
            return Err(EvalError::CorruptItem {
                line: i + 1,
                message: "no dialect gold".into(),
            });
        }
        items.push(item);
    }
    Ok(items)
}

static BUILTIN_PATTERNS: LazyLock<BTreeMap<String, Vec<String>>> =
    LazyLock::new(|| serde_json::from_str(include_str!("dfc_patterns.json")).expect("builtin patterns parse"));

/// Dialect-feature patterns keyed by rule id.
pub fn builtin_feature_patterns() -> &'static BTreeMap<String, Vec<String>> {
    &BUILTIN_PATTERNS
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Fraction of outcomes that executed.
pub fn score_exec(outcomes: &[ExecutionOutcome]) -> f64 {
    ratio(outcomes.iter().filter(|o| o.is_success()).count(), outcomes.len())
}

/// Result-set identity with the gold; a failed execution on either side is
/// incorrect.
pub fn acc_correct(got: &ExecutionOutcome, gold: &ExecutionOutcome, order_sensitive: bool) -> bool {
    match (got.rows(), gold.rows()) {
        (Some(g), Some(r)) => compare_result_sets(g, r, order_sensitive),
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccCase {
    pub got: ExecutionOutcome,
    pub gold: ExecutionOutcome,
    pub order_sensitive: bool,
}

pub fn score_acc(cases: &[AccCase]) -> f64 {
    ratio(
        cases.iter().filter(|c| acc_correct(&c.got, &c.gold, c.order_sensitive)).count(),
        cases.len(),
    )
}

fn compile(pattern: &str) -> Result<Regex, EvalError> {
    Regex::new(pattern).map_err(|e| EvalError::InvalidPattern {
        pattern: pattern.to_string(),
        message: e.to_string(),
    })
}

/// Recall of the gold's dialect features in the generated query; `None`
/// when the gold shows none of the patterns.
pub fn score_dfc(generated: &str, gold: &str, patterns: &[String]) -> Result<Option<f64>, EvalError> {
    let compiled = patterns.iter().map(|p| compile(p)).collect::<Result<Vec<_>, _>>()?;
    let in_gold: Vec<&Regex> = compiled.iter().filter(|r| r.is_match(gold)).collect();
    if in_gold.is_empty() {
        return Ok(None);
    }
    let hit = in_gold.iter().filter(|r| r.is_match(generated)).count();
    Ok(Some(ratio(hit, in_gold.len())))
}

/// Mean over applicable values.
pub fn mean_dfc(values: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellScore {
    pub exec: bool,
    /// `None` where accuracy cannot be measured.
    pub acc: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemOutcomes {
    pub qid: String,
    pub per_dialect: BTreeMap<Dialect, CellScore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverallScores {
    pub exec: f64,
    /// Present only when every cell of every item carries accuracy.
    pub acc: Option<f64>,
    pub items: usize,
}

/// All-or-nothing overall scores: an item counts only when it holds on
/// every evaluated dialect.
pub fn aggregate_overall(items: &[ItemOutcomes], dialects: &[Dialect]) -> Result<OverallScores, EvalError> {
    let mut exec = 0;
    let mut acc = 0;
    let mut acc_known = true;
    for item in items {
        let mut all_exec = true;
        let mut all_acc = true;
        for d in dialects {
            let cell = item.per_dialect.get(d).ok_or_else(|| EvalError::MissingDialectOutcome {
                qid: item.qid.clone(),
                dialect: *d,
            })?;
            all_exec &= cell.exec;
            match cell.acc {
                Some(a) => all_acc &= a,
                None => acc_known = false,
            }
        }
        exec += usize::from(all_exec);
        acc += usize::from(all_acc && all_exec);
    }
    Ok(OverallScores {
        exec: ratio(exec, items.len()),
        acc: acc_known.then(|| ratio(acc, items.len())),
        items: items.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialectScores {
    pub exec: f64,
    pub acc: Option<f64>,
    pub dfc: Option<f64>,
    pub items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_dialect: BTreeMap<Dialect, DialectScores>,
    pub overall: OverallScores,
    pub dialects: Vec<Dialect>,
}

impl MetricsReport {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let in_range = |x: f64| (0.0..=1.0).contains(&x);
        for (d, s) in &self.per_dialect {
            if !in_range(s.exec) || s.acc.is_some_and(|a| !in_range(a)) || s.dfc.is_some_and(|a| !in_range(a)) {
                v.push(format!("{d}: ratio out of range"));
            }
        }
        if !in_range(self.overall.exec) {
            v.push("overall exec out of range".into());
        }
        v
    }
}
