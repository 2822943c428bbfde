use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use wildmatch::WildMatch;

use super::entries::{ConstraintEntry, FunctionEntry, Origin};
use super::{CanonicalReference, KbError};
use crate::exec::ErrorSignature;
use crate::llm::{cosine, EmbeddingProvider};
use crate::model::Dialect;
use crate::planner::StandardizedOperator;

pub const CSR_FILE: &str = "csr.json";
pub const F_FILE: &str = "f_func.jsonl";
pub const R_FILE: &str = "r_rule.jsonl";

/// Retrieval and routing thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KbConfig {
    pub tau_map: f64,
    pub tau_rule: f64,
    pub k: usize,
    pub route_threshold: f64,
}

impl Default for KbConfig {
    fn default() -> Self {
        Self {
            tau_map: 0.35,
            tau_rule: 0.5,
            k: 3,
            route_threshold: 0.75,
        }
    }
}

/// Result of adding an entry: the id it lives under and whether it merged
/// into an existing entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insertion {
    pub id: String,
    pub merged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HintKb {
    pub csr: CanonicalReference,
    pub functions: Vec<FunctionEntry>,
    pub rules: Vec<ConstraintEntry>,
}

pub type SharedKb = Arc<RwLock<HintKb>>;

impl Default for HintKb {
    fn default() -> Self {
        Self::new(CanonicalReference::builtin())
    }
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn next_id(dialect: Dialect, track: char, existing: impl Iterator<Item = String>) -> String {
    let prefix = format!("{}.{track}.", dialect.name());
    let n = existing
        .filter_map(|id| id.strip_prefix(&prefix).and_then(|n| n.parse::<usize>().ok()))
        .max()
        .map_or(1, |m| m + 1);
    format!("{prefix}{n:04}")
}

/// Whether `pattern` matches `code: template` and, when the pattern carries
/// ` @ <glob>`, the failing segment. Case-insensitive.
pub fn signature_pattern_matches(pattern: &str, signature: &ErrorSignature, segment: &str) -> bool {
    let (sig_glob, seg_glob) = match pattern.split_once(" @ ") {
        Some((s, g)) => (s.trim(), Some(g.trim())),
        None => (pattern.trim(), None),
    };
    WildMatch::new_case_insensitive(sig_glob).matches(&signature.to_string())
        && seg_glob.is_none_or(|g| WildMatch::new_case_insensitive(g).matches(segment.trim()))
}

impl HintKb {
    pub fn new(csr: CanonicalReference) -> Self {
        Self {
            csr,
            functions: Vec::new(),
            rules: Vec::new(),
        }
    }

    pub fn shared(self) -> SharedKb {
        Arc::new(RwLock::new(self))
    }

    pub fn function(&self, id: &str) -> Option<&FunctionEntry> {
        self.functions.iter().find(|e| e.id == id)
    }

    pub fn rule(&self, id: &str) -> Option<&ConstraintEntry> {
        self.rules.iter().find(|e| e.id == id)
    }

    /// Adds an entry under a fresh id unless one with the same dialect,
    /// category and implementation exists.
    pub fn insert_function(&mut self, mut entry: FunctionEntry) -> Insertion {
        let key = (entry.dialect, squash(&entry.category), squash(&entry.implementation));
        if let Some(existing) = self
            .functions
            .iter()
            .find(|e| (e.dialect, squash(&e.category), squash(&e.implementation)) == key)
        {
            return Insertion {
                id: existing.id.clone(),
                merged: true,
            };
        }
        entry.id = next_id(entry.dialect, 'f', self.functions.iter().map(|e| e.id.clone()));
        let id = entry.id.clone();
        self.functions.push(entry);
        Insertion { id, merged: false }
    }

    /// Adds an entry under a fresh id, or appends its new cases to the
    /// entry with the same dialect and rule text.
    pub fn insert_rule(&mut self, mut entry: ConstraintEntry) -> Insertion {
        let key = (entry.dialect, squash(&entry.rule_spec));
        if let Some(existing) = self
            .rules
            .iter_mut()
            .find(|e| (e.dialect, squash(&e.rule_spec)) == key)
        {
            for case in entry.cases {
                if !existing.cases.contains(&case) {
                    existing.cases.push(case);
                }
            }
            return Insertion {
                id: existing.id.clone(),
                merged: true,
            };
        }
        entry.id = next_id(entry.dialect, 'r', self.rules.iter().map(|e| e.id.clone()));
        let id = entry.id.clone();
        self.rules.push(entry);
        Insertion { id, merged: false }
    }

    /// Top-`k` function entries of `dialect` by cosine similarity to the
    /// operator's category and description; ties by id.
    pub fn retrieve_functions(
        &self,
        op: &StandardizedOperator,
        dialect: Dialect,
        k: usize,
        embedder: &dyn EmbeddingProvider,
    ) -> Result<Vec<(f64, &FunctionEntry)>, KbError> {
        let pool: Vec<&FunctionEntry> = self.functions.iter().filter(|e| e.dialect == dialect).collect();
        if pool.is_empty() {
            return Err(KbError::EmptyRepository(dialect));
        }
        let q = embedder.embed(&format!("{} | {}", op.category, op.standard_description))?;
        let mut scored: Vec<(f64, &FunctionEntry)> = pool.into_iter().map(|e| (cosine(&q, &e.embedding), e)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
        scored.truncate(k.max(1));
        Ok(scored)
    }

    /// Exact signature-pattern match (lowest id) or else the closest rule
    /// by text similarity at or above `tau_rule`.
    pub fn retrieve_rules(
        &self,
        signature: &ErrorSignature,
        segment: &str,
        dialect: Dialect,
        tau_rule: f64,
        embedder: &dyn EmbeddingProvider,
    ) -> Result<Option<&ConstraintEntry>, KbError> {
        let pool: Vec<&ConstraintEntry> = self.rules.iter().filter(|e| e.dialect == dialect).collect();
        let exact = pool
            .iter()
            .filter(|e| e.signature_patterns.iter().any(|p| signature_pattern_matches(p, signature, segment)))
            .min_by(|a, b| a.id.cmp(&b.id));
        if let Some(e) = exact {
            return Ok(Some(e));
        }
        if pool.is_empty() {
            return Ok(None);
        }
        let q = embedder.embed(&format!("{signature} {segment}"))?;
        let mut best: Option<(f64, &ConstraintEntry)> = None;
        for e in pool {
            let s = cosine(&q, &embedder.embed(&e.match_text())?);
            if s >= tau_rule && best.is_none_or(|(b, be)| s > b || (s == b && e.id < be.id)) {
                best = Some((s, e));
            }
        }
        Ok(best.map(|(_, e)| e))
    }

    pub fn count(&self, dialect: Option<Dialect>, origin: Option<Origin>) -> (usize, usize) {
        let keep_d = |d: Dialect| dialect.is_none_or(|x| x == d);
        let keep_o = |o: Origin| origin.is_none_or(|x| x == o);
        (
            self.functions.iter().filter(|e| keep_d(e.dialect) && keep_o(e.origin)).count(),
            self.rules.iter().filter(|e| keep_d(e.dialect) && keep_o(e.origin)).count(),
        )
    }

    pub fn persist(&self, dir: &Path) -> Result<(), KbError> {
        fs::create_dir_all(dir)?;
        let csr = serde_json::to_string_pretty(&self.csr).map_err(|e| KbError::Io(e.to_string()))?;
        fs::write(dir.join(CSR_FILE), csr + "\n")?;
        write_jsonl(&dir.join(F_FILE), &self.functions)?;
        write_jsonl(&dir.join(R_FILE), &self.rules)?;
        Ok(())
    }

    /// Missing files read as empty repositories and the builtin reference.
    pub fn load(dir: &Path) -> Result<Self, KbError> {
        if !dir.is_dir() {
            return Err(KbError::Io(format!("{} is not a directory", dir.display())));
        }
        let csr_path = dir.join(CSR_FILE);
        let csr = if csr_path.exists() {
            serde_json::from_str(&fs::read_to_string(&csr_path)?).map_err(|e| KbError::CorruptRecord {
                file: CSR_FILE.into(),
                line: e.line(),
                message: e.to_string(),
            })?
        } else {
            CanonicalReference::builtin()
        };
        let functions: Vec<FunctionEntry> = read_jsonl(&dir.join(F_FILE), F_FILE, |e: &FunctionEntry| e.violations())?;
        let rules: Vec<ConstraintEntry> = read_jsonl(&dir.join(R_FILE), R_FILE, |e: &ConstraintEntry| e.violations())?;
        Ok(Self { csr, functions, rules })
    }
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), KbError> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| KbError::Io(e.to_string()))?;
        out.push(b'\n');
    }
    let tmp = path.with_extension("tmp");
    fs::File::create(&tmp)?.write_all(&out)?;
    fs::rename(tmp, path)?;
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
    name: &str,
    check: impl Fn(&T) -> Vec<String>,
) -> Result<Vec<T>, KbError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (i, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| KbError::CorruptRecord {
            file: name.to_string(),
            line: i + 1,
            message,
        };
        let item: T = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        if let Some(v) = check(&item).into_iter().next() {
            return Err(corrupt(v));
        }
        out.push(item);
    }
    Ok(out)
}
