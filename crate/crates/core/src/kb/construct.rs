use serde::{Deserialize, Serialize};

use super::docs::{Section, TaggedCorpus};
use super::entries::{index_text, ConstraintEntry, FunctionEntry, Origin};
use super::store::{HintKb, KbConfig};
use super::{CanonicalReference, KbError};
use crate::llm::{bindings, cosine, EmbeddingProvider, Prompter};
use crate::model::Dialect;

/// Generic, dialect-neutral constraint pattern used as a query on the
/// rule track.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRule {
    pub id: String,
    pub description: String,
}

pub fn builtin_seed_rules() -> Vec<SeedRule> {
    [
        ("identifier-quoting", "identifiers containing uppercase letters or reserved words must be enclosed in double quotes; quoted identifiers are case sensitive"),
        ("alias-syntax", "table aliases must use or must not use the AS keyword; alias syntax for tables and columns"),
        ("group-order", "columns in the ORDER BY clause must appear in the GROUP BY clause or be aggregated"),
        ("distinct-order", "with SELECT DISTINCT, ORDER BY expressions must appear in the select list"),
        ("subquery-cardinality", "a scalar subquery must return exactly one row and one column"),
        ("derived-alias", "every derived table subquery in FROM must have its own alias"),
        ("dual-table", "every SELECT requires a FROM clause; use the DUAL table for constant expressions"),
        ("literal-quoting", "string literals use single quotes; double quotes denote identifiers"),
        ("row-limiting", "row limiting clauses such as LIMIT, TOP or FETCH FIRST are not supported in the same way"),
        ("aggregate-nesting", "aggregate functions cannot be nested and DISTINCT is not allowed inside window functions"),
        ("parameter-binding", "prepared statement parameters must be bound before the statement runs"),
    ]
    .into_iter()
    .map(|(id, d)| SeedRule {
        id: id.into(),
        description: d.into(),
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "track", rename_all = "snake_case")]
pub enum MapTarget {
    Function { category: String, point: String },
    Rule { seed: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedSection {
    pub section: Section,
    pub target: MapTarget,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SyntaxMapping {
    pub mapped: Vec<MappedSection>,
    pub dropped: usize,
}

/// Dual-track alignment: each section goes to its best-scoring atomic
/// point or seed rule when the cosine similarity reaches `tau_map`.
pub fn map_syntax(
    corpus: &TaggedCorpus,
    csr: &CanonicalReference,
    seed_rules: &[SeedRule],
    embedder: &dyn EmbeddingProvider,
    tau_map: f64,
) -> Result<SyntaxMapping, KbError> {
    let mut queries: Vec<(MapTarget, Vec<f64>)> = Vec::new();
    for c in &csr.categories {
        for p in &c.atomic_points {
            let text = format!("{} | {} | {}", c.name, p.name, p.ansi_sketch);
            queries.push((
                MapTarget::Function {
                    category: c.name.clone(),
                    point: p.name.clone(),
                },
                embedder.embed(&text)?,
            ));
        }
    }
    for r in seed_rules {
        queries.push((MapTarget::Rule { seed: r.id.clone() }, embedder.embed(&r.description)?));
    }
    let mut out = SyntaxMapping::default();
    for section in &corpus.sections {
        if section.text.trim().is_empty() {
            out.dropped += 1;
            continue;
        }
        let v = embedder.embed(&section.text)?;
        let mut best: Option<(f64, &MapTarget)> = None;
        for (target, q) in &queries {
            let s = cosine(&v, q);
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, target));
            }
        }
        match best {
            Some((score, target)) if score >= tau_map => out.mapped.push(MappedSection {
                section: section.clone(),
                target: target.clone(),
                score,
            }),
            _ => {
                tracing::debug!(title = %section.title, "section dropped");
                out.dropped += 1;
            }
        }
    }
    Ok(out)
}

/// Phrases marking a deviation from standard SQL.
pub const CONTRASTIVE_CUES: &[&str] = &[
    "unlike standard sql",
    "unlike the sql standard",
    "unlike ansi",
    "unlike other database",
    "in contrast to standard sql",
    "deviates from the standard",
    "non-standard",
];

pub fn has_contrastive_cue(text: &str) -> bool {
    let lower = text.to_lowercase();
    CONTRASTIVE_CUES.iter().any(|c| lower.contains(c))
}

pub const GENERATION_RETRIES: usize = 2;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub functions: Vec<FunctionEntry>,
    pub rules: Vec<ConstraintEntry>,
    /// `(section title, reason)` for sections that produced nothing.
    pub skipped: Vec<(String, String)>,
}

fn labeled<'a>(reply: &'a str, label: &str) -> Option<&'a str> {
    reply.lines().find_map(|l| {
        let l = l.trim();
        let (k, v) = l.split_once(':')?;
        (k.trim().eq_ignore_ascii_case(label)).then(|| v.trim())
    })
}

fn split_list(s: &str) -> Vec<String> {
    s.split(';').map(str::trim).filter(|x| !x.is_empty()).map(str::to_string).collect()
}

fn ask_until<T>(
    llm: &Prompter<'_>,
    template: &str,
    mut bind: impl FnMut(&str) -> std::collections::BTreeMap<&'static str, String>,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<Result<T, String>, KbError> {
    let mut note = String::new();
    let mut last = String::new();
    for _ in 0..=GENERATION_RETRIES {
        let reply = llm.ask(template, &bind(&note))?;
        match parse(&reply) {
            Ok(v) => return Ok(Ok(v)),
            Err(e) => {
                note = format!("The previous answer was rejected: {e}. Use exactly the requested lines.");
                last = e;
            }
        }
    }
    Ok(Err(last))
}

/// One function entry per function-track section and one rule entry
/// (without cases) per rule-track section. Sections with a contrastive cue
/// always take the rule track. Ids are assigned on insertion.
pub fn generate_entries(
    mapping: &SyntaxMapping,
    dialect: Dialect,
    llm: &Prompter<'_>,
    embedder: &dyn EmbeddingProvider,
) -> Result<Generated, KbError> {
    let mut out = Generated::default();
    for m in &mapping.mapped {
        let rule_track = matches!(m.target, MapTarget::Rule { .. }) || has_contrastive_cue(&m.section.raw);
        let section_text = m.section.raw.clone();
        if rule_track {
            let res = ask_until(
                llm,
                "kb_rule_entry",
                |note| {
                    bindings([
                        ("dialect", dialect.display_name().to_string()),
                        ("section", section_text.clone()),
                        ("note", note.to_string()),
                    ])
                },
                |reply| {
                    let rule = labeled(reply, "rule").filter(|r| !r.is_empty()).ok_or("missing `rule:` line")?;
                    let patterns = labeled(reply, "signature").map(split_list).unwrap_or_default();
                    Ok((rule.to_string(), patterns))
                },
            )?;
            match res {
                Ok((rule_spec, signature_patterns)) => out.rules.push(ConstraintEntry {
                    id: String::new(),
                    dialect,
                    rule_spec,
                    signature_patterns,
                    cases: Vec::new(),
                    origin: Origin::DistilledFromDocs,
                }),
                Err(e) => {
                    tracing::warn!(title = %m.section.title, error = %e, "rule generation skipped");
                    out.skipped.push((m.section.title.clone(), e));
                }
            }
        } else {
            let MapTarget::Function { category, .. } = &m.target else { unreachable!() };
            let res = ask_until(
                llm,
                "kb_function_entry",
                |note| {
                    bindings([
                        ("dialect", dialect.display_name().to_string()),
                        ("category", category.clone()),
                        ("section", section_text.clone()),
                        ("note", note.to_string()),
                    ])
                },
                |reply| {
                    let scenarios = labeled(reply, "scenarios").map(split_list).unwrap_or_default();
                    let spec = labeled(reply, "specification").unwrap_or("");
                    let imp = labeled(reply, "implementation").unwrap_or("");
                    if scenarios.is_empty() || spec.is_empty() || imp.is_empty() {
                        return Err("scenarios, specification and implementation are required".to_string());
                    }
                    Ok((scenarios, spec.to_string(), imp.to_string()))
                },
            )?;
            match res {
                Ok((scenarios, specification, implementation)) => {
                    let embedding = embedder.embed(&index_text(category, &scenarios, &specification))?;
                    out.functions.push(FunctionEntry {
                        id: String::new(),
                        dialect,
                        category: category.clone(),
                        scenarios,
                        specification,
                        implementation,
                        embedding,
                        origin: Origin::DistilledFromDocs,
                    });
                }
                Err(e) => {
                    tracing::warn!(title = %m.section.title, error = %e, "function generation skipped");
                    out.skipped.push((m.section.title.clone(), e));
                }
            }
        }
    }
    Ok(out)
}

/// Counts from one documentation build.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub sections: usize,
    pub dropped: usize,
    pub skipped: usize,
    pub function_ids: Vec<String>,
    pub rule_ids: Vec<String>,
}

/// Tagging output through mapping and generation into `kb`.
pub fn build_from_corpus(
    kb: &mut HintKb,
    corpus: &TaggedCorpus,
    llm: &Prompter<'_>,
    embedder: &dyn EmbeddingProvider,
    config: &KbConfig,
) -> Result<BuildReport, KbError> {
    let mapping = map_syntax(corpus, &kb.csr, &builtin_seed_rules(), embedder, config.tau_map)?;
    let generated = generate_entries(&mapping, corpus.dialect, llm, embedder)?;
    let mut report = BuildReport {
        sections: corpus.sections.len(),
        dropped: mapping.dropped,
        skipped: generated.skipped.len(),
        ..Default::default()
    };
    for f in generated.functions {
        report.function_ids.push(kb.insert_function(f).id);
    }
    for r in generated.rules {
        report.rule_ids.push(kb.insert_rule(r).id);
    }
    Ok(report)
}
