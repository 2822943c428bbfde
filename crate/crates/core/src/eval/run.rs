use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    acc_correct, aggregate_overall, mean_dfc, score_dfc, BenchmarkItem, CellScore, DialectScores, EvalError,
    ItemOutcomes, MetricsReport,
};
use crate::aide::{run_pipeline, Ablation, DebugConfig, PipelineDeps};
use crate::exec::{executor_for, has_top_level_order_by, Capability, Executor, SqliteExecutor};
use crate::kb::{KbConfig, SharedKb};
use crate::llm::{ChatBackend, EmbeddingProvider, TemplateSet};
use crate::model::{Dialect, SchemaCatalog, SqlText, TranslationTask};
use crate::planner::LabelConfig;

/// Shared, read-mostly inputs of a benchmark run.
pub struct BenchContext<'a> {
    pub llm: &'a dyn ChatBackend,
    pub templates: &'a TemplateSet,
    pub embedder: &'a dyn EmbeddingProvider,
    pub kb: &'a SharedKb,
    pub kb_config: KbConfig,
    pub label: LabelConfig,
    pub debug: DebugConfig,
    pub ablation: Ablation,
}

/// Scores of one (item, dialect) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub qid: String,
    pub dialect: Dialect,
    pub generated: Option<String>,
    pub exec: bool,
    pub acc: Option<bool>,
    pub dfc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn executor(item: &BenchmarkItem, dir: &Path, dialect: Dialect, schema: &SchemaCatalog) -> Result<Box<dyn Executor>, EvalError> {
    if dialect == Dialect::Sqlite {
        if let Some(seed) = &item.seed_ref {
            let exec = SqliteExecutor::from_schema(schema).map_err(|e| EvalError::Io(e.to_string()))?;
            exec.load(&std::fs::read_to_string(dir.join(seed))?)
                .map_err(|e| EvalError::Io(e.to_string()))?;
            return Ok(Box::new(exec));
        }
    }
    Ok(executor_for(dialect, schema))
}

fn run_pair(item: &BenchmarkItem, dir: &Path, dialect: Dialect, ctx: &BenchContext) -> Result<PairResult, EvalError> {
    let gold = &item.gold[&dialect];
    let schema_text = std::fs::read_to_string(dir.join(&item.schema_ref))?;
    let schema = SchemaCatalog::from_json_str(&schema_text).map_err(|e| EvalError::Io(e.to_string()))?;
    let exec = executor(item, dir, dialect, &schema)?;
    let task = TranslationTask {
        question: item.question.clone(),
        schema,
        dialect,
        gold_elements: (!item.gold_elements.is_empty()).then(|| item.gold_elements.clone()),
    };
    let deps = PipelineDeps {
        llm: ctx.llm,
        templates: ctx.templates,
        embedder: ctx.embedder,
        kb: ctx.kb,
        kb_config: ctx.kb_config,
        label: ctx.label.clone(),
        debug: ctx.debug,
        ablation: ctx.ablation,
        executor: Some(exec.as_ref()),
    };
    let (generated, error) = match run_pipeline(&task, &deps) {
        Ok(out) => (out.final_sql.map(|s| s.text), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let got = generated
        .as_ref()
        .and_then(|g| SqlText::new(g.clone(), dialect).ok())
        .map(|s| exec.execute(&s));
    let exec_ok = got.as_ref().is_some_and(|o| o.is_success());
    let acc = match exec.capability() {
        Capability::Live => {
            let gold_sql = SqlText::new(gold.gold_sql.clone(), dialect).map_err(|e| EvalError::Io(e.to_string()))?;
            let gold_out = exec.execute(&gold_sql);
            let ordered = has_top_level_order_by(&gold.gold_sql, dialect);
            Some(got.as_ref().is_some_and(|g| acc_correct(g, &gold_out, ordered)))
        }
        Capability::Simulated => None,
    };
    let dfc = score_dfc(generated.as_deref().unwrap_or(""), &gold.gold_sql, &gold.feature_patterns)?;
    Ok(PairResult {
        qid: item.qid.clone(),
        dialect,
        generated,
        exec: exec_ok,
        acc,
        dfc,
        error,
    })
}

/// Translates and scores every (item, dialect) pair on `jobs` workers.
/// `dialects` empty means every dialect with gold in the benchmark.
pub fn run_benchmark(
    items: &[BenchmarkItem],
    bench_dir: &Path,
    dialects: &[Dialect],
    ctx: &BenchContext,
    jobs: usize,
) -> Result<(MetricsReport, Vec<PairResult>), EvalError> {
    let dialects: Vec<Dialect> = if dialects.is_empty() {
        items.iter().flat_map(|i| i.gold.keys().copied()).collect::<BTreeSet<_>>().into_iter().collect()
    } else {
        dialects.to_vec()
    };
    let pairs: Vec<(&BenchmarkItem, Dialect)> = items
        .iter()
        .flat_map(|i| dialects.iter().filter(|d| i.gold.contains_key(d)).map(move |d| (i, *d)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EvalError::Io(e.to_string()))?;
    let results: Vec<PairResult> = pool.install(|| {
        pairs
            .par_iter()
            .map(|(item, d)| run_pair(item, bench_dir, *d, ctx))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok((assemble(&results, items, &dialects)?, results))
}

fn assemble(results: &[PairResult], items: &[BenchmarkItem], dialects: &[Dialect]) -> Result<MetricsReport, EvalError> {
    let mut per_dialect = BTreeMap::new();
    for d in dialects {
        let rs: Vec<&PairResult> = results.iter().filter(|r| r.dialect == *d).collect();
        let n = rs.len();
        let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let acc = rs
            .iter()
            .map(|r| r.acc)
            .collect::<Option<Vec<bool>>>()
            .filter(|v| !v.is_empty())
            .map(|v| frac(v.iter().filter(|a| **a).count()));
        per_dialect.insert(
            *d,
            DialectScores {
                exec: frac(rs.iter().filter(|r| r.exec).count()),
                acc,
                dfc: mean_dfc(&rs.iter().map(|r| r.dfc).collect::<Vec<_>>()),
                items: n,
            },
        );
    }
    let common: Vec<ItemOutcomes> = items
        .iter()
        .filter(|i| dialects.iter().all(|d| i.gold.contains_key(d)))
        .map(|i| ItemOutcomes {
            qid: i.qid.clone(),
            per_dialect: results
                .iter()
                .filter(|r| r.qid == i.qid)
                .map(|r| (r.dialect, CellScore { exec: r.exec, acc: r.acc }))
                .collect(),
        })
        .collect();
    Ok(MetricsReport {
        per_dialect,
        overall: aggregate_overall(&common, dialects)?,
        dialects: dialects.to_vec(),
    })
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", v * 100.0))
}

/// One row per dialect plus the overall row.
pub fn render_markdown(report: &MetricsReport) -> String {
    let mut out = String::from("| Dialect | Exec | Acc | DFC | Items |\n|---|---|---|---|---|\n");
    for (d, s) in &report.per_dialect {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            d.display_name(),
            pct(Some(s.exec)),
            pct(s.acc),
            pct(s.dfc),
            s.items
        ));
    }
    out.push_str(&format!(
        "| Overall | {} | {} | - | {} |\n",
        pct(Some(report.overall.exec)),
        pct(report.overall.acc),
        report.overall.items
    ));
    out
}

/// Writes `report.json` and `report.md` under `dir`.
pub fn write_report(report: &MetricsReport, results: &[PairResult], dir: &Path) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::json!({ "report": report, "results": results });
    let text = serde_json::to_string_pretty(&json).map_err(|e| EvalError::Io(e.to_string()))?;
    std::fs::write(dir.join("report.json"), text + "\n")?;
    std::fs::write(dir.join("report.md"), render_markdown(report))?;
    Ok(())
}
