//! Regenerates the replay fixtures shipped under `fixtures/`.
//!
//! Scripted stub replies stand in for a live model; every exchange is
//! recorded to `fixtures/llm`, and each scenario's trajectory dump is kept
//! as a golden file. Run from the workspace root:
//!
//!     cargo run -p dial-cli --example record_fixtures

use std::path::{Path, PathBuf};

use dial_core::aide::{run_pipeline, write_dump, Ablation, DebugConfig, PipelineDeps};
use dial_core::eval::{load_items, run_benchmark, BenchContext};
use dial_core::kb::{build_from_corpus, tag_documents, DocFormat, HintKb, KbConfig, SeedFile};
use dial_core::llm::{FixtureStore, HashingEmbedder, Prompter, RecordingBackend, StubBackend, StubRule, TemplateSet};
use dial_core::model::{Dialect, SchemaCatalog, TranslationTask};
use dial_core::planner::LabelConfig;
use serde::Deserialize;

#[derive(Deserialize)]
struct Scenario {
    question: String,
    dialect: Dialect,
    schema: SchemaCatalog,
    script: Vec<StubRule>,
}

const SCENARIOS: [&str; 5] = ["rule_fix", "deep_fix", "semantic_fix", "immediate", "exhausted"];

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn write_json(path: &Path, value: &impl serde::Serialize) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap() + "\n").unwrap();
}

fn record_scenarios(fixtures: &Path) {
    let e2e = root().join("fixtures/e2e");
    let kb_dir = e2e.join("kb");
    let _ = std::fs::remove_dir_all(&kb_dir);
    let seed = SeedFile::from_json_str(&std::fs::read_to_string(e2e.join("seed_kb.json")).unwrap()).unwrap();
    let mut kb = HintKb::default();
    seed.apply(&mut kb, &HashingEmbedder::default()).unwrap();
    kb.persist(&kb_dir).unwrap();

    for name in SCENARIOS {
        let s: Scenario =
            serde_json::from_str(&std::fs::read_to_string(e2e.join(format!("scenarios/{name}.json"))).unwrap()).unwrap();
        write_json(&e2e.join(format!("schemas/{name}.json")), &s.schema);
        let task = TranslationTask {
            question: s.question,
            schema: s.schema,
            dialect: s.dialect,
            gold_elements: None,
        };
        let script = s.script;
        let backend = RecordingBackend::new(StubBackend::new(script.clone()), FixtureStore::open(fixtures));
        let templates = TemplateSet::builtin();
        let embedder = HashingEmbedder::default();
        let kb = HintKb::load(&kb_dir).unwrap().shared();
        let deps = PipelineDeps {
            llm: &backend,
            templates: &templates,
            embedder: &embedder,
            kb: &kb,
            kb_config: KbConfig::default(),
            label: LabelConfig::default(),
            debug: DebugConfig::default(),
            ablation: Ablation::default(),
            executor: None,
        };
        let out = run_pipeline(&task, &deps).unwrap();
        if name == "rule_fix" {
            record_ablations(&task, &script, fixtures, &kb_dir);
        }
        let tmp = std::env::temp_dir().join(format!("dial-golden-{name}"));
        let dumped = write_dump(&out, &tmp, false).unwrap();
        let golden = e2e.join(format!("golden/{name}.json"));
        std::fs::create_dir_all(golden.parent().unwrap()).unwrap();
        std::fs::copy(&dumped, &golden).unwrap();
        std::fs::remove_dir_all(&tmp).unwrap();
        println!("{name}: {:?}, {} steps", out.status, out.trajectory.steps.len());
    }
}

/// Replies for the pipeline variants that skip planning, retrieval or
/// repair on the rule_fix task.
fn ablation_rules() -> Vec<StubRule> {
    vec![
        StubRule::new(
            "direct_generate",
            "",
            "SELECT city, GROUP_CONCAT(ip) AS ips FROM access_logs GROUP BY city",
        ),
        StubRule::new(
            "deep_diagnose",
            "",
            "SELECT city, LISTAGG(ip, ',') WITHIN GROUP (ORDER BY ip) AS ips FROM access_logs GROUP BY city",
        ),
    ]
}

fn record_ablations(task: &TranslationTask, script: &[StubRule], fixtures: &Path, kb_dir: &Path) {
    let mut rules = script.to_vec();
    rules.extend(ablation_rules());
    let backend = RecordingBackend::new(StubBackend::new(rules), FixtureStore::open(fixtures));
    let templates = TemplateSet::builtin();
    let embedder = HashingEmbedder::default();
    for ablation in [
        Ablation { no_plan: true, ..Default::default() },
        Ablation { no_kb: true, ..Default::default() },
        Ablation { no_correction: true, ..Default::default() },
    ] {
        let kb = HintKb::load(kb_dir).unwrap().shared();
        let deps = PipelineDeps {
            llm: &backend,
            templates: &templates,
            embedder: &embedder,
            kb: &kb,
            kb_config: KbConfig::default(),
            label: LabelConfig::default(),
            debug: DebugConfig::default(),
            ablation,
            executor: None,
        };
        let out = run_pipeline(task, &deps).unwrap();
        println!("  {ablation:?}: {:?}", out.stages);
    }
}

fn docs_script() -> Vec<StubRule> {
    let f = |needle: &str, scenarios: &str, spec: &str, imp: &str| {
        StubRule::new(
            "kb_function_entry",
            needle,
            &format!("scenarios: {scenarios}\nspecification: {spec}\nimplementation: {imp}"),
        )
    };
    let r = |needle: &str, rule: &str, signature: &str| {
        StubRule::new("kb_rule_entry", needle, &format!("rule: {rule}\nsignature: {signature}"))
    };
    vec![
        f(
            "SUBSTR(s, start, length)",
            "take the first characters of a name; cut a code out of a string",
            "SUBSTR(s, start, length) returns length characters of s starting at position start (1-based)",
            "SUBSTR(name, 1, 3)",
        ),
        f(
            "LISTAGG(expr, separator)",
            "list the members of each group in one string; comma-separated values per key",
            "LISTAGG(expr, sep) WITHIN GROUP (ORDER BY key) concatenates the group's values in key order",
            "LISTAGG(name, ',') WITHIN GROUP (ORDER BY name)",
        ),
        f(
            "EXTRACT(YEAR FROM ts)",
            "filter rows by year; group events by month",
            "EXTRACT(field FROM ts) returns the YEAR, MONTH or DAY field of a date or timestamp",
            "EXTRACT(YEAR FROM hire_date)",
        ),
        f(
            "NVL(a, b)",
            "show a default when a value is missing; replace null amounts with zero",
            "NVL(a, b) returns b when a is null and a otherwise",
            "NVL(commission, 0)",
        ),
        f(
            "FETCH FIRST n ROWS ONLY",
            "return the top rows of a ranking; show only the first results",
            "ORDER BY key FETCH FIRST n ROWS ONLY keeps the first n rows of the sorted result",
            "SELECT name FROM staff ORDER BY salary DESC FETCH FIRST 5 ROWS ONLY",
        ),
        r(
            "Quoted identifiers",
            "identifiers with uppercase letters or reserved words must be double-quoted; quoted names are case sensitive",
            "ORA-00904: ⟨id⟩: invalid identifier",
        ),
        r(
            "zero-length string",
            "an empty string literal is NULL; compare with IS NULL instead of = ''",
            "",
        ),
    ]
}

fn record_docs(fixtures: &Path) {
    let docs = root().join("fixtures/kb_docs/oracle");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&docs).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    let raw: Vec<(DocFormat, Vec<u8>)> = paths
        .iter()
        .map(|p| (DocFormat::from_path(p).unwrap(), std::fs::read(p).unwrap()))
        .collect();
    let corpus = tag_documents(Dialect::Oracle, &raw).unwrap();
    let backend = RecordingBackend::new(StubBackend::new(docs_script()), FixtureStore::open(fixtures));
    let templates = TemplateSet::builtin();
    let prompter = Prompter::new(&backend, &templates);
    let mut kb = HintKb::default();
    let report =
        build_from_corpus(&mut kb, &corpus, &prompter, &HashingEmbedder::default(), &KbConfig::default()).unwrap();
    println!("docs: {report:?}");
    for f in &kb.functions {
        println!("  F {} -> {}", f.id, f.category);
    }
    for r in &kb.rules {
        println!("  R {} -> {}", r.id, r.rule_spec);
    }
}

fn record_bench(fixtures: &Path) {
    let bench = root().join("fixtures/bench");
    let script: Vec<StubRule> = serde_json::from_str(&std::fs::read_to_string(bench.join("script.json")).unwrap()).unwrap();
    let backend = RecordingBackend::new(StubBackend::new(script), FixtureStore::open(fixtures));
    let templates = TemplateSet::builtin();
    let kb = HintKb::load(&root().join("fixtures/e2e/kb")).unwrap().shared();
    let ctx = BenchContext {
        llm: &backend,
        templates: &templates,
        embedder: &HashingEmbedder::default(),
        kb: &kb,
        kb_config: KbConfig::default(),
        label: LabelConfig::default(),
        debug: DebugConfig::default(),
        ablation: Ablation::default(),
    };
    let items = load_items(&bench).unwrap();
    let (report, results) = run_benchmark(&items, &bench, &[], &ctx, 1).unwrap();
    for r in &results {
        println!("bench {} {}: exec {} acc {:?} dfc {:?} {:?}", r.qid, r.dialect, r.exec, r.acc, r.dfc, r.error);
    }
    println!("bench overall: {:?}", report.overall);
}

fn main() {
    let fixtures = root().join("fixtures/llm");
    let _ = std::fs::remove_dir_all(&fixtures);
    record_scenarios(&fixtures);
    record_docs(&fixtures);
    record_bench(&fixtures);
}
