//! `dial` command-line front end.

pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use dial_core::aide::{run_pipeline, write_dump, Ablation, PipelineDeps, RunOutcome, StepOutcome};
use dial_core::eval::{load_items, render_markdown, run_benchmark, write_report, BenchContext};
use dial_core::exec::Simulator;
use dial_core::kb::{build_from_corpus, tag_documents, DocFormat, HintKb, Origin};
use dial_core::llm::{HashingEmbedder, Prompter, TemplateSet};
use dial_core::model::{Dialect, ExecutionOutcome, SchemaCatalog, TranslationTask};
use dial_core::planner::LabelConfig;

use config::{CliConfig, FileConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dial", version, about = "Dialect-aware natural language to SQL")]
struct Cli {
    /// Config file (default: ./dial.toml when present).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// LLM backend: replay, record or http.
    #[arg(long, global = true)]
    llm_mode: Option<String>,
    /// Directory of recorded LLM exchanges.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build or inspect the knowledge base.
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
    /// Translate one question.
    Translate(TranslateArgs),
    /// Run a benchmark and write report.json and report.md.
    Eval(EvalArgs),
    /// Lint a SQL file against a dialect's rule catalog.
    SimulateCheck {
        #[arg(long)]
        dialect: String,
        file: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum KbCommand {
    /// Distill a documentation directory into the knowledge base.
    Build {
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        dialect: Option<String>,
        #[arg(long)]
        kb: Option<PathBuf>,
        #[command(flatten)]
        thresholds: Thresholds,
    },
    /// Summarize the knowledge base.
    Inspect {
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        dialect: Option<String>,
        /// Print every entry as JSON.
        #[arg(long)]
        entries: bool,
    },
}

#[derive(Debug, Args, Default)]
struct Thresholds {
    #[arg(long)]
    tau_map: Option<f64>,
    #[arg(long)]
    tau_rule: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Overrides the 0.75 routing threshold.
    #[arg(long)]
    route_threshold: Option<f64>,
}

#[derive(Debug, Args, Default)]
struct Budgets {
    #[arg(long)]
    max_syntax_iters: Option<usize>,
    #[arg(long)]
    max_semantic_iters: Option<usize>,
}

#[derive(Debug, Args)]
struct AblationFlags {
    /// Generate directly from the question, without a logical plan.
    #[arg(long)]
    no_plan: bool,
    /// Skip knowledge-base retrieval and consolidation.
    #[arg(long)]
    no_kb: bool,
    /// Keep the first draft without repair.
    #[arg(long)]
    no_correction: bool,
}

impl AblationFlags {
    fn ablation(&self) -> Ablation {
        Ablation {
            no_plan: self.no_plan,
            no_kb: self.no_kb,
            no_correction: self.no_correction,
        }
    }
}

#[derive(Debug, Args)]
struct TranslateArgs {
    #[arg(long)]
    question: String,
    /// Schema catalog JSON.
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    dialect: Option<String>,
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Directory for the trajectory dump.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Blank prompts and replies in the dump.
    #[arg(long)]
    redact: bool,
    /// Write consolidated knowledge back to the knowledge base.
    #[arg(long)]
    save_kb: bool,
    /// Print the repair trajectory to stderr.
    #[arg(short, long)]
    verbose: bool,
    #[command(flatten)]
    ablation: AblationFlags,
    #[command(flatten)]
    budgets: Budgets,
    #[command(flatten)]
    thresholds: Thresholds,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    bench: Option<PathBuf>,
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated dialects; all with gold when omitted.
    #[arg(long, value_delimiter = ',')]
    dialects: Vec<String>,
    /// Worker threads (default: number of processors).
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    ablation: AblationFlags,
    #[command(flatten)]
    budgets: Budgets,
    #[command(flatten)]
    thresholds: Thresholds,
}

enum Failure {
    Usage(anyhow::Error),
    Domain(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Domain(e)
    }
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("DIAL_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .with_writer(std::io::stderr)
        .try_init();
}

/// Parses `argv` (program name first) and runs the subcommand. Returns 0
/// on success, 1 on a domain failure and 2 on a usage error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}

fn flags_layer(cli: &Cli) -> FileConfig {
    let mut f = FileConfig {
        llm_mode: cli.llm_mode.clone(),
        fixtures_dir: cli.fixtures.clone(),
        ..Default::default()
    };
    let mut thresholds = |t: &Thresholds| {
        f.tau_map = t.tau_map;
        f.tau_rule = t.tau_rule;
        f.top_k = t.top_k;
        f.route_threshold = t.route_threshold;
    };
    match &cli.command {
        Command::Kb {
            command: KbCommand::Build { thresholds: t, .. },
        } => thresholds(t),
        Command::Translate(a) => thresholds(&a.thresholds),
        Command::Eval(a) => thresholds(&a.thresholds),
        _ => {}
    }
    let (kb, dialect, out, budgets) = match &cli.command {
        Command::Kb {
            command: KbCommand::Build { kb, dialect, .. },
        }
        | Command::Kb {
            command: KbCommand::Inspect { kb, dialect, .. },
        } => (kb.clone(), dialect.clone(), None, None),
        Command::Translate(a) => (a.kb.clone(), a.dialect.clone(), a.out.clone(), Some(&a.budgets)),
        Command::Eval(a) => {
            f.bench_dir = a.bench.clone();
            (a.kb.clone(), None, a.out.clone(), Some(&a.budgets))
        }
        Command::SimulateCheck { dialect, .. } => (None, Some(dialect.clone()), None, None),
    };
    f.kb_dir = kb;
    f.dialect = dialect;
    f.out_dir = out;
    if let Some(b) = budgets {
        f.max_syntax_iters = b.max_syntax_iters;
        f.max_semantic_iters = b.max_semantic_iters;
    }
    f
}

fn resolve(cli: &Cli) -> Result<CliConfig, Failure> {
    let var = |k: &str| std::env::var(k).ok();
    let file = FileConfig::load(cli.config.as_deref()).map_err(Failure::Usage)?;
    let env = FileConfig::from_env(var).map_err(Failure::Usage)?;
    let merged = file.overlay(flags_layer(cli)).overlay(env);
    CliConfig::resolve(merged, var("DIAL_LLM_API_KEY").filter(|k| !k.is_empty())).map_err(Failure::Usage)
}

fn require_dialect(cfg: &CliConfig) -> Result<Dialect, Failure> {
    cfg.dialect
        .ok_or_else(|| Failure::Usage(anyhow::anyhow!("--dialect is required")))
}

fn run(cli: Cli) -> Result<i32, Failure> {
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::Kb {
            command: KbCommand::Build { docs, .. },
        } => kb_build(&cfg, require_dialect(&cfg)?, &docs),
        Command::Kb {
            command: KbCommand::Inspect { entries, .. },
        } => kb_inspect(&cfg, entries),
        Command::Translate(a) => translate(&cfg, require_dialect(&cfg)?, &a),
        Command::Eval(a) => eval(&cfg, &a),
        Command::SimulateCheck { file, .. } => simulate_check(require_dialect(&cfg)?, &file),
    }
}

fn open_kb(dir: &Path) -> anyhow::Result<HintKb> {
    if dir.is_dir() {
        HintKb::load(dir).with_context(|| format!("loading knowledge base {}", dir.display()))
    } else {
        tracing::warn!(dir = %dir.display(), "no knowledge base found, starting empty");
        Ok(HintKb::default())
    }
}

fn read_docs(dir: &Path) -> anyhow::Result<Vec<(DocFormat, Vec<u8>)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut docs = Vec::new();
    for p in paths {
        match DocFormat::from_path(&p) {
            Ok(f) => docs.push((f, std::fs::read(&p)?)),
            Err(_) => tracing::warn!(path = %p.display(), "skipping unsupported document"),
        }
    }
    Ok(docs)
}

fn kb_build(cfg: &CliConfig, dialect: Dialect, docs: &Path) -> Result<i32, Failure> {
    let raw = read_docs(docs)?;
    if raw.is_empty() {
        return Err(Failure::Domain(anyhow::anyhow!("no supported documents in {}", docs.display())));
    }
    let corpus = tag_documents(dialect, &raw).map_err(anyhow::Error::from)?;
    let mut kb = if cfg.kb_dir.is_dir() {
        open_kb(&cfg.kb_dir)?
    } else {
        HintKb::default()
    };
    let backend = cfg.llm.build().map_err(anyhow::Error::from)?;
    let templates = TemplateSet::builtin();
    let prompter = Prompter::new(&*backend, &templates);
    let report = build_from_corpus(&mut kb, &corpus, &prompter, &HashingEmbedder::default(), &cfg.kb)
        .map_err(anyhow::Error::from)?;
    kb.persist(&cfg.kb_dir).map_err(anyhow::Error::from)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?);
    Ok(EXIT_OK)
}

fn kb_inspect(cfg: &CliConfig, entries: bool) -> Result<i32, Failure> {
    if !cfg.kb_dir.is_dir() {
        return Err(Failure::Domain(anyhow::anyhow!("{} is not a knowledge base", cfg.kb_dir.display())));
    }
    let kb = open_kb(&cfg.kb_dir)?;
    let keep = |d: Dialect| cfg.dialect.is_none_or(|x| x == d);
    let mut out = std::io::stdout().lock();
    let write = |out: &mut std::io::StdoutLock, s: String| writeln!(out, "{s}").map_err(anyhow::Error::from);
    if entries {
        for f in kb.functions.iter().filter(|f| keep(f.dialect)) {
            let mut v = serde_json::to_value(f).map_err(anyhow::Error::from)?;
            v.as_object_mut().map(|o| o.remove("embedding"));
            write(&mut out, format!("F {v}"))?;
        }
        for r in kb.rules.iter().filter(|r| keep(r.dialect)) {
            write(&mut out, format!("R {}", serde_json::to_string(r).map_err(anyhow::Error::from)?))?;
        }
        return Ok(EXIT_OK);
    }
    write(&mut out, format!("csr categories: {}", kb.csr.categories.len()))?;
    write(&mut out, format!("csr atomic points: {}", kb.csr.atomic_point_count()))?;
    for d in Dialect::ALL.into_iter().filter(|d| keep(*d)) {
        let (f, r) = kb.count(Some(d), None);
        if f + r == 0 && cfg.dialect.is_none() {
            continue;
        }
        let (fd, rd) = kb.count(Some(d), Some(Origin::DistilledFromDocs));
        write(&mut out, format!("{d}: {f} functions ({fd} from docs), {r} rules ({rd} from docs)"))?;
        let mut cats: std::collections::BTreeMap<&str, usize> = Default::default();
        for e in kb.functions.iter().filter(|e| e.dialect == d) {
            *cats.entry(e.category.as_str()).or_default() += 1;
        }
        for (c, n) in cats {
            write(&mut out, format!("  {c}: {n}"))?;
        }
    }
    Ok(EXIT_OK)
}

fn describe(outcome: &StepOutcome) -> String {
    match outcome {
        StepOutcome::Execution(ExecutionOutcome::Success { rows }) => format!("executed ({} rows)", rows.len()),
        StepOutcome::Execution(ExecutionOutcome::Error { trace }) => format!("error: {trace}"),
        StepOutcome::Audit(r) if r.passed => "audit passed".to_string(),
        StepOutcome::Audit(r) => format!("audit failed:\n{}", r.feedback()),
    }
}

fn print_trajectory(out: &RunOutcome) {
    eprintln!("stages: {}", out.stages.join(" > "));
    for (i, s) in out.trajectory.steps.iter().enumerate() {
        let rule = s.applied_rule.as_deref().map(|r| format!(" [{r}]")).unwrap_or_default();
        eprintln!("#{i} {:?}{rule}: {}", s.stage, s.sql.text);
        eprintln!("   {}", describe(&s.outcome));
    }
    for c in &out.consolidation {
        eprintln!("consolidated into {} (merged: {}, similarity {:.3})", c.entry_id, c.merged, c.similarity);
    }
    eprintln!("status: {:?}", out.status);
}

fn translate(cfg: &CliConfig, dialect: Dialect, a: &TranslateArgs) -> Result<i32, Failure> {
    let schema_text =
        std::fs::read_to_string(&a.schema).with_context(|| format!("reading {}", a.schema.display()))?;
    let schema = SchemaCatalog::from_json_str(&schema_text).map_err(|e| Failure::Usage(e.into()))?;
    let task = TranslationTask {
        question: a.question.clone(),
        schema,
        dialect,
        gold_elements: None,
    };
    let kb = open_kb(&cfg.kb_dir)?.shared();
    let backend = cfg.llm.build().map_err(anyhow::Error::from)?;
    let templates = TemplateSet::builtin();
    let embedder = HashingEmbedder::default();
    let deps = PipelineDeps {
        llm: &*backend,
        templates: &templates,
        embedder: &embedder,
        kb: &kb,
        kb_config: cfg.kb,
        label: LabelConfig::default(),
        debug: cfg.debug,
        ablation: a.ablation.ablation(),
        executor: None,
    };
    let outcome = run_pipeline(&task, &deps).map_err(anyhow::Error::from)?;
    if a.verbose {
        print_trajectory(&outcome);
    }
    if let Some(dir) = &cfg.out_dir {
        let path = write_dump(&outcome, dir, a.redact).context("writing trajectory dump")?;
        tracing::info!(path = %path.display(), "trajectory written");
    }
    if a.save_kb && !outcome.consolidation.is_empty() {
        kb.read()
            .expect("knowledge base lock")
            .persist(&cfg.kb_dir)
            .map_err(anyhow::Error::from)?;
    }
    if let Some(sql) = &outcome.final_sql {
        println!("{}", sql.text);
    }
    if outcome.passed {
        Ok(EXIT_OK)
    } else {
        eprintln!("translation not verified: {:?}", outcome.status);
        Ok(EXIT_FAILURE)
    }
}

fn eval(cfg: &CliConfig, a: &EvalArgs) -> Result<i32, Failure> {
    let bench = cfg
        .bench_dir
        .clone()
        .ok_or_else(|| Failure::Usage(anyhow::anyhow!("--bench is required")))?;
    let out = cfg
        .out_dir
        .clone()
        .ok_or_else(|| Failure::Usage(anyhow::anyhow!("--out is required")))?;
    let dialects = a
        .dialects
        .iter()
        .map(|d| d.parse::<Dialect>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Usage(e.into()))?;
    let jobs = match a.jobs {
        Some(0) => return Err(Failure::Usage(anyhow::anyhow!("--jobs must be at least 1"))),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let items = load_items(&bench).map_err(anyhow::Error::from)?;
    let kb = open_kb(&cfg.kb_dir)?.shared();
    let backend = cfg.llm.build().map_err(anyhow::Error::from)?;
    let templates = TemplateSet::builtin();
    let embedder = HashingEmbedder::default();
    let ctx = BenchContext {
        llm: &*backend,
        templates: &templates,
        embedder: &embedder,
        kb: &kb,
        kb_config: cfg.kb,
        label: LabelConfig::default(),
        debug: cfg.debug,
        ablation: a.ablation.ablation(),
    };
    let (report, results) = run_benchmark(&items, &bench, &dialects, &ctx, jobs).map_err(anyhow::Error::from)?;
    write_report(&report, &results, &out).map_err(anyhow::Error::from)?;
    print!("{}", render_markdown(&report));
    let problems = report.violations();
    if !problems.is_empty() {
        return Err(Failure::Domain(anyhow::anyhow!(problems.join("; "))));
    }
    Ok(EXIT_OK)
}

fn simulate_check(dialect: Dialect, file: &Path) -> Result<i32, Failure> {
    let sql = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    match Simulator::builtin(dialect).check(&sql) {
        Ok(()) => {
            println!("ok");
            Ok(EXIT_OK)
        }
        Err(v) => {
            println!("{}: {}", v.rule_id.as_deref().unwrap_or("syntax"), v.trace);
            Ok(EXIT_FAILURE)
        }
    }
}
