use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use dial_core::aide::DebugConfig;
use dial_core::kb::KbConfig;
use dial_core::llm::{LlmMode, LlmSettings};
use dial_core::model::Dialect;
use serde::Deserialize;

pub const CONFIG_FILE: &str = "dial.toml";

/// Optional `key = value` settings read from the config file. Every key
/// may also be given as a flag or an environment variable; flags override
/// the file and the environment overrides both.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub kb_dir: Option<PathBuf>,
    pub bench_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub dialect: Option<String>,
    pub llm_mode: Option<String>,
    pub llm_endpoint: Option<String>,
    pub llm_model: Option<String>,
    pub fixtures_dir: Option<PathBuf>,
    pub max_syntax_iters: Option<usize>,
    pub max_semantic_iters: Option<usize>,
    pub tau_map: Option<f64>,
    pub tau_rule: Option<f64>,
    pub top_k: Option<usize>,
    /// Routing threshold; the default is 0.75.
    pub route_threshold: Option<f64>,
}

impl FileConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path`, or `./dial.toml` when present.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let path = match path {
            Some(p) => p.to_path_buf(),
            None => {
                let p = PathBuf::from(CONFIG_FILE);
                if !p.exists() {
                    return Ok(Self::default());
                }
                p
            }
        };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Fields set in `other` replace ours.
    pub fn overlay(mut self, other: FileConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            kb_dir,
            bench_dir,
            out_dir,
            dialect,
            llm_mode,
            llm_endpoint,
            llm_model,
            fixtures_dir,
            max_syntax_iters,
            max_semantic_iters,
            tau_map,
            tau_rule,
            top_k,
            route_threshold
        );
        self
    }

    /// Settings from `DIAL_*` variables.
    pub fn from_env(var: impl Fn(&str) -> Option<String>) -> anyhow::Result<Self> {
        fn num<T: std::str::FromStr>(k: &str, v: Option<String>) -> anyhow::Result<Option<T>>
        where
            T::Err: std::fmt::Display,
        {
            v.map(|s| s.parse::<T>().map_err(|e| anyhow::anyhow!("{k}={s}: {e}"))).transpose()
        }
        let get = |k: &str| var(k).filter(|v| !v.is_empty());
        Ok(Self {
            kb_dir: get("DIAL_KB_DIR").map(PathBuf::from),
            bench_dir: get("DIAL_BENCH_DIR").map(PathBuf::from),
            out_dir: get("DIAL_OUT_DIR").map(PathBuf::from),
            dialect: get("DIAL_DIALECT"),
            llm_mode: get("DIAL_LLM_MODE"),
            llm_endpoint: get("DIAL_LLM_ENDPOINT"),
            llm_model: get("DIAL_LLM_MODEL"),
            fixtures_dir: get("DIAL_FIXTURES_DIR").map(PathBuf::from),
            max_syntax_iters: num("DIAL_MAX_SYNTAX_ITERS", get("DIAL_MAX_SYNTAX_ITERS"))?,
            max_semantic_iters: num("DIAL_MAX_SEMANTIC_ITERS", get("DIAL_MAX_SEMANTIC_ITERS"))?,
            tau_map: num("DIAL_TAU_MAP", get("DIAL_TAU_MAP"))?,
            tau_rule: num("DIAL_TAU_RULE", get("DIAL_TAU_RULE"))?,
            top_k: num("DIAL_TOP_K", get("DIAL_TOP_K"))?,
            route_threshold: num("DIAL_ROUTE_THRESHOLD", get("DIAL_ROUTE_THRESHOLD"))?,
        })
    }
}

/// Fully resolved settings handed to a subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub kb_dir: PathBuf,
    pub bench_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub dialect: Option<Dialect>,
    pub llm: LlmSettings,
    pub debug: DebugConfig,
    pub kb: KbConfig,
}

pub const DEFAULT_KB_DIR: &str = "kb";
pub const DEFAULT_FIXTURES_DIR: &str = "fixtures/llm";

impl CliConfig {
    pub fn resolve(merged: FileConfig, api_key: Option<String>) -> anyhow::Result<Self> {
        let mode = match merged.llm_mode.as_deref().map(str::to_ascii_lowercase).as_deref() {
            None | Some("replay") => LlmMode::Replay,
            Some("record") => LlmMode::Record,
            Some("http") => LlmMode::Http,
            Some(other) => bail!("unknown LLM mode '{other}' (expected replay, record or http)"),
        };
        let dialect = merged.dialect.as_deref().map(str::parse::<Dialect>).transpose()?;
        let mut debug = DebugConfig::default();
        debug.max_syntax_iters = merged.max_syntax_iters.unwrap_or(debug.max_syntax_iters);
        debug.max_semantic_iters = merged.max_semantic_iters.unwrap_or(debug.max_semantic_iters);
        let problems = debug.violations();
        if !problems.is_empty() {
            bail!("invalid budgets: {}", problems.join("; "));
        }
        let mut kb = KbConfig::default();
        kb.tau_map = merged.tau_map.unwrap_or(kb.tau_map);
        kb.tau_rule = merged.tau_rule.unwrap_or(kb.tau_rule);
        kb.k = merged.top_k.unwrap_or(kb.k);
        kb.route_threshold = merged.route_threshold.unwrap_or(kb.route_threshold);
        for (name, v) in [("tau_map", kb.tau_map), ("tau_rule", kb.tau_rule), ("route_threshold", kb.route_threshold)] {
            if !(-1.0..=1.0).contains(&v) {
                bail!("{name} must lie in [-1, 1], got {v}");
            }
        }
        if kb.k == 0 {
            bail!("top_k must be at least 1");
        }
        Ok(Self {
            kb_dir: merged.kb_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_KB_DIR)),
            bench_dir: merged.bench_dir,
            out_dir: merged.out_dir,
            dialect,
            llm: LlmSettings {
                mode,
                endpoint: merged.llm_endpoint,
                api_key,
                model: merged.llm_model,
                fixtures_dir: Some(merged.fixtures_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_FIXTURES_DIR))),
            },
            debug,
            kb,
        })
    }
}
