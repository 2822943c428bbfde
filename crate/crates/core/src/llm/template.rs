use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use regex::{Captures, Regex};

use super::LlmError;

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_][a-z0-9_]*)\}").unwrap());

pub const TEMPLATE_IDS: &[&str] = &[
    "plan",
    "plan_repair",
    "mine_implicit",
    "map_category",
    "generate_sql",
    "direct_generate",
    "apply_rule",
    "deep_diagnose",
    "semantic_fix",
    "distill",
    "kb_function_entry",
    "kb_rule_entry",
];

const BUILTIN: &[(&str, &str)] = &[
    ("plan", include_str!("templates/plan.txt")),
    ("plan_repair", include_str!("templates/plan_repair.txt")),
    ("mine_implicit", include_str!("templates/mine_implicit.txt")),
    ("map_category", include_str!("templates/map_category.txt")),
    ("generate_sql", include_str!("templates/generate_sql.txt")),
    ("direct_generate", include_str!("templates/direct_generate.txt")),
    ("apply_rule", include_str!("templates/apply_rule.txt")),
    ("deep_diagnose", include_str!("templates/deep_diagnose.txt")),
    ("semantic_fix", include_str!("templates/semantic_fix.txt")),
    ("distill", include_str!("templates/distill.txt")),
    ("kb_function_entry", include_str!("templates/kb_function_entry.txt")),
    ("kb_rule_entry", include_str!("templates/kb_rule_entry.txt")),
];

/// Named prompt templates with `{placeholder}` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self {
            templates: BUILTIN
                .iter()
                .map(|(id, text)| (id.to_string(), text.to_string()))
                .collect(),
        }
    }

    /// Builtins overridden by `<id>.txt` files found in `dir`.
    pub fn with_overrides(dir: &Path) -> std::io::Result<Self> {
        let mut set = Self::builtin();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "txt") {
                if let Some(id) = path.file_stem().and_then(|s| s.to_str()) {
                    set.templates.insert(id.to_string(), std::fs::read_to_string(&path)?);
                }
            }
        }
        Ok(set)
    }

    pub fn insert(&mut self, id: impl Into<String>, text: impl Into<String>) {
        self.templates.insert(id.into(), text.into());
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.templates.get(id).map(String::as_str)
    }

    pub fn render(&self, id: &str, bindings: &BTreeMap<&str, String>) -> Result<String, LlmError> {
        let text = self
            .get(id)
            .ok_or_else(|| LlmError::UnknownTemplate(id.to_string()))?;
        render_text(text, bindings)
    }
}

/// Single-pass substitution; bound values are never re-expanded.
pub fn render_text(template: &str, bindings: &BTreeMap<&str, String>) -> Result<String, LlmError> {
    if let Some(missing) = PLACEHOLDER
        .captures_iter(template)
        .map(|c| c[1].to_string())
        .find(|name| !bindings.contains_key(name.as_str()))
    {
        return Err(LlmError::UnboundPlaceholder(missing));
    }
    Ok(PLACEHOLDER
        .replace_all(template, |c: &Captures| bindings[&c[1]].clone())
        .into_owned())
}
