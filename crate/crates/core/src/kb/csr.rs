use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicSyntaxPoint {
    pub name: String,
    pub ansi_sketch: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalCategory {
    pub name: String,
    pub atomic_points: Vec<AtomicSyntaxPoint>,
}

/// ANSI-aligned taxonomy every dialect entry is anchored to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalReference {
    pub categories: Vec<CanonicalCategory>,
}

static BUILTIN: LazyLock<CanonicalReference> =
    LazyLock::new(|| serde_json::from_str(include_str!("csr.json")).expect("builtin csr.json"));

/// Lower-case, `&` spelled as `and`, underscores and runs of spaces collapsed.
pub fn normalize_category(name: &str) -> String {
    let cleaned: String = name
        .trim()
        .trim_matches(|c| c == '[' || c == ']' || c == '<' || c == '>' || c == '"' || c == '\'')
        .replace('&', " and ")
        .replace(['_', '-'], " ")
        .to_lowercase();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl CanonicalReference {
    pub fn builtin() -> Self {
        BUILTIN.clone()
    }

    pub fn category_names(&self) -> Vec<&str> {
        self.categories.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn category(&self, name: &str) -> Option<&CanonicalCategory> {
        let key = normalize_category(name);
        self.categories.iter().find(|c| normalize_category(&c.name) == key)
    }

    pub fn atomic_point_count(&self) -> usize {
        self.categories.iter().map(|c| c.atomic_points.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_shape() {
        let csr = CanonicalReference::builtin();
        assert_eq!(csr.categories.len(), 11);
        assert!(csr.atomic_point_count() >= 40);
        assert_eq!(csr.category("Date & Time Operations").unwrap().atomic_points.len(), 6);
    }

    #[test]
    fn lookup_tolerates_spelling() {
        let csr = CanonicalReference::builtin();
        assert_eq!(csr.category("[date_and_time operations]").unwrap().name, "Date & Time Operations");
        assert!(csr.category("String_Processing").is_none());
    }
}
