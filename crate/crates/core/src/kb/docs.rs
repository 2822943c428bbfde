use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::KbError;
use crate::model::Dialect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocFormat {
    Html,
    Json,
    Md,
    Sgml,
    Txt,
}

impl FromStr for DocFormat {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "html" | "htm" => Ok(Self::Html),
            "json" => Ok(Self::Json),
            "md" | "markdown" => Ok(Self::Md),
            "sgml" | "sgm" | "xml" => Ok(Self::Sgml),
            "txt" | "text" => Ok(Self::Txt),
            other => Err(KbError::UnsupportedFormat(other.to_string())),
        }
    }
}

impl DocFormat {
    pub fn from_path(path: &Path) -> Result<Self, KbError> {
        path.extension()
            .and_then(|e| e.to_str())
            .ok_or_else(|| KbError::UnsupportedFormat(path.display().to_string()))?
            .parse()
    }
}

/// One demarcated documentation section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub title: String,
    /// Source bytes of the section, unchanged.
    pub raw: String,
    /// Markup-free text used for embedding.
    pub text: String,
    pub doc_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedCorpus {
    pub dialect: Dialect,
    pub sections: Vec<Section>,
}

impl TaggedCorpus {
    /// Merged document with each section wrapped in dialect tags.
    pub fn render(&self) -> String {
        let tag = self.dialect.name();
        self.sections
            .iter()
            .map(|s| format!("<{tag}>\n{}\n</{tag}>\n", s.raw))
            .collect()
    }
}

static MD_HEADING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^#{1,6}\s+(.+?)\s*#*\s*$").unwrap());
static HTML_HEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<h[1-6]\b[^>]*>(.*?)</h[1-6]\s*>").unwrap());
static SGML_TITLE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<title\b[^>]*>(.*?)</title\s*>").unwrap());
static SCRIPT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<(script|style)\b.*?</(script|style)\s*>").unwrap());
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<[^>]*>").unwrap());
static BODY_END: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)</body\s*>").unwrap());

fn decode_entities(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&apos;", "'")
        .replace("&nbsp;", " ")
        .replace("&amp;", "&")
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_markup(s: &str) -> String {
    let no_script = SCRIPT.replace_all(s, " ");
    collapse(&decode_entities(&TAG.replace_all(&no_script, " ")))
}

fn markdown(text: &str, doc: usize) -> Vec<Section> {
    let mut starts: Vec<(usize, String)> = Vec::new();
    let mut offset = 0;
    let mut fenced = false;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_end();
        if trimmed.trim_start().starts_with("```") {
            fenced = !fenced;
        } else if !fenced {
            if let Some(c) = MD_HEADING.captures(trimmed) {
                starts.push((offset, c[1].to_string()));
            }
        }
        offset += line.len();
    }
    let mut out = Vec::new();
    let first = starts.first().map_or(text.len(), |s| s.0);
    if !text[..first].trim().is_empty() {
        let pre = &text[..first];
        out.push(section(pre.lines().next().unwrap_or("").trim(), pre, collapse(pre), doc));
    }
    for (i, (start, title)) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map_or(text.len(), |s| s.0);
        let raw = &text[*start..end];
        out.push(section(title, raw, collapse(raw), doc));
    }
    out
}

fn section(title: &str, raw: &str, text: String, doc: usize) -> Section {
    Section {
        title: title.trim().to_string(),
        raw: raw.trim_end().to_string(),
        text,
        doc_index: doc,
    }
}

/// Sections start at each heading match and run to the next one.
fn by_markup_heading(text: &str, heading: &Regex, doc: usize) -> Vec<Section> {
    let end_all = BODY_END.find(text).map_or(text.len(), |m| m.start());
    let starts: Vec<(usize, String)> = heading
        .captures_iter(&text[..end_all])
        .map(|c| (c.get(0).unwrap().start(), strip_markup(&c[1])))
        .collect();
    starts
        .iter()
        .enumerate()
        .map(|(i, (start, title))| {
            let end = starts.get(i + 1).map_or(end_all, |s| s.0);
            let raw = &text[*start..end];
            section(title, raw, strip_markup(raw), doc)
        })
        .collect()
}

fn json_sections(text: &str, doc: usize) -> Result<Vec<Section>, KbError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| KbError::Document(format!("document {doc}: {e}")))?;
    let items = match &value {
        serde_json::Value::Array(a) => a,
        serde_json::Value::Object(o) => o
            .get("sections")
            .and_then(|s| s.as_array())
            .ok_or_else(|| KbError::Document(format!("document {doc}: expected a `sections` array")))?,
        _ => return Err(KbError::Document(format!("document {doc}: expected an array of sections"))),
    };
    let field = |o: &serde_json::Map<String, serde_json::Value>, names: &[&str]| {
        names.iter().find_map(|n| o.get(*n).and_then(|v| v.as_str())).map(str::to_string)
    };
    items
        .iter()
        .map(|item| {
            let o = item
                .as_object()
                .ok_or_else(|| KbError::Document(format!("document {doc}: section is not an object")))?;
            let title = field(o, &["title", "name", "heading"]).unwrap_or_default();
            let body = field(o, &["body", "content", "text"])
                .ok_or_else(|| KbError::Document(format!("document {doc}: section {title:?} has no body")))?;
            Ok(section(&title, &body, collapse(&format!("{title}\n{body}")), doc))
        })
        .collect()
}

fn plain_text(text: &str, doc: usize) -> Vec<Section> {
    let blocks = Regex::new(r"\n\s*\n").unwrap();
    blocks
        .split(text)
        .filter(|b| !b.trim().is_empty())
        .map(|b| {
            let b = b.trim_matches('\n');
            section(b.lines().next().unwrap_or(""), b, collapse(b), doc)
        })
        .collect()
}

/// Splits raw documents into sections by format-specific heading rules
/// and merges them, in input order, into one corpus.
pub fn tag_documents(dialect: Dialect, raw_docs: &[(DocFormat, Vec<u8>)]) -> Result<TaggedCorpus, KbError> {
    let mut sections = Vec::new();
    for (doc, (format, bytes)) in raw_docs.iter().enumerate() {
        let text = std::str::from_utf8(bytes).map_err(|e| KbError::Document(format!("document {doc}: {e}")))?;
        sections.extend(match format {
            DocFormat::Md => markdown(text, doc),
            DocFormat::Html => by_markup_heading(text, &HTML_HEADING, doc),
            DocFormat::Sgml => by_markup_heading(text, &SGML_TITLE, doc),
            DocFormat::Json => json_sections(text, doc)?,
            DocFormat::Txt => plain_text(text, doc),
        });
    }
    Ok(TaggedCorpus { dialect, sections })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(format: DocFormat, text: &str) -> TaggedCorpus {
        tag_documents(Dialect::Postgresql, &[(format, text.as_bytes().to_vec())]).unwrap()
    }

    #[test]
    fn markdown_headings() {
        let md = "## AGE\nage(a, b) subtracts.\n\n## TO_CHAR\nformats.\n```\n## not a heading\n```\n## LIMIT\nrows.\n";
        let headings = md.lines().filter(|l| l.starts_with("## ")).count() - 1;
        let c = tag(DocFormat::Md, md);
        assert_eq!(c.sections.len(), headings);
        assert_eq!(c.sections[1].title, "TO_CHAR");
        assert!(c.sections[1].raw.contains("## not a heading"));
        let rendered = c.render();
        assert_eq!(rendered.matches("<postgresql>").count(), 3);
        assert_eq!(rendered.matches("</postgresql>").count(), 3);
    }

    #[test]
    fn empty_input() {
        assert!(tag_documents(Dialect::Mysql, &[]).unwrap().sections.is_empty());
    }

    #[test]
    fn txt_and_json() {
        let c = tag(DocFormat::Txt, "first\nbody one\n\n\nsecond\nbody two\n");
        assert_eq!(c.sections.len(), 2);
        assert_eq!(c.sections[1].title, "second");
        let c = tag(DocFormat::Json, r#"{"sections":[{"title":"A","body":"x"},{"name":"B","content":"y"}]}"#);
        assert_eq!(c.sections.iter().map(|s| s.raw.as_str()).collect::<Vec<_>>(), ["x", "y"]);
        assert!(tag_documents(Dialect::Mysql, &[(DocFormat::Json, b"42".to_vec())]).is_err());
    }

    #[test]
    fn sgml_titles() {
        let c = tag(DocFormat::Sgml, "<sect1><title>AGE</title><para>age</para></sect1><sect1><title>NOW</title></sect1>");
        assert_eq!(c.sections.iter().map(|s| s.title.as_str()).collect::<Vec<_>>(), ["AGE", "NOW"]);
    }

    #[test]
    fn unknown_format() {
        assert!(matches!("pdf".parse::<DocFormat>(), Err(KbError::UnsupportedFormat(_))));
        assert_eq!(DocFormat::from_path(Path::new("a/b.htm")).unwrap(), DocFormat::Html);
    }
}
