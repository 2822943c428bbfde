use regex::RegexBuilder;

use crate::model::Segment;

/// First case-insensitive match of `pattern` in `sql` accepted by `keep`.
///
/// When the pattern has a capture group, the segment starts at the group.
/// With `extend_call` the segment runs to the parenthesis closing the first
/// `(` at or after its start. Offsets are in characters.
pub fn find_segment(
    sql: &str,
    pattern: &str,
    extend_call: bool,
    keep: impl Fn(&str) -> bool,
) -> Option<Segment> {
    let re = RegexBuilder::new(pattern).case_insensitive(true).build().ok()?;
    for caps in re.captures_iter(sql) {
        let m = caps.get(1).or_else(|| caps.get(0))?;
        let start = m.start();
        let mut end = m.end();
        if extend_call {
            if let Some(close) = closing_paren(sql, start) {
                end = close;
            }
        }
        let text = &sql[start..end];
        if keep(text) {
            return Some(Segment {
                text: text.to_string(),
                start: sql[..start].chars().count(),
                end: sql[..end].chars().count(),
            });
        }
    }
    None
}

/// Byte offset just past the `)` matching the first `(` at or after `from`.
fn closing_paren(sql: &str, from: usize) -> Option<usize> {
    let open = from + sql[from..].find('(')?;
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    for (i, ch) in sql[open..].char_indices() {
        if let Some(q) = quote {
            if ch == q {
                quote = None;
            }
            continue;
        }
        match ch {
            '\'' | '"' | '`' => quote = Some(ch),
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}
