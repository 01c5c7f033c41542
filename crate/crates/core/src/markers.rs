//! `#Name#:` marker slots in prompts and completions.
//!
//! Markers match case-insensitively and tolerate inner whitespace
//! (`#Query #:`). A slot's content runs from the end of its marker to the
//! start of the next marker of any name, or end of text.

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;

fn any_marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"#\s*[A-Za-z][A-Za-z ]*?\s*#\s*:").expect("valid regex"))
}

fn marker_re(name: &str) -> Regex {
    let words: Vec<String> = name.split_whitespace().map(regex::escape).collect();
    Regex::new(&format!(r"(?i)#\s*{}\s*#\s*:", words.join(r"\s+"))).expect("valid marker regex")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Occurrence {
    First,
    Last,
}

fn marker_span(text: &str, name: &str, which: Occurrence) -> Option<Range<usize>> {
    let re = marker_re(name);
    match which {
        Occurrence::First => re.find(text).map(|m| m.range()),
        Occurrence::Last => re.find_iter(text).last().map(|m| m.range()),
    }
}

/// Trimmed content of the named slot, if the marker is present.
pub fn slot<'a>(text: &'a str, name: &str, which: Occurrence) -> Option<&'a str> {
    let span = marker_span(text, name, which)?;
    let rest = &text[span.end..];
    let end = any_marker_re()
        .find(rest)
        .map(|m| m.start())
        .unwrap_or(rest.len());
    Some(rest[..end].trim())
}

/// Text with a leading `#name#:` marker removed, trimmed.
pub fn strip_leading<'a>(text: &'a str, name: &str) -> &'a str {
    let t = text.trim();
    match marker_re(name).find(t) {
        Some(m) if m.start() == 0 => t[m.end()..].trim(),
        _ => t,
    }
}

pub fn has_marker(text: &str, name: &str) -> bool {
    marker_re(name).is_match(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_and_last() {
        let t = "#Query#: one\n#Response#: r\n#query #: two";
        assert_eq!(slot(t, "Query", Occurrence::First), Some("one"));
        assert_eq!(slot(t, "Query", Occurrence::Last), Some("two"));
        assert_eq!(slot(t, "Correct response", Occurrence::First), None);
    }

    #[test]
    fn multiword_names() {
        let t = "#CORRECT  RESPONSE#: yes #Incorrect response#: no";
        assert_eq!(slot(t, "Correct response", Occurrence::First), Some("yes"));
        assert_eq!(slot(t, "Incorrect response", Occurrence::First), Some("no"));
    }

    #[test]
    fn hash_in_content_is_not_a_marker() {
        let t = "#Query#: what is C# used for?";
        assert_eq!(slot(t, "Query", Occurrence::First), Some("what is C# used for?"));
    }
}
