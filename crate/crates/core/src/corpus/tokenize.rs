//! Tokenization with character offsets and character-to-token span projection.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::Span;

/// A token with its byte range in the source text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tokenizer {
    /// Split on whitespace only; keeps pre-tokenized sources intact.
    Whitespace,
    /// Whitespace plus punctuation: word runs (with inner apostrophes and
    /// hyphens) and single punctuation characters.
    #[default]
    Punct,
}

fn punct_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+(?:['’\-]\w+)*|[^\w\s]").expect("valid regex"))
}

pub fn tokenize(text: &str, tokenizer: Tokenizer) -> Vec<Token> {
    match tokenizer {
        Tokenizer::Whitespace => {
            let mut tokens = Vec::new();
            let mut start = None;
            for (i, c) in text.char_indices() {
                match (c.is_whitespace(), start) {
                    (true, Some(s)) => {
                        tokens.push(Token {
                            text: text[s..i].to_owned(),
                            start: s,
                            end: i,
                        });
                        start = None;
                    }
                    (false, None) => start = Some(i),
                    _ => {}
                }
            }
            if let Some(s) = start {
                tokens.push(Token {
                    text: text[s..].to_owned(),
                    start: s,
                    end: text.len(),
                });
            }
            tokens
        }
        Tokenizer::Punct => punct_regex()
            .find_iter(text)
            .map(|m| Token {
                text: m.as_str().to_owned(),
                start: m.start(),
                end: m.end(),
            })
            .collect(),
    }
}

/// Maps a byte range onto the minimal covering token range. Returns `None`
/// when no token intersects the range.
pub fn project_span(tokens: &[Token], start: usize, end: usize) -> Option<Span> {
    let first = tokens.iter().position(|t| t.end > start && t.start < end)?;
    let last = tokens.iter().rposition(|t| t.end > start && t.start < end)?;
    Some(Span::new(first, last + 1))
}

/// Converts a character offset into a byte offset (clamped to the text end).
pub fn char_to_byte(text: &str, char_offset: usize) -> usize {
    text.char_indices()
        .nth(char_offset)
        .map(|(b, _)| b)
        .unwrap_or(text.len())
}

/// Locates `needle` in `text` and projects it onto tokens, preferring the
/// first occurrence whose projection does not overlap `taken`. Falls back to
/// a case-insensitive search.
pub fn locate(text: &str, tokens: &[Token], needle: &str, taken: &[Span]) -> Option<Span> {
    let needle = needle.trim();
    if needle.is_empty() {
        return None;
    }
    let try_in = |hay: &str, pat: &str| -> Option<Span> {
        let mut from = 0;
        while let Some(pos) = hay[from..].find(pat) {
            let start = from + pos;
            if let Some(span) = project_span(tokens, start, start + pat.len()) {
                if !taken.iter().any(|t| t.overlaps(&span)) {
                    return Some(span);
                }
            }
            from = start + pat.chars().next().map_or(1, char::len_utf8);
        }
        None
    };
    try_in(text, needle).or_else(|| {
        // ASCII lowercasing keeps byte offsets aligned with the original.
        try_in(&text.to_ascii_lowercase(), &needle.to_ascii_lowercase())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn punct_tokenizer() {
        let toks = tokenize("Trump upbeat on US-Japan deal. Don't!", Tokenizer::Punct);
        assert_eq!(
            texts(&toks),
            ["Trump", "upbeat", "on", "US-Japan", "deal", ".", "Don't", "!"]
        );
    }

    #[test]
    fn whitespace_tokenizer_keeps_offsets() {
        let text = "  a bb\tccc ";
        let toks = tokenize(text, Tokenizer::Whitespace);
        assert_eq!(texts(&toks), ["a", "bb", "ccc"]);
        for t in &toks {
            assert_eq!(&text[t.start..t.end], t.text);
        }
    }

    #[test]
    fn projection_is_minimal_cover() {
        let text = "John hates cars because they pollute the environment";
        let toks = tokenize(text, Tokenizer::Punct);
        let start = text.find("llute").unwrap();
        let end = text.find("the env").unwrap() + 2;
        assert_eq!(project_span(&toks, start, end), Some(Span::new(5, 7)));
        assert_eq!(project_span(&toks, 4, 5), None);
    }

    #[test]
    fn locate_skips_taken_occurrences() {
        let text = "vote Obama , vote";
        let toks = tokenize(text, Tokenizer::Punct);
        let first = locate(text, &toks, "vote", &[]).unwrap();
        assert_eq!(first, Span::new(0, 1));
        assert_eq!(locate(text, &toks, "vote", &[first]), Some(Span::new(3, 4)));
        assert_eq!(locate(text, &toks, "OBAMA", &[]), Some(Span::new(1, 2)));
        assert_eq!(locate(text, &toks, "Romney", &[]), None);
    }

    #[test]
    fn char_offsets_with_multibyte() {
        let text = "é ab";
        assert_eq!(char_to_byte(text, 2), 3);
        assert_eq!(char_to_byte(text, 10), text.len());
    }
}
