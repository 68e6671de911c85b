//! Small text utilities shared by corpus cleaning, augmentation and grading.

use alloc::string::String;
use alloc::vec::Vec;

/// Collapse every run of Unicode whitespace to one ASCII space and trim.
pub fn normalize_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Case-folded, whitespace-collapsed form used for equality checks.
pub fn fold(s: &str) -> String {
    normalize_whitespace(s).to_lowercase()
}

/// A piece of text that is either a word (alphanumeric run, apostrophes and
/// inner hyphens allowed) or the separator text between words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Piece<'a> {
    Word(&'a str),
    Sep(&'a str),
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '-'
}

/// Split text into alternating words and separators; concatenating the
/// pieces reproduces the input exactly.
pub fn pieces(s: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut in_word: Option<bool> = None;
    for (i, c) in s.char_indices() {
        let w = is_word_char(c);
        match in_word {
            Some(prev) if prev != w => {
                out.push(if prev { Piece::Word(&s[start..i]) } else { Piece::Sep(&s[start..i]) });
                start = i;
            }
            _ => {}
        }
        in_word = Some(w);
    }
    if let Some(prev) = in_word {
        out.push(if prev { Piece::Word(&s[start..]) } else { Piece::Sep(&s[start..]) });
    }
    out
}

/// Lowercased word tokens, used by token-level F1.
pub fn word_tokens(s: &str) -> Vec<String> {
    pieces(s)
        .into_iter()
        .filter_map(|p| match p {
            Piece::Word(w) => Some(w.to_lowercase()),
            Piece::Sep(_) => None,
        })
        .collect()
}

/// Give `replacement` the capitalization shape of `original` (first letter only).
pub fn match_case(original: &str, replacement: &str) -> String {
    let starts_upper = original.chars().next().is_some_and(char::is_uppercase);
    if !starts_upper {
        return String::from(replacement);
    }
    let mut chars = replacement.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
