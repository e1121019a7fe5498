//! Rule-based sentence segmentation.
//!
//! A sentence ends at a run of `.?!` (plus closing quotes or brackets) that
//! is followed by whitespace and an uppercase letter, or by the end of its
//! paragraph. Decimals, ellipses and listed abbreviations never end a
//! sentence. Blank lines separate paragraphs and always end a sentence.

use serde::{Deserialize, Serialize};

pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "e.g", "i.e", "approx", "fig", "no", "cf", "al",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: usize,
    pub paragraph: usize,
    /// Sentence text with whitespace runs collapsed to single spaces.
    pub text: String,
    /// Byte range of the raw sentence inside the input.
    pub span: (usize, usize),
}

/// Splits `text` into sentences. Returns an empty list for blank input.
pub fn split_sentences(text: &str, abbreviations: &[String]) -> Vec<Sentence> {
    let mut out = Vec::new();
    for (paragraph, (p_start, p_text)) in paragraphs(text).into_iter().enumerate() {
        for (s, e) in split_paragraph(p_text, abbreviations) {
            let raw = &p_text[s..e];
            out.push(Sentence {
                id: out.len(),
                paragraph,
                text: collapse_ws(raw),
                span: (p_start + s, p_start + e),
            });
        }
    }
    out
}

pub fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Non-blank paragraphs with their byte offsets.
fn paragraphs(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_content_end = 0;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let blank = line.trim().is_empty();
        match (blank, start) {
            (true, Some(s)) => {
                out.push((s, &text[s..last_content_end]));
                start = None;
            }
            (false, None) => {
                start = Some(offset);
                last_content_end = offset + line.len();
            }
            (false, Some(_)) => last_content_end = offset + line.len(),
            (true, None) => {}
        }
        offset += line.len();
    }
    if let Some(s) = start {
        out.push((s, &text[s..last_content_end]));
    }
    out
}

fn split_paragraph(p: &str, abbreviations: &[String]) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = p.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if !matches!(c, '.' | '?' | '!') {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && matches!(chars[j].1, '.' | '?' | '!') {
            j += 1;
        }
        let run_len = j - i;
        while j < chars.len() && matches!(chars[j].1, '"' | '\'' | '”' | '’' | ')' | ']') {
            j += 1;
        }
        let end_byte = chars.get(j).map_or(p.len(), |&(b, _)| b);
        let rest = &p[end_byte..];
        let at_end = rest.trim().is_empty();
        let ellipsis = c == '.' && run_len >= 3;
        let abbreviation = c == '.' && run_len == 1 && is_abbreviation(&p[start..pos], abbreviations);
        let boundary = at_end || (!ellipsis && !abbreviation && starts_with_ws_then_upper(rest));
        if boundary {
            let s = skip_ws(p, start);
            if s < end_byte {
                out.push((s, end_byte));
            }
            start = end_byte;
        }
        i = j.max(i + 1);
    }
    let s = skip_ws(p, start);
    let e = p.trim_end().len();
    if s < e {
        out.push((s, e));
    }
    out
}

fn skip_ws(p: &str, from: usize) -> usize {
    from + (p[from..].len() - p[from..].trim_start().len())
}

fn starts_with_ws_then_upper(rest: &str) -> bool {
    if !rest.starts_with(char::is_whitespace) {
        return false;
    }
    let next = rest
        .trim_start()
        .trim_start_matches(['"', '\'', '“', '‘', '(', '['])
        .chars()
        .next();
    next.is_some_and(|c| c.is_uppercase())
}

/// True when the word right before a period is a known abbreviation.
fn is_abbreviation(before: &str, abbreviations: &[String]) -> bool {
    let word = before
        .rsplit(|c: char| c.is_whitespace() || c == '(')
        .next()
        .unwrap_or("")
        .to_lowercase();
    !word.is_empty() && abbreviations.contains(&word)
}
