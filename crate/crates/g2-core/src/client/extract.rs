//! Extraction of structured payloads from raw model output.
//!
//! Model responses wrap their machine-readable parts in tags like
//! `<output>...</output>` or `<dag>...</dag>`, and the JSON inside is often
//! slightly off (code fences, `//` comments echoed from the prompt, single
//! quotes, Python-style booleans). [`extract_tagged_block`] pulls out the
//! first well-formed block and [`parse_structured_lenient`] applies a small,
//! fixed set of repairs before giving up.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("tag not found: <{0}>...</{0}>")]
    TagNotFound(String),
    #[error("unparseable structured output: {0}")]
    Unparseable(String),
}

/// Content of the first well-formed `<tag>...</tag>` pair, trimmed.
pub fn extract_tagged_block(text: &str, tag: &str) -> Result<String, ExtractError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let mut search = 0;
    while let Some(rel) = text[search..].find(&open) {
        let start = search + rel + open.len();
        if let Some(rel_close) = text[start..].find(&close) {
            return Ok(text[start..start + rel_close].trim().to_string());
        }
        search = start;
    }
    Err(ExtractError::TagNotFound(tag.to_string()))
}

/// Parse text as JSON, strictly first, then once more after the bounded
/// repairs: strip code fences, strip `//` line comments, re-quote
/// single-quoted keys/strings, and lowercase `True`/`False`.
pub fn parse_structured_lenient(text: &str) -> Result<serde_json::Value, ExtractError> {
    let trimmed = text.trim();
    if let Ok(value) = serde_json::from_str(trimmed) {
        return Ok(value);
    }
    let repaired = normalize_python_bools(&requote_single_quotes(&strip_line_comments(
        &strip_code_fences(trimmed),
    )));
    serde_json::from_str(repaired.trim())
        .map_err(|err| ExtractError::Unparseable(err.to_string()))
}

fn strip_code_fences(text: &str) -> String {
    let Some(first) = text.find("```") else {
        return text.to_string();
    };
    let after = &text[first + 3..];
    // skip an optional language tag up to the end of the fence line
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
    let body = &after[body_start..];
    let end = body.rfind("```").unwrap_or(body.len());
    body[..end].to_string()
}

fn strip_line_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    let mut in_string = false;
    let mut escaped = false;
    while let Some(c) = chars.next() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
            }
            '/' if chars.peek() == Some(&'/') => {
                // drop everything up to (but not including) the newline
                for skipped in chars.by_ref() {
                    if skipped == '\n' {
                        out.push('\n');
                        break;
                    }
                }
            }
            _ => out.push(c),
        }
    }
    out
}

/// Convert single-quoted strings in key or value position into double-quoted
/// JSON strings. Apostrophes inside prose are left alone: the opening quote
/// must follow a structural character and the closing quote must precede one.
fn requote_single_quotes(text: &str) -> String {
    const OPENERS: [char; 4] = ['{', '[', ',', ':'];
    const CLOSERS: [char; 4] = [':', ',', '}', ']'];

    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            i += 1;
            continue;
        }
        if c == '"' {
            in_string = true;
            out.push(c);
            i += 1;
            continue;
        }
        if c == '\'' {
            let prev_ok = out
                .trim_end()
                .chars()
                .last()
                .is_none_or(|p| OPENERS.contains(&p));
            if prev_ok {
                if let Some(end) = find_single_quote_close(&chars, i + 1) {
                    let next_ok = chars[end + 1..]
                        .iter()
                        .find(|ch| !ch.is_whitespace())
                        .is_none_or(|ch| CLOSERS.contains(ch));
                    if next_ok {
                        out.push('"');
                        for &inner in &chars[i + 1..end] {
                            if inner == '"' {
                                out.push_str("\\\"");
                            } else {
                                out.push(inner);
                            }
                        }
                        out.push('"');
                        i = end + 1;
                        continue;
                    }
                }
            }
            out.push(c);
            i += 1;
            continue;
        }
        out.push(c);
        i += 1;
    }
    out
}

fn find_single_quote_close(chars: &[char], from: usize) -> Option<usize> {
    let mut i = from;
    while i < chars.len() {
        if chars[i] == '\\' {
            i += 2;
            continue;
        }
        if chars[i] == '\'' {
            return Some(i);
        }
        i += 1;
    }
    None
}

fn normalize_python_bools(text: &str) -> String {
    const WORDS: [(&str, &str); 3] = [("True", "true"), ("False", "false"), ("None", "null")];

    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut i = 0;
    let boundary = |c: Option<&char>| c.is_none_or(|ch| !ch.is_alphanumeric() && *ch != '_');
    'outer: while i < chars.len() {
        let c = chars[i];
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            i += 1;
            continue;
        }
        if c == '"' {
            in_string = true;
            out.push(c);
            i += 1;
            continue;
        }
        for (word, lower) in WORDS {
            let len = word.len();
            if i + len <= chars.len()
                && chars[i..i + len].iter().collect::<String>() == word
                && boundary(if i == 0 { None } else { chars.get(i - 1) })
                && boundary(chars.get(i + len))
            {
                out.push_str(lower);
                i += len;
                continue 'outer;
            }
        }
        out.push(c);
        i += 1;
    }
    out
}
