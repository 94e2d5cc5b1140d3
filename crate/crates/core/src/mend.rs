//! Best-effort repair of malformed JSON emitted by language models.
//!
//! [`mend`] first tries a strict parse. Failing that it isolates the first
//! JSON-looking region of the output (dropping prose and code fences) and runs
//! a fixed sequence of single-scan repair passes before parsing again. Every
//! pass that changes the text leaves a [`Fix`] tag on the outcome.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fix {
    ExtractRegion,
    SmartQuotes,
    SingleQuotes,
    BareKeys,
    TrailingCommas,
    MissingCommas,
    PythonLiterals,
    ControlChars,
    CloseStrings,
    CloseBrackets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MendOutcome {
    pub value: Option<Value>,
    /// True iff the strict parse failed and repair produced a value.
    pub repaired: bool,
    pub applied_fixes: Vec<Fix>,
}

impl MendOutcome {
    pub fn is_invalid(&self) -> bool {
        self.value.is_none()
    }

    fn strict(value: Value) -> Self {
        MendOutcome { value: Some(value), repaired: false, applied_fixes: Vec::new() }
    }
}

type Pass = fn(&[char]) -> Option<Vec<char>>;

const PASSES: [(Fix, Pass); 9] = [
    (Fix::SmartQuotes, smart_quotes),
    (Fix::SingleQuotes, single_quotes),
    (Fix::BareKeys, bare_keys),
    (Fix::TrailingCommas, trailing_commas),
    (Fix::MissingCommas, missing_commas),
    (Fix::PythonLiterals, python_literals),
    (Fix::ControlChars, control_chars),
    (Fix::CloseStrings, close_strings),
    (Fix::CloseBrackets, close_brackets),
];

pub fn mend(raw: &str) -> MendOutcome {
    if let Ok(value) = serde_json::from_str(raw) {
        return MendOutcome::strict(value);
    }
    let mut fixes = Vec::new();
    let Some(region) = extract_region(raw) else {
        return MendOutcome { value: None, repaired: false, applied_fixes: fixes };
    };
    let region_str: String = region.iter().collect();
    if region_str != raw {
        fixes.push(Fix::ExtractRegion);
    }
    if let Ok(value) = serde_json::from_str(&region_str) {
        return MendOutcome { value: Some(value), repaired: true, applied_fixes: fixes };
    }
    let mut text = region;
    for (fix, pass) in PASSES {
        if let Some(next) = pass(&text) {
            text = next;
            fixes.push(fix);
        }
    }
    let repaired: String = text.iter().collect();
    match serde_json::from_str(&repaired) {
        Ok(value) => MendOutcome { value: Some(value), repaired: true, applied_fixes: fixes },
        Err(_) => MendOutcome { value: None, repaired: false, applied_fixes: fixes },
    }
}

/// Body of the first markdown code fence, if any.
fn fenced_body(s: &str) -> Option<&str> {
    let open = s.find("```")?;
    let after = &s[open + 3..];
    let tag_len = after
        .char_indices()
        .find(|(_, c)| !c.is_ascii_alphanumeric())
        .map_or(after.len(), |(i, _)| i);
    let body = &after[tag_len..];
    let end = body.find("```").unwrap_or(body.len());
    Some(&body[..end])
}

/// First balanced `{...}` / `[...]` region, or everything from the first
/// opener to the end when the input is truncated.
fn extract_region(raw: &str) -> Option<Vec<char>> {
    let raw = raw.trim_start_matches('\u{feff}');
    let source = fenced_body(raw)
        .filter(|body| body.contains(['{', '[']))
        .unwrap_or(raw);
    let chars: Vec<char> = source.chars().collect();
    let start = chars.iter().position(|&c| c == '{' || c == '[')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    let mut end = chars.len();
    for (i, &c) in chars.iter().enumerate().skip(start) {
        if in_str {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    end = i + 1;
                    break;
                }
            }
            _ => {}
        }
    }
    let mut region = chars[start..end].to_vec();
    while region.last().is_some_and(|c| c.is_whitespace()) {
        region.pop();
    }
    Some(region)
}

/// Copies a double-quoted string starting at `chars[i] == '"'`; returns the
/// index after the closing quote (or the input length when unterminated).
fn copy_string(chars: &[char], mut i: usize, out: &mut Vec<char>) -> usize {
    out.push(chars[i]);
    i += 1;
    while i < chars.len() {
        let c = chars[i];
        out.push(c);
        i += 1;
        if c == '\\' {
            if i < chars.len() {
                out.push(chars[i]);
                i += 1;
            }
        } else if c == '"' {
            break;
        }
    }
    i
}

fn next_significant(chars: &[char], from: usize) -> Option<char> {
    chars[from.min(chars.len())..].iter().copied().find(|c| !c.is_whitespace())
}

fn closer(open: char) -> char {
    if open == '{' {
        '}'
    } else {
        ']'
    }
}

fn smart_quotes(chars: &[char]) -> Option<Vec<char>> {
    const OPEN_CLOSE: [char; 3] = ['\u{201c}', '\u{201d}', '\u{201e}'];
    const SINGLE: [char; 2] = ['\u{2018}', '\u{2019}'];
    let mut out = Vec::with_capacity(chars.len());
    let mut changed = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '"' {
            i = copy_string(chars, i, &mut out);
            continue;
        }
        if OPEN_CLOSE.contains(&c) {
            changed = true;
            out.push('"');
            i += 1;
            while i < chars.len() {
                let c = chars[i];
                i += 1;
                if OPEN_CLOSE.contains(&c) {
                    out.push('"');
                    break;
                } else if c == '"' {
                    out.extend(['\\', '"']);
                } else if c == '\\' && i < chars.len() {
                    out.extend([c, chars[i]]);
                    i += 1;
                } else {
                    out.push(c);
                }
            }
            continue;
        }
        if SINGLE.contains(&c) {
            changed = true;
            out.push('\'');
        } else {
            out.push(c);
        }
        i += 1;
    }
    changed.then_some(out)
}

fn single_quotes(chars: &[char]) -> Option<Vec<char>> {
    let mut out = Vec::with_capacity(chars.len());
    let mut changed = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '"' {
            i = copy_string(chars, i, &mut out);
            continue;
        }
        if c != '\'' {
            out.push(c);
            i += 1;
            continue;
        }
        changed = true;
        out.push('"');
        i += 1;
        while i < chars.len() {
            let c = chars[i];
            i += 1;
            match c {
                '\\' if i < chars.len() => {
                    if chars[i] == '\'' {
                        out.push('\'');
                    } else {
                        out.extend(['\\', chars[i]]);
                    }
                    i += 1;
                }
                '"' => out.extend(['\\', '"']),
                '\'' => {
                    // An apostrophe only closes the string before a structural character.
                    let closes = matches!(next_significant(chars, i), None | Some(',' | ':' | '}' | ']'));
                    if closes {
                        out.push('"');
                        break;
                    }
                    out.push('\'');
                }
                _ => out.push(c),
            }
        }
    }
    changed.then_some(out)
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '$'
}

fn bare_keys(chars: &[char]) -> Option<Vec<char>> {
    let mut out = Vec::with_capacity(chars.len() + 8);
    let mut stack = Vec::new();
    let mut last_sig = None;
    let mut changed = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '"' => {
                i = copy_string(chars, i, &mut out);
                last_sig = Some('"');
                continue;
            }
            '{' | '[' => stack.push(c),
            '}' | ']' => {
                stack.pop();
            }
            _ => {}
        }
        let key_position = stack.last() == Some(&'{') && matches!(last_sig, Some('{' | ','));
        if key_position && is_ident_start(c) {
            let mut j = i;
            while j < chars.len() && !matches!(chars[j], ':' | ',' | '{' | '}' | '[' | ']' | '"' | '\n') {
                j += 1;
            }
            if j < chars.len() && chars[j] == ':' {
                let token: String = chars[i..j].iter().collect();
                let trimmed = token.trim_end();
                out.push('"');
                for ch in trimmed.chars() {
                    if ch == '\\' || ch == '"' {
                        out.push('\\');
                    }
                    out.push(ch);
                }
                out.push('"');
                out.extend(token[trimmed.len()..].chars());
                changed = true;
                last_sig = Some('"');
                i = j;
                continue;
            }
        }
        out.push(c);
        if !c.is_whitespace() {
            last_sig = Some(c);
        }
        i += 1;
    }
    changed.then_some(out)
}

fn trailing_commas(chars: &[char]) -> Option<Vec<char>> {
    let mut out = Vec::with_capacity(chars.len());
    let mut changed = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '"' {
            i = copy_string(chars, i, &mut out);
            continue;
        }
        if c == ',' && matches!(next_significant(chars, i + 1), Some('}' | ']')) {
            changed = true;
        } else {
            out.push(c);
        }
        i += 1;
    }
    changed.then_some(out)
}

fn is_value_start(c: char) -> bool {
    matches!(c, '"' | '{' | '[' | '-') || c.is_ascii_digit() || c.is_alphabetic()
}

fn is_bare_token_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '.' | '+' | '-')
}

fn missing_commas(chars: &[char]) -> Option<Vec<char>> {
    let mut out = Vec::with_capacity(chars.len() + 8);
    let mut value_ended = false;
    let mut changed = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            out.push(c);
            i += 1;
            continue;
        }
        if value_ended && is_value_start(c) {
            out.push(',');
            changed = true;
        }
        if c == '"' {
            i = copy_string(chars, i, &mut out);
            value_ended = true;
            continue;
        }
        if is_value_start(c) && c != '{' && c != '[' {
            while i < chars.len() && is_bare_token_char(chars[i]) {
                out.push(chars[i]);
                i += 1;
            }
            value_ended = true;
            continue;
        }
        out.push(c);
        value_ended = matches!(c, '}' | ']');
        i += 1;
    }
    changed.then_some(out)
}

fn python_literals(chars: &[char]) -> Option<Vec<char>> {
    let mut out = Vec::with_capacity(chars.len());
    let mut changed = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '"' {
            i = copy_string(chars, i, &mut out);
            continue;
        }
        if c.is_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let replacement = match word.as_str() {
                "True" => Some("true"),
                "False" => Some("false"),
                "None" => Some("null"),
                _ => None,
            };
            match replacement {
                Some(r) => {
                    out.extend(r.chars());
                    changed = true;
                }
                None => out.extend(&chars[start..i]),
            }
            continue;
        }
        out.push(c);
        i += 1;
    }
    changed.then_some(out)
}

fn control_chars(chars: &[char]) -> Option<Vec<char>> {
    let mut out = Vec::with_capacity(chars.len());
    let mut in_str = false;
    let mut changed = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        i += 1;
        if !in_str {
            in_str = c == '"';
            out.push(c);
            continue;
        }
        match c {
            '\\' => {
                out.push(c);
                if i < chars.len() {
                    out.push(chars[i]);
                    i += 1;
                }
            }
            '"' => {
                in_str = false;
                out.push(c);
            }
            '\n' => out.extend(['\\', 'n']),
            '\r' => out.extend(['\\', 'r']),
            '\t' => out.extend(['\\', 't']),
            c if (c as u32) < 0x20 => out.extend(format!("\\u{:04x}", c as u32).chars()),
            _ => {
                out.push(c);
                continue;
            }
        }
        if c != '\\' && c != '"' {
            changed = true;
        }
    }
    changed.then_some(out)
}

fn close_strings(chars: &[char]) -> Option<Vec<char>> {
    let mut in_str = false;
    let mut escaped = false;
    for &c in chars {
        if in_str {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
        } else if c == '"' {
            in_str = true;
        }
    }
    if !in_str {
        return None;
    }
    let mut out = chars.to_vec();
    if escaped {
        out.pop();
    }
    out.push('"');
    Some(out)
}

/// Fixes mismatched closers, drops a dangling key or comma at the end of
/// truncated output and appends the missing closers.
fn close_brackets(chars: &[char]) -> Option<Vec<char>> {
    let mut out = Vec::with_capacity(chars.len() + 8);
    let mut stack: Vec<char> = Vec::new();
    let mut last_sig = None;
    let mut pending_key = None;
    let mut changed = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            out.push(c);
            i += 1;
            continue;
        }
        pending_key = None;
        match c {
            '"' => {
                let is_key = stack.last() == Some(&'{') && matches!(last_sig, Some('{' | ','));
                let start = out.len();
                i = copy_string(chars, i, &mut out);
                if is_key {
                    pending_key = Some(start);
                }
                last_sig = Some('"');
                continue;
            }
            '{' | '[' => {
                stack.push(c);
                out.push(c);
            }
            '}' | ']' => {
                let open = if c == '}' { '{' } else { '[' };
                if stack.last() == Some(&open) {
                    stack.pop();
                    out.push(c);
                } else if let Some(pos) = stack.iter().rposition(|&o| o == open) {
                    while stack.len() > pos + 1 {
                        let o = stack.pop().expect("non-empty");
                        out.push(closer(o));
                    }
                    stack.pop();
                    out.push(c);
                    changed = true;
                } else {
                    changed = true;
                    i += 1;
                    continue;
                }
            }
            _ => out.push(c),
        }
        last_sig = Some(c);
        i += 1;
    }
    if let Some(start) = pending_key {
        out.truncate(start);
        changed = true;
    }
    loop {
        while out.last().is_some_and(|c| c.is_whitespace()) {
            out.pop();
        }
        if out.last() == Some(&',') {
            out.pop();
            changed = true;
        } else {
            break;
        }
    }
    if out.last() == Some(&':') {
        out.extend(['"', '"']);
        changed = true;
    }
    while let Some(open) = stack.pop() {
        out.push(closer(open));
        changed = true;
    }
    changed.then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn run(pass: Pass, s: &str) -> Option<String> {
        let chars: Vec<char> = s.chars().collect();
        pass(&chars).map(|v| v.into_iter().collect())
    }

    #[test]
    fn strict_input_passes_through() {
        let out = mend(r#"{"a": 1}"#);
        assert_eq!(out.value, Some(json!({"a": 1})));
        assert!(!out.repaired);
        assert!(out.applied_fixes.is_empty());
    }

    #[test]
    fn fenced_single_quotes() {
        let out = mend("```json\n{'aspect_based_sentiment_analysis': []}\n```");
        assert_eq!(out.value, Some(json!({"aspect_based_sentiment_analysis": []})));
        assert!(out.repaired);
        assert_eq!(out.applied_fixes, vec![Fix::ExtractRegion, Fix::SingleQuotes]);
    }

    #[test]
    fn truncated_array_is_closed() {
        let out = mend(r#"{"a": [1, 2"#);
        assert_eq!(out.value, Some(json!({"a": [1, 2]})));
        assert!(out.repaired);
        assert_eq!(out.applied_fixes, vec![Fix::CloseBrackets]);
    }

    #[test]
    fn invalid_outcome_has_no_value() {
        let out = mend("no json here");
        assert!(out.is_invalid());
        assert!(!out.repaired);
    }

    #[test]
    fn key_order_is_preserved() {
        let out = mend(r#"{"z": 1, "a": 2, "m": 3}"#);
        let keys: Vec<_> = out.value.unwrap().as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, vec!["z", "a", "m"]);
    }

    #[test]
    fn individual_passes() {
        assert_eq!(run(trailing_commas, "[1, 2 , ]").as_deref(), Some("[1, 2  ]"));
        assert_eq!(run(trailing_commas, r#"["a,]"]"#), None);
        assert_eq!(run(python_literals, r#"[True, "None", Nonesuch]"#).as_deref(), Some(r#"[true, "None", Nonesuch]"#));
        assert_eq!(run(bare_keys, "{a b: 1}").as_deref(), Some(r#"{"a b": 1}"#));
        assert_eq!(run(bare_keys, "[true, false]"), None);
        assert_eq!(run(single_quotes, "{'a': 'it's fine'}").as_deref(), Some(r#"{"a": "it's fine"}"#));
        assert_eq!(run(missing_commas, r#"{"a": 1 "b": [2 3]}"#).as_deref(), Some(r#"{"a": 1 ,"b": [2 ,3]}"#));
        assert_eq!(run(close_strings, r#"{"a": "x\"#).as_deref(), Some(r#"{"a": "x""#));
        assert_eq!(run(close_brackets, r#"{"a": [1}"#).as_deref(), Some(r#"{"a": [1]}"#));
        assert_eq!(run(close_brackets, r#"{"a":"#).as_deref(), Some(r#"{"a":""}"#));
        assert_eq!(run(control_chars, "[\"a\u{1}b\"]").as_deref(), Some("[\"a\\u0001b\"]"));
        assert_eq!(run(smart_quotes, "{\u{201c}a\u{201d}: \"\u{201c}q\u{201d}\"}").as_deref(), Some("{\"a\": \"\u{201c}q\u{201d}\"}"));
    }

    #[test]
    fn prose_with_trailing_garbage_keeps_first_region() {
        let out = mend("Answer: {\"a\": {\"b\": 1}} and also {\"c\": 2}");
        assert_eq!(out.value, Some(json!({"a": {"b": 1}})));
        assert_eq!(out.applied_fixes, vec![Fix::ExtractRegion]);
    }

    #[test]
    fn deep_nesting_does_not_panic() {
        let deep = "[".repeat(10_000);
        let out = mend(&deep);
        assert!(out.value.is_none() || out.repaired);
    }
}
