//! Lenient readers for model output: code fences and surrounding prose are
//! tolerated, then the payload is checked strictly.

use std::collections::BTreeMap;

use serde_json::Value;

/// Extracts the first balanced JSON object from `raw` and flattens its
/// values to strings. Non-scalar values are dropped.
pub fn json_map(raw: &str) -> Result<BTreeMap<String, String>, String> {
    let body = strip_fences(raw);
    let start = body.find('{').ok_or("no JSON object in response")?;
    let end = matching_brace(&body[start..]).ok_or("unterminated JSON object in response")?;
    let object: serde_json::Map<String, Value> = serde_json::from_str(&body[start..start + end + 1])
        .map_err(|e| format!("invalid JSON object: {e}"))?;
    Ok(object
        .into_iter()
        .filter_map(|(k, v)| {
            let text = match v {
                Value::String(s) => s,
                Value::Number(n) => n.to_string(),
                Value::Bool(b) => b.to_string(),
                _ => return None,
            };
            Some((k.trim().to_string(), text.trim().to_string()))
        })
        .collect())
}

fn strip_fences(raw: &str) -> String {
    raw.lines()
        .filter(|line| !line.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

// Byte offset of the brace closing the object that opens at offset 0.
fn matching_brace(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Non-empty trimmed lines, fences removed.
pub fn label_list(raw: &str) -> Result<Vec<String>, String> {
    let lines: Vec<String> = strip_fences(raw)
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if lines.is_empty() {
        Err("empty response".into())
    } else {
        Ok(lines)
    }
}

/// Splits a leading `(n)`, `n.` or `n)` label off a line.
pub fn numbered(line: &str) -> Option<(usize, &str)> {
    let line = line.trim();
    let (digits, rest) = if let Some(inner) = line.strip_prefix('(') {
        let close = inner.find(')')?;
        (&inner[..close], &inner[close + 1..])
    } else {
        let end = line.find(|c: char| !c.is_ascii_digit())?;
        let rest = &line[end..];
        let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
        (&line[..end], rest)
    };
    let n = digits.trim().parse().ok()?;
    Some((n, rest.trim()))
}

/// Removes one layer of matching straight or curly quotes.
pub fn unquote(s: &str) -> &str {
    let s = s.trim();
    for (open, close) in [('"', '"'), ('“', '”'), ('\'', '\'')] {
        if let Some(inner) = s.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
            return inner.trim();
        }
    }
    s
}

/// Renders items as a `1. text` list, the shape every batched judge prompt
/// receives.
pub fn numbered_list<S: AsRef<str>>(items: &[S]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Inverse of [`numbered_list`], keyed by label.
pub fn parse_numbered_list(text: &str) -> BTreeMap<usize, String> {
    text.lines()
        .filter_map(numbered)
        .map(|(n, rest)| (n, rest.to_string()))
        .collect()
}
