//! Pulls the JSON payload out of chat-model output (code fences, lead-in prose).

use alloc::string::String;

use serde_json::Value;

/// Strips an optional code fence and any text before the first `[` or `{`.
pub(crate) fn payload(text: &str) -> &str {
    let mut body = text.trim();
    if let Some(start) = body.find("```") {
        let after = &body[start + 3..];
        // skip the info string (e.g. `json`) on the fence line
        let after = match after.find('\n') {
            Some(nl) => &after[nl + 1..],
            None => after,
        };
        body = match after.find("```") {
            Some(end) => &after[..end],
            None => after,
        };
    }
    match body.find(['[', '{']) {
        Some(i) => body[i..].trim(),
        None => body.trim(),
    }
}

/// Parses the first JSON value in the payload; trailing prose is ignored.
pub(crate) fn first_value(text: &str) -> Result<Value, String> {
    let body = payload(text);
    let mut stream = serde_json::Deserializer::from_str(body).into_iter::<Value>();
    match stream.next() {
        Some(Ok(v)) => Ok(v),
        Some(Err(e)) => Err(alloc::format!("{e}")),
        None => Err(String::from("no JSON value found")),
    }
}

/// Complete leading elements of a list cut off mid-way, plus the reason the
/// rest could not be read. `None` when the payload does not open a list.
pub(crate) fn salvage_list(text: &str) -> Option<(alloc::vec::Vec<Value>, String)> {
    let mut rest = payload(text).strip_prefix('[')?;
    let mut items = alloc::vec::Vec::new();
    loop {
        rest = rest.trim_start();
        if rest.is_empty() {
            return Some((items, String::from("list ends before its closing bracket")));
        }
        let mut stream = serde_json::Deserializer::from_str(rest).into_iter::<Value>();
        match stream.next() {
            Some(Ok(v)) => {
                let used = stream.byte_offset();
                items.push(v);
                rest = rest[used..].trim_start();
                match rest.strip_prefix(',') {
                    Some(r) => rest = r,
                    None => return Some((items, String::from("list ends before its closing bracket"))),
                }
            }
            Some(Err(e)) => return Some((items, alloc::format!("{e}"))),
            None => return Some((items, String::from("list ends before its closing bracket"))),
        }
    }
}

/// First `max` characters of `s`, for error messages.
pub(crate) fn snippet(s: &str, max: usize) -> String {
    let mut out: String = s.chars().take(max).collect();
    if s.chars().count() > max {
        out.push('…');
    }
    out
}

/// Lowercases a key and maps spaces and hyphens to underscores.
pub(crate) fn normalize_key(k: &str) -> String {
    k.trim()
        .chars()
        .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_and_bare() {
        assert_eq!(payload("```json\n[1, 2]\n```\n"), "[1, 2]");
        assert_eq!(payload("Here you go:\n{\"a\": 1}"), "{\"a\": 1}");
        assert_eq!(payload("```\n{}\n```"), "{}");
    }

    #[test]
    fn trailing_prose_is_ignored() {
        assert_eq!(first_value("[1] hope this helps").unwrap(), serde_json::json!([1]));
    }

    #[test]
    fn truncation_is_an_error() {
        assert!(first_value("```json\n[{\"a\": 1}, {\"b\"").is_err());
        assert!(first_value("nothing here").is_err());
    }

    #[test]
    fn salvage_keeps_complete_records() {
        let (items, why) = salvage_list("```json\n[{\"a\": 1}, {\"b\": 2},\n  {\"c\"").unwrap();
        assert_eq!(items, [serde_json::json!({"a": 1}), serde_json::json!({"b": 2})]);
        assert!(!why.is_empty());
        let (items, _) = salvage_list("[{\"a\": 1},").unwrap();
        assert_eq!(items.len(), 1);
        assert!(salvage_list("{\"a\": 1").is_none());
    }

    #[test]
    fn key_normalization() {
        assert_eq!(normalize_key("AI User"), "ai_user");
        assert_eq!(normalize_key("ai-subject"), "ai_subject");
    }
}
