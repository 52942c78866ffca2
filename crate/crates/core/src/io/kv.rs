use crate::error::{Error, Result};

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
///
/// Later duplicates win, matching command-line override order.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::parse(format!("config line {}", lineno + 1), "expected key = value"));
        };
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::parse(format!("config line {}", lineno + 1), "empty key"));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn format_kv(entries: &[(&str, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}
