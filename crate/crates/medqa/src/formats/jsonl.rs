use serde::de::DeserializeOwned;
use serde::Serialize;

use super::FormatError;

/// One compact JSON document per line, each terminated by `\n`.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String, FormatError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parse every nonblank line; the error names the first bad line.
pub fn read_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, FormatError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|_| FormatError::MalformedRecord(i + 1)))
        .collect()
}
