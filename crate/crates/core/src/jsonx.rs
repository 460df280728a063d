//! Locating JSON inside free-form model output.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no JSON value found in response")]
pub struct NoJson;

/// Returns the first complete JSON object or array embedded in `text`,
/// skipping prose, code fences and any candidate that fails to parse.
pub fn extract_first_json(text: &str) -> Result<Value, NoJson> {
    for (start, c) in text.char_indices() {
        if c != '{' && c != '[' {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        if let Some(Ok(value)) = stream.next() {
            if value.is_object() || value.is_array() {
                return Ok(value);
            }
        }
    }
    Err(NoJson)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn finds_fenced_json() {
        let text = "Sure! Here you go:\n```json\n{\"a\": [1, 2]}\n```\nanything else?";
        assert_eq!(extract_first_json(text).unwrap(), json!({"a": [1, 2]}));
    }

    #[test]
    fn skips_broken_candidates() {
        let text = "see [note] then {\"ok\": true}";
        assert_eq!(extract_first_json(text).unwrap(), json!({"ok": true}));
        let text = "{oops} [1, 2]";
        assert_eq!(extract_first_json(text).unwrap(), json!([1, 2]));
    }

    #[test]
    fn first_of_several() {
        assert_eq!(extract_first_json("{\"a\":1}{\"b\":2}").unwrap(), json!({"a": 1}));
    }

    #[test]
    fn none() {
        assert_eq!(extract_first_json("no json here"), Err(NoJson));
        assert_eq!(extract_first_json(""), Err(NoJson));
        assert_eq!(extract_first_json("{\"unterminated\": "), Err(NoJson));
    }
}
