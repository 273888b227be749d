//! Turning model responses into JSON records.

use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JsonError {
    #[error("response is not a JSON object: {0}")]
    NotAnObject(String),
    #[error("no JSON value found in response")]
    NoJsonFound,
}

/// Parse the whole trimmed response as a JSON object.
pub fn postprocess_to_record(response: &str) -> Result<Map<String, Value>, JsonError> {
    match serde_json::from_str::<Value>(response.trim()) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(other) => Err(JsonError::NotAnObject(format!("found {}", kind(&other)))),
        Err(e) => Err(JsonError::NotAnObject(e.to_string())),
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// End (exclusive byte index) of the bracketed region opening at `start`,
/// skipping brackets inside string literals.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut stack = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.pop() != Some(b) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// The first balanced `{...}` or `[...]` region that parses as JSON,
/// ignoring any surrounding prose or code fences.
pub fn extract_first_json_value(response: &str) -> Result<Value, JsonError> {
    let bytes = response.as_bytes();
    for (start, &b) in bytes.iter().enumerate() {
        if b != b'{' && b != b'[' {
            continue;
        }
        if let Some(end) = balanced_end(bytes, start) {
            if let Ok(v) = serde_json::from_str(&response[start..end]) {
                return Ok(v);
            }
        }
    }
    Err(JsonError::NoJsonFound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn whole_response_only() {
        assert_eq!(
            Value::Object(postprocess_to_record(" {\"materials\": [\"zeolite\"]}\n").unwrap()),
            json!({"materials": ["zeolite"]})
        );
        assert!(postprocess_to_record("Sure! {\"a\":1}").is_err());
        assert!(postprocess_to_record("").is_err());
        assert!(postprocess_to_record("[1]").is_err());
    }

    #[test]
    fn first_value_wins() {
        assert_eq!(extract_first_json_value("Sure! {\"a\": 1}").unwrap(), json!({"a": 1}));
        assert_eq!(
            extract_first_json_value("x {\"a\": {\"b\": [1,2]}} y {\"c\":3}").unwrap(),
            json!({"a": {"b": [1, 2]}})
        );
        assert_eq!(extract_first_json_value("no json here"), Err(JsonError::NoJsonFound));
    }

    #[test]
    fn brackets_in_strings_and_fences() {
        assert_eq!(
            extract_first_json_value("```json\n{\"s\": \"a } b\"}\n```").unwrap(),
            json!({"s": "a } b"})
        );
        assert_eq!(extract_first_json_value("see [x] then [1, 2]").unwrap(), json!([1, 2]));
        assert_eq!(extract_first_json_value("{\"q\": \"\\\"}\"}").unwrap(), json!({"q": "\"}"}));
    }
}
