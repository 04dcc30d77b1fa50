//! Canonical JSON rendering shared by every document this crate writes.
//!
//! Output has no insignificant whitespace, object keys in lexicographic byte
//! order, and every non-ASCII character escaped as `\uXXXX` (surrogate pairs
//! above the BMP). The result is plain JSON and parses with any reader.

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum CanonicalError {
    #[error("value is not representable as JSON: {0}")]
    Encode(#[from] serde_json::Error),
    #[error("non-finite number at {0}")]
    NonFinite(String),
}

/// Render any serializable value canonically.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    let value = serde_json::to_value(value)?;
    Ok(value_to_canonical_string(&value))
}

pub fn value_to_canonical_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value);
    out
}

fn write_value(out: &mut String, value: &Value) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => out.push_str(&n.to_string()),
        Value::String(s) => write_string(out, s),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_string(out, key);
                out.push(':');
                write_value(out, &map[key]);
            }
            out.push('}');
        }
    }
}

fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '\u{08}' => out.push_str("\\b"),
            '\u{0c}' => out.push_str("\\f"),
            c if (c as u32) < 0x20 || (c as u32) > 0x7e => {
                let mut buf = [0u16; 2];
                for unit in c.encode_utf16(&mut buf) {
                    out.push_str(&format!("\\u{:04x}", unit));
                }
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Walk a JSON value and report the first float that serde mapped to `null`
/// or that is otherwise non-finite. Used before exporting numeric series.
pub fn check_finite(values: &[(String, f64)]) -> Result<(), CanonicalError> {
    match values.iter().find(|(_, v)| !v.is_finite()) {
        Some((path, _)) => Err(CanonicalError::NonFinite(path.clone())),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_sorted_and_compact() {
        let v = json!({"zoo": [1, 2], "abc": {"y": true, "x": null}, "m": 1.5});
        assert_eq!(
            value_to_canonical_string(&v),
            r#"{"abc":{"x":null,"y":true},"m":1.5,"zoo":[1,2]}"#
        );
    }

    #[test]
    fn non_ascii_is_escaped_and_round_trips() {
        let v = json!({"id": "Rack-é☃😀"});
        let s = value_to_canonical_string(&v);
        assert!(s.is_ascii());
        assert_eq!(s, r#"{"id":"Rack-\u00e9\u2603\ud83d\ude00"}"#);
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn control_characters_escaped() {
        let s = value_to_canonical_string(&json!("a\u{1}b\n"));
        assert_eq!(s, r#""a\u0001b\n""#);
    }
}
