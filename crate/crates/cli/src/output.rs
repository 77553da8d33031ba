//! Deterministic JSON printer: floats as `{:.16e}`, non-finite as null,
//! two-space indentation, key order preserved.

use std::fmt::Write;

use serde_json::Value;

pub fn to_json(v: &Value) -> String {
    let mut s = String::new();
    write_value(&mut s, v, 0);
    s.push('\n');
    s
}

fn write_value(s: &mut String, v: &Value, indent: usize) {
    match v {
        Value::Null => s.push_str("null"),
        Value::Bool(b) => s.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().expect("f64 number");
                if x.is_finite() {
                    write!(s, "{x:.16e}").unwrap();
                } else {
                    s.push_str("null");
                }
            } else {
                write!(s, "{n}").unwrap();
            }
        }
        Value::String(t) => s.push_str(&Value::String(t.clone()).to_string()),
        Value::Array(a) if a.is_empty() => s.push_str("[]"),
        Value::Array(a) => {
            // Flat numeric arrays stay on one line.
            if a.iter().all(|x| x.is_number() || x.is_null()) {
                s.push('[');
                for (i, x) in a.iter().enumerate() {
                    if i > 0 {
                        s.push_str(", ");
                    }
                    write_value(s, x, indent);
                }
                s.push(']');
                return;
            }
            s.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                pad(s, indent + 1);
                write_value(s, x, indent + 1);
                s.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            pad(s, indent);
            s.push(']');
        }
        Value::Object(m) if m.is_empty() => s.push_str("{}"),
        Value::Object(m) => {
            s.push_str("{\n");
            for (i, (k, x)) in m.iter().enumerate() {
                pad(s, indent + 1);
                s.push_str(&Value::String(k.clone()).to_string());
                s.push_str(": ");
                write_value(s, x, indent + 1);
                s.push_str(if i + 1 < m.len() { ",\n" } else { "\n" });
            }
            pad(s, indent);
            s.push('}');
        }
    }
}

fn pad(s: &mut String, indent: usize) {
    for _ in 0..indent {
        s.push_str("  ");
    }
}

/// Removes every `runtime_s` key, recursively.
pub fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("runtime_s");
            m.values_mut().for_each(strip_timing);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_use_fixed_scientific_form() {
        let v = json!({"a": 0.1, "n": 3, "xs": [1.0, -2.5], "s": "x\"y"});
        let out = to_json(&v);
        assert!(out.contains("\"a\": 1.0000000000000001e-1"));
        assert!(out.contains("\"n\": 3"));
        assert!(out.contains("[1.0000000000000000e0, -2.5000000000000000e0]"));
        assert!(out.contains("\"s\": \"x\\\"y\""));
    }

    #[test]
    fn non_finite_is_null() {
        let v = Value::Array(vec![Value::Null, json!(1.5)]);
        assert_eq!(to_json(&v), "[null, 1.5000000000000000e0]\n");
    }

    #[test]
    fn timing_removed_at_depth() {
        let mut v = json!({"runtime_s": 1.0, "rows": [{"mu": 2.0, "runtime_s": 0.5}]});
        strip_timing(&mut v);
        assert_eq!(v, json!({"rows": [{"mu": 2.0}]}));
    }
}
