//! Minimal JSON-schema validation covering the subset the judge contracts
//! use: `type`, `properties`, `required`, `items`, `enum`, `minimum`,
//! `maximum`. All response schemas are owned by this crate, so nothing more
//! is needed.

use serde_json::Value;

/// Validates `value` against `schema_text`. Returns the first violation as a
/// human-readable string, used verbatim in corrective retry messages.
pub fn validate(schema_text: &str, value: &Value) -> Result<(), String> {
    let schema: Value =
        serde_json::from_str(schema_text).map_err(|e| format!("schema is not valid JSON: {e}"))?;
    check(&schema, value, "$")
}

fn check(schema: &Value, value: &Value, path: &str) -> Result<(), String> {
    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            return Err(format!(
                "{path}: value {value} is not one of the allowed values {}",
                serde_json::to_string(allowed).unwrap_or_default()
            ));
        }
        return Ok(());
    }

    if let Some(ty) = schema.get("type") {
        let names: Vec<&str> = match ty {
            Value::String(s) => vec![s.as_str()],
            Value::Array(list) => list.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        if !names.iter().any(|name| type_matches(name, value)) {
            return Err(format!(
                "{path}: expected type {}, got {}",
                names.join(" or "),
                type_name(value)
            ));
        }
    }

    if let Some(min) = schema.get("minimum").and_then(Value::as_i64) {
        if let Some(n) = value.as_i64() {
            if n < min {
                return Err(format!("{path}: {n} is below minimum {min}"));
            }
        }
    }
    if let Some(max) = schema.get("maximum").and_then(Value::as_i64) {
        if let Some(n) = value.as_i64() {
            if n > max {
                return Err(format!("{path}: {n} is above maximum {max}"));
            }
        }
    }

    if let Some(required) = schema.get("required").and_then(Value::as_array) {
        if let Some(obj) = value.as_object() {
            for name in required.iter().filter_map(Value::as_str) {
                if !obj.contains_key(name) {
                    return Err(format!("{path}: missing required property '{name}'"));
                }
            }
        }
    }

    if let (Some(props), Some(obj)) = (
        schema.get("properties").and_then(Value::as_object),
        value.as_object(),
    ) {
        for (name, sub) in props {
            if let Some(v) = obj.get(name) {
                check(sub, v, &format!("{path}.{name}"))?;
            }
        }
    }

    if let (Some(items), Some(list)) = (schema.get("items"), value.as_array()) {
        for (i, v) in list.iter().enumerate() {
            check(items, v, &format!("{path}[{i}]"))?;
        }
    }

    Ok(())
}

fn type_matches(name: &str, value: &Value) -> bool {
    match name {
        "string" => value.is_string(),
        "integer" => value.is_i64() || value.is_u64(),
        "number" => value.is_number(),
        "boolean" => value.is_boolean(),
        "object" => value.is_object(),
        "array" => value.is_array(),
        "null" => value.is_null(),
        _ => false,
    }
}

fn type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

pub const CLASSIFY_SECTION: &str = r#"{
  "type": "object",
  "required": ["category"],
  "properties": {
    "category": {"enum": ["Abstract", "Introduction", "Related Work", "Method", "Benchmark Construction", "Experiment", "Conclusion"]}
  }
}"#;

pub const RUBRIC_EXTRACT: &str = r#"{
  "type": "object",
  "required": ["elements"],
  "properties": {
    "elements": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["name", "importance", "description", "evidence"],
        "properties": {
          "name": {"type": "string"},
          "importance": {"enum": ["high", "medium", "low"]},
          "description": {"type": "string"},
          "evidence": {"type": "string"}
        }
      }
    }
  }
}"#;

pub const RUBRIC_SCORE: &str = r#"{
  "type": "object",
  "required": ["scores"],
  "properties": {
    "scores": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["element", "score"],
        "properties": {
          "element": {"type": "string"},
          "score": {"type": "integer", "minimum": 1, "maximum": 5},
          "reasoning": {"type": "string"}
        }
      }
    }
  }
}"#;

pub const CLAIM_EXTRACT: &str = r#"{
  "type": "object",
  "required": ["claims"],
  "properties": {
    "claims": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["claim", "classification"],
        "properties": {
          "claim": {"type": "string"},
          "classification": {"enum": ["supported", "neutral", "contradictory"]},
          "evidence": {"type": "string"},
          "severity": {"enum": ["major", "minor", null]}
        }
      }
    }
  }
}"#;

pub const VERIFY_CLAIMS: &str = r#"{
  "type": "object",
  "required": ["results"],
  "properties": {
    "results": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["classification"],
        "properties": {
          "classification": {"enum": ["supported", "neutral", "contradictory"]},
          "severity": {"enum": ["major", "minor", "none", null]},
          "evidence": {"type": "string"}
        }
      }
    }
  }
}"#;

pub const FIGURE_CONTEXT: &str = r#"{
  "type": "object",
  "required": ["score"],
  "properties": {
    "score": {"type": "integer", "minimum": 1, "maximum": 5},
    "reasoning": {"type": "string"}
  }
}"#;

pub const TABLE_SCORE: &str = r#"{
  "type": "object",
  "required": ["score"],
  "properties": {
    "score": {"type": "integer", "minimum": 1, "maximum": 5},
    "reasoning": {"type": "string"}
  }
}"#;

pub const TABLE_MATCH: &str = r#"{
  "type": "object",
  "required": ["matches"],
  "properties": {
    "matches": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["gt_index", "pred_index"],
        "properties": {
          "gt_index": {"type": "integer", "minimum": 0},
          "pred_index": {"type": "integer", "minimum": 0}
        }
      }
    }
  }
}"#;

/// Pseudo-schema recorded for markdown overview responses; hashing input for
/// idempotency keys, not a JSON schema.
pub fn overview_contract(kind: &str, length: &str) -> String {
    format!("markdown-overview/{kind}/{length}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn accepts_valid_classification() {
        let v = json!({"category": "Method"});
        assert!(validate(CLASSIFY_SECTION, &v).is_ok());
    }

    #[test]
    fn rejects_unknown_enum_value() {
        let v = json!({"category": "Methods and Materials"});
        let err = validate(CLASSIFY_SECTION, &v).unwrap_err();
        assert!(err.contains("allowed values"));
    }

    #[test]
    fn rejects_missing_required() {
        let v = json!({"notes": "hi"});
        assert!(validate(CLASSIFY_SECTION, &v).is_err());
    }

    #[test]
    fn score_bounds_enforced() {
        let good = json!({"scores": [{"element": "x", "score": 5, "reasoning": "ok"}]});
        assert!(validate(RUBRIC_SCORE, &good).is_ok());
        let low = json!({"scores": [{"element": "x", "score": 0}]});
        assert!(validate(RUBRIC_SCORE, &low).is_err());
        let high = json!({"scores": [{"element": "x", "score": 6}]});
        assert!(validate(RUBRIC_SCORE, &high).is_err());
    }

    #[test]
    fn claim_severity_allows_null() {
        let v = json!({"claims": [
            {"claim": "a", "classification": "supported", "severity": null},
            {"claim": "b", "classification": "contradictory", "severity": "major"}
        ]});
        assert!(validate(CLAIM_EXTRACT, &v).is_ok());
    }

    #[test]
    fn category_enum_is_seven_wide() {
        let schema: serde_json::Value = serde_json::from_str(CLASSIFY_SECTION).unwrap();
        let names = schema["properties"]["category"]["enum"].as_array().unwrap();
        assert_eq!(names.len(), 7);
    }
}
