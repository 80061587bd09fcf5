//! Minimal structural JSON-schema validation for emitted results.
//!
//! Supports the subset the committed schema uses: `type` (string or
//! list), `properties`, `required`, `additionalProperties` (bool),
//! `items`, `minItems`, `maxItems`, `enum`, and `oneOf`.

use serde_json::Value;

/// The committed scene-result schema.
pub fn scene_result_schema() -> Value {
    serde_json::from_str(include_str!("../schema/scene_result.schema.json"))
        .expect("embedded schema parses")
}

/// Validate an emitted scene result against the committed schema.
pub fn validate_scene_result(value: &Value) -> std::result::Result<(), String> {
    validate(value, &scene_result_schema())
}

/// Validate `value` against `schema`; returns the first violation.
pub fn validate(value: &Value, schema: &Value) -> std::result::Result<(), String> {
    validate_at(value, schema, "$")
}

fn type_matches(value: &Value, ty: &str) -> bool {
    match ty {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "number" => value.is_number(),
        "integer" => {
            value.is_i64()
                || value.is_u64()
                || value.as_f64().map(|f| f.fract() == 0.0).unwrap_or(false)
        }
        "boolean" => value.is_boolean(),
        "null" => value.is_null(),
        _ => false,
    }
}

fn validate_at(value: &Value, schema: &Value, path: &str) -> std::result::Result<(), String> {
    let obj = match schema.as_object() {
        Some(o) => o,
        None => return Ok(()),
    };

    if let Some(one_of) = obj.get("oneOf").and_then(|v| v.as_array()) {
        let mut errors = Vec::new();
        for (i, sub) in one_of.iter().enumerate() {
            match validate_at(value, sub, path) {
                Ok(()) => return Ok(()),
                Err(e) => errors.push(format!("variant {i}: {e}")),
            }
        }
        return Err(format!("{path}: no oneOf variant matched ({})", errors.join("; ")));
    }

    if let Some(ty) = obj.get("type") {
        let ok = match ty {
            Value::String(s) => type_matches(value, s),
            Value::Array(list) => list
                .iter()
                .filter_map(|t| t.as_str())
                .any(|t| type_matches(value, t)),
            _ => true,
        };
        if !ok {
            return Err(format!("{path}: expected type {ty}, got {value}"));
        }
    }

    if let Some(allowed) = obj.get("enum").and_then(|v| v.as_array()) {
        if !allowed.contains(value) {
            return Err(format!("{path}: {value} not in enum {allowed:?}"));
        }
    }

    if let Some(map) = value.as_object() {
        if let Some(required) = obj.get("required").and_then(|v| v.as_array()) {
            for key in required.iter().filter_map(|k| k.as_str()) {
                if !map.contains_key(key) {
                    return Err(format!("{path}: missing required key {key:?}"));
                }
            }
        }
        let props = obj.get("properties").and_then(|v| v.as_object());
        let additional = obj
            .get("additionalProperties")
            .and_then(|v| v.as_bool())
            .unwrap_or(true);
        for (key, sub_value) in map {
            match props.and_then(|p| p.get(key)) {
                Some(sub_schema) => {
                    validate_at(sub_value, sub_schema, &format!("{path}.{key}"))?
                }
                None if !additional => {
                    return Err(format!("{path}: unexpected key {key:?}"));
                }
                None => {}
            }
        }
    }

    if let Some(items) = value.as_array() {
        if let Some(min) = obj.get("minItems").and_then(|v| v.as_u64()) {
            if (items.len() as u64) < min {
                return Err(format!("{path}: {} items < minItems {min}", items.len()));
            }
        }
        if let Some(max) = obj.get("maxItems").and_then(|v| v.as_u64()) {
            if (items.len() as u64) > max {
                return Err(format!("{path}: {} items > maxItems {max}", items.len()));
            }
        }
        if let Some(item_schema) = obj.get("items") {
            for (i, item) in items.iter().enumerate() {
                validate_at(item, item_schema, &format!("{path}[{i}]"))?;
            }
        }
    }

    Ok(())
}
