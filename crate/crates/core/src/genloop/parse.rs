//! Turning raw model output into samples.

use serde_json::Value;
use thiserror::Error;

use crate::corpus::{join_tokens, EntitySpan, Provenance, ReSample};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("no JSON object found in response")]
    NoJson,
    #[error("JSON object lacks required keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),
    #[error("malformed field {field}: {message}")]
    BadField { field: String, message: String },
    /// The entity name could not be located in the tokens. Counted as a
    /// validation failure rather than a parse failure by the loops.
    #[error("{role} entity {name:?} not found in tokens")]
    UnresolvedSpan { role: String, name: String },
}

/// Every top-level JSON object embedded in `raw`, in order of appearance.
///
/// Surrounding prose, code fences and array brackets are skipped. Objects nested
/// inside an already-extracted object are not reported separately.
pub fn extract_json_objects(raw: &str) -> Vec<Value> {
    let mut found = Vec::new();
    let mut offset = 0;
    while let Some(rel) = raw[offset..].find('{') {
        let start = offset + rel;
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(value)) if value.is_object() => {
                offset = start + stream.byte_offset();
                found.push(value);
            }
            _ => offset = start + 1,
        }
    }
    found
}

/// Parses the first JSON object of a response into a generated sample.
pub fn parse_generation(raw: &str) -> Result<ReSample, ParseError> {
    let value = extract_json_objects(raw)
        .into_iter()
        .next()
        .ok_or(ParseError::NoJson)?;
    sample_from_value(&value, "generated")
}

/// Maps one sample object to a [`ReSample`] with `Generated` provenance.
///
/// Entity positions are used when they are in range and match the entity name;
/// otherwise the name is looked up as a token subsequence (first occurrence).
pub fn sample_from_value(value: &Value, source_id: &str) -> Result<ReSample, ParseError> {
    let obj = value.as_object().ok_or(ParseError::NoJson)?;
    let missing: Vec<String> = ["token", "h", "t", "relation"]
        .iter()
        .filter(|k| !obj.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(ParseError::MissingKeys(missing));
    }

    let tokens = read_tokens(&obj["token"])?;
    let relation = obj["relation"]
        .as_str()
        .ok_or_else(|| bad("relation", "expected a string"))?
        .to_string();
    let head = resolve_entity("h", &obj["h"], &tokens)?;
    let tail = resolve_entity("t", &obj["t"], &tokens)?;

    Ok(ReSample {
        tokens,
        head,
        tail,
        relation,
        provenance: Provenance::Generated,
        source_id: source_id.to_string(),
    })
}

fn bad(field: &str, message: &str) -> ParseError {
    ParseError::BadField {
        field: field.to_string(),
        message: message.to_string(),
    }
}

fn read_tokens(value: &Value) -> Result<Vec<String>, ParseError> {
    let tokens: Vec<String> = match value {
        Value::Array(items) => items
            .iter()
            .map(|t| {
                t.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| bad("token", "expected an array of strings"))
            })
            .collect::<Result<_, _>>()?,
        // a plain sentence is accepted and split on whitespace
        Value::String(s) => s.split_whitespace().map(str::to_string).collect(),
        _ => return Err(bad("token", "expected an array of strings")),
    };
    if tokens.is_empty() {
        return Err(bad("token", "empty"));
    }
    Ok(tokens)
}

fn resolve_entity(role: &str, value: &Value, tokens: &[String]) -> Result<EntitySpan, ParseError> {
    let obj = value
        .as_object()
        .ok_or_else(|| bad(role, "expected an object with \"name\""))?;
    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| ParseError::MissingKeys(vec![format!("{role}.name")]))?;
    let name_tokens: Vec<String> = name.split_whitespace().map(str::to_string).collect();
    let wanted = join_tokens(&name_tokens);

    if let Some((start, end)) = obj.get("pos").and_then(read_pos) {
        if let Some(span) = EntitySpan::from_tokens(tokens, start, end) {
            if span.surface == wanted {
                return Ok(span);
            }
        }
    }

    find_subsequence(tokens, &name_tokens)
        .and_then(|start| EntitySpan::from_tokens(tokens, start, start + name_tokens.len()))
        .ok_or_else(|| ParseError::UnresolvedSpan {
            role: role.to_string(),
            name: name.to_string(),
        })
}

fn read_pos(value: &Value) -> Option<(usize, usize)> {
    let items = value.as_array()?;
    if items.len() != 2 {
        return None;
    }
    let start = usize::try_from(items[0].as_u64()?).ok()?;
    let end = usize::try_from(items[1].as_u64()?).ok()?;
    Some((start, end))
}

/// Index of the first occurrence of `needle` as a contiguous run in `haystack`.
pub fn find_subsequence(haystack: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}
