//! Canonical JSONL interchange: one instance per line with `id`, `tokens`,
//! `label` and an optional `roles` object mapping role names to `[start, end]`
//! token spans.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::{AnnotatedInstance, Corpus, RoleKind, Span};
use crate::error::{Error, Result};

#[derive(Serialize)]
struct CanonicalRecord<'a> {
    id: &'a str,
    tokens: &'a [String],
    label: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    raw_label: Option<&'a str>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    roles: &'a BTreeMap<RoleKind, Vec<Span>>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    multi_label: bool,
}

fn record(inst: &AnnotatedInstance) -> CanonicalRecord<'_> {
    CanonicalRecord {
        id: &inst.id,
        tokens: &inst.tokens,
        label: &inst.label,
        raw_label: (inst.raw_label != inst.label).then_some(inst.raw_label.as_str()),
        roles: &inst.roles,
        multi_label: inst.multi_label,
    }
}

pub fn to_canonical_string(corpus: &Corpus) -> String {
    let mut out = String::new();
    for inst in &corpus.instances {
        out.push_str(&serde_json::to_string(&record(inst)).expect("canonical record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_canonical(path: &Path, corpus: &Corpus) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for inst in &corpus.instances {
        serde_json::to_writer(&mut writer, &record(inst))
            .map_err(|e| Error::io(path, e.into()))?;
        writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Reads a canonical JSONL file. The label set is the sorted set of labels
/// found; the corpus is named after the file stem.
pub fn read_canonical(path: &Path) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_owned());
    let mut instances = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        instances.push(parse_line(path, idx + 1, &line)?);
    }
    Corpus::from_instances(name, instances)
}

/// Parses canonical JSONL held in memory; `origin` is used in error messages.
pub fn read_canonical_str(origin: &str, name: &str, text: &str) -> Result<Corpus> {
    let path = Path::new(origin);
    let mut instances = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        instances.push(parse_line(path, idx + 1, line)?);
    }
    Corpus::from_instances(name, instances)
}

fn parse_line(path: &Path, line_no: usize, line: &str) -> Result<AnnotatedInstance> {
    let malformed = |field: &str, message: String| Error::MalformedRecord {
        path: path.to_path_buf(),
        line: line_no,
        field: field.to_owned(),
        message,
    };
    let value: Value =
        serde_json::from_str(line).map_err(|e| malformed("<record>", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| malformed("<record>", "expected a JSON object".into()))?;

    let string_field = |field: &str| -> Result<String> {
        match obj.get(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(malformed(field, format!("expected string, found {other}"))),
            None => Err(malformed(field, "missing".into())),
        }
    };
    let id = string_field("id")?;
    let label = string_field("label")?;
    let raw_label = match obj.get("raw_label") {
        None | Some(Value::Null) => label.clone(),
        Some(_) => string_field("raw_label")?,
    };

    let tokens = match obj.get("tokens") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|t| {
                t.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| malformed("tokens", format!("expected string token, found {t}")))
            })
            .collect::<Result<Vec<_>>>()?,
        Some(other) => return Err(malformed("tokens", format!("expected array, found {other}"))),
        None => return Err(malformed("tokens", "missing".into())),
    };

    let mut roles = BTreeMap::new();
    match obj.get("roles") {
        None | Some(Value::Null) => {}
        Some(Value::Object(map)) => {
            for (key, spans) in map {
                let field = format!("roles.{key}");
                let role: RoleKind = key
                    .parse()
                    .map_err(|_| malformed(&field, format!("unknown role `{key}`")))?;
                let spans: Vec<Span> = serde_json::from_value(spans.clone())
                    .map_err(|e| malformed(&field, format!("expected [[start, end], ...]: {e}")))?;
                roles.insert(role, spans);
            }
        }
        Some(other) => return Err(malformed("roles", format!("expected object, found {other}"))),
    }

    let multi_label = obj
        .get("multi_label")
        .and_then(Value::as_bool)
        .unwrap_or(false);

    let inst = AnnotatedInstance {
        id,
        tokens,
        raw_label,
        label,
        roles,
        multi_label,
    };
    inst.validate()?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE: &str = r#"{"id":"a","tokens":["John","hates","cars"],"label":"anger","roles":{"cue":[[1,2]]}}
{"id":"b","tokens":["I","smile"],"label":"joy"}
{"id":"c","tokens":["so","sad"],"label":"sadness","roles":{"experiencer":[]}}
"#;

    #[test]
    fn three_records() {
        let corpus = read_canonical_str("mem", "toy", THREE).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.label_set, vec!["anger", "joy", "sadness"]);
        assert_eq!(corpus.instances[0].spans(RoleKind::Cue), &[Span::new(1, 2)]);
    }

    #[test]
    fn out_of_bounds_span_names_id() {
        let text = r#"{"id":"bad-1","tokens":["a","b"],"label":"joy","roles":{"stimulus":[[0,3]]}}"#;
        let err = read_canonical_str("mem", "toy", text).unwrap_err();
        assert!(err.to_string().contains("bad-1"), "{err}");
    }

    #[test]
    fn malformed_reports_line_and_field() {
        let text = "{\"id\":\"a\",\"tokens\":[\"x\"],\"label\":\"joy\"}\n{\"id\":\"b\",\"tokens\":\"x\",\"label\":\"joy\"}\n";
        match read_canonical_str("mem.jsonl", "toy", text).unwrap_err() {
            Error::MalformedRecord { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "tokens");
            }
            other => panic!("unexpected {other}"),
        }
        let text = r#"{"id":"a","tokens":["x"]}"#;
        match read_canonical_str("mem.jsonl", "toy", text).unwrap_err() {
            Error::MalformedRecord { field, .. } => assert_eq!(field, "label"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn canonical_reexport_is_identity() {
        let corpus = read_canonical_str("mem", "toy", THREE).unwrap();
        let again = read_canonical_str("mem", "toy", &to_canonical_string(&corpus)).unwrap();
        assert_eq!(corpus, again);
    }
}
