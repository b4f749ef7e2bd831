//! Ingestion adapters. Every adapter normalizes its source into
//! [`AnnotatedInstance`]s; role fillers given as text are projected onto
//! tokens (first non-overlapping occurrence), character offsets onto the
//! minimal covering token range.
//!
//! | adapter           | input layout |
//! |-------------------|--------------|
//! | `canonical-jsonl` | canonical JSONL |
//! | `es`              | file or directory of `*.txt`; one instance per line, `<emotion> ... <cause> ... <\cause> ... <\emotion>` |
//! | `et`              | delimited table with header; columns for id, text, label and one column per role holding `|`-separated filler texts |
//! | `gne`             | JSONL with `headline` and `annotations.{cause,cue,target,experiencer}.gold` filler texts, `annotations.dominant_emotion.gold` label |
//! | `reman`           | JSONL with `segments` (left, middle, right), `spans` (`type`, character `start`/`end` over the joined segments) and optional `labels` |
//! | `eca`             | JSONL with `text` or `tokens`, `emotion`/`emotions`, `causes` (texts) and/or `cause_spans` (token ranges), optional `language` |

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use super::tokenize::{char_to_byte, locate, project_span, tokenize, Token, Tokenizer};
use super::{read_canonical, AnnotatedInstance, Corpus, RoleKind, Span};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Adapter {
    CanonicalJsonl,
    Es,
    Et,
    Gne,
    Reman,
    Eca,
}

impl Adapter {
    pub fn as_str(self) -> &'static str {
        match self {
            Adapter::CanonicalJsonl => "canonical-jsonl",
            Adapter::Es => "es",
            Adapter::Et => "et",
            Adapter::Gne => "gne",
            Adapter::Reman => "reman",
            Adapter::Eca => "eca",
        }
    }
}

impl fmt::Display for Adapter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Adapter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical-jsonl" | "canonical" | "jsonl" => Ok(Adapter::CanonicalJsonl),
            "es" => Ok(Adapter::Es),
            "et" => Ok(Adapter::Et),
            "gne" => Ok(Adapter::Gne),
            "reman" => Ok(Adapter::Reman),
            "eca" => Ok(Adapter::Eca),
            other => Err(Error::UnknownAdapter(other.to_owned())),
        }
    }
}

/// Options shared by all adapters.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct CommonOptions {
    name: Option<String>,
    label_set: Option<Vec<String>>,
}

fn parse_options<T: DeserializeOwned + Default>(options: &Value) -> Result<T> {
    if options.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(options.clone())
        .map_err(|e| Error::InvalidConfig(format!("adapter options: {e}")))
}

/// Loads a corpus through the given adapter. `options` is the adapter's JSON
/// configuration (`null` for defaults).
pub fn load_corpus(path: &Path, adapter: Adapter, options: &Value) -> Result<Corpus> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ));
    }
    let common: CommonOptions = parse_options(options)?;
    let mut corpus = match adapter {
        Adapter::CanonicalJsonl => read_canonical(path)?,
        Adapter::Es => build(path, load_es(path, &parse_options(options)?)?)?,
        Adapter::Et => build(path, load_et(path, &parse_options(options)?)?)?,
        Adapter::Gne => build(path, load_gne(path, &parse_options(options)?)?)?,
        Adapter::Reman => build(path, load_reman(path, &parse_options(options)?)?)?,
        Adapter::Eca => build(path, load_eca(path, &parse_options(options)?)?)?,
    };
    if let Some(name) = common.name {
        corpus.name = name;
    }
    if let Some(labels) = common.label_set {
        corpus = Corpus::new(corpus.name, labels, corpus.instances)?;
    }
    log::info!("loaded {} instances from {} ({adapter})", corpus.len(), path.display());
    Ok(corpus)
}

fn build(path: &Path, instances: Vec<AnnotatedInstance>) -> Result<Corpus> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    Corpus::from_instances(name, instances)
}

fn malformed(path: &Path, line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::MalformedRecord {
        path: path.to_path_buf(),
        line,
        field: field.to_owned(),
        message: message.into(),
    }
}

/// Tokenizes `text` and projects role fillers given as text.
struct Draft {
    text: String,
    tokens: Vec<Token>,
    roles: BTreeMap<RoleKind, Vec<Span>>,
}

impl Draft {
    fn new(text: String, tokenizer: Tokenizer) -> Self {
        let tokens = tokenize(&text, tokenizer);
        Draft {
            text,
            tokens,
            roles: BTreeMap::new(),
        }
    }

    fn mark_annotated(&mut self, role: RoleKind) {
        self.roles.entry(role).or_default();
    }

    fn add_text(&mut self, id: &str, role: RoleKind, filler: &str) {
        let taken = self.roles.get(&role).cloned().unwrap_or_default();
        match locate(&self.text, &self.tokens, filler, &taken) {
            Some(span) => self.roles.entry(role).or_default().push(span),
            None => log::warn!("{id}: {role} filler `{filler}` not found in text; skipped"),
        }
    }

    /// Adds a byte range, merging with overlapping spans of the same role.
    fn add_bytes(&mut self, id: &str, role: RoleKind, start: usize, end: usize) {
        match project_span(&self.tokens, start, end) {
            Some(span) => self.push_merged(role, span),
            None => log::warn!("{id}: {role} range [{start}, {end}) covers no token; skipped"),
        }
    }

    fn push_merged(&mut self, role: RoleKind, mut span: Span) {
        let spans = self.roles.entry(role).or_default();
        spans.retain(|s| {
            if s.overlaps(&span) {
                span = Span::new(s.start.min(span.start), s.end.max(span.end));
                false
            } else {
                true
            }
        });
        spans.push(span);
        spans.sort();
    }

    fn finish(self, id: String, label: String, multi_label: bool) -> Result<AnnotatedInstance> {
        let inst = AnnotatedInstance {
            id,
            tokens: self.tokens.into_iter().map(|t| t.text).collect(),
            raw_label: label.clone(),
            label,
            roles: self.roles,
            multi_label,
        };
        inst.validate()?;
        Ok(inst)
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn files_in(path: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == extension))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().replace(' ', "_"))
        .unwrap_or_default()
}

fn json_lines(path: &Path) -> Result<Vec<(usize, Value)>> {
    read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            serde_json::from_str(&text)
                .map(|v| (line, v))
                .map_err(|e| malformed(path, line, "<record>", e.to_string()))
        })
        .collect()
}

fn get_path<'a>(value: &'a Value, path: &[String]) -> Option<&'a Value> {
    path.iter().try_fold(value, |v, key| v.get(key))
}

/// Flattens a string, or arbitrarily nested arrays of strings.
fn flatten_strings(value: &Value, out: &mut Vec<String>) {
    match value {
        Value::String(s) if !s.trim().is_empty() => out.push(s.clone()),
        Value::Array(items) => items.iter().for_each(|v| flatten_strings(v, out)),
        _ => {}
    }
}

fn record_id(value: &Value, field: &str, fallback: String) -> String {
    match value.get(field) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => fallback,
    }
}

// ---------------------------------------------------------------- ES

#[derive(Debug, Deserialize)]
#[serde(default)]
struct EsOptions {
    tokenizer: Tokenizer,
    cause_tag: String,
}

impl Default for EsOptions {
    fn default() -> Self {
        EsOptions {
            tokenizer: Tokenizer::Whitespace,
            cause_tag: "cause".into(),
        }
    }
}

fn es_tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<\s*([\\/]?)\s*([A-Za-z_]+)\s*>").expect("valid regex"))
}

fn load_es(path: &Path, opts: &EsOptions) -> Result<Vec<AnnotatedInstance>> {
    let mut out = Vec::new();
    for file in files_in(path, "txt")? {
        let prefix = stem(&file);
        for (line_no, line) in read_lines(&file)? {
            out.push(parse_es_line(&file, line_no, &line, &prefix, opts)?);
        }
    }
    Ok(out)
}

fn parse_es_line(
    file: &Path,
    line_no: usize,
    line: &str,
    prefix: &str,
    opts: &EsOptions,
) -> Result<AnnotatedInstance> {
    let mut text = String::with_capacity(line.len());
    let mut emotion: Option<String> = None;
    let mut closed = false;
    let mut cause_open: Option<usize> = None;
    let mut causes = Vec::new();
    let mut last = 0;
    for caps in es_tag_regex().captures_iter(line) {
        let whole = caps.get(0).expect("match");
        let closing = !caps[1].is_empty();
        let name = caps[2].to_ascii_lowercase();
        text.push_str(&line[last..whole.start()]);
        text.push(' ');
        last = whole.end();
        if name == opts.cause_tag {
            match (closing, cause_open) {
                (false, None) => cause_open = Some(text.len()),
                (true, Some(start)) => {
                    causes.push((start, text.len()));
                    cause_open = None;
                }
                _ => return Err(malformed(file, line_no, "cause", "unbalanced cause tag")),
            }
        } else if !closing {
            if emotion.is_some() {
                return Err(malformed(file, line_no, "emotion", "nested emotion tags"));
            }
            emotion = Some(name);
        } else {
            if emotion.as_deref() != Some(name.as_str()) {
                return Err(malformed(
                    file,
                    line_no,
                    "emotion",
                    format!("closing tag `{name}` does not match opening tag"),
                ));
            }
            closed = true;
        }
    }
    text.push_str(&line[last..]);
    let emotion = emotion.ok_or_else(|| malformed(file, line_no, "emotion", "missing emotion tag"))?;
    if !closed || cause_open.is_some() {
        return Err(malformed(file, line_no, "emotion", "unterminated tag"));
    }

    let id = format!("{prefix}-{line_no}");
    let mut draft = Draft::new(text, opts.tokenizer);
    for (start, end) in causes {
        draft.add_bytes(&id, RoleKind::Stimulus, start, end);
    }
    draft.finish(id, emotion, false)
}

// ---------------------------------------------------------------- ET

#[derive(Debug, Deserialize)]
#[serde(default)]
struct EtOptions {
    delimiter: String,
    tokenizer: Tokenizer,
    id_column: String,
    text_column: String,
    label_column: String,
    role_columns: BTreeMap<RoleKind, String>,
    separator: String,
    author_markers: Vec<String>,
}

impl Default for EtOptions {
    fn default() -> Self {
        EtOptions {
            delimiter: "\t".into(),
            tokenizer: Tokenizer::Punct,
            id_column: "id".into(),
            text_column: "text".into(),
            label_column: "emotion".into(),
            role_columns: RoleKind::ALL
                .into_iter()
                .map(|r| (r, r.as_str().to_owned()))
                .collect(),
            separator: "|".into(),
            author_markers: vec!["author".into(), "tweeter".into(), "the author".into()],
        }
    }
}

fn load_et(path: &Path, opts: &EtOptions) -> Result<Vec<AnnotatedInstance>> {
    let delimiter = match opts.delimiter.as_bytes() {
        [b] => *b,
        _ => return Err(Error::InvalidConfig("et delimiter must be a single byte".into())),
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let headers = reader
        .headers()
        .map_err(|e| malformed(path, 1, "<header>", e.to_string()))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let text_col = column(&opts.text_column)
        .ok_or_else(|| malformed(path, 1, &opts.text_column, "column missing"))?;
    let label_col = column(&opts.label_column)
        .ok_or_else(|| malformed(path, 1, &opts.label_column, "column missing"))?;
    let id_col = column(&opts.id_column);
    let role_cols: Vec<(RoleKind, usize)> = opts
        .role_columns
        .iter()
        .filter_map(|(role, name)| column(name).map(|c| (*role, c)))
        .collect();

    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| malformed(path, line, "<row>", e.to_string()))?;
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        let id = id_col
            .map(field)
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .unwrap_or_else(|| format!("{}-{line}", stem(path)));
        let labels: Vec<&str> = field(label_col)
            .split(opts.separator.as_str())
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        let Some(first) = labels.first() else {
            return Err(malformed(path, line, &opts.label_column, "empty label"));
        };
        let mut draft = Draft::new(field(text_col).to_owned(), opts.tokenizer);
        for (role, col) in &role_cols {
            for filler in field(*col).split(opts.separator.as_str()).map(str::trim) {
                if filler.is_empty() {
                    continue;
                }
                if *role == RoleKind::Experiencer
                    && opts.author_markers.iter().any(|m| m.eq_ignore_ascii_case(filler))
                {
                    draft.mark_annotated(*role);
                } else {
                    draft.add_text(&id, *role, filler);
                }
            }
        }
        out.push(draft.finish(id, (*first).to_owned(), labels.len() > 1)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------- GNE

#[derive(Debug, Deserialize)]
#[serde(default)]
struct GneOptions {
    tokenizer: Tokenizer,
    id_field: String,
    text_field: String,
    label_path: Vec<String>,
    role_paths: BTreeMap<RoleKind, Vec<String>>,
}

impl Default for GneOptions {
    fn default() -> Self {
        let ann = |key: &str| vec!["annotations".to_owned(), key.to_owned(), "gold".to_owned()];
        GneOptions {
            tokenizer: Tokenizer::Punct,
            id_field: "id".into(),
            text_field: "headline".into(),
            label_path: ann("dominant_emotion"),
            role_paths: [
                (RoleKind::Stimulus, ann("cause")),
                (RoleKind::Cue, ann("cue")),
                (RoleKind::Target, ann("target")),
                (RoleKind::Experiencer, ann("experiencer")),
            ]
            .into_iter()
            .collect(),
        }
    }
}

fn load_gne(path: &Path, opts: &GneOptions) -> Result<Vec<AnnotatedInstance>> {
    let mut out = Vec::new();
    for (line, value) in json_lines(path)? {
        let id = record_id(&value, &opts.id_field, format!("{}-{line}", stem(path)));
        let text = value
            .get(&opts.text_field)
            .and_then(Value::as_str)
            .ok_or_else(|| malformed(path, line, &opts.text_field, "missing text"))?;
        let mut labels = Vec::new();
        if let Some(v) = get_path(&value, &opts.label_path) {
            flatten_strings(v, &mut labels);
        }
        let label_field = opts.label_path.join(".");
        let Some(label) = labels.first().cloned() else {
            return Err(malformed(path, line, &label_field, "missing label"));
        };
        let mut draft = Draft::new(text.to_owned(), opts.tokenizer);
        for (role, role_path) in &opts.role_paths {
            let mut fillers = Vec::new();
            if let Some(v) = get_path(&value, role_path) {
                flatten_strings(v, &mut fillers);
            }
            for filler in fillers {
                draft.add_text(&id, *role, &filler);
            }
        }
        out.push(draft.finish(id, label, labels.len() > 1)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------- REMAN

#[derive(Debug, Deserialize)]
#[serde(default)]
struct RemanOptions {
    tokenizer: Tokenizer,
    separator: String,
    no_emotion_label: String,
}

impl Default for RemanOptions {
    fn default() -> Self {
        RemanOptions {
            tokenizer: Tokenizer::Punct,
            separator: "\n".into(),
            no_emotion_label: "noemo".into(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RemanSpan {
    #[serde(rename = "type")]
    kind: String,
    start: usize,
    end: usize,
}

fn reman_role(kind: &str) -> Option<RoleKind> {
    if let Some(role) = reman_role_name(kind) {
        return Some(role);
    }
    match kind.to_ascii_lowercase().as_str() {
        "coreference" | "coref" | "other" => None,
        // Emotion-typed spans are cue annotations.
        _ => Some(RoleKind::Cue),
    }
}

fn load_reman(path: &Path, opts: &RemanOptions) -> Result<Vec<AnnotatedInstance>> {
    let mut out = Vec::new();
    for (line, value) in json_lines(path)? {
        let id = record_id(&value, "id", format!("{}-{line}", stem(path)));
        let segments: Vec<String> = value
            .get("segments")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| malformed(path, line, "segments", e.to_string()))?
            .ok_or_else(|| malformed(path, line, "segments", "missing"))?;
        if segments.is_empty() {
            return Err(malformed(path, line, "segments", "empty"));
        }
        let spans: Vec<RemanSpan> = match value.get("spans") {
            None | Some(Value::Null) => Vec::new(),
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| malformed(path, line, "spans", e.to_string()))?,
        };

        // Character range of the middle segment within the joined text.
        let mid = segments.len() / 2;
        let sep_chars = opts.separator.chars().count();
        let mid_start: usize = segments[..mid]
            .iter()
            .map(|s| s.chars().count() + sep_chars)
            .sum();
        let middle = &segments[mid];
        let mid_end = mid_start + middle.chars().count();

        let mut draft = Draft::new(middle.clone(), opts.tokenizer);
        let mut cue_emotions = Vec::new();
        for span in &spans {
            let Some(role) = reman_role(&span.kind) else {
                continue;
            };
            let (start, end) = (span.start.max(mid_start), span.end.min(mid_end));
            if start >= end {
                continue;
            }
            if role == RoleKind::Cue && reman_role_name(&span.kind).is_none() {
                cue_emotions.push(span.kind.to_ascii_lowercase());
            }
            let (bs, be) = (
                char_to_byte(middle, start - mid_start),
                char_to_byte(middle, end - mid_start),
            );
            draft.add_bytes(&id, role, bs, be);
        }

        let mut labels = Vec::new();
        match value.get("labels").or_else(|| value.get("label")) {
            Some(v) => flatten_strings(v, &mut labels),
            None => {
                for e in cue_emotions {
                    if !labels.contains(&e) {
                        labels.push(e);
                    }
                }
            }
        }
        let label = labels
            .first()
            .cloned()
            .unwrap_or_else(|| opts.no_emotion_label.clone());
        out.push(draft.finish(id, label, labels.len() > 1)?);
    }
    Ok(out)
}

fn reman_role_name(kind: &str) -> Option<RoleKind> {
    match kind.to_ascii_lowercase().as_str() {
        "cause" | "stimulus" => Some(RoleKind::Stimulus),
        "experiencer" => Some(RoleKind::Experiencer),
        "target" => Some(RoleKind::Target),
        "cue" => Some(RoleKind::Cue),
        _ => None,
    }
}

// ---------------------------------------------------------------- ECA

#[derive(Debug, Deserialize)]
#[serde(default)]
struct EcaOptions {
    tokenizer: Tokenizer,
    languages: Vec<String>,
}

impl Default for EcaOptions {
    fn default() -> Self {
        EcaOptions {
            tokenizer: Tokenizer::Punct,
            languages: vec!["en".into(), "eng".into(), "english".into()],
        }
    }
}

fn load_eca(path: &Path, opts: &EcaOptions) -> Result<Vec<AnnotatedInstance>> {
    let mut out = Vec::new();
    let mut skipped = 0usize;
    for (line, value) in json_lines(path)? {
        if let Some(lang) = value.get("language").and_then(Value::as_str) {
            if !opts.languages.iter().any(|l| l.eq_ignore_ascii_case(lang)) {
                skipped += 1;
                continue;
            }
        }
        let id = record_id(&value, "id", format!("{}-{line}", stem(path)));
        let mut labels = Vec::new();
        if let Some(v) = value.get("emotions").or_else(|| value.get("emotion")) {
            flatten_strings(v, &mut labels);
        }
        let Some(label) = labels.first().cloned() else {
            return Err(malformed(path, line, "emotion", "missing label"));
        };

        let mut draft = match (value.get("tokens"), value.get("text")) {
            (Some(tokens), _) => {
                let tokens: Vec<String> = serde_json::from_value(tokens.clone())
                    .map_err(|e| malformed(path, line, "tokens", e.to_string()))?;
                Draft::new(tokens.join(" "), Tokenizer::Whitespace)
            }
            (None, Some(Value::String(text))) => Draft::new(text.clone(), opts.tokenizer),
            _ => return Err(malformed(path, line, "text", "missing text or tokens")),
        };
        if let Some(v) = value.get("cause_spans") {
            let spans: Vec<Span> = serde_json::from_value(v.clone())
                .map_err(|e| malformed(path, line, "cause_spans", e.to_string()))?;
            for span in spans {
                if span.start >= span.end || span.end > draft.tokens.len() {
                    return Err(Error::invalid_instance(
                        &id,
                        format!("cause span [{}, {}) out of bounds", span.start, span.end),
                    ));
                }
                draft.push_merged(RoleKind::Stimulus, span);
            }
        }
        let mut causes = Vec::new();
        if let Some(v) = value.get("causes") {
            flatten_strings(v, &mut causes);
        }
        for cause in causes {
            draft.add_text(&id, RoleKind::Stimulus, &cause);
        }
        out.push(draft.finish(id, label, labels.len() > 1)?);
    }
    if skipped > 0 {
        log::info!("{}: skipped {skipped} non-English records", path.display());
    }
    Ok(out)
}
