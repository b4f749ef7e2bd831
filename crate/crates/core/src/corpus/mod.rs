//! Role-annotated emotion corpora: the data model, ingestion adapters, label
//! mapping, statistics and splitting.

mod adapters;
mod jsonl;
mod labels;
mod split;
mod stats;
pub mod tokenize;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adapters::{load_corpus, Adapter};
pub use jsonl::{read_canonical, read_canonical_str, to_canonical_string, write_canonical};
pub use labels::{filter_single_label, map_labels, FilterReport, LabelMap, MapReport, UnmappedPolicy};
pub use split::{split, SplitOptions, SplitRatios};
pub use stats::{compute_stats, CorpusStats, RoleStats};

/// The four emotion roles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleKind {
    Experiencer,
    Cue,
    Target,
    Stimulus,
}

impl RoleKind {
    pub const ALL: [RoleKind; 4] = [
        RoleKind::Experiencer,
        RoleKind::Cue,
        RoleKind::Target,
        RoleKind::Stimulus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleKind::Experiencer => "experiencer",
            RoleKind::Cue => "cue",
            RoleKind::Target => "target",
            RoleKind::Stimulus => "stimulus",
        }
    }
}

impl fmt::Display for RoleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "experiencer" | "exp" => Ok(RoleKind::Experiencer),
            "cue" => Ok(RoleKind::Cue),
            "target" | "tar" => Ok(RoleKind::Target),
            "stimulus" | "stim" => Ok(RoleKind::Stimulus),
            other => Err(Error::InvalidConfig(format!("unknown role `{other}`"))),
        }
    }
}

/// Half-open token range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index < self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Span { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(span: Span) -> Self {
        (span.start, span.end)
    }
}

/// A tokenized, labeled instance with its role spans.
///
/// A role key mapped to an empty span list means the role was annotated
/// without a text span (e.g. tweet authors as experiencers); transformations
/// treat it as absent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotatedInstance {
    pub id: String,
    pub tokens: Vec<String>,
    pub raw_label: String,
    pub label: String,
    pub roles: BTreeMap<RoleKind, Vec<Span>>,
    /// Set by adapters when the source carries more than one emotion label.
    pub multi_label: bool,
}

impl AnnotatedInstance {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, label: impl Into<String>) -> Self {
        let label = label.into();
        AnnotatedInstance {
            id: id.into(),
            tokens,
            raw_label: label.clone(),
            label,
            roles: BTreeMap::new(),
            multi_label: false,
        }
    }

    /// Builder-style helper, mostly for tests and generators.
    pub fn with_role(mut self, role: RoleKind, spans: Vec<Span>) -> Self {
        self.roles.insert(role, spans);
        self
    }

    pub fn spans(&self, role: RoleKind) -> &[Span] {
        self.roles.get(&role).map(Vec::as_slice).unwrap_or(&[])
    }

    /// True when the role has at least one non-empty span.
    pub fn has_role(&self, role: RoleKind) -> bool {
        self.spans(role).iter().any(|s| !s.is_empty())
    }

    /// Tokens covered by the spans of `role`, in span order.
    pub fn role_tokens(&self, role: RoleKind) -> impl Iterator<Item = &str> {
        self.spans(role)
            .iter()
            .flat_map(move |s| self.tokens[s.start..s.end].iter().map(String::as_str))
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::invalid_instance(&self.id, "instance has no tokens"));
        }
        let n = self.tokens.len();
        for (role, spans) in &self.roles {
            for span in spans {
                if span.start >= span.end || span.end > n {
                    return Err(Error::invalid_instance(
                        &self.id,
                        format!(
                            "{role} span [{}, {}) out of bounds for {n} tokens",
                            span.start, span.end
                        ),
                    ));
                }
            }
            let mut sorted = spans.clone();
            sorted.sort();
            if let Some(w) = sorted.windows(2).find(|w| w[0].overlaps(&w[1])) {
                return Err(Error::invalid_instance(
                    &self.id,
                    format!(
                        "overlapping {role} spans [{}, {}) and [{}, {})",
                        w[0].start, w[0].end, w[1].start, w[1].end
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// A named collection of instances over an ordered label set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    pub label_set: Vec<String>,
    pub instances: Vec<AnnotatedInstance>,
}

impl Corpus {
    /// Builds a corpus and checks every invariant.
    pub fn new(
        name: impl Into<String>,
        label_set: Vec<String>,
        instances: Vec<AnnotatedInstance>,
    ) -> Result<Self> {
        let corpus = Corpus {
            name: name.into(),
            label_set,
            instances,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    /// Builds a corpus whose label set is the sorted set of instance labels.
    pub fn from_instances(name: impl Into<String>, instances: Vec<AnnotatedInstance>) -> Result<Self> {
        let mut labels: Vec<String> = instances.iter().map(|i| i.label.clone()).collect();
        labels.sort();
        labels.dedup();
        Corpus::new(name, labels, instances)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut labels = HashSet::new();
        for label in &self.label_set {
            if !labels.insert(label.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate label `{label}` in label set of `{}`",
                    self.name
                )));
            }
        }
        let mut ids = HashSet::with_capacity(self.instances.len());
        for inst in &self.instances {
            inst.validate()?;
            if !labels.contains(inst.label.as_str()) {
                return Err(Error::invalid_instance(
                    &inst.id,
                    format!("label `{}` not in label set", inst.label),
                ));
            }
            if !ids.insert(inst.id.as_str()) {
                return Err(Error::invalid_instance(&inst.id, "duplicate instance id"));
            }
        }
        Ok(())
    }

    /// Same corpus restricted to `instances`, keeping name and label set.
    pub fn with_instances(&self, instances: Vec<AnnotatedInstance>) -> Corpus {
        Corpus {
            name: self.name.clone(),
            label_set: self.label_set.clone(),
            instances,
        }
    }

    /// Distinct tokens across all instances.
    pub fn vocabulary(&self) -> HashSet<&str> {
        self.instances
            .iter()
            .flat_map(|i| i.tokens.iter().map(String::as_str))
            .collect()
    }

    /// Roles with at least one span somewhere in the corpus.
    pub fn annotated_roles(&self) -> Vec<RoleKind> {
        RoleKind::ALL
            .into_iter()
            .filter(|r| self.instances.iter().any(|i| i.has_role(*r)))
            .collect()
    }
}
