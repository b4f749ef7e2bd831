use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};

/// What to do with a label that has no entry in the map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnmappedPolicy {
    #[default]
    Error,
    Drop,
    #[serde(alias = "pass-through")]
    Pass,
}

/// Source-label to target-label mapping. On disk:
/// `{"map": {"elation": "joy"}, "policy": "error" | "drop" | "pass"}`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub map: BTreeMap<String, String>,
    #[serde(default)]
    pub policy: UnmappedPolicy,
}

impl LabelMap {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>, policy: UnmappedPolicy) -> Self {
        LabelMap {
            map: entries.into_iter().collect(),
            policy,
        }
    }

    pub fn identity() -> Self {
        LabelMap {
            map: BTreeMap::new(),
            policy: UnmappedPolicy::Pass,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: e.line(),
            field: "map".into(),
            message: e.to_string(),
        })
    }

    /// `Some(target)` when the label resolves, `None` when it must be dropped.
    fn resolve<'a>(&'a self, label: &'a str) -> Option<&'a str> {
        match self.map.get(label) {
            Some(target) => Some(target),
            None => match self.policy {
                UnmappedPolicy::Pass => Some(label),
                UnmappedPolicy::Drop | UnmappedPolicy::Error => None,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MapReport {
    pub dropped: usize,
}

pub fn map_labels(corpus: &Corpus, map: &LabelMap) -> Result<(Corpus, MapReport)> {
    if map.policy == UnmappedPolicy::Error {
        let missing: BTreeSet<&str> = corpus
            .label_set
            .iter()
            .map(String::as_str)
            .chain(corpus.instances.iter().map(|i| i.label.as_str()))
            .filter(|l| !map.map.contains_key(*l))
            .collect();
        if !missing.is_empty() {
            return Err(Error::UnmappedLabels(
                missing.into_iter().map(str::to_owned).collect(),
            ));
        }
    }

    let mut label_set: Vec<String> = Vec::new();
    for label in &corpus.label_set {
        if let Some(target) = map.resolve(label) {
            if !label_set.iter().any(|l| l == target) {
                label_set.push(target.to_owned());
            }
        }
    }

    let mut report = MapReport::default();
    let mut instances = Vec::with_capacity(corpus.instances.len());
    for inst in &corpus.instances {
        match map.resolve(&inst.label) {
            Some(target) => {
                let mut inst = inst.clone();
                inst.label = target.to_owned();
                if !label_set.contains(&inst.label) {
                    label_set.push(inst.label.clone());
                }
                instances.push(inst);
            }
            None => report.dropped += 1,
        }
    }
    if report.dropped > 0 {
        log::info!("{}: dropped {} instances with unmapped labels", corpus.name, report.dropped);
    }
    Ok((Corpus::new(corpus.name.clone(), label_set, instances)?, report))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FilterReport {
    pub removed: usize,
}

/// Removes instances that adapters flagged as carrying several labels.
pub fn filter_single_label(corpus: &Corpus) -> (Corpus, FilterReport) {
    let instances: Vec<_> = corpus
        .instances
        .iter()
        .filter(|i| !i.multi_label)
        .cloned()
        .collect();
    let report = FilterReport {
        removed: corpus.instances.len() - instances.len(),
    };
    if report.removed > 0 {
        log::info!("{}: removed {} multi-label instances", corpus.name, report.removed);
    }
    (corpus.with_instances(instances), report)
}
