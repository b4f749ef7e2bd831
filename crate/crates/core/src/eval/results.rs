use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::MacroScores;
use crate::corpus::RoleKind;
use crate::error::{Error, Result};
use crate::transform::{Setting, SettingKind};

/// Whether a row's mean strictly exceeds the As-Is mean of its dataset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AboveAsIs {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub role: Option<RoleKind>,
    pub setting: Setting,
    pub n_runs: usize,
    pub mean: MacroScores,
    pub runs: Vec<MacroScores>,
    pub above_asis: AboveAsIs,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

/// Collects per-run scores in any order; nothing is aggregated until
/// [`finish`](Self::finish).
#[derive(Clone, Debug, Default)]
pub struct ResultsAccumulator {
    cells: BTreeMap<(String, Setting), BTreeMap<usize, MacroScores>>,
}

impl ResultsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, dataset: &str, setting: Setting, run: usize, scores: MacroScores) -> Result<()> {
        let runs = self.cells.entry((dataset.to_owned(), setting)).or_default();
        if runs.insert(run, scores).is_some() {
            return Err(Error::Evaluation(format!(
                "duplicate scores for {dataset} / {setting} / run {run}"
            )));
        }
        Ok(())
    }

    pub fn finish(self) -> Result<ResultsTable> {
        let mut rows = Vec::with_capacity(self.cells.len());
        for ((dataset, setting), runs) in self.cells {
            let runs: Vec<MacroScores> = runs.into_values().collect();
            let mean = MacroScores::mean(&runs)
                .map_err(|e| e.context(format!("{dataset} / {setting}")))?;
            rows.push(ResultRow {
                dataset,
                role: setting.role(),
                setting,
                n_runs: runs.len(),
                mean,
                runs,
                above_asis: AboveAsIs::default(),
            });
        }
        let mut table = ResultsTable { rows };
        table.sort();
        table.recompute_flags();
        Ok(table)
    }
}

fn kind_rank(kind: SettingKind) -> u8 {
    match kind {
        SettingKind::AsIs => 0,
        SettingKind::Without => 1,
        SettingKind::Only => 2,
        SettingKind::Position => 3,
    }
}

const BLOCKS: [(SettingKind, &str); 4] = [
    (SettingKind::AsIs, "as-is"),
    (SettingKind::Without, "without"),
    (SettingKind::Only, "only"),
    (SettingKind::Position, "position"),
];

/// Renders a fraction as a rounded percentage.
pub fn percent(x: f64) -> i64 {
    (x * 100.0).round() as i64
}

impl ResultsTable {
    fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (&a.dataset, a.role, kind_rank(a.setting.kind())).cmp(&(&b.dataset, b.role, kind_rank(b.setting.kind())))
        });
    }

    /// Sets every `above_asis` flag from the current means. As-Is rows and
    /// datasets without an As-Is row get no flags.
    pub fn recompute_flags(&mut self) {
        let baselines: BTreeMap<String, (f64, f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.setting == Setting::AsIs)
            .map(|r| (r.dataset.clone(), (r.mean.precision, r.mean.recall, r.mean.f1)))
            .collect();
        for row in &mut self.rows {
            row.above_asis = match baselines.get(&row.dataset) {
                Some(&(p, r, f)) if row.setting != Setting::AsIs => AboveAsIs {
                    precision: row.mean.precision > p,
                    recall: row.mean.recall > r,
                    f1: row.mean.f1 > f,
                },
                _ => AboveAsIs::default(),
            };
        }
    }

    pub fn get(&self, dataset: &str, setting: Setting) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.dataset == dataset && r.setting == setting)
    }

    pub fn datasets(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.rows.iter().map(|r| r.dataset.as_str()).collect();
        out.dedup();
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Evaluation(format!("results JSON: {e}")))
    }

    /// One line per (dataset, role) with P/R/F1 blocks for As-Is, Without,
    /// Only and Position as rounded percentages. Missing cells are `-`; the
    /// `bold` column lists cells above As-Is, e.g. `without.f1`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("dataset\trole");
        for (_, name) in BLOCKS {
            for m in ["p", "r", "f1"] {
                let _ = write!(out, "\t{name}.{m}");
            }
        }
        out.push_str("\tbold\n");
        for dataset in self.datasets() {
            let asis = self.get(dataset, Setting::AsIs);
            let mut roles: Vec<RoleKind> = self
                .rows
                .iter()
                .filter(|r| r.dataset == dataset)
                .filter_map(|r| r.role)
                .collect();
            roles.dedup();
            let lines: Vec<Option<RoleKind>> = if roles.is_empty() {
                vec![None]
            } else {
                roles.into_iter().map(Some).collect()
            };
            for role in lines {
                let _ = write!(out, "{dataset}\t{}", role.map_or("-".to_owned(), |r| r.to_string()));
                let mut bold = Vec::new();
                for (block, prefix) in BLOCKS {
                    let row = if block == SettingKind::AsIs {
                        asis
                    } else {
                        role.and_then(|r| self.get(dataset, Setting::from_parts(block, Some(r)).ok()?))
                    };
                    match row {
                        Some(row) => {
                            let m = &row.mean;
                            let _ = write!(out, "\t{}\t{}\t{}", percent(m.precision), percent(m.recall), percent(m.f1));
                            let flags = row.above_asis;
                            for (set, name) in [(flags.precision, "p"), (flags.recall, "r"), (flags.f1, "f1")] {
                                if set {
                                    bold.push(format!("{prefix}.{name}"));
                                }
                            }
                        }
                        None => out.push_str("\t-\t-\t-"),
                    }
                }
                let _ = writeln!(out, "\t{}", bold.join(","));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionRow {
    pub label: String,
    /// `(precision, recall, f1)` per requested setting, averaged over runs.
    pub scores: Vec<(f64, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerEmotionReport {
    pub dataset: String,
    pub settings: Vec<Setting>,
    pub rows: Vec<EmotionRow>,
    pub macro_row: Vec<(f64, f64, f64)>,
}

/// Per-label breakdown of one dataset under each of `settings`.
pub fn per_emotion_report(results: &ResultsTable, dataset: &str, settings: &[Setting]) -> Result<PerEmotionReport> {
    if settings.is_empty() {
        return Err(Error::Evaluation("no settings requested".into()));
    }
    let rows: Vec<&ResultRow> = settings
        .iter()
        .map(|&s| {
            results
                .get(dataset, s)
                .ok_or_else(|| Error::Evaluation(format!("no results for {dataset} / {s}")))
        })
        .collect::<Result<_>>()?;
    let labels: Vec<String> = rows[0].mean.per_label.iter().map(|l| l.label.clone()).collect();
    let mut out = Vec::with_capacity(labels.len());
    for label in labels {
        let scores = rows
            .iter()
            .map(|r| {
                r.mean
                    .per_label
                    .iter()
                    .find(|l| l.label == label)
                    .map(|l| (l.precision, l.recall, l.f1))
                    .ok_or_else(|| Error::Evaluation(format!("label `{label}` missing from {}", r.setting)))
            })
            .collect::<Result<_>>()?;
        out.push(EmotionRow { label, scores });
    }
    Ok(PerEmotionReport {
        dataset: dataset.to_owned(),
        settings: settings.to_vec(),
        rows: out,
        macro_row: rows.iter().map(|r| (r.mean.precision, r.mean.recall, r.mean.f1)).collect(),
    })
}

impl PerEmotionReport {
    /// Tab-separated percentages; a `*` suffix marks values above the first
    /// setting's value in the same row.
    pub fn render(&self) -> String {
        let mut out = String::from("emotion");
        for s in &self.settings {
            for m in ["P", "R", "F1"] {
                let _ = write!(out, "\t{s} {m}");
            }
        }
        out.push('\n');
        let mut line = |name: &str, cells: &[(f64, f64, f64)]| {
            out.push_str(name);
            let base = cells[0];
            for (k, &(p, r, f)) in cells.iter().enumerate() {
                for (v, b) in [(p, base.0), (r, base.1), (f, base.2)] {
                    let mark = if k > 0 && v > b { "*" } else { "" };
                    let _ = write!(out, "\t{}{mark}", percent(v));
                }
            }
            out.push('\n');
        };
        for row in &self.rows {
            line(&row.label, &row.scores);
        }
        line("macro", &self.macro_row);
        out
    }
}
