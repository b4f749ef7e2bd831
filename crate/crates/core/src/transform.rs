//! Input settings: identity, role-only masking, role removal, and positional
//! indicators around role spans.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{AnnotatedInstance, Corpus, RoleKind};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Setting {
    AsIs,
    Only(RoleKind),
    Without(RoleKind),
    Position(RoleKind),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SettingKind {
    AsIs,
    Only,
    Without,
    Position,
}

impl Setting {
    pub fn kind(&self) -> SettingKind {
        match self {
            Setting::AsIs => SettingKind::AsIs,
            Setting::Only(_) => SettingKind::Only,
            Setting::Without(_) => SettingKind::Without,
            Setting::Position(_) => SettingKind::Position,
        }
    }

    pub fn role(&self) -> Option<RoleKind> {
        match *self {
            Setting::AsIs => None,
            Setting::Only(r) | Setting::Without(r) | Setting::Position(r) => Some(r),
        }
    }

    pub fn from_parts(kind: SettingKind, role: Option<RoleKind>) -> Result<Self> {
        match (kind, role) {
            (SettingKind::AsIs, None) => Ok(Setting::AsIs),
            (SettingKind::Only, Some(r)) => Ok(Setting::Only(r)),
            (SettingKind::Without, Some(r)) => Ok(Setting::Without(r)),
            (SettingKind::Position, Some(r)) => Ok(Setting::Position(r)),
            (SettingKind::AsIs, Some(_)) => {
                Err(Error::InvalidConfig("as-is setting takes no role".into()))
            }
            (kind, None) => Err(Error::InvalidConfig(format!("{kind:?} setting requires a role"))),
        }
    }

    /// File-name friendly form, e.g. `without-stimulus`.
    pub fn slug(&self) -> String {
        match self.role() {
            None => "as-is".into(),
            Some(r) => format!("{}-{r}", self.kind_str()),
        }
    }

    fn kind_str(&self) -> &'static str {
        match self.kind() {
            SettingKind::AsIs => "as-is",
            SettingKind::Only => "only",
            SettingKind::Without => "without",
            SettingKind::Position => "position",
        }
    }

    /// All ten settings for the given roles: As-Is plus Only/Without/Position
    /// per role.
    pub fn grid(roles: &[RoleKind]) -> Vec<Setting> {
        let mut out = vec![Setting::AsIs];
        for &r in roles {
            out.extend([Setting::Without(r), Setting::Only(r), Setting::Position(r)]);
        }
        out
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.role() {
            None => f.write_str("as-is"),
            Some(r) => write!(f, "{}:{r}", self.kind_str()),
        }
    }
}

impl FromStr for Setting {
    type Err = Error;

    /// Accepts `as-is`, `only:cue`, `without-stimulus`, `Position(target)`.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase();
        if matches!(norm.as_str(), "as-is" | "asis" | "as_is") {
            return Ok(Setting::AsIs);
        }
        let norm = norm.trim_end_matches(')');
        let (kind, role) = norm
            .split_once([':', '-', '(', ' '])
            .ok_or_else(|| Error::InvalidConfig(format!("cannot parse setting `{s}`")))?;
        let role: RoleKind = role.trim().parse()?;
        match kind.trim() {
            "only" => Ok(Setting::Only(role)),
            "without" => Ok(Setting::Without(role)),
            "position" | "pos" => Ok(Setting::Position(role)),
            _ => Err(Error::InvalidConfig(format!("cannot parse setting `{s}`"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SettingRepr {
    kind: SettingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    role: Option<RoleKind>,
}

impl Serialize for Setting {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        SettingRepr {
            kind: self.kind(),
            role: self.role(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Setting {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Either {
            Text(String),
            Parts(SettingRepr),
        }
        match Either::deserialize(deserializer)? {
            Either::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Either::Parts(p) => Setting::from_parts(p.kind, p.role).map_err(serde::de::Error::custom),
        }
    }
}

/// Mask and marker tokens added to the input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub mask: String,
    pub open: String,
    pub close: String,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        SpecialTokens {
            mask: "X".into(),
            open: "⌊".into(),
            close: "⌉".into(),
        }
    }
}

impl SpecialTokens {
    /// Fails unless the three tokens are pairwise distinct and absent from
    /// `vocabulary`.
    pub fn new<'a>(
        mask: impl Into<String>,
        open: impl Into<String>,
        close: impl Into<String>,
        vocabulary: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self> {
        let specials = SpecialTokens {
            mask: mask.into(),
            open: open.into(),
            close: close.into(),
        };
        specials.check(vocabulary)?;
        Ok(specials)
    }

    pub fn check<'a>(&self, vocabulary: impl IntoIterator<Item = &'a str>) -> Result<()> {
        if self.mask == self.open || self.mask == self.close || self.open == self.close {
            return Err(Error::InvalidConfig(format!(
                "special tokens must be distinct: {:?}",
                self.as_array()
            )));
        }
        if self.as_array().iter().any(|t| t.is_empty()) {
            return Err(Error::InvalidConfig("special tokens must be non-empty".into()));
        }
        for tok in vocabulary {
            if self.is_special(tok) {
                return Err(Error::InvalidConfig(format!(
                    "special token `{tok}` occurs in the corpus vocabulary"
                )));
            }
        }
        Ok(())
    }

    pub fn check_corpus(&self, corpus: &Corpus) -> Result<()> {
        self.check(corpus.vocabulary())
    }

    pub fn as_array(&self) -> [&str; 3] {
        [&self.mask, &self.open, &self.close]
    }

    pub fn is_special(&self, token: &str) -> bool {
        token == self.mask || token == self.open || token == self.close
    }
}

/// Token sequence fed to a classifier, traceable to its source instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformedInstance {
    pub source_id: String,
    pub tokens: Vec<String>,
    pub label: String,
    pub setting: Setting,
}

/// Indices replaced by the mask token under `Only(r)` or `Without(r)`.
pub fn masked_index_set(instance: &AnnotatedInstance, setting: Setting) -> Result<BTreeSet<usize>> {
    let inside = |role: RoleKind| -> BTreeSet<usize> {
        instance
            .spans(role)
            .iter()
            .flat_map(|s| s.start..s.end)
            .collect()
    };
    match setting {
        Setting::Without(role) => Ok(inside(role)),
        Setting::Only(role) => {
            let keep = inside(role);
            Ok((0..instance.tokens.len()).filter(|i| !keep.contains(i)).collect())
        }
        Setting::AsIs | Setting::Position(_) => Err(Error::InvalidConfig(format!(
            "no masking footprint for setting {setting}"
        ))),
    }
}

pub fn apply_setting(
    instance: &AnnotatedInstance,
    setting: Setting,
    specials: &SpecialTokens,
) -> TransformedInstance {
    let tokens = match setting {
        Setting::AsIs => instance.tokens.clone(),
        Setting::Only(_) | Setting::Without(_) => {
            let masked = masked_index_set(instance, setting).expect("masking setting");
            instance
                .tokens
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    if masked.contains(&i) {
                        specials.mask.clone()
                    } else {
                        t.clone()
                    }
                })
                .collect()
        }
        Setting::Position(role) => {
            let mut tokens = instance.tokens.clone();
            let mut spans = instance.spans(role).to_vec();
            spans.sort();
            // Right to left so earlier indices stay valid.
            for span in spans.iter().rev() {
                tokens.insert(span.end, specials.close.clone());
                tokens.insert(span.start, specials.open.clone());
            }
            tokens
        }
    };
    TransformedInstance {
        source_id: instance.id.clone(),
        tokens,
        label: instance.label.clone(),
        setting,
    }
}

/// Removes positional markers, leaving everything else in order.
pub fn strip_markers(tokens: &[String], specials: &SpecialTokens) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| **t != specials.open && **t != specials.close)
        .cloned()
        .collect()
}

/// Handling of instances that lack the setting's role.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbsentPolicy {
    /// Keep them: Without/Position leave them unchanged, Only masks every token.
    #[default]
    Keep,
    Drop,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TransformReport {
    pub dropped: usize,
}

pub fn transform_corpus(
    corpus: &Corpus,
    setting: Setting,
    specials: &SpecialTokens,
    absent: AbsentPolicy,
) -> (Vec<TransformedInstance>, TransformReport) {
    let mut report = TransformReport::default();
    let out = corpus
        .instances
        .iter()
        .filter(|inst| match (setting.role(), absent) {
            (Some(role), AbsentPolicy::Drop) if !inst.has_role(role) => {
                report.dropped += 1;
                false
            }
            _ => true,
        })
        .map(|inst| apply_setting(inst, setting, specials))
        .collect();
    (out, report)
}

/// Sidecar path holding `{"setting": {...}}` for a transformed export.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// Writes transformed instances as canonical JSONL (no roles) plus a
/// metadata sidecar recording the setting.
pub fn write_transformed(path: &Path, setting: Setting, instances: &[TransformedInstance]) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        id: &'a str,
        tokens: &'a [String],
        label: &'a str,
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for inst in instances {
        let line = Line {
            id: &inst.source_id,
            tokens: &inst.tokens,
            label: &inst.label,
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let meta = serde_json::json!({ "setting": setting });
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_string_pretty(&meta).expect("json"))
        .map_err(|e| Error::io(&side, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Span;
    use proptest::prelude::*;

    fn table2() -> AnnotatedInstance {
        let tokens = "John hates cars because they pollute the environment"
            .split(' ')
            .map(str::to_owned)
            .collect();
        AnnotatedInstance::new("t2", tokens, "anger")
            .with_role(RoleKind::Experiencer, vec![Span::new(0, 1)])
            .with_role(RoleKind::Cue, vec![Span::new(1, 2)])
            .with_role(RoleKind::Target, vec![Span::new(2, 3)])
            .with_role(RoleKind::Stimulus, vec![Span::new(5, 8)])
    }

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(str::to_owned).collect()
    }

    #[test]
    fn table2_stimulus_rows() {
        let sp = SpecialTokens::default();
        let inst = table2();
        let only = apply_setting(&inst, Setting::Only(RoleKind::Stimulus), &sp);
        assert_eq!(only.tokens, toks("X X X X X pollute the environment"));
        let without = apply_setting(&inst, Setting::Without(RoleKind::Stimulus), &sp);
        assert_eq!(without.tokens, toks("John hates cars because they X X X"));
        let pos = apply_setting(&inst, Setting::Position(RoleKind::Stimulus), &sp);
        assert_eq!(pos.tokens, toks("John hates cars because they ⌊ pollute the environment ⌉"));
        assert_eq!(apply_setting(&inst, Setting::AsIs, &sp).tokens, inst.tokens);
    }

    #[test]
    fn footprints() {
        let inst = table2();
        let without = masked_index_set(&inst, Setting::Without(RoleKind::Stimulus)).unwrap();
        assert_eq!(without, BTreeSet::from([5, 6, 7]));
        // Oracle: brute-force complement of {5,6,7} in 0..8.
        let all: BTreeSet<usize> = (0..8).collect();
        let expected: BTreeSet<usize> = all.difference(&without).copied().collect();
        assert_eq!(masked_index_set(&inst, Setting::Only(RoleKind::Stimulus)).unwrap(), expected);
        assert_eq!(expected, BTreeSet::from([0, 1, 2, 3, 4]));

        let bare = AnnotatedInstance::new("b", toks("a b"), "joy");
        assert!(masked_index_set(&bare, Setting::Without(RoleKind::Cue)).unwrap().is_empty());
        assert!(masked_index_set(&bare, Setting::AsIs).is_err());
        assert!(masked_index_set(&bare, Setting::Position(RoleKind::Cue)).is_err());
    }

    #[test]
    fn strip_markers_cases() {
        let sp = SpecialTokens::default();
        let inst = table2();
        let pos = apply_setting(&inst, Setting::Position(RoleKind::Stimulus), &sp);
        assert_eq!(strip_markers(&pos.tokens, &sp), inst.tokens);
        assert_eq!(strip_markers(&inst.tokens, &sp), inst.tokens);
        assert!(strip_markers(&toks("⌊ ⌉"), &sp).is_empty());
    }

    #[test]
    fn adjacent_spans_get_own_markers() {
        let sp = SpecialTokens::default();
        let inst = AnnotatedInstance::new("a", toks("a b c d e"), "joy")
            .with_role(RoleKind::Cue, vec![Span::new(2, 4), Span::new(0, 2)]);
        let pos = apply_setting(&inst, Setting::Position(RoleKind::Cue), &sp);
        assert_eq!(pos.tokens, toks("⌊ a b ⌉ ⌊ c d ⌉ e"));
    }

    #[test]
    fn cross_role_overlap_masks_by_setting_role() {
        let sp = SpecialTokens::default();
        let inst = AnnotatedInstance::new("a", toks("so very sad now"), "sadness")
            .with_role(RoleKind::Cue, vec![Span::new(1, 3)])
            .with_role(RoleKind::Stimulus, vec![Span::new(2, 4)]);
        let out = apply_setting(&inst, Setting::Without(RoleKind::Stimulus), &sp);
        assert_eq!(out.tokens, toks("so very X X"));
    }

    fn corpus_with_missing_stimulus() -> Corpus {
        let instances = (0..10)
            .map(|i| {
                let inst = AnnotatedInstance::new(format!("i{i}"), toks("a b c"), "joy");
                if i < 6 {
                    inst.with_role(RoleKind::Stimulus, vec![Span::new(1, 3)])
                } else {
                    inst
                }
            })
            .collect();
        Corpus::from_instances("c", instances).unwrap()
    }

    #[test]
    fn absent_policy() {
        let sp = SpecialTokens::default();
        let c = corpus_with_missing_stimulus();
        let s = Setting::Without(RoleKind::Stimulus);
        let (dropped, report) = transform_corpus(&c, s, &sp, AbsentPolicy::Drop);
        assert_eq!((dropped.len(), report.dropped), (6, 4));
        let (kept, _) = transform_corpus(&c, s, &sp, AbsentPolicy::Keep);
        assert_eq!(kept.len(), 10);
        let identical = kept
            .iter()
            .zip(&c.instances)
            .filter(|(t, i)| t.tokens == i.tokens)
            .count();
        assert_eq!(identical, 4);
        let (only, _) = transform_corpus(&c, Setting::Only(RoleKind::Stimulus), &sp, AbsentPolicy::Keep);
        assert_eq!(only[9].tokens, toks("X X X"));
        let (asis, _) = transform_corpus(&c, Setting::AsIs, &sp, AbsentPolicy::Drop);
        assert!(asis.iter().zip(&c.instances).all(|(t, i)| t.tokens == i.tokens));
    }

    #[test]
    fn special_token_validation() {
        assert!(SpecialTokens::new("X", "X", "]", ["a"]).is_err());
        assert!(SpecialTokens::new("X", "[", "]", ["a", "X"]).is_err());
        SpecialTokens::new("X", "[", "]", ["a", "b"]).unwrap();
    }

    #[test]
    fn setting_parse_and_serde() {
        for s in ["as-is", "only:cue", "without-stimulus", "Position(target)", "pos experiencer"] {
            let setting: Setting = s.parse().unwrap();
            let json = serde_json::to_string(&setting).unwrap();
            assert_eq!(serde_json::from_str::<Setting>(&json).unwrap(), setting);
            assert_eq!(setting.to_string().parse::<Setting>().unwrap(), setting);
        }
        let s: Setting = serde_json::from_str(r#""without:cue""#).unwrap();
        assert_eq!(s, Setting::Without(RoleKind::Cue));
        assert_eq!(
            serde_json::to_string(&Setting::Only(RoleKind::Cue)).unwrap(),
            r#"{"kind":"only","role":"cue"}"#
        );
        assert!("only".parse::<Setting>().is_err());
        assert!(serde_json::from_str::<Setting>(r#"{"kind":"as-is","role":"cue"}"#).is_err());
        assert_eq!(Setting::grid(&[RoleKind::Cue]).len(), 4);
    }

    #[test]
    fn export_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let sp = SpecialTokens::default();
        let s = Setting::Position(RoleKind::Stimulus);
        write_transformed(&path, s, &[apply_setting(&table2(), s, &sp)]).unwrap();
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(meta["setting"]["kind"], "position");
        assert_eq!(meta["setting"]["role"], "stimulus");
        let line = std::fs::read_to_string(&path).unwrap();
        assert!(line.contains("\"⌊\"") && !line.contains("roles"));
    }

    /// Random instance: tokens from a small alphabet, non-overlapping spans per role.
    fn arb_instance() -> impl Strategy<Value = AnnotatedInstance> {
        (1usize..25).prop_flat_map(|n| {
            let tokens = proptest::collection::vec("[a-z]{1,4}", n);
            let role_spans = proptest::collection::vec(
                proptest::collection::vec((0..n, 1usize..5), 0..4),
                4,
            );
            (tokens, role_spans).prop_map(move |(tokens, role_spans)| {
                let mut inst = AnnotatedInstance::new("p", tokens, "joy");
                for (role, raw) in RoleKind::ALL.into_iter().zip(role_spans) {
                    let mut spans: Vec<Span> = Vec::new();
                    for (start, len) in raw {
                        let span = Span::new(start, (start + len).min(n));
                        if !spans.iter().any(|s| s.overlaps(&span)) {
                            spans.push(span);
                        }
                    }
                    inst.roles.insert(role, spans);
                }
                inst
            })
        })
    }

    proptest! {
        #[test]
        fn transformation_invariants(inst in arb_instance()) {
            inst.validate().unwrap();
            let sp = SpecialTokens::default();
            let n = inst.tokens.len();
            for role in RoleKind::ALL {
                let only = masked_index_set(&inst, Setting::Only(role)).unwrap();
                let without = masked_index_set(&inst, Setting::Without(role)).unwrap();
                prop_assert!(only.is_disjoint(&without));
                prop_assert_eq!(only.len() + without.len(), n);

                for setting in [Setting::Only(role), Setting::Without(role)] {
                    let out = apply_setting(&inst, setting, &sp);
                    prop_assert_eq!(out.tokens.len(), n);
                    let fp = masked_index_set(&inst, setting).unwrap();
                    for i in 0..n {
                        if fp.contains(&i) {
                            prop_assert_eq!(&out.tokens[i], &sp.mask);
                        } else {
                            prop_assert_eq!(&out.tokens[i], &inst.tokens[i]);
                        }
                    }
                }

                let mut again = inst.clone();
                again.tokens = apply_setting(&inst, Setting::Without(role), &sp).tokens;
                prop_assert_eq!(
                    apply_setting(&again, Setting::Without(role), &sp).tokens,
                    again.tokens.clone()
                );

                let pos = apply_setting(&inst, Setting::Position(role), &sp);
                prop_assert_eq!(pos.tokens.len(), n + 2 * inst.spans(role).len());
                prop_assert_eq!(strip_markers(&pos.tokens, &sp), inst.tokens.clone());
            }
        }
    }
}
