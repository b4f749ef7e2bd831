//! Role-content analyses: frequent role tokens, emotion distributions of
//! instances containing a token, and instances fixed by removing a role.

mod plot;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, RoleKind};
use crate::error::{Error, Result};
use crate::transform::{Setting, SettingKind};
pub use plot::distribution_chart;

fn fold(token: &str, case_fold: bool) -> String {
    if case_fold {
        token.to_lowercase()
    } else {
        token.to_owned()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenFrequency {
    pub role: RoleKind,
    /// Descending by count, ties in lexicographic order.
    pub entries: Vec<(String, usize)>,
}

impl TokenFrequency {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("role\ttoken\tcount\n");
        for (token, count) in &self.entries {
            let _ = writeln!(out, "{}\t{token}\t{count}", self.role);
        }
        out
    }
}

/// Counts every token occurrence inside spans of `role`, after optional case
/// folding and stoplist removal (the stoplist is folded the same way), and
/// keeps the `k` most frequent.
pub fn top_role_tokens(
    corpus: &Corpus,
    role: RoleKind,
    k: usize,
    case_fold: bool,
    stoplist: Option<&BTreeSet<String>>,
) -> Result<TokenFrequency> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let stop: BTreeSet<String> = stoplist
        .into_iter()
        .flatten()
        .map(|s| fold(s, case_fold))
        .collect();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for inst in &corpus.instances {
        for span in inst.spans(role) {
            for token in &inst.tokens[span.start..span.end] {
                let t = fold(token, case_fold);
                if !stop.contains(&t) {
                    *counts.entry(t).or_default() += 1;
                }
            }
        }
    }
    if !corpus.annotated_roles().contains(&role) {
        log::warn!("{}: role `{role}` is not annotated", corpus.name);
    }
    let mut entries: Vec<(String, usize)> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(k);
    Ok(TokenFrequency { role, entries })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionDistribution {
    pub token: String,
    pub emotions: Vec<String>,
    /// Instances containing the token.
    pub instances: usize,
    /// Share of those instances per emotion; labels outside `emotions` make
    /// up `remainder`.
    pub fractions: Vec<f64>,
    pub remainder: f64,
    /// The same shares over the whole corpus.
    pub prior: Vec<f64>,
    pub prior_remainder: f64,
}

impl EmotionDistribution {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("token\temotion\tfraction\toverall\n");
        for ((e, f), p) in self.emotions.iter().zip(&self.fractions).zip(&self.prior) {
            let _ = writeln!(out, "{}\t{e}\t{f:.6}\t{p:.6}", self.token);
        }
        let _ = writeln!(out, "{}\t(other)\t{:.6}\t{:.6}", self.token, self.remainder, self.prior_remainder);
        out
    }
}

/// Per-emotion shares of `labels` plus the remainder outside `emotions`;
/// all zero for an empty input.
pub fn label_shares<'a>(labels: impl IntoIterator<Item = &'a str>, emotions: &[String]) -> (usize, Vec<f64>, f64) {
    let mut counts = vec![0usize; emotions.len()];
    let mut total = 0usize;
    for label in labels {
        total += 1;
        if let Some(k) = emotions.iter().position(|e| e == label) {
            counts[k] += 1;
        }
    }
    if total == 0 {
        return (0, vec![0.0; emotions.len()], 0.0);
    }
    let shares: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let inside: usize = counts.iter().sum();
    (total, shares, (total - inside) as f64 / total as f64)
}

/// Emotion shares among instances containing `token` anywhere (exact match
/// after optional case folding), next to the corpus-wide shares.
pub fn emotion_distribution(
    corpus: &Corpus,
    token: &str,
    emotions: &[String],
    case_fold: bool,
) -> Result<EmotionDistribution> {
    if token.is_empty() {
        return Err(Error::InvalidConfig("token must be non-empty".into()));
    }
    let needle = fold(token, case_fold);
    let containing = corpus
        .instances
        .iter()
        .filter(|i| i.tokens.iter().any(|t| fold(t, case_fold) == needle))
        .map(|i| i.label.as_str());
    let (instances, fractions, remainder) = label_shares(containing, emotions);
    if instances == 0 {
        log::warn!("{}: token `{token}` does not occur", corpus.name);
    }
    let (_, prior, prior_remainder) = label_shares(corpus.instances.iter().map(|i| i.label.as_str()), emotions);
    Ok(EmotionDistribution {
        token: token.to_owned(),
        emotions: emotions.to_vec(),
        instances,
        fractions,
        remainder,
        prior,
        prior_remainder,
    })
}

/// Predicted labels keyed by instance id.
pub type PredictionMap = BTreeMap<String, String>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisagreementExample {
    pub id: String,
    pub gold: String,
    pub as_is: String,
    pub without: BTreeMap<RoleKind, String>,
}

/// Instances misclassified under As-Is but correctly classified by at least
/// one Without(role) setting, sorted by id. Other settings are ignored.
pub fn mine_disagreements(
    predictions: &BTreeMap<Setting, PredictionMap>,
    gold: &BTreeMap<String, String>,
) -> Result<Vec<DisagreementExample>> {
    let as_is = predictions
        .get(&Setting::AsIs)
        .ok_or_else(|| Error::InvalidConfig("missing predictions for setting as-is".into()))?;
    let without: Vec<(RoleKind, &PredictionMap)> = predictions
        .iter()
        .filter(|(s, _)| s.kind() == SettingKind::Without)
        .map(|(s, m)| (s.role().expect("without has a role"), m))
        .collect();
    if without.is_empty() {
        return Err(Error::InvalidConfig("missing predictions for any without setting".into()));
    }
    for (setting, map) in predictions {
        if map.len() != gold.len() || !map.keys().eq(gold.keys()) {
            return Err(Error::InvalidConfig(format!(
                "predictions for {setting} cover different instances than the gold labels"
            )));
        }
    }
    let mut out = Vec::new();
    for (id, g) in gold {
        let asis = &as_is[id];
        if asis == g {
            continue;
        }
        let per_role: BTreeMap<RoleKind, String> = without.iter().map(|(r, m)| (*r, m[id].clone())).collect();
        if per_role.values().any(|p| p == g) {
            out.push(DisagreementExample {
                id: id.clone(),
                gold: g.clone(),
                as_is: asis.clone(),
                without: per_role,
            });
        }
    }
    Ok(out)
}

pub fn disagreements_to_tsv(examples: &[DisagreementExample]) -> String {
    let roles: BTreeSet<RoleKind> = examples.iter().flat_map(|e| e.without.keys().copied()).collect();
    let mut out = String::from("id\tgold\tas-is");
    for r in &roles {
        let _ = write!(out, "\twithout-{r}");
    }
    out.push('\n');
    for e in examples {
        let _ = write!(out, "{}\t{}\t{}", e.id, e.gold, e.as_is);
        for r in &roles {
            let _ = write!(out, "\t{}", e.without.get(r).map_or("-", String::as_str));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnnotatedInstance, Span};
    use proptest::prelude::*;

    fn inst(id: &str, text: &str, label: &str, role: Option<(RoleKind, usize, usize)>) -> AnnotatedInstance {
        let mut i = AnnotatedInstance::new(id, text.split(' ').map(String::from).collect(), label);
        if let Some((r, s, e)) = role {
            i.roles.insert(r, vec![Span::new(s, e)]);
        }
        i
    }

    fn corpus(instances: Vec<AnnotatedInstance>) -> Corpus {
        Corpus::from_instances("t", instances).unwrap()
    }

    #[test]
    fn stoplist_and_tie_break() {
        let c = corpus(vec![inst(
            "1",
            "John hates cars because they pollute the environment",
            "anger",
            Some((RoleKind::Stimulus, 5, 8)),
        )]);
        let stop = BTreeSet::from(["the".to_string()]);
        let f = top_role_tokens(&c, RoleKind::Stimulus, 2, true, Some(&stop)).unwrap();
        assert_eq!(
            f.entries,
            vec![("environment".to_string(), 1), ("pollute".to_string(), 1)]
        );
        let all = top_role_tokens(&c, RoleKind::Stimulus, 50, true, None).unwrap();
        assert_eq!(all.entries.len(), 3);
        assert!(top_role_tokens(&c, RoleKind::Stimulus, 0, true, None).is_err());
        assert!(top_role_tokens(&c, RoleKind::Cue, 3, true, None).unwrap().entries.is_empty());
    }

    #[test]
    fn case_folding_merges() {
        let c = corpus(vec![
            inst("1", "People cheer", "joy", Some((RoleKind::Experiencer, 0, 1))),
            inst("2", "people cry", "sadness", Some((RoleKind::Experiencer, 0, 1))),
        ]);
        let folded = top_role_tokens(&c, RoleKind::Experiencer, 5, true, None).unwrap();
        assert_eq!(folded.entries, vec![("people".to_string(), 2)]);
        let raw = top_role_tokens(&c, RoleKind::Experiencer, 5, false, None).unwrap();
        assert_eq!(raw.entries.len(), 2);
    }

    #[test]
    fn distribution_examples() {
        let c = corpus(vec![
            inst("1", "trump wins", "joy", None),
            inst("2", "trump again", "joy", None),
            inst("3", "rain", "sadness", None),
            inst("4", "storm", "anger", None),
        ]);
        let emotions: Vec<String> = ["joy", "sadness", "anger"].map(String::from).to_vec();
        let d = emotion_distribution(&c, "Trump", &emotions, true).unwrap();
        assert_eq!(d.instances, 2);
        assert_eq!(d.fractions[0], 1.0);
        assert!((d.fractions.iter().sum::<f64>() + d.remainder - 1.0).abs() < 1e-9);
        let none = emotion_distribution(&c, "snow", &emotions, true).unwrap();
        assert_eq!(none.instances, 0);
        assert!(none.fractions.iter().all(|&f| f == 0.0));
        assert!(emotion_distribution(&c, "", &emotions, true).is_err());
    }

    #[test]
    fn token_everywhere_equals_prior() {
        let c = corpus(vec![
            inst("1", "the a", "joy", None),
            inst("2", "the b", "fear", None),
            inst("3", "the c", "fear", None),
        ]);
        let emotions: Vec<String> = vec!["fear".into()];
        let d = emotion_distribution(&c, "the", &emotions, true).unwrap();
        assert_eq!(d.fractions, d.prior);
        assert_eq!(d.remainder, d.prior_remainder);
    }

    fn preds(pairs: &[(&str, &str)]) -> PredictionMap {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn disagreement_filtering() {
        let gold = preds(&[("a", "joy"), ("b", "fear"), ("c", "anger")]);
        let mut p = BTreeMap::new();
        p.insert(Setting::AsIs, preds(&[("a", "surprise"), ("b", "fear"), ("c", "joy")]));
        p.insert(
            Setting::Without(RoleKind::Stimulus),
            preds(&[("a", "joy"), ("b", "fear"), ("c", "fear")]),
        );
        p.insert(
            Setting::Only(RoleKind::Stimulus),
            preds(&[("a", "joy"), ("b", "joy"), ("c", "anger")]),
        );
        let found = mine_disagreements(&p, &gold).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].id, "a");
        assert_eq!(found[0].as_is, "surprise");
        assert_eq!(found[0].without[&RoleKind::Stimulus], "joy");
        assert!(disagreements_to_tsv(&found).starts_with("id\tgold\tas-is\twithout-stimulus\na\tjoy\tsurprise\tjoy"));

        let mut correct = p.clone();
        correct.insert(Setting::AsIs, gold.clone());
        assert!(mine_disagreements(&correct, &gold).unwrap().is_empty());
    }

    #[test]
    fn disagreement_errors() {
        let gold = preds(&[("a", "joy")]);
        let mut p = BTreeMap::new();
        p.insert(Setting::AsIs, preds(&[("a", "fear")]));
        let err = mine_disagreements(&p, &gold).unwrap_err();
        assert!(err.to_string().contains("without"));
        p.insert(Setting::Without(RoleKind::Cue), preds(&[("b", "joy")]));
        assert!(mine_disagreements(&p, &gold).is_err());
        let only_without: BTreeMap<_, _> = [(Setting::Without(RoleKind::Cue), preds(&[("a", "joy")]))].into();
        assert!(mine_disagreements(&only_without, &gold).unwrap_err().to_string().contains("as-is"));
    }

    fn arb_corpus() -> impl Strategy<Value = Corpus> {
        let words = prop::sample::select(vec!["a", "B", "b", "c", "the", "The"]);
        let labels = prop::sample::select(vec!["joy", "fear", "anger"]);
        let item = (prop::collection::vec(words, 1..8), labels, any::<prop::sample::Index>(), any::<prop::sample::Index>());
        prop::collection::vec(item, 1..60).prop_map(|items| {
            let instances = items
                .into_iter()
                .enumerate()
                .map(|(n, (toks, label, a, b))| {
                    let (mut s, mut e) = (a.index(toks.len()), b.index(toks.len()) + 1);
                    if s >= e {
                        std::mem::swap(&mut s, &mut e);
                        s = s.saturating_sub(1);
                        e = e.max(s + 1);
                    }
                    let mut i = AnnotatedInstance::new(format!("{n}"), toks.iter().map(|t| t.to_string()).collect(), label);
                    i.roles.insert(RoleKind::Target, vec![Span::new(s, e)]);
                    i
                })
                .collect();
            Corpus::from_instances("p", instances).unwrap()
        })
    }

    proptest! {
        #[test]
        fn counts_match_nested_loop(c in arb_corpus(), fold_case in any::<bool>()) {
            let got = top_role_tokens(&c, RoleKind::Target, 100, fold_case, None).unwrap();
            for (token, count) in &got.entries {
                let mut brute = 0;
                for inst in &c.instances {
                    for span in inst.spans(RoleKind::Target) {
                        for pos in span.start..span.end {
                            let t = if fold_case { inst.tokens[pos].to_lowercase() } else { inst.tokens[pos].clone() };
                            if &t == token { brute += 1; }
                        }
                    }
                }
                prop_assert_eq!(*count, brute);
            }
            for w in got.entries.windows(2) {
                prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
            }
        }

        #[test]
        fn split_by_token_reconstructs_prior(c in arb_corpus(), token in prop::sample::select(vec!["a", "b", "the"])) {
            let emotions: Vec<String> = vec!["joy".into(), "fear".into()];
            let with = emotion_distribution(&c, token, &emotions, true).unwrap();
            let lacking = c.instances.iter()
                .filter(|i| !i.tokens.iter().any(|t| t.to_lowercase() == token))
                .map(|i| i.label.as_str());
            let (n_without, without, _) = label_shares(lacking, &emotions);
            let n = c.len() as f64;
            for k in 0..emotions.len() {
                let rebuilt = (with.fractions[k] * with.instances as f64 + without[k] * n_without as f64) / n;
                prop_assert!((rebuilt - with.prior[k]).abs() < 1e-12);
            }
        }
    }
}
