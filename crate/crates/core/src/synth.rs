//! Synthetic role-annotated corpora with a known label mechanism.
//!
//! Each role draws filler tokens from its own vocabulary `{prefix}{i}`. Token
//! `i` of a role vocabulary belongs to label bucket `i mod |labels|`. The
//! informative role always draws from the bucket of the instance's base
//! label, so with zero noise its tokens determine the label exactly.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedInstance, Corpus, RoleKind, Span};
use crate::error::{Error, Result};

pub const DEFAULT_TEMPLATE: &str = "{experiencer} {cue} {target} because {stimulus}";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub name: String,
    pub n_instances: usize,
    pub labels: Vec<String>,
    pub informative_role: RoleKind,
    /// Vocabulary size per role; roles missing here use 40.
    pub vocab_sizes: BTreeMap<RoleKind, usize>,
    /// Inclusive token-count range of every role span.
    pub span_length: BTreeMap<RoleKind, (usize, usize)>,
    /// Probability of replacing the label with a uniformly drawn other label.
    pub noise: f64,
    pub seed: u64,
    /// Whitespace-separated; `{role}` slots receive role spans, other words
    /// are copied literally.
    pub template: String,
    /// A second role that follows the base label with probability
    /// `correlation` and is uniform otherwise.
    pub correlated_role: Option<RoleKind>,
    pub correlation: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            name: "synth".into(),
            n_instances: 1000,
            labels: ["anger", "fear", "joy", "sadness"].map(String::from).to_vec(),
            informative_role: RoleKind::Cue,
            vocab_sizes: BTreeMap::new(),
            span_length: BTreeMap::from([(RoleKind::Stimulus, (2, 4))]),
            noise: 0.0,
            seed: 0,
            template: DEFAULT_TEMPLATE.into(),
            correlated_role: None,
            correlation: 0.0,
        }
    }
}

fn prefix(role: RoleKind) -> &'static str {
    match role {
        RoleKind::Experiencer => "exp",
        RoleKind::Cue => "cue",
        RoleKind::Target => "tar",
        RoleKind::Stimulus => "stim",
    }
}

enum Slot {
    Word(String),
    Role(RoleKind),
}

impl SynthSpec {
    pub fn vocab_size(&self, role: RoleKind) -> usize {
        self.vocab_sizes.get(&role).copied().unwrap_or(40)
    }

    pub fn length_range(&self, role: RoleKind) -> (usize, usize) {
        self.span_length.get(&role).copied().unwrap_or((1, 1))
    }

    /// Vocabulary token of `role` at index `i`.
    pub fn token(role: RoleKind, i: usize) -> String {
        format!("{}{i}", prefix(role))
    }

    /// Label bucket of a generated role token, if it is one.
    pub fn bucket_of(&self, role: RoleKind, token: &str) -> Option<usize> {
        let i: usize = token.strip_prefix(prefix(role))?.parse().ok()?;
        (i < self.vocab_size(role)).then_some(i % self.labels.len())
    }

    fn slots(&self) -> Result<Vec<Slot>> {
        let mut seen = Vec::new();
        let mut slots = Vec::new();
        for word in self.template.split_whitespace() {
            match word.strip_prefix('{').and_then(|w| w.strip_suffix('}')) {
                Some(name) => {
                    let role: RoleKind = name.parse()?;
                    if seen.contains(&role) {
                        return Err(Error::InvalidConfig(format!("template repeats role `{role}`")));
                    }
                    seen.push(role);
                    slots.push(Slot::Role(role));
                }
                None => slots.push(Slot::Word(word.to_owned())),
            }
        }
        if !seen.contains(&self.informative_role) {
            return Err(Error::InvalidConfig(format!(
                "template has no slot for informative role `{}`",
                self.informative_role
            )));
        }
        if let Some(r) = self.correlated_role.filter(|r| !seen.contains(r)) {
            return Err(Error::InvalidConfig(format!("template has no slot for correlated role `{r}`")));
        }
        Ok(slots)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_instances == 0 {
            return bad("n_instances must be positive".into());
        }
        if self.labels.len() < 2 {
            return bad("at least two labels are needed".into());
        }
        let mut sorted = self.labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.labels.len() {
            return bad("labels must be distinct".into());
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise {} outside [0, 1)", self.noise));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return bad(format!("correlation {} outside [0, 1]", self.correlation));
        }
        for role in RoleKind::ALL {
            if self.vocab_size(role) < self.labels.len() {
                return bad(format!("vocabulary of `{role}` is smaller than the label set"));
            }
            let (lo, hi) = self.length_range(role);
            if lo == 0 || lo > hi {
                return bad(format!("invalid span length range for `{role}`: ({lo}, {hi})"));
            }
        }
        if self.correlated_role == Some(self.informative_role) {
            return bad("correlated role must differ from the informative role".into());
        }
        self.slots().map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub corpus: Corpus,
    /// Ids of instances whose label was flipped by noise, in corpus order.
    pub flipped: Vec<String>,
    /// Base label index of every instance (the label before noise).
    pub base_labels: Vec<usize>,
}

/// Generates the corpus described by `spec`; identical specs give identical
/// output.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let slots = spec.slots()?;
    let n_labels = spec.labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.n_instances.to_string().len();
    let mut instances = Vec::with_capacity(spec.n_instances);
    let mut flipped = Vec::new();
    let mut base_labels = Vec::with_capacity(spec.n_instances);

    for n in 0..spec.n_instances {
        let base = rng.random_range(0..n_labels);
        let id = format!("{}-{n:0width$}", spec.name);
        let mut tokens = Vec::new();
        let mut roles = BTreeMap::new();
        for slot in &slots {
            match slot {
                Slot::Word(w) => tokens.push(w.clone()),
                Slot::Role(role) => {
                    let follows = *role == spec.informative_role
                        || (Some(*role) == spec.correlated_role && rng.random::<f64>() < spec.correlation);
                    let size = spec.vocab_size(*role);
                    let (lo, hi) = spec.length_range(*role);
                    let len = rng.random_range(lo..=hi);
                    let start = tokens.len();
                    for _ in 0..len {
                        let i = if follows {
                            let in_bucket: Vec<usize> = (base..size).step_by(n_labels).collect();
                            *in_bucket.choose(&mut rng).expect("bucket non-empty")
                        } else {
                            rng.random_range(0..size)
                        };
                        tokens.push(SynthSpec::token(*role, i));
                    }
                    roles.insert(*role, vec![Span::new(start, start + len)]);
                }
            }
        }
        let label = if rng.random::<f64>() < spec.noise {
            flipped.push(id.clone());
            let other = rng.random_range(0..n_labels - 1);
            if other >= base {
                other + 1
            } else {
                other
            }
        } else {
            base
        };
        let mut inst = AnnotatedInstance::new(id, tokens, spec.labels[label].clone());
        inst.roles = roles;
        instances.push(inst);
        base_labels.push(base);
    }
    let corpus = Corpus::new(spec.name.clone(), spec.labels.clone(), instances)?;
    Ok(SynthOutput {
        corpus,
        flipped,
        base_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn noiseless_cue_decision_list_is_perfect() {
        let spec = SynthSpec {
            n_instances: 200,
            ..Default::default()
        };
        let out = generate(&spec).unwrap();
        assert!(out.flipped.is_empty());
        for inst in &out.corpus.instances {
            let cue = inst.role_tokens(RoleKind::Cue).next().unwrap();
            let bucket = spec.bucket_of(RoleKind::Cue, cue).unwrap();
            assert_eq!(spec.labels[bucket], inst.label);
        }
    }

    #[test]
    fn template_shape() {
        let out = generate(&SynthSpec::default()).unwrap();
        let inst = &out.corpus.instances[0];
        assert_eq!(inst.tokens[3], "because");
        assert!(inst.tokens[0].starts_with("exp") && inst.tokens[1].starts_with("cue"));
        assert_eq!(inst.spans(RoleKind::Stimulus)[0].start, 4);
        assert_eq!(inst.spans(RoleKind::Stimulus)[0].end, inst.tokens.len());
    }

    #[test]
    fn noise_flips_are_logged_and_reproducible() {
        let spec = SynthSpec {
            n_instances: 1000,
            noise: 0.1,
            seed: 42,
            ..Default::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        // Independent pass: an instance is flipped iff its label differs from
        // the bucket of its cue token.
        let recount: Vec<String> = a
            .corpus
            .instances
            .iter()
            .filter(|i| {
                let cue = i.role_tokens(RoleKind::Cue).next().unwrap();
                spec.labels[spec.bucket_of(RoleKind::Cue, cue).unwrap()] != i.label
            })
            .map(|i| i.id.clone())
            .collect();
        assert_eq!(recount, a.flipped);
        assert!((60..=140).contains(&a.flipped.len()), "{} flips", a.flipped.len());
    }

    #[test]
    fn correlated_role_follows_base_label() {
        let spec = SynthSpec {
            correlated_role: Some(RoleKind::Experiencer),
            correlation: 1.0,
            noise: 0.2,
            ..Default::default()
        };
        let out = generate(&spec).unwrap();
        for (inst, &base) in out.corpus.instances.iter().zip(&out.base_labels) {
            let exp = inst.role_tokens(RoleKind::Experiencer).next().unwrap();
            assert_eq!(spec.bucket_of(RoleKind::Experiencer, exp), Some(base));
        }
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            SynthSpec { noise: 1.0, ..Default::default() },
            SynthSpec { labels: vec!["a".into()], ..Default::default() },
            SynthSpec { template: "{cue} {cue}".into(), ..Default::default() },
            SynthSpec { template: "{stimulus} only".into(), ..Default::default() },
            SynthSpec { vocab_sizes: BTreeMap::from([(RoleKind::Cue, 2)]), ..Default::default() },
            SynthSpec { correlated_role: Some(RoleKind::Cue), ..Default::default() },
        ] {
            assert!(generate(&spec).is_err());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn generated_corpora_validate(seed in any::<u64>(), n in 1usize..80, noise in 0.0f64..0.9) {
            let spec = SynthSpec { seed, n_instances: n, noise, ..Default::default() };
            let out = generate(&spec).unwrap();
            prop_assert!(out.corpus.validate().is_ok());
            prop_assert_eq!(out.corpus.len(), n);
        }
    }
}
