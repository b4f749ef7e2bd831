//! Fixtures shared by the benchmarks.

use roleablate::transform::{transform_corpus, TransformedInstance};
use roleablate::{generate, AbsentPolicy, Corpus, Setting, SpecialTokens, SynthSpec};

/// Deterministic synthetic corpus of `n` instances with 5% label noise.
pub fn corpus(n: usize) -> Corpus {
    let spec = SynthSpec {
        n_instances: n,
        noise: 0.05,
        seed: 1,
        ..Default::default()
    };
    generate(&spec).expect("valid synth spec").corpus
}

pub fn transformed(corpus: &Corpus, setting: Setting) -> Vec<TransformedInstance> {
    transform_corpus(corpus, setting, &SpecialTokens::default(), AbsentPolicy::Keep).0
}
