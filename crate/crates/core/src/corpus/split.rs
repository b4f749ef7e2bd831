use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.dev, self.test];
        if all.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidConfig(format!("split ratios must be positive: {all:?}")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("split ratios must sum to 1: {all:?}")));
        }
        Ok(())
    }

    /// `(train, dev, test)` sizes: dev and test are floored, the remainder
    /// goes to train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let dev = (n as f64 * self.dev).floor() as usize;
        let test = (n as f64 * self.test).floor() as usize;
        (n - dev - test, dev, test)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    #[serde(default)]
    pub ratios: SplitRatios,
    #[serde(default)]
    pub seed: u64,
    /// Apply the ratios within each label instead of over the whole corpus.
    #[serde(default)]
    pub stratified: bool,
}

/// Random train/dev/test partition, deterministic in the seed. Each part
/// keeps the corpus order of its instances.
pub fn split(corpus: &Corpus, options: &SplitOptions) -> Result<(Corpus, Corpus, Corpus)> {
    options.ratios.validate()?;
    if corpus.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "cannot split `{}`: {} instances, need at least 3",
            corpus.name,
            corpus.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let groups: Vec<Vec<usize>> = if options.stratified {
        let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, inst) in corpus.instances.iter().enumerate() {
            by_label.entry(inst.label.as_str()).or_default().push(i);
        }
        by_label.into_values().collect()
    } else {
        vec![(0..corpus.len()).collect()]
    };

    let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for mut group in groups {
        group.shuffle(&mut rng);
        let (_, n_dev, n_test) = options.ratios.sizes(group.len());
        test.extend_from_slice(&group[..n_test]);
        dev.extend_from_slice(&group[n_test..n_test + n_dev]);
        train.extend_from_slice(&group[n_test + n_dev..]);
    }
    let take = |mut idx: Vec<usize>| {
        idx.sort_unstable();
        corpus.with_instances(idx.into_iter().map(|i| corpus.instances[i].clone()).collect())
    };
    Ok((take(train), take(dev), take(test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AnnotatedInstance;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn corpus(n: usize) -> Corpus {
        let instances = (0..n)
            .map(|i| AnnotatedInstance::new(format!("i{i}"), vec!["t".into()], ["a", "b", "c"][i % 3]))
            .collect();
        Corpus::from_instances("c", instances).unwrap()
    }

    fn opts(seed: u64) -> SplitOptions {
        SplitOptions {
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn hundred_instances() {
        let (tr, dv, te) = split(&corpus(100), &opts(7)).unwrap();
        assert_eq!((tr.len(), dv.len(), te.len()), (80, 10, 10));
    }

    #[test]
    fn es_sized_corpus() {
        // Integer counting instead of float flooring: k with 10k <= n.
        let n = 2414usize;
        let tenth = (1..=n).filter(|k| k * 10 <= n).count();
        assert_eq!(tenth, 241);
        assert_eq!(SplitRatios::default().sizes(n), (n - 2 * tenth, tenth, tenth));
        let (tr, dv, te) = split(&corpus(n), &opts(1)).unwrap();
        assert_eq!((tr.len(), dv.len(), te.len()), (1932, 241, 241));
    }

    #[test]
    fn deterministic() {
        let c = corpus(57);
        assert_eq!(split(&c, &opts(3)).unwrap(), split(&c, &opts(3)).unwrap());
        assert_ne!(split(&c, &opts(3)).unwrap().1, split(&c, &opts(4)).unwrap().1);
    }

    #[test]
    fn rejects_tiny_and_bad_ratios() {
        assert!(split(&corpus(2), &opts(0)).is_err());
        let bad = SplitOptions {
            ratios: SplitRatios {
                train: 0.8,
                dev: 0.1,
                test: 0.2,
            },
            ..Default::default()
        };
        assert!(split(&corpus(10), &bad).is_err());
    }

    #[test]
    fn stratified_keeps_label_proportions() {
        let options = SplitOptions {
            stratified: true,
            ..opts(9)
        };
        let (_, dev, test) = split(&corpus(300), &options).unwrap();
        for part in [dev, test] {
            for label in ["a", "b", "c"] {
                assert_eq!(part.instances.iter().filter(|i| i.label == label).count(), 10);
            }
        }
    }

    proptest! {
        #[test]
        fn partition_property(n in 3usize..300, seed in any::<u64>(), stratified in any::<bool>()) {
            let c = corpus(n);
            let options = SplitOptions { seed, stratified, ..Default::default() };
            let (tr, dv, te) = split(&c, &options).unwrap();
            let mut seen = HashSet::new();
            for inst in tr.instances.iter().chain(&dv.instances).chain(&te.instances) {
                prop_assert!(seen.insert(inst.id.clone()));
            }
            prop_assert_eq!(seen.len(), n);
        }
    }
}
