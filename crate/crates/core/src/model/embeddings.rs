use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::SpecialTokens;

/// Standard deviation of seeded random out-of-vocabulary vectors.
const OOV_STD: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum OovPolicy {
    Zero,
    /// Per-token vectors drawn from N(0, 0.3²), seeded by `seed` and the token.
    Random { seed: u64 },
}

impl Default for OovPolicy {
    fn default() -> Self {
        OovPolicy::Random { seed: 0 }
    }
}

/// Word vectors with a total lookup: unknown tokens resolve through the OOV
/// policy. Special tokens are flagged so models can give them fresh,
/// trainable vectors.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
    oov: OovPolicy,
    specials: HashSet<String>,
    skipped: usize,
}

pub(crate) fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl EmbeddingTable {
    /// A table without pretrained vectors; every token goes through the OOV
    /// policy.
    pub fn empty(dim: usize, oov: OovPolicy) -> Self {
        EmbeddingTable {
            dim,
            vectors: HashMap::new(),
            oov,
            specials: HashSet::new(),
            skipped: 0,
        }
    }

    pub fn from_vectors(
        dim: usize,
        oov: OovPolicy,
        vectors: impl IntoIterator<Item = (String, Vec<f32>)>,
    ) -> Result<Self> {
        let mut table = EmbeddingTable::empty(dim, oov);
        for (word, v) in vectors {
            if v.len() != dim {
                return Err(Error::Embeddings(format!(
                    "vector for `{word}` has {} dimensions, expected {dim}",
                    v.len()
                )));
            }
            table.vectors.insert(word, v);
        }
        Ok(table)
    }

    pub fn with_specials(mut self, specials: &SpecialTokens) -> Self {
        self.specials = specials.as_array().iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn oov(&self) -> OovPolicy {
        self.oov
    }

    /// Lines skipped while loading (wrong arity or unparsable numbers).
    pub fn skipped_lines(&self) -> usize {
        self.skipped
    }

    pub fn is_special(&self, token: &str) -> bool {
        self.specials.contains(token)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }

    pub fn lookup(&self, token: &str) -> Vec<f64> {
        if let Some(v) = self.vectors.get(token) {
            return v.iter().map(|&x| f64::from(x)).collect();
        }
        match self.oov {
            OovPolicy::Zero => vec![0.0; self.dim],
            OovPolicy::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(token));
                let normal = Normal::new(0.0, OOV_STD).expect("valid std");
                (0..self.dim).map(|_| normal.sample(&mut rng)).collect()
            }
        }
    }
}

/// Reads whitespace-separated `word v1 ... vD` lines. When `keep` is given,
/// only those words are retained.
pub fn load_embeddings(
    path: &Path,
    dim: usize,
    oov: OovPolicy,
    keep: Option<&HashSet<String>>,
) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::Embeddings("dimension must be positive".into()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut table = EmbeddingTable::empty(dim, oov);
    let mut valid = 0usize;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values: std::result::Result<Vec<f32>, _> = parts.map(str::parse::<f32>).collect();
        match values {
            Ok(v) if v.len() == dim => {
                valid += 1;
                if keep.is_none_or(|k| k.contains(word)) {
                    table.vectors.insert(word.to_owned(), v);
                }
            }
            _ => table.skipped += 1,
        }
    }
    if valid == 0 {
        return Err(Error::Embeddings(format!(
            "{}: no valid {dim}-dimensional vectors ({} lines skipped)",
            path.display(),
            table.skipped
        )));
    }
    if table.skipped > 0 {
        log::warn!("{}: skipped {} malformed lines", path.display(), table.skipped);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vec.txt");
        std::fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn two_line_file() {
        let (_d, path) = write("the 0.1 0.2 0.3\ncar -1 0 1.5\n");
        let table = load_embeddings(&path, 3, OovPolicy::Zero, None).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.lookup("car"), vec![-1.0, 0.0, 1.5]);
        assert_eq!(table.lookup("unseen"), vec![0.0; 3]);
    }

    #[test]
    fn malformed_lines_skipped_and_counted() {
        let (_d, path) = write("a 1 2\nb 1\nc x y\n");
        let table = load_embeddings(&path, 2, OovPolicy::Zero, None).unwrap();
        assert_eq!((table.len(), table.skipped_lines()), (1, 2));
    }

    #[test]
    fn dimension_mismatch_everywhere_fails() {
        let (_d, path) = write("a 1 2\nb 1 2\n");
        assert!(load_embeddings(&path, 3, OovPolicy::Zero, None).is_err());
    }

    #[test]
    fn seeded_oov_is_deterministic() {
        let a = EmbeddingTable::empty(8, OovPolicy::Random { seed: 5 });
        let b = EmbeddingTable::empty(8, OovPolicy::Random { seed: 5 });
        assert_eq!(a.lookup("zzz"), b.lookup("zzz"));
        assert_ne!(a.lookup("zzz"), a.lookup("zzy"));
        let c = EmbeddingTable::empty(8, OovPolicy::Random { seed: 6 });
        assert_ne!(a.lookup("zzz"), c.lookup("zzz"));
    }

    #[test]
    fn keep_filter() {
        let (_d, path) = write("a 1 2\nb 3 4\n");
        let keep: HashSet<String> = ["b".to_owned()].into();
        let table = load_embeddings(&path, 2, OovPolicy::Zero, Some(&keep)).unwrap();
        assert!(table.contains("b") && !table.contains("a"));
    }
}
