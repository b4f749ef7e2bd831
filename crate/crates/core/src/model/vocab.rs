use std::collections::{BTreeSet, HashMap};

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::embeddings::EmbeddingTable;
use crate::transform::TransformedInstance;

/// Token index for a trained model. Row 0 is reserved for unknown tokens and
/// is never bound to a string.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

pub(crate) const UNK: usize = 0;

impl Vocab {
    /// Sorted vocabulary over the given instance sets.
    pub fn build(sets: &[&[TransformedInstance]]) -> Self {
        let words: BTreeSet<&str> = sets
            .iter()
            .flat_map(|s| s.iter())
            .flat_map(|i| i.tokens.iter().map(String::as_str))
            .collect();
        Vocab::from_tokens(words.into_iter().map(str::to_owned).collect())
    }

    /// `tokens` excludes the unknown row.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i + 1))
            .collect();
        Vocab { tokens, index }
    }

    /// Known tokens, without the unknown row.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Rows including the unknown row.
    pub fn rows(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.index.get(t).copied().unwrap_or(UNK))
            .collect()
    }

    /// Initial embedding matrix: zeros for the unknown row, Kaiming-normal
    /// draws for special tokens, table lookups otherwise.
    pub fn embedding_matrix(&self, table: &EmbeddingTable, rng: &mut impl Rng) -> Array2<f64> {
        let dim = table.dim();
        let kaiming = Normal::new(0.0, (2.0 / dim as f64).sqrt()).expect("positive dimension");
        let mut m = Array2::zeros((self.rows(), dim));
        for (i, token) in self.tokens.iter().enumerate() {
            let row = if table.is_special(token) {
                (0..dim).map(|_| kaiming.sample(rng)).collect()
            } else {
                table.lookup(token)
            };
            m.row_mut(i + 1).assign(&ndarray::Array1::from(row));
        }
        m
    }

    /// Rows whose vectors are learned even when embeddings are frozen.
    pub fn special_rows(&self, table: &EmbeddingTable) -> Vec<usize> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| table.is_special(t))
            .map(|(i, _)| i + 1)
            .collect()
    }
}
