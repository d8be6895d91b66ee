//! Word vectors in GloVe text format and cosine-similarity queries.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

/// Summary of cosine similarities between one word and a reference set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
    pub min: f64,
}

impl EmbeddingStore {
    /// Builds a store from `(word, vector)` pairs. Words are lowercased and
    /// the first occurrence of a duplicate wins.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: AsRef<str>,
    {
        let mut dim = 0;
        let mut vectors = HashMap::new();
        for (i, (word, v)) in pairs.into_iter().enumerate() {
            if dim == 0 {
                dim = v.len();
            }
            if v.is_empty() || v.len() != dim {
                return Err(Error::Contract(format!(
                    "vector {} has length {}, expected {dim}",
                    i + 1,
                    v.len()
                )));
            }
            vectors.entry(word.as_ref().to_lowercase()).or_insert(v);
        }
        if dim == 0 {
            return Err(Error::Contract("embedding store needs at least one vector".into()));
        }
        Ok(EmbeddingStore { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vectors.len()
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Vector of a possibly multiword term: the mean of its in-vocabulary
    /// component words.
    pub fn term_vector(&self, term: &str) -> Option<Vec<f64>> {
        if let Some(v) = self.vector(term) {
            return Some(v.to_vec());
        }
        let mut sum = vec![0.0; self.dim];
        let mut n = 0usize;
        for w in term.split_whitespace() {
            if let Some(v) = self.vector(&w.to_lowercase()) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                n += 1;
            }
        }
        if n == 0 {
            return None;
        }
        sum.iter_mut().for_each(|s| *s /= n as f64);
        Some(sum)
    }

    /// Cosine similarity of two terms; `None` when either is out of
    /// vocabulary or has a zero vector.
    pub fn cosine(&self, w1: &str, w2: &str) -> Option<f64> {
        let a = self.term_vector(w1)?;
        let b = self.term_vector(w2)?;
        cosine_of(&a, &b)
    }

    /// Mean, population std, max and min of the cosines between `candidate`
    /// and every in-vocabulary reference word.
    pub fn similarity_stats(
        &self,
        candidate: &str,
        reference_set: &[String],
    ) -> Result<Option<SimilarityStats>> {
        if reference_set.is_empty() {
            return Err(Error::Contract("similarity_stats needs a non-empty reference set".into()));
        }
        let Some(cv) = self.term_vector(candidate) else {
            return Ok(None);
        };
        let sims: Vec<f64> = reference_set
            .iter()
            .filter_map(|r| cosine_of(&cv, &self.term_vector(r)?))
            .collect();
        Ok(stats_of(&sims))
    }
}

pub(crate) fn cosine_of(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn stats_of(xs: &[f64]) -> Option<SimilarityStats> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    // rounding can push the mean of equal values just outside [min, max]
    let mean = (xs.iter().sum::<f64>() / n).clamp(min, max);
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Some(SimilarityStats {
        mean,
        std: var.sqrt(),
        max,
        min,
    })
}

/// Loads GloVe plain-text vectors: `word v1 ... vd` per line, no header.
pub fn load_glove(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_glove(BufReader::new(file), &path.display().to_string(), expected_dim)
}

pub fn read_glove(
    reader: impl BufRead,
    source: &str,
    expected_dim: Option<usize>,
) -> Result<EmbeddingStore> {
    let mut dim = expected_dim.unwrap_or(0);
    let mut vectors: HashMap<String, Vec<f64>> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let v = parts
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(source, lineno, format!("non-numeric component: {e}")))?;
        if v.is_empty() {
            return Err(Error::parse(source, lineno, "word has no vector components"));
        }
        if dim == 0 {
            dim = v.len();
        }
        if v.len() != dim {
            return Err(Error::parse(
                source,
                lineno,
                format!("row has {} components, expected {dim}", v.len()),
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(source, lineno, "non-finite component"));
        }
        vectors.entry(word.to_lowercase()).or_insert(v);
    }
    if vectors.is_empty() {
        return Err(Error::parse(source, 0, "embedding file is empty"));
    }
    Ok(EmbeddingStore { dim, vectors })
}
