//! Opinion polarity: the shared `Polarity` type, generic positive/negative
//! seed sets, and embedding-based polarity estimation.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::bootstrap::SeedLexicon;
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::rerank::ScoredOpinion;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    /// `POS` / `NEG`, the lexicon file encoding.
    pub fn code(self) -> &'static str {
        match self {
            Polarity::Positive => "POS",
            Polarity::Negative => "NEG",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "POS" => Some(Polarity::Positive),
            "NEG" => Some(Polarity::Negative),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        })
    }
}

const DEFAULT_POSITIVE: &str = include_str!("../data/positive_seeds.txt");
const DEFAULT_NEGATIVE: &str = include_str!("../data/negative_seeds.txt");

/// Generic positive and negative opinion words used as polarity anchors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolaritySeedSets {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl PolaritySeedSets {
    pub fn new(positive: Vec<String>, negative: Vec<String>) -> Result<Self> {
        let positive = normalize_words(positive);
        let negative = normalize_words(negative);
        if positive.is_empty() || negative.is_empty() {
            return Err(Error::Contract("polarity seed sets must be non-empty".into()));
        }
        let pos: BTreeSet<_> = positive.iter().collect();
        if let Some(shared) = negative.iter().find(|w| pos.contains(w)) {
            return Err(Error::Contract(format!(
                "polarity seed sets overlap on {shared:?}"
            )));
        }
        Ok(PolaritySeedSets { positive, negative })
    }

    /// The bundled 47 + 47 generic terms.
    pub fn bundled() -> Self {
        Self::new(word_list(DEFAULT_POSITIVE), word_list(DEFAULT_NEGATIVE))
            .expect("bundled seed sets are valid")
    }

    pub fn load(positive: impl AsRef<Path>, negative: impl AsRef<Path>) -> Result<Self> {
        Self::new(read_word_list(positive)?, read_word_list(negative)?)
    }

    /// Both sets, positive first.
    pub fn all(&self) -> Vec<String> {
        self.positive.iter().chain(&self.negative).cloned().collect()
    }

    pub fn swapped(&self) -> Self {
        PolaritySeedSets {
            positive: self.negative.clone(),
            negative: self.positive.clone(),
        }
    }
}

fn normalize_words(words: Vec<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    words
        .into_iter()
        .map(|w| w.trim().to_lowercase())
        .filter(|w| !w.is_empty() && seen.insert(w.clone()))
        .collect()
}

/// One word per line; blank lines and `#` comments skipped.
pub fn word_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn read_word_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(word_list(&text))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarizedOpinion {
    pub term: String,
    pub polarity: Polarity,
    /// Mean cosine to the positive set minus mean cosine to the negative set;
    /// ±1 for terms whose polarity came from the seed lexicon.
    pub score: f64,
    pub rerank_score: f64,
}

fn mean_cosine(store: &EmbeddingStore, term: &[f64], words: &[String]) -> Option<f64> {
    let sims: Vec<f64> = words
        .iter()
        .filter_map(|w| crate::embedding::cosine_of(term, store.vector(w)?))
        .collect();
    if sims.is_empty() {
        None
    } else {
        Some(sims.iter().sum::<f64>() / sims.len() as f64)
    }
}

/// Signed polarity estimate of `term`: mean cosine to the positive seeds
/// minus mean cosine to the negative seeds. A score of exactly zero resolves
/// to `Negative`.
pub fn estimate_polarity(
    term: &str,
    store: &EmbeddingStore,
    seeds: &PolaritySeedSets,
) -> Option<(Polarity, f64)> {
    let v = store.term_vector(term)?;
    let sim_pos = mean_cosine(store, &v, &seeds.positive)?;
    let sim_neg = mean_cosine(store, &v, &seeds.negative)?;
    let score = sim_pos - sim_neg;
    let polarity = if score > 0.0 {
        Polarity::Positive
    } else {
        if score == 0.0 {
            warn!("polarity tie for {term:?}; defaulting to negative");
        }
        Polarity::Negative
    };
    Some((polarity, score))
}

/// Assigns a polarity to each scored opinion. Seed-lexicon terms keep their
/// listed polarity with score ±1; everything else is estimated from the
/// embeddings, and terms that cannot be estimated are dropped.
pub fn polarize_lexicon(
    opinions: &[ScoredOpinion],
    seed_lexicon: &SeedLexicon,
    store: &EmbeddingStore,
    seeds: &PolaritySeedSets,
) -> Vec<PolarizedOpinion> {
    opinions
        .iter()
        .filter_map(|op| {
            let (polarity, score) = match seed_lexicon.get(&op.term) {
                Some(p) => (p, if p == Polarity::Positive { 1.0 } else { -1.0 }),
                None => match estimate_polarity(&op.term, store, seeds) {
                    Some(found) => found,
                    None => {
                        warn!("dropping opinion {:?}: no embedding to estimate polarity", op.term);
                        return None;
                    }
                },
            };
            Some(PolarizedOpinion {
                term: op.term.clone(),
                polarity,
                score,
                rerank_score: op.score,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::read_glove;
    use crate::rerank::RerankFeatures;

    fn sets(pos: &[&str], neg: &[&str]) -> PolaritySeedSets {
        PolaritySeedSets::new(
            pos.iter().map(|s| s.to_string()).collect(),
            neg.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    fn toy() -> EmbeddingStore {
        read_glove(
            "good 1 0\ngreat 1 0\nbad 0 1\nawful 0 1\nmeh 0.7071067811865476 0.7071067811865476\n\
             lovely 1 0.2\n"
                .as_bytes(),
            "mem",
            None,
        )
        .unwrap()
    }

    #[test]
    fn bundled_sets_have_47_terms_each() {
        let s = PolaritySeedSets::bundled();
        assert_eq!(s.positive.len(), 47);
        assert_eq!(s.negative.len(), 47);
    }

    #[test]
    fn overlapping_sets_rejected() {
        assert!(PolaritySeedSets::new(vec!["good".into()], vec!["Good".into()]).is_err());
        assert!(PolaritySeedSets::new(vec![], vec!["bad".into()]).is_err());
    }

    #[test]
    fn cluster_identity_cases() {
        let seeds = sets(&["good", "great"], &["bad", "awful"]);
        assert_eq!(estimate_polarity("good", &toy(), &seeds), Some((Polarity::Positive, 1.0)));
        assert_eq!(estimate_polarity("bad", &toy(), &seeds), Some((Polarity::Negative, -1.0)));
    }

    #[test]
    fn tie_resolves_negative() {
        let seeds = sets(&["good"], &["bad"]);
        let (p, score) = estimate_polarity("meh", &toy(), &seeds).unwrap();
        assert!(score.abs() < 1e-12);
        assert_eq!(p, Polarity::Negative);
    }

    #[test]
    fn oov_term_or_empty_seed_coverage_is_absent() {
        let seeds = sets(&["good"], &["bad"]);
        assert_eq!(estimate_polarity("oov", &toy(), &seeds), None);
        let seeds = sets(&["good"], &["missing"]);
        assert_eq!(estimate_polarity("lovely", &toy(), &seeds), None);
    }

    fn scored(term: &str) -> ScoredOpinion {
        ScoredOpinion {
            term: term.into(),
            score: 0.9,
            features: RerankFeatures {
                embedding: vec![],
                sim_mean: 0.0,
                sim_std: 0.0,
                sim_max: 0.0,
                sim_min: 0.0,
            },
        }
    }

    #[test]
    fn polarize_uses_seed_then_estimate_then_drops() {
        let seeds = sets(&["good"], &["bad"]);
        let lex = SeedLexicon::from_pairs([("awful", Polarity::Positive)]).unwrap();
        let out = polarize_lexicon(
            &[scored("awful"), scored("lovely"), scored("zzz")],
            &lex,
            &toy(),
            &seeds,
        );
        assert_eq!(out.len(), 2);
        assert_eq!((out[0].polarity, out[0].score), (Polarity::Positive, 1.0));
        assert_eq!(out[1].term, "lovely");
        assert_eq!(out[1].polarity, Polarity::Positive);
        assert_eq!(out[1].rerank_score, 0.9);
    }
}
