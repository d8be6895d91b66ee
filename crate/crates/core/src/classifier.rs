//! Sentiment mention detection with curated lexicons.
//!
//! An aspect occurrence and an opinion occurrence form a mention when the
//! opinion token lies within undirected dependency distance 2 of the aspect's
//! head token, whatever the relation labels. A negation word attached
//! directly to the opinion token reverses the opinion's polarity once.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{ParsedCorpus, ParsedSentence, SentenceRef};
use crate::error::Result;
use crate::lexicon::Lexicons;
use crate::polarity::{read_word_list, word_list, Polarity};

const DEFAULT_NEGATIONS: &str = include_str!("../data/negations.txt");

/// Maximum dependency distance between an opinion and an aspect head.
pub const MAX_PAIR_DISTANCE: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegationLexicon {
    terms: HashSet<String>,
}

impl NegationLexicon {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(terms: I) -> Self {
        NegationLexicon {
            terms: terms.into_iter().map(|t| t.as_ref().trim().to_lowercase()).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(read_word_list(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.terms.contains(word)
    }
}

impl Default for NegationLexicon {
    fn default() -> Self {
        Self::new(word_list(DEFAULT_NEGATIONS))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentMention {
    /// Canonical entry term, even when the text matched an alias.
    pub aspect_term: String,
    /// 1-based inclusive token span.
    pub aspect_span: (usize, usize),
    pub opinion_term: String,
    /// 1-based token index.
    pub opinion_span: usize,
    pub polarity: Polarity,
    pub negated: bool,
    pub sentence_ref: SentenceRef,
    pub sentence_text: String,
    pub aspect_char_span: Option<(usize, usize)>,
    pub opinion_char_span: Option<(usize, usize)>,
}

/// A located aspect: token span, head token and canonical term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AspectOccurrence {
    pub span: (usize, usize),
    pub head: usize,
    pub term: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpinionOccurrence {
    pub index: usize,
    pub term: String,
    pub polarity: Polarity,
}

/// Enabled aspect occurrences, longest match first, non-overlapping, in
/// token order.
pub fn locate_aspects(sentence: &ParsedSentence, lex: &Lexicons) -> Vec<AspectOccurrence> {
    let forms: Vec<(Vec<&str>, &str)> = lex
        .aspects
        .iter()
        .filter(|a| a.enabled)
        .flat_map(|a| a.forms().map(move |f| (f.split(' ').collect::<Vec<_>>(), a.term.as_str())))
        .collect();
    let n = sentence.len();
    let mut hits: Vec<(usize, usize, &str)> = Vec::new();
    for start in 1..=n {
        for (words, canonical) in &forms {
            let end = start + words.len() - 1;
            if end > n {
                continue;
            }
            if words
                .iter()
                .enumerate()
                .all(|(k, w)| sentence.token(start + k).matches_word(w))
            {
                hits.push((start, end, canonical));
            }
        }
    }
    hits.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)).then(a.2.cmp(b.2)));
    let mut taken = vec![false; n + 1];
    let mut out = Vec::new();
    for (start, end, term) in hits {
        if (start..=end).any(|i| taken[i]) {
            continue;
        }
        (start..=end).for_each(|i| taken[i] = true);
        out.push(AspectOccurrence {
            span: (start, end),
            head: sentence.span_head(start, end),
            term: term.to_owned(),
        });
    }
    out.sort_by_key(|o| o.span);
    out
}

/// Enabled single-token opinion occurrences in token order.
pub fn locate_opinions(sentence: &ParsedSentence, lex: &Lexicons) -> Vec<OpinionOccurrence> {
    let entries: HashMap<&str, Polarity> = lex
        .opinions
        .iter()
        .filter(|o| o.enabled)
        .map(|o| (o.term.as_str(), o.polarity))
        .collect();
    sentence
        .tokens
        .iter()
        .filter_map(|t| {
            let norm = t.norm();
            let surface = t.surface.to_lowercase();
            let (term, polarity) = entries
                .get_key_value(norm.as_str())
                .or_else(|| entries.get_key_value(surface.as_str()))?;
            Some(OpinionOccurrence {
                index: t.index,
                term: term.to_string(),
                polarity: *polarity,
            })
        })
        .collect()
}

/// Undirected distances from `from`, up to `limit` hops.
fn distances_within(sentence: &ParsedSentence, from: usize, limit: usize) -> HashMap<usize, usize> {
    let mut dist = HashMap::from([(from, 0)]);
    let mut frontier = vec![from];
    for d in 1..=limit {
        let mut next = Vec::new();
        for &node in &frontier {
            for nb in sentence.neighbors(node) {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(nb) {
                    e.insert(d);
                    next.push(nb);
                }
            }
        }
        frontier = next;
    }
    dist
}

/// True when a negation word shares a dependency edge with `index`.
pub fn is_negated(sentence: &ParsedSentence, index: usize, negations: &NegationLexicon) -> bool {
    sentence.neighbors(index).into_iter().any(|nb| {
        let t = sentence.token(nb);
        negations.contains(&t.norm()) || negations.contains(&t.surface.to_lowercase())
    })
}

pub fn find_mentions(sentence: &ParsedSentence, lex: &Lexicons, negations: &NegationLexicon) -> Vec<SentimentMention> {
    let aspects = locate_aspects(sentence, lex);
    if aspects.is_empty() {
        return Vec::new();
    }
    let opinions = locate_opinions(sentence, lex);
    let mut out = Vec::new();
    for op in &opinions {
        let dist = distances_within(sentence, op.index, MAX_PAIR_DISTANCE);
        let negated = is_negated(sentence, op.index, negations);
        let polarity = if negated { op.polarity.flipped() } else { op.polarity };
        for asp in &aspects {
            if (asp.span.0..=asp.span.1).contains(&op.index) || !dist.contains_key(&asp.head) {
                continue;
            }
            out.push(SentimentMention {
                aspect_term: asp.term.clone(),
                aspect_span: asp.span,
                opinion_term: op.term.clone(),
                opinion_span: op.index,
                polarity,
                negated,
                sentence_ref: sentence.reference(),
                sentence_text: sentence.text.clone(),
                aspect_char_span: sentence.char_span_of(asp.span.0, asp.span.1),
                opinion_char_span: sentence.char_span(op.index),
            });
        }
    }
    out.sort_by_key(|m| (m.aspect_span, m.opinion_span));
    out
}

/// Mentions for every sentence, in corpus order.
pub fn classify_corpus(corpus: &ParsedCorpus, lex: &Lexicons, negations: &NegationLexicon) -> Vec<SentimentMention> {
    corpus
        .sentences
        .iter()
        .flat_map(|s| find_mentions(s, lex, negations))
        .collect()
}

/// Writes one JSON object per mention.
pub fn mentions_to_jsonl(mentions: &[SentimentMention]) -> Result<String> {
    let mut out = String::new();
    for m in mentions {
        out.push_str(&serde_json::to_string(m)?);
        out.push('\n');
    }
    Ok(out)
}
