//! Double-propagation bootstrap: grow aspect and opinion term sets from a
//! seed opinion lexicon by repeatedly applying the extraction rules until no
//! new term is acquired.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{ParsedCorpus, SentenceRef};
use crate::error::{Error, Result};
use crate::polarity::{word_list, Polarity};
use crate::rules::{match_rules_with, ExtractionRule, TermKind};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Generic opinion terms with known polarity.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SeedLexicon {
    terms: BTreeMap<String, Polarity>,
}

impl SeedLexicon {
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Polarity)>,
        S: AsRef<str>,
    {
        let terms: BTreeMap<_, _> = pairs
            .into_iter()
            .map(|(t, p)| (t.as_ref().trim().to_lowercase(), p))
            .filter(|(t, _)| !t.is_empty())
            .collect();
        if terms.is_empty() {
            return Err(Error::Contract("seed lexicon is empty".into()));
        }
        Ok(SeedLexicon { terms })
    }

    pub fn get(&self, term: &str) -> Option<Polarity> {
        self.terms.get(term).copied()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, Polarity)> {
        self.terms.iter().map(|(t, p)| (t.as_str(), *p))
    }
}

/// Parses `term,polarity` rows with polarity `POS` or `NEG`. An optional
/// `term,polarity` header is skipped; later duplicates override earlier.
pub fn parse_seed_lexicon(input: &str, source: &str) -> Result<SeedLexicon> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input.as_bytes());
    let mut pairs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if i == 0 && record.get(0).is_some_and(|t| t.eq_ignore_ascii_case("term")) {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::parse(source, line, "expected `term,polarity`"));
        }
        let polarity = Polarity::from_code(&record[1]).ok_or_else(|| {
            Error::parse(source, line, format!("unknown polarity {:?}", &record[1]))
        })?;
        pairs.push((record[0].to_owned(), polarity));
    }
    SeedLexicon::from_pairs(pairs)
}

pub fn load_seed_lexicon(path: impl AsRef<Path>) -> Result<SeedLexicon> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_seed_lexicon(&text, &path.display().to_string())
}

/// The bundled seed lexicon: the generic polarity anchor words.
pub fn bundled_seed_lexicon() -> SeedLexicon {
    let sets = crate::polarity::PolaritySeedSets::bundled();
    SeedLexicon::from_pairs(
        sets.positive
            .iter()
            .map(|t| (t.as_str(), Polarity::Positive))
            .chain(sets.negative.iter().map(|t| (t.as_str(), Polarity::Negative))),
    )
    .expect("bundled seeds are non-empty")
}

pub fn default_stopwords() -> HashSet<String> {
    word_list(DEFAULT_STOPWORDS).into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermExample {
    pub sentence_ref: SentenceRef,
    pub token_span: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateTerm {
    pub term: String,
    pub kind: TermKind,
    /// Number of distinct corpus positions where a rule extracts the term.
    pub frequency: usize,
    pub examples: Vec<TermExample>,
    /// Iteration that first acquired the term; 0 for seed terms.
    pub first_iteration: usize,
}

#[derive(Clone, Debug)]
pub struct BootstrapConfig {
    pub max_iterations: usize,
    pub min_frequency: usize,
    pub example_cap: usize,
    pub stopwords: HashSet<String>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            max_iterations: 10,
            min_frequency: 2,
            example_cap: 20,
            stopwords: default_stopwords(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BootstrapOutput {
    pub aspects: Vec<CandidateTerm>,
    pub opinions: Vec<CandidateTerm>,
    /// Iterations executed, including the final one that acquired nothing.
    pub iterations: usize,
    /// False when the iteration cap stopped the process.
    pub converged: bool,
}

/// Incremental bootstrap state. Each call to [`Bootstrapper::step`] runs one
/// full pass over the corpus with the current known sets and then merges
/// everything new at once.
pub struct Bootstrapper<'a> {
    corpus: &'a ParsedCorpus,
    seeds: &'a SeedLexicon,
    rules: &'a [ExtractionRule],
    config: &'a BootstrapConfig,
    known_opinions: HashSet<String>,
    known_aspects: HashSet<String>,
    acquired: BTreeMap<(TermKind, String), usize>,
    iteration: usize,
}

impl<'a> Bootstrapper<'a> {
    pub fn new(
        corpus: &'a ParsedCorpus,
        seeds: &'a SeedLexicon,
        rules: &'a [ExtractionRule],
        config: &'a BootstrapConfig,
    ) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Contract("bootstrap needs a non-empty corpus".into()));
        }
        if config.max_iterations == 0 {
            return Err(Error::Contract("max_iterations must be at least 1".into()));
        }
        Ok(Bootstrapper {
            corpus,
            seeds,
            rules,
            config,
            known_opinions: seeds.terms().map(|(t, _)| t.to_owned()).collect(),
            known_aspects: HashSet::new(),
            acquired: BTreeMap::new(),
            iteration: 0,
        })
    }

    pub fn known_opinions(&self) -> &HashSet<String> {
        &self.known_opinions
    }

    pub fn known_aspects(&self) -> &HashSet<String> {
        &self.known_aspects
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn blocked(&self, term: &str) -> bool {
        if !term.chars().any(char::is_alphabetic) {
            return true;
        }
        let stop = &self.config.stopwords;
        stop.contains(term) || term.split_whitespace().last().is_some_and(|w| stop.contains(w))
    }

    /// Runs one iteration and returns the number of newly acquired terms.
    pub fn step(&mut self) -> usize {
        self.iteration += 1;
        let mut fresh: Vec<(TermKind, String)> = Vec::new();
        for sentence in &self.corpus.sentences {
            for m in match_rules_with(
                sentence,
                self.rules,
                &self.known_opinions,
                &self.known_aspects,
                true,
            ) {
                if !self.blocked(&m.extracted_term) {
                    fresh.push((m.extracted_kind, m.extracted_term));
                }
            }
        }
        let mut added = 0;
        for (kind, term) in fresh {
            let known = match kind {
                TermKind::Opinion => &mut self.known_opinions,
                TermKind::Aspect => &mut self.known_aspects,
            };
            if known.insert(term.clone()) {
                self.acquired.insert((kind, term), self.iteration);
                added += 1;
            }
        }
        added
    }

    /// Iterates until a pass acquires nothing or the cap is reached.
    pub fn run(&mut self) -> bool {
        while self.iteration < self.config.max_iterations {
            if self.step() == 0 {
                return true;
            }
        }
        false
    }

    /// Counts occurrences of every acquired (and re-extracted seed) term
    /// against the final known sets.
    pub fn candidates(&self) -> (Vec<CandidateTerm>, Vec<CandidateTerm>) {
        let mut found: BTreeMap<(TermKind, String), CandidateTerm> = BTreeMap::new();
        for sentence in &self.corpus.sentences {
            let matches = match_rules_with(
                sentence,
                self.rules,
                &self.known_opinions,
                &self.known_aspects,
                false,
            );
            for m in matches {
                let key = (m.extracted_kind, m.extracted_term.clone());
                let first_iteration = match self.acquired.get(&key) {
                    Some(&it) => it,
                    None if m.extracted_kind == TermKind::Opinion
                        && self.seeds.get(&m.extracted_term).is_some() =>
                    {
                        0
                    }
                    None => continue,
                };
                if self.blocked(&m.extracted_term) {
                    continue;
                }
                let entry = found.entry(key).or_insert_with(|| CandidateTerm {
                    term: m.extracted_term.clone(),
                    kind: m.extracted_kind,
                    frequency: 0,
                    examples: Vec::new(),
                    first_iteration,
                });
                entry.frequency += 1;
                if entry.examples.len() < self.config.example_cap {
                    entry.examples.push(TermExample {
                        sentence_ref: m.sentence_ref,
                        token_span: m.token_span,
                    });
                }
            }
        }
        let mut aspects = Vec::new();
        let mut opinions = Vec::new();
        for ((kind, _), c) in found {
            if c.frequency < self.config.min_frequency {
                continue;
            }
            match kind {
                TermKind::Aspect => aspects.push(c),
                TermKind::Opinion => opinions.push(c),
            }
        }
        let order = |a: &CandidateTerm, b: &CandidateTerm| {
            b.frequency.cmp(&a.frequency).then_with(|| a.term.cmp(&b.term))
        };
        aspects.sort_by(order);
        opinions.sort_by(order);
        (aspects, opinions)
    }
}

pub fn run_bootstrap(
    corpus: &ParsedCorpus,
    seeds: &SeedLexicon,
    rules: &[ExtractionRule],
    config: &BootstrapConfig,
) -> Result<BootstrapOutput> {
    let mut boot = Bootstrapper::new(corpus, seeds, rules, config)?;
    let converged = boot.run();
    let (aspects, opinions) = boot.candidates();
    Ok(BootstrapOutput {
        aspects,
        opinions,
        iterations: boot.iteration(),
        converged,
    })
}
