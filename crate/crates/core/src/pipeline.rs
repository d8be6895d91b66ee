//! End-to-end workflow shared by the CLI and the HTTP service: lexicon
//! extraction from an unlabeled corpus, and classification of a target
//! corpus with (possibly edited) lexicons.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{
    bundled_seed_lexicon, default_stopwords, load_seed_lexicon, run_bootstrap, BootstrapConfig, SeedLexicon,
};
use crate::classifier::{classify_corpus, mentions_to_jsonl, NegationLexicon, SentimentMention};
use crate::corpus::{load_conllu, ParsedCorpus};
use crate::embedding::{load_glove, EmbeddingStore};
use crate::error::{Error, Result};
use crate::lexicon::{save_lexicons, AspectEntry, Example, Lexicons, OpinionEntry};
use crate::polarity::{polarize_lexicon, read_word_list, PolaritySeedSets};
use crate::rerank::{
    featurize_training, filter_opinions, load_training_csv, parse_training_csv, train, MlpModel, TrainConfig,
};
use crate::report::{build_report, report_to_csv, report_to_json, SentimentReport};
use crate::rules::{default_rule_set, load_rule_file, ExtractionRule};

const DEFAULT_RERANK_TRAINING: &str = include_str!("../data/rerank_training.csv");

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const MENTIONS_JSONL: &str = "mentions.jsonl";

/// Every tunable of the workflow. All fields have defaults; relative paths
/// in a config file are resolved against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub max_iterations: usize,
    pub min_frequency: usize,
    pub example_cap: usize,
    /// Opinion candidates must score strictly above this.
    pub threshold: f64,
    pub hidden_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub expected_dim: Option<usize>,
    pub rules_path: Option<PathBuf>,
    pub seed_lexicon_path: Option<PathBuf>,
    pub stopwords_path: Option<PathBuf>,
    pub negations_path: Option<PathBuf>,
    pub positive_seeds_path: Option<PathBuf>,
    pub negative_seeds_path: Option<PathBuf>,
    pub rerank_model_path: Option<PathBuf>,
    pub rerank_training_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let boot = BootstrapConfig::default();
        PipelineConfig {
            max_iterations: boot.max_iterations,
            min_frequency: boot.min_frequency,
            example_cap: boot.example_cap,
            threshold: 0.5,
            hidden_size: train.hidden_size,
            epochs: train.epochs,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            seed: train.seed,
            expected_dim: None,
            rules_path: None,
            seed_lexicon_path: None,
            stopwords_path: None,
            negations_path: None,
            positive_seeds_path: None,
            negative_seeds_path: None,
            rerank_model_path: None,
            rerank_training_path: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.rules_path,
            &mut self.seed_lexicon_path,
            &mut self.stopwords_path,
            &mut self.negations_path,
            &mut self.positive_seeds_path,
            &mut self.negative_seeds_path,
            &mut self.rerank_model_path,
            &mut self.rerank_training_path,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            hidden_size: self.hidden_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }

    pub fn rules(&self) -> Result<Vec<ExtractionRule>> {
        match &self.rules_path {
            Some(p) => load_rule_file(p),
            None => Ok(default_rule_set()),
        }
    }

    pub fn seed_lexicon(&self) -> Result<SeedLexicon> {
        match &self.seed_lexicon_path {
            Some(p) => load_seed_lexicon(p),
            None => Ok(bundled_seed_lexicon()),
        }
    }

    pub fn stopwords(&self) -> Result<HashSet<String>> {
        match &self.stopwords_path {
            Some(p) => Ok(read_word_list(p)?.into_iter().collect()),
            None => Ok(default_stopwords()),
        }
    }

    pub fn negations(&self) -> Result<NegationLexicon> {
        match &self.negations_path {
            Some(p) => NegationLexicon::load(p),
            None => Ok(NegationLexicon::default()),
        }
    }

    pub fn polarity_seeds(&self) -> Result<PolaritySeedSets> {
        match (&self.positive_seeds_path, &self.negative_seeds_path) {
            (None, None) => Ok(PolaritySeedSets::bundled()),
            (pos, neg) => {
                let bundled = PolaritySeedSets::bundled();
                let pos = match pos {
                    Some(p) => read_word_list(p)?,
                    None => bundled.positive,
                };
                let neg = match neg {
                    Some(p) => read_word_list(p)?,
                    None => bundled.negative,
                };
                PolaritySeedSets::new(pos, neg)
            }
        }
    }

    pub fn bootstrap_config(&self) -> Result<BootstrapConfig> {
        Ok(BootstrapConfig {
            max_iterations: self.max_iterations,
            min_frequency: self.min_frequency,
            example_cap: self.example_cap,
            stopwords: self.stopwords()?,
        })
    }
}

/// Loads the configured rerank model, or trains one from the configured (or
/// bundled) labelled terms.
pub fn rerank_model(cfg: &PipelineConfig, store: &EmbeddingStore, generic: &[String]) -> Result<MlpModel> {
    if let Some(p) = &cfg.rerank_model_path {
        let model = MlpModel::load(p)?;
        if model.input_dim() != store.dim() + crate::rerank::STAT_FEATURES {
            return Err(Error::Contract(format!(
                "rerank model expects {}-d embeddings, store has {}",
                model.input_dim() - crate::rerank::STAT_FEATURES,
                store.dim()
            )));
        }
        return Ok(model);
    }
    let rows = match &cfg.rerank_training_path {
        Some(p) => load_training_csv(p)?,
        None => parse_training_csv(DEFAULT_RERANK_TRAINING, "bundled rerank training data")?,
    };
    let dataset = featurize_training(&rows, store, generic);
    train(&dataset, &cfg.train_config())
}

#[derive(Clone, Debug)]
pub struct ExtractOutcome {
    pub lexicons: Lexicons,
    pub corpus: ParsedCorpus,
    pub iterations: usize,
    pub aspect_candidates: usize,
    pub opinion_candidates: usize,
}

/// Bootstrap, opinion filtering and polarity assignment over an in-memory
/// corpus.
pub fn extract_from(corpus: ParsedCorpus, store: &EmbeddingStore, cfg: &PipelineConfig) -> Result<ExtractOutcome> {
    let seeds = cfg.seed_lexicon()?;
    let rules = cfg.rules()?;
    let boot = run_bootstrap(&corpus, &seeds, &rules, &cfg.bootstrap_config()?)?;
    info!(
        "bootstrap: {} aspect and {} opinion candidates after {} iterations",
        boot.aspects.len(),
        boot.opinions.len(),
        boot.iterations
    );

    let polarity_sets = cfg.polarity_seeds()?;
    let generic = polarity_sets.all();
    let model = rerank_model(cfg, store, &generic)?;
    let scored = filter_opinions(&boot.opinions, &model, store, &generic, cfg.threshold)?;
    let polarized = polarize_lexicon(&scored, &seeds, store, &polarity_sets);
    info!("opinions: {} candidates, {} kept, {} polarized", boot.opinions.len(), scored.len(), polarized.len());

    let aspects = boot
        .aspects
        .iter()
        .map(|c| {
            let mut entry = AspectEntry::new(&c.term, c.frequency);
            entry.examples = c
                .examples
                .iter()
                .filter_map(|ex| {
                    let s = corpus.sentences.iter().find(|s| s.position == ex.sentence_ref.index)?;
                    Some(Example {
                        text: s.text.clone(),
                        span: s.char_span_of(ex.token_span.0, ex.token_span.1)?,
                    })
                })
                .collect();
            entry
        })
        .collect();
    let opinions = polarized
        .iter()
        .map(|p| OpinionEntry::new(&p.term, p.polarity, p.score))
        .collect();
    let mut lexicons = Lexicons::new(aspects, opinions)?;
    lexicons.domain_label = corpus.source_path.clone();
    Ok(ExtractOutcome {
        lexicons,
        iterations: boot.iterations,
        aspect_candidates: boot.aspects.len(),
        opinion_candidates: boot.opinions.len(),
        corpus,
    })
}

pub fn extract(corpus_path: &Path, embeddings_path: &Path, cfg: &PipelineConfig) -> Result<ExtractOutcome> {
    let corpus = load_conllu(corpus_path)?;
    let store = load_glove(embeddings_path, cfg.expected_dim)?;
    extract_from(corpus, &store, cfg)
}

/// Runs extraction and writes `aspects.csv` and `opinions.csv` to `out_dir`.
pub fn run_extract(corpus_path: &Path, embeddings_path: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<ExtractOutcome> {
    let outcome = extract(corpus_path, embeddings_path, cfg)?;
    save_lexicons(&outcome.lexicons, out_dir)?;
    Ok(outcome)
}

#[derive(Clone, Debug)]
pub struct ClassifyOutcome {
    pub mentions: Vec<SentimentMention>,
    pub report: SentimentReport,
}

pub fn classify_with(corpus: &ParsedCorpus, lexicons: &Lexicons, negations: &NegationLexicon) -> ClassifyOutcome {
    let mentions = classify_corpus(corpus, lexicons, negations);
    let rows = build_report(&mentions, lexicons);
    ClassifyOutcome {
        report: SentimentReport {
            lexicon_revision: lexicons.revision,
            rows,
        },
        mentions,
    }
}

/// Classifies `target_path` and writes `report.json`, `report.csv` and
/// `mentions.jsonl` to `out_dir`.
pub fn run_classify(target_path: &Path, lexicons: &Lexicons, out_dir: &Path, cfg: &PipelineConfig) -> Result<ClassifyOutcome> {
    let corpus = load_conllu(target_path)?;
    let outcome = classify_with(&corpus, lexicons, &cfg.negations()?);
    write_classify_outputs(&outcome, out_dir)?;
    Ok(outcome)
}

pub fn write_classify_outputs(outcome: &ClassifyOutcome, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, body: String| {
        let p = out_dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write(REPORT_JSON, report_to_json(&outcome.report)?)?;
    write(REPORT_CSV, report_to_csv(&outcome.report.rows)?)?;
    write(MENTIONS_JSONL, mentions_to_jsonl(&outcome.mentions)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, r#"{"threshold": 0.7, "rules_path": "rules.txt"}"#).unwrap();
        let cfg = PipelineConfig::load(&p).unwrap();
        assert_eq!(cfg.threshold, 0.7);
        assert_eq!(cfg.max_iterations, 10);
        assert_eq!(cfg.rules_path, Some(dir.path().join("rules.txt")));
        std::fs::write(&p, r#"{"thresold": 0.7}"#).unwrap();
        assert!(PipelineConfig::load(&p).is_err());
    }

    #[test]
    fn bundled_training_data_has_both_classes() {
        let rows = parse_training_csv(DEFAULT_RERANK_TRAINING, "bundled").unwrap();
        assert!(rows.iter().any(|r| r.1 == 1) && rows.iter().any(|r| r.1 == 0));
        let generic: HashSet<String> = PolaritySeedSets::bundled().all().into_iter().collect();
        assert!(rows.iter().all(|(t, _)| !generic.contains(t)), "training terms overlap the generic set");
    }
}
