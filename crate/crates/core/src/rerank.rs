//! Opinion candidate scoring with a single-hidden-layer perceptron.
//!
//! Features are the candidate's embedding followed by the mean, population
//! std, max and min of its cosine similarities to a generic opinion word set.
//! The network is `logistic(w2 · relu(W1 x + b1) + b2)` trained with
//! mini-batch gradient descent on binary cross-entropy.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bootstrap::CandidateTerm;
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};

/// Number of similarity statistics appended to the embedding.
pub const STAT_FEATURES: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RerankFeatures {
    pub embedding: Vec<f64>,
    pub sim_mean: f64,
    pub sim_std: f64,
    pub sim_max: f64,
    pub sim_min: f64,
}

impl RerankFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.embedding.clone();
        v.extend([self.sim_mean, self.sim_std, self.sim_max, self.sim_min]);
        v
    }
}

pub fn featurize(candidate: &str, store: &EmbeddingStore, generic_opinions: &[String]) -> Option<RerankFeatures> {
    let embedding = store.term_vector(candidate)?;
    let stats = store.similarity_stats(candidate, generic_opinions).ok().flatten()?;
    Some(RerankFeatures {
        embedding,
        sim_mean: stats.mean,
        sim_std: stats.std,
        sim_max: stats.max,
        sim_min: stats.min,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredOpinion {
    pub term: String,
    pub score: f64,
    pub features: RerankFeatures,
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `logistic(z)` against `y`, computed from the logit.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    hidden_size: usize,
    /// Row-major `hidden_size x input_dim`.
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

impl MlpModel {
    pub fn zeros(input_dim: usize, hidden_size: usize) -> Self {
        MlpModel {
            input_dim,
            hidden_size,
            w1: vec![0.0; input_dim * hidden_size],
            b1: vec![0.0; hidden_size],
            w2: vec![0.0; hidden_size],
            b2: 0.0,
        }
    }

    /// Xavier-uniform weights, zero biases.
    pub fn seeded(input_dim: usize, hidden_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros(input_dim, hidden_size);
        let a1 = (6.0 / (input_dim + hidden_size) as f64).sqrt();
        m.w1.iter_mut().for_each(|w| *w = rng.gen_range(-a1..a1));
        let a2 = (6.0 / (hidden_size + 1) as f64).sqrt();
        m.w2.iter_mut().for_each(|w| *w = rng.gen_range(-a2..a2));
        m
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// All parameters flattened as `W1, b1, w2, b2`.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend(&self.w1);
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Contract(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let (w1, rest) = params.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.hidden_size);
        let (w2, rest) = rest.split_at(self.hidden_size);
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2 = rest[0];
        Ok(())
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden_size)
            .map(|j| {
                let row = &self.w1[j * self.input_dim..(j + 1) * self.input_dim];
                let a = self.b1[j] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
                a.max(0.0)
            })
            .collect()
    }

    fn logit(&self, x: &[f64]) -> f64 {
        let h = self.hidden(x);
        self.b2 + self.w2.iter().zip(&h).map(|(w, h)| w * h).sum::<f64>()
    }

    /// Forward pass on a raw feature vector. The result is kept strictly
    /// inside (0, 1).
    pub fn predict_vec(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::Contract(format!(
                "feature length {} does not match model input {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(logistic(self.logit(x)).clamp(f64::EPSILON, 1.0 - f64::EPSILON))
    }

    pub fn predict(&self, features: &RerankFeatures) -> Result<f64> {
        self.predict_vec(&features.to_vec())
    }

    /// Mean binary cross-entropy over a batch and its gradient with respect
    /// to [`MlpModel::parameters`].
    pub fn loss_and_gradient(&self, xs: &[&[f64]], ys: &[f64]) -> (f64, Vec<f64>) {
        let n = xs.len() as f64;
        let (d, h) = (self.input_dim, self.hidden_size);
        let mut grad = vec![0.0; self.param_count()];
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let pre: Vec<f64> = (0..h)
                .map(|j| self.b1[j] + self.w1[j * d..(j + 1) * d].iter().zip(*x).map(|(w, x)| w * x).sum::<f64>())
                .collect();
            let act: Vec<f64> = pre.iter().map(|a| a.max(0.0)).collect();
            let z = self.b2 + self.w2.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>();
            loss += bce_with_logit(z, y);
            let dz = (logistic(z) - y) / n;
            let (g_w1, rest) = grad.split_at_mut(d * h);
            let (g_b1, rest) = rest.split_at_mut(h);
            let (g_w2, g_b2) = rest.split_at_mut(h);
            g_b2[0] += dz;
            for j in 0..h {
                g_w2[j] += dz * act[j];
                if pre[j] > 0.0 {
                    let da = dz * self.w2[j];
                    g_b1[j] += da;
                    for (g, xi) in g_w1[j * d..(j + 1) * d].iter_mut().zip(*x) {
                        *g += da * xi;
                    }
                }
            }
        }
        (loss / n, grad)
    }

    pub fn loss(&self, xs: &[&[f64]], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        xs.iter().zip(ys).map(|(x, &y)| bce_with_logit(self.logit(x), y)).sum::<f64>() / n
    }

    pub fn accuracy(&self, xs: &[&[f64]], ys: &[f64]) -> f64 {
        let correct = xs
            .iter()
            .zip(ys)
            .filter(|(x, &y)| (logistic(self.logit(x)) > 0.5) == (y > 0.5))
            .count();
        correct as f64 / xs.len() as f64
    }

    fn validate(&self) -> Result<()> {
        let shapes_ok = self.input_dim > 0
            && self.hidden_size > 0
            && self.w1.len() == self.input_dim * self.hidden_size
            && self.b1.len() == self.hidden_size
            && self.w2.len() == self.hidden_size;
        if !shapes_ok {
            return Err(Error::Contract("inconsistent model shapes".into()));
        }
        if !self.parameters().iter().all(|p| p.is_finite()) {
            return Err(Error::Contract("model has non-finite parameters".into()));
        }
        Ok(())
    }

    /// Text form: a `dim hidden_size` header, where `dim` is the embedding
    /// dimension, then the `W1` rows, `b1`, `w2` and `b2`, one line each.
    pub fn to_text(&self) -> Result<String> {
        if self.input_dim <= STAT_FEATURES {
            return Err(Error::Contract("only rerank models (embedding + 4 statistics) can be saved".into()));
        }
        let join = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.input_dim - STAT_FEATURES, self.hidden_size);
        for row in self.w1.chunks(self.input_dim) {
            let _ = writeln!(out, "{}", join(row));
        }
        let _ = writeln!(out, "{}", join(&self.b1));
        let _ = writeln!(out, "{}", join(&self.w2));
        let _ = writeln!(out, "{}", self.b2);
        Ok(out)
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next_row = |what: &str| -> Result<(usize, Vec<f64>)> {
            let (i, line) = lines
                .next()
                .ok_or_else(|| Error::parse(source, 0, format!("missing {what}")))?;
            let row = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(source, i + 1, format!("{what}: {e}")))?;
            Ok((i + 1, row))
        };
        let (hl, header) = next_row("header")?;
        if header.len() != 2 || header.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
            return Err(Error::parse(source, hl, "header must be `dim hidden_size`"));
        }
        let (dim, hidden) = (header[0] as usize, header[1] as usize);
        let mut m = MlpModel::zeros(dim + STAT_FEATURES, hidden);
        let mut expect = |what: &str, len: usize| -> Result<Vec<f64>> {
            let (line, row) = next_row(what)?;
            if row.len() != len {
                return Err(Error::parse(source, line, format!("{what}: expected {len} values, found {}", row.len())));
            }
            Ok(row)
        };
        let mut w1 = Vec::with_capacity(m.w1.len());
        for _ in 0..hidden {
            w1.extend(expect("W1 row", m.input_dim)?);
        }
        m.w1 = w1;
        m.b1 = expect("b1", hidden)?;
        m.w2 = expect("w2", hidden)?;
        m.b2 = expect("b2", 1)?[0];
        m.validate().map_err(|e| Error::parse(source, 0, e.to_string()))?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_size: 100,
            epochs: 200,
            learning_rate: 0.01,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_accuracy: f64,
}

/// Trains on raw feature vectors with labels in {0, 1}.
pub fn fit(xs: &[Vec<f64>], labels: &[u8], cfg: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    if xs.is_empty() || xs.len() != labels.len() {
        return Err(Error::Contract("training needs one label per sample".into()));
    }
    if !(labels.contains(&0) && labels.contains(&1)) || labels.iter().any(|&l| l > 1) {
        return Err(Error::Contract("training data must contain both classes (labels 0 and 1)".into()));
    }
    if cfg.hidden_size == 0 || cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Contract("hyperparameters must be positive".into()));
    }
    let dim = xs[0].len();
    if dim == 0 || xs.iter().any(|x| x.len() != dim) {
        return Err(Error::Contract("feature vectors must share a non-zero length".into()));
    }
    let ys: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let all: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();

    let mut model = MlpModel::seeded(dim, cfg.hidden_size, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let initial_loss = model.loss(&all, &ys);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut params = model.parameters();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let bx: Vec<&[f64]> = batch.iter().map(|&i| all[i]).collect();
            let by: Vec<f64> = batch.iter().map(|&i| ys[i]).collect();
            let (_, grad) = model.loss_and_gradient(&bx, &by);
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
            model.set_parameters(&params)?;
        }
    }
    model.validate()?;
    let report = TrainReport {
        initial_loss,
        final_loss: model.loss(&all, &ys),
        final_accuracy: model.accuracy(&all, &ys),
    };
    Ok((model, report))
}

pub fn train(dataset: &[(RerankFeatures, u8)], cfg: &TrainConfig) -> Result<MlpModel> {
    let xs: Vec<Vec<f64>> = dataset.iter().map(|(f, _)| f.to_vec()).collect();
    let ys: Vec<u8> = dataset.iter().map(|(_, l)| *l).collect();
    let (model, report) = fit(&xs, &ys, cfg)?;
    log::info!(
        "rerank training: loss {:.4} -> {:.4}, accuracy {:.3}",
        report.initial_loss,
        report.final_loss,
        report.final_accuracy
    );
    Ok(model)
}

/// Parses a `term,label` CSV (label 0 or 1, optional header).
pub fn parse_training_csv(input: &str, source: &str) -> Result<Vec<(String, u8)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::parse(source, line, "expected `term,label`"));
        }
        let label = match &record[1] {
            "0" => 0,
            "1" => 1,
            _ if i == 0 => continue,
            other => return Err(Error::parse(source, line, format!("label must be 0 or 1, got {other:?}"))),
        };
        rows.push((record[0].to_lowercase(), label));
    }
    Ok(rows)
}

pub fn load_training_csv(path: impl AsRef<Path>) -> Result<Vec<(String, u8)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_training_csv(&text, &path.display().to_string())
}

/// Resolves labelled terms to features, skipping out-of-vocabulary terms.
pub fn featurize_training(
    rows: &[(String, u8)],
    store: &EmbeddingStore,
    generic_opinions: &[String],
) -> Vec<(RerankFeatures, u8)> {
    rows.iter()
        .filter_map(|(term, label)| match featurize(term, store, generic_opinions) {
            Some(f) => Some((f, *label)),
            None => {
                log::warn!("training term {term:?} is out of vocabulary; skipped");
                None
            }
        })
        .collect()
}

/// Scores candidates and keeps those strictly above `threshold`, best first
/// (ties by term).
pub fn filter_opinions(
    candidates: &[CandidateTerm],
    model: &MlpModel,
    store: &EmbeddingStore,
    generic_opinions: &[String],
    threshold: f64,
) -> Result<Vec<ScoredOpinion>> {
    let mut out = Vec::new();
    for c in candidates {
        let Some(features) = featurize(&c.term, store, generic_opinions) else {
            continue;
        };
        let score = model.predict(&features)?;
        if score > threshold {
            out.push(ScoredOpinion {
                term: c.term.clone(),
                score,
                features,
            });
        }
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.term.cmp(&b.term)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::read_glove;

    fn refs(xs: &[Vec<f64>]) -> Vec<&[f64]> {
        xs.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = MlpModel::zeros(6, 3);
        assert_eq!(m.predict_vec(&[1.0; 6]).unwrap(), 0.5);
    }

    #[test]
    fn large_output_bias_saturates() {
        let mut m = MlpModel::zeros(6, 3);
        let mut p = m.parameters();
        *p.last_mut().unwrap() = 30.0;
        m.set_parameters(&p).unwrap();
        let s = m.predict_vec(&[0.3; 6]).unwrap();
        assert!(s > 0.999 && s < 1.0);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let m = MlpModel::zeros(6, 3);
        assert!(m.predict_vec(&[1.0; 5]).is_err());
    }

    #[test]
    fn single_class_rejected() {
        let xs = vec![vec![1.0], vec![2.0]];
        assert!(fit(&xs, &[1, 1], &TrainConfig::default()).is_err());
    }

    #[test]
    fn identical_features_opposite_labels_is_irreducible() {
        let xs = vec![vec![0.4, -0.2], vec![0.4, -0.2]];
        let cfg = TrainConfig {
            hidden_size: 4,
            epochs: 300,
            learning_rate: 0.1,
            batch_size: 2,
            seed: 3,
        };
        let (m, report) = fit(&xs, &[1, 0], &cfg).unwrap();
        assert_eq!(m.accuracy(&refs(&xs), &[1.0, 0.0]), 0.5);
        assert!(report.final_loss >= std::f64::consts::LN_2 - 1e-12);
        assert!(report.final_loss <= report.initial_loss + 1e-12);
    }

    #[test]
    fn training_is_reproducible() {
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 12.0, (i % 3) as f64]).collect();
        let ys: Vec<u8> = (0..12).map(|i| (i % 2) as u8).collect();
        let cfg = TrainConfig {
            hidden_size: 5,
            epochs: 20,
            learning_rate: 0.05,
            batch_size: 4,
            seed: 11,
        };
        let (a, _) = fit(&xs, &ys, &cfg).unwrap();
        let (b, _) = fit(&xs, &ys, &cfg).unwrap();
        assert_eq!(a.parameters(), b.parameters());
    }

    #[test]
    fn text_round_trip() {
        let m = MlpModel::seeded(7, 3, 42);
        let back = MlpModel::from_text(&m.to_text().unwrap(), "mem").unwrap();
        assert_eq!(m, back);
        assert!(MlpModel::from_text("3 2\n1 2\n", "mem").is_err());
        assert!(MlpModel::seeded(2, 3, 1).to_text().is_err());
    }

    #[test]
    fn training_csv() {
        let rows = parse_training_csv("term,label\ntasty,1\ntable,0\n", "mem").unwrap();
        assert_eq!(rows, vec![("tasty".into(), 1), ("table".into(), 0)]);
        assert!(matches!(
            parse_training_csv("tasty,1\ntable,2\n", "mem"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn featurize_self_similarity_and_oov() {
        let store = read_glove("good 1 0\nbad 0 1\nnice 0.9 0.1\n".as_bytes(), "mem", None).unwrap();
        let generic = vec!["good".to_string(), "bad".to_string()];
        let f = featurize("good", &store, &generic).unwrap();
        assert!((f.sim_max - 1.0).abs() < 1e-9);
        assert_eq!(f.embedding, vec![1.0, 0.0]);
        assert_eq!((f.sim_mean, f.sim_std, f.sim_min), (0.5, 0.5, 0.0));
        assert!(featurize("oov", &store, &generic).is_none());
    }
}
