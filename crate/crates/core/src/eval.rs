//! Scoring against SemEval-style gold aspect annotations.
//!
//! Spans are character offsets `[from, to)`. In `Exact` mode a prediction is
//! correct only when it equals a gold span. In `Lenient` mode exact matches
//! are paired first, then any remaining prediction that overlaps a remaining
//! gold span by at least one character is credited. Pairing is greedy in
//! left-to-right order and each gold span is used at most once.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use quick_xml::events::{BytesStart, Event};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{locate_aspects, SentimentMention};
use crate::corpus::ParsedCorpus;
use crate::error::{Error, Result};
use crate::lexicon::Lexicons;
use crate::polarity::Polarity;

pub type Span = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldPolarity {
    Positive,
    Negative,
    Conflict,
    Neutral,
}

impl GoldPolarity {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Some(GoldPolarity::Positive),
            "negative" => Some(GoldPolarity::Negative),
            "conflict" => Some(GoldPolarity::Conflict),
            "neutral" => Some(GoldPolarity::Neutral),
            _ => None,
        }
    }

    /// The binary polarity, when there is one.
    pub fn binary(self) -> Option<Polarity> {
        match self {
            GoldPolarity::Positive => Some(Polarity::Positive),
            GoldPolarity::Negative => Some(Polarity::Negative),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSpan {
    pub term: String,
    pub from: usize,
    pub to: usize,
    pub polarity: GoldPolarity,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub sentence_id: String,
    pub text: String,
    pub aspect_spans: Vec<GoldSpan>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchMode {
    Exact,
    Lenient,
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::Exact => "exact",
            MatchMode::Lenient => "lenient",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub mode: MatchMode,
}

impl EvalResult {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, mode: MatchMode) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvalResult {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            mode,
        }
    }
}

fn overlaps(a: Span, b: Span) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Greedy pairing of tagged predictions with tagged gold spans; tags must be
/// equal for a pair. Returns the number of pairs.
fn pair_spans<T: PartialEq + Copy>(preds: &[(Span, T)], golds: &[(Span, T)], mode: MatchMode) -> usize {
    let mut preds: Vec<_> = preds.to_vec();
    preds.sort_by_key(|p| p.0);
    let mut golds: Vec<_> = golds.to_vec();
    golds.sort_by_key(|g| g.0);
    let mut gold_used = vec![false; golds.len()];
    let mut pred_used = vec![false; preds.len()];
    let mut tp = 0;
    let mut pass = |accept: &dyn Fn(Span, Span) -> bool| {
        for (pi, (ps, pt)) in preds.iter().enumerate() {
            if pred_used[pi] {
                continue;
            }
            let hit = golds
                .iter()
                .enumerate()
                .find(|(gi, (gs, gt))| !gold_used[*gi] && gt == pt && accept(*ps, *gs));
            if let Some((gi, _)) = hit {
                gold_used[gi] = true;
                pred_used[pi] = true;
                tp += 1;
            }
        }
    };
    pass(&|p, g| p == g);
    if mode == MatchMode::Lenient {
        pass(&|p, g| overlaps(p, g));
    }
    tp
}

fn gold_index(gold: &[GoldAnnotation]) -> HashMap<&str, &GoldAnnotation> {
    gold.iter().map(|g| (g.sentence_id.as_str(), g)).collect()
}

/// Scores predicted aspect spans (keyed by sentence id) against gold.
pub fn eval_extraction(
    predicted: &BTreeMap<String, Vec<Span>>,
    gold: &[GoldAnnotation],
    mode: MatchMode,
) -> Result<EvalResult> {
    let index = gold_index(gold);
    if let Some(unknown) = predicted.keys().find(|k| !index.contains_key(k.as_str())) {
        return Err(Error::Contract(format!("prediction for unknown sentence id {unknown:?}")));
    }
    let (mut tp, mut n_pred, mut n_gold) = (0, 0, 0);
    for g in gold {
        let golds: Vec<(Span, ())> = g.aspect_spans.iter().map(|s| ((s.from, s.to), ())).collect();
        let preds: Vec<(Span, ())> = predicted
            .get(&g.sentence_id)
            .map(|v| v.iter().map(|&s| (s, ())).collect())
            .unwrap_or_default();
        tp += pair_spans(&preds, &golds, mode);
        n_pred += preds.len();
        n_gold += golds.len();
    }
    Ok(EvalResult::from_counts(tp, n_pred - tp, n_gold - tp, mode))
}

/// Scores mention polarities. Gold spans labelled conflict or neutral are
/// left out; a mention is correct when its aspect span matches a gold span
/// under `mode` and the polarities agree.
pub fn eval_polarity(mentions: &[SentimentMention], gold: &[GoldAnnotation], mode: MatchMode) -> Result<EvalResult> {
    let index = gold_index(gold);
    let mut preds: BTreeMap<String, Vec<(Span, Polarity)>> = BTreeMap::new();
    for m in mentions {
        let id = m
            .sentence_ref
            .sent_id
            .as_deref()
            .filter(|id| index.contains_key(id))
            .ok_or_else(|| {
                Error::Contract(format!(
                    "mention in sentence {:?} has no matching gold sentence id",
                    m.sentence_ref.sent_id.as_deref().unwrap_or(&m.sentence_ref.doc_id)
                ))
            })?;
        preds
            .entry(id.to_owned())
            .or_default()
            .push((m.aspect_char_span.unwrap_or((0, 0)), m.polarity));
    }
    eval_polarity_spans(&preds, gold, mode)
}

/// Polarity scoring over predicted `(span, polarity)` pairs keyed by
/// sentence id. Identical pairs within a sentence count once.
pub fn eval_polarity_spans(
    predicted: &BTreeMap<String, Vec<(Span, Polarity)>>,
    gold: &[GoldAnnotation],
    mode: MatchMode,
) -> Result<EvalResult> {
    let index = gold_index(gold);
    if let Some(unknown) = predicted.keys().find(|k| !index.contains_key(k.as_str())) {
        return Err(Error::Contract(format!("prediction for unknown sentence id {unknown:?}")));
    }
    let (mut tp, mut n_pred, mut n_gold) = (0, 0, 0);
    for g in gold {
        let golds: Vec<(Span, Polarity)> = g
            .aspect_spans
            .iter()
            .filter_map(|s| Some(((s.from, s.to), s.polarity.binary()?)))
            .collect();
        let mut p: Vec<(Span, Polarity)> = Vec::new();
        for item in predicted.get(&g.sentence_id).into_iter().flatten() {
            if !p.contains(item) {
                p.push(*item);
            }
        }
        tp += pair_spans(&p, &golds, mode);
        n_pred += p.len();
        n_gold += golds.len();
    }
    Ok(EvalResult::from_counts(tp, n_pred - tp, n_gold - tp, mode))
}

/// Character spans of enabled aspect occurrences, keyed by `sent_id`.
pub fn predict_aspect_spans(corpus: &ParsedCorpus, lex: &Lexicons) -> Result<BTreeMap<String, Vec<Span>>> {
    let mut out = BTreeMap::new();
    for s in &corpus.sentences {
        let id = s
            .sent_id
            .clone()
            .ok_or_else(|| Error::Contract(format!("sentence {} has no sent_id", s.label())))?;
        let spans: Vec<Span> = locate_aspects(s, lex)
            .iter()
            .filter_map(|o| s.char_span_of(o.span.0, o.span.1))
            .collect();
        out.insert(id, spans);
    }
    Ok(out)
}

/// Shuffles sentences with `seed` and splits off `round(fraction * n)` for
/// training. Both halves keep corpus order.
pub fn split_train_test(corpus: &ParsedCorpus, fraction: f64, seed: u64) -> Result<(ParsedCorpus, ParsedCorpus)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Contract(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fraction * n as f64).round() as usize).min(n);
    let (train, test) = order.split_at(n_train);
    let take = |idx: &[usize], tag: &str| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        ParsedCorpus {
            sentences: idx.iter().map(|&i| corpus.sentences[i].clone()).collect(),
            source_path: format!("{}#{tag}", corpus.source_path),
        }
    };
    Ok((take(train, "train"), take(test, "test")))
}

fn attr(e: &BytesStart, name: &str) -> Result<Option<String>> {
    for a in e.attributes() {
        let a = a.map_err(|err| Error::Xml(err.to_string()))?;
        if a.key.as_ref() == name.as_bytes() {
            return Ok(Some(a.unescape_value().map_err(|err| Error::Xml(err.to_string()))?.into_owned()));
        }
    }
    Ok(None)
}

/// Reads SemEval ABSA XML: `sentence` elements with an `id`, a `text` child
/// and either `aspectTerm` (term, polarity, from, to) or `Opinion` (target,
/// polarity, from, to) annotations. `NULL` opinion targets are skipped.
pub fn parse_semeval_xml(xml: &str) -> Result<Vec<GoldAnnotation>> {
    let mut reader = quick_xml::Reader::from_str(xml);
    let mut out = Vec::new();
    let mut current: Option<GoldAnnotation> = None;
    let mut in_text = false;
    loop {
        match reader.read_event().map_err(|e| Error::Xml(format!("at byte {}: {e}", reader.buffer_position())))? {
            Event::Start(e) | Event::Empty(e) if e.name().as_ref() == b"sentence" => {
                let id = attr(&e, "id")?.ok_or_else(|| Error::Xml("sentence without id".into()))?;
                current = Some(GoldAnnotation {
                    sentence_id: id,
                    text: String::new(),
                    aspect_spans: Vec::new(),
                });
            }
            Event::Start(e) if e.name().as_ref() == b"text" => in_text = true,
            Event::End(e) if e.name().as_ref() == b"text" => in_text = false,
            Event::Text(t) if in_text => {
                if let Some(c) = current.as_mut() {
                    c.text.push_str(&t.unescape().map_err(|e| Error::Xml(e.to_string()))?);
                }
            }
            Event::CData(t) if in_text => {
                if let Some(c) = current.as_mut() {
                    c.text.push_str(&String::from_utf8_lossy(&t));
                }
            }
            Event::Start(e) | Event::Empty(e)
                if matches!(e.name().as_ref(), b"aspectTerm" | b"Opinion") =>
            {
                let Some(c) = current.as_mut() else { continue };
                let term = attr(&e, "term")?.or(attr(&e, "target")?).unwrap_or_default();
                if term == "NULL" {
                    continue;
                }
                let num = |k: &str| -> Result<usize> {
                    attr(&e, k)?
                        .and_then(|v| v.trim().parse().ok())
                        .ok_or_else(|| Error::Xml(format!("sentence {}: bad `{k}` attribute", c.sentence_id)))
                };
                let (from, to) = (num("from")?, num("to")?);
                let polarity = attr(&e, "polarity")?
                    .as_deref()
                    .and_then(GoldPolarity::parse)
                    .ok_or_else(|| Error::Xml(format!("sentence {}: bad polarity", c.sentence_id)))?;
                if from >= to {
                    return Err(Error::Xml(format!("sentence {}: empty span {from}..{to}", c.sentence_id)));
                }
                c.aspect_spans.push(GoldSpan { term, from, to, polarity });
            }
            Event::End(e) if e.name().as_ref() == b"sentence" => {
                if let Some(c) = current.take() {
                    let len = c.text.chars().count();
                    if let Some(bad) = c.aspect_spans.iter().find(|s| s.to > len) {
                        return Err(Error::Xml(format!(
                            "sentence {}: span {}..{} exceeds text length {len}",
                            c.sentence_id, bad.from, bad.to
                        )));
                    }
                    out.push(c);
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(out)
}

pub fn load_semeval_xml(path: impl AsRef<Path>) -> Result<Vec<GoldAnnotation>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_semeval_xml(&text)
}

fn escape(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

/// Writes annotations back out in the `aspectTerm` dialect.
pub fn to_semeval_xml(annotations: &[GoldAnnotation]) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<sentences>\n");
    for a in annotations {
        out.push_str(&format!("  <sentence id=\"{}\">\n    <text>{}</text>\n", escape(&a.sentence_id), escape(&a.text)));
        if !a.aspect_spans.is_empty() {
            out.push_str("    <aspectTerms>\n");
            for s in &a.aspect_spans {
                let pol = serde_json::to_value(s.polarity).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                out.push_str(&format!(
                    "      <aspectTerm term=\"{}\" polarity=\"{pol}\" from=\"{}\" to=\"{}\"/>\n",
                    escape(&s.term),
                    s.from,
                    s.to
                ));
            }
            out.push_str("    </aspectTerms>\n");
        }
        out.push_str("  </sentence>\n");
    }
    out.push_str("</sentences>\n");
    out
}
