//! Per-aspect sentiment reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::SentimentMention;
use crate::corpus::SentenceRef;
use crate::error::Result;
use crate::lexicon::Lexicons;
use crate::polarity::Polarity;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub sentence_ref: SentenceRef,
    pub sentence_text: String,
    pub aspect_span: Option<(usize, usize)>,
    pub opinion_span: Option<(usize, usize)>,
    pub opinion_term: String,
    pub polarity: Polarity,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectReportRow {
    pub aspect_term: String,
    pub positive_count: usize,
    pub negative_count: usize,
    pub evidence: Vec<Evidence>,
}

impl AspectReportRow {
    pub fn total(&self) -> usize {
        self.positive_count + self.negative_count
    }
}

/// Report document as exported by `classify` and served by `/report`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentReport {
    pub lexicon_revision: u64,
    pub rows: Vec<AspectReportRow>,
}

/// Folds mentions into one row per canonical aspect. Mentions whose aspect
/// term is an alias are counted under the entry's canonical term.
pub fn build_report(mentions: &[SentimentMention], lex: &Lexicons) -> Vec<AspectReportRow> {
    let mut rows: BTreeMap<String, AspectReportRow> = BTreeMap::new();
    for m in mentions {
        let canonical = lex.canonical_aspect(&m.aspect_term).unwrap_or(&m.aspect_term);
        let row = rows.entry(canonical.to_owned()).or_insert_with(|| AspectReportRow {
            aspect_term: canonical.to_owned(),
            positive_count: 0,
            negative_count: 0,
            evidence: Vec::new(),
        });
        match m.polarity {
            Polarity::Positive => row.positive_count += 1,
            Polarity::Negative => row.negative_count += 1,
        }
        row.evidence.push(Evidence {
            sentence_ref: m.sentence_ref.clone(),
            sentence_text: m.sentence_text.clone(),
            aspect_span: m.aspect_char_span,
            opinion_span: m.opinion_char_span,
            opinion_term: m.opinion_term.clone(),
            polarity: m.polarity,
        });
    }
    let mut rows: Vec<_> = rows.into_values().collect();
    rows.sort_by(|a, b| b.total().cmp(&a.total()).then_with(|| a.aspect_term.cmp(&b.aspect_term)));
    rows
}

pub fn report_to_json(report: &SentimentReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// `Aspect,Positive,Negative` summary.
pub fn report_to_csv(rows: &[AspectReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["Aspect", "Positive", "Negative"])?;
    for r in rows {
        w.write_record([
            r.aspect_term.clone(),
            r.positive_count.to_string(),
            r.negative_count.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| crate::error::Error::Contract(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{AspectEntry, Edit};

    fn mention(aspect: &str, polarity: Polarity, index: usize) -> SentimentMention {
        SentimentMention {
            aspect_term: aspect.into(),
            aspect_span: (1, 1),
            opinion_term: "x".into(),
            opinion_span: 2,
            polarity,
            negated: false,
            sentence_ref: SentenceRef {
                doc_id: "d".into(),
                index,
                sent_id: None,
            },
            sentence_text: "s".into(),
            aspect_char_span: Some((0, 1)),
            opinion_char_span: None,
        }
    }

    #[test]
    fn empty_report() {
        assert!(build_report(&[], &Lexicons::default()).is_empty());
    }

    #[test]
    fn alias_mentions_fold_into_canonical_row() {
        let lex = Lexicons::new(vec![AspectEntry::new("drinks", 1)], vec![])
            .unwrap()
            .apply_edit(&Edit::SetAlias {
                term: "drinks".into(),
                slot: 1,
                alias: Some("beverages".into()),
            })
            .unwrap();
        let ms = vec![
            mention("drinks", Polarity::Positive, 0),
            mention("drinks", Polarity::Positive, 1),
            mention("drinks", Polarity::Positive, 2),
            mention("beverages", Polarity::Negative, 3),
        ];
        let rows = build_report(&ms, &lex);
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].aspect_term.as_str(), rows[0].positive_count, rows[0].negative_count), ("drinks", 3, 1));
        assert_eq!(rows[0].evidence.len(), 4);
    }

    #[test]
    fn ties_break_by_term() {
        let ms = vec![
            mention("service", Polarity::Positive, 0),
            mention("decor", Polarity::Negative, 1),
            mention("food", Polarity::Positive, 2),
            mention("food", Polarity::Negative, 3),
        ];
        let rows = build_report(&ms, &Lexicons::default());
        let order: Vec<_> = rows.iter().map(|r| r.aspect_term.as_str()).collect();
        assert_eq!(order, vec!["food", "decor", "service"]);
    }

    #[test]
    fn csv_export() {
        let rows = build_report(&[mention("food", Polarity::Positive, 0)], &Lexicons::default());
        assert_eq!(report_to_csv(&rows).unwrap(), "Aspect,Positive,Negative\nfood,1,0\n");
    }
}
