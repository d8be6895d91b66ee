//! Dependency-relation extraction rules: the single propagation step of the
//! aspect/opinion co-extraction bootstrap.
//!
//! A rule starts from a token whose term is already known (an opinion or an
//! aspect) and proposes a new term on a syntactically related token. Three
//! pattern shapes are supported:
//!
//! * `Direct`: one dependency edge, in either direction, labelled with one
//!   of the rule's relations.
//! * `SharedHead`: the known token and the new token are both dependents of
//!   the same governor, with the known token attached by one label set and
//!   the new token by another.
//! * `Conjunction`: a direct conjunct edge, or two conjuncts attached to the
//!   same first conjunct.
//!
//! Label matching is exact string equality so rule sets can be aligned with
//! whatever inventory the upstream parser produces.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{ParsedSentence, SentenceRef};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Opinion,
    Aspect,
}

impl TermKind {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "opinion" | "o" => Some(TermKind::Opinion),
            "aspect" | "a" => Some(TermKind::Aspect),
            _ => None,
        }
    }
}

pub type LabelSet = BTreeSet<String>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum RulePattern {
    Direct { labels: LabelSet },
    SharedHead { known: LabelSet, extracted: LabelSet },
    Conjunction { labels: LabelSet },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRule {
    pub id: String,
    pub known_kind: TermKind,
    pub extracted_kind: TermKind,
    pub pattern: RulePattern,
    /// UPOS tags the extracted token must carry.
    pub pos_filter: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleMatch {
    pub rule_id: String,
    pub known_term: String,
    pub extracted_term: String,
    pub extracted_kind: TermKind,
    pub sentence_ref: SentenceRef,
    /// 1-based inclusive token span of the extracted term.
    pub token_span: (usize, usize),
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl ExtractionRule {
    pub fn new(
        id: &str,
        known_kind: TermKind,
        extracted_kind: TermKind,
        pattern: RulePattern,
        pos_filter: &[&str],
    ) -> Result<Self> {
        let rule = ExtractionRule {
            id: id.to_owned(),
            known_kind,
            extracted_kind,
            pattern,
            pos_filter: set(pos_filter),
        };
        rule.validate()?;
        Ok(rule)
    }

    fn validate(&self) -> Result<()> {
        let empty = match &self.pattern {
            RulePattern::Direct { labels } | RulePattern::Conjunction { labels } => labels.is_empty(),
            RulePattern::SharedHead { known, extracted } => known.is_empty() || extracted.is_empty(),
        };
        if empty || self.pos_filter.is_empty() || self.id.is_empty() {
            return Err(Error::Contract(format!(
                "rule {:?} needs an id, non-empty label sets and a POS filter",
                self.id
            )));
        }
        Ok(())
    }
}

const ASPECT_POS: &[&str] = &["NOUN", "PROPN"];
const OPINION_POS: &[&str] = &["ADJ"];

/// The eight default propagation rules, using Universal Dependencies labels.
///
/// R1 and R2 are the two canonical examples (`nice decor`,
/// `the food was super tasty`); R3 to R8 cover conjunction expansion and the
/// shared-governor patterns of double propagation.
pub fn default_rule_set() -> Vec<ExtractionRule> {
    use RulePattern::*;
    use TermKind::*;
    let rules = [
        ("R1", Opinion, Aspect, Direct { labels: set(&["amod"]) }, ASPECT_POS),
        ("R2", Aspect, Opinion, Direct { labels: set(&["nsubj"]) }, OPINION_POS),
        ("R3", Aspect, Aspect, Conjunction { labels: set(&["conj"]) }, ASPECT_POS),
        ("R4", Opinion, Opinion, Conjunction { labels: set(&["conj"]) }, OPINION_POS),
        (
            "R5",
            Opinion,
            Aspect,
            SharedHead {
                known: set(&["amod", "dobj", "obj"]),
                extracted: set(&["nsubj"]),
            },
            ASPECT_POS,
        ),
        ("R6", Aspect, Opinion, Direct { labels: set(&["amod"]) }, OPINION_POS),
        (
            "R7",
            Aspect,
            Aspect,
            SharedHead {
                known: set(&["nsubj"]),
                extracted: set(&["dobj", "obj"]),
            },
            ASPECT_POS,
        ),
        (
            "R8",
            Opinion,
            Opinion,
            SharedHead {
                known: set(&["amod"]),
                extracted: set(&["amod"]),
            },
            OPINION_POS,
        ),
    ];
    rules
        .into_iter()
        .map(|(id, k, e, p, pos)| ExtractionRule::new(id, k, e, p, pos).expect("valid default rule"))
        .collect()
}

/// Parses a rule-set override file.
///
/// One rule per line: `id,known_kind,extracted_kind,pattern,labels,pos`.
/// Label and POS alternatives are separated by `|`; a `shared_head`
/// pattern separates its known and extracted label sets with `;`. Blank
/// lines and `#` comments are ignored.
pub fn parse_rule_file(input: &str, source: &str) -> Result<Vec<ExtractionRule>> {
    let mut rules = Vec::new();
    for (i, raw) in input.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: String| Error::parse(source, i + 1, m);
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", cols.len())));
        }
        let kind = |s: &str| TermKind::parse(s).ok_or_else(|| err(format!("unknown term kind {s:?}")));
        let labels = |s: &str| -> BTreeSet<String> {
            s.split('|').map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
        };
        let pattern = match cols[3].to_ascii_lowercase().as_str() {
            "direct" => RulePattern::Direct { labels: labels(cols[4]) },
            "conjunction" => RulePattern::Conjunction { labels: labels(cols[4]) },
            "shared_head" => {
                let (k, e) = cols[4]
                    .split_once(';')
                    .ok_or_else(|| err("shared_head labels need `known;extracted`".into()))?;
                RulePattern::SharedHead {
                    known: labels(k),
                    extracted: labels(e),
                }
            }
            other => return Err(err(format!("unknown pattern type {other:?}"))),
        };
        let rule = ExtractionRule {
            id: cols[0].to_owned(),
            known_kind: kind(cols[1])?,
            extracted_kind: kind(cols[2])?,
            pattern,
            pos_filter: labels(cols[5]),
        };
        rule.validate().map_err(|e| err(e.to_string()))?;
        rules.push(rule);
    }
    if rules.is_empty() {
        return Err(Error::parse(source, 0, "rule file defines no rules"));
    }
    Ok(rules)
}

pub fn load_rule_file(path: impl AsRef<Path>) -> Result<Vec<ExtractionRule>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rule_file(&text, &path.display().to_string())
}

const NP_RELATIONS: &[&str] = &["compound", "flat"];

/// Expands an aspect head over contiguous left-adjacent `compound`/`flat`
/// dependents. Adjectival modifiers are never absorbed.
pub fn expand_noun_phrase(sentence: &ParsedSentence, head_index: usize) -> (usize, usize) {
    let mut start = head_index;
    while start > 1 {
        let t = sentence.token(start - 1);
        if t.head == head_index && NP_RELATIONS.contains(&t.deprel.as_str()) {
            start -= 1;
        } else {
            break;
        }
    }
    (start, head_index)
}

/// Normalized term covering tokens `start..=end`.
pub fn span_term(sentence: &ParsedSentence, span: (usize, usize)) -> String {
    (span.0..=span.1)
        .map(|i| sentence.token(i).norm())
        .collect::<Vec<_>>()
        .join(" ")
}

/// The known term anchored at `index`, if any.
///
/// Opinions are single tokens. An aspect token is known when either its
/// expanded noun phrase or its own normalized form is in the aspect set.
pub fn known_term_at(
    sentence: &ParsedSentence,
    index: usize,
    kind: TermKind,
    known_opinions: &HashSet<String>,
    known_aspects: &HashSet<String>,
) -> Option<String> {
    match kind {
        TermKind::Opinion => {
            let norm = sentence.token(index).norm();
            known_opinions.contains(&norm).then_some(norm)
        }
        TermKind::Aspect => {
            let phrase = span_term(sentence, expand_noun_phrase(sentence, index));
            if known_aspects.contains(&phrase) {
                return Some(phrase);
            }
            let norm = sentence.token(index).norm();
            known_aspects.contains(&norm).then_some(norm)
        }
    }
}

/// Term and span proposed when `index` is the extraction target.
pub fn extracted_term_at(sentence: &ParsedSentence, index: usize, kind: TermKind) -> (String, (usize, usize)) {
    let span = match kind {
        TermKind::Aspect => expand_noun_phrase(sentence, index),
        TermKind::Opinion => (index, index),
    };
    (span_term(sentence, span), span)
}

/// Candidate targets for `rule` starting from the known token `k`.
fn targets(sentence: &ParsedSentence, rule: &ExtractionRule, k: usize) -> Vec<usize> {
    let tk = sentence.token(k);
    let edge_targets = |labels: &LabelSet| -> Vec<usize> {
        let mut out: Vec<usize> = sentence
            .children(k)
            .filter(|&c| labels.contains(&sentence.token(c).deprel))
            .collect();
        if tk.head != 0 && labels.contains(&tk.deprel) {
            out.push(tk.head);
        }
        out
    };
    let siblings = |known: &LabelSet, extracted: &LabelSet| -> Vec<usize> {
        if tk.head == 0 || !known.contains(&tk.deprel) {
            return Vec::new();
        }
        sentence
            .children(tk.head)
            .filter(|&c| c != k && extracted.contains(&sentence.token(c).deprel))
            .collect()
    };
    match &rule.pattern {
        RulePattern::Direct { labels } => edge_targets(labels),
        RulePattern::Conjunction { labels } => {
            let mut out = edge_targets(labels);
            out.extend(siblings(labels, labels));
            out
        }
        RulePattern::SharedHead { known, extracted } => siblings(known, extracted),
    }
}

/// Applies every rule to one sentence.
///
/// Extracted terms already present in the known set of their kind are
/// dropped. Matches are deduplicated per `(extracted_term, token_span)`,
/// keeping the lowest rule id, and returned ordered by span then rule id.
pub fn match_rules(
    sentence: &ParsedSentence,
    rules: &[ExtractionRule],
    known_opinions: &HashSet<String>,
    known_aspects: &HashSet<String>,
) -> Vec<RuleMatch> {
    match_rules_with(sentence, rules, known_opinions, known_aspects, true)
}

pub(crate) fn match_rules_with(
    sentence: &ParsedSentence,
    rules: &[ExtractionRule],
    known_opinions: &HashSet<String>,
    known_aspects: &HashSet<String>,
    exclude_known: bool,
) -> Vec<RuleMatch> {
    let mut best: HashMap<(String, (usize, usize)), (String, usize, String, TermKind)> = HashMap::new();
    for rule in rules {
        let known_of_extracted = match rule.extracted_kind {
            TermKind::Opinion => known_opinions,
            TermKind::Aspect => known_aspects,
        };
        for k in 1..=sentence.len() {
            let Some(known_term) =
                known_term_at(sentence, k, rule.known_kind, known_opinions, known_aspects)
            else {
                continue;
            };
            for e in targets(sentence, rule, k) {
                if e == k || !rule.pos_filter.contains(&sentence.token(e).pos) {
                    continue;
                }
                let (term, span) = extracted_term_at(sentence, e, rule.extracted_kind);
                if exclude_known && known_of_extracted.contains(&term) {
                    continue;
                }
                let candidate = (rule.id.clone(), k, known_term.clone(), rule.extracted_kind);
                best.entry((term, span))
                    .and_modify(|cur| {
                        if (&candidate.0, candidate.1) < (&cur.0, cur.1) {
                            *cur = candidate.clone();
                        }
                    })
                    .or_insert(candidate);
            }
        }
    }
    let sentence_ref = sentence.reference();
    let mut out: Vec<RuleMatch> = best
        .into_iter()
        .map(|((term, span), (rule_id, _, known_term, kind))| RuleMatch {
            rule_id,
            known_term,
            extracted_term: term,
            extracted_kind: kind,
            sentence_ref: sentence_ref.clone(),
            token_span: span,
        })
        .collect();
    out.sort_by(|a, b| {
        (a.token_span, &a.rule_id, &a.extracted_term).cmp(&(b.token_span, &b.rule_id, &b.extracted_term))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_conllu;

    fn sentence(conllu: &str) -> ParsedSentence {
        parse_conllu(conllu, "mem", "doc").unwrap().sentences.remove(0)
    }

    fn known(words: &[&str]) -> HashSet<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    const NICE_DECOR: &str = "1\tnice\tnice\tADJ\t_\t_\t2\tamod\t_\t_\n\
                              2\tdecor\tdecor\tNOUN\t_\t_\t0\troot\t_\t_\n";
    const FOOD_TASTY: &str = "1\tthe\tthe\tDET\t_\t_\t2\tdet\t_\t_\n\
                              2\tfood\tfood\tNOUN\t_\t_\t5\tnsubj\t_\t_\n\
                              3\twas\tbe\tAUX\t_\t_\t5\tcop\t_\t_\n\
                              4\tsuper\tsuper\tADV\t_\t_\t5\tadvmod\t_\t_\n\
                              5\ttasty\ttasty\tADJ\t_\t_\t0\troot\t_\t_\n";

    #[test]
    fn r1_extracts_decor_from_nice() {
        let s = sentence(NICE_DECOR);
        let m = match_rules(&s, &default_rule_set(), &known(&["nice"]), &known(&[]));
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].rule_id, "R1");
        assert_eq!(m[0].extracted_term, "decor");
        assert_eq!(m[0].extracted_kind, TermKind::Aspect);
        assert_eq!(m[0].known_term, "nice");
    }

    #[test]
    fn r2_extracts_tasty_from_food() {
        let s = sentence(FOOD_TASTY);
        let m = match_rules(&s, &default_rule_set(), &known(&[]), &known(&["food"]));
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].rule_id, "R2");
        assert_eq!(m[0].extracted_term, "tasty");
        assert_eq!(m[0].token_span, (5, 5));
    }

    #[test]
    fn conjunction_extracts_desserts() {
        let s = sentence(
            "1\tdrinks\tdrink\tNOUN\t_\t_\t5\tnsubj\t_\t_\n\
             2\tand\tand\tCCONJ\t_\t_\t3\tcc\t_\t_\n\
             3\tdesserts\tdessert\tNOUN\t_\t_\t1\tconj\t_\t_\n\
             4\twere\tbe\tAUX\t_\t_\t5\tcop\t_\t_\n\
             5\tgreat\tgreat\tADJ\t_\t_\t0\troot\t_\t_\n",
        );
        let m = match_rules(&s, &default_rule_set(), &known(&[]), &known(&["drink"]));
        let aspects: Vec<_> = m
            .iter()
            .filter(|m| m.extracted_kind == TermKind::Aspect)
            .map(|m| (m.rule_id.as_str(), m.extracted_term.as_str()))
            .collect();
        assert_eq!(aspects, vec![("R3", "dessert")]);
        // drinks is also the nsubj of great
        assert!(m.iter().any(|m| m.rule_id == "R2" && m.extracted_term == "great"));
    }

    #[test]
    fn no_known_terms_means_no_matches() {
        let s = sentence(FOOD_TASTY);
        assert!(match_rules(&s, &default_rule_set(), &known(&["good"]), &known(&["menu"])).is_empty());
    }

    #[test]
    fn already_known_terms_are_not_extracted() {
        let s = sentence(NICE_DECOR);
        assert!(match_rules(&s, &default_rule_set(), &known(&["nice"]), &known(&["decor"])).is_empty());
    }

    #[test]
    fn noun_phrase_expansion() {
        let s = sentence(
            "1\tbattery\tbattery\tNOUN\t_\t_\t2\tcompound\t_\t_\n\
             2\tlife\tlife\tNOUN\t_\t_\t0\troot\t_\t_\n",
        );
        assert_eq!(expand_noun_phrase(&s, 2), (1, 2));
        assert_eq!(expand_noun_phrase(&s, 1), (1, 1));
        let s = sentence(
            "1\tvery\tvery\tADV\t_\t_\t2\tadvmod\t_\t_\n\
             2\tnice\tnice\tADJ\t_\t_\t3\tamod\t_\t_\n\
             3\tdecor\tdecor\tNOUN\t_\t_\t0\troot\t_\t_\n",
        );
        assert_eq!(expand_noun_phrase(&s, 3), (3, 3));
    }

    #[test]
    fn multiword_aspect_extracted_as_phrase() {
        let s = sentence(
            "1\tgreat\tgreat\tADJ\t_\t_\t3\tamod\t_\t_\n\
             2\tbattery\tbattery\tNOUN\t_\t_\t3\tcompound\t_\t_\n\
             3\tlife\tlife\tNOUN\t_\t_\t0\troot\t_\t_\n",
        );
        let m = match_rules(&s, &default_rule_set(), &known(&["great"]), &known(&[]));
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].extracted_term, "battery life");
        assert_eq!(m[0].token_span, (2, 3));
        // the phrase is recognized as known from its head
        let m = match_rules(&s, &default_rule_set(), &known(&[]), &known(&["battery life"]));
        assert_eq!(m.iter().map(|m| m.extracted_term.as_str()).collect::<Vec<_>>(), vec!["great"]);
    }

    #[test]
    fn rule_file_round_trip_of_defaults() {
        let text = "# default rules\n\
            R1,opinion,aspect,direct,amod,NOUN|PROPN\n\
            R2,aspect,opinion,direct,nsubj,ADJ\n\
            R3,aspect,aspect,conjunction,conj,NOUN|PROPN\n\
            R4,opinion,opinion,conjunction,conj,ADJ\n\
            R5,opinion,aspect,shared_head,amod|dobj|obj;nsubj,NOUN|PROPN\n\
            R6,aspect,opinion,direct,amod,ADJ\n\
            R7,aspect,aspect,shared_head,nsubj;dobj|obj,NOUN|PROPN\n\
            R8,opinion,opinion,shared_head,amod;amod,ADJ\n";
        assert_eq!(parse_rule_file(text, "mem").unwrap(), default_rule_set());
    }

    #[test]
    fn rule_file_errors() {
        assert!(matches!(
            parse_rule_file("R1,opinion,aspect,direct,amod\n", "mem"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse_rule_file("R1,opinion,aspect,sideways,amod,ADJ\n", "mem").is_err());
        assert!(parse_rule_file("R1,opinion,aspect,direct,,ADJ\n", "mem").is_err());
        assert!(parse_rule_file("", "mem").is_err());
    }
}
