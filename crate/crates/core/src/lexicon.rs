//! Aspect and opinion lexicons: persistence, validated edits and example
//! lookup for the curation step.
//!
//! Lexicons live on disk as two CSV files, `aspects.csv`
//! (`Term,Alias1,Alias2,Alias3,Enabled,Frequency`) and `opinions.csv`
//! (`Term,Polarity,Score,Enabled`). Entries are always kept in canonical
//! order: aspects by descending frequency then term, opinions by term.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::ParsedCorpus;
use crate::error::{Error, Result};
use crate::polarity::Polarity;
use crate::rules::TermKind;

pub const ALIAS_SLOTS: usize = 3;
pub const ASPECTS_FILE: &str = "aspects.csv";
pub const OPINIONS_FILE: &str = "opinions.csv";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub text: String,
    /// Character offsets `[start, end)` of the highlighted term.
    pub span: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AspectEntry {
    pub term: String,
    pub aliases: [Option<String>; ALIAS_SLOTS],
    pub enabled: bool,
    pub frequency: usize,
    #[serde(default)]
    pub examples: Vec<Example>,
}

impl AspectEntry {
    pub fn new(term: &str, frequency: usize) -> Self {
        AspectEntry {
            term: normalize_term(term),
            aliases: Default::default(),
            enabled: true,
            frequency,
            examples: Vec::new(),
        }
    }

    /// The canonical term followed by its aliases.
    pub fn forms(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.term.as_str()).chain(self.aliases.iter().flatten().map(String::as_str))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpinionEntry {
    pub term: String,
    pub polarity: Polarity,
    pub score: f64,
    pub enabled: bool,
}

impl OpinionEntry {
    pub fn new(term: &str, polarity: Polarity, score: f64) -> Self {
        OpinionEntry {
            term: normalize_term(term),
            polarity,
            score: round_score(score),
            enabled: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Lexicons {
    pub aspects: Vec<AspectEntry>,
    pub opinions: Vec<OpinionEntry>,
    pub revision: u64,
    #[serde(default)]
    pub domain_label: String,
}

/// One user edit. Serialized with an `op` tag, e.g.
/// `{"op":"set_alias","term":"drinks","slot":1,"alias":"beverages"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Edit {
    /// With `kind` unset, every entry carrying the term is toggled.
    SetEnabled {
        term: String,
        enabled: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kind: Option<TermKind>,
    },
    AddAspect { term: String },
    DeleteAspect { term: String },
    /// `slot` is 1-based; `alias: None` clears the slot.
    SetAlias {
        term: String,
        slot: usize,
        #[serde(default)]
        alias: Option<String>,
    },
    AddOpinion { term: String, polarity: Polarity, score: f64 },
    SetPolarity { term: String, polarity: Polarity },
    SetScore { term: String, score: f64 },
}

pub fn normalize_term(term: &str) -> String {
    term.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Scores are stored with six fraction digits.
pub fn round_score(score: f64) -> f64 {
    let r = (score * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn format_score(score: f64) -> String {
    let s = format!("{:.6}", round_score(score));
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_owned()
    } else {
        s.to_owned()
    }
}

impl Lexicons {
    pub fn new(aspects: Vec<AspectEntry>, opinions: Vec<OpinionEntry>) -> Result<Self> {
        let mut lex = Lexicons {
            aspects,
            opinions,
            revision: 0,
            domain_label: String::new(),
        };
        lex.canonicalize();
        lex.validate()?;
        Ok(lex)
    }

    fn canonicalize(&mut self) {
        self.aspects
            .sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.term.cmp(&b.term)));
        self.opinions.sort_by(|a, b| a.term.cmp(&b.term));
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen: HashMap<&str, &str> = HashMap::new();
        for a in &self.aspects {
            if a.term.is_empty() {
                return Err(Error::Validation("aspect term must not be empty".into()));
            }
            for form in a.forms() {
                if form.is_empty() {
                    return Err(Error::Validation(format!("aspect {:?} has an empty alias", a.term)));
                }
                if let Some(owner) = seen.insert(form, &a.term) {
                    return Err(Error::Validation(if owner == a.term {
                        format!("aspect {:?} lists {form:?} more than once", a.term)
                    } else {
                        format!("{form:?} already belongs to aspect {owner:?}")
                    }));
                }
            }
        }
        let mut ops = HashSet::new();
        for o in &self.opinions {
            if o.term.is_empty() {
                return Err(Error::Validation("opinion term must not be empty".into()));
            }
            if !o.score.is_finite() {
                return Err(Error::Validation(format!("opinion {:?} has a non-finite score", o.term)));
            }
            if !ops.insert(o.term.as_str()) {
                return Err(Error::Validation(format!("duplicate opinion term {:?}", o.term)));
            }
        }
        Ok(())
    }

    pub fn aspect(&self, term: &str) -> Option<&AspectEntry> {
        self.aspects.iter().find(|a| a.term == term)
    }

    pub fn opinion(&self, term: &str) -> Option<&OpinionEntry> {
        self.opinions.iter().find(|o| o.term == term)
    }

    /// Canonical aspect term for a term or alias.
    pub fn canonical_aspect(&self, form: &str) -> Option<&str> {
        self.aspects
            .iter()
            .find(|a| a.forms().any(|f| f == form))
            .map(|a| a.term.as_str())
    }

    /// Applies an edit. On success the returned lexicons carry
    /// `revision + 1`; on failure `self` is untouched.
    pub fn apply_edit(&self, edit: &Edit) -> Result<Lexicons> {
        let mut next = self.clone();
        next.apply_in_place(edit)?;
        next.canonicalize();
        next.validate()?;
        next.revision = self.revision + 1;
        Ok(next)
    }

    fn apply_in_place(&mut self, edit: &Edit) -> Result<()> {
        let unknown = |kind: &str, t: &str| Error::Validation(format!("unknown {kind} term {t:?}"));
        match edit {
            Edit::SetEnabled { term, enabled, kind } => {
                let term = normalize_term(term);
                let mut hit = false;
                if kind.is_none() || *kind == Some(TermKind::Aspect) {
                    if let Some(a) = self.aspects.iter_mut().find(|a| a.term == term) {
                        a.enabled = *enabled;
                        hit = true;
                    }
                }
                if kind.is_none() || *kind == Some(TermKind::Opinion) {
                    if let Some(o) = self.opinions.iter_mut().find(|o| o.term == term) {
                        o.enabled = *enabled;
                        hit = true;
                    }
                }
                if !hit {
                    return Err(unknown("lexicon", &term));
                }
            }
            Edit::AddAspect { term } => {
                let term = normalize_term(term);
                if let Some(owner) = self.canonical_aspect(&term) {
                    return Err(Error::Validation(format!("{term:?} already belongs to aspect {owner:?}")));
                }
                self.aspects.push(AspectEntry::new(&term, 0));
            }
            Edit::DeleteAspect { term } => {
                let term = normalize_term(term);
                let before = self.aspects.len();
                self.aspects.retain(|a| a.term != term);
                if self.aspects.len() == before {
                    return Err(unknown("aspect", &term));
                }
            }
            Edit::SetAlias { term, slot, alias } => {
                let term = normalize_term(term);
                if !(1..=ALIAS_SLOTS).contains(slot) {
                    return Err(Error::Validation(format!("alias slot must be 1-{ALIAS_SLOTS}, got {slot}")));
                }
                let alias = alias.as_deref().map(normalize_term).filter(|a| !a.is_empty());
                let entry = self
                    .aspects
                    .iter_mut()
                    .find(|a| a.term == term)
                    .ok_or_else(|| unknown("aspect", &term))?;
                entry.aliases[slot - 1] = alias;
            }
            Edit::AddOpinion { term, polarity, score } => {
                let term = normalize_term(term);
                if self.opinion(&term).is_some() {
                    return Err(Error::Validation(format!("duplicate opinion term {term:?}")));
                }
                self.opinions.push(OpinionEntry::new(&term, *polarity, *score));
            }
            Edit::SetPolarity { term, polarity } => {
                let term = normalize_term(term);
                let o = self
                    .opinions
                    .iter_mut()
                    .find(|o| o.term == term)
                    .ok_or_else(|| unknown("opinion", &term))?;
                o.polarity = *polarity;
            }
            Edit::SetScore { term, score } => {
                let term = normalize_term(term);
                if !score.is_finite() {
                    return Err(Error::Validation("score must be finite".into()));
                }
                let o = self
                    .opinions
                    .iter_mut()
                    .find(|o| o.term == term)
                    .ok_or_else(|| unknown("opinion", &term))?;
                o.score = round_score(*score);
            }
        }
        Ok(())
    }

    /// Structural equality ignoring revision, label and cached examples.
    pub fn same_content(&self, other: &Lexicons) -> bool {
        let strip = |l: &Lexicons| -> Vec<AspectEntry> {
            l.aspects
                .iter()
                .map(|a| AspectEntry {
                    examples: Vec::new(),
                    ..a.clone()
                })
                .collect()
        };
        strip(self) == strip(other) && self.opinions == other.opinions
    }
}

pub fn save_lexicons(lex: &Lexicons, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    lex.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sorted = lex.clone();
    sorted.canonicalize();

    let path = dir.join(ASPECTS_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["Term", "Alias1", "Alias2", "Alias3", "Enabled", "Frequency"])?;
    for a in &sorted.aspects {
        let [a1, a2, a3] = &a.aliases;
        let enabled = a.enabled.to_string();
        let freq = a.frequency.to_string();
        w.write_record([
            a.term.as_str(),
            a1.as_deref().unwrap_or(""),
            a2.as_deref().unwrap_or(""),
            a3.as_deref().unwrap_or(""),
            &enabled,
            &freq,
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(OPINIONS_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["Term", "Polarity", "Score", "Enabled"])?;
    for o in &sorted.opinions {
        w.write_record([
            o.term.as_str(),
            o.polarity.code(),
            &format_score(o.score),
            &o.enabled.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

struct Columns {
    index: HashMap<String, usize>,
    file: String,
}

impl Columns {
    fn new(headers: &csv::StringRecord, file: &str, required: &[&str]) -> Result<Self> {
        let index: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_ascii_lowercase(), i))
            .collect();
        for r in required {
            if !index.contains_key(&r.to_ascii_lowercase()) {
                return Err(Error::parse(file, 1, format!("missing column {r}")));
            }
        }
        Ok(Columns {
            index,
            file: file.to_owned(),
        })
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, name: &str) -> &'r str {
        self.index
            .get(&name.to_ascii_lowercase())
            .and_then(|&i| rec.get(i))
            .unwrap_or("")
            .trim()
    }

    fn err(&self, rec: &csv::StringRecord, msg: String) -> Error {
        let line = rec.position().map_or(0, |p| p.line() as usize);
        Error::parse(self.file.clone(), line, msg)
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

pub fn load_lexicons(dir: impl AsRef<Path>) -> Result<Lexicons> {
    let dir = dir.as_ref();
    let open = |name: &str| -> Result<(csv::Reader<std::fs::File>, String)> {
        let path = dir.join(name);
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        Ok((
            csv::ReaderBuilder::new().flexible(true).from_reader(file),
            path.display().to_string(),
        ))
    };

    let (mut r, file) = open(ASPECTS_FILE)?;
    let cols = Columns::new(r.headers()?, &file, &["Term", "Enabled", "Frequency"])?;
    let mut aspects = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let term = normalize_term(cols.get(&rec, "Term"));
        if term.is_empty() {
            return Err(cols.err(&rec, "empty Term".into()));
        }
        let enabled = parse_bool(cols.get(&rec, "Enabled"))
            .ok_or_else(|| cols.err(&rec, format!("bad Enabled value for {term:?}")))?;
        let frequency = cols
            .get(&rec, "Frequency")
            .parse()
            .map_err(|_| cols.err(&rec, format!("bad Frequency value for {term:?}")))?;
        let mut entry = AspectEntry::new(&term, frequency);
        entry.enabled = enabled;
        for (slot, alias) in entry.aliases.iter_mut().enumerate() {
            let a = normalize_term(cols.get(&rec, &format!("Alias{}", slot + 1)));
            *alias = (!a.is_empty()).then_some(a);
        }
        aspects.push(entry);
    }

    let (mut r, file) = open(OPINIONS_FILE)?;
    let cols = Columns::new(r.headers()?, &file, &["Term", "Polarity", "Score", "Enabled"])?;
    let mut opinions = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let term = normalize_term(cols.get(&rec, "Term"));
        if term.is_empty() {
            return Err(cols.err(&rec, "empty Term".into()));
        }
        let polarity = Polarity::from_code(cols.get(&rec, "Polarity"))
            .ok_or_else(|| cols.err(&rec, format!("bad Polarity value for {term:?}")))?;
        let score: f64 = cols
            .get(&rec, "Score")
            .parse()
            .map_err(|_| cols.err(&rec, format!("bad Score value for {term:?}")))?;
        let enabled = parse_bool(cols.get(&rec, "Enabled"))
            .ok_or_else(|| cols.err(&rec, format!("bad Enabled value for {term:?}")))?;
        let mut entry = OpinionEntry::new(&term, polarity, score);
        entry.enabled = enabled;
        opinions.push(entry);
    }

    let mut lex = Lexicons::new(aspects, opinions)
        .map_err(|e| Error::parse(dir.display().to_string(), 0, e.to_string()))?;
    lex.domain_label = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(lex)
}

/// Up to `limit` sentences containing `term`, in corpus order, each with the
/// character span of the first occurrence.
pub fn collect_examples(corpus: &ParsedCorpus, term: &str, limit: usize) -> Vec<Example> {
    let words: Vec<String> = normalize_term(term).split(' ').map(String::from).collect();
    if words.iter().all(String::is_empty) {
        return Vec::new();
    }
    let mut out = Vec::new();
    for s in &corpus.sentences {
        if out.len() >= limit {
            break;
        }
        let n = words.len();
        let hit = (1..=s.len().saturating_sub(n - 1)).find(|&start| {
            words
                .iter()
                .enumerate()
                .all(|(k, w)| s.token(start + k).matches_word(w))
        });
        if let Some(start) = hit {
            if let Some(span) = s.char_span_of(start, start + n - 1) {
                out.push(Example {
                    text: s.text.clone(),
                    span,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_conllu;

    fn sample() -> Lexicons {
        let mut drinks = AspectEntry::new("drinks", 5);
        drinks.aliases[0] = Some("beverages".into());
        Lexicons::new(
            vec![drinks, AspectEntry::new("time", 3), AspectEntry::new("service", 9)],
            vec![
                OpinionEntry::new("tasty", Polarity::Positive, 0.42),
                OpinionEntry::new("bland", Polarity::Negative, -0.3),
            ],
        )
        .unwrap()
    }

    #[test]
    fn canonical_order() {
        let lex = sample();
        let terms: Vec<_> = lex.aspects.iter().map(|a| a.term.as_str()).collect();
        assert_eq!(terms, vec!["service", "drinks", "time"]);
        assert_eq!(lex.opinions[0].term, "bland");
    }

    #[test]
    fn save_writes_expected_rows() {
        let dir = tempfile::tempdir().unwrap();
        save_lexicons(&sample(), dir.path()).unwrap();
        let aspects = std::fs::read_to_string(dir.path().join(ASPECTS_FILE)).unwrap();
        assert_eq!(
            aspects,
            "Term,Alias1,Alias2,Alias3,Enabled,Frequency\n\
             service,,,,true,9\n\
             drinks,beverages,,,true,5\n\
             time,,,,true,3\n"
        );
        let opinions = std::fs::read_to_string(dir.path().join(OPINIONS_FILE)).unwrap();
        assert_eq!(opinions, "Term,Polarity,Score,Enabled\nbland,NEG,-0.3,true\ntasty,POS,0.42,true\n");
        let back = load_lexicons(dir.path()).unwrap();
        assert!(back.same_content(&sample()));
    }

    #[test]
    fn empty_lexicons_write_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        save_lexicons(&Lexicons::default(), dir.path()).unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join(ASPECTS_FILE)).unwrap(),
            "Term,Alias1,Alias2,Alias3,Enabled,Frequency\n"
        );
        assert_eq!(
            std::fs::read_to_string(dir.path().join(OPINIONS_FILE)).unwrap(),
            "Term,Polarity,Score,Enabled\n"
        );
    }

    #[test]
    fn load_errors_name_the_offender() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_lexicons(dir.path()), Err(Error::Io { .. })));
        std::fs::write(dir.path().join(ASPECTS_FILE), "Term,Alias1,Alias2,Alias3,Enabled,Frequency\nfood,,,,maybe,1\n").unwrap();
        std::fs::write(dir.path().join(OPINIONS_FILE), "Term,Polarity,Score,Enabled\n").unwrap();
        let err = load_lexicons(dir.path()).unwrap_err().to_string();
        assert!(err.contains("food"), "{err}");
        std::fs::write(
            dir.path().join(ASPECTS_FILE),
            "Term,Alias1,Alias2,Alias3,Enabled,Frequency,Notes\nfood,,,,true,1,x\nmeal,food,,,true,1,y\n",
        )
        .unwrap();
        let err = load_lexicons(dir.path()).unwrap_err().to_string();
        assert!(err.contains("food"), "{err}");
    }

    #[test]
    fn extra_columns_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join(ASPECTS_FILE),
            "Term,Alias1,Alias2,Alias3,Enabled,Frequency,Notes\nfood,meal,,,true,4,keep\n",
        )
        .unwrap();
        std::fs::write(dir.path().join(OPINIONS_FILE), "Term,Polarity,Score,Enabled\ngood,POS,1,false\n").unwrap();
        let lex = load_lexicons(dir.path()).unwrap();
        assert_eq!(lex.canonical_aspect("meal"), Some("food"));
        assert!(!lex.opinions[0].enabled);
    }

    #[test]
    fn edits_bump_revision() {
        let lex = sample();
        let next = lex
            .apply_edit(&Edit::SetEnabled {
                term: "time".into(),
                enabled: false,
                kind: None,
            })
            .unwrap();
        assert_eq!(next.revision, lex.revision + 1);
        assert!(!next.aspect("time").unwrap().enabled);

        let next = next
            .apply_edit(&Edit::SetAlias {
                term: "service".into(),
                slot: 2,
                alias: Some("Waiting Service".into()),
            })
            .unwrap();
        assert_eq!(next.canonical_aspect("waiting service"), Some("service"));
        assert_eq!(next.revision, 2);
    }

    #[test]
    fn invalid_edits_leave_lexicons_unchanged() {
        let lex = sample();
        let bad = [
            Edit::AddAspect { term: "beverages".into() },
            Edit::AddAspect { term: "drinks".into() },
            Edit::SetAlias { term: "time".into(), slot: 1, alias: Some("beverages".into()) },
            Edit::SetAlias { term: "time".into(), slot: 4, alias: Some("clock".into()) },
            Edit::SetAlias { term: "drinks".into(), slot: 2, alias: Some("drinks".into()) },
            Edit::SetAlias { term: "nope".into(), slot: 1, alias: None },
            Edit::DeleteAspect { term: "nope".into() },
            Edit::AddOpinion { term: "tasty".into(), polarity: Polarity::Negative, score: 0.0 },
            Edit::SetPolarity { term: "nope".into(), polarity: Polarity::Negative },
            Edit::SetScore { term: "tasty".into(), score: f64::NAN },
            Edit::SetEnabled { term: "tasty".into(), enabled: false, kind: Some(TermKind::Aspect) },
        ];
        for edit in &bad {
            let before = lex.clone();
            assert!(matches!(lex.apply_edit(edit), Err(Error::Validation(_))), "{edit:?}");
            assert_eq!(lex, before);
        }
    }

    #[test]
    fn edit_json_shape() {
        let e: Edit = serde_json::from_str(r#"{"op":"set_alias","term":"drinks","slot":1,"alias":"beverages"}"#).unwrap();
        assert_eq!(
            e,
            Edit::SetAlias {
                term: "drinks".into(),
                slot: 1,
                alias: Some("beverages".into())
            }
        );
        let e: Edit = serde_json::from_str(r#"{"op":"set_polarity","term":"cold","polarity":"negative"}"#).unwrap();
        assert!(matches!(e, Edit::SetPolarity { polarity: Polarity::Negative, .. }));
    }

    #[test]
    fn score_formatting() {
        assert_eq!(format_score(1.0), "1");
        assert_eq!(format_score(-0.1234567), "-0.123457");
        assert_eq!(format_score(-0.0000001), "0");
    }

    #[test]
    fn examples_view() {
        let corpus = parse_conllu(
            "1\tnice\tnice\tADJ\t_\t_\t2\tamod\t_\t_\n2\tdecor\tdecor\tNOUN\t_\t_\t0\troot\t_\t_\n\n\
             1\tDecor\tdecor\tNOUN\t_\t_\t0\troot\t_\t_\n",
            "mem",
            "d",
        )
        .unwrap();
        let ex = collect_examples(&corpus, "decor", 5);
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].span, (5, 10));
        assert_eq!(&ex[1].text[ex[1].span.0..ex[1].span.1], "Decor");
        assert_eq!(collect_examples(&corpus, "decor", 1).len(), 1);
        assert!(collect_examples(&corpus, "menu", 5).is_empty());
    }
}
