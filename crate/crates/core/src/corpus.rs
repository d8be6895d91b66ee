//! CoNLL-U ingestion.
//!
//! Sentences are read from the basic dependency tree only: multiword token
//! ranges (`3-4`) and empty nodes (`5.1`) are skipped. Of the ten columns,
//! ID, FORM, LEMMA, UPOS, HEAD and DEPREL are kept.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub surface: String,
    /// `_` when the parser provided no lemma.
    pub lemma: String,
    pub pos: String,
    /// Index of the governing token, 0 for the root.
    pub head: usize,
    pub deprel: String,
}

impl Token {
    pub fn new(
        index: usize,
        surface: &str,
        lemma: &str,
        pos: &str,
        head: usize,
        deprel: &str,
    ) -> Self {
        Token {
            index,
            surface: surface.to_owned(),
            lemma: lemma.to_owned(),
            pos: pos.to_owned(),
            head,
            deprel: deprel.to_owned(),
        }
    }

    /// The normalized term form of this token.
    pub fn norm(&self) -> String {
        lemma_or_surface(self)
    }

    /// True if `word` (already lowercase) equals either the normalized form
    /// or the lowercased surface.
    pub fn matches_word(&self, word: &str) -> bool {
        self.norm() == word || self.surface.to_lowercase() == word
    }
}

/// Lowercased lemma, or the lowercased surface when the lemma column is `_`.
pub fn lemma_or_surface(token: &Token) -> String {
    if token.lemma == "_" || token.lemma.is_empty() {
        token.surface.to_lowercase()
    } else {
        token.lemma.to_lowercase()
    }
}

/// Provenance of a sentence within a corpus.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SentenceRef {
    pub doc_id: String,
    /// 0-based position of the sentence in the corpus it was loaded from.
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sent_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedSentence {
    pub tokens: Vec<Token>,
    pub text: String,
    pub doc_id: String,
    pub sent_id: Option<String>,
    pub position: usize,
    /// Character offsets `[start, end)` of each token in `text`, when the
    /// surface could be aligned.
    offsets: Vec<Option<(usize, usize)>>,
}

impl ParsedSentence {
    /// Builds a sentence and checks the tree invariants. When `text` is
    /// `None` it is reconstructed by joining surfaces with single spaces.
    pub fn new(
        doc_id: impl Into<String>,
        sent_id: Option<String>,
        text: Option<String>,
        tokens: Vec<Token>,
        position: usize,
    ) -> Result<Self> {
        let text = text.unwrap_or_else(|| {
            tokens
                .iter()
                .map(|t| t.surface.as_str())
                .collect::<Vec<_>>()
                .join(" ")
        });
        let offsets = align_offsets(&text, &tokens);
        let sentence = ParsedSentence {
            tokens,
            text,
            doc_id: doc_id.into(),
            sent_id,
            position,
            offsets,
        };
        sentence.validate()?;
        Ok(sentence)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token by 1-based index.
    pub fn token(&self, index: usize) -> &Token {
        &self.tokens[index - 1]
    }

    pub fn reference(&self) -> SentenceRef {
        SentenceRef {
            doc_id: self.doc_id.clone(),
            index: self.position,
            sent_id: self.sent_id.clone(),
        }
    }

    pub fn label(&self) -> String {
        match &self.sent_id {
            Some(id) => id.clone(),
            None => format!("{}#{}", self.doc_id, self.position + 1),
        }
    }

    /// Indices of the direct dependents of `index`.
    pub fn children(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        self.tokens
            .iter()
            .filter(move |t| t.head == index)
            .map(|t| t.index)
    }

    /// Tokens sharing an undirected dependency edge with `index`.
    pub fn neighbors(&self, index: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.children(index).collect();
        let head = self.token(index).head;
        if head != 0 {
            out.push(head);
        }
        out.sort_unstable();
        out
    }

    /// Character span of token `index` in `text`.
    pub fn char_span(&self, index: usize) -> Option<(usize, usize)> {
        self.offsets.get(index - 1).copied().flatten()
    }

    /// Character span covering tokens `start..=end`.
    pub fn char_span_of(&self, start: usize, end: usize) -> Option<(usize, usize)> {
        let (s, _) = self.char_span(start)?;
        let (_, e) = self.char_span(end)?;
        Some((s, e))
    }

    /// The token within `start..=end` whose head lies outside the span.
    /// Ties go to the shallowest token, then the rightmost.
    pub fn span_head(&self, start: usize, end: usize) -> usize {
        (start..=end)
            .filter(|&i| {
                let h = self.token(i).head;
                h < start || h > end
            })
            .min_by_key(|&i| (self.depth(i), std::cmp::Reverse(i)))
            .unwrap_or(end)
    }

    fn depth(&self, mut index: usize) -> usize {
        let mut depth = 0;
        while index != 0 && depth <= self.tokens.len() {
            index = self.token(index).head;
            depth += 1;
        }
        depth
    }

    fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::Structure {
            sentence: self.label(),
            message,
        };
        if self.tokens.is_empty() {
            return Err(fail("sentence has no tokens".into()));
        }
        let n = self.tokens.len();
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i + 1 {
                return Err(fail(format!(
                    "token {} found at position {}",
                    t.index,
                    i + 1
                )));
            }
            if t.head > n {
                return Err(fail(format!(
                    "token {} has head {} outside the sentence",
                    t.index, t.head
                )));
            }
            if t.head == t.index {
                return Err(fail(format!("token {} is its own head", t.index)));
            }
            if t.pos.is_empty() || t.deprel.is_empty() {
                return Err(fail(format!("token {} lacks POS or relation", t.index)));
            }
        }
        let roots = self.tokens.iter().filter(|t| t.head == 0).count();
        if roots != 1 {
            return Err(fail(format!("expected a single root, found {roots}")));
        }
        for t in &self.tokens {
            let mut cur = t.index;
            let mut steps = 0;
            while cur != 0 {
                cur = self.token(cur).head;
                steps += 1;
                if steps > n {
                    return Err(fail(format!("cycle through token {}", t.index)));
                }
            }
        }
        Ok(())
    }
}

fn align_offsets(text: &str, tokens: &[Token]) -> Vec<Option<(usize, usize)>> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut byte_cursor = 0;
    let mut char_cursor = 0;
    for t in tokens {
        match text[byte_cursor..].find(t.surface.as_str()) {
            Some(rel) if !t.surface.is_empty() => {
                let start_byte = byte_cursor + rel;
                let start = char_cursor + text[byte_cursor..start_byte].chars().count();
                let len = t.surface.chars().count();
                out.push(Some((start, start + len)));
                byte_cursor = start_byte + t.surface.len();
                char_cursor = start + len;
            }
            _ => out.push(None),
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedCorpus {
    pub sentences: Vec<ParsedSentence>,
    pub source_path: String,
}

impl ParsedCorpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

pub fn load_conllu(path: impl AsRef<Path>) -> Result<ParsedCorpus> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, e.utf8_error()),
        )
    })?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "doc".into());
    parse_conllu(&text, &path.display().to_string(), &stem)
}

/// Parses CoNLL-U text. `default_doc` names sentences that appear before any
/// `# newdoc` comment.
pub fn parse_conllu(input: &str, source: &str, default_doc: &str) -> Result<ParsedCorpus> {
    let mut sentences = Vec::new();
    let mut block = Block::default();
    let mut doc_id = default_doc.to_owned();
    let mut newdocs = 0usize;

    for (lineno, raw) in input.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            block.flush(&doc_id, &mut sentences)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(rest) = comment.strip_prefix("newdoc") {
                newdocs += 1;
                doc_id = match rest.trim().strip_prefix("id") {
                    Some(id) => id.trim().trim_start_matches('=').trim().to_owned(),
                    None => format!("{default_doc}-{newdocs}"),
                };
            } else if let Some(v) = comment_value(comment, "text") {
                block.text = Some(v.to_owned());
            } else if let Some(v) = comment_value(comment, "sent_id") {
                block.sent_id = Some(v.to_owned());
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::parse(
                source,
                lineno,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let index: usize = cols[0]
            .parse()
            .map_err(|_| Error::parse(source, lineno, format!("bad token id {:?}", cols[0])))?;
        let head: usize = cols[6]
            .parse()
            .map_err(|_| Error::parse(source, lineno, format!("bad head {:?}", cols[6])))?;
        if index != block.tokens.len() + 1 {
            return Err(Error::parse(
                source,
                lineno,
                format!("token id {index} out of sequence"),
            ));
        }
        if cols[3].is_empty() || cols[7].is_empty() {
            return Err(Error::parse(source, lineno, "empty UPOS or DEPREL column"));
        }
        if block.tokens.is_empty() {
            block.first_line = lineno;
        }
        block
            .tokens
            .push(Token::new(index, cols[1], cols[2], cols[3], head, cols[7]));
    }
    block.flush(&doc_id, &mut sentences)?;

    if sentences.is_empty() {
        return Err(Error::EmptyCorpus(source.to_owned()));
    }
    Ok(ParsedCorpus {
        sentences,
        source_path: source.to_owned(),
    })
}

fn comment_value<'a>(comment: &'a str, key: &str) -> Option<&'a str> {
    let rest = comment.strip_prefix(key)?.trim_start();
    Some(rest.strip_prefix('=')?.trim())
}

#[derive(Default)]
struct Block {
    tokens: Vec<Token>,
    text: Option<String>,
    sent_id: Option<String>,
    first_line: usize,
}

impl Block {
    fn flush(&mut self, doc_id: &str, out: &mut Vec<ParsedSentence>) -> Result<()> {
        let block = std::mem::take(self);
        if block.tokens.is_empty() {
            return Ok(());
        }
        let position = out.len();
        let sent_id = block.sent_id.clone();
        let sentence =
            ParsedSentence::new(doc_id, block.sent_id, block.text, block.tokens, position)
                .map_err(|e| match e {
                    Error::Structure { message, .. } => Error::Structure {
                        sentence: sent_id
                            .unwrap_or_else(|| format!("#{} (line {})", position + 1, block.first_line)),
                        message,
                    },
                    other => other,
                })?;
        out.push(sentence);
        Ok(())
    }
}

/// Writes sentences back out as CoNLL-U, keeping the consumed columns and
/// filling the rest with `_`.
pub fn to_conllu(sentences: &[ParsedSentence]) -> String {
    let mut out = String::new();
    let mut prev_doc: Option<&str> = None;
    for s in sentences {
        if prev_doc != Some(s.doc_id.as_str()) {
            let _ = writeln!(out, "# newdoc id = {}", s.doc_id);
            prev_doc = Some(&s.doc_id);
        }
        if let Some(id) = &s.sent_id {
            let _ = writeln!(out, "# sent_id = {id}");
        }
        let _ = writeln!(out, "# text = {}", s.text);
        for t in &s.tokens {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t_\t_\t{}\t{}\t_\t_",
                t.index, t.surface, t.lemma, t.pos, t.head, t.deprel
            );
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const NICE_DECOR: &str = "1\tnice\tnice\tADJ\t_\t_\t2\tamod\t_\t_\n\
                              2\tdecor\tdecor\tNOUN\t_\t_\t0\troot\t_\t_\n";

    #[test]
    fn loads_table_one_fragment() {
        let corpus = parse_conllu(NICE_DECOR, "mem", "doc").unwrap();
        let s = &corpus.sentences[0];
        assert_eq!(s.tokens[0].deprel, "amod");
        assert_eq!(s.tokens[0].head, 2);
        assert_eq!(s.text, "nice decor");
        assert_eq!(s.char_span(2), Some((5, 10)));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            parse_conllu("", "mem", "doc"),
            Err(Error::EmptyCorpus(_))
        ));
        assert!(matches!(
            parse_conllu("# just a comment\n\n", "mem", "doc"),
            Err(Error::EmptyCorpus(_))
        ));
    }

    #[test]
    fn self_loop_is_structural_error() {
        let input = "# sent_id = s1\n\
                     1\tnice\tnice\tADJ\t_\t_\t0\troot\t_\t_\n\
                     2\tdecor\tdecor\tNOUN\t_\t_\t2\tamod\t_\t_\n";
        match parse_conllu(input, "mem", "doc") {
            Err(Error::Structure { sentence, .. }) => assert_eq!(sentence, "s1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cycle_is_structural_error() {
        let input = "1\ta\ta\tDET\t_\t_\t2\tdet\t_\t_\n\
                     2\tb\tb\tNOUN\t_\t_\t1\tnsubj\t_\t_\n\
                     3\tc\tc\tVERB\t_\t_\t0\troot\t_\t_\n";
        assert!(matches!(
            parse_conllu(input, "mem", "doc"),
            Err(Error::Structure { .. })
        ));
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let input = "# text = x\n1\tnice\tnice\tADJ\t_\t_\t2\tamod\n";
        match parse_conllu(input, "mem", "doc") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn skips_ranges_and_empty_nodes() {
        let input = "# text = I don't care\n\
                     1\tI\tI\tPRON\t_\t_\t4\tnsubj\t_\t_\n\
                     2-3\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n\
                     2\tdo\tdo\tAUX\t_\t_\t4\taux\t_\t_\n\
                     3\tn't\tnot\tPART\t_\t_\t4\tadvmod\t_\t_\n\
                     3.1\tx\tx\tX\t_\t_\t_\t_\t_\t_\n\
                     4\tcare\tcare\tVERB\t_\t_\t0\troot\t_\t_\n";
        let corpus = parse_conllu(input, "mem", "doc").unwrap();
        let s = &corpus.sentences[0];
        assert_eq!(s.len(), 4);
        assert_eq!(s.text, "I don't care");
        assert_eq!(s.char_span(3), Some((4, 7)));
    }

    #[test]
    fn newdoc_sets_doc_id() {
        let input = format!("# newdoc id = reviews-1\n{NICE_DECOR}\n{NICE_DECOR}");
        let corpus = parse_conllu(&input, "mem", "fallback").unwrap();
        assert_eq!(corpus.len(), 2);
        assert!(corpus.sentences.iter().all(|s| s.doc_id == "reviews-1"));
        assert_eq!(corpus.sentences[1].position, 1);
    }

    #[test]
    fn lemma_or_surface_policy() {
        let t = Token::new(1, "Tasty", "tasty", "ADJ", 0, "root");
        assert_eq!(lemma_or_surface(&t), "tasty");
        let t = Token::new(1, "Decor", "_", "NOUN", 0, "root");
        assert_eq!(lemma_or_surface(&t), "decor");
        let t = Token::new(1, "WAS", "be", "AUX", 0, "root");
        assert_eq!(lemma_or_surface(&t), "be");
    }

    #[test]
    fn span_head_of_compound() {
        let input = "1\tbattery\tbattery\tNOUN\t_\t_\t2\tcompound\t_\t_\n\
                     2\tlife\tlife\tNOUN\t_\t_\t0\troot\t_\t_\n";
        let s = &parse_conllu(input, "mem", "doc").unwrap().sentences[0];
        assert_eq!(s.span_head(1, 2), 2);
        assert_eq!(s.neighbors(2), vec![1]);
    }
}
