//! Candidate phrase spans from the POS pattern
//! `(JJ|JJR|JJS|VBG|VBN)*(NN|NNS|NNP|NNPS|VBG)+`, and their labels against
//! stemmed gold keyphrases.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{stem_phrase, Corpus, TaggedDocument};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_PHRASE_LEN: usize = 6;

/// Inclusive, 0-based token range of a candidate phrase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub begin: usize,
    pub end: usize,
}

impl Span {
    pub fn new(begin: usize, end: usize) -> Self {
        debug_assert!(begin <= end);
        Span { begin, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.begin + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.begin <= other.end && other.begin <= self.end
    }

    /// The covered tokens. Panics if the span is out of bounds.
    pub fn slice<'a, T>(&self, items: &'a [T]) -> &'a [T] {
        &items[self.begin..=self.end]
    }

    pub(crate) fn check(&self, len: usize) -> Result<()> {
        if self.begin > self.end || self.end >= len {
            return Err(Error::SpanOutOfBounds {
                begin: self.begin,
                end: self.end,
                len,
            });
        }
        Ok(())
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.begin, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledCandidate {
    pub span: Span,
    pub label: Label,
}

fn is_modifier(tag: &str) -> bool {
    matches!(tag, "JJ" | "JJR" | "JJS" | "VBG" | "VBN")
}

fn is_noun(tag: &str) -> bool {
    matches!(tag, "NN" | "NNS" | "NNP" | "NNPS" | "VBG")
}

/// State set of the two-state automaton for the pattern. `VBG` belongs to
/// both groups, so the prefix and noun states can be live at once.
#[derive(Debug, Clone, Copy, Default)]
struct PatternState {
    prefix: bool,
    noun: bool,
}

impl PatternState {
    fn start() -> Self {
        PatternState {
            prefix: true,
            noun: false,
        }
    }

    fn advance(self, tag: &str) -> Self {
        PatternState {
            prefix: self.prefix && is_modifier(tag),
            noun: (self.prefix || self.noun) && is_noun(tag),
        }
    }

    fn accepting(self) -> bool {
        self.noun
    }

    fn dead(self) -> bool {
        !self.prefix && !self.noun
    }
}

/// Whether the whole tag sequence matches the candidate pattern.
pub fn match_pattern<S: AsRef<str>>(tags: &[S]) -> bool {
    tags.iter()
        .try_fold(PatternState::start(), |st, t| {
            let next = st.advance(t.as_ref());
            (!next.dead()).then_some(next)
        })
        .is_some_and(|st| st.accepting() && !tags.is_empty())
}

/// Every span of at most `max_phrase_len` tokens whose tags fully match the
/// pattern, nested and overlapping spans included, sorted by (begin, end).
pub fn extract_spans<S: AsRef<str>>(tags: &[S], max_phrase_len: usize) -> Vec<Span> {
    let mut spans = Vec::new();
    for begin in 0..tags.len() {
        let mut st = PatternState::start();
        for (end, tag) in tags.iter().enumerate().skip(begin).take(max_phrase_len) {
            st = st.advance(tag.as_ref());
            if st.dead() {
                break;
            }
            if st.accepting() {
                spans.push(Span::new(begin, end));
            }
        }
    }
    spans
}

pub fn extract_candidates(doc: &TaggedDocument, max_phrase_len: usize) -> Vec<Span> {
    extract_spans(&doc.pos, max_phrase_len)
}

/// Labels each span positive iff its stemmed surface is a stemmed gold key.
pub fn label_candidates(spans: &[Span], doc: &TaggedDocument) -> Result<Vec<LabeledCandidate>> {
    let gold: HashSet<String> = doc.gold_keys().into_iter().collect();
    spans
        .iter()
        .map(|&span| {
            span.check(doc.len())?;
            let key = stem_phrase(span.slice(&doc.tokens))?;
            let label = if gold.contains(&key) {
                Label::Positive
            } else {
                Label::Negative
            };
            Ok(LabeledCandidate { span, label })
        })
        .collect()
}

/// Candidates and labels for one document.
pub fn labeled_candidates(
    doc: &TaggedDocument,
    max_phrase_len: usize,
) -> Result<Vec<LabeledCandidate>> {
    label_candidates(&extract_candidates(doc, max_phrase_len), doc)
}

/// Per-corpus candidate statistics. Positive and negative counts are over
/// distinct stemmed phrases per document; the `*_spans` fields count span
/// occurrences instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub positives_per_doc: f64,
    pub keyphrases_per_doc: f64,
    /// Fraction of stemmed gold keyphrases found among candidate stems.
    pub coverage: Option<f64>,
    pub negatives_per_doc: f64,
    /// `negatives_per_doc / positives_per_doc`; absent when no positives.
    pub neg_pos_ratio: Option<f64>,
    pub positive_spans_per_doc: f64,
    pub negative_spans_per_doc: f64,
}

impl CorpusStats {
    pub fn render_table(&self, name: &str) -> String {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |c| format!("{:.2}%", c * 100.0));
        let num = |v: Option<f64>| v.map_or("n/a".to_string(), |c| format!("{c:.2}"));
        let rows = [
            ("Dataset", name.to_string()),
            ("Documents", self.documents.to_string()),
            ("#c+ per doc", format!("{:.2}", self.positives_per_doc)),
            (
                "#Keyphrase per doc",
                format!("{:.2}", self.keyphrases_per_doc),
            ),
            ("Keyphrase coverage by c+", pct(self.coverage)),
            ("#c- per doc", format!("{:.2}", self.negatives_per_doc)),
            ("Ratio #c- / #c+", num(self.neg_pos_ratio)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v}\n"))
            .collect()
    }
}

pub fn corpus_stats(corpus: &Corpus, max_phrase_len: usize) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::Data(
            "corpus statistics need at least one document".into(),
        ));
    }
    let (mut pos, mut neg, mut gold_total, mut pos_spans, mut neg_spans) = (0, 0, 0, 0, 0);
    for doc in &corpus.documents {
        let gold: HashSet<String> = doc.gold_keys().into_iter().collect();
        let mut cand_keys = HashSet::new();
        for c in labeled_candidates(doc, max_phrase_len)? {
            if c.label.is_positive() {
                pos_spans += 1;
            } else {
                neg_spans += 1;
            }
            cand_keys.insert(stem_phrase(c.span.slice(&doc.tokens))?);
        }
        let matched = cand_keys.intersection(&gold).count();
        pos += matched;
        neg += cand_keys.len() - matched;
        gold_total += gold.len();
    }
    let n = corpus.len() as f64;
    let mean = |x: usize| x as f64 / n;
    Ok(CorpusStats {
        documents: corpus.len(),
        positives_per_doc: mean(pos),
        keyphrases_per_doc: mean(gold_total),
        coverage: (gold_total > 0).then(|| pos as f64 / gold_total as f64),
        negatives_per_doc: mean(neg),
        neg_pos_ratio: (pos > 0).then(|| neg as f64 / pos as f64),
        positive_spans_per_doc: mean(pos_spans),
        negative_spans_per_doc: mean(neg_spans),
    })
}
