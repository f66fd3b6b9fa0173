//! Top-k prediction lists and micro-averaged precision / recall / F1@k with
//! stemmed matching.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candgen::{extract_candidates, Span};
use crate::corpus::{porter_stem, stem_phrase, Corpus, TaggedDocument};
use crate::error::{Error, Result};
use crate::model::{FeatureStore, SkeModel};

pub const DEFAULT_KS: [usize; 2] = [5, 10];
pub const DEFAULT_OVERLAP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPhrase {
    pub span: Span,
    pub surface: Vec<String>,
    pub score: f64,
}

impl ScoredPhrase {
    pub fn key(&self) -> String {
        stem_words(&self.surface)
    }
}

fn stem_words<S: AsRef<str>>(words: &[S]) -> String {
    stem_phrase(words).unwrap_or_default()
}

/// Sorts by score (descending, ties by earlier span), optionally keeps only
/// the best span per stemmed surface, and truncates to `k`.
pub fn predict_topk(scored: &[ScoredPhrase], k: usize, dedupe: bool) -> Vec<ScoredPhrase> {
    let mut order: Vec<&ScoredPhrase> = scored.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.span.cmp(&b.span)));
    let mut seen = HashSet::new();
    order
        .into_iter()
        .filter(|p| !dedupe || seen.insert(p.key()))
        .take(k)
        .cloned()
        .collect()
}

/// One line of an extraction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentPrediction {
    pub id: String,
    pub keyphrases: Vec<PredictedPhrase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedPhrase {
    /// Tokens joined by single spaces.
    pub surface: String,
    pub score: f64,
    pub begin: usize,
    pub end: usize,
}

impl From<&ScoredPhrase> for PredictedPhrase {
    fn from(p: &ScoredPhrase) -> Self {
        PredictedPhrase {
            surface: p.surface.join(" "),
            score: p.score,
            begin: p.span.begin,
            end: p.span.end,
        }
    }
}

impl PredictedPhrase {
    fn key(&self) -> String {
        stem_words(&self.surface.split_whitespace().collect::<Vec<_>>())
    }
}

pub fn write_predictions(preds: &[DocumentPrediction], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for p in preds {
        out.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<DocumentPrediction>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Schema {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Scores every candidate of `doc`.
pub fn score_document(
    model: &SkeModel,
    doc: &TaggedDocument,
    max_phrase_len: usize,
    features: Option<&FeatureStore>,
) -> Result<Vec<ScoredPhrase>> {
    let spans = extract_candidates(doc, max_phrase_len);
    let scores = model.score(doc, &spans, features)?;
    Ok(spans
        .into_iter()
        .zip(scores)
        .map(|(span, score)| ScoredPhrase {
            span,
            surface: span.slice(&doc.tokens).to_vec(),
            score,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    pub dedupe: bool,
    pub overlap_k: usize,
    pub max_phrase_len: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ks: DEFAULT_KS.to_vec(),
            dedupe: true,
            overlap_k: DEFAULT_OVERLAP_K,
            max_phrase_len: crate::candgen::DEFAULT_MAX_PHRASE_LEN,
        }
    }
}

impl EvalOptions {
    /// Length of the prediction lists needed to score every requested k.
    pub fn list_len(&self) -> usize {
        self.ks
            .iter()
            .copied()
            .chain([self.overlap_k])
            .max()
            .unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks.contains(&0) || self.overlap_k == 0 {
            return Err(Error::Config("every k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Top-`opts.list_len()` predictions for every document, in corpus order.
pub fn extract(
    model: &SkeModel,
    corpus: &Corpus,
    opts: &EvalOptions,
    features: Option<&FeatureStore>,
) -> Result<Vec<DocumentPrediction>> {
    opts.validate()?;
    corpus
        .documents
        .iter()
        .map(|doc| {
            let scored = score_document(model, doc, opts.max_phrase_len, features)?;
            Ok(DocumentPrediction {
                id: doc.id.clone(),
                keyphrases: predict_topk(&scored, opts.list_len(), opts.dedupe)
                    .iter()
                    .map(PredictedPhrase::from)
                    .collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsAtK {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: usize,
    pub correct: usize,
    pub gold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsAtK {
    pub k: usize,
    pub predicted: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentCounts {
    pub id: String,
    pub gold: usize,
    pub at_k: Vec<CountsAtK>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Vec<MetricsAtK>,
    pub documents: Vec<DocumentCounts>,
    pub overlap_k: usize,
    /// Gold keyphrases whose occurrence shares a token with another gold
    /// keyphrase's occurrence.
    pub overlapped_gold: usize,
    pub overlapped_recovered: usize,
    /// Absent when the corpus has no overlapped gold keyphrase.
    pub overlapped_recall: Option<f64>,
}

impl EvalReport {
    pub fn at(&self, k: usize) -> Option<&MetricsAtK> {
        self.metrics.iter().find(|m| m.k == k)
    }

    pub fn f1_at(&self, k: usize) -> Option<f64> {
        self.at(k).map(|m| m.f1)
    }

    pub fn render_table(&self, method: &str) -> String {
        let mut header = format!("{:<24}", "Method");
        let mut row = format!("{method:<24}");
        for m in &self.metrics {
            header.push_str(&format!("  {:>8}", format!("F1@{}", m.k)));
            row.push_str(&format!("  {:>8.4}", m.f1));
        }
        let mut out = format!("{header}\n{row}\n");
        for m in &self.metrics {
            out.push_str(&format!(
                "@{:<3} P={:.4} R={:.4} F1={:.4} (correct {} / predicted {} / gold {})\n",
                m.k, m.precision, m.recall, m.f1, m.correct, m.predicted, m.gold
            ));
        }
        match self.overlapped_recall {
            Some(r) => out.push_str(&format!(
                "overlapped recall@{}: {:.4} ({} / {})\n",
                self.overlap_k, r, self.overlapped_recovered, self.overlapped_gold
            )),
            None => out.push_str(&format!("overlapped recall@{}: n/a\n", self.overlap_k)),
        }
        out
    }
}

/// Gold keys credited by the first `k` predictions, each at most once.
fn credited(gold: &HashSet<String>, preds: &[PredictedPhrase], k: usize) -> HashSet<String> {
    preds
        .iter()
        .take(k)
        .map(PredictedPhrase::key)
        .filter(|key| gold.contains(key))
        .collect()
}

/// Gold keys with an occurrence overlapping an occurrence of a different
/// gold key.
pub fn overlapped_gold(doc: &TaggedDocument) -> HashSet<String> {
    let stems: Vec<String> = doc.tokens.iter().map(|t| porter_stem(t)).collect();
    let mut occurrences: HashMap<String, Vec<Span>> = HashMap::new();
    for phrase in &doc.gold {
        let key = stem_words(phrase);
        if occurrences.contains_key(&key) {
            continue;
        }
        let n = phrase.len();
        let words: Vec<&str> = key.split(' ').collect();
        let spans = (0..stems.len().saturating_sub(n - 1))
            .filter(|&b| stems[b..b + n].iter().zip(&words).all(|(s, w)| s == w))
            .map(|b| Span::new(b, b + n - 1))
            .collect();
        occurrences.insert(key, spans);
    }
    let mut out = HashSet::new();
    for (a, sa) in &occurrences {
        for (b, sb) in &occurrences {
            if a != b && sa.iter().any(|x| sb.iter().any(|y| x.overlaps(y))) {
                out.insert(a.clone());
            }
        }
    }
    out
}

/// Scores a prediction file against `corpus`. Documents without a
/// prediction line count as predicting nothing; prediction lines for
/// unknown ids are an error.
pub fn score_predictions(
    corpus: &Corpus,
    preds: &[DocumentPrediction],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    opts.validate()?;
    let mut by_id: HashMap<&str, &DocumentPrediction> = HashMap::new();
    for p in preds {
        if corpus.get(&p.id).is_none() {
            return Err(Error::Data(format!(
                "prediction for unknown document {:?}",
                p.id
            )));
        }
        if by_id.insert(&p.id, p).is_some() {
            return Err(Error::Data(format!(
                "duplicate predictions for document {:?}",
                p.id
            )));
        }
    }
    let mut totals = vec![(0usize, 0usize); opts.ks.len()];
    let mut gold_total = 0;
    let (mut overlapped, mut recovered) = (0, 0);
    let mut documents = Vec::with_capacity(corpus.len());
    for doc in &corpus.documents {
        let gold: HashSet<String> = doc.gold_keys().into_iter().collect();
        let list: &[PredictedPhrase] = by_id.get(doc.id.as_str()).map_or(&[], |p| &p.keyphrases);
        let mut at_k = Vec::with_capacity(opts.ks.len());
        for (i, &k) in opts.ks.iter().enumerate() {
            let predicted = list.len().min(k);
            let correct = credited(&gold, list, k).len();
            totals[i].0 += predicted;
            totals[i].1 += correct;
            at_k.push(CountsAtK {
                k,
                predicted,
                correct,
            });
        }
        let ov = overlapped_gold(doc);
        if !ov.is_empty() {
            let hit = credited(&gold, list, opts.overlap_k);
            overlapped += ov.len();
            recovered += ov.intersection(&hit).count();
        }
        gold_total += gold.len();
        documents.push(DocumentCounts {
            id: doc.id.clone(),
            gold: gold.len(),
            at_k,
        });
    }
    let metrics = opts
        .ks
        .iter()
        .zip(totals)
        .map(|(&k, (predicted, correct))| micro(k, predicted, correct, gold_total))
        .collect();
    Ok(EvalReport {
        metrics,
        documents,
        overlap_k: opts.overlap_k,
        overlapped_gold: overlapped,
        overlapped_recovered: recovered,
        overlapped_recall: (overlapped > 0).then(|| recovered as f64 / overlapped as f64),
    })
}

fn micro(k: usize, predicted: usize, correct: usize, gold: usize) -> MetricsAtK {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(correct, predicted);
    let recall = ratio(correct, gold);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    MetricsAtK {
        k,
        precision,
        recall,
        f1,
        predicted,
        correct,
        gold,
    }
}

/// Extraction followed by scoring.
pub fn evaluate(
    model: &SkeModel,
    corpus: &Corpus,
    opts: &EvalOptions,
    features: Option<&FeatureStore>,
) -> Result<EvalReport> {
    let preds = extract(model, corpus, opts, features)?;
    score_predictions(corpus, &preds, opts)
}
