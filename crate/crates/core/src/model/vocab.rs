use std::collections::HashMap;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";

/// Token vocabulary; id 0 is reserved for out-of-vocabulary tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::from_words(vec![UNK.to_string()]).expect("unk-only vocabulary")
    }
}

impl Vocab {
    /// Every token of `corpus`, in first-seen order.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut v = Vocab::default();
        for tok in corpus.documents.iter().flat_map(|d| &d.tokens) {
            if !v.index.contains_key(tok) {
                v.index.insert(tok.clone(), v.words.len());
                v.words.push(tok.clone());
            }
        }
        v
    }

    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.first().map(String::as_str) != Some(UNK) {
            return Err(Error::Checkpoint(format!(
                "vocabulary must start with {UNK}"
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Checkpoint(format!(
                    "duplicate vocabulary entry {w:?}"
                )));
            }
        }
        Ok(Vocab { words, index })
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}
