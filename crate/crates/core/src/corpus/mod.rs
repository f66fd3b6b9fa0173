//! Tagged documents, the JSON-lines corpus format, and stemmed phrase keys.

mod porter;

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use porter::porter_stem;

/// Default cap on document length, in tokens.
pub const DEFAULT_MAX_DOC_LEN: usize = 512;

/// One article (title and abstract already joined) with POS tags and gold
/// keyphrases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedDocument {
    pub id: String,
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    #[serde(rename = "keyphrases")]
    pub gold: Vec<Vec<String>>,
}

impl TaggedDocument {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Distinct stemmed gold keys, in first-seen order.
    pub fn gold_keys(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.gold
            .iter()
            .map(|p| stem_words(p))
            .filter(|k| seen.insert(k.clone()))
            .collect()
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.tokens.is_empty() {
            return Err(format!("document {:?} has no tokens", self.id));
        }
        if self.tokens.len() != self.pos.len() {
            return Err(format!(
                "document {:?} has {} tokens but {} POS tags",
                self.id,
                self.tokens.len(),
                self.pos.len()
            ));
        }
        if let Some(i) = self.gold.iter().position(|p| p.is_empty()) {
            return Err(format!("document {:?}: keyphrase {} is empty", self.id, i));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    pub documents: Vec<TaggedDocument>,
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Documents longer than this are truncated.
    pub max_doc_len: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            max_doc_len: DEFAULT_MAX_DOC_LEN,
        }
    }
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&TaggedDocument> {
        self.documents.iter().find(|d| d.id == id)
    }

    /// Serializes to the JSON-lines format, one document per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for doc in &self.documents {
            out.push_str(&serde_json::to_string(doc).expect("documents always serialize"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Loads a JSON-lines corpus with default options.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    load_corpus_with(path, LoadOptions::default())
}

pub fn load_corpus_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_corpus(&text, name, path, opts)
}

/// Parses JSON-lines text. `origin` is used only in error messages.
pub fn parse_corpus(
    text: &str,
    name: impl Into<String>,
    origin: &Path,
    opts: LoadOptions,
) -> Result<Corpus> {
    let mut documents = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let schema_err = |message: String| Error::Schema {
            path: origin.to_path_buf(),
            line: line_no,
            message,
        };
        let mut doc: TaggedDocument =
            serde_json::from_str(line).map_err(|e| schema_err(e.to_string()))?;
        doc.check().map_err(schema_err)?;
        if !ids.insert(doc.id.clone()) {
            return Err(schema_err(format!("duplicate document id {:?}", doc.id)));
        }
        for t in doc.tokens.iter_mut() {
            *t = t.to_lowercase();
        }
        for w in doc.gold.iter_mut().flatten() {
            *w = w.to_lowercase();
        }
        if doc.tokens.len() > opts.max_doc_len {
            doc.tokens.truncate(opts.max_doc_len);
            doc.pos.truncate(opts.max_doc_len);
        }
        documents.push(doc);
    }
    Ok(Corpus {
        name: name.into(),
        documents,
    })
}

/// Stemmed key of a phrase: per-token Porter stems joined by single spaces.
pub fn stem_phrase<S: AsRef<str>>(phrase: &[S]) -> Result<String> {
    if phrase.is_empty() {
        return Err(Error::Data("cannot stem an empty phrase".into()));
    }
    Ok(stem_words(phrase))
}

fn stem_words<S: AsRef<str>>(phrase: &[S]) -> String {
    phrase
        .iter()
        .map(|w| porter_stem(&w.as_ref().to_lowercase()))
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Corpus> {
        parse_corpus(text, "t", Path::new("t.jsonl"), LoadOptions::default())
    }

    #[test]
    fn single_document() {
        let c = parse(
            r#"{"id":"d1","tokens":["Ranking","Algorithms","work"],"pos":["VBG","NNS","VBP"],"keyphrases":[["ranking","algorithms"]]}"#,
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.documents[0].len(), 3);
        assert_eq!(c.documents[0].tokens[0], "ranking");
    }

    #[test]
    fn tag_count_mismatch_names_line() {
        let text = concat!(
            r#"{"id":"a","tokens":["x"],"pos":["NN"],"keyphrases":[]}"#,
            "\n",
            r#"{"id":"b","tokens":["x","y","z"],"pos":["NN","NN"],"keyphrases":[]}"#,
        );
        match parse(text) {
            Err(Error::Schema { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("3 tokens but 2 POS"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        assert!(parse("").unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_rejected() {
        let line = r#"{"id":"a","tokens":["x"],"pos":["NN"],"keyphrases":[]}"#;
        let err = parse(&format!("{line}\n{line}\n")).unwrap_err();
        assert!(matches!(err, Error::Schema { line: 2, .. }));
    }

    #[test]
    fn empty_keyphrase_rejected() {
        let err = parse(r#"{"id":"a","tokens":["x"],"pos":["NN"],"keyphrases":[[]]}"#).unwrap_err();
        assert!(matches!(err, Error::Schema { line: 1, .. }));
    }

    #[test]
    fn empty_document_rejected() {
        let err = parse(r#"{"id":"a","tokens":[],"pos":[],"keyphrases":[]}"#).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_corpus("/nonexistent/corpus.jsonl"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn long_documents_truncated() {
        let c = parse_corpus(
            r#"{"id":"a","tokens":["a","b","c","d"],"pos":["NN","NN","NN","NN"],"keyphrases":[]}"#,
            "t",
            Path::new("t"),
            LoadOptions { max_doc_len: 2 },
        )
        .unwrap();
        assert_eq!(c.documents[0].tokens, ["a", "b"]);
        assert_eq!(c.documents[0].pos.len(), 2);
    }

    #[test]
    fn stem_phrase_keys() {
        assert_eq!(
            stem_phrase(&["ranking", "algorithms"]).unwrap(),
            "rank algorithm"
        );
        assert_eq!(stem_phrase(&["sip"]).unwrap(), "sip");
        assert_eq!(
            stem_phrase(&["neural", "networks"]).unwrap(),
            stem_phrase(&["Neural", "network"]).unwrap()
        );
        assert!(stem_phrase::<&str>(&[]).is_err());
    }
}
