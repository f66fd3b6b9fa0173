#![allow(dead_code)]

pub mod metrics;

use std::path::{Path, PathBuf};

use regex::Regex;
use spankey::Span;

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

/// Every sub-span whose space-joined tags fully match the pattern regex.
pub fn regex_spans<S: AsRef<str>>(tags: &[S], max_len: usize) -> Vec<Span> {
    let re = Regex::new(
        r"^(?:(?:JJ|JJR|JJS|VBG|VBN) )*(?:(?:NN|NNS|NNP|NNPS|VBG) )*(?:NN|NNS|NNP|NNPS|VBG)$",
    )
    .unwrap();
    let tags: Vec<&str> = tags.iter().map(|t| t.as_ref()).collect();
    let mut out = Vec::new();
    for b in 0..tags.len() {
        for e in b..tags.len().min(b + max_len) {
            if re.is_match(&tags[b..=e].join(" ")) {
                out.push(Span::new(b, e));
            }
        }
    }
    out
}

/// Recounts from `oracles/stats_oracle.py`: (docs, distinct positive stems,
/// distinct negative stems, gold stems, positive spans, negative spans).
pub const MINI_STATS: (usize, usize, usize, usize, usize, usize) = (20, 81, 539, 92, 185, 830);
pub const OVERFIT_STATS: (usize, usize, usize, usize, usize, usize) =
    (41, 205, 1101, 205, 375, 1505);

pub const TAGS: &[&str] = &[
    "JJ", "JJR", "JJS", "VBG", "VBN", "NN", "NNS", "NNP", "NNPS", "DT", "IN", "VB", "VBZ", "RB",
    ",",
];
