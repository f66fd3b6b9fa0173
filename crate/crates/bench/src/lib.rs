//! Inputs shared by the benchmarks.

use std::path::Path;

use spankey::corpus::load_corpus;
use spankey::Corpus;

/// The bundled overfit corpus.
pub fn overfit_corpus() -> Corpus {
    load_corpus(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/overfit.jsonl"))
        .expect("bundled corpus loads")
}
