//! Metric fixtures. Expected values are exact fractions from
//! `oracles/metrics_oracle.py` (NLTK Porter, `fractions.Fraction`).

use spankey::corpus::TaggedDocument;
use spankey::eval::{DocumentPrediction, PredictedPhrase};
use spankey::Corpus;

pub type Doc = (&'static [&'static str], Option<&'static [&'static str]>);

pub const FIXTURES: &[(&str, &[Doc])] = &[
    (
        "exact_top1",
        &[(&["ranking algorithm"], Some(&["ranking algorithm"]))],
    ),
    (
        "plural_matches_by_stem",
        &[(
            &["ranking algorithms"],
            Some(&["ranking algorithm", "graph"]),
        )],
    ),
    (
        "gold_a_b_top5_has_a",
        &[(
            &["alpha", "beta"],
            Some(&["alpha", "gamma", "delta", "epsilon", "zeta"]),
        )],
    ),
    ("all_wrong", &[(&["alpha"], Some(&["beta", "gamma"]))]),
    ("no_predictions_line", &[(&["alpha", "beta"], None)]),
    ("empty_prediction_list", &[(&["alpha"], Some(&[]))]),
    (
        "duplicate_prediction_credited_once",
        &[(&["alpha"], Some(&["alpha", "alphas", "beta"]))],
    ),
    (
        "duplicate_gold_counted_once",
        &[(
            &["network", "networks", "graph"],
            Some(&["network", "graph"]),
        )],
    ),
    (
        "hit_at_rank_six",
        &[(&["target"], Some(&["a", "b", "c", "d", "e", "target"]))],
    ),
    (
        "hit_at_rank_eleven_ignored",
        &[(
            &["target"],
            Some(&["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "target"]),
        )],
    ),
    (
        "twelve_predictions_truncated",
        &[(
            &["a", "k"],
            Some(&["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"]),
        )],
    ),
    (
        "micro_not_macro",
        &[
            (&["a"], Some(&["a"])),
            (&["b", "c", "d", "e"], Some(&["x", "y", "z", "w", "v", "b"])),
        ],
    ),
    (
        "doc_without_gold",
        &[(&[], Some(&["a", "b"])), (&["c"], Some(&["c"]))],
    ),
    (
        "case_insensitive_surface",
        &[(&["query expansion"], Some(&["Query Expansion"]))],
    ),
    (
        "partial_phrase_not_credited",
        &[(
            &["weighted ranking algorithm"],
            Some(&["ranking algorithm", "weighted ranking"]),
        )],
    ),
    (
        "nested_both_gold",
        &[(
            &["weighted ranking algorithm", "ranking algorithm"],
            Some(&[
                "ranking algorithm",
                "weighted ranking algorithm",
                "component",
            ]),
        )],
    ),
    (
        "three_docs_mixed",
        &[
            (&["a", "b"], Some(&["a", "q"])),
            (&["c"], None),
            (&["d", "e", "f"], Some(&["f", "e", "d", "r", "s", "t"])),
        ],
    ),
    (
        "perfect_five",
        &[(
            &["a", "b", "c", "d", "e"],
            Some(&["e", "d", "c", "b", "a", "x", "y"]),
        )],
    ),
    (
        "stem_collision_in_predictions",
        &[(
            &["connection", "relate"],
            Some(&["connected", "connecting", "related", "relational"]),
        )],
    ),
    (
        "more_gold_than_k",
        &[(
            &[
                "g0", "g1", "g2", "g3", "g4", "g5", "g6", "g7", "g8", "g9", "g10", "g11",
            ],
            Some(&[
                "g0", "g1", "g2", "g3", "g4", "g5", "g6", "g7", "g8", "g9", "g10", "g11",
            ]),
        )],
    ),
];

pub type Frac = (u64, u64);
/// (k, predicted, correct, gold, P, R, F1)
pub type Row = (usize, usize, usize, usize, Frac, Frac, Frac);

pub const EXPECTED: &[(&str, [Row; 2])] = &[
    (
        "exact_top1",
        [
            (5, 1, 1, 1, (1, 1), (1, 1), (1, 1)),
            (10, 1, 1, 1, (1, 1), (1, 1), (1, 1)),
        ],
    ),
    (
        "plural_matches_by_stem",
        [
            (5, 2, 1, 1, (1, 2), (1, 1), (2, 3)),
            (10, 2, 1, 1, (1, 2), (1, 1), (2, 3)),
        ],
    ),
    (
        "gold_a_b_top5_has_a",
        [
            (5, 5, 1, 2, (1, 5), (1, 2), (2, 7)),
            (10, 5, 1, 2, (1, 5), (1, 2), (2, 7)),
        ],
    ),
    (
        "all_wrong",
        [
            (5, 2, 0, 1, (0, 1), (0, 1), (0, 1)),
            (10, 2, 0, 1, (0, 1), (0, 1), (0, 1)),
        ],
    ),
    (
        "no_predictions_line",
        [
            (5, 0, 0, 2, (0, 1), (0, 1), (0, 1)),
            (10, 0, 0, 2, (0, 1), (0, 1), (0, 1)),
        ],
    ),
    (
        "empty_prediction_list",
        [
            (5, 0, 0, 1, (0, 1), (0, 1), (0, 1)),
            (10, 0, 0, 1, (0, 1), (0, 1), (0, 1)),
        ],
    ),
    (
        "duplicate_prediction_credited_once",
        [
            (5, 3, 1, 1, (1, 3), (1, 1), (1, 2)),
            (10, 3, 1, 1, (1, 3), (1, 1), (1, 2)),
        ],
    ),
    (
        "duplicate_gold_counted_once",
        [
            (5, 2, 2, 2, (1, 1), (1, 1), (1, 1)),
            (10, 2, 2, 2, (1, 1), (1, 1), (1, 1)),
        ],
    ),
    (
        "hit_at_rank_six",
        [
            (5, 5, 0, 1, (0, 1), (0, 1), (0, 1)),
            (10, 6, 1, 1, (1, 6), (1, 1), (2, 7)),
        ],
    ),
    (
        "hit_at_rank_eleven_ignored",
        [
            (5, 5, 0, 1, (0, 1), (0, 1), (0, 1)),
            (10, 10, 0, 1, (0, 1), (0, 1), (0, 1)),
        ],
    ),
    (
        "twelve_predictions_truncated",
        [
            (5, 5, 1, 2, (1, 5), (1, 2), (2, 7)),
            (10, 10, 1, 2, (1, 10), (1, 2), (1, 6)),
        ],
    ),
    (
        "micro_not_macro",
        [
            (5, 6, 1, 5, (1, 6), (1, 5), (2, 11)),
            (10, 7, 2, 5, (2, 7), (2, 5), (1, 3)),
        ],
    ),
    (
        "doc_without_gold",
        [
            (5, 3, 1, 1, (1, 3), (1, 1), (1, 2)),
            (10, 3, 1, 1, (1, 3), (1, 1), (1, 2)),
        ],
    ),
    (
        "case_insensitive_surface",
        [
            (5, 1, 1, 1, (1, 1), (1, 1), (1, 1)),
            (10, 1, 1, 1, (1, 1), (1, 1), (1, 1)),
        ],
    ),
    (
        "partial_phrase_not_credited",
        [
            (5, 2, 0, 1, (0, 1), (0, 1), (0, 1)),
            (10, 2, 0, 1, (0, 1), (0, 1), (0, 1)),
        ],
    ),
    (
        "nested_both_gold",
        [
            (5, 3, 2, 2, (2, 3), (1, 1), (4, 5)),
            (10, 3, 2, 2, (2, 3), (1, 1), (4, 5)),
        ],
    ),
    (
        "three_docs_mixed",
        [
            (5, 7, 4, 6, (4, 7), (2, 3), (8, 13)),
            (10, 8, 4, 6, (1, 2), (2, 3), (4, 7)),
        ],
    ),
    (
        "perfect_five",
        [
            (5, 5, 5, 5, (1, 1), (1, 1), (1, 1)),
            (10, 7, 5, 5, (5, 7), (1, 1), (5, 6)),
        ],
    ),
    (
        "stem_collision_in_predictions",
        [
            (5, 4, 2, 2, (1, 2), (1, 1), (2, 3)),
            (10, 4, 2, 2, (1, 2), (1, 1), (2, 3)),
        ],
    ),
    (
        "more_gold_than_k",
        [
            (5, 5, 5, 12, (1, 1), (5, 12), (10, 17)),
            (10, 10, 10, 12, (1, 1), (5, 6), (10, 11)),
        ],
    ),
];

pub fn words(p: &str) -> Vec<String> {
    p.split_whitespace().map(str::to_string).collect()
}

pub fn build(docs: &[Doc]) -> (Corpus, Vec<DocumentPrediction>) {
    let mut corpus = Corpus::default();
    let mut preds = Vec::new();
    for (i, (gold, list)) in docs.iter().enumerate() {
        let id = format!("d{i}");
        corpus.documents.push(TaggedDocument {
            id: id.clone(),
            tokens: vec!["x".into()],
            pos: vec!["NN".into()],
            gold: gold.iter().map(|g| words(g)).collect(),
        });
        if let Some(list) = list {
            preds.push(DocumentPrediction {
                id,
                keyphrases: list
                    .iter()
                    .enumerate()
                    .map(|(r, s)| PredictedPhrase {
                        surface: s.to_string(),
                        score: 1.0 - r as f64 * 0.01,
                        begin: 0,
                        end: 0,
                    })
                    .collect(),
            });
        }
    }
    (corpus, preds)
}

pub fn frac((n, d): Frac) -> f64 {
    n as f64 / d as f64
}
