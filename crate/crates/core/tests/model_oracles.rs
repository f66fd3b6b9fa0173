//! Forward-pass, loss and gradient checks against independent
//! implementations written with plain vectors.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spankey::candgen::{extract_candidates, labeled_candidates};
use spankey::corpus::TaggedDocument;
use spankey::model::network::{phrase_bilstm, span_features, token_bilstm};
use spankey::model::toy_document;
use spankey::tensor::gradcheck::GradCheckConfig;
use spankey::tensor::loss::{hinge_loss, weighted_cross_entropy};
use spankey::tensor::lstm::{LstmInit, LstmParams};
use spankey::tensor::{Graph, ParamStore};
use spankey::{Head, Label, ModelConfig, Objective, SkeModel, Span, Tensor, Vocab};

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-major matrix from the store.
fn mat(store: &ParamStore, name: &str) -> (usize, usize, Vec<f64>) {
    let t = store.get(store.find(name).unwrap_or_else(|| panic!("{name}")));
    (t.rows(), t.cols(), t.data().to_vec())
}

fn naive_lstm(store: &ParamStore, prefix: &str, xs: &[Vec<f64>], reverse: bool) -> Vec<Vec<f64>> {
    let (n_in, four_h, wi) = mat(store, &format!("{prefix}.w_input"));
    let (_, _, wh) = mat(store, &format!("{prefix}.w_hidden"));
    let (_, _, b) = mat(store, &format!("{prefix}.bias"));
    let h_dim = four_h / 4;
    let mut h = vec![0.0; h_dim];
    let mut c = vec![0.0; h_dim];
    let mut out = vec![Vec::new(); xs.len()];
    let order: Vec<usize> = if reverse {
        (0..xs.len()).rev().collect()
    } else {
        (0..xs.len()).collect()
    };
    for t in order {
        let x = &xs[t];
        assert_eq!(x.len(), n_in);
        let mut z = b.clone();
        for (j, zj) in z.iter_mut().enumerate() {
            for k in 0..n_in {
                *zj += x[k] * wi[k * four_h + j];
            }
            for k in 0..h_dim {
                *zj += h[k] * wh[k * four_h + j];
            }
        }
        for k in 0..h_dim {
            let i = sig(z[k]);
            let f = sig(z[h_dim + k]);
            let g = z[2 * h_dim + k].tanh();
            let o = sig(z[3 * h_dim + k]);
            c[k] = f * c[k] + i * g;
            h[k] = o * c[k].tanh();
        }
        out[t] = h.clone();
    }
    out
}

/// The whole scoring pipeline, re-derived without the autodiff graph.
fn naive_scores(model: &SkeModel, doc: &TaggedDocument, spans: &[Span]) -> Vec<f64> {
    let p = &model.params;
    let (_, d, emb) = mat(p, "embedding");
    let xs: Vec<Vec<f64>> = doc
        .tokens
        .iter()
        .map(|w| {
            let id = model.vocab.words().iter().position(|v| v == w).unwrap_or(0);
            emb[id * d..(id + 1) * d].to_vec()
        })
        .collect();
    let f = naive_lstm(p, "token_fwd", &xs, false);
    let b = naive_lstm(p, "token_bwd", &xs, true);
    let rows: Vec<Vec<f64>> = spans
        .iter()
        .map(|s| {
            let (fb, fe, bb, be) = (&f[s.begin], &f[s.end], &b[s.begin], &b[s.end]);
            let mut r = Vec::new();
            r.extend(fb);
            r.extend(fe);
            r.extend(bb);
            r.extend(be);
            r.extend(fb.iter().zip(fe).map(|(x, y)| x * y));
            r.extend(bb.iter().zip(be).map(|(x, y)| x * y));
            r.extend(fe.iter().zip(fb).map(|(x, y)| x - y));
            r.extend(bb.iter().zip(be).map(|(x, y)| x - y));
            r
        })
        .collect();
    let pf = naive_lstm(p, "phrase_fwd", &rows, false);
    let pb = naive_lstm(p, "phrase_bwd", &rows, true);
    let (n_in, outs, w) = mat(p, "head.weight");
    let (_, _, bias) = mat(p, "head.bias");
    pf.iter()
        .zip(&pb)
        .map(|(a, bw)| {
            let h: Vec<f64> = a.iter().chain(bw).copied().collect();
            assert_eq!(h.len(), n_in);
            let logit = |j: usize| bias[j] + (0..n_in).map(|k| h[k] * w[k * outs + j]).sum::<f64>();
            match model.config.head {
                Head::Classification => {
                    let (z0, z1) = (logit(0), logit(1));
                    let m = z0.max(z1);
                    (z1 - m).exp() / ((z0 - m).exp() + (z1 - m).exp())
                }
                Head::Ranking => sig(logit(0)),
            }
        })
        .collect()
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn doc() -> TaggedDocument {
    TaggedDocument {
        id: "d".into(),
        tokens: words(
            "a weighted ranking algorithm for facet-based component retrieval system zzz",
        ),
        pos: words("DT VBN VBG NN IN JJ NN NN NN NN"),
        gold: vec![
            words("ranking algorithm"),
            words("component retrieval system"),
        ],
    }
}

fn model(d: usize, head: Head, seed: u64, range: f64) -> SkeModel {
    let doc = doc();
    let mut vocab_words = vec![spankey::model::UNK.to_string()];
    // leave "zzz" out so it maps to UNK
    for w in &doc.tokens[..doc.tokens.len() - 1] {
        if !vocab_words.contains(w) {
            vocab_words.push(w.clone());
        }
    }
    let cfg = ModelConfig {
        d,
        head,
        init_range: range,
        ..Default::default()
    };
    SkeModel::new(cfg, Vocab::from_words(vocab_words).unwrap(), seed).unwrap()
}

#[test]
fn scores_match_plain_vector_reimplementation() {
    let doc = doc();
    let spans = extract_candidates(&doc, 6);
    assert!(spans.len() > 5);
    for (seed, d) in [(1, 2), (2, 4), (3, 8), (4, 6)] {
        for head in [Head::Classification, Head::Ranking] {
            let m = model(d, head, seed, 0.5);
            let got = m.score(&doc, &spans, None).unwrap();
            let want = naive_scores(&m, &doc, &spans);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "d={d} {head:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn span_feature_blocks_by_hand() {
    // d = 4: two states per direction, L = 3, span (0, 2)
    let fwd = Tensor::from_vec(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
    let bwd = Tensor::from_vec(3, 2, vec![-0.1, 0.7, 0.2, -0.3, 0.9, 0.05]).unwrap();
    let mut g = Graph::new();
    let (f, b) = (g.leaf(fwd), g.leaf(bwd));
    let s = span_features(&mut g, f, b, &[Span::new(0, 2)]).unwrap();
    #[rustfmt::skip]
    let want = [
        0.1, 0.2,     // f_begin
        0.5, 0.6,     // f_end
        -0.1, 0.7,    // b_begin
        0.9, 0.05,    // b_end
        0.05, 0.12,   // f_begin * f_end
        -0.09, 0.035, // b_begin * b_end
        0.4, 0.4,     // f_end - f_begin
        -1.0, 0.65,   // b_begin - b_end
    ];
    let got = g.value(s);
    assert_eq!(got.shape(), [1, 16]);
    for (a, b) in got.data().iter().zip(want) {
        assert!((a - b).abs() < 1e-15, "{a} vs {b}");
    }
}

#[test]
fn single_token_document() {
    let m = model(4, Head::Ranking, 9, 0.3);
    let doc = TaggedDocument {
        id: "one".into(),
        tokens: words("graph"),
        pos: words("NN"),
        gold: vec![],
    };
    let f = m.forward(&doc, &[Span::new(0, 0)], None).unwrap();
    let row = f.graph.value(f.spans).row(0).to_vec();
    assert_eq!(row.len(), 16);
    assert_eq!(row[0..2], row[2..4]);
    assert_eq!(row[4..6], row[6..8]);
    assert_eq!(row[12..16], [0.0; 4]);
    for j in 0..2 {
        assert!((row[8 + j] - row[j] * row[j]).abs() < 1e-15);
        assert!((row[10 + j] - row[4 + j] * row[4 + j]).abs() < 1e-15);
    }
}

#[test]
fn nested_spans_get_distinct_rows() {
    let m = model(4, Head::Classification, 5, 0.3);
    let doc = doc();
    // "weighted ranking algorithm" and "ranking algorithm"
    let spans = [Span::new(1, 3), Span::new(2, 3)];
    let f = m.forward(&doc, &spans, None).unwrap();
    let s = f.graph.value(f.spans);
    assert_ne!(s.row(0), s.row(1));
    // shared end token
    assert_eq!(s.row(0)[2..4], s.row(1)[2..4]);
}

#[test]
fn dimension_chain() {
    for d in [2, 6, 10] {
        let m = model(d, Head::Classification, 1, 0.1);
        let doc = doc();
        let spans = extract_candidates(&doc, 6);
        let f = m.forward(&doc, &spans, None).unwrap();
        let l = doc.len();
        let n = spans.len();
        assert_eq!(f.graph.value(f.tokens).shape(), [l, d]);
        assert_eq!(f.graph.value(f.token_fwd).shape(), [l, d / 2]);
        assert_eq!(f.graph.value(f.spans).shape(), [n, 4 * d]);
        assert_eq!(f.graph.value(f.phrases).shape(), [n, 4 * d]);
        assert_eq!(f.graph.value(f.logits).shape(), [n, 2]);
        assert_eq!(f.graph.value(f.scores).shape(), [n, 1]);
    }
}

/// `memoryless` zeroes the recurrent weights and saturates the forget gate
/// shut, so no state crosses time steps.
fn phrase_layer(s: &Tensor, memoryless: bool, seed: u64) -> Tensor {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = LstmInit {
        range: 0.5,
        forget_bias: 1.0,
    };
    let (w, h) = (s.cols(), s.cols() / 2);
    let pf = LstmParams::register(&mut store, "f", w, h, init, &mut rng);
    let pb = LstmParams::register(&mut store, "b", w, h, init, &mut rng);
    if memoryless {
        for p in [pf, pb] {
            store.get_mut(p.w_hidden).data_mut().fill(0.0);
            let w_in = store.get_mut(p.w_input);
            for r in 0..w {
                w_in.row_mut(r)[h..2 * h].fill(0.0);
            }
            store.get_mut(p.bias).data_mut()[h..2 * h].fill(-1000.0);
        }
    }
    let mut g = Graph::new();
    let (fv, bv) = (pf.bind(&mut g, &store), pb.bind(&mut g, &store));
    let x = g.leaf(s.clone());
    let out = phrase_bilstm(&mut g, &fv, &bv, x).unwrap();
    g.value(out).clone()
}

fn random_rows(m: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_vec(
        m,
        w,
        (0..m * w).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(t.rows(), t.cols());
    for (i, &p) in perm.iter().enumerate() {
        out.row_mut(i).copy_from_slice(t.row(p));
    }
    out
}

#[test]
fn phrase_layer_mixes_candidates() {
    let s = random_rows(5, 8, 1);
    let base = phrase_layer(&s, false, 3);
    let mut bumped = s.clone();
    bumped.row_mut(2)[0] += 0.5;
    let out = phrase_layer(&bumped, false, 3);
    // every other candidate sees the change through one direction
    for r in [0, 1, 3, 4] {
        assert!(
            base.row(r)
                .iter()
                .zip(out.row(r))
                .any(|(a, b)| (a - b).abs() > 1e-6),
            "row {r} ignored candidate 2"
        );
    }
}

#[test]
fn phrase_layer_permutation() {
    let s = random_rows(4, 8, 2);
    let perm = [2, 0, 3, 1];
    // no carried state: each row depends only on itself
    let a = permute_rows(&phrase_layer(&s, true, 4), &perm);
    let b = phrase_layer(&permute_rows(&s, &perm), true, 4);
    assert!(a.max_abs_diff(&b) < 1e-15);
    // with recurrence the order matters
    let a = permute_rows(&phrase_layer(&s, false, 4), &perm);
    let b = phrase_layer(&permute_rows(&s, &perm), false, 4);
    assert!(a.max_abs_diff(&b) > 1e-6);
}

#[test]
fn phrase_layer_single_candidate_depends_on_its_row_only() {
    let s = random_rows(1, 8, 3);
    let a = phrase_layer(&s, false, 5);
    let b = phrase_layer(&s, true, 5);
    // with one step the recurrent weights only ever see h0 = 0
    assert_eq!(a, b);
}

#[test]
fn token_layer_backward_is_reversed_forward() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = LstmParams::register(&mut store, "t", 4, 3, LstmInit::default(), &mut rng);
    let x = random_rows(6, 4, 9);
    let rev = permute_rows(&x, &[5, 4, 3, 2, 1, 0]);
    let mut g = Graph::new();
    let v = p.bind(&mut g, &store);
    let xv = g.leaf(x);
    let rv = g.leaf(rev);
    let (_, b) = token_bilstm(&mut g, &v, &v, xv).unwrap();
    let (f, _) = token_bilstm(&mut g, &v, &v, rv).unwrap();
    let f = permute_rows(g.value(f), &[5, 4, 3, 2, 1, 0]);
    assert!(g.value(b).max_abs_diff(&f) < 1e-15);
}

#[test]
fn loss_values_match_naive_sums() {
    let doc = doc();
    let cands = labeled_candidates(&doc, 6).unwrap();
    let labels: Vec<Label> = cands.iter().map(|c| c.label).collect();
    let spans: Vec<Span> = cands.iter().map(|c| c.span).collect();
    assert!(labels.iter().any(|l| l.is_positive()));
    for head in [Head::Classification, Head::Ranking] {
        let m = model(6, head, 11, 0.4);
        let h = m.score(&doc, &spans, None).unwrap();

        let w = 7.5;
        let mut ce = 0.0;
        for (s, l) in h.iter().zip(&labels) {
            ce -= match l {
                Label::Positive => w * s.ln(),
                Label::Negative => (1.0 - s).ln(),
            };
        }
        let got = m
            .loss(
                &doc,
                &cands,
                Objective::Classification { pos_weight: w },
                None,
            )
            .unwrap()
            .unwrap()
            .0;
        assert!(
            (got - ce).abs() < 1e-10 * ce.abs().max(1.0),
            "{got} vs {ce}"
        );

        let margin = 0.3;
        let mut hinge = 0.0;
        for i in 0..h.len() {
            for j in 0..h.len() {
                if labels[i].is_positive() && !labels[j].is_positive() {
                    hinge += (margin - h[i] + h[j]).max(0.0);
                }
            }
        }
        let got = m
            .loss(&doc, &cands, Objective::Ranking { margin }, None)
            .unwrap()
            .unwrap()
            .0;
        assert!((got - hinge).abs() < 1e-12, "{got} vs {hinge}");
    }
}

#[test]
fn end_to_end_gradients() {
    let docs = [toy_document(), doc()];
    let cfg = GradCheckConfig {
        max_coords_per_param: Some(24),
        ..Default::default()
    };
    for (i, d) in docs.iter().enumerate() {
        let cands = labeled_candidates(d, 6).unwrap();
        for head in [Head::Classification, Head::Ranking] {
            for objective in [
                Objective::Classification { pos_weight: 3.0 },
                Objective::Ranking { margin: 0.5 },
            ] {
                let m = model(4, head, 20 + i as u64, 0.5);
                let r = m.check_gradients(d, &cands, objective, None, &cfg).unwrap();
                assert!(
                    r.max_rel_error < 1e-4,
                    "{head:?} {objective:?}: {} at {:?}[{:?}]",
                    r.max_rel_error,
                    r.worst_param,
                    r.worst_coord
                );
            }
        }
    }
}

#[test]
fn no_candidates_no_loss() {
    let m = model(4, Head::Classification, 1, 0.1);
    let d = TaggedDocument {
        id: "v".into(),
        tokens: words("we run"),
        pos: words("PRP VBP"),
        gold: vec![],
    };
    assert!(m.score(&d, &[], None).unwrap().is_empty());
    let objective = Objective::Classification { pos_weight: 1.0 };
    assert!(m.loss(&d, &[], objective, None).unwrap().is_none());
}

fn labels_strategy() -> impl Strategy<Value = Vec<(f64, bool)>> {
    prop::collection::vec((0.001f64..0.999, any::<bool>()), 1..12)
}

proptest! {
    #[test]
    fn losses_ignore_candidate_order(pairs in labels_strategy(), seed in any::<u64>()) {
        let mut shuffled = pairs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let split = |p: &[(f64, bool)]| -> (Vec<f64>, Vec<Label>) {
            p.iter()
                .map(|&(s, pos)| (s, if pos { Label::Positive } else { Label::Negative }))
                .unzip()
        };
        let (s1, l1) = split(&pairs);
        let (s2, l2) = split(&shuffled);
        let a = weighted_cross_entropy(&s1, &l1, 4.0);
        let b = weighted_cross_entropy(&s2, &l2, 4.0);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        let a = hinge_loss(&s1, &l1, 0.5);
        let b = hinge_loss(&s2, &l2, 0.5);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn hinge_zero_when_separated_by_margin(pairs in labels_strategy(), margin in 0.0f64..0.4) {
        // positives at >= 0.5 + margin, negatives at <= 0.5
        let (scores, labels): (Vec<f64>, Vec<Label>) = pairs
            .iter()
            .map(|&(s, pos)| {
                if pos {
                    (0.5 + margin + s * (0.5 - margin) * 0.99, Label::Positive)
                } else {
                    (0.5 * s, Label::Negative)
                }
            })
            .unzip();
        prop_assert_eq!(hinge_loss(&scores, &labels, margin), 0.0);
    }
}
