//! The span keyphrase scorer: token features, token Bi-LSTM, span
//! features, phrase Bi-LSTM and an output head.

pub mod features;
pub mod network;
pub mod vocab;

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use features::{load_word_vectors, FeatureStore};
pub use network::{Head, HeadParams};
pub use vocab::{Vocab, UNK};

use crate::candgen::{Label, LabeledCandidate, Span};
use crate::corpus::TaggedDocument;
use crate::error::{Error, Result};
use crate::tensor::gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
use crate::tensor::lstm::{LstmInit, LstmParams};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenFeatureSource {
    /// Trainable embedding table looked up by token id.
    EmbeddingRnn,
    /// Per-document `L x d` matrices read from a feature file.
    Precomputed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Token feature width; the token Bi-LSTM uses `d/2` per direction.
    pub d: usize,
    pub vocab_size: usize,
    pub max_phrase_len: usize,
    pub head: Head,
    pub token_feature_source: TokenFeatureSource,
    pub freeze_embeddings: bool,
    pub init_range: f64,
    pub forget_bias: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 64,
            vocab_size: 1,
            max_phrase_len: crate::candgen::DEFAULT_MAX_PHRASE_LEN,
            head: Head::Classification,
            token_feature_source: TokenFeatureSource::EmbeddingRnn,
            freeze_embeddings: false,
            init_range: 0.1,
            forget_bias: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || !self.d.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "d must be even and positive, got {}",
                self.d
            )));
        }
        if self.max_phrase_len == 0 {
            return Err(Error::Config("max_phrase_len must be positive".into()));
        }
        if self.vocab_size == 0 {
            return Err(Error::Config("vocab_size must be positive".into()));
        }
        if !(self.init_range.is_finite() && self.init_range >= 0.0) {
            return Err(Error::Config(format!("bad init_range {}", self.init_range)));
        }
        Ok(())
    }
}

/// Training loss for one document.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Classification { pos_weight: f64 },
    Ranking { margin: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    embedding: Option<ParamId>,
    token_fwd: LstmParams,
    token_bwd: LstmParams,
    phrase_fwd: LstmParams,
    phrase_bwd: LstmParams,
    head: HeadParams,
}

impl Layout {
    fn find(store: &ParamStore, cfg: &ModelConfig) -> Result<Self> {
        let d = cfg.d;
        let embedding = match cfg.token_feature_source {
            TokenFeatureSource::EmbeddingRnn => {
                let id = store
                    .find("embedding")
                    .ok_or_else(|| Error::Checkpoint("missing parameter embedding".into()))?;
                if store.get(id).shape() != [cfg.vocab_size, d] {
                    return Err(Error::Checkpoint(format!(
                        "embedding is {:?}, expected {:?}",
                        store.get(id).shape(),
                        [cfg.vocab_size, d]
                    )));
                }
                Some(id)
            }
            TokenFeatureSource::Precomputed => None,
        };
        let lstm = |prefix: &str, input: usize, hidden: usize| {
            let p = LstmParams::find(store, prefix)?;
            if p.input_dim != input || p.hidden_dim != hidden {
                return Err(Error::Checkpoint(format!(
                    "{prefix} is {}->{}, expected {input}->{hidden}",
                    p.input_dim, p.hidden_dim
                )));
            }
            Ok(p)
        };
        let layout = Layout {
            embedding,
            token_fwd: lstm("token_fwd", d, d / 2)?,
            token_bwd: lstm("token_bwd", d, d / 2)?,
            phrase_fwd: lstm("phrase_fwd", 4 * d, 2 * d)?,
            phrase_bwd: lstm("phrase_bwd", 4 * d, 2 * d)?,
            head: HeadParams::find(store, cfg.head, 4 * d)?,
        };
        let expected = 14 + usize::from(embedding.is_some());
        if store.len() != expected {
            return Err(Error::Checkpoint(format!(
                "{} parameter tensors, expected {expected}",
                store.len()
            )));
        }
        Ok(layout)
    }
}

/// Every intermediate of one forward pass, kept on its graph.
pub struct Forward {
    pub graph: Graph,
    /// `L x d`
    pub tokens: Var,
    /// `L x d/2` each
    pub token_fwd: Var,
    pub token_bwd: Var,
    /// `M x 4d`
    pub spans: Var,
    /// `M x 4d`
    pub phrases: Var,
    /// `M x 2` or `M x 1`
    pub logits: Var,
    /// `M x 1`, each in (0, 1)
    pub scores: Var,
    token_ids: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    layout: Layout,
}

impl SkeModel {
    /// Fresh model with seeded initialization. `vocab` is ignored for the
    /// precomputed feature source beyond being stored.
    pub fn new(mut config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.vocab_size = vocab.len();
        config.validate()?;
        let d = config.d;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        if config.token_feature_source == TokenFeatureSource::EmbeddingRnn {
            let id = params.add(
                "embedding",
                Tensor::uniform(vocab.len(), d, config.init_range, &mut rng),
            );
            params.set_frozen(id, config.freeze_embeddings);
        }
        let init = LstmInit {
            range: config.init_range,
            forget_bias: config.forget_bias,
        };
        LstmParams::register(&mut params, "token_fwd", d, d / 2, init, &mut rng);
        LstmParams::register(&mut params, "token_bwd", d, d / 2, init, &mut rng);
        LstmParams::register(&mut params, "phrase_fwd", 4 * d, 2 * d, init, &mut rng);
        LstmParams::register(&mut params, "phrase_bwd", 4 * d, 2 * d, init, &mut rng);
        HeadParams::register(&mut params, config.head, 4 * d, config.init_range, &mut rng);
        Self::from_parts(config, vocab, params)
    }

    /// Reassembles a model from stored parameters, checking every shape.
    pub fn from_parts(config: ModelConfig, vocab: Vocab, mut params: ParamStore) -> Result<Self> {
        config.validate()?;
        if config.token_feature_source == TokenFeatureSource::EmbeddingRnn
            && vocab.len() != config.vocab_size
        {
            return Err(Error::Checkpoint(format!(
                "vocabulary has {} words, config says {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        let layout = Layout::find(&params, &config)?;
        if let Some(id) = layout.embedding {
            params.set_frozen(id, config.freeze_embeddings);
        }
        Ok(SkeModel {
            config,
            vocab,
            params,
            layout,
        })
    }

    pub fn embedding(&self) -> Option<ParamId> {
        self.layout.embedding
    }

    /// Copies pretrained vectors into the embedding rows of known words.
    /// Returns how many rows were set.
    pub fn init_embeddings(&mut self, vectors: &HashMap<String, Vec<f64>>) -> Result<usize> {
        let Some(id) = self.layout.embedding else {
            return Err(Error::Config(
                "word vectors need the embedding_rnn feature source".into(),
            ));
        };
        let d = self.config.d;
        let table = self.params.get_mut(id);
        let mut hits = 0;
        for (i, w) in self.vocab.words().iter().enumerate() {
            if let Some(v) = vectors.get(w) {
                if v.len() != d {
                    return Err(Error::Data(format!(
                        "vector for {w:?} has width {}, expected {d}",
                        v.len()
                    )));
                }
                table.row_mut(i).copy_from_slice(v);
                hits += 1;
            }
        }
        Ok(hits)
    }

    /// `X^D` for `doc`: embedding rows (UNK for unknown tokens) or the
    /// precomputed matrix. Also returns the token ids used for lookup.
    pub fn token_features(
        &self,
        params: &ParamStore,
        doc: &TaggedDocument,
        features: Option<&FeatureStore>,
    ) -> Result<(Tensor, Option<Vec<usize>>)> {
        let d = self.config.d;
        match self.layout.embedding {
            Some(id) => {
                let table = params.get(id);
                let ids = self.vocab.ids(&doc.tokens);
                let mut x = Tensor::zeros(ids.len(), d);
                for (r, &t) in ids.iter().enumerate() {
                    x.row_mut(r).copy_from_slice(table.row(t));
                }
                Ok((x, Some(ids)))
            }
            None => {
                let t = features
                    .ok_or_else(|| {
                        Error::Data("precomputed features required but none loaded".into())
                    })?
                    .get(&doc.id)
                    .ok_or_else(|| {
                        Error::Data(format!("no precomputed features for document {:?}", doc.id))
                    })?;
                if t.cols() != d || t.rows() != doc.len() {
                    return Err(Error::Data(format!(
                        "features for {:?} are {:?}, expected {:?}",
                        doc.id,
                        t.shape(),
                        [doc.len(), d]
                    )));
                }
                Ok((t.clone(), None))
            }
        }
    }

    /// Full forward pass with parameters taken from `params`, which must
    /// share this model's layout.
    pub fn forward_with(
        &self,
        params: &ParamStore,
        doc: &TaggedDocument,
        spans: &[Span],
        features: Option<&FeatureStore>,
    ) -> Result<Forward> {
        let (x, token_ids) = self.token_features(params, doc, features)?;
        let l = &self.layout;
        let mut g = Graph::new();
        let tokens = g.leaf(x);
        let tf = l.token_fwd.bind(&mut g, params);
        let tb = l.token_bwd.bind(&mut g, params);
        let (token_fwd, token_bwd) = network::token_bilstm(&mut g, &tf, &tb, tokens)?;
        let span_rows = network::span_features(&mut g, token_fwd, token_bwd, spans)?;
        let pf = l.phrase_fwd.bind(&mut g, params);
        let pb = l.phrase_bwd.bind(&mut g, params);
        let phrases = network::phrase_bilstm(&mut g, &pf, &pb, span_rows)?;
        let (scores, logits) = network::score(&mut g, params, &l.head, phrases)?;
        Ok(Forward {
            graph: g,
            tokens,
            token_fwd,
            token_bwd,
            spans: span_rows,
            phrases,
            logits,
            scores,
            token_ids,
        })
    }

    pub fn forward(
        &self,
        doc: &TaggedDocument,
        spans: &[Span],
        features: Option<&FeatureStore>,
    ) -> Result<Forward> {
        self.forward_with(&self.params, doc, spans, features)
    }

    /// `h(x)` for each span, in input order. No spans, no scores.
    pub fn score(
        &self,
        doc: &TaggedDocument,
        spans: &[Span],
        features: Option<&FeatureStore>,
    ) -> Result<Vec<f64>> {
        if spans.is_empty() {
            return Ok(Vec::new());
        }
        let f = self.forward(doc, spans, features)?;
        Ok(f.graph.value(f.scores).data().to_vec())
    }

    /// Loss and per-parameter gradients for one document, or `None` when
    /// the document contributes nothing to the objective (no candidates,
    /// or no positive/negative pair under ranking).
    pub fn loss_with(
        &self,
        params: &ParamStore,
        doc: &TaggedDocument,
        candidates: &[LabeledCandidate],
        objective: Objective,
        features: Option<&FeatureStore>,
    ) -> Result<Option<(f64, Vec<Tensor>)>> {
        if candidates.is_empty() {
            return Ok(None);
        }
        let labels: Vec<Label> = candidates.iter().map(|c| c.label).collect();
        if let Objective::Ranking { .. } = objective {
            let pos = labels.iter().filter(|l| l.is_positive()).count();
            if pos == 0 || pos == labels.len() {
                return Ok(None);
            }
        }
        let spans: Vec<Span> = candidates.iter().map(|c| c.span).collect();
        let mut f = self.forward_with(params, doc, &spans, features)?;
        let loss = match objective {
            Objective::Classification { pos_weight } => f
                .graph
                .weighted_cross_entropy(f.scores, &labels, pos_weight)?,
            Objective::Ranking { margin } => f.graph.hinge(f.scores, &labels, margin)?,
        };
        let value = f.graph.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("loss on document {:?}", doc.id)));
        }
        let grads = f.graph.backward(loss)?;
        let mut out = f.graph.param_grads(&grads, params);
        if let (Some(id), Some(ids), Some(gx)) =
            (self.layout.embedding, &f.token_ids, grads.get(f.tokens))
        {
            let ge = &mut out[id.index()];
            for (r, &t) in ids.iter().enumerate() {
                for (a, b) in ge.row_mut(t).iter_mut().zip(gx.row(r)) {
                    *a += b;
                }
            }
        }
        Ok(Some((value, out)))
    }

    /// Finite-difference check of [`SkeModel::loss_with`] on one document.
    pub fn check_gradients(
        &self,
        doc: &TaggedDocument,
        candidates: &[LabeledCandidate],
        objective: Objective,
        features: Option<&FeatureStore>,
        cfg: &GradCheckConfig,
    ) -> Result<GradCheckReport> {
        let mut params = self.params.clone();
        grad_check(
            &mut params,
            |p| {
                self.loss_with(p, doc, candidates, objective, features)?
                    .ok_or_else(|| {
                        Error::Data(format!("document {:?} contributes no loss", doc.id))
                    })
            },
            cfg,
        )
    }

    pub fn loss(
        &self,
        doc: &TaggedDocument,
        candidates: &[LabeledCandidate],
        objective: Objective,
        features: Option<&FeatureStore>,
    ) -> Result<Option<(f64, Vec<Tensor>)>> {
        self.loss_with(&self.params, doc, candidates, objective, features)
    }
}

/// Five tokens, three candidates, one of them positive.
pub fn toy_document() -> TaggedDocument {
    let words = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
    TaggedDocument {
        id: "toy".into(),
        tokens: words("the ranking algorithm works well"),
        pos: words("DT VBG NN VBZ RB"),
        gold: vec![words("ranking algorithm")],
    }
}
