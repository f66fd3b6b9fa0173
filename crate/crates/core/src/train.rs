//! Document-level minibatch training, best-epoch selection and the margin
//! grid search.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candgen::{labeled_candidates, LabeledCandidate, DEFAULT_MAX_PHRASE_LEN};
use crate::checkpoint::Checkpoint;
use crate::corpus::{Corpus, DEFAULT_MAX_DOC_LEN};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions};
use crate::model::{
    FeatureStore, Head, ModelConfig, Objective, SkeModel, TokenFeatureSource, Vocab,
};
use crate::tensor::optim::{AdamW, AdamWConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Classification,
    Ranking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SelectionMetric {
    #[serde(rename = "f1_at_5")]
    F1At5,
    #[serde(rename = "f1_at_10")]
    F1At10,
}

impl SelectionMetric {
    pub fn k(self) -> usize {
        match self {
            SelectionMetric::F1At5 => 5,
            SelectionMetric::F1At10 => 10,
        }
    }
}

/// Every training and model knob, as flat keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: ObjectiveKind,
    /// Output head; follows `objective` when unset.
    pub head: Option<Head>,
    pub pos_weight: f64,
    pub margin: f64,
    pub lr: f64,
    pub warmup_proportion: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub selection_metric: SelectionMetric,
    pub d: usize,
    pub max_phrase_len: usize,
    pub max_doc_len: usize,
    pub token_feature_source: TokenFeatureSource,
    pub freeze_embeddings: bool,
    pub init_range: f64,
    pub forget_bias: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: ObjectiveKind::Classification,
            head: None,
            pos_weight: 10.0,
            margin: 0.5,
            lr: 1e-3,
            warmup_proportion: 0.1,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 16,
            epochs: 50,
            seed: 42,
            selection_metric: SelectionMetric::F1At5,
            d: 64,
            max_phrase_len: DEFAULT_MAX_PHRASE_LEN,
            max_doc_len: DEFAULT_MAX_DOC_LEN,
            token_feature_source: TokenFeatureSource::EmbeddingRnn,
            freeze_embeddings: false,
            init_range: 0.1,
            forget_bias: 1.0,
        }
    }
}

impl TrainConfig {
    /// Reads a TOML file of flat `key = value` pairs; missing keys keep
    /// their defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `key=value` overrides. Values are read as TOML literals, and
    /// as plain strings when that fails (`objective=ranking`).
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut table = match toml::Value::try_from(self).expect("config serializes") {
            toml::Value::Table(t) => t,
            _ => unreachable!("config is a table"),
        };
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            let (key, raw) = (key.trim(), raw.trim());
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            table.insert(key.to_string(), value);
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
    }

    pub fn head(&self) -> Head {
        self.head.unwrap_or(match self.objective {
            ObjectiveKind::Classification => Head::Classification,
            ObjectiveKind::Ranking => Head::Ranking,
        })
    }

    pub fn objective(&self) -> Objective {
        match self.objective {
            ObjectiveKind::Classification => Objective::Classification {
                pos_weight: self.pos_weight,
            },
            ObjectiveKind::Ranking => Objective::Ranking {
                margin: self.margin,
            },
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            d: self.d,
            vocab_size,
            max_phrase_len: self.max_phrase_len,
            head: self.head(),
            token_feature_source: self.token_feature_source,
            freeze_embeddings: self.freeze_embeddings,
            init_range: self.init_range,
            forget_bias: self.forget_bias,
        }
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            warmup_proportion: self.warmup_proportion,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.margin) {
            return bad(format!("margin {} outside [0, 1]", self.margin));
        }
        if !(self.pos_weight.is_finite() && self.pos_weight > 0.0) {
            return bad(format!(
                "pos_weight must be positive, got {}",
                self.pos_weight
            ));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("lr must be non-negative, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.warmup_proportion) {
            return bad(format!(
                "warmup_proportion {} outside [0, 1]",
                self.warmup_proportion
            ));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)".into());
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return bad("adam_epsilon must be positive".into());
        }
        if self.max_doc_len == 0 {
            return bad("max_doc_len must be positive".into());
        }
        self.model_config(1).validate()
    }
}

/// Keeps documents with at least one positive candidate. Returns the kept
/// corpus and how many documents were dropped.
pub fn filter_trainable(corpus: &Corpus, max_phrase_len: usize) -> Result<(Corpus, usize)> {
    let mut kept = Vec::with_capacity(corpus.len());
    for doc in &corpus.documents {
        if labeled_candidates(doc, max_phrase_len)?
            .iter()
            .any(|c| c.label.is_positive())
        {
            kept.push(doc.clone());
        }
    }
    let dropped = corpus.len() - kept.len();
    Ok((
        Corpus {
            name: corpus.name.clone(),
            documents: kept,
        },
        dropped,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-document loss over documents that contributed.
    pub train_loss: f64,
    pub val_f1_at_5: f64,
    pub val_f1_at_10: f64,
    pub seconds: f64,
}

pub fn write_log(log: &[EpochLog], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text: String = log
        .iter()
        .map(|e| serde_json::to_string(e).expect("log serializes") + "\n")
        .collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Inputs besides the corpora and config.
#[derive(Default, Clone, Copy)]
pub struct TrainInputs<'a> {
    pub features: Option<&'a FeatureStore>,
    pub word_vectors: Option<&'a HashMap<String, Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best epoch.
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    pub kept: usize,
    pub dropped: usize,
}

struct Instance<'a> {
    doc: &'a crate::corpus::TaggedDocument,
    candidates: Vec<LabeledCandidate>,
}

/// Trains on `corpus` and returns the epoch with the best validation
/// metric. Without `val`, selection runs on `corpus` itself.
pub fn train(
    corpus: &Corpus,
    val: Option<&Corpus>,
    cfg: &TrainConfig,
    inputs: TrainInputs,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if let Some(val) = val {
        let ids: HashSet<&str> = corpus.documents.iter().map(|d| d.id.as_str()).collect();
        if let Some(d) = val.documents.iter().find(|d| ids.contains(d.id.as_str())) {
            return Err(Error::Data(format!(
                "document {:?} is in both the training and validation corpus",
                d.id
            )));
        }
    }
    let (trainable, dropped) = filter_trainable(corpus, cfg.max_phrase_len)?;
    if trainable.is_empty() {
        return Err(Error::Data(format!(
            "no trainable documents: none of the {} documents has a gold keyphrase among its candidates",
            corpus.len()
        )));
    }
    let objective = cfg.objective();
    let instances = trainable
        .documents
        .iter()
        .map(|doc| {
            Ok(Instance {
                doc,
                candidates: labeled_candidates(doc, cfg.max_phrase_len)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Objective::Ranking { .. } = objective {
        if !instances
            .iter()
            .any(|i| i.candidates.iter().any(|c| !c.label.is_positive()))
        {
            return Err(Error::Data(
                "ranking needs at least one document with a negative candidate".into(),
            ));
        }
    }

    let vocab = match cfg.token_feature_source {
        TokenFeatureSource::EmbeddingRnn => Vocab::from_corpus(corpus),
        TokenFeatureSource::Precomputed => Vocab::default(),
    };
    let mut model = SkeModel::new(cfg.model_config(vocab.len()), vocab, cfg.seed)?;
    if let Some(vectors) = inputs.word_vectors {
        let hits = model.init_embeddings(vectors)?;
        log::info!(
            "initialized {hits} of {} embedding rows from word vectors",
            model.vocab.len()
        );
    }

    let n_batches = instances.len().div_ceil(cfg.batch_size);
    let mut opt = AdamW::new(cfg.adamw(), &model.params, (n_batches * cfg.epochs) as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let select_on = val.unwrap_or(corpus);
    let eval_opts = EvalOptions {
        max_phrase_len: cfg.max_phrase_len,
        ..EvalOptions::default()
    };

    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, crate::tensor::ParamStore)> = None;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut contributing) = (0.0, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads: Vec<Tensor> = model.params.zeros_like();
            let (mut batch_loss, mut n) = (0.0, 0usize);
            for &i in batch {
                let inst = &instances[i];
                let res = model
                    .loss(inst.doc, &inst.candidates, objective, inputs.features)
                    .map_err(|e| match e {
                        Error::NonFinite(m) => {
                            Error::NonFinite(format!("epoch {epoch}, batch {b}: {m}"))
                        }
                        e => e,
                    })?;
                if let Some((l, g)) = res {
                    batch_loss += l;
                    n += 1;
                    for (acc, gi) in grads.iter_mut().zip(&g) {
                        acc.add_assign(gi);
                    }
                }
            }
            if n == 0 {
                continue;
            }
            let scale = 1.0 / n as f64;
            for g in &mut grads {
                g.scale(scale);
            }
            opt.step(&mut model.params, &grads).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}, batch {b}: {m}")),
                e => e,
            })?;
            loss_sum += batch_loss;
            contributing += n;
        }
        let train_loss = loss_sum / contributing.max(1) as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "epoch {epoch}: training loss {train_loss}"
            )));
        }
        let report = evaluate(&model, select_on, &eval_opts, inputs.features)?;
        let f5 = report.f1_at(5).unwrap_or(0.0);
        let f10 = report.f1_at(10).unwrap_or(0.0);
        let metric = match cfg.selection_metric {
            SelectionMetric::F1At5 => f5,
            SelectionMetric::F1At10 => f10,
        };
        if best.as_ref().is_none_or(|(m, _, _)| metric > *m) {
            best = Some((metric, epoch, model.params.clone()));
        }
        let entry = EpochLog {
            epoch,
            train_loss,
            val_f1_at_5: f5,
            val_f1_at_10: f10,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {train_loss:.6} f1@5 {f5:.4} f1@10 {f10:.4} ({:.2}s)",
            entry.seconds
        );
        log.push(entry);
    }

    let (val_metric, epoch, params) = best.expect("at least one epoch");
    model.params = params;
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model,
            train: cfg.clone(),
            epoch,
            val_metric,
        },
        log,
        kept: trainable.len(),
        dropped,
    })
}

#[derive(Debug, Clone)]
pub struct GridRun {
    pub margin: f64,
    pub metric: f64,
    pub epoch: usize,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub best: TrainConfig,
    pub checkpoint: Checkpoint,
    pub runs: Vec<GridRun>,
}

/// Trains once per margin and keeps the run with the highest validation
/// metric; equal metrics go to the smaller margin.
pub fn grid_search_margin(
    corpus: &Corpus,
    val: Option<&Corpus>,
    cfg: &TrainConfig,
    margins: &[f64],
    inputs: TrainInputs,
) -> Result<GridSearchOutcome> {
    if margins.is_empty() {
        return Err(Error::Config("margin grid is empty".into()));
    }
    if let Some(m) = margins.iter().find(|m| !(0.0..=1.0).contains(*m)) {
        return Err(Error::Config(format!("margin {m} outside [0, 1]")));
    }
    if cfg.objective != ObjectiveKind::Ranking {
        return Err(Error::Config(
            "margin search needs objective = ranking".into(),
        ));
    }
    let mut runs = Vec::with_capacity(margins.len());
    let mut best: Option<(f64, f64, Checkpoint)> = None;
    for &margin in margins {
        let run_cfg = TrainConfig {
            margin,
            ..cfg.clone()
        };
        let out = train(corpus, val, &run_cfg, inputs)?;
        let metric = out.checkpoint.val_metric;
        let better = match &best {
            None => true,
            Some((bm, bmargin, _)) => metric > *bm || (metric == *bm && margin < *bmargin),
        };
        runs.push(GridRun {
            margin,
            metric,
            epoch: out.checkpoint.epoch,
            log: out.log,
        });
        if better {
            best = Some((metric, margin, out.checkpoint));
        }
    }
    let (_, _, checkpoint) = best.expect("non-empty grid");
    Ok(GridSearchOutcome {
        best: checkpoint.train.clone(),
        checkpoint,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_literals_and_words() {
        let c = TrainConfig::default()
            .with_overrides(&[
                "objective=ranking",
                "margin=0.25",
                "epochs = 3",
                "freeze_embeddings=true",
            ])
            .unwrap();
        assert_eq!(c.objective, ObjectiveKind::Ranking);
        assert_eq!(c.margin, 0.25);
        assert_eq!(c.epochs, 3);
        assert!(c.freeze_embeddings);
        assert_eq!(c.head(), Head::Ranking);
        assert!(TrainConfig::default().with_overrides(&["nope=1"]).is_err());
        assert!(TrainConfig::default().with_overrides(&["epochs"]).is_err());
        assert!(TrainConfig::default()
            .with_overrides(&["epochs=many"])
            .is_err());
    }

    #[test]
    fn toml_roundtrip_and_partial() {
        let c = TrainConfig {
            head: Some(Head::Classification),
            objective: ObjectiveKind::Ranking,
            ..Default::default()
        };
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
        let p = TrainConfig::from_toml("lr = 0.01\nselection_metric = \"f1_at_10\"\n").unwrap();
        assert_eq!(p.lr, 0.01);
        assert_eq!(p.selection_metric, SelectionMetric::F1At10);
        assert_eq!(p.epochs, 50);
    }

    #[test]
    fn invalid_configs() {
        for o in [
            "batch_size=0",
            "epochs=0",
            "margin=1.5",
            "d=7",
            "pos_weight=0",
            "warmup_proportion=2",
        ] {
            let c = TrainConfig::default().with_overrides(&[o]).unwrap();
            assert!(c.validate().is_err(), "{o}");
        }
    }
}
