//! The scoring network, stage by stage. Every stage works on graph nodes so
//! the full chain from token features to loss is differentiable.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::candgen::Span;
use crate::error::{Error, Result};
use crate::tensor::lstm::{run_lstm, LstmVars};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Two logits per candidate, softmax, positive-class probability.
    Classification,
    /// One logit per candidate through a sigmoid.
    Ranking,
}

impl Head {
    pub fn outputs(self) -> usize {
        match self {
            Head::Classification => 2,
            Head::Ranking => 1,
        }
    }
}

/// Runs both directions over `x` (`L x in`). Returns the forward and
/// backward state sequences, each indexed by token position.
pub fn token_bilstm(g: &mut Graph, fwd: &LstmVars, bwd: &LstmVars, x: Var) -> Result<(Var, Var)> {
    Ok((run_lstm(g, fwd, x, false)?, run_lstm(g, bwd, x, true)?))
}

/// Builds one row per span from the boundary states:
/// `[fb, fe, bb, be, fb*fe, bb*be, fe-fb, bb-be]` where `f`/`b` are the
/// forward/backward states and the suffix picks the begin or end token.
pub fn span_features(g: &mut Graph, fwd: Var, bwd: Var, spans: &[Span]) -> Result<Var> {
    let len = g.value(fwd).rows();
    if g.value(bwd).shape() != g.value(fwd).shape() {
        return Err(Error::shape(
            "span_features",
            format!(
                "forward {:?} vs backward {:?}",
                g.value(fwd).shape(),
                g.value(bwd).shape()
            ),
        ));
    }
    for s in spans {
        s.check(len)?;
    }
    let begins: Vec<usize> = spans.iter().map(|s| s.begin).collect();
    let ends: Vec<usize> = spans.iter().map(|s| s.end).collect();
    let fb = g.gather_rows(fwd, &begins)?;
    let fe = g.gather_rows(fwd, &ends)?;
    let bb = g.gather_rows(bwd, &begins)?;
    let be = g.gather_rows(bwd, &ends)?;
    let f_prod = g.mul(fb, fe)?;
    let b_prod = g.mul(bb, be)?;
    let f_diff = g.sub(fe, fb)?;
    let b_diff = g.sub(bb, be)?;
    g.concat_cols(&[fb, fe, bb, be, f_prod, b_prod, f_diff, b_diff])
}

/// Bidirectional recurrence over the candidate rows of `s`, concatenated
/// as `[forward, backward]`.
pub fn phrase_bilstm(g: &mut Graph, fwd: &LstmVars, bwd: &LstmVars, s: Var) -> Result<Var> {
    let f = run_lstm(g, fwd, s, false)?;
    let b = run_lstm(g, bwd, s, true)?;
    g.concat_cols(&[f, b])
}

/// Output layer ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadParams {
    pub head: Head,
    /// `in x outputs`
    pub weight: ParamId,
    /// `1 x outputs`
    pub bias: ParamId,
}

impl HeadParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        head: Head,
        input_dim: usize,
        range: f64,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(
            "head.weight",
            Tensor::uniform(input_dim, head.outputs(), range, rng),
        );
        let bias = store.add("head.bias", Tensor::zeros(1, head.outputs()));
        HeadParams { head, weight, bias }
    }

    pub fn find(store: &ParamStore, head: Head, input_dim: usize) -> Result<Self> {
        let get = |name: &str| {
            store
                .find(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
        };
        let (weight, bias) = (get("head.weight")?, get("head.bias")?);
        if store.get(weight).shape() != [input_dim, head.outputs()]
            || store.get(bias).shape() != [1, head.outputs()]
        {
            return Err(Error::Checkpoint(format!(
                "head parameters {:?}/{:?} do not fit a {head:?} head over width {input_dim}",
                store.get(weight).shape(),
                store.get(bias).shape()
            )));
        }
        Ok(HeadParams { head, weight, bias })
    }
}

/// Per-candidate `h(x)` in (0, 1) as an `M x 1` column. Also returns the
/// raw logits (`M x 2` or `M x 1`).
pub fn score(g: &mut Graph, store: &ParamStore, head: &HeadParams, h: Var) -> Result<(Var, Var)> {
    let w = g.param(store, head.weight);
    let b = g.param(store, head.bias);
    let z = g.matmul(h, w)?;
    let logits = g.add_row(z, b)?;
    let probs = match head.head {
        Head::Classification => {
            let sm = g.softmax_rows(logits);
            g.slice_cols(sm, 1, 1)?
        }
        Head::Ranking => g.sigmoid(logits),
    };
    Ok((probs, logits))
}
