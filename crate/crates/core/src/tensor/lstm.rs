//! Standard LSTM cell on the tape.
//!
//! Gates are fused into one `4h`-wide block in the order input, forget,
//! cell candidate, output:
//!
//! ```text
//! z = x W + h_prev U + b
//! i = sigmoid(z[0..h])     f = sigmoid(z[h..2h])
//! g = tanh(z[2h..3h])      o = sigmoid(z[3h..4h])
//! c = f * c_prev + i * g
//! h = o * tanh(c)
//! ```

use rand::Rng;

use super::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_CANDIDATE: usize = 2;
pub const GATE_OUTPUT: usize = 3;

#[derive(Debug, Clone, Copy)]
pub struct LstmInit {
    /// Weights are drawn from `U(-range, range)`.
    pub range: f64,
    /// Initial value of the forget-gate bias block.
    pub forget_bias: f64,
}

impl Default for LstmInit {
    fn default() -> Self {
        LstmInit {
            range: 0.1,
            forget_bias: 1.0,
        }
    }
}

/// One direction's parameters, as ids into a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmParams {
    /// `input_dim x 4h`
    pub w_input: ParamId,
    /// `h x 4h`
    pub w_hidden: ParamId,
    /// `1 x 4h`
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        init: LstmInit,
        rng: &mut R,
    ) -> Self {
        let w_input = store.add(
            format!("{prefix}.w_input"),
            Tensor::uniform(input_dim, 4 * hidden_dim, init.range, rng),
        );
        let w_hidden = store.add(
            format!("{prefix}.w_hidden"),
            Tensor::uniform(hidden_dim, 4 * hidden_dim, init.range, rng),
        );
        let mut b = Tensor::zeros(1, 4 * hidden_dim);
        for v in &mut b.data_mut()[GATE_FORGET * hidden_dim..(GATE_FORGET + 1) * hidden_dim] {
            *v = init.forget_bias;
        }
        let bias = store.add(format!("{prefix}.bias"), b);
        LstmParams {
            w_input,
            w_hidden,
            bias,
            input_dim,
            hidden_dim,
        }
    }

    /// Looks the three tensors up by name and checks their shapes.
    pub fn find(store: &ParamStore, prefix: &str) -> Result<Self> {
        let get = |suffix: &str| {
            store
                .find(&format!("{prefix}.{suffix}"))
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {prefix}.{suffix}")))
        };
        let (w_input, w_hidden, bias) = (get("w_input")?, get("w_hidden")?, get("bias")?);
        let [input_dim, four_h] = store.get(w_input).shape();
        let hidden_dim = four_h / 4;
        if four_h % 4 != 0
            || store.get(w_hidden).shape() != [hidden_dim, four_h]
            || store.get(bias).shape() != [1, four_h]
        {
            return Err(Error::Checkpoint(format!(
                "inconsistent LSTM shapes under {prefix}"
            )));
        }
        Ok(LstmParams {
            w_input,
            w_hidden,
            bias,
            input_dim,
            hidden_dim,
        })
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> LstmVars {
        LstmVars {
            w_input: g.param(store, self.w_input),
            w_hidden: g.param(store, self.w_hidden),
            bias: g.param(store, self.bias),
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
        }
    }
}

/// [`LstmParams`] bound to graph nodes.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_input: Var,
    pub w_hidden: Var,
    pub bias: Var,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

/// One recurrence step from a `1 x input_dim` input.
pub fn lstm_step(
    g: &mut Graph,
    p: &LstmVars,
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    if g.value(x).shape() != [1, p.input_dim] {
        return Err(Error::shape(
            "lstm_step",
            format!(
                "input {:?}, expected [1, {}]",
                g.value(x).shape(),
                p.input_dim
            ),
        ));
    }
    let xw = g.matmul(x, p.w_input)?;
    let z = g.add_row(xw, p.bias)?;
    step_projected(g, p, z, h_prev, c_prev)
}

/// Step given `x W + b` already computed.
fn step_projected(
    g: &mut Graph,
    p: &LstmVars,
    xwb: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    let h = p.hidden_dim;
    for (name, v) in [("hidden", h_prev), ("cell", c_prev)] {
        if g.value(v).shape() != [1, h] {
            return Err(Error::shape(
                "lstm_step",
                format!("{name} state {:?}, expected [1, {h}]", g.value(v).shape()),
            ));
        }
    }
    let hu = g.matmul(h_prev, p.w_hidden)?;
    let z = g.add(xwb, hu)?;
    let zi = g.slice_cols(z, GATE_INPUT * h, h)?;
    let zf = g.slice_cols(z, GATE_FORGET * h, h)?;
    let zg = g.slice_cols(z, GATE_CANDIDATE * h, h)?;
    let zo = g.slice_cols(z, GATE_OUTPUT * h, h)?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let cand = g.tanh(zg);
    let o = g.sigmoid(zo);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h_new = g.mul(o, tc)?;
    Ok((h_new, c))
}

/// Runs over the rows of `inputs` (`T x input_dim`) from zero state, left to
/// right or right to left. Returns `T x hidden_dim` states indexed by input
/// position in both cases.
pub fn run_lstm(g: &mut Graph, p: &LstmVars, inputs: Var, reverse: bool) -> Result<Var> {
    let [steps, width] = g.value(inputs).shape();
    if width != p.input_dim {
        return Err(Error::shape(
            "run_lstm",
            format!(
                "inputs are {steps}x{width}, cell expects width {}",
                p.input_dim
            ),
        ));
    }
    if steps == 0 {
        return g.concat_rows(&[], p.hidden_dim);
    }
    let xw = g.matmul(inputs, p.w_input)?;
    let proj = g.add_row(xw, p.bias)?;
    let mut h = g.leaf(Tensor::zeros(1, p.hidden_dim));
    let mut c = g.leaf(Tensor::zeros(1, p.hidden_dim));
    let mut states = vec![h; steps];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..steps).rev())
    } else {
        Box::new(0..steps)
    };
    for t in order {
        let z = g.row(proj, t)?;
        (h, c) = step_projected(g, p, z, h, c)?;
        states[t] = h;
    }
    g.concat_rows(&states, p.hidden_dim)
}
