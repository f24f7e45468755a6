use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autograd::{Matrix, ParamId, ParamStore, Tape, Var};

pub(crate) fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    let dist = Normal::new(0.0, std).expect("std must be finite and positive");
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormParams {
    pub(crate) fn new(store: &mut ParamStore, prefix: &str, width: usize) -> Self {
        Self {
            gamma: store.add(format!("{prefix}.gamma"), Array2::ones((1, width))),
            beta: store.add(format!("{prefix}.beta"), Array2::zeros((1, width))),
        }
    }

    pub(crate) fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let g = tape.param(self.gamma);
        let b = tape.param(self.beta);
        tape.layer_norm(x, g, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub(crate) fn new(store: &mut ParamStore, prefix: &str, inputs: usize, outputs: usize, std: f64, rng: &mut impl Rng) -> Self {
        Self {
            weight: store.add(format!("{prefix}.weight"), normal_matrix(rng, inputs, outputs, std)),
            bias: store.add(format!("{prefix}.bias"), Array2::zeros((1, outputs))),
        }
    }

    pub(crate) fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }

    fn zero(&self, store: &mut ParamStore) {
        store.get_mut(self.weight).fill(0.0);
        store.get_mut(self.bias).fill(0.0);
    }
}

/// Pre-norm transformer block: self-attention and a GELU feed-forward
/// network, each wrapped in a residual connection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerLayer {
    pub heads: usize,
    pub attn_norm: LayerNormParams,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub ff_norm: LayerNormParams,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

impl TransformerLayer {
    pub(crate) fn new(
        store: &mut ParamStore,
        prefix: &str,
        width: usize,
        heads: usize,
        ff_width: usize,
        std: f64,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(heads > 0 && width.is_multiple_of(heads), "width must divide into heads");
        Self {
            heads,
            attn_norm: LayerNormParams::new(store, &format!("{prefix}.attn_norm"), width),
            query: Linear::new(store, &format!("{prefix}.query"), width, width, std, rng),
            key: Linear::new(store, &format!("{prefix}.key"), width, width, std, rng),
            value: Linear::new(store, &format!("{prefix}.value"), width, width, std, rng),
            output: Linear::new(store, &format!("{prefix}.output"), width, width, std, rng),
            ff_norm: LayerNormParams::new(store, &format!("{prefix}.ff_norm"), width),
            ff_in: Linear::new(store, &format!("{prefix}.ff_in"), width, ff_width, std, rng),
            ff_out: Linear::new(store, &format!("{prefix}.ff_out"), ff_width, width, std, rng),
        }
    }

    /// Zeroes both residual branches so the layer is an exact identity.
    pub fn make_identity(&self, store: &mut ParamStore) {
        self.output.zero(store);
        self.ff_out.zero(store);
    }

    /// `x` is `tokens x width`; output has the same shape.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let width = tape.value(x).ncols();
        let head_width = width / self.heads;
        let scale = 1.0 / (head_width as f64).sqrt();

        let h = self.attn_norm.forward(tape, x);
        let q = self.query.forward(tape, h);
        let k = self.key.forward(tape, h);
        let v = self.value.forward(tape, h);
        let mut contexts = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let (start, end) = (head * head_width, (head + 1) * head_width);
            let qh = tape.slice_cols(q, start, end);
            let kh = tape.slice_cols(k, start, end);
            let vh = tape.slice_cols(v, start, end);
            let kt = tape.transpose(kh);
            let scores = tape.matmul(qh, kt);
            let scores = tape.scale(scores, scale);
            let weights = tape.softmax_rows(scores);
            contexts.push(tape.matmul(weights, vh));
        }
        let context = if contexts.len() == 1 { contexts[0] } else { tape.concat_cols(&contexts) };
        let attended = self.output.forward(tape, context);
        let x = tape.add(x, attended);

        let h = self.ff_norm.forward(tape, x);
        let f = self.ff_in.forward(tape, h);
        let f = tape.gelu(f);
        let f = self.ff_out.forward(tape, f);
        tape.add(x, f)
    }
}
