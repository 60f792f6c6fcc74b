//! Minimal dense/recurrent network core for collision prediction.
//!
//! Networks are stacks of fully-connected layers and single LSTM layers,
//! ending in a one-unit sigmoid head that emits a collision probability.
//! Variable-length histories are handled by masking: recurrent state is
//! updated only for timesteps within an example's valid length, so padding
//! never changes the output.
//!
//! Dropout follows the variational convention: one mask per forward pass,
//! shared across all timesteps, applied to LSTM hidden-state outputs and to
//! hidden fully-connected activations (never the output head). Masked values
//! are rescaled by `1/p_keep` so expectations match the mask-free network.

mod backprop;
mod checkpoint;
mod optimizer;

pub use backprop::{backward, backward_with_loss, batch_loss, Gradients};
pub use checkpoint::{load_params, save_params, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use optimizer::{optimizer_step, AdamState};

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Names of the four LSTM gates, in storage order.
pub const GATE_NAMES: [&str; 4] = ["input", "forget", "cell", "output"];
const GATE_FORGET: usize = 1;

/// Default hidden width of the collision-prediction LSTM.
pub const DEFAULT_HIDDEN_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Dense { units: usize, activation: Activation },
    Lstm { units: usize },
}

impl LayerSpec {
    pub fn units(&self) -> usize {
        match self {
            LayerSpec::Dense { units, .. } | LayerSpec::Lstm { units } => *units,
        }
    }
}

/// Shape of a network: input width plus an ordered layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Collision-predictor shape: `input -> LSTM(hidden) -> 1 (sigmoid)`.
    pub fn lstm_predictor(input: usize, hidden: usize) -> Self {
        NetworkSpec {
            input,
            layers: vec![
                LayerSpec::Lstm { units: hidden },
                LayerSpec::Dense {
                    units: 1,
                    activation: Activation::Sigmoid,
                },
            ],
        }
    }

    /// Feed-forward predictor: `input -> hidden... (tanh) -> 1 (sigmoid)`.
    pub fn mlp_predictor(input: usize, hidden: &[usize]) -> Self {
        let mut layers: Vec<LayerSpec> = hidden
            .iter()
            .map(|&units| LayerSpec::Dense {
                units,
                activation: Activation::Tanh,
            })
            .collect();
        layers.push(LayerSpec::Dense {
            units: 1,
            activation: Activation::Sigmoid,
        });
        NetworkSpec { input, layers }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 {
            return Err(Error::InvalidSpec("input width must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidSpec("at least one layer required".into()));
        }
        for (idx, layer) in self.layers.iter().enumerate() {
            if layer.units() == 0 {
                return Err(Error::InvalidSpec(format!(
                    "layer {idx} has zero units"
                )));
            }
        }
        match self.layers.last() {
            Some(LayerSpec::Dense { units: 1, .. }) => Ok(()),
            _ => Err(Error::InvalidSpec(
                "final layer must be a one-unit dense head".into(),
            )),
        }
    }

    /// Input width of each layer, derived from the preceding layer's units.
    pub fn layer_inputs(&self) -> Vec<usize> {
        let mut widths = Vec::with_capacity(self.layers.len());
        let mut prev = self.input;
        for layer in &self.layers {
            widths.push(prev);
            prev = layer.units();
        }
        widths
    }
}

/// Dense row-major matrix, `rows` outputs by `cols` inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// y = M x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            y[r] = acc;
        }
    }

    /// y += Mᵀ d  (gradient flowing back through M)
    pub fn add_tmatvec(&self, d: &[f64], y: &mut [f64]) {
        debug_assert_eq!(d.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let dr = d[r];
            for (yc, w) in y.iter_mut().zip(row) {
                *yc += w * dr;
            }
        }
    }

    /// M += d xᵀ  (outer-product accumulation)
    pub fn add_outer(&mut self, d: &[f64], x: &[f64]) {
        debug_assert_eq!(d.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            let dr = d[r];
            for (w, xi) in row.iter_mut().zip(x) {
                *w += dr * xi;
            }
        }
    }
}

/// Parameters of one LSTM layer: per-gate input-to-hidden and
/// hidden-to-hidden weight blocks plus gate biases, gate order
/// `[input, forget, cell, output]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w: [Matrix; 4],
    pub u: [Matrix; 4],
    pub b: [Vec<f64>; 4],
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerParams {
    Dense {
        w: Matrix,
        b: Vec<f64>,
        activation: Activation,
    },
    Lstm(LstmParams),
}

/// All trainable parameters of a network, shaped by its [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub spec: NetworkSpec,
    pub layers: Vec<LayerParams>,
}

fn init_matrix(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Matrix { rows, cols, data }
}

/// Output-head weights start at a tenth of the Xavier bound so freshly
/// initialized predictors emit near-0.5 probabilities with little spread;
/// untrained nets must look uninformative rather than confidently random.
const HEAD_INIT_SCALE: f64 = 0.1;

/// Initialize parameters for `spec`, deterministically from `seed`.
///
/// Weight blocks are uniform in `±sqrt(6/(fan_in+fan_out))` (the output head
/// additionally scaled by [`HEAD_INIT_SCALE`]); biases are zero except the
/// LSTM forget-gate bias, which starts at 1.0.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<NetworkParams> {
    spec.validate()?;
    let mut rng = crate::rng::substream(seed, "init-params", 0);
    let inputs = spec.layer_inputs();
    let mut layers = Vec::with_capacity(spec.layers.len());
    let last = spec.layers.len() - 1;
    for (k, (layer, &fan_in)) in spec.layers.iter().zip(&inputs).enumerate() {
        match layer {
            LayerSpec::Dense { units, activation } => {
                let mut w = init_matrix(*units, fan_in, fan_in, *units, &mut rng);
                if k == last {
                    for v in &mut w.data {
                        *v *= HEAD_INIT_SCALE;
                    }
                }
                layers.push(LayerParams::Dense {
                    w,
                    b: vec![0.0; *units],
                    activation: *activation,
                });
            }
            LayerSpec::Lstm { units } => {
                let h = *units;
                let w = [
                    init_matrix(h, fan_in, fan_in, h, &mut rng),
                    init_matrix(h, fan_in, fan_in, h, &mut rng),
                    init_matrix(h, fan_in, fan_in, h, &mut rng),
                    init_matrix(h, fan_in, fan_in, h, &mut rng),
                ];
                let u = [
                    init_matrix(h, h, h, h, &mut rng),
                    init_matrix(h, h, h, h, &mut rng),
                    init_matrix(h, h, h, h, &mut rng),
                    init_matrix(h, h, h, h, &mut rng),
                ];
                let mut b = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
                b[GATE_FORGET] = vec![1.0; h];
                layers.push(LayerParams::Lstm(LstmParams { w, u, b, hidden: h }));
            }
        }
    }
    let params = NetworkParams {
        spec: spec.clone(),
        layers,
    };
    debug_assert!(params.is_finite());
    Ok(params)
}

impl NetworkParams {
    /// Same shapes as `self`, all values zero. Used for gradients and moments.
    pub fn zeroed_like(&self) -> NetworkParams {
        let layers = self
            .layers
            .iter()
            .map(|layer| match layer {
                LayerParams::Dense { w, b, activation } => LayerParams::Dense {
                    w: Matrix::zeros(w.rows, w.cols),
                    b: vec![0.0; b.len()],
                    activation: *activation,
                },
                LayerParams::Lstm(l) => LayerParams::Lstm(LstmParams {
                    w: [
                        Matrix::zeros(l.w[0].rows, l.w[0].cols),
                        Matrix::zeros(l.w[1].rows, l.w[1].cols),
                        Matrix::zeros(l.w[2].rows, l.w[2].cols),
                        Matrix::zeros(l.w[3].rows, l.w[3].cols),
                    ],
                    u: [
                        Matrix::zeros(l.u[0].rows, l.u[0].cols),
                        Matrix::zeros(l.u[1].rows, l.u[1].cols),
                        Matrix::zeros(l.u[2].rows, l.u[2].cols),
                        Matrix::zeros(l.u[3].rows, l.u[3].cols),
                    ],
                    b: [
                        vec![0.0; l.b[0].len()],
                        vec![0.0; l.b[1].len()],
                        vec![0.0; l.b[2].len()],
                        vec![0.0; l.b[3].len()],
                    ],
                    hidden: l.hidden,
                }),
            })
            .collect();
        NetworkParams {
            spec: self.spec.clone(),
            layers,
        }
    }

    /// Named tensor views in canonical (flattening) order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerParams::Dense { w, b, .. } => {
                    out.push((format!("layer{k}.dense.w"), vec![w.rows, w.cols], &w.data[..]));
                    out.push((format!("layer{k}.dense.b"), vec![b.len()], &b[..]));
                }
                LayerParams::Lstm(l) => {
                    for (g, name) in GATE_NAMES.iter().enumerate() {
                        out.push((
                            format!("layer{k}.lstm.w_{name}"),
                            vec![l.w[g].rows, l.w[g].cols],
                            &l.w[g].data[..],
                        ));
                        out.push((
                            format!("layer{k}.lstm.u_{name}"),
                            vec![l.u[g].rows, l.u[g].cols],
                            &l.u[g].data[..],
                        ));
                        out.push((format!("layer{k}.lstm.b_{name}"), vec![l.b[g].len()], &l.b[g][..]));
                    }
                }
            }
        }
        out
    }

    fn for_each_slice_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        for layer in &mut self.layers {
            match layer {
                LayerParams::Dense { w, b, .. } => {
                    f(&mut w.data);
                    f(b);
                }
                LayerParams::Lstm(l) => {
                    for g in 0..4 {
                        f(&mut l.w[g].data);
                        f(&mut l.u[g].data);
                        f(&mut l.b[g]);
                    }
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    /// All parameters concatenated in canonical order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for (_, _, data) in self.tensors() {
            flat.extend_from_slice(data);
        }
        flat
    }

    /// Overwrite all parameters from a flat vector in canonical order.
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "flat vector has {} values, network has {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut cursor = 0;
        self.for_each_slice_mut(|slice| {
            slice.copy_from_slice(&flat[cursor..cursor + slice.len()]);
            cursor += slice.len();
        });
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, data)| data.iter().all(|v| v.is_finite()))
    }
}

/// Per-unit keep indicators (exactly 0 or 1) for each masked layer.
///
/// Every layer except the output head is masked. The mask is fixed for the
/// duration of one forward (or forward/backward) pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub layers: Vec<Option<Vec<f64>>>,
    pub p_keep: f64,
}

impl DropoutMask {
    /// All-ones mask: forward becomes a deterministic function of the inputs.
    pub fn ones(params: &NetworkParams) -> DropoutMask {
        let n = params.layers.len();
        let layers = params
            .layers
            .iter()
            .enumerate()
            .map(|(k, layer)| {
                if k + 1 == n {
                    None
                } else {
                    let units = match layer {
                        LayerParams::Dense { b, .. } => b.len(),
                        LayerParams::Lstm(l) => l.hidden,
                    };
                    Some(vec![1.0; units])
                }
            })
            .collect();
        DropoutMask { layers, p_keep: 1.0 }
    }

    pub fn matches(&self, params: &NetworkParams) -> bool {
        if self.layers.len() != params.layers.len() {
            return false;
        }
        let n = params.layers.len();
        self.layers.iter().zip(&params.layers).enumerate().all(
            |(k, (mask, layer))| match mask {
                None => k + 1 == n,
                Some(m) => {
                    k + 1 != n
                        && m.len()
                            == match layer {
                                LayerParams::Dense { b, .. } => b.len(),
                                LayerParams::Lstm(l) => l.hidden,
                            }
                }
            },
        )
    }
}

/// Sample a dropout mask: each unit kept independently with `p_keep`.
pub fn sample_dropout_mask(
    params: &NetworkParams,
    p_keep: f64,
    rng: &mut impl Rng,
) -> Result<DropoutMask> {
    if !(p_keep > 0.0 && p_keep <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "p_keep must be in (0, 1], got {p_keep}"
        )));
    }
    let mut mask = DropoutMask::ones(params);
    mask.p_keep = p_keep;
    if p_keep < 1.0 {
        for layer in mask.layers.iter_mut().flatten() {
            for keep in layer.iter_mut() {
                *keep = if rng.gen::<f64>() < p_keep { 1.0 } else { 0.0 };
            }
        }
    }
    Ok(mask)
}

/// One padded training sequence with its valid length and collision label.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceExample {
    pub features: Vec<Vec<f64>>,
    pub valid_len: usize,
    pub label: f64,
}

/// A minibatch of sequences.
#[derive(Debug, Clone, Default)]
pub struct SequenceBatch {
    pub examples: Vec<SequenceExample>,
}

/// Forward pass: collision probability for one (possibly padded) sequence.
///
/// Recurrent and dense state advance only for `t < valid_len`; padded
/// timesteps are skipped entirely, so the output depends on the first
/// `valid_len` timesteps alone. The returned value is the sigmoid head's
/// activation at the last valid timestep, always in `[0, 1]`.
pub fn forward(
    params: &NetworkParams,
    sequence: &[Vec<f64>],
    valid_len: usize,
    mask: &DropoutMask,
) -> Result<f64> {
    let (out, _) = backprop::forward_pass(params, sequence, valid_len, mask, false)?;
    Ok(out)
}

/// Binary cross-entropy with predictions clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(prediction: f64, label: f64) -> f64 {
    let p = prediction.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

pub(crate) const BCE_CLAMP: f64 = 1e-7;
