//! Forward caching and backpropagation(-through-time).
//!
//! The loss is the mean binary cross-entropy over a batch. The head gradient
//! is seeded directly at the sigmoid pre-activation as `(p - y)`, which is
//! exact for the unclamped loss and stays stable when `p` saturates.

use super::{
    DropoutMask, Error, LayerParams, LstmParams, NetworkParams, Result,
    SequenceBatch,
};

/// Gradients of the mean batch loss; same structure as [`NetworkParams`].
#[derive(Debug, Clone)]
pub struct Gradients(pub NetworkParams);

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.0.flatten()
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }
}

enum LayerCache {
    Dense {
        x: Vec<f64>,
        z: Vec<f64>,
    },
    Lstm {
        x: Vec<f64>,
        h_prev: Vec<f64>,
        c_prev: Vec<f64>,
        gate_i: Vec<f64>,
        gate_f: Vec<f64>,
        gate_g: Vec<f64>,
        gate_o: Vec<f64>,
        tanh_c: Vec<f64>,
    },
}

pub(crate) struct Cache {
    steps: Vec<Vec<LayerCache>>,
}

fn check_inputs(
    params: &NetworkParams,
    sequence: &[Vec<f64>],
    valid_len: usize,
    mask: &DropoutMask,
) -> Result<()> {
    if valid_len == 0 {
        return Err(Error::DimensionMismatch("valid_len must be >= 1".into()));
    }
    if valid_len > sequence.len() {
        return Err(Error::DimensionMismatch(format!(
            "valid_len {} exceeds sequence length {}",
            valid_len,
            sequence.len()
        )));
    }
    for (t, row) in sequence.iter().enumerate().take(valid_len) {
        if row.len() != params.spec.input {
            return Err(Error::DimensionMismatch(format!(
                "timestep {} has width {}, expected {}",
                t,
                row.len(),
                params.spec.input
            )));
        }
    }
    if !mask.matches(params) {
        return Err(Error::DimensionMismatch(
            "dropout mask does not match network layers".into(),
        ));
    }
    Ok(())
}

/// Runs the network over the first `valid_len` timesteps, optionally caching
/// every intermediate needed for backpropagation.
pub(crate) fn forward_pass(
    params: &NetworkParams,
    sequence: &[Vec<f64>],
    valid_len: usize,
    mask: &DropoutMask,
    want_cache: bool,
) -> Result<(f64, Option<Cache>)> {
    check_inputs(params, sequence, valid_len, mask)?;
    let p_keep = mask.p_keep;

    // Recurrent state per layer: (post-dropout hidden, cell), LSTM only.
    let mut state: Vec<Option<(Vec<f64>, Vec<f64>)>> = params
        .layers
        .iter()
        .map(|layer| match layer {
            LayerParams::Lstm(l) => Some((vec![0.0; l.hidden], vec![0.0; l.hidden])),
            LayerParams::Dense { .. } => None,
        })
        .collect();

    let mut steps = Vec::new();
    let mut output = 0.0;
    for t in 0..valid_len {
        let mut x = sequence[t].clone();
        let mut step_cache = Vec::new();
        for (k, layer) in params.layers.iter().enumerate() {
            match layer {
                LayerParams::Dense { w, b, activation } => {
                    let mut z = vec![0.0; b.len()];
                    w.matvec(&x, &mut z);
                    for (zi, bi) in z.iter_mut().zip(b) {
                        *zi += bi;
                    }
                    let mut a: Vec<f64> = z.iter().map(|&zi| activation.apply(zi)).collect();
                    if let Some(m) = &mask.layers[k] {
                        for (ai, mi) in a.iter_mut().zip(m) {
                            *ai *= mi / p_keep;
                        }
                    }
                    if want_cache {
                        step_cache.push(LayerCache::Dense { x: x.clone(), z });
                    }
                    x = a;
                }
                LayerParams::Lstm(l) => {
                    let (h_prev, c_prev) = state[k].as_ref().expect("lstm state").clone();
                    let mut gates = [(); 4].map(|_| vec![0.0; l.hidden]);
                    let mut tmp = vec![0.0; l.hidden];
                    for g in 0..4 {
                        l.w[g].matvec(&x, &mut gates[g]);
                        l.u[g].matvec(&h_prev, &mut tmp);
                        for ((zg, ti), bi) in gates[g].iter_mut().zip(&tmp).zip(&l.b[g]) {
                            *zg += ti + bi;
                        }
                    }
                    let gate_i: Vec<f64> = gates[0].iter().map(|&z| super::sigmoid(z)).collect();
                    let gate_f: Vec<f64> = gates[1].iter().map(|&z| super::sigmoid(z)).collect();
                    let gate_g: Vec<f64> = gates[2].iter().map(|&z| z.tanh()).collect();
                    let gate_o: Vec<f64> = gates[3].iter().map(|&z| super::sigmoid(z)).collect();
                    let c: Vec<f64> = (0..l.hidden)
                        .map(|j| gate_f[j] * c_prev[j] + gate_i[j] * gate_g[j])
                        .collect();
                    let tanh_c: Vec<f64> = c.iter().map(|&v| v.tanh()).collect();
                    let mut h: Vec<f64> = (0..l.hidden).map(|j| gate_o[j] * tanh_c[j]).collect();
                    if let Some(m) = &mask.layers[k] {
                        for (hj, mj) in h.iter_mut().zip(m) {
                            *hj *= mj / p_keep;
                        }
                    }
                    if want_cache {
                        step_cache.push(LayerCache::Lstm {
                            x: x.clone(),
                            h_prev: h_prev.clone(),
                            c_prev,
                            gate_i: gate_i.clone(),
                            gate_f: gate_f.clone(),
                            gate_g: gate_g.clone(),
                            gate_o: gate_o.clone(),
                            tanh_c,
                        });
                    }
                    state[k] = Some((h.clone(), c));
                    x = h;
                }
            }
        }
        output = x[0];
        if want_cache {
            steps.push(step_cache);
        }
    }
    let cache = want_cache.then_some(Cache { steps });
    Ok((output, cache))
}

/// Mean binary cross-entropy of `params` over `batch` under a fixed mask.
pub fn batch_loss(
    params: &NetworkParams,
    batch: &SequenceBatch,
    mask: &DropoutMask,
) -> Result<f64> {
    if batch.examples.is_empty() {
        return Err(Error::Empty("batch".into()));
    }
    let mut total = 0.0;
    for ex in &batch.examples {
        let (p, _) = forward_pass(params, &ex.features, ex.valid_len, mask, false)?;
        total += super::bce_loss(p, ex.label);
    }
    Ok(total / batch.examples.len() as f64)
}

/// Gradients of the mean batch BCE loss via backpropagation through time.
pub fn backward(
    params: &NetworkParams,
    batch: &SequenceBatch,
    mask: &DropoutMask,
) -> Result<Gradients> {
    backward_with_loss(params, batch, mask).map(|(g, _)| g)
}

/// Like [`backward`], but also returns the mean batch loss from the same
/// forward passes.
pub fn backward_with_loss(
    params: &NetworkParams,
    batch: &SequenceBatch,
    mask: &DropoutMask,
) -> Result<(Gradients, f64)> {
    if batch.examples.is_empty() {
        return Err(Error::Empty("batch".into()));
    }
    let mut grads = Gradients(params.zeroed_like());
    let scale = 1.0 / batch.examples.len() as f64;
    let mut loss = 0.0;
    for ex in &batch.examples {
        let (p, cache) = forward_pass(params, &ex.features, ex.valid_len, mask, true)?;
        let cache = cache.expect("cache requested");
        loss += super::bce_loss(p, ex.label) * scale;
        backward_example(params, mask, &cache, p, ex.label, scale, &mut grads.0)?;
    }
    Ok((grads, loss))
}

fn backward_example(
    params: &NetworkParams,
    mask: &DropoutMask,
    cache: &Cache,
    prediction: f64,
    label: f64,
    scale: f64,
    grads: &mut NetworkParams,
) -> Result<()> {
    let n_layers = params.layers.len();
    let steps = cache.steps.len();
    let p_keep = mask.p_keep;

    // Recurrent carries: gradient into (post-dropout hidden, cell) of step t-1.
    let mut carry: Vec<Option<(Vec<f64>, Vec<f64>)>> = params
        .layers
        .iter()
        .map(|layer| match layer {
            LayerParams::Lstm(l) => Some((vec![0.0; l.hidden], vec![0.0; l.hidden])),
            LayerParams::Dense { .. } => None,
        })
        .collect();

    for t in (0..steps).rev() {
        // Gradient w.r.t. the current layer's emitted output; starts above the head.
        let mut g_above: Vec<f64> = vec![if t + 1 == steps { 1.0 } else { 0.0 }];
        for k in (0..n_layers).rev() {
            let layer = &params.layers[k];
            let layer_cache = &cache.steps[t][k];
            match (layer, layer_cache) {
                (LayerParams::Dense { w, b: _, activation }, LayerCache::Dense { x, z }) => {
                    let is_head = k + 1 == n_layers;
                    let dz: Vec<f64> = if is_head {
                        // d(mean BCE)/dz for the sigmoid head; zero off the final step.
                        vec![g_above[0] * (prediction - label) * scale]
                    } else {
                        let m = mask.layers[k].as_ref().expect("hidden layer mask");
                        g_above
                            .iter()
                            .zip(m)
                            .zip(z)
                            .map(|((&g, &mi), &zi)| g * (mi / p_keep) * activation.derivative(zi))
                            .collect()
                    };
                    let (gw, gb) = match &mut grads.layers[k] {
                        LayerParams::Dense { w, b, .. } => (w, b),
                        _ => unreachable!("gradient layout mirrors params"),
                    };
                    gw.add_outer(&dz, x);
                    for (gbi, dzi) in gb.iter_mut().zip(&dz) {
                        *gbi += dzi;
                    }
                    let mut g_down = vec![0.0; w.cols];
                    w.add_tmatvec(&dz, &mut g_down);
                    g_above = g_down;
                }
                (LayerParams::Lstm(l), LayerCache::Lstm { .. }) => {
                    g_above = backward_lstm_step(
                        l,
                        mask.layers[k].as_ref().expect("lstm mask"),
                        p_keep,
                        layer_cache,
                        &g_above,
                        carry[k].as_mut().expect("lstm carry"),
                        match &mut grads.layers[k] {
                            LayerParams::Lstm(g) => g,
                            _ => unreachable!("gradient layout mirrors params"),
                        },
                    );
                }
                _ => unreachable!("cache layout mirrors params"),
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn backward_lstm_step(
    l: &LstmParams,
    m: &[f64],
    p_keep: f64,
    layer_cache: &LayerCache,
    g_above: &[f64],
    carry: &mut (Vec<f64>, Vec<f64>),
    grads: &mut LstmParams,
) -> Vec<f64> {
    let LayerCache::Lstm {
        x,
        h_prev,
        c_prev,
        gate_i,
        gate_f,
        gate_g,
        gate_o,
        tanh_c,
    } = layer_cache
    else {
        unreachable!("cache layout mirrors params")
    };
    let h = l.hidden;
    let (carry_dh, carry_dc) = carry;

    // Gradient into the post-dropout hidden state, then through the mask.
    let dh: Vec<f64> = (0..h)
        .map(|j| (g_above[j] + carry_dh[j]) * (m[j] / p_keep))
        .collect();
    let dc: Vec<f64> = (0..h)
        .map(|j| dh[j] * gate_o[j] * (1.0 - tanh_c[j] * tanh_c[j]) + carry_dc[j])
        .collect();

    let dz_i: Vec<f64> = (0..h)
        .map(|j| dc[j] * gate_g[j] * gate_i[j] * (1.0 - gate_i[j]))
        .collect();
    let dz_f: Vec<f64> = (0..h)
        .map(|j| dc[j] * c_prev[j] * gate_f[j] * (1.0 - gate_f[j]))
        .collect();
    let dz_g: Vec<f64> = (0..h)
        .map(|j| dc[j] * gate_i[j] * (1.0 - gate_g[j] * gate_g[j]))
        .collect();
    let dz_o: Vec<f64> = (0..h)
        .map(|j| dh[j] * tanh_c[j] * gate_o[j] * (1.0 - gate_o[j]))
        .collect();
    let dzs = [&dz_i, &dz_f, &dz_g, &dz_o];

    let mut g_down = vec![0.0; l.w[0].cols];
    let mut next_dh = vec![0.0; h];
    for g in 0..4 {
        grads.w[g].add_outer(dzs[g], x);
        grads.u[g].add_outer(dzs[g], h_prev);
        for (gb, dz) in grads.b[g].iter_mut().zip(dzs[g]) {
            *gb += dz;
        }
        l.w[g].add_tmatvec(dzs[g], &mut g_down);
        l.u[g].add_tmatvec(dzs[g], &mut next_dh);
    }
    *carry_dh = next_dh;
    *carry_dc = (0..h).map(|j| dc[j] * gate_f[j]).collect();
    g_down
}
