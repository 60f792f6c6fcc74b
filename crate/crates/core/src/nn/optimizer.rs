//! Adaptive-moment (Adam) parameter updates.

use super::{Error, Gradients, NetworkParams, Result};

/// Optimizer state: flat first/second moment estimates plus step count.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &NetworkParams, learning_rate: f64) -> Self {
        let n = params.param_count();
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update. Rejects non-finite gradients without touching `params`.
pub fn optimizer_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    state: &mut AdamState,
) -> Result<()> {
    let g = grads.flatten();
    if g.len() != state.m.len() {
        return Err(Error::DimensionMismatch(format!(
            "gradient has {} values, optimizer state has {}",
            g.len(),
            state.m.len()
        )));
    }
    if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient component {pos} is {}; step rejected",
            g[pos]
        )));
    }
    let mut flat = params.flatten();
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    for i in 0..flat.len() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        flat[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    params.set_from_flat(&flat)?;
    Ok(())
}
