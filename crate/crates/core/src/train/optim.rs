use crate::autograd::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::TrainConfig;

/// Mean absolute difference and its gradient `sign(pred - target) / count`.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("l1_loss", target.shape(), pred.shape()));
    }
    let count = pred.len().max(1);
    let k = 1.0 / count as f32;
    let mut sum = 0.0f64;
    let grad: Vec<f32> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            sum += (p as f64 - t as f64).abs();
            if d > 0.0 {
                k
            } else if d < 0.0 {
                -k
            } else {
                0.0
            }
        })
        .collect();
    Ok((sum / count as f64, Tensor::from_vec(pred.shape(), grad)?))
}

/// First and second moment estimates for every parameter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store
            .iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update using the grads held in `store`.
pub fn adam_step(
    store: &mut ParamStore,
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be > 0, got {lr}"
        )));
    }
    if state.m.len() != store.len() {
        return Err(Error::InvalidArgument(format!(
            "optimizer state tracks {} parameters, store has {}",
            state.m.len(),
            store.len()
        )));
    }
    for p in store.iter() {
        if !p.grad.all_finite() {
            return Err(Error::NonFinite(format!("gradient of {}", p.name())));
        }
    }
    state.t += 1;
    let (b1, b2) = cfg.betas;
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);
    let step = (lr / bc1) as f32;
    let bc2_sqrt = bc2.sqrt() as f32;
    let eps = cfg.eps as f32;
    let (b1, b2) = (b1 as f32, b2 as f32);

    for ((p, m), v) in store.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let values = p.value.data_mut();
        let grads = p.grad.data();
        for (((w, &g), mi), vi) in values
            .iter_mut()
            .zip(grads)
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * g;
            *vi = b2 * *vi + (1.0 - b2) * g * g;
            // lr * m_hat / (sqrt(v_hat) + eps)
            *w -= step * *mi / (vi.sqrt() / bc2_sqrt + eps);
        }
    }
    Ok(())
}

/// Cosine annealing from `lr_max` to `lr_min` over each restart period, with
/// `epoch_progress` in (possibly fractional) epochs.
pub fn lr_at(epoch_progress: f64, cfg: &TrainConfig) -> f64 {
    let period = cfg.restart_period_epochs.max(1) as f64;
    let phase = epoch_progress.max(0.0).rem_euclid(period) / period;
    cfg.lr_min + (cfg.lr_max - cfg.lr_min) * (1.0 + (std::f64::consts::PI * phase).cos()) / 2.0
}
