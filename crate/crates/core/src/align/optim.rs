//! AdamW with decoupled weight decay, and the linear warmup/decay schedule.

use super::adapter::{AdapterGrads, AdapterParams};
use super::{AlignError, TrainConfig};

/// Number of warmup steps: `ceil(warmup_ratio * total_steps)`.
pub fn warmup_steps(total_steps: usize, cfg: &TrainConfig) -> usize {
    ((cfg.warmup_ratio * total_steps as f64).ceil() as usize).min(total_steps)
}

/// Learning rate for 1-based `step`: linear ramp to `cfg.lr` at the end of
/// warmup, then linear decay to zero at `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> f64 {
    let warm = warmup_steps(total_steps, cfg);
    if step >= total_steps && total_steps > warm {
        return 0.0;
    }
    if step <= warm {
        if warm == 0 {
            return cfg.lr;
        }
        cfg.lr * step as f64 / warm as f64
    } else {
        cfg.lr * (total_steps - step) as f64 / (total_steps - warm) as f64
    }
}

#[allow(clippy::too_many_arguments)]
fn update(
    params: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    grads: &[f64],
    cfg: &TrainConfig,
    lr: f64,
    bias1: f64,
    bias2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        params[i] -= lr * cfg.weight_decay * params[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
}

/// One AdamW step at learning rate `lr`; advances the adapter's step counter.
pub fn adamw_step(
    adapter: &mut AdapterParams,
    grads: &AdapterGrads,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<(), AlignError> {
    if !grads.is_finite() {
        return Err(AlignError::NonFiniteGradient {
            step: adapter.step as usize + 1,
        });
    }
    adapter.step += 1;
    let t = adapter.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    update(
        &mut adapter.w,
        &mut adapter.m_w,
        &mut adapter.v_w,
        &grads.w,
        cfg,
        lr,
        bias1,
        bias2,
    );
    update(
        &mut adapter.b,
        &mut adapter.m_b,
        &mut adapter.v_b,
        &grads.b,
        cfg,
        lr,
        bias1,
        bias2,
    );
    Ok(())
}
