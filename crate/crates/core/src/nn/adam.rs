use super::model::{Gradients, ModelState};
use super::spec::TrainConfig;

/// Bias-corrected Adam update of one tensor at step `t` (1-based).
/// Weight decay, when non-zero, enters the gradient as an L2 term.
pub fn adam_update(value: &mut [f64], m: &mut [f64], v: &mut [f64], grad: &[f64], t: u64, cfg: &TrainConfig) {
    let t = i32::try_from(t).unwrap_or(i32::MAX);
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for j in 0..value.len() {
        let g = grad[j] + cfg.weight_decay * value[j];
        m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
        v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[j] / bc1;
        let v_hat = v[j] / bc2;
        value[j] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// One Adam step over every unfrozen parameter. The step counter advances
/// even when all gradients are zero.
pub fn adam_step(state: &mut ModelState, grads: &Gradients, cfg: &TrainConfig) {
    state.step += 1;
    let t = state.step;
    for i in 0..state.params.len() {
        if state.frozen[state.params[i].unit] {
            continue;
        }
        adam_update(
            &mut state.params[i].value,
            &mut state.adam_m[i],
            &mut state.adam_v[i],
            &grads.values[i],
            t,
            cfg,
        );
    }
    state.bump_generation();
}
