//! Adam with bias correction and a multistep learning-rate schedule.

use super::tape::ParamStore;
use super::tensor::Tensor;
use super::NumError;

/// Optimiser state, one pair of moment tensors per parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Canonical defaults apart from the learning rate.
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        AdamState {
            first: store.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            second: store.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update from the gradients currently in the store. Gradients are
/// zeroed afterwards.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState) -> Result<(), NumError> {
    if state.first.len() != store.len() {
        return Err(NumError::UninitializedState);
    }
    for (i, m) in state.first.iter().enumerate() {
        if m.shape() != store.value(i).shape() {
            return Err(NumError::UninitializedState);
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..store.len() {
        let grad = store.grad(i).clone();
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        for j in 0..grad.numel() {
            let g = grad.data()[j];
            m.data_mut()[j] = state.beta1 * m.data()[j] + (1.0 - state.beta1) * g;
            v.data_mut()[j] = state.beta2 * v.data()[j] + (1.0 - state.beta2) * g * g;
            let m_hat = m.data()[j] / bc1;
            let v_hat = v.data()[j] / bc2;
            store.value_mut(i).data_mut()[j] -= state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    store.zero_grads();
    Ok(())
}

/// Multistep decay: `lr(e) = base · gamma^(#milestones ≤ e)`.
#[derive(Debug, Clone)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub gamma: f64,
    pub milestones: Vec<u32>,
}

impl LrSchedule {
    pub fn new(base_lr: f64, gamma: f64, milestones: Vec<u32>) -> Self {
        LrSchedule {
            base_lr,
            gamma,
            milestones,
        }
    }

    pub fn lr_at(&self, epoch: u32) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.base_lr * self.gamma.powi(passed as i32)
    }
}
