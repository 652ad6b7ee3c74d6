//! Full-batch Adam training of the fine-scale network.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::nnet::{MlpNet, Workspace};
use crate::objective::LossAccumulator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("loss became non-finite ({loss}) at epoch {epoch}")]
    NonFinite { epoch: usize, loss: f64 },
    #[error("invalid training configuration: {0}")]
    Config(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 1000, learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, seed: 0, log_every: 100 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::Config("learning_rate must be positive"));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(TrainError::Config("beta1 and beta2 must lie in (0, 1)"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(TrainError::Config("epsilon must be positive"));
        }
        if self.log_every == 0 {
            return Err(TrainError::Config("log_every must be positive"));
        }
        Ok(())
    }
}

/// First and second moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    beta1_pow: f64,
    beta2_pow: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], step: 0, beta1_pow: 1.0, beta2_pow: 1.0 }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, config: &TrainConfig) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    state.beta1_pow *= config.beta1;
    state.beta2_pow *= config.beta2;
    let c1 = 1.0 - state.beta1_pow;
    let c2 = 1.0 - state.beta2_pow;
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= config.learning_rate * m_hat / (libm::sqrt(v_hat) + config.epsilon);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub epoch: usize,
    pub loss: f64,
    pub l2_error: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.last().map(|r| r.loss)
    }
}

/// Runs `config.epochs` full-batch Adam steps on every sample of `acc`.
///
/// The trace holds the loss before the update at every `log_every`-th epoch
/// and the loss of the final parameters at epoch `epochs`. `probe`, when
/// given, is evaluated at the same instants.
pub fn train(
    net: MlpNet,
    acc: &LossAccumulator,
    config: &TrainConfig,
    mut probe: Option<&mut dyn FnMut(&MlpNet) -> f64>,
) -> Result<(MlpNet, TrainTrace), TrainError> {
    config.validate()?;
    let mut net = net;
    let mut ws = Workspace::new(&net);
    let mut grad = vec![0.0; net.count_params()];
    let mut state = AdamState::new(net.count_params());
    let mut trace = TrainTrace::default();

    for epoch in 0..config.epochs {
        let loss = net.loss_gradient_into(acc, &mut ws, &mut grad);
        if !loss.is_finite() {
            return Err(TrainError::NonFinite { epoch, loss });
        }
        if epoch % config.log_every == 0 {
            let l2_error = probe.as_mut().map(|p| p(&net));
            trace.records.push(TraceRecord { epoch, loss, l2_error });
        }
        adam_step(net.params_mut(), &grad, &mut state, config);
    }

    let loss = net.loss(acc);
    if !loss.is_finite() {
        return Err(TrainError::NonFinite { epoch: config.epochs, loss });
    }
    let l2_error = probe.as_mut().map(|p| p(&net));
    if trace.records.last().map(|r| r.epoch) != Some(config.epochs) {
        trace.records.push(TraceRecord { epoch: config.epochs, loss, l2_error });
    }
    Ok((net, trace))
}
