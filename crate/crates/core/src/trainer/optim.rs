use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const RMS_DECAY: f64 = 0.9;
pub const RMS_EPS: f64 = 1e-8;

/// RMSProp accumulators, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState {
    pub v: Vec<Tensor>,
    pub step: u64,
    pub lr: f64,
}

impl OptState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>, lr: f64) -> Self {
        OptState {
            v: params.into_iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step: 0,
            lr,
        }
    }
}

/// `v <- 0.9 v + 0.1 g^2; p <- p - lr g / sqrt(v + 1e-8)`
pub fn rmsprop_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut OptState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.v.len() {
        return Err(Error::Shape {
            op: "rmsprop_step",
            shapes: vec![vec![params.len()], vec![grads.len()], vec![state.v.len()]],
        });
    }
    for ((p, g), v) in params.iter().zip(grads).zip(&state.v) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(Error::Shape {
                op: "rmsprop_step",
                shapes: vec![p.shape().to_vec(), g.shape().to_vec(), v.shape().to_vec()],
            });
        }
    }
    let lr = state.lr;
    for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.v) {
        for ((pi, gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vi = RMS_DECAY * *vi + (1.0 - RMS_DECAY) * gi * gi;
            *pi -= lr * gi / (*vi + RMS_EPS).sqrt();
        }
    }
    state.step += 1;
    Ok(())
}

/// Step decay: the rate halves every `halving_period` iterations once
/// `halving_start` is reached (the first halving happens at the start).
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub initial_lr: f64,
    pub halving_period: usize,
    pub halving_start: usize,
    pub max_iterations: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            initial_lr: 1e-3,
            halving_period: 1000,
            halving_start: 2000,
            max_iterations: 5000,
        }
    }
}

impl Schedule {
    pub fn lr_at(&self, iteration: usize) -> f64 {
        if iteration < self.halving_start {
            return self.initial_lr;
        }
        let halvings = (iteration - self.halving_start) / self.halving_period + 1;
        self.initial_lr * 0.5f64.powi(halvings.min(i32::MAX as usize) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) || self.halving_period == 0 {
            return Err(Error::InvalidArgument(format!(
                "schedule needs a positive learning rate and halving period, got {self:?}"
            )));
        }
        Ok(())
    }
}
