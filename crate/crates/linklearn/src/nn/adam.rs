//! Adam optimizer over named parameter sets.

use super::{Gradients, ParameterSet};
use ndarray::ArrayD;
use std::collections::BTreeMap;

/// Adam hyperparameters. The moment decay rates and epsilon default to the
/// conventional `(0.9, 0.999, 1e-8)`; only the learning rate varies between
/// the networks trained here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamParams {
    /// Conventional decay rates with the given learning rate.
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Mutable optimizer state: first and second moment estimates per parameter
/// plus the shared step counter used for bias correction.
///
/// Moments materialize lazily at zero the first time a parameter receives a
/// gradient, so a fresh state is an empty map and serializes cheaply.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    first: BTreeMap<String, ArrayD<f64>>,
    second: BTreeMap<String, ArrayD<f64>>,
    steps: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reassembles a state captured by [`AdamState::first_moments`],
    /// [`AdamState::second_moments`] and [`AdamState::step_count`].
    pub fn from_parts(
        first: BTreeMap<String, ArrayD<f64>>,
        second: BTreeMap<String, ArrayD<f64>>,
        steps: u64,
    ) -> Self {
        Self { first, second, steps }
    }

    pub fn step_count(&self) -> u64 {
        self.steps
    }

    pub fn first_moments(&self) -> &BTreeMap<String, ArrayD<f64>> {
        &self.first
    }

    pub fn second_moments(&self) -> &BTreeMap<String, ArrayD<f64>> {
        &self.second
    }

    /// One descent step over every gradient entry:
    /// `p -= lr * m_hat / (sqrt(v_hat) + eps)` with bias-corrected moments.
    ///
    /// Parameters without a gradient this step (running statistics, frozen
    /// layers) keep both their value and their moments untouched. Gradient
    /// names must refer to existing parameters of matching shape.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &Gradients, hp: &AdamParams) {
        self.steps += 1;
        let bc1 = 1.0 - hp.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - hp.beta2.powi(self.steps as i32);
        for (name, grad) in grads.iter() {
            let param = params.get_mut(name);
            assert_eq!(
                param.shape(),
                grad.shape(),
                "gradient shape mismatch for {name}"
            );
            let m = self
                .first
                .entry(name.to_string())
                .or_insert_with(|| ArrayD::zeros(grad.raw_dim()));
            let v = self
                .second
                .entry(name.to_string())
                .or_insert_with(|| ArrayD::zeros(grad.raw_dim()));
            ndarray::Zip::from(param)
                .and(m)
                .and(v)
                .and(grad)
                .for_each(|p, m, v, &g| {
                    *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
                    *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= hp.lr * m_hat / (v_hat.sqrt() + hp.epsilon);
                });
        }
    }
}
