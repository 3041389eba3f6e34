use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Element = f32> {
    pub config: AdamConfig,
    /// Current learning rate (the schedule rewrites this before each step).
    pub lr: f64,
    pub step: u64,
    pub moments: IndexMap<String, (Tensor<T>, Tensor<T>)>,
}

impl<T: Element> AdamState<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        let moments = params
            .iter()
            .map(|(k, v)| {
                (
                    k.to_owned(),
                    (Tensor::zeros(v.shape().to_vec()), Tensor::zeros(v.shape().to_vec())),
                )
            })
            .collect();
        Self {
            config,
            lr: config.lr,
            step: 0,
            moments,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// A tensor whose gradient is identically zero is left untouched (value and
/// moments), so a zero gradient is a no-op for any optimizer state. The step
/// counter always advances.
pub fn adam_step<T: Element>(params: &mut ParamSet<T>, grads: &ParamSet<T>, state: &mut AdamState<T>) -> Result<()> {
    for (name, p) in params.iter() {
        let g = grads.get(name).ok_or_else(|| Error::MissingGradient(name.to_owned()))?;
        if g.shape() != p.shape() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "gradient for `{name}` has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                ),
            ));
        }
        if !state.moments.contains_key(name) {
            return Err(Error::InvalidArgument(format!("optimizer has no state for `{name}`")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let AdamConfig { beta1, beta2, eps, .. } = state.config;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let (b1, b2) = (T::of(beta1), T::of(beta2));
    let (one_b1, one_b2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
    let step_size = T::of(state.lr / bc1);
    let inv_bc2 = T::of(1.0 / bc2);
    let eps = T::of(eps);

    for (name, p) in params.iter_mut() {
        let g = grads.get(name).expect("checked above");
        if g.data().iter().all(|v| *v == T::zero()) {
            continue;
        }
        let (m, v) = state.moments.get_mut(name).expect("checked above");
        for (((pi, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            *mi = b1 * *mi + one_b1 * gi;
            *vi = b2 * *vi + one_b2 * gi * gi;
            *pi -= step_size * *mi / ((*vi * inv_bc2).sqrt() + eps);
        }
    }
    Ok(())
}
