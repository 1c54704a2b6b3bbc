use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Gradients, NetworkParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    /// The GAN-training setting: `beta1 = 0.5`, `beta2 = 0.999`, `eps = 1e-8`.
    fn default() -> Self {
        Self { beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    /// Textbook defaults (`beta1 = 0.9`).
    pub fn standard() -> Self {
        Self { beta1: 0.9, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(net: &NetworkParams<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<T>> = net.tensors().iter().map(|p| vec![T::zero(); p.data.len()]).collect();
        Self { config, m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One bias-corrected Adam update:
/// `p -= lr · m̂ / (sqrt(v̂) + eps)` with `m̂ = m / (1 - beta1^k)`, `v̂ = v / (1 - beta2^k)`.
///
/// Gradients are validated before anything is modified.
pub fn adam_step<T: Scalar>(
    net: &mut NetworkParams<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if grads.tensors.len() != net.tensors().len() || state.m.len() != net.tensors().len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: {} params, {} grads, {} moments",
            net.tensors().len(),
            grads.tensors.len(),
            state.m.len()
        )));
    }
    for (p, g) in net.tensors().iter().zip(&grads.tensors) {
        if p.data.len() != g.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam: gradient for `{}` has {} values, expected {}",
                p.name,
                g.len(),
                p.data.len()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
    }
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let k = state.step as i32;
    let c1 = 1.0 / (1.0 - beta1.powi(k));
    let c2 = 1.0 / (1.0 - beta2.powi(k));
    let (b1, b2) = (T::lit(beta1), T::lit(beta2));
    let (nb1, nb2) = (T::lit(1.0 - beta1), T::lit(1.0 - beta2));
    let (c1, c2, eps, lr) = (T::lit(c1), T::lit(c2), T::lit(eps), T::lit(lr));
    for (i, p) in net.tensors_mut().iter_mut().enumerate() {
        let (m, v, g) = (&mut state.m[i], &mut state.v[i], &grads.tensors[i]);
        for j in 0..p.data.len() {
            m[j] = b1 * m[j] + nb1 * g[j];
            v[j] = b2 * v[j] + nb2 * g[j] * g[j];
            let update = (m[j] * c1) / ((v[j] * c2).sqrt() + eps);
            p.data[j] -= lr * update;
        }
    }
    Ok(())
}
