use std::collections::BTreeMap;

use super::network::{Grads, NetworkParams};
use super::tensor::Real;
use crate::{Error, Result};

pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
}

/// First and second moment estimates, kept in `f64` whatever the parameter type.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    /// Number of completed steps.
    pub t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

/// One bias-corrected Adam update over every trainable tensor.
///
/// All gradients are checked before anything is modified, so a rejected step
/// leaves both the parameters and the state untouched.
pub fn adam_step<T: Real>(
    params: &mut NetworkParams<T>,
    grads: &Grads<T>,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let names = params.trainable_names();
    for name in &names {
        let g = grads.get(name).ok_or_else(|| Error::Shape(format!("no gradient for `{name}`")))?;
        if g.shape() != params.tensors[name].shape() {
            return Err(Error::Shape(format!(
                "gradient for `{name}` has shape {:?}, parameter has {:?}",
                g.shape(),
                params.tensors[name].shape()
            )));
        }
        if !g.all_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for name in &names {
        let g = grads[name].data();
        let p = params.tensors.get_mut(name).expect("parameter").data_mut();
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
        for i in 0..g.len() {
            let gi = g[i].f64();
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let step = cfg.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            p[i] = T::lit(p[i].f64() - step);
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(name.clone()));
        }
    }
    Ok(())
}
