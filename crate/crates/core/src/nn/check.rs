//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::Rng;

use super::network::NetworkParams;
use super::tensor::{Real, Tensor};
use crate::Result;

/// `‖a − b‖ / (‖a‖ + ‖b‖)`: a norm-wise relative error that stays meaningful
/// when individual entries are near zero. Gradients that vanish identically
/// (e.g. a bias feeding straight into batch norm) fall back to the absolute
/// error, since their finite differences are pure rounding noise.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < ZERO_GRADIENT {
        diff
    } else {
        diff / norm
    }
}

const ZERO_GRADIENT: f64 = 1e-6;

/// Finite-difference step. Differences are always taken on an `f64` copy of
/// the network: at 32-bit precision the rounding noise of a central difference
/// swamps the comparison, so `f32` gradients are checked against the `f64`
/// reference of the same function.
pub const FD_STEP: f64 = 1e-6;

/// Indices to probe: all of them when there are at most `max_probe`,
/// otherwise a random subset.
pub fn probe_indices(len: usize, max_probe: usize, rng: &mut impl Rng) -> Vec<usize> {
    if len <= max_probe {
        (0..len).collect()
    } else {
        let mut idx = sample(rng, len, max_probe).into_vec();
        idx.sort_unstable();
        idx
    }
}

/// Central differences of `f` with respect to `x[i]` for each probed `i`.
pub fn numeric_grad<T: Real>(
    x: &mut [T],
    indices: &[usize],
    step: f64,
    mut f: impl FnMut(&[T]) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let orig = x[i];
        x[i] = T::lit(orig.f64() + step);
        let up = f(x)?;
        x[i] = T::lit(orig.f64() - step);
        let down = f(x)?;
        x[i] = orig;
        // Use the step actually representable in T.
        let h = (T::lit(orig.f64() + step).f64() - T::lit(orig.f64() - step).f64()) / 2.0;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Outcome of checking one gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub label: String,
    pub relative_error: f64,
}

/// `Σ y ⊙ r` accumulated in `f64`.
fn projected<T: Real>(y: &Tensor<T>, r: &[f64]) -> f64 {
    y.data().iter().zip(r).map(|(a, b)| a.f64() * b).sum()
}

/// Check the input gradient and every parameter gradient of `net` (training
/// mode) for the scalar loss `Σ net(x) ⊙ r` with random `r`. Analytic
/// gradients are computed in `T`, numeric ones in `f64`.
pub fn check_network<T: Real>(
    net: &NetworkParams<T>,
    x: &Tensor<T>,
    max_probe: usize,
    rng: &mut impl Rng,
) -> Result<Vec<GradCheck>> {
    let reference: NetworkParams<f64> = net.cast();
    let x64: Tensor<f64> = x.cast();
    let tape = net.forward_train(x)?;
    let r: Vec<f64> = (0..tape.output().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let gy = Tensor::from_vec(tape.output().shape(), r.iter().map(|v| T::lit(*v)).collect())?;
    let (gx, grads) = net.backward(&tape, &gy)?;

    let mut checks = Vec::new();
    let idx = probe_indices(x.len(), max_probe, rng);
    let mut xd = x64.data().to_vec();
    let numeric = numeric_grad(&mut xd, &idx, FD_STEP, |xs| {
        let xt = Tensor::from_vec(x.shape(), xs.to_vec())?;
        Ok(projected(reference.forward_train(&xt)?.output(), &r))
    })?;
    let analytic: Vec<f64> = idx.iter().map(|&i| gx.data()[i].f64()).collect();
    checks.push(GradCheck { label: "input".into(), relative_error: relative_error(&analytic, &numeric) });

    for name in net.trainable_names() {
        let len = reference.tensors[&name].len();
        let idx = probe_indices(len, max_probe, rng);
        let mut pd = reference.tensors[&name].data().to_vec();
        let shape = reference.tensors[&name].shape().to_vec();
        let numeric = numeric_grad(&mut pd, &idx, FD_STEP, |ps| {
            let mut probe = reference.clone();
            probe.tensors.insert(name.clone(), Tensor::from_vec(&shape, ps.to_vec())?);
            Ok(projected(probe.forward_train(&x64)?.output(), &r))
        })?;
        let analytic: Vec<f64> = idx.iter().map(|&i| grads[&name].data()[i].f64()).collect();
        checks.push(GradCheck { label: name, relative_error: relative_error(&analytic, &numeric) });
    }
    Ok(checks)
}
