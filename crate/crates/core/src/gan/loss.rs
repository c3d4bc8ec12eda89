//! The adversarial objective and its gradients.
//!
//! Discriminators output logits; probabilities are `sigmoid(logit)` and are
//! clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logs. Gradients are
//! taken in logit form (`p - target`), which equals the derivative of the
//! clamped loss whenever the clamp is inactive.

use crate::nn::layers::sigmoid_scalar;
use crate::nn::{Grads, NetworkParams, Real, Tape, Tensor};
use crate::physics::{profile_len, radial_profile_planes, spectral_reg_loss_grad, DEFAULT_RADIAL_BINS};
use crate::{Error, Result};

use super::config::TrainConfig;
use super::models::{d2_features, d2_features_backward};

pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversarialLosses {
    pub d1_loss: f64,
    pub d2_loss: f64,
    pub g_loss: f64,
}

fn mean_log(p: &[f64], flip: bool) -> f64 {
    let sum: f64 = p
        .iter()
        .map(|&v| {
            let v = v.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if flip {
                (1.0 - v).ln()
            } else {
                v.ln()
            }
        })
        .sum();
    sum / p.len() as f64
}

/// `−mean[log D(real)] − mean[log(1 − D(fake))]`.
pub fn discriminator_loss(real: &[f64], fake: &[f64]) -> f64 {
    -mean_log(real, false) - mean_log(fake, true)
}

/// Non-saturating generator loss `−mean[log D1(fake)] − w_d2·mean[log D2(fake)] + w_sr·sr`,
/// with the ablation switch applied to the weights.
pub fn generator_loss(d1_fake: &[f64], d2_fake: &[f64], sr: f64, cfg: &TrainConfig) -> f64 {
    let (w_d2, w_sr) = cfg.effective_weights();
    let mut loss = -mean_log(d1_fake, false);
    if w_d2 > 0.0 {
        loss -= w_d2 * mean_log(d2_fake, false);
    }
    if w_sr > 0.0 {
        loss += w_sr * sr;
    }
    loss
}

pub fn adversarial_losses(
    d1_real: &[f64],
    d1_fake: &[f64],
    d2_real: &[f64],
    d2_fake: &[f64],
    sr: f64,
    cfg: &TrainConfig,
) -> Result<AdversarialLosses> {
    if [d1_real, d1_fake, d2_real, d2_fake].iter().any(|b| b.is_empty()) {
        return Err(Error::validation("probabilities", "empty discriminator batch"));
    }
    Ok(AdversarialLosses {
        d1_loss: discriminator_loss(d1_real, d1_fake),
        d2_loss: discriminator_loss(d2_real, d2_fake),
        g_loss: generator_loss(d1_fake, d2_fake, sr, cfg),
    })
}

fn probs<T: Real>(logits: &Tensor<T>) -> Vec<f64> {
    logits.data().iter().map(|l| sigmoid_scalar(l.f64())).collect()
}

/// `d/dlogit` of `−scale·mean[log σ(l)]` (target 1) or `−scale·mean[log(1 − σ(l))]` (target 0).
fn logit_grad<T: Real>(logits: &Tensor<T>, target: f64, scale: f64) -> Tensor<T> {
    let n = logits.len() as f64;
    logits.map(|l| T::lit(scale * (sigmoid_scalar(l.f64()) - target) / n))
}

/// Loss and parameter gradients of one discriminator on a real and a fake
/// batch (both already in the network's input space). The two tapes are
/// returned so the caller can fold their batch statistics into the running
/// averages.
pub fn discriminator_objective<T: Real>(
    d: &NetworkParams<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
) -> Result<(f64, Grads<T>, [Tape<T>; 2])> {
    let tr = d.forward_train(real)?;
    let tf = d.forward_train(fake)?;
    let loss = discriminator_loss(&probs(tr.output()), &probs(tf.output()));
    let (_, mut grads) = d.backward(&tr, &logit_grad(tr.output(), 1.0, 1.0))?;
    let (_, gf) = d.backward(&tf, &logit_grad(tf.output(), 0.0, 1.0))?;
    crate::nn::accumulate(&mut grads, gf);
    Ok((loss, grads, [tr, tf]))
}

/// Mean radial profile of a batch of band-planar `f64` images.
pub fn batch_profile_mean(planes: &[Vec<f64>], height: usize, width: usize) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; profile_len(DEFAULT_RADIAL_BINS)];
    for p in planes {
        for (a, v) in acc.iter_mut().zip(radial_profile_planes(p, height, width, DEFAULT_RADIAL_BINS)?) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= planes.len() as f64);
    Ok(acc)
}

/// Generator loss terms and gradients.
#[derive(Debug, Clone)]
pub struct GeneratorStep<T> {
    pub g_loss: f64,
    pub sr_loss: f64,
    pub grads: Grads<T>,
}

/// Generator objective for a batch already pushed through the generator
/// (`tape`), against the current discriminators in training mode.
/// `real_profile` is the batch-mean radial profile of the real minibatch.
pub fn generator_objective_from_tape<T: Real>(
    g: &NetworkParams<T>,
    tape: &Tape<T>,
    d1: &NetworkParams<T>,
    d2: &NetworkParams<T>,
    real_profile: &[f64],
    cfg: &TrainConfig,
) -> Result<GeneratorStep<T>> {
    let fake = tape.output();
    let (n, h, w) = (fake.shape()[0], fake.shape()[2], fake.shape()[3]);
    let (w_d2, w_sr) = cfg.effective_weights();

    let t1 = d1.forward_train(fake)?;
    let p1 = probs(t1.output());
    let (mut grad_img, _) = d1.backward(&t1, &logit_grad(t1.output(), 1.0, 1.0))?;

    let mut p2 = vec![0.5; n];
    if w_d2 > 0.0 {
        let feats = d2_features(fake)?;
        let t2 = d2.forward_train(&feats)?;
        p2 = probs(t2.output());
        let (gf, _) = d2.backward(&t2, &logit_grad(t2.output(), 1.0, w_d2))?;
        grad_img.add_assign(&d2_features_backward(fake, &gf)?);
    }

    let planes: Vec<Vec<f64>> = (0..n).map(|i| fake.sample(i).iter().map(|v| v.f64()).collect()).collect();
    let sr_loss = if w_sr > 0.0 {
        let (loss, grads) = spectral_reg_loss_grad(real_profile, &planes, h, w, DEFAULT_RADIAL_BINS)?;
        for (i, gi) in grads.iter().enumerate() {
            let off = i * gi.len();
            for (j, v) in gi.iter().enumerate() {
                grad_img.data_mut()[off + j] += T::lit(w_sr * v);
            }
        }
        loss
    } else {
        let fake_mean = batch_profile_mean(&planes, h, w)?;
        fake_mean.iter().zip(real_profile).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / fake_mean.len() as f64
    };

    let g_loss = generator_loss(&p1, &p2, sr_loss, cfg);
    let (_, grads) = g.backward(tape, &grad_img)?;
    Ok(GeneratorStep { g_loss, sr_loss, grads })
}

/// Full generator objective from latents (training-mode batch norm everywhere).
pub fn generator_objective<T: Real>(
    g: &NetworkParams<T>,
    z: &Tensor<T>,
    d1: &NetworkParams<T>,
    d2: &NetworkParams<T>,
    real_profile: &[f64],
    cfg: &TrainConfig,
) -> Result<GeneratorStep<T>> {
    let tape = g.forward_train(z)?;
    generator_objective_from_tape(g, &tape, d1, d2, real_profile, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::models::{d1_topology, d2_topology, generator_topology};
    use crate::nn::check::{numeric_grad, probe_indices, relative_error, FD_STEP};
    use crate::rng::seeded;
    use rand::Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn coin_flip_discriminators() {
        let h = [0.5; 4];
        let l = adversarial_losses(&h, &h, &h, &h, 0.0, &TrainConfig::default()).unwrap();
        assert!((l.d1_loss - 2.0 * LN2).abs() < 1e-12);
        assert!((l.d2_loss - 1.3862943611198906).abs() < 1e-12);
        assert!((l.g_loss - 1.5 * LN2).abs() < 1e-12);
        assert!((l.g_loss - 1.0397).abs() < 1e-4);
    }

    #[test]
    fn perfect_discriminators_have_near_zero_loss() {
        let eps = 1e-9;
        let l = adversarial_losses(&[1.0 - eps], &[eps], &[1.0], &[0.0], 0.0, &TrainConfig::default()).unwrap();
        assert!(l.d1_loss < 1e-6 && l.d2_loss < 1e-6);
    }

    #[test]
    fn ablation_ignores_d2_and_regularizer() {
        let cfg = TrainConfig { ablation_baseline: true, ..TrainConfig::default() };
        let a = adversarial_losses(&[0.6], &[0.3], &[0.5], &[0.1], 5.0, &cfg).unwrap();
        let b = adversarial_losses(&[0.6], &[0.3], &[0.9], &[0.8], 0.0, &cfg).unwrap();
        assert_eq!(a.g_loss, b.g_loss);
        assert!((a.g_loss + 0.3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn losses_move_in_the_right_direction() {
        let cfg = TrainConfig::default();
        let base = adversarial_losses(&[0.6], &[0.4], &[0.6], &[0.4], 0.0, &cfg).unwrap();
        let sharper = adversarial_losses(&[0.7], &[0.3], &[0.7], &[0.3], 0.0, &cfg).unwrap();
        assert!(sharper.d1_loss + sharper.d2_loss < base.d1_loss + base.d2_loss);
        let fooled = adversarial_losses(&[0.6], &[0.5], &[0.6], &[0.5], 0.0, &cfg).unwrap();
        assert!(fooled.g_loss < base.g_loss);
    }

    #[test]
    fn clamping_keeps_losses_finite() {
        let l = adversarial_losses(&[0.0], &[1.0], &[0.0], &[1.0], 0.0, &TrainConfig::default()).unwrap();
        assert!(l.d1_loss.is_finite() && l.g_loss.is_finite());
        assert!((l.d1_loss + 2.0 * PROB_CLAMP.ln()).abs() < 1e-6);
    }

    #[test]
    fn empty_batches_are_rejected() {
        assert!(adversarial_losses(&[], &[0.5], &[0.5], &[0.5], 0.0, &TrainConfig::default()).is_err());
    }

    fn small_config() -> TrainConfig {
        TrainConfig { latent_dim: 10, base_channels: 1, ..TrainConfig::default() }
    }

    fn composite_check<T: Real>(tol: f64) {
        let cfg = small_config();
        let mut rng = seeded(21);
        // Weights well above the training init so gradients are far from zero.
        let mut jitter = |mut net: NetworkParams<f64>| {
            for t in net.tensors.values_mut() {
                t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
            }
            net
        };
        let g = jitter(NetworkParams::init(generator_topology(&cfg), &mut seeded(1)));
        let d1 = jitter(NetworkParams::init(d1_topology(&cfg), &mut seeded(2)));
        let d2 = jitter(NetworkParams::init(d2_topology(), &mut seeded(3)));
        let z = Tensor::from_vec(&[3, 10], (0..30).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let real: Vec<Vec<f64>> =
            (0..3).map(|_| (0..5 * 32 * 32).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let profile = batch_profile_mean(&real, 32, 32).unwrap();
        let (gt, d1t, d2t, zt) = (g.cast::<T>(), d1.cast::<T>(), d2.cast::<T>(), z.cast::<T>());
        let step = generator_objective(&gt, &zt, &d1t, &d2t, &profile, &cfg).unwrap();
        for name in g.trainable_names() {
            let idx = probe_indices(g.tensors[&name].len(), 6, &mut rng);
            let shape = g.tensors[&name].shape().to_vec();
            let mut data = g.tensors[&name].data().to_vec();
            let numeric = numeric_grad(&mut data, &idx, FD_STEP, |ps| {
                let mut probe = g.clone();
                probe.tensors.insert(name.clone(), Tensor::from_vec(&shape, ps.to_vec())?);
                Ok(generator_objective(&probe, &z, &d1, &d2, &profile, &cfg)?.g_loss)
            })
            .unwrap();
            let analytic: Vec<f64> = idx.iter().map(|&i| step.grads[&name].data()[i].f64()).collect();
            let err = relative_error(&analytic, &numeric);
            assert!(err < tol, "{name}: {err:.3e}");
        }
    }

    #[test]
    fn composite_generator_gradient_f64() {
        composite_check::<f64>(1e-6);
    }

    #[test]
    fn composite_generator_gradient_f32() {
        composite_check::<f32>(1e-3);
    }
}
