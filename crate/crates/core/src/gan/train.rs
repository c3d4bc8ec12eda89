use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::nn::{adam_step, AdamConfig, AdamState, NetworkParams, Tensor};
use crate::physics::{manipulate_latent, CoefficientSet};
use crate::raster::{Health, Origin, PlotDataset, PlotLabel, BAND_COUNT};
use crate::rng::stream;
use crate::{Error, Result};

use super::config::TrainConfig;
use super::loss::{batch_profile_mean, discriminator_objective, generator_objective_from_tape};
use super::models::{OUTPUT_BIAS, d1_topology, d2_features, d2_topology, generator_topology, images_to_tensor, tensor_to_images};

/// Losses logged at one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub d1_loss: f64,
    pub d2_loss: f64,
    pub g_loss: f64,
    pub sr_loss: f64,
}

impl LossRecord {
    fn is_finite(&self) -> bool {
        [self.d1_loss, self.d2_loss, self.g_loss, self.sr_loss].iter().all(|v| v.is_finite())
    }
}

/// Everything a trained model needs to generate and to be audited.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub generator: NetworkParams<f32>,
    pub d1: NetworkParams<f32>,
    pub d2: NetworkParams<f32>,
    pub coeffs: CoefficientSet,
    pub config: TrainConfig,
    pub loss_history: Vec<LossRecord>,
    /// Class of the training images when they all share one.
    pub class: Option<Health>,
    /// Date names of the training dataset, carried into generated datasets.
    pub dates: Vec<String>,
    /// Latest date index among the training images.
    pub date_index: u32,
}

// Independent RNG streams derived from the run seed.
const STREAM_GENERATOR: u64 = 1;
const STREAM_D1: u64 = 2;
const STREAM_D2: u64 = 3;
const STREAM_TRAIN: u64 = 4;
const STREAM_CALIBRATION: u64 = 5;
const STREAM_BIAS: u64 = 6;

/// Fresh, untrained networks for `config`.
pub(crate) fn init_networks(config: &TrainConfig) -> [NetworkParams<f32>; 3] {
    [
        NetworkParams::init(generator_topology(config), &mut stream(config.seed, STREAM_GENERATOR)),
        NetworkParams::init(d1_topology(config), &mut stream(config.seed, STREAM_D1)),
        NetworkParams::init(d2_topology(), &mut stream(config.seed, STREAM_D2)),
    ]
}

/// `count` latent vectors, mixed by the red-edge/NIR correlation.
fn sample_latents(rng: &mut impl Rng, count: usize, coeffs: &CoefficientSet, dim: usize) -> Result<Tensor<f32>> {
    let z: Vec<f64> = (0..count * dim).map(|_| rng.sample(StandardNormal)).collect();
    let z = manipulate_latent(&z, dim, coeffs)?;
    Tensor::from_vec(&[count, dim], z.into_iter().map(|v| v as f32).collect())
}

fn gather(t: &Tensor<f32>, rows: &[usize]) -> Tensor<f32> {
    let mut shape = t.shape().to_vec();
    shape[0] = rows.len();
    let data = rows.iter().flat_map(|&i| t.sample(i).iter().copied()).collect();
    Tensor::from_vec(&shape, data).expect("gather shape")
}

pub fn train(dataset: &PlotDataset, coeffs: &CoefficientSet, config: &TrainConfig) -> Result<ModelBundle> {
    train_with_observer(dataset, coeffs, config, |_| {})
}

/// [`train`], calling `observe` with every logged loss record.
pub fn train_with_observer(
    dataset: &PlotDataset,
    coeffs: &CoefficientSet,
    config: &TrainConfig,
    mut observe: impl FnMut(&LossRecord),
) -> Result<ModelBundle> {
    config.validate()?;
    let pool = dataset.without_mild();
    if pool.len() < 2 * config.batch_size {
        return Err(Error::Insufficient(format!(
            "{} non-mild images, need at least {} (twice the batch size)",
            pool.len(),
            2 * config.batch_size
        )));
    }
    let side = config.image_size;
    if pool.images.iter().any(|im| im.width() != side || im.height() != side) {
        return Err(Error::Shape(format!("training images must all be {side}x{side}")));
    }

    let [mut g, mut d1, mut d2] = init_networks(config);
    seed_output_bias(&mut g, &pool, coeffs, config)?;
    let adam = AdamConfig { lr: config.learning_rate, beta1: config.beta1, beta2: config.beta2 };
    let (mut sg, mut s1, mut s2) = (AdamState::default(), AdamState::default(), AdamState::default());
    let (w_d2, _) = config.effective_weights();

    let real_all = images_to_tensor::<f32>(&pool.images)?;
    let real_planes: Vec<Vec<f64>> =
        pool.images.iter().map(|im| im.data().iter().map(|&v| f64::from(v)).collect()).collect();

    let mut rng = stream(config.seed, STREAM_TRAIN);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut history = Vec::new();
    let mut step = 0usize;
    for _epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks_exact(config.batch_size) {
            step += 1;
            let z = sample_latents(&mut rng, batch.len(), coeffs, config.latent_dim)?;
            let g_tape = g.forward_train(&z)?;
            g.update_running_stats(&g_tape);
            let fake = g_tape.output();
            let real = gather(&real_all, batch);

            let (d1_loss, grads, tapes) = discriminator_objective(&d1, &real, fake)?;
            check_loss(step, "d1_loss", d1_loss)?;
            tapes.iter().for_each(|t| d1.update_running_stats(t));
            adam_step(&mut d1, &grads, &mut s1, &adam).map_err(|e| diverged(step, e))?;

            let fake_features = d2_features(fake)?;
            let real_batch_features = d2_features(&real)?;
            let (d2_loss, grads, _) = discriminator_objective(&d2, &real_batch_features, &fake_features)?;
            check_loss(step, "d2_loss", d2_loss)?;
            if w_d2 > 0.0 {
                adam_step(&mut d2, &grads, &mut s2, &adam).map_err(|e| diverged(step, e))?;
            }

            let batch_planes: Vec<Vec<f64>> = batch.iter().map(|&i| real_planes[i].clone()).collect();
            let real_profile = batch_profile_mean(&batch_planes, side, side)?;
            let gs = generator_objective_from_tape(&g, &g_tape, &d1, &d2, &real_profile, config)?;
            check_loss(step, "g_loss", gs.g_loss)?;
            adam_step(&mut g, &gs.grads, &mut sg, &adam).map_err(|e| diverged(step, e))?;

            if step % config.log_every_steps == 0 {
                let record = LossRecord { step, d1_loss, d2_loss, g_loss: gs.g_loss, sr_loss: gs.sr_loss };
                if !record.is_finite() {
                    return Err(Error::Diverged { step, reason: "non-finite loss".into() });
                }
                observe(&record);
                history.push(record);
            }
        }
    }

    recalibrate_generator(&mut g, coeffs, config)?;

    let classes: Vec<Health> = pool.labels.iter().map(|l| l.health).collect();
    let class = classes.first().copied().filter(|c| classes.iter().all(|x| x == c));
    Ok(ModelBundle {
        generator: g,
        d1,
        d2,
        coeffs: *coeffs,
        config: config.clone(),
        loss_history: history,
        class,
        dates: pool.dates.clone(),
        date_index: pool.labels.iter().map(|l| l.date_index).max().unwrap_or(0),
    })
}

/// Batches used to re-estimate the generator's batch-norm statistics.
pub const CALIBRATION_BATCHES: usize = 16;

/// Reset the generator's running statistics to the average batch statistics
/// of the final weights. The momentum averages lag the weights they were
/// collected under; on small datasets (a few hundred steps) a large share of
/// them still reflects the initialisation, which shrinks eval-mode outputs
/// toward the mean image and collapses sample diversity.
fn recalibrate_generator(g: &mut NetworkParams<f32>, coeffs: &CoefficientSet, config: &TrainConfig) -> Result<()> {
    let mut rng = stream(config.seed, STREAM_CALIBRATION);
    let tapes = (0..CALIBRATION_BATCHES)
        .map(|_| g.forward_train(&sample_latents(&mut rng, config.batch_size, coeffs, config.latent_dim)?))
        .collect::<Result<Vec<_>>>()?;
    g.set_running_stats(&tapes);
    Ok(())
}

/// Correction rounds used by [`seed_output_bias`].
const BIAS_ROUNDS: usize = 3;

fn logit(p: f64) -> f64 {
    let p = p.clamp(0.01, 0.99);
    (p / (1.0 - p)).ln()
}

/// Start the generator's sigmoid output at the per-band mean reflectance of the
/// training data. With the default init the output sits near 0.5 everywhere,
/// and Adam's roughly `lr`-sized steps need thousands of updates to walk the
/// output logits to typical reflectances (≈0.05 blue, ≈0.45 NIR), during which
/// D1 wins outright.
///
/// Setting the bias to the logit of the target is not quite enough: the
/// LeakyReLU activations feeding the output conv have a positive mean, so the
/// random conv weights add a per-band constant of a few hundredths of
/// reflectance, as large as the class differences the synthetic data is meant
/// to carry, and adversarial training removes it only slowly. A few rounds of
/// measuring the mean output on a calibration batch and correcting the bias in
/// logit space cancel it.
fn seed_output_bias(
    g: &mut NetworkParams<f32>,
    pool: &PlotDataset,
    coeffs: &CoefficientSet,
    config: &TrainConfig,
) -> Result<()> {
    let mut target = [0.0f64; BAND_COUNT];
    for im in &pool.images {
        for (m, v) in target.iter_mut().zip(im.band_means()) {
            *m += v / pool.len() as f64;
        }
    }
    let Some(bias) = g.tensors.get_mut(OUTPUT_BIAS) else { return Ok(()) };
    for (b, m) in bias.data_mut().iter_mut().zip(target) {
        *b = logit(m) as f32;
    }
    let mut rng = stream(config.seed, STREAM_BIAS);
    let z = sample_latents(&mut rng, CALIBRATION_BATCHES * config.batch_size, coeffs, config.latent_dim)?;
    for _ in 0..BIAS_ROUNDS {
        let out = g.forward_train(&z)?;
        let images = tensor_to_images(out.output())?;
        let mut mean = [0.0f64; BAND_COUNT];
        for im in &images {
            for (m, v) in mean.iter_mut().zip(im.band_means()) {
                *m += v / images.len() as f64;
            }
        }
        let bias = g.tensors.get_mut(OUTPUT_BIAS).expect("output bias");
        for ((b, t), m) in bias.data_mut().iter_mut().zip(target).zip(mean) {
            *b += (logit(t) - logit(m)) as f32;
        }
    }
    Ok(())
}

fn check_loss(step: usize, name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { step, reason: format!("{name} is {value}") })
    }
}

fn diverged(step: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(what) => Error::Diverged { step, reason: format!("non-finite {what}") },
        other => other,
    }
}

const GENERATE_CHUNK: usize = 64;

/// Sample `count` synthetic images labelled with `class` (falling back to the
/// class the bundle was trained on).
pub fn generate(bundle: &ModelBundle, count: usize, class: Option<Health>, seed: u64) -> Result<PlotDataset> {
    if count == 0 {
        return Err(Error::validation("count", "must be at least 1"));
    }
    let health = class
        .or(bundle.class)
        .ok_or_else(|| Error::validation("class", "bundle was trained on mixed classes; a class is required"))?;
    let dim = bundle.config.latent_dim;
    let mut images = Vec::with_capacity(count);
    let starts: Vec<usize> = (0..count).step_by(GENERATE_CHUNK).collect();
    for start in starts {
        let n = GENERATE_CHUNK.min(count - start);
        let mut z = Vec::with_capacity(n * dim);
        for i in start..start + n {
            let mut rng = stream(seed, i as u64);
            z.extend((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        }
        let z = manipulate_latent(&z, dim, &bundle.coeffs)?;
        let z = Tensor::from_vec(&[n, dim], z.into_iter().map(|v| v as f32).collect())?;
        images.extend(tensor_to_images(&bundle.generator.forward(&z)?)?);
    }
    let label = PlotLabel { health, date_index: bundle.date_index, origin: Origin::Synthetic };
    let dates = if bundle.dates.is_empty() { vec!["date_0".to_string()] } else { bundle.dates.clone() };
    PlotDataset::new(images, vec![label; count], dates, seed)
}
