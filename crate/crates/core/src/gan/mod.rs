//! The dual-discriminator GAN: networks, objective, training and checkpoints.

mod bundle;
mod config;
mod loss;
mod models;
mod train;

pub use bundle::{load_bundle, save_bundle, write_loss_csv};
pub use config::TrainConfig;
pub use loss::{
    adversarial_losses, batch_profile_mean, discriminator_loss, discriminator_objective, generator_loss,
    generator_objective, generator_objective_from_tape, AdversarialLosses, GeneratorStep, PROB_CLAMP,
};
pub use models::{
    d1_forward, d1_topology, d2_features, d2_features_backward, d2_forward, d2_topology, generator_forward,
    generator_topology, images_to_tensor, tensor_to_images, D2_FEATURES,
};
pub use train::{generate, train, train_with_observer, LossRecord, ModelBundle};
