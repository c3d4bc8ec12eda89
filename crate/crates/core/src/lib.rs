//! Physics-informed dual-discriminator GAN for 5-band multispectral crop-plot
//! imagery, with the surrounding evaluation and augmentation tooling.

pub mod error;
pub mod gan;
pub mod par;
pub mod raster;
pub mod rng;
pub mod metrics;
pub mod nn;
pub mod physics;
pub mod plot;
pub mod predict;
pub mod sim;
pub mod vegindex;

pub use error::{Error, Result};
