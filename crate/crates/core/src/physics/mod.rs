//! Physics-informed pieces: red-edge/NIR coefficients, latent manipulation,
//! FFT spectral regularization, spectral profiles and SID.

mod coeffs;
mod profile;
mod spectrum;

pub use coeffs::{
    fit_re_nir_coefficients, fit_with_margin, manipulate_latent, residual_trace, CoefficientFit, CoefficientSet,
    FitDiagnostics, BLOCKS, FIT_MARGIN, RHO_LIMIT, START_DECAYS,
};
pub use profile::{profile_r2, sid, sid_vectors, spectral_profile, SpectralProfile, R2_DEGENERATE};
pub use spectrum::{
    profile_len, radial_power_profile, radial_profile_backward, radial_profile_planes, spectral_reg_loss,
    RadialPowerProfile, DEFAULT_RADIAL_BINS, MIN_RADIAL_BINS,
};
pub(crate) use spectrum::spectral_reg_loss_grad;
