//! Split Gibbs sampling with a diffusion denoiser as the prior step.

mod gibbs;
mod summary;
mod xstep;

pub use gibbs::{run_sampler, run_sampler_with_rng, Chain, ChainSamples, SamplerConfig, TaskSpec, ThinRecord};
pub use summary::{credible_interval, mmse, pixel_std, quantile_sorted, PosteriorSummary};
pub use xstep::{
    inpaint_covariance_diagonal, sample_sr_x, sample_sr_z1, sample_x_deblur, sample_x_inpaint, Coupling, CG_TOLERANCE, SPECTRAL_FLOOR,
};
