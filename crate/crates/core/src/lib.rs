//! Plug-and-play split Gibbs sampling for linear-Gaussian imaging inverse
//! problems.
//!
//! The unknown image `x` is observed through `y = Hx + n` with `H` a
//! circulant blur, a pixel mask, or a blur followed by a mask. The sampler
//! alternates an exact Gaussian draw of `x` given a split variable `z` with a
//! stochastic diffusion denoiser applied to `x`, whose starting step is
//! chosen from a blind estimate of the noise left in `x`.
//!
//! ```no_run
//! use pnp_sgs::{
//!     run_sampler, GaussianConjugateDenoiser, Image, MaskOperator, PosteriorSummary,
//!     SamplerConfig, Schedule, Shape, TaskSpec,
//! };
//! use rand::SeedableRng;
//!
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
//! let shape = Shape::new(1, 32, 32);
//! let truth = Image::filled(shape, 0.5);
//! let mask = MaskOperator::random(32, 32, 0.8, &mut rng)?;
//! let y = mask.gather(&truth)?;
//! let schedule = Schedule::linear(1000, 1e-4, 2e-2)?;
//! let model = GaussianConjugateDenoiser::new(Image::filled(shape, 0.5), 0.05, &schedule)?;
//! let task = TaskSpec::Inpaint { mask, sigma: 0.05, y };
//! let chain = run_sampler(&task, &model, &schedule, &SamplerConfig::default())?;
//! let summary = PosteriorSummary::from_chain(&chain, 0.9)?;
//! # Ok::<(), pnp_sgs::Error>(())
//! ```

pub mod checkpoint;
pub mod denoiser;
mod error;
pub mod external;
pub mod fft;
mod image;
pub mod metrics;
pub mod noise;
pub mod npy;
pub mod operator;
pub mod protocol;
pub mod sampler;
pub mod schedule;

pub use denoiser::{
    forward_diffuse, reverse_step, run_reverse, GaussianConjugateDenoiser, ReverseKernel, ReverseMoments,
    StochasticDenoiser,
};
pub use error::{Error, Result};
pub use external::ExternalDenoiser;
pub use image::{Image, Shape};
pub use metrics::{psnr, ssim, MetricReport};
pub use noise::{estimate_sigma, estimate_sigma_with, NoiseEstimate, Wavelet};
pub use operator::{
    degrade, CirculantOperator, ConvolutionKernel, LinearOperator, MaskOperator, Measurement, NoiseModel,
};
pub use sampler::{
    credible_interval, mmse, pixel_std, run_sampler, run_sampler_with_rng, sample_sr_x, sample_sr_z1,
    sample_x_deblur, sample_x_inpaint, Chain, ChainSamples, Coupling, PosteriorSummary, SamplerConfig,
    TaskSpec,
};
pub use schedule::{Schedule, ScheduleKind};
