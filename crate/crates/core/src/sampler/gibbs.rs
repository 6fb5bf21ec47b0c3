//! The split Gibbs sweep and its chain record.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::xstep::{sample_sr_x, sample_sr_z1, sample_x_deblur, sample_x_inpaint, Coupling};
use crate::denoiser::StochasticDenoiser;
use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::noise::estimate_sigma;
use crate::operator::{CirculantOperator, MaskOperator, Measurement, NoiseModel};
use crate::schedule::Schedule;

/// An inverse problem: forward operator, noise and observation.
#[derive(Clone, Debug)]
pub enum TaskSpec {
    Deblur {
        op: CirculantOperator,
        noise: NoiseModel,
        y: Image,
    },
    Inpaint {
        mask: MaskOperator,
        sigma: f64,
        y: Measurement,
    },
    /// `y = S B x + n` with the double splitting `z1 ~ B x`, `z2 ~ z1`.
    SuperRes {
        blur: CirculantOperator,
        mask: MaskOperator,
        sigma: f64,
        rho1: f64,
        rho2: f64,
        /// Ridge added to the x precision; `None` means `1e-6 / rho1^2`.
        ridge: Option<f64>,
        y: Measurement,
    },
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be positive, got {v}")))
    }
}

fn check_observation(y: &Measurement, mask: &MaskOperator) -> Result<()> {
    if y.per_channel() != mask.kept_len() {
        return Err(Error::shape(
            format!("{} observed values per channel", mask.kept_len()),
            y.per_channel(),
        ));
    }
    Ok(())
}

impl TaskSpec {
    /// Validates the task and returns the shape of the unknown image.
    pub fn image_shape(&self) -> Result<Shape> {
        match self {
            TaskSpec::Deblur { op, noise, y } => {
                if y.height() != op.height() || y.width() != op.width() {
                    return Err(Error::shape(format!("{}x{} grid", op.height(), op.width()), y.shape()));
                }
                noise.check_len(y.len())?;
                if !noise.is_proper() {
                    return Err(Error::Parameter("noise variances must be strictly positive".into()));
                }
                Ok(y.shape())
            }
            TaskSpec::Inpaint { mask, sigma, y } => {
                require_positive("sigma", *sigma)?;
                check_observation(y, mask)?;
                Ok(Shape::new(y.channels(), mask.height(), mask.width()))
            }
            TaskSpec::SuperRes {
                blur,
                mask,
                sigma,
                rho1,
                rho2,
                ridge,
                y,
            } => {
                require_positive("sigma", *sigma)?;
                require_positive("rho1", *rho1)?;
                require_positive("rho2", *rho2)?;
                if let Some(r) = ridge {
                    if !(*r >= 0.0 && r.is_finite()) {
                        return Err(Error::Parameter(format!("ridge must be non-negative, got {r}")));
                    }
                }
                if blur.height() != mask.height() || blur.width() != mask.width() {
                    return Err(Error::shape(
                        format!("{}x{} mask grid", blur.height(), blur.width()),
                        format!("{}x{}", mask.height(), mask.width()),
                    ));
                }
                check_observation(y, mask)?;
                Ok(Shape::new(y.channels(), mask.height(), mask.width()))
            }
        }
    }

    /// Starting value of the split variable.
    ///
    /// Inpainting scatters `y` and fills unobserved pixels with the observed
    /// per-channel mean; deblurring starts at `y`; super-resolution uses the
    /// adjoint `B^T S^T y` scaled by `N / M` so intensities stay comparable.
    pub fn initial_split(&self) -> Result<Image> {
        let shape = self.image_shape()?;
        match self {
            TaskSpec::Deblur { y, .. } => Ok(y.clone()),
            TaskSpec::Inpaint { mask, y, .. } => {
                let mut z = mask.scatter(y, 0.0)?;
                let flags = mask.keep_flags();
                for c in 0..shape.channels {
                    let obs = y.channel(c);
                    let fill = if obs.is_empty() {
                        0.0
                    } else {
                        obs.iter().sum::<f64>() / obs.len() as f64
                    };
                    for (v, &kept) in z.plane_mut(c).iter_mut().zip(&flags) {
                        if !kept {
                            *v = fill;
                        }
                    }
                }
                Ok(z)
            }
            TaskSpec::SuperRes { blur, mask, y, .. } => {
                let gain = if mask.kept_len() == 0 {
                    0.0
                } else {
                    mask.total_pixels() as f64 / mask.kept_len() as f64
                };
                Ok(blur.adjoint(&mask.scatter(y, 0.0)?)?.scale(gain))
            }
        }
    }
}

/// Settings of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Coupling standard deviation between `x` and `z`.
    pub rho: f64,
    /// Total number of iterations, burn-in included.
    pub n_mc: usize,
    pub n_bi: usize,
    /// Stop burn-in reverse runs at `ceil(t*/2)`.
    pub early_stop: bool,
    /// Scale the denoiser input by `sqrt(1 - nu(t*))`.
    pub rescale_input: bool,
    /// Upper bound on `t*`; `None` means `T / 10`.
    pub t_star_cap: Option<usize>,
    pub seed: u64,
    /// Stored sample values (x and z together) above which the chain keeps
    /// running moments and reservoirs instead of every image.
    pub chain_budget: usize,
    /// Per-pixel reservoir length used for quantiles in thin mode.
    pub reservoir: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            rho: 0.7,
            n_mc: 100,
            n_bi: 20,
            early_stop: true,
            rescale_input: false,
            t_star_cap: None,
            seed: 0,
            chain_budget: 1 << 27,
            reservoir: 256,
        }
    }
}

impl SamplerConfig {
    /// Settings used with face-image diffusion models.
    pub fn ffhq() -> Self {
        Self::default()
    }

    /// Settings used with natural-image diffusion models.
    pub fn imagenet() -> Self {
        Self {
            rho: 1.625,
            ..Self::default()
        }
    }

    pub fn resolved_cap(&self, schedule: &Schedule) -> usize {
        self.t_star_cap.unwrap_or(schedule.steps() / 10)
    }

    pub fn validate(&self, schedule: &Schedule) -> Result<()> {
        require_positive("rho", self.rho)?;
        if !(self.n_bi > 0 && self.n_bi < self.n_mc) {
            return Err(Error::Parameter(format!(
                "burn-in must satisfy 0 < n_bi < n_mc, got n_bi={} n_mc={}",
                self.n_bi, self.n_mc
            )));
        }
        if self.resolved_cap(schedule) > schedule.steps() {
            return Err(Error::Parameter(format!(
                "t_star_cap {} exceeds the schedule length {}",
                self.resolved_cap(schedule),
                schedule.steps()
            )));
        }
        if self.reservoir < 2 {
            return Err(Error::Parameter("reservoir must hold at least 2 samples".into()));
        }
        Ok(())
    }
}

/// Running statistics kept instead of the full sample record.
#[derive(Clone, Debug)]
pub struct ThinRecord {
    count: usize,
    mean_x: Vec<f64>,
    m2_x: Vec<f64>,
    mean_z: Vec<f64>,
    /// Slot-major reservoir of post-burn-in x values.
    reservoir: Vec<f64>,
    capacity: usize,
    rng: ChaCha8Rng,
}

impl ThinRecord {
    fn new(len: usize, capacity: usize, seed: u64) -> Self {
        Self {
            count: 0,
            mean_x: vec![0.0; len],
            m2_x: vec![0.0; len],
            mean_z: vec![0.0; len],
            reservoir: Vec::with_capacity(capacity * len),
            capacity,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7e5e_7701_d001),
        }
    }

    fn push(&mut self, x: &Image, z: &Image) {
        self.count += 1;
        let n = self.count as f64;
        for (i, &v) in x.as_slice().iter().enumerate() {
            let delta = v - self.mean_x[i];
            self.mean_x[i] += delta / n;
            self.m2_x[i] += delta * (v - self.mean_x[i]);
        }
        for (m, &v) in self.mean_z.iter_mut().zip(z.as_slice()) {
            *m += (v - *m) / n;
        }
        let len = x.len();
        if self.count <= self.capacity {
            self.reservoir.extend_from_slice(x.as_slice());
        } else {
            let slot = self.rng.random_range(0..self.count);
            if slot < self.capacity {
                self.reservoir[slot * len..(slot + 1) * len].copy_from_slice(x.as_slice());
            }
        }
    }

    /// Number of post-burn-in samples absorbed.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean_x(&self) -> &[f64] {
        &self.mean_x
    }

    pub fn mean_z(&self) -> &[f64] {
        &self.mean_z
    }

    /// Unbiased per-pixel variance of x.
    pub fn variance_x(&self) -> Vec<f64> {
        let denom = (self.count.max(2) - 1) as f64;
        self.m2_x.iter().map(|m| m / denom).collect()
    }

    /// Retained x samples, each `len` values long.
    pub fn reservoir(&self) -> impl Iterator<Item = &[f64]> {
        self.reservoir.chunks_exact(self.mean_x.len())
    }

    pub fn reservoir_len(&self) -> usize {
        self.count.min(self.capacity)
    }
}

#[derive(Clone, Debug)]
pub enum ChainSamples {
    Full { x: Vec<Image>, z: Vec<Image> },
    Thin(Box<ThinRecord>),
}

/// Ordered record of a sampler run.
#[derive(Clone, Debug)]
pub struct Chain {
    shape: Shape,
    n_bi: usize,
    config: SamplerConfig,
    t_star: Vec<usize>,
    samples: ChainSamples,
}

impl Chain {
    /// Builds a chain from complete sample lists, e.g. for summarizing
    /// samples produced elsewhere.
    pub fn from_samples(x: Vec<Image>, z: Vec<Image>, t_star: Vec<usize>, n_bi: usize) -> Result<Self> {
        let first = x
            .first()
            .ok_or_else(|| Error::InsufficientSamples("chain has no samples".into()))?;
        let shape = first.shape();
        if z.len() != x.len() || t_star.len() != x.len() {
            return Err(Error::Parameter(format!(
                "chain lengths differ: {} x, {} z, {} t*",
                x.len(),
                z.len(),
                t_star.len()
            )));
        }
        for img in x.iter().chain(&z) {
            img.ensure_shape(shape)?;
        }
        let config = SamplerConfig {
            n_mc: x.len(),
            n_bi,
            ..SamplerConfig::default()
        };
        Ok(Self {
            shape,
            n_bi,
            config,
            t_star,
            samples: ChainSamples::Full { x, z },
        })
    }

    /// Replaces the recorded settings, e.g. when reloading a checkpoint.
    pub fn with_config(mut self, config: SamplerConfig) -> Self {
        self.config = config;
        self
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Total number of recorded iterations.
    pub fn len(&self) -> usize {
        self.t_star.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_star.is_empty()
    }

    pub fn n_bi(&self) -> usize {
        self.n_bi
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn t_star_trace(&self) -> &[usize] {
        &self.t_star
    }

    pub fn samples(&self) -> &ChainSamples {
        &self.samples
    }

    pub fn x_samples(&self) -> Option<&[Image]> {
        match &self.samples {
            ChainSamples::Full { x, .. } => Some(x),
            ChainSamples::Thin(_) => None,
        }
    }

    pub fn z_samples(&self) -> Option<&[Image]> {
        match &self.samples {
            ChainSamples::Full { z, .. } => Some(z),
            ChainSamples::Thin(_) => None,
        }
    }

    pub fn is_thin(&self) -> bool {
        matches!(self.samples, ChainSamples::Thin(_))
    }

    fn record(&mut self, x: Image, z: Image, t_star: usize) {
        let burn_in = self.t_star.len() < self.n_bi;
        self.t_star.push(t_star);
        match &mut self.samples {
            ChainSamples::Full { x: xs, z: zs } => {
                xs.push(x);
                zs.push(z);
            }
            ChainSamples::Thin(thin) => {
                if !burn_in {
                    thin.push(&x, &z);
                }
            }
        }
    }
}

/// Runs one chain seeded from `cfg.seed`.
pub fn run_sampler(
    task: &TaskSpec,
    model: &dyn StochasticDenoiser,
    schedule: &Schedule,
    cfg: &SamplerConfig,
) -> Result<Chain> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run_sampler_with_rng(task, model, schedule, cfg, &mut rng)
}

/// Runs one chain drawing every random number from `rng`.
///
/// Each iteration draws `x` given `z` (super-resolution: `z1`, then `x`),
/// estimates the noise level of the denoiser input, maps it to a diffusion
/// step `t*` and replaces `z` by a reverse diffusion run started there.
pub fn run_sampler_with_rng(
    task: &TaskSpec,
    model: &dyn StochasticDenoiser,
    schedule: &Schedule,
    cfg: &SamplerConfig,
    rng: &mut dyn RngCore,
) -> Result<Chain> {
    cfg.validate(schedule)?;
    let shape = task.image_shape()?;
    let cap = cfg.resolved_cap(schedule);

    let stored = cfg.n_mc.saturating_mul(shape.len()).saturating_mul(2);
    let samples = if stored > cfg.chain_budget {
        log::info!("chain exceeds budget ({stored} values), keeping running summaries");
        ChainSamples::Thin(Box::new(ThinRecord::new(shape.len(), cfg.reservoir, cfg.seed)))
    } else {
        ChainSamples::Full {
            x: Vec::with_capacity(cfg.n_mc),
            z: Vec::with_capacity(cfg.n_mc),
        }
    };
    let mut chain = Chain {
        shape,
        n_bi: cfg.n_bi,
        config: cfg.clone(),
        t_star: Vec::with_capacity(cfg.n_mc),
        samples,
    };

    let mut z = task.initial_split()?;
    let mut x = z.clone();
    for n in 1..=cfg.n_mc {
        let at = |source: Error| Error::AtIteration {
            iteration: n,
            source: Box::new(source),
        };
        let input = match task {
            TaskSpec::Deblur { op, noise, y } => {
                x = sample_x_deblur(y, &z, op, noise, cfg.rho, rng).map_err(at)?;
                x.clone()
            }
            TaskSpec::Inpaint { mask, sigma, y } => {
                x = sample_x_inpaint(y, &z, mask, *sigma, cfg.rho, rng).map_err(at)?;
                x.clone()
            }
            TaskSpec::SuperRes {
                blur,
                mask,
                sigma,
                rho1,
                rho2,
                ridge,
                y,
            } => {
                let coupling = Coupling { target: &z, rho: *rho2 };
                let z1 = sample_sr_z1(y, &x, mask, blur, *sigma, *rho1, Some(coupling), rng).map_err(at)?;
                let ridge = ridge.unwrap_or(1e-6 / (rho1 * rho1));
                x = sample_sr_x(&z1, blur, *rho1, ridge, rng).map_err(at)?;
                z1
            }
        };

        let sigma_hat = estimate_sigma(&input).map_err(at)?.sigma;
        let t_star = schedule.invert_noise_variance(sigma_hat * sigma_hat).min(cap);
        let t_stop = if cfg.early_stop && n <= cfg.n_bi {
            t_star.div_ceil(2)
        } else {
            0
        };
        let start = if cfg.rescale_input {
            input.scale(schedule.signal_scale(t_star).map_err(at)?)
        } else {
            input
        };
        z = model.run_reverse(&start, t_star, t_stop, rng).map_err(at)?;
        if z.shape() != shape || !z.all_finite() {
            return Err(at(Error::Contract(format!(
                "denoiser returned shape {} or non-finite values",
                z.shape()
            ))));
        }
        log::debug!("iteration {n}: sigma_hat={sigma_hat:.4e} t*={t_star} stop={t_stop}");
        chain.record(x.clone(), z.clone(), t_star);
    }
    Ok(chain)
}
