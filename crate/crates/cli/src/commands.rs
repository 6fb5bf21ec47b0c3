use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use pnp_sgs::checkpoint::{self, digest};
use pnp_sgs::npy::{NpyArray, NpyData};
use pnp_sgs::{
    degrade, run_sampler, Chain, CirculantOperator, ConvolutionKernel, ExternalDenoiser, GaussianConjugateDenoiser,
    Image, LinearOperator, MaskOperator, Measurement, MetricReport, NoiseModel, PosteriorSummary, SamplerConfig,
    Schedule, Shape, StochasticDenoiser, TaskSpec,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{DenoiserConfig, PriorMean, RunConfig, TaskConfig};
use crate::files;
use crate::CliError;

pub const DEGRADE_MANIFEST: &str = "degrade.json";
pub const MEASUREMENT: &str = "measurement.npy";
pub const MASK: &str = "mask.npy";
pub const KERNEL: &str = "kernel.npy";
pub const NOISE_VARIANCES: &str = "noise_variances.npy";
pub const RUN_SUMMARY: &str = "run_summary.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const CREDIBLE_LEVEL: f64 = 0.9;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradeManifest {
    pub task: TaskConfig,
    /// `[C, H, W]` of the clean image.
    pub image_shape: [usize; 3],
    pub seed: u64,
    pub task_digest: String,
    pub files: Vec<String>,
}

fn blur(size: usize, std: f64, h: usize, w: usize) -> Result<(ConvolutionKernel, CirculantOperator), CliError> {
    let kernel = ConvolutionKernel::gaussian(size, std).map_err(|e| CliError::Config(format!("task kernel: {e}")))?;
    let op = CirculantOperator::from_kernel(&kernel, h, w).map_err(|e| CliError::Config(format!("task kernel: {e}")))?;
    Ok((kernel, op))
}

fn kernel_array(kernel: &ConvolutionKernel) -> NpyArray {
    NpyArray {
        shape: vec![kernel.rows(), kernel.cols()],
        data: NpyData::F64(kernel.taps().to_vec()),
    }
}

fn mask_array(mask: &MaskOperator) -> NpyArray {
    NpyArray {
        shape: vec![mask.kept_len()],
        data: NpyData::I64(mask.kept_indices().iter().map(|&k| k as i64).collect()),
    }
}

fn measurement_array(y: &Measurement) -> NpyArray {
    NpyArray {
        shape: vec![y.channels(), y.per_channel()],
        data: NpyData::F32(y.values().iter().map(|&v| v as f32).collect()),
    }
}

fn task_digest(task: &TaskConfig) -> Result<String, CliError> {
    let value = serde_json::to_value(task).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(digest(&value))
}

pub fn degrade_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let x = files::load_image(&cfg.io.input)?;
    let s = x.shape();
    let (h, w) = (s.height, s.width);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sampler.seed);
    let dir = &cfg.io.measurement_dir;
    files::create_dir(dir)?;
    let mut written = vec![MEASUREMENT.to_string()];

    let y = match &cfg.task {
        TaskConfig::Deblur {
            kernel_size,
            kernel_std,
            sigma,
            noise_map,
        } => {
            let (kernel, op) = blur(*kernel_size, *kernel_std, h, w)?;
            let noise = match noise_map {
                Some(path) => {
                    let variances = files::load_array(path)?.data.to_f64();
                    let model = NoiseModel::diagonal(variances.clone())
                        .map_err(|e| CliError::Config(format!("task.noise_map: {e}")))?;
                    files::save_array(
                        &dir.join(NOISE_VARIANCES),
                        &NpyArray::new(vec![variances.len()], NpyData::F64(variances)).map_err(CliError::from_core)?,
                    )?;
                    written.push(NOISE_VARIANCES.into());
                    model
                }
                None => NoiseModel::scalar(*sigma).map_err(|e| CliError::Config(format!("task.sigma: {e}")))?,
            };
            files::save_array(&dir.join(KERNEL), &kernel_array(&kernel))?;
            written.push(KERNEL.into());
            let y = degrade(&x, &LinearOperator::Circulant(op), &noise, &mut rng).map_err(CliError::from_core)?;
            let y = y.into_image(h, w).map_err(CliError::from_core)?;
            files::save_npy(&dir.join(MEASUREMENT), &y)?;
            None
        }
        TaskConfig::Inpaint { fraction, sigma } => {
            let mask = MaskOperator::random(h, w, *fraction, &mut rng)
                .map_err(|e| CliError::Config(format!("task.fraction: {e}")))?;
            files::save_array(&dir.join(MASK), &mask_array(&mask))?;
            written.push(MASK.into());
            let noise = NoiseModel::scalar(*sigma).map_err(|e| CliError::Config(format!("task.sigma: {e}")))?;
            Some(degrade(&x, &LinearOperator::Mask(mask), &noise, &mut rng).map_err(CliError::from_core)?)
        }
        TaskConfig::SuperResolution {
            kernel_size,
            kernel_std,
            factor,
            sigma,
            ..
        } => {
            let (kernel, op) = blur(*kernel_size, *kernel_std, h, w)?;
            let mask = MaskOperator::strided(h, w, *factor).map_err(|e| CliError::Config(format!("task.factor: {e}")))?;
            files::save_array(&dir.join(KERNEL), &kernel_array(&kernel))?;
            files::save_array(&dir.join(MASK), &mask_array(&mask))?;
            written.extend([KERNEL.into(), MASK.into()]);
            let noise = NoiseModel::scalar(*sigma).map_err(|e| CliError::Config(format!("task.sigma: {e}")))?;
            let op = LinearOperator::composed(op, mask).map_err(CliError::from_core)?;
            Some(degrade(&x, &op, &noise, &mut rng).map_err(CliError::from_core)?)
        }
    };
    if let Some(y) = y {
        files::save_array(&dir.join(MEASUREMENT), &measurement_array(&y))?;
    }

    let manifest = DegradeManifest {
        task: cfg.task.clone(),
        image_shape: [s.channels, h, w],
        seed: cfg.sampler.seed,
        task_digest: task_digest(&cfg.task)?,
        files: written,
    };
    files::write_json(&dir.join(DEGRADE_MANIFEST), &manifest)?;
    log::info!("degraded {} into {}", cfg.io.input.display(), dir.display());
    Ok(())
}

fn load_mask(dir: &Path, h: usize, w: usize) -> Result<MaskOperator, CliError> {
    let path = dir.join(MASK);
    let kept = files::indices(&files::load_array(&path)?, &path)?;
    MaskOperator::new(h, w, kept).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_kernel(dir: &Path) -> Result<ConvolutionKernel, CliError> {
    let path = dir.join(KERNEL);
    let array = files::load_array(&path)?;
    let [rows, cols] = array.shape[..] else {
        return Err(CliError::Io(format!("{}: kernel must be 2-D", path.display())));
    };
    ConvolutionKernel::new(rows, cols, array.data.to_f64()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_measurement(dir: &Path, channels: usize) -> Result<Measurement, CliError> {
    let path = dir.join(MEASUREMENT);
    let array = files::load_array(&path)?;
    if array.shape.first() != Some(&channels) {
        return Err(CliError::Io(format!(
            "{}: expected {channels} channels, got shape {:?}",
            path.display(),
            array.shape
        )));
    }
    Ok(Measurement::new(channels, array.data.to_f64()))
}

/// Rebuilds the inverse problem from the artifacts written by `degrade`.
pub fn load_task(cfg: &RunConfig) -> Result<(TaskSpec, Shape), CliError> {
    let dir = &cfg.io.measurement_dir;
    let manifest: DegradeManifest = files::read_json(&dir.join(DEGRADE_MANIFEST))?;
    if manifest.task != cfg.task {
        return Err(CliError::Config(format!(
            "task block differs from the one used to degrade {} (digest {})",
            dir.display(),
            manifest.task_digest
        )));
    }
    let [c, h, w] = manifest.image_shape;
    let shape = Shape::new(c, h, w);
    let task = match &cfg.task {
        TaskConfig::Deblur { sigma, noise_map, .. } => {
            let op = CirculantOperator::from_kernel(&load_kernel(dir)?, h, w).map_err(CliError::from_core)?;
            let noise = if noise_map.is_some() {
                NoiseModel::diagonal(files::load_array(&dir.join(NOISE_VARIANCES))?.data.to_f64())
                    .map_err(CliError::from_core)?
            } else {
                NoiseModel::scalar(*sigma).map_err(CliError::from_core)?
            };
            let y = load_measurement(dir, c)?
                .into_image(h, w)
                .map_err(|e| CliError::Io(format!("{}: {e}", dir.join(MEASUREMENT).display())))?;
            TaskSpec::Deblur { op, noise, y }
        }
        TaskConfig::Inpaint { sigma, .. } => TaskSpec::Inpaint {
            mask: load_mask(dir, h, w)?,
            sigma: *sigma,
            y: load_measurement(dir, c)?,
        },
        TaskConfig::SuperResolution {
            sigma,
            rho1,
            rho2,
            ridge,
            ..
        } => TaskSpec::SuperRes {
            blur: CirculantOperator::from_kernel(&load_kernel(dir)?, h, w).map_err(CliError::from_core)?,
            mask: load_mask(dir, h, w)?,
            sigma: *sigma,
            rho1: *rho1,
            rho2: *rho2,
            ridge: *ridge,
            y: load_measurement(dir, c)?,
        },
    };
    task.image_shape().map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok((task, shape))
}

fn build_denoiser(cfg: &RunConfig, schedule: &Schedule, shape: Shape) -> Result<Box<dyn StochasticDenoiser>, CliError> {
    match &cfg.denoiser {
        DenoiserConfig::Analytic { prior_mean, tau2 } => {
            let m0 = match prior_mean {
                PriorMean::Constant(v) => Image::filled(shape, *v),
                PriorMean::File(path) => {
                    let m0 = files::load_image(path)?;
                    if m0.shape() != shape {
                        return Err(CliError::Config(format!(
                            "denoiser.prior_mean has shape {}, the image is {shape}",
                            m0.shape()
                        )));
                    }
                    m0
                }
            };
            let model = GaussianConjugateDenoiser::new(m0, *tau2, schedule)
                .map_err(|e| CliError::Config(format!("denoiser: {e}")))?;
            Ok(Box::new(model))
        }
        DenoiserConfig::External { command, timeout_s } => {
            let model = ExternalDenoiser::spawn(command, schedule.steps(), Duration::from_secs_f64(*timeout_s))
                .map_err(CliError::from_core)?;
            Ok(Box::new(model))
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TStarSummary {
    pub initial: usize,
    #[serde(rename = "final")]
    pub last: usize,
    /// First iteration after which the trace stays within a range of 2 steps.
    pub stabilization_iteration: usize,
}

impl TStarSummary {
    pub fn from_trace(trace: &[usize]) -> Option<Self> {
        let (&initial, &last) = (trace.first()?, trace.last()?);
        let (mut lo, mut hi) = (last, last);
        let mut start = trace.len();
        for (k, &t) in trace.iter().enumerate().rev() {
            lo = lo.min(t);
            hi = hi.max(t);
            if hi - lo > 2 {
                break;
            }
            start = k;
        }
        Some(Self {
            initial,
            last,
            stabilization_iteration: start + 1,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub wall_clock_seconds: f64,
    pub n_mc: usize,
    pub n_bi: usize,
    pub t_star: Option<TStarSummary>,
    pub config_digest: String,
}

fn write_outputs(dir: &Path, chain: &Chain, schedule: &Schedule, config: &Value, seconds: f64) -> Result<(), CliError> {
    files::create_dir(dir)?;
    let manifest = checkpoint::write_checkpoint(&dir.join(CHECKPOINT_DIR), chain, &schedule.id(), config)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.join(CHECKPOINT_DIR).display())))?;
    let summary = PosteriorSummary::from_chain(chain, CREDIBLE_LEVEL).map_err(CliError::from_core)?;
    files::save_both(dir, "mmse_x", &summary.mmse_x)?;
    files::save_both(dir, "mmse_z", &summary.mmse_z)?;
    files::save_both(dir, "ci_lower", &summary.ci_lower)?;
    files::save_both(dir, "ci_upper", &summary.ci_upper)?;
    files::save_both(dir, "pixel_std", &summary.pixel_std)?;

    let mut csv = String::from("iteration,t_star\n");
    for (n, t) in chain.t_star_trace().iter().enumerate() {
        let _ = writeln!(csv, "{},{t}", n + 1);
    }
    let path = dir.join("t_star_trace.csv");
    fs::write(&path, csv).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;

    let run = RunSummary {
        seed: chain.config().seed,
        wall_clock_seconds: seconds,
        n_mc: chain.len(),
        n_bi: chain.n_bi(),
        t_star: TStarSummary::from_trace(chain.t_star_trace()),
        config_digest: manifest.task_digest,
    };
    files::write_json(&dir.join(RUN_SUMMARY), &run)
}

pub fn chain_dir(output: &Path, k: usize, chains: usize) -> PathBuf {
    if chains == 1 {
        output.to_path_buf()
    } else {
        output.join(format!("chain_{k}"))
    }
}

pub fn run_cmd(cfg: &RunConfig, config: &Value, chains: usize) -> Result<(), CliError> {
    if chains == 0 {
        return Err(CliError::Config("--chains must be at least 1".into()));
    }
    let schedule = cfg.schedule.build().map_err(|e| CliError::Config(format!("schedule: {e}")))?;
    cfg.sampler
        .validate(&schedule)
        .map_err(|e| CliError::Config(format!("sampler: {e}")))?;
    let (task, shape) = load_task(cfg)?;

    let results: Vec<Result<(), CliError>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|k| {
                let (task, schedule) = (&task, &schedule);
                scope.spawn(move || -> Result<(), CliError> {
                    let sampler = SamplerConfig {
                        seed: cfg.sampler.seed.wrapping_add(k as u64),
                        ..cfg.sampler.clone()
                    };
                    let model = build_denoiser(cfg, schedule, shape)?;
                    let start = Instant::now();
                    let chain = run_sampler(task, model.as_ref(), schedule, &sampler).map_err(CliError::from_core)?;
                    let seconds = start.elapsed().as_secs_f64();
                    log::info!("chain {k} (seed {}) finished in {seconds:.2} s", sampler.seed);
                    write_outputs(&chain_dir(&cfg.io.output_dir, k, chains), &chain, schedule, config, seconds)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::Sampler("chain thread panicked".into()))))
            .collect()
    });
    results.into_iter().collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ImageReport {
    pub reference: PathBuf,
    pub estimate: PathBuf,
    #[serde(flatten)]
    pub metrics: MetricReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub images: Vec<ImageReport>,
    pub mean: MetricReport,
    pub runs: Vec<RunSummary>,
    pub config_digest: String,
}

fn run_dirs(output: &Path) -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = (0..)
        .map(|k| output.join(format!("chain_{k}")))
        .take_while(|d| d.is_dir())
        .collect();
    if dirs.is_empty() {
        dirs.push(output.to_path_buf());
    }
    dirs
}

pub fn eval_cmd(
    cfg: &RunConfig,
    config: &Value,
    references: Vec<PathBuf>,
    estimates: Vec<PathBuf>,
) -> Result<(), CliError> {
    let dirs = run_dirs(&cfg.io.output_dir);
    let estimates = if estimates.is_empty() {
        dirs.iter().map(|d| d.join("mmse_x.npy")).collect()
    } else {
        estimates
    };
    let references = match references.len() {
        0 => vec![cfg.io.input.clone(); estimates.len()],
        1 => vec![references[0].clone(); estimates.len()],
        n if n == estimates.len() => references,
        n => {
            return Err(CliError::Config(format!(
                "{n} references for {} estimates; give one reference or one per estimate",
                estimates.len()
            )))
        }
    };

    let mut images = Vec::with_capacity(estimates.len());
    for (reference, estimate) in references.into_iter().zip(estimates) {
        let (r, e) = (files::load_image(&reference)?, files::load_image(&estimate)?);
        let metrics = MetricReport::compute(&r, &e, 1.0)
            .map_err(|err| CliError::Io(format!("{} vs {}: {err}", reference.display(), estimate.display())))?;
        images.push(ImageReport {
            reference,
            estimate,
            metrics,
        });
    }
    let mean = MetricReport::mean(&images.iter().map(|i| i.metrics).collect::<Vec<_>>())
        .ok_or_else(|| CliError::Config("nothing to evaluate".into()))?;

    let runs: Vec<RunSummary> = dirs
        .iter()
        .map(|d| d.join(RUN_SUMMARY))
        .filter(|p| p.is_file())
        .map(|p| files::read_json(&p))
        .collect::<Result<_, _>>()?;
    let config_digest = runs
        .first()
        .map(|r| r.config_digest.clone())
        .unwrap_or_else(|| digest(config));

    let report = RunReport {
        images,
        mean,
        runs,
        config_digest,
    };
    let path = cfg.io.report_path();
    if let Some(parent) = path.parent() {
        files::create_dir(parent)?;
    }
    files::write_json(&path, &report)?;
    log::info!("report written to {}", path.display());
    Ok(())
}

/// `t,beta,nu,scale` rows for `t = 0..=T`.
pub fn schedule_table(schedule: &Schedule) -> String {
    let mut out = String::from("t,beta,nu,scale\n");
    for t in 0..=schedule.steps() {
        let beta = if t == 0 { 0.0 } else { schedule.betas()[t - 1] };
        let _ = writeln!(
            out,
            "{t},{beta:e},{:e},{:e}",
            schedule.noise_variances()[t],
            schedule.signal_scale(t).unwrap_or(f64::NAN)
        );
    }
    out
}
