//! Run configuration: one strict JSON document per experiment.

use std::collections::HashSet;
use std::fs;
use std::path::{Component, Path, PathBuf};

use pnp_sgs::{SamplerConfig, ScheduleKind};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskConfig,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleKind,
    #[serde(default)]
    pub sampler: SamplerConfig,
    pub denoiser: DenoiserConfig,
    pub io: IoConfig,
}

fn default_schedule() -> ScheduleKind {
    ScheduleKind::Linear {
        steps: 1000,
        beta_start: 1e-4,
        beta_end: 2e-2,
    }
}

fn default_sigma() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    Deblur {
        #[serde(default = "deblur_kernel_size")]
        kernel_size: usize,
        #[serde(default = "deblur_kernel_std")]
        kernel_std: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
        /// Per-value noise variances as NPY, `C * H * W` entries. Overrides `sigma`.
        #[serde(default)]
        noise_map: Option<PathBuf>,
    },
    Inpaint {
        /// Fraction of pixels removed.
        #[serde(default = "inpaint_fraction")]
        fraction: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    SuperResolution {
        #[serde(default = "sr_kernel_size")]
        kernel_size: usize,
        #[serde(default = "sr_kernel_std")]
        kernel_std: f64,
        #[serde(default = "sr_factor")]
        factor: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
        rho1: f64,
        rho2: f64,
        #[serde(default)]
        ridge: Option<f64>,
    },
}

fn deblur_kernel_size() -> usize {
    61
}
fn deblur_kernel_std() -> f64 {
    3.0
}
fn inpaint_fraction() -> f64 {
    0.8
}
fn sr_kernel_size() -> usize {
    9
}
fn sr_kernel_std() -> f64 {
    1.5
}
fn sr_factor() -> usize {
    4
}

/// Prior mean of the analytic denoiser: a constant or an image file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorMean {
    Constant(f64),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DenoiserConfig {
    Analytic {
        prior_mean: PriorMean,
        tau2: f64,
    },
    External {
        command: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
    },
}

fn default_timeout() -> f64 {
    60.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    /// Clean image (PNG or NPY); degradation input and evaluation reference.
    pub input: PathBuf,
    /// Written by `degrade`, read by `run`.
    pub measurement_dir: PathBuf,
    /// Written by `run`.
    pub output_dir: PathBuf,
    /// Evaluation report; defaults to `<output_dir>/report.json`.
    #[serde(default)]
    pub report: Option<PathBuf>,
}

impl IoConfig {
    pub fn report_path(&self) -> PathBuf {
        self.report.clone().unwrap_or_else(|| self.output_dir.join("report.json"))
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

/// Lexical normalization; paths need not exist yet.
fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for part in path.components() {
        match part {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other),
        }
    }
    out
}

impl RunConfig {
    pub fn load(path: &Path, seed: Option<u64>) -> Result<(Self, Value), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")), seed)
    }

    /// Parses `text`, resolves relative paths against `base` and applies a
    /// seed override. Also returns the effective config as JSON.
    pub fn parse(text: &str, base: &Path, seed: Option<u64>) -> Result<(Self, Value), CliError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(seed) = seed {
            cfg.sampler.seed = seed;
        }
        cfg.resolve(base);
        cfg.validate()?;
        let value = serde_json::to_value(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
        Ok((cfg, value))
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.io.input);
        fix(&mut self.io.measurement_dir);
        fix(&mut self.io.output_dir);
        if let Some(p) = self.io.report.as_mut() {
            fix(p);
        }
        if let TaskConfig::Deblur {
            noise_map: Some(p), ..
        } = &mut self.task
        {
            fix(p);
        }
        if let DenoiserConfig::Analytic {
            prior_mean: PriorMean::File(p),
            ..
        } = &mut self.denoiser
        {
            fix(p);
        }
    }

    fn paths(&self) -> Vec<(&'static str, &Path)> {
        let mut out = vec![
            ("io.input", self.io.input.as_path()),
            ("io.measurement_dir", self.io.measurement_dir.as_path()),
            ("io.output_dir", self.io.output_dir.as_path()),
        ];
        if let Some(p) = &self.io.report {
            out.push(("io.report", p));
        }
        if let TaskConfig::Deblur {
            noise_map: Some(p), ..
        } = &self.task
        {
            out.push(("task.noise_map", p));
        }
        if let DenoiserConfig::Analytic {
            prior_mean: PriorMean::File(p),
            ..
        } = &self.denoiser
        {
            out.push(("denoiser.prior_mean", p));
        }
        out
    }

    fn validate(&self) -> Result<(), CliError> {
        let mut seen = HashSet::new();
        for (key, path) in self.paths() {
            if !seen.insert(normalize(path)) {
                return Err(CliError::Config(format!(
                    "{key} repeats the path {}; every path must be distinct",
                    path.display()
                )));
            }
        }
        let bad = |msg: String| Err(CliError::Config(msg));
        match &self.task {
            TaskConfig::Deblur {
                kernel_size, sigma, ..
            } => {
                if *kernel_size == 0 {
                    return bad("task.kernel_size must be positive".into());
                }
                if !positive(*sigma) {
                    return bad(format!("task.sigma must be positive, got {sigma}"));
                }
            }
            TaskConfig::Inpaint { fraction, sigma } => {
                if !(0.0..1.0).contains(fraction) {
                    return bad(format!("task.fraction must lie in [0, 1), got {fraction}"));
                }
                if !positive(*sigma) {
                    return bad(format!("task.sigma must be positive, got {sigma}"));
                }
            }
            TaskConfig::SuperResolution {
                factor,
                sigma,
                rho1,
                rho2,
                ..
            } => {
                if *factor == 0 {
                    return bad("task.factor must be positive".into());
                }
                for (name, v) in [("sigma", sigma), ("rho1", rho1), ("rho2", rho2)] {
                    if !positive(*v) {
                        return bad(format!("task.{name} must be positive, got {v}"));
                    }
                }
            }
        }
        match &self.denoiser {
            DenoiserConfig::Analytic { tau2, .. } if !positive(*tau2) => {
                bad(format!("denoiser.tau2 must be positive, got {tau2}"))
            }
            DenoiserConfig::External { command, .. } if command.is_empty() => {
                bad("denoiser.command must name a program".into())
            }
            DenoiserConfig::External { timeout_s, .. } if !positive(*timeout_s) => {
                bad(format!("denoiser.timeout_s must be positive, got {timeout_s}"))
            }
            _ => Ok(()),
        }
    }
}
