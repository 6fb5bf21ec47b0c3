//! Diffusion variance schedules.
//!
//! A schedule holds the per-step forward variances `beta(1..=T)` and the
//! cumulative noise variance `nu(t) = 1 - prod_{j<=t} (1 - beta(j))`, which
//! increases from `nu(0) = 0` towards 1. The mean of the diffused state is
//! scaled by `sqrt(1 - nu(t))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper clip applied to betas implied by the cosine schedule.
pub const COSINE_MAX_BETA: f64 = 0.999;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleKind {
    Linear {
        steps: usize,
        beta_start: f64,
        beta_end: f64,
    },
    Cosine {
        steps: usize,
        offset: f64,
    },
}

impl ScheduleKind {
    pub fn build(&self) -> Result<Schedule> {
        match *self {
            ScheduleKind::Linear {
                steps,
                beta_start,
                beta_end,
            } => Schedule::linear(steps, beta_start, beta_end),
            ScheduleKind::Cosine { steps, offset } => Schedule::cosine(steps, offset),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Schedule {
    kind: ScheduleKind,
    /// `betas[j - 1] = beta(j)`.
    betas: Vec<f64>,
    /// `noise_var[t] = nu(t)` for `t = 0..=T`.
    noise_var: Vec<f64>,
    signal_scale: Vec<f64>,
}

impl Schedule {
    /// Linear betas with `beta(1) = beta_start` and `beta(T) = beta_end`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Parameter("schedule needs at least one step".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Parameter(format!(
                "linear schedule requires 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        let betas: Vec<f64> = (1..=steps)
            .map(|j| {
                if steps == 1 {
                    beta_start
                } else if j == steps {
                    beta_end
                } else {
                    beta_start + (beta_end - beta_start) * (j - 1) as f64 / (steps - 1) as f64
                }
            })
            .collect();

        let mut noise_var = Vec::with_capacity(steps + 1);
        let mut signal_scale = Vec::with_capacity(steps + 1);
        let mut retained = 1.0;
        noise_var.push(0.0);
        signal_scale.push(1.0);
        for &b in &betas {
            retained *= 1.0 - b;
            noise_var.push(1.0 - retained);
            signal_scale.push(retained.sqrt());
        }
        Ok(Self {
            kind: ScheduleKind::Linear {
                steps,
                beta_start,
                beta_end,
            },
            betas,
            noise_var,
            signal_scale,
        })
    }

    /// Cosine schedule `nu(t) = 1 - g(t)/g(0)` with
    /// `g(t) = cos^2(pi/2 * (t/T + s) / (1 + s))`.
    pub fn cosine(steps: usize, offset: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Parameter("schedule needs at least one step".into()));
        }
        if !(offset > 0.0 && offset.is_finite()) {
            return Err(Error::Parameter(format!(
                "cosine offset must be positive, got {offset}"
            )));
        }
        let g = |t: usize| {
            let phase = (t as f64 / steps as f64 + offset) / (1.0 + offset);
            (std::f64::consts::FRAC_PI_2 * phase).cos().powi(2)
        };
        let g0 = g(0);
        let mut noise_var: Vec<f64> = (0..=steps).map(|t| 1.0 - g(t) / g0).collect();
        noise_var[0] = 0.0;
        let signal_scale = noise_var.iter().map(|nu| (1.0 - nu).max(0.0).sqrt()).collect();
        let betas = (1..=steps)
            .map(|j| {
                let b = 1.0 - (1.0 - noise_var[j]) / (1.0 - noise_var[j - 1]);
                b.clamp(f64::MIN_POSITIVE, COSINE_MAX_BETA)
            })
            .collect();
        Ok(Self {
            kind: ScheduleKind::Cosine { steps, offset },
            betas,
            noise_var,
            signal_scale,
        })
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    /// Short identifier, e.g. `linear-T1000-1e-4-2e-2`.
    pub fn id(&self) -> String {
        match self.kind {
            ScheduleKind::Linear {
                steps,
                beta_start,
                beta_end,
            } => format!("linear-T{steps}-{beta_start:e}-{beta_end:e}"),
            ScheduleKind::Cosine { steps, offset } => format!("cosine-T{steps}-{offset:e}"),
        }
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.steps() {
            return Err(Error::StepOutOfRange {
                step: t,
                max: self.steps(),
            });
        }
        Ok(self.betas[t - 1])
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Cumulative noise variance `nu(t)`.
    pub fn noise_variance(&self, t: usize) -> Result<f64> {
        self.noise_var
            .get(t)
            .copied()
            .ok_or(Error::StepOutOfRange {
                step: t,
                max: self.steps(),
            })
    }

    pub fn noise_variances(&self) -> &[f64] {
        &self.noise_var
    }

    /// Mean scale `sqrt(1 - nu(t))`.
    pub fn signal_scale(&self, t: usize) -> Result<f64> {
        self.signal_scale
            .get(t)
            .copied()
            .ok_or(Error::StepOutOfRange {
                step: t,
                max: self.steps(),
            })
    }

    /// Table lookup of `argmin_t |nu(t) - sigma2|`, ties resolved toward the
    /// smaller step. Values beyond `nu(T)` map to `T`.
    pub fn invert_noise_variance(&self, sigma2: f64) -> usize {
        let table = &self.noise_var;
        if sigma2.is_nan() || sigma2 <= 0.0 {
            return 0;
        }
        let upper = table.partition_point(|&nu| nu < sigma2);
        if upper == 0 {
            return 0;
        }
        if upper == table.len() {
            return self.steps();
        }
        let lower = upper - 1;
        if sigma2 - table[lower] <= table[upper] - sigma2 {
            lower
        } else {
            upper
        }
    }
}
