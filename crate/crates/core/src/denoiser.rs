//! Diffusion-based stochastic denoisers.
//!
//! A denoiser is started from a noisy image treated as the diffusion state
//! `u_t` and walks the reverse chain `u_{t-1} ~ N(mean, diag(var))` down to a
//! stop step. In-process models expose the per-step moments through
//! [`ReverseKernel`]; anything that can only perform whole reverse runs (such
//! as a model served by another process) implements [`StochasticDenoiser`]
//! directly.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::schedule::Schedule;

/// Moments of the reverse transition `q(u_{t-1} | u_t)`.
#[derive(Clone, Debug)]
pub struct ReverseMoments {
    pub mean: Image,
    /// Per-pixel variance, same length as `mean`.
    pub variance: Vec<f64>,
}

/// Per-step reverse kernel with diagonal covariance.
pub trait ReverseKernel: Send + Sync {
    /// Number of diffusion steps `T` the kernel is defined for.
    fn steps(&self) -> usize;

    fn reverse_moments(&self, u_t: &Image, t: usize) -> Result<ReverseMoments>;
}

/// Anything that maps `u_{t_start}` to a draw of `u_{t_stop}`.
pub trait StochasticDenoiser: Send + Sync {
    fn run_reverse(
        &self,
        u_start: &Image,
        t_start: usize,
        t_stop: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Image>;
}

impl<K: ReverseKernel> StochasticDenoiser for K {
    fn run_reverse(
        &self,
        u_start: &Image,
        t_start: usize,
        t_stop: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Image> {
        check_run_bounds(t_start, t_stop, ReverseKernel::steps(self))?;
        let mut u = u_start.clone();
        for t in (t_stop + 1..=t_start).rev() {
            u = reverse_step(self, &u, t, rng)?;
        }
        Ok(u)
    }
}

pub(crate) fn check_run_bounds(t_start: usize, t_stop: usize, steps: usize) -> Result<()> {
    if t_start > steps {
        return Err(Error::StepOutOfRange {
            step: t_start,
            max: steps,
        });
    }
    if t_stop > t_start {
        return Err(Error::Parameter(format!(
            "reverse run must go downward, got {t_start} -> {t_stop}"
        )));
    }
    Ok(())
}

/// Draws `u_t ~ N(sqrt(1 - nu(t)) u0, nu(t) I)` in one shot.
pub fn forward_diffuse<R: Rng + ?Sized>(
    u0: &Image,
    t: usize,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<Image> {
    let nu = schedule.noise_variance(t)?;
    if t == 0 {
        return Ok(u0.clone());
    }
    let scale = schedule.signal_scale(t)?;
    let sd = nu.sqrt();
    Ok(u0.map(|v| scale * v + sd * rng.sample::<f64, _>(StandardNormal)))
}

/// Draws `u_{t-1}` from the model's reverse kernel at step `t`.
pub fn reverse_step<K: ReverseKernel + ?Sized>(
    model: &K,
    u_t: &Image,
    t: usize,
    rng: &mut dyn RngCore,
) -> Result<Image> {
    if t == 0 || t > model.steps() {
        return Err(Error::StepOutOfRange {
            step: t,
            max: model.steps(),
        });
    }
    let ReverseMoments { mut mean, variance } = model.reverse_moments(u_t, t)?;
    if mean.shape() != u_t.shape() || variance.len() != u_t.len() {
        return Err(Error::Contract(format!(
            "reverse moments at t={t} do not match input shape {}",
            u_t.shape()
        )));
    }
    for (m, &v) in mean.as_mut_slice().iter_mut().zip(&variance) {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Contract(format!(
                "non-positive reverse variance {v} at t={t}"
            )));
        }
        let eps: f64 = rng.sample(StandardNormal);
        *m += v.sqrt() * eps;
    }
    Ok(mean)
}

/// Runs the reverse chain from `t_start` down to `t_stop`.
pub fn run_reverse<D: StochasticDenoiser + ?Sized>(
    model: &D,
    u_start: &Image,
    t_start: usize,
    t_stop: usize,
    rng: &mut dyn RngCore,
) -> Result<Image> {
    model.run_reverse(u_start, t_start, t_stop, rng)
}

/// Exact reverse kernel for a Gaussian data distribution.
///
/// When `u_0 ~ N(m0, tau2 I)` and the forward chain uses the schedule's betas,
/// every pair `(u_{t-1}, u_t)` is jointly Gaussian and the reverse transition
/// is available in closed form:
///
/// ```text
/// s_t = prod_{j<=t} sqrt(1 - beta_j)          (mean scale)
/// v_t = (1 - beta_t) v_{t-1} + beta_t,  v_0 = tau2   (marginal variance)
/// E[u_{t-1} | u_t]   = s_{t-1} m0 + sqrt(1 - beta_t) v_{t-1} / v_t (u_t - s_t m0)
/// Var[u_{t-1} | u_t] = beta_t v_{t-1} / v_t
/// ```
///
/// Running the full reverse chain from `u_t` therefore samples `p(u_0 | u_t)`
/// exactly, which makes this model a reference for the sampler tests.
#[derive(Clone, Debug)]
pub struct GaussianConjugateDenoiser {
    prior_mean: Image,
    tau2: f64,
    betas: Vec<f64>,
    mean_scale: Vec<f64>,
    marginal_var: Vec<f64>,
}

impl GaussianConjugateDenoiser {
    pub fn new(prior_mean: Image, tau2: f64, schedule: &Schedule) -> Result<Self> {
        if !(tau2 > 0.0 && tau2.is_finite()) {
            return Err(Error::Parameter(format!(
                "prior variance must be positive, got {tau2}"
            )));
        }
        let betas = schedule.betas().to_vec();
        let mut mean_scale = Vec::with_capacity(betas.len() + 1);
        let mut marginal_var = Vec::with_capacity(betas.len() + 1);
        let (mut s, mut v) = (1.0f64, tau2);
        mean_scale.push(s);
        marginal_var.push(v);
        for &b in &betas {
            s *= (1.0 - b).sqrt();
            v = (1.0 - b) * v + b;
            mean_scale.push(s);
            marginal_var.push(v);
        }
        Ok(Self {
            prior_mean,
            tau2,
            betas,
            mean_scale,
            marginal_var,
        })
    }

    pub fn prior_mean(&self) -> &Image {
        &self.prior_mean
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }
}

impl ReverseKernel for GaussianConjugateDenoiser {
    fn steps(&self) -> usize {
        self.betas.len()
    }

    fn reverse_moments(&self, u_t: &Image, t: usize) -> Result<ReverseMoments> {
        if t == 0 || t > self.betas.len() {
            return Err(Error::StepOutOfRange {
                step: t,
                max: self.betas.len(),
            });
        }
        u_t.ensure_shape(self.prior_mean.shape())?;
        let b = self.betas[t - 1];
        let (s_prev, s_t) = (self.mean_scale[t - 1], self.mean_scale[t]);
        let (v_prev, v_t) = (self.marginal_var[t - 1], self.marginal_var[t]);
        let gain = (1.0 - b).sqrt() * v_prev / v_t;
        let mean = u_t.zip_map(&self.prior_mean, |u, m| s_prev * m + gain * (u - s_t * m))?;
        Ok(ReverseMoments {
            mean,
            variance: vec![b * v_prev / v_t; u_t.len()],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Shape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schedule() -> Schedule {
        Schedule::linear(100, 1e-4, 2e-2).unwrap()
    }

    #[test]
    fn forward_at_zero_is_identity() {
        let u0 = Image::filled(Shape::new(1, 3, 3), 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(forward_diffuse(&u0, 0, &schedule(), &mut rng).unwrap(), u0);
        assert!(forward_diffuse(&u0, 101, &schedule(), &mut rng).is_err());
    }

    #[test]
    fn empty_reverse_run_returns_input() {
        let s = schedule();
        let model = GaussianConjugateDenoiser::new(Image::zeros(Shape::new(1, 2, 2)), 0.1, &s).unwrap();
        let u = Image::filled(Shape::new(1, 2, 2), 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(run_reverse(&model, &u, 0, 0, &mut rng).unwrap(), u);
        assert_eq!(run_reverse(&model, &u, 17, 17, &mut rng).unwrap(), u);
        assert!(run_reverse(&model, &u, 3, 5, &mut rng).is_err());
        assert!(run_reverse(&model, &u, 101, 0, &mut rng).is_err());
    }

    #[test]
    fn reverse_variances_are_positive_everywhere() {
        let s = Schedule::cosine(200, 0.008).unwrap();
        let model = GaussianConjugateDenoiser::new(Image::zeros(Shape::new(1, 2, 2)), 0.05, &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = Image::standard_normal(Shape::new(1, 2, 2), &mut rng);
        for t in 1..=200 {
            let m = model.reverse_moments(&u, t).unwrap();
            assert!(m.variance.iter().all(|&v| v > 0.0), "t={t}");
        }
    }

    struct Broken;

    impl ReverseKernel for Broken {
        fn steps(&self) -> usize {
            5
        }

        fn reverse_moments(&self, u_t: &Image, _t: usize) -> Result<ReverseMoments> {
            Ok(ReverseMoments {
                mean: u_t.clone(),
                variance: vec![0.0; u_t.len()],
            })
        }
    }

    #[test]
    fn zero_variance_is_a_contract_violation() {
        let u = Image::zeros(Shape::new(1, 2, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            reverse_step(&Broken, &u, 1, &mut rng),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn same_seed_same_output() {
        let s = schedule();
        let model = GaussianConjugateDenoiser::new(Image::filled(Shape::new(1, 4, 4), 0.5), 0.1, &s).unwrap();
        let u = Image::filled(Shape::new(1, 4, 4), 0.2);
        let a = run_reverse(&model, &u, 60, 0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = run_reverse(&model, &u, 60, 0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }
}
