//! Exact draws from the Gaussian conditionals of the split Gibbs sweep.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::operator::{CirculantOperator, MaskOperator, Measurement, NoiseModel};

/// Relative residual at which the conjugate-gradient solve stops.
pub const CG_TOLERANCE: f64 = 1e-10;

/// Smallest admissible Fourier coefficient of a circulant precision.
pub const SPECTRAL_FLOOR: f64 = 1e-12;

fn normal(rng: &mut dyn RngCore) -> f64 {
    rng.sample(StandardNormal)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be positive, got {v}")))
    }
}

fn check_grid(x: &Image, height: usize, width: usize) -> Result<()> {
    if x.height() != height || x.width() != width {
        return Err(Error::shape(format!("{height}x{width} grid"), x.shape()));
    }
    Ok(())
}

fn check_measurement(y: &Measurement, mask: &MaskOperator, channels: usize) -> Result<()> {
    if y.channels() != channels || y.per_channel() != mask.kept_len() {
        return Err(Error::shape(
            format!("{channels} channels x {} values", mask.kept_len()),
            format!("{} channels x {} values", y.channels(), y.per_channel()),
        ));
    }
    Ok(())
}

/// Draws `x ~ N(mu, Q^-1)` with `Q = H^T Omega H + I / rho^2` and
/// `mu = Q^-1 (H^T Omega y + z / rho^2)` for a circulant `H`.
///
/// Scalar noise is sampled exactly in the Fourier domain. Per-pixel noise
/// variances use perturbation-optimization: perturb `y` and `z` by their own
/// noise, then solve the normal equations with preconditioned conjugate
/// gradients.
pub fn sample_x_deblur(
    y: &Image,
    z: &Image,
    op: &CirculantOperator,
    noise: &NoiseModel,
    rho: f64,
    rng: &mut dyn RngCore,
) -> Result<Image> {
    positive("rho", rho)?;
    check_grid(z, op.height(), op.width())?;
    y.ensure_shape(z.shape())?;
    noise.check_len(y.len())?;
    if !noise.is_proper() {
        return Err(Error::Parameter(
            "deblurring requires strictly positive noise variances".into(),
        ));
    }
    match noise {
        NoiseModel::Scalar { sigma } => Ok(deblur_scalar(y, z, op, sigma * sigma, rho * rho, rng)),
        NoiseModel::Diagonal { variances } => deblur_diagonal(y, z, op, variances, rho * rho, rng),
    }
}

fn deblur_scalar(
    y: &Image,
    z: &Image,
    op: &CirculantOperator,
    sigma2: f64,
    rho2: f64,
    rng: &mut dyn RngCore,
) -> Image {
    let fft = op.fft();
    let h = op.spectrum();
    let mut out = Image::zeros(z.shape());
    for c in 0..z.channels() {
        let white: Vec<f64> = (0..h.len()).map(|_| normal(rng)).collect();
        let ys = fft.forward_real(y.plane(c));
        let zs = fft.forward_real(z.plane(c));
        let ws = fft.forward_real(&white);
        let spec = (0..h.len())
            .map(|k| {
                let q = h[k].norm_sqr() / sigma2 + 1.0 / rho2;
                (h[k].conj() * ys[k] / sigma2 + zs[k] / rho2) / q + ws[k] / q.sqrt()
            })
            .collect();
        out.plane_mut(c).copy_from_slice(&fft.inverse_real(spec));
    }
    out
}

fn multiply(op: &CirculantOperator, plane: &[f64], f: impl Fn(usize) -> Complex64) -> Vec<f64> {
    let fft = op.fft();
    let mut spec = fft.forward_real(plane);
    for (k, v) in spec.iter_mut().enumerate() {
        *v *= f(k);
    }
    fft.inverse_real(spec)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn deblur_diagonal(
    y: &Image,
    z: &Image,
    op: &CirculantOperator,
    variances: &[f64],
    rho2: f64,
    rng: &mut dyn RngCore,
) -> Result<Image> {
    let h = op.spectrum();
    let n = h.len();
    let mut out = Image::zeros(z.shape());
    for c in 0..z.channels() {
        let var = &variances[c * n..(c + 1) * n];
        let weight: Vec<f64> = var.iter().map(|v| 1.0 / v).collect();

        let perturbed: Vec<f64> = y
            .plane(c)
            .iter()
            .zip(var)
            .map(|(yi, v)| (yi + v.sqrt() * normal(rng)) / v)
            .collect();
        let prior: Vec<f64> = z.plane(c).iter().map(|zi| zi + rho2.sqrt() * normal(rng)).collect();
        let mut rhs = multiply(op, &perturbed, |k| h[k].conj());
        for (r, p) in rhs.iter_mut().zip(&prior) {
            *r += p / rho2;
        }

        let apply = |v: &[f64]| {
            let hv = multiply(op, v, |k| h[k]);
            let weighted: Vec<f64> = hv.iter().zip(&weight).map(|(a, w)| a * w).collect();
            let mut out = multiply(op, &weighted, |k| h[k].conj());
            for (o, vi) in out.iter_mut().zip(v) {
                *o += vi / rho2;
            }
            out
        };
        let mean_weight = weight.iter().sum::<f64>() / n as f64;
        let precondition =
            |r: &[f64]| multiply(op, r, |k| (1.0 / (h[k].norm_sqr() * mean_weight + 1.0 / rho2)).into());

        let solution = conjugate_gradient(apply, precondition, &rhs, 10 * n)?;
        out.plane_mut(c).copy_from_slice(&solution);
    }
    Ok(out)
}

/// Preconditioned CG for a symmetric positive-definite operator, started at 0.
fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precondition: impl Fn(&[f64]) -> Vec<f64>,
    rhs: &[f64],
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let target = CG_TOLERANCE * dot(rhs, rhs).sqrt();
    if target == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.to_vec();
    let mut s = precondition(&r);
    let mut p = s.clone();
    let mut rs = dot(&r, &s);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let q = apply(&p);
        let alpha = rs / dot(&p, &q);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        residual = dot(&r, &r).sqrt();
        if residual <= target {
            return Ok(x);
        }
        s = precondition(&r);
        let rs_next = dot(&r, &s);
        let beta = rs_next / rs;
        rs = rs_next;
        for i in 0..n {
            p[i] = s[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: residual / (target / CG_TOLERANCE),
        tolerance: CG_TOLERANCE,
    })
}

/// Draws `x` given `z` for inpainting with noise level `sigma`.
///
/// The precision `H^T H / sigma^2 + I / rho^2` is diagonal, so each pixel is
/// an independent scalar Gaussian: observed pixels have variance
/// `sigma^2 rho^2 / (sigma^2 + rho^2)` and mean
/// `(rho^2 y + sigma^2 z) / (sigma^2 + rho^2)`, unobserved pixels keep mean
/// `z` and variance `rho^2`.
pub fn sample_x_inpaint(
    y: &Measurement,
    z: &Image,
    mask: &MaskOperator,
    sigma: f64,
    rho: f64,
    rng: &mut dyn RngCore,
) -> Result<Image> {
    positive("sigma", sigma)?;
    positive("rho", rho)?;
    masked_conjugate(y, z, rho * rho, mask, sigma * sigma, rng)
}

/// Diagonal of the inpainting posterior covariance `(H^T H / sigma^2 + I / rho^2)^-1`
/// over the grid, from the Sherman-Morrison-Woodbury form
/// `rho^2 I - rho^4 H^T (sigma^2 I + rho^2 H H^T)^-1 H`, using `H H^T = I`.
pub fn inpaint_covariance_diagonal(mask: &MaskOperator, sigma: f64, rho: f64) -> Result<Vec<f64>> {
    positive("sigma", sigma)?;
    positive("rho", rho)?;
    let (observed, free) = split_variances(sigma * sigma, rho * rho);
    Ok(mask
        .keep_flags()
        .into_iter()
        .map(|kept| if kept { observed } else { free })
        .collect())
}

/// Posterior variances of an observed and an unobserved pixel.
fn split_variances(sigma2: f64, prior_var: f64) -> (f64, f64) {
    let observed = prior_var - prior_var * prior_var / (sigma2 + prior_var);
    (observed, prior_var)
}

fn masked_conjugate(
    y: &Measurement,
    prior_mean: &Image,
    prior_var: f64,
    mask: &MaskOperator,
    sigma2: f64,
    rng: &mut dyn RngCore,
) -> Result<Image> {
    check_grid(prior_mean, mask.height(), mask.width())?;
    check_measurement(y, mask, prior_mean.channels())?;
    let (observed_var, free_var) = split_variances(sigma2, prior_var);
    let (w_data, w_prior) = (prior_var / (sigma2 + prior_var), sigma2 / (sigma2 + prior_var));
    let (sd_obs, sd_free) = (observed_var.sqrt(), free_var.sqrt());

    let mut out = prior_mean.clone();
    for c in 0..out.channels() {
        let obs = y.channel(c);
        let plane = out.plane_mut(c);
        let mut next = mask.kept_indices().iter().zip(obs).peekable();
        for (k, v) in plane.iter_mut().enumerate() {
            let eps = normal(rng);
            match next.peek() {
                Some(&(&kept, &yk)) if kept == k => {
                    next.next();
                    *v = w_data * yk + w_prior * *v + sd_obs * eps;
                }
                _ => *v += sd_free * eps,
            }
        }
    }
    Ok(out)
}

/// Quadratic coupling `||z1 - z2||^2 / (2 rho2^2)` to the denoised variable.
#[derive(Clone, Copy, Debug)]
pub struct Coupling<'a> {
    pub target: &'a Image,
    pub rho: f64,
}

/// Draws the low-resolution-side split variable `z1` for super-resolution.
///
/// Without `coupling`, the conditional is
/// `exp(-||y - S z1||^2 / 2 sigma^2 - ||z1 - B x||^2 / 2 rho1^2)`. With a
/// coupling to `z2`, its quadratic term is merged into the prior part, which
/// keeps the precision diagonal.
#[allow(clippy::too_many_arguments)]
pub fn sample_sr_z1(
    y: &Measurement,
    x: &Image,
    mask: &MaskOperator,
    blur: &CirculantOperator,
    sigma: f64,
    rho1: f64,
    coupling: Option<Coupling<'_>>,
    rng: &mut dyn RngCore,
) -> Result<Image> {
    positive("sigma", sigma)?;
    positive("rho1", rho1)?;
    let blurred = blur.apply(x)?;
    let rho1_2 = rho1 * rho1;
    let (mean, var) = match coupling {
        None => (blurred, rho1_2),
        Some(Coupling { target, rho }) => {
            positive("rho2", rho)?;
            let rho2_2 = rho * rho;
            let total = rho1_2 + rho2_2;
            let mean = blurred.zip_map(target, |b, t| (rho2_2 * b + rho1_2 * t) / total)?;
            (mean, rho1_2 * rho2_2 / total)
        }
    };
    masked_conjugate(y, &mean, var, mask, sigma * sigma, rng)
}

/// Draws `x` from the Gaussian with precision `B^T B / rho1^2 + ridge I` and
/// mean `(B^T B / rho1^2 + ridge I)^-1 B^T z1 / rho1^2`.
pub fn sample_sr_x(
    z1: &Image,
    blur: &CirculantOperator,
    rho1: f64,
    ridge: f64,
    rng: &mut dyn RngCore,
) -> Result<Image> {
    positive("rho1", rho1)?;
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Parameter(format!("ridge must be non-negative, got {ridge}")));
    }
    check_grid(z1, blur.height(), blur.width())?;
    let rho1_2 = rho1 * rho1;
    let b = blur.spectrum();
    let precision: Vec<f64> = b.iter().map(|v| v.norm_sqr() / rho1_2 + ridge).collect();
    if let Some((index, &value)) = precision
        .iter()
        .enumerate()
        .find(|(_, &p)| p.is_nan() || p < SPECTRAL_FLOOR)
    {
        return Err(Error::Singular {
            index,
            value,
            floor: SPECTRAL_FLOOR,
        });
    }

    let fft = blur.fft();
    let mut out = Image::zeros(Shape::new(z1.channels(), z1.height(), z1.width()));
    for c in 0..z1.channels() {
        let white: Vec<f64> = (0..b.len()).map(|_| normal(rng)).collect();
        let zs = fft.forward_real(z1.plane(c));
        let ws = fft.forward_real(&white);
        let spec = (0..b.len())
            .map(|k| {
                let q = precision[k];
                b[k].conj() * zs[k] / (rho1_2 * q) + ws[k] / q.sqrt()
            })
            .collect();
        out.plane_mut(c).copy_from_slice(&fft.inverse_real(spec));
    }
    Ok(out)
}
