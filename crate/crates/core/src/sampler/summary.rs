//! Posterior summaries computed from post-burn-in samples.

use super::gibbs::{Chain, ChainSamples};
use crate::error::{Error, Result};
use crate::image::Image;

fn post_burn_in(chain: &Chain, min: usize) -> Result<usize> {
    let available = chain.len().saturating_sub(chain.n_bi());
    if chain.n_bi() >= chain.len() || available < min {
        return Err(Error::InsufficientSamples(format!(
            "need at least {min} samples after a burn-in of {}, chain has {}",
            chain.n_bi(),
            chain.len()
        )));
    }
    Ok(available)
}

fn average(images: &[Image]) -> Image {
    let mut acc = vec![0.0; images[0].len()];
    for img in images {
        for (a, v) in acc.iter_mut().zip(img.as_slice()) {
            *a += v;
        }
    }
    let n = images.len() as f64;
    let data = acc.into_iter().map(|a| a / n).collect();
    Image::from_vec(images[0].shape(), data).expect("averages of finite images are finite")
}

/// Sample averages of `x` and `z` over iterations `n_bi + 1 ..= n_mc`.
pub fn mmse(chain: &Chain) -> Result<(Image, Image)> {
    post_burn_in(chain, 1)?;
    match chain.samples() {
        ChainSamples::Full { x, z } => Ok((average(&x[chain.n_bi()..]), average(&z[chain.n_bi()..]))),
        ChainSamples::Thin(thin) => Ok((
            Image::from_vec(chain.shape(), thin.mean_x().to_vec())?,
            Image::from_vec(chain.shape(), thin.mean_z().to_vec())?,
        )),
    }
}

/// Quantile of sorted data with linear interpolation between order
/// statistics at position `q (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Pixel-wise equal-tailed interval containing `level` of the post-burn-in
/// `x` samples.
pub fn credible_interval(chain: &Chain, level: f64) -> Result<(Image, Image)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Parameter(format!("level must lie in (0, 1), got {level}")));
    }
    post_burn_in(chain, 2)?;
    let len = chain.shape().len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); len];
    match chain.samples() {
        ChainSamples::Full { x, .. } => {
            for img in &x[chain.n_bi()..] {
                for (col, &v) in columns.iter_mut().zip(img.as_slice()) {
                    col.push(v);
                }
            }
        }
        ChainSamples::Thin(thin) => {
            if thin.reservoir_len() < 2 {
                return Err(Error::InsufficientSamples("reservoir holds fewer than 2 samples".into()));
            }
            for slot in thin.reservoir() {
                for (col, &v) in columns.iter_mut().zip(slot) {
                    col.push(v);
                }
            }
        }
    }
    let tail = (1.0 - level) / 2.0;
    let mut lower = Vec::with_capacity(len);
    let mut upper = Vec::with_capacity(len);
    for mut col in columns {
        col.sort_unstable_by(f64::total_cmp);
        lower.push(quantile_sorted(&col, tail));
        upper.push(quantile_sorted(&col, 1.0 - tail));
    }
    Ok((
        Image::from_vec(chain.shape(), lower)?,
        Image::from_vec(chain.shape(), upper)?,
    ))
}

/// Per-pixel sample standard deviation of post-burn-in `x` samples.
pub fn pixel_std(chain: &Chain) -> Result<Image> {
    post_burn_in(chain, 2)?;
    let var = match chain.samples() {
        ChainSamples::Full { x, .. } => {
            let kept = &x[chain.n_bi()..];
            let mean = average(kept);
            let mut acc = vec![0.0; mean.len()];
            for img in kept {
                for ((a, v), m) in acc.iter_mut().zip(img.as_slice()).zip(mean.as_slice()) {
                    *a += (v - m) * (v - m);
                }
            }
            let denom = (kept.len() - 1) as f64;
            acc.into_iter().map(|a| a / denom).collect::<Vec<_>>()
        }
        ChainSamples::Thin(thin) => thin.variance_x(),
    };
    Image::from_vec(chain.shape(), var.into_iter().map(f64::sqrt).collect())
}

/// Everything reported about a finished chain.
#[derive(Clone, Debug)]
pub struct PosteriorSummary {
    pub mmse_x: Image,
    pub mmse_z: Image,
    pub level: f64,
    pub ci_lower: Image,
    pub ci_upper: Image,
    pub pixel_std: Image,
}

impl PosteriorSummary {
    pub fn from_chain(chain: &Chain, level: f64) -> Result<Self> {
        let (mmse_x, mmse_z) = mmse(chain)?;
        let (ci_lower, ci_upper) = credible_interval(chain, level)?;
        Ok(Self {
            mmse_x,
            mmse_z,
            level,
            ci_lower,
            ci_upper,
            pixel_std: pixel_std(chain)?,
        })
    }
}
