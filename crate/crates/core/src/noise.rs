//! Blind Gaussian noise level estimation.
//!
//! Robust wavelet estimator: the finest diagonal (HH) detail subband of a
//! single-level orthonormal DWT is dominated by noise for natural images, and
//! `median(|d|) / 0.6745` is a consistent estimate of the noise standard
//! deviation for Gaussian noise.

use crate::error::{Error, Result};
use crate::image::Image;

/// Third quartile of the standard normal distribution.
pub const NORMAL_Q3: f64 = 0.674_489_750_196_081_7;

/// Orthonormal wavelet families, named by filter length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Wavelet {
    Haar,
    /// 4-tap Daubechies filter (two vanishing moments).
    Daubechies4,
    /// 8-tap Daubechies filter (four vanishing moments).
    #[default]
    Daubechies8,
}

const HAAR: [f64; 2] = [
    std::f64::consts::FRAC_1_SQRT_2,
    std::f64::consts::FRAC_1_SQRT_2,
];

const DB4: [f64; 4] = [
    0.482_962_913_144_690_2,
    0.836_516_303_737_469,
    0.224_143_868_041_857_35,
    -0.129_409_522_550_921_45,
];

const DB8: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

impl Wavelet {
    pub fn lowpass(&self) -> &'static [f64] {
        match self {
            Wavelet::Haar => &HAAR,
            Wavelet::Daubechies4 => &DB4,
            Wavelet::Daubechies8 => &DB8,
        }
    }

    /// Quadrature mirror of the low-pass filter.
    pub fn highpass(&self) -> Vec<f64> {
        let h = self.lowpass();
        let n = h.len();
        (0..n)
            .map(|k| if k % 2 == 0 { h[n - 1 - k] } else { -h[n - 1 - k] })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseEstimate {
    /// Mean of the per-channel estimates.
    pub sigma: f64,
    pub per_channel: Vec<f64>,
}

pub fn estimate_sigma(x: &Image) -> Result<NoiseEstimate> {
    estimate_sigma_with(x, Wavelet::default())
}

pub fn estimate_sigma_with(x: &Image, wavelet: Wavelet) -> Result<NoiseEstimate> {
    let (h, w) = (x.height(), x.width());
    if h < 2 || w < 2 {
        return Err(Error::Estimation(format!(
            "image sides must be at least 2, got {h}x{w}"
        )));
    }
    let (ph, pw) = (h + h % 2, w + w % 2);
    let wavelet = if ph.min(pw) < wavelet.lowpass().len() {
        Wavelet::Haar
    } else {
        wavelet
    };
    let filter = wavelet.highpass();

    let per_channel: Vec<f64> = x
        .planes()
        .map(|plane| {
            let padded = pad_to_even(plane, h, w);
            let mut detail = diagonal_detail(&padded, ph, pw, &filter);
            detail.iter_mut().for_each(|d| *d = d.abs());
            median(&mut detail) / NORMAL_Q3
        })
        .collect();
    let sigma = per_channel.iter().sum::<f64>() / per_channel.len() as f64;
    Ok(NoiseEstimate { sigma, per_channel })
}

/// Repeats the last row/column for odd sides (half-sample symmetric edge).
fn pad_to_even(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (ph, pw) = (h + h % 2, w + w % 2);
    let mut out = Vec::with_capacity(ph * pw);
    for i in 0..ph {
        let src = &plane[i.min(h - 1) * w..][..w];
        out.extend_from_slice(src);
        if pw > w {
            out.push(src[w - 1]);
        }
    }
    out
}

/// One periodized analysis step of `x` with `filter`, decimated by two.
fn analyze(x: &[f64], filter: &[f64], out: &mut Vec<f64>) {
    let n = x.len();
    out.clear();
    for k in 0..n / 2 {
        let acc = filter
            .iter()
            .enumerate()
            .map(|(j, f)| f * x[(2 * k + j) % n])
            .sum();
        out.push(acc);
    }
}

/// HH subband of a single-level separable DWT, `(h/2) x (w/2)` row-major.
fn diagonal_detail(plane: &[f64], h: usize, w: usize, highpass: &[f64]) -> Vec<f64> {
    let (hh, hw) = (h / 2, w / 2);
    let mut rows = vec![0.0; h * hw];
    let mut buf = Vec::with_capacity(hw.max(hh));
    for i in 0..h {
        analyze(&plane[i * w..(i + 1) * w], highpass, &mut buf);
        rows[i * hw..(i + 1) * hw].copy_from_slice(&buf);
    }
    let mut out = vec![0.0; hh * hw];
    let mut col = vec![0.0; h];
    for j in 0..hw {
        for i in 0..h {
            col[i] = rows[i * hw + j];
        }
        analyze(&col, highpass, &mut buf);
        for (i, v) in buf.iter().enumerate() {
            out[i * hw + j] = *v;
        }
    }
    out
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (lower, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let m = *m;
    if n % 2 == 1 {
        m
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Shape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn filters_are_orthonormal() {
        for w in [Wavelet::Haar, Wavelet::Daubechies4, Wavelet::Daubechies8] {
            let h = w.lowpass();
            let g = w.highpass();
            let norm: f64 = h.iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-12, "{w:?}");
            assert!(g.iter().sum::<f64>().abs() < 1e-12, "{w:?}");
            let cross: f64 = h.iter().zip(&g).map(|(a, b)| a * b).sum();
            assert!(cross.abs() < 1e-12);
            for shift in (2..h.len()).step_by(2) {
                let s: f64 = (0..h.len() - shift).map(|k| h[k] * h[k + shift]).sum();
                assert!(s.abs() < 1e-12, "{w:?} shift {shift}");
            }
        }
    }

    #[test]
    fn constant_image_has_zero_noise() {
        let x = Image::filled(Shape::new(3, 17, 12), 0.42);
        let est = estimate_sigma(&x).unwrap();
        assert!(est.sigma <= 1e-12);
        assert_eq!(est.per_channel.len(), 3);
    }

    #[test]
    fn tiny_and_degenerate_images() {
        assert!(estimate_sigma(&Image::zeros(Shape::new(1, 1, 5))).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Image::standard_normal(Shape::new(1, 5, 9), &mut rng);
        assert!(estimate_sigma(&x).unwrap().sigma > 0.0);
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn padding_keeps_constants() {
        let plane = vec![2.0; 15];
        let padded = pad_to_even(&plane, 3, 5);
        assert_eq!(padded.len(), 24);
        assert!(padded.iter().all(|&v| v == 2.0));
    }
}
