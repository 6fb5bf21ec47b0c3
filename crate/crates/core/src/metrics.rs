//! Reconstruction quality metrics.
//!
//! Both metrics clamp their inputs to `[0, peak]` first.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image::Image;

/// Side of the uniform SSIM window.
pub const SSIM_WINDOW: usize = 7;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn check_pair(reference: &Image, test: &Image, peak: f64) -> Result<()> {
    test.ensure_shape(reference.shape())?;
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::Parameter(format!("peak must be positive, got {peak}")));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB; `+inf` for identical images.
pub fn psnr(reference: &Image, test: &Image, peak: f64) -> Result<f64> {
    check_pair(reference, test, peak)?;
    let a = reference.clamped(0.0, peak);
    let b = test.clamped(0.0, peak);
    let mse = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Summed-area table with a zero border, `(h + 1) x (w + 1)`.
fn integral(h: usize, w: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; (h + 1) * (w + 1)];
    for i in 0..h {
        let mut row = 0.0;
        for j in 0..w {
            row += f(i * w + j);
            out[(i + 1) * (w + 1) + j + 1] = out[i * (w + 1) + j + 1] + row;
        }
    }
    out
}

fn window_sum(table: &[f64], w: usize, i: usize, j: usize) -> f64 {
    let s = SSIM_WINDOW;
    let stride = w + 1;
    table[(i + s) * stride + j + s] - table[i * stride + j + s] - table[(i + s) * stride + j]
        + table[i * stride + j]
}

/// Mean structural similarity over all fully contained 7x7 windows,
/// averaged over channels. Local variances use the unbiased estimator.
pub fn ssim(reference: &Image, test: &Image, peak: f64) -> Result<f64> {
    check_pair(reference, test, peak)?;
    let (h, w) = (reference.height(), reference.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let a = reference.clamped(0.0, peak);
    let b = test.clamped(0.0, peak);
    let c1 = (K1 * peak).powi(2);
    let c2 = (K2 * peak).powi(2);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;

    let mut total = 0.0;
    for c in 0..a.channels() {
        let (pa, pb) = (a.plane(c), b.plane(c));
        let sa = integral(h, w, |k| pa[k]);
        let sb = integral(h, w, |k| pb[k]);
        let saa = integral(h, w, |k| pa[k] * pa[k]);
        let sbb = integral(h, w, |k| pb[k] * pb[k]);
        let sab = integral(h, w, |k| pa[k] * pb[k]);

        let (rows, cols) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
        let mut acc = 0.0;
        for i in 0..rows {
            for j in 0..cols {
                let mx = window_sum(&sa, w, i, j) / n;
                let my = window_sum(&sb, w, i, j) / n;
                let vx = ((window_sum(&saa, w, i, j) - n * mx * mx) / (n - 1.0)).max(0.0);
                let vy = ((window_sum(&sbb, w, i, j) - n * my * my) / (n - 1.0)).max(0.0);
                let cxy = (window_sum(&sab, w, i, j) - n * mx * my) / (n - 1.0);
                acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
        total += acc / (rows * cols) as f64;
    }
    Ok(total / a.channels() as f64)
}

/// PSNR and SSIM of one estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(serialize_with = "serialize_db", deserialize_with = "deserialize_db")]
    pub psnr: f64,
    pub ssim: f64,
}

impl MetricReport {
    pub fn compute(reference: &Image, test: &Image, peak: f64) -> Result<Self> {
        Ok(Self {
            psnr: psnr(reference, test, peak)?,
            ssim: ssim(reference, test, peak)?,
        })
    }

    /// Arithmetic mean of several reports. An infinite PSNR makes the mean
    /// infinite.
    pub fn mean(reports: &[MetricReport]) -> Option<Self> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        Some(Self {
            psnr: reports.iter().map(|r| r.psnr).sum::<f64>() / n,
            ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / n,
        })
    }
}

/// Writes infinite values as the string `"inf"`, JSON having no literal for
/// them.
pub fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

pub fn deserialize_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Number(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Number(v) => Ok(v),
        Db::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Db::Text(t) => Err(serde::de::Error::custom(format!("invalid dB value {t:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Shape;

    fn ramp(shape: Shape) -> Image {
        Image::from_fn(shape, |c, i, j| ((i * 3 + j * 5 + c) % 11) as f64 / 10.0)
    }

    #[test]
    fn psnr_of_identical_images_is_infinite() {
        let a = ramp(Shape::new(1, 8, 8));
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_of_constant_offset() {
        let a = Image::filled(Shape::new(1, 4, 4), 0.5);
        let b = Image::filled(Shape::new(1, 4, 4), 0.6);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
    }

    #[test]
    fn psnr_clamps_inputs() {
        let a = Image::filled(Shape::new(1, 2, 2), 1.0);
        let b = Image::filled(Shape::new(1, 2, 2), 7.0);
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let a = ramp(Shape::new(3, 9, 12));
        assert!((ssim(&a, &a, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_constants_is_luminance_term() {
        let a = Image::filled(Shape::new(1, 7, 7), 0.5);
        let b = Image::filled(Shape::new(1, 7, 7), 0.9);
        let c1 = 1e-4;
        let expected = (2.0 * 0.5 * 0.9 + c1) / (0.25 + 0.81 + c1);
        assert!((ssim(&a, &b, 1.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = Image::zeros(Shape::new(1, 6, 9));
        assert!(matches!(ssim(&a, &a, 1.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn report_serializes_infinity_as_text() {
        let r = MetricReport {
            psnr: f64::INFINITY,
            ssim: 1.0,
        };
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, r#"{"psnr":"inf","ssim":1.0}"#);
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
