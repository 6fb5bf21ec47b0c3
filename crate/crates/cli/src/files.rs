//! Image and tensor files.

use std::fs;
use std::path::Path;

use image::{GrayImage, RgbImage};
use pnp_sgs::npy::{self, NpyArray, NpyData};
use pnp_sgs::{Image, Shape};

use crate::CliError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Reads a PNG (scaled to `[0, 1]`) or an NPY array shaped `(C, H, W)` or `(H, W)`.
pub fn load_image(path: &Path) -> Result<Image, CliError> {
    if is_png(path) {
        let decoded = image::open(path).map_err(|e| io_err(path, e))?;
        let (w, h) = (decoded.width() as usize, decoded.height() as usize);
        return if decoded.color().has_color() {
            let rgb = decoded.to_rgb8();
            Ok(Image::from_fn(Shape::new(3, h, w), |c, i, j| {
                f64::from(rgb.get_pixel(j as u32, i as u32)[c]) / 255.0
            }))
        } else {
            let gray = decoded.to_luma8();
            Ok(Image::from_fn(Shape::new(1, h, w), |_, i, j| {
                f64::from(gray.get_pixel(j as u32, i as u32)[0]) / 255.0
            }))
        };
    }
    let array = npy::load(path).map_err(|e| io_err(path, e))?;
    let shape = match array.shape[..] {
        [c, h, w] => Shape::new(c, h, w),
        [h, w] => Shape::new(1, h, w),
        _ => return Err(io_err(path, format!("expected a 2-D or 3-D array, got shape {:?}", array.shape))),
    };
    Image::from_vec(shape, array.data.to_f64()).map_err(|e| io_err(path, e))
}

pub fn save_npy(path: &Path, image: &Image) -> Result<(), CliError> {
    let s = image.shape();
    npy::save_f32(path, &[s.channels, s.height, s.width], image.as_slice().iter().copied())
        .map_err(|e| io_err(path, e))
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an 8-bit PNG after clamping to `[0, 1]`. One or three channels.
pub fn save_png(path: &Path, image: &Image) -> Result<(), CliError> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let result = match image.channels() {
        1 => GrayImage::from_fn(w, h, |j, i| image::Luma([quantize(image.get(0, i as usize, j as usize))])).save(path),
        3 => RgbImage::from_fn(w, h, |j, i| {
            image::Rgb([0, 1, 2].map(|c| quantize(image.get(c, i as usize, j as usize))))
        })
        .save(path),
        c => return Err(io_err(path, format!("PNG export needs 1 or 3 channels, image has {c}"))),
    };
    result.map_err(|e| io_err(path, e))
}

/// Writes `<stem>.npy` and `<stem>.png` into `dir`.
pub fn save_both(dir: &Path, stem: &str, image: &Image) -> Result<(), CliError> {
    save_npy(&dir.join(format!("{stem}.npy")), image)?;
    save_png(&dir.join(format!("{stem}.png")), image)
}

pub fn load_array(path: &Path) -> Result<NpyArray, CliError> {
    npy::load(path).map_err(|e| io_err(path, e))
}

pub fn save_array(path: &Path, array: &NpyArray) -> Result<(), CliError> {
    npy::save(path, array).map_err(|e| io_err(path, e))
}

pub fn indices(array: &NpyArray, path: &Path) -> Result<Vec<usize>, CliError> {
    match &array.data {
        NpyData::I64(v) if v.iter().all(|&k| k >= 0) => Ok(v.iter().map(|&k| k as usize).collect()),
        _ => Err(io_err(path, "expected non-negative int64 indices")),
    }
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(Shape::new(3, 4, 5), |c, i, j| (c * 20 + i * 5 + j) as f64 / 60.0);
        let path = dir.path().join("a.png");
        save_png(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.shape(), img.shape());
        assert!(back.max_abs_diff(&img).unwrap() <= 0.5 / 255.0 + 1e-12);
    }

    #[test]
    fn npy_round_trip_is_float32_exact() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(Shape::new(1, 3, 2), |_, i, j| f64::from((i * 2 + j) as f32 * 0.1f32));
        let path = dir.path().join("a.npy");
        save_npy(&path, &img).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn png_export_clamps() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_vec(Shape::new(1, 1, 2), vec![-3.0, 7.0]).unwrap();
        let path = dir.path().join("c.png");
        save_png(&path, &img).unwrap();
        assert_eq!(load_image(&path).unwrap().as_slice(), &[0.0, 1.0]);
    }
}
