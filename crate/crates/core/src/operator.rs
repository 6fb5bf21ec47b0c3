//! Forward operators of the observation model `y = Hx + n`.
//!
//! Three operator kinds are supported: cyclic convolution (diagonalized by
//! the 2-D DFT), pixel subsampling by a binary mask, and their composition
//! `S·B` (blur, then subsample). Every operator acts on each channel
//! independently with the same spatial action.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::image::{Image, Shape};

/// Odd-sized 2-D filter anchored at its center tap.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvolutionKernel {
    rows: usize,
    cols: usize,
    taps: Vec<f64>,
}

impl ConvolutionKernel {
    pub fn new(rows: usize, cols: usize, taps: Vec<f64>) -> Result<Self> {
        if rows.is_multiple_of(2) || cols.is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "kernel sides must be odd, got {rows}x{cols}"
            )));
        }
        if taps.len() != rows * cols {
            return Err(Error::shape(rows * cols, taps.len()));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Parameter("kernel taps must be finite".into()));
        }
        Ok(Self { rows, cols, taps })
    }

    pub fn identity() -> Self {
        Self {
            rows: 1,
            cols: 1,
            taps: vec![1.0],
        }
    }

    /// Isotropic Gaussian blur truncated to `size x size` and renormalized
    /// to unit sum.
    pub fn gaussian(size: usize, std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::Parameter(format!("gaussian std must be positive, got {std}")));
        }
        let half = (size / 2) as f64;
        let mut taps = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                let (dy, dx) = (i as f64 - half, j as f64 - half);
                taps.push((-(dx * dx + dy * dy) / (2.0 * std * std)).exp());
            }
        }
        let mut kernel = Self::new(size, size, taps)?;
        kernel.normalize()?;
        Ok(kernel)
    }

    pub fn normalize(&mut self) -> Result<()> {
        let sum: f64 = self.taps.iter().sum();
        if sum.abs() < f64::EPSILON {
            return Err(Error::Parameter("kernel taps sum to zero".into()));
        }
        self.taps.iter_mut().for_each(|t| *t /= sum);
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn tap(&self, row: usize, col: usize) -> f64 {
        self.taps[row * self.cols + col]
    }
}

/// Cyclic convolution on a fixed `height x width` grid, stored as the DFT of
/// the wrapped kernel.
#[derive(Clone, Debug)]
pub struct CirculantOperator {
    height: usize,
    width: usize,
    spectrum: Vec<Complex64>,
    fft: Fft2,
}

impl CirculantOperator {
    pub fn from_kernel(kernel: &ConvolutionKernel, height: usize, width: usize) -> Result<Self> {
        if kernel.rows() > height || kernel.cols() > width {
            return Err(Error::Dimension(format!(
                "kernel {}x{} larger than image {height}x{width}",
                kernel.rows(),
                kernel.cols()
            )));
        }
        let (cr, cc) = (kernel.rows() / 2, kernel.cols() / 2);
        let mut wrapped = vec![0.0; height * width];
        for a in 0..kernel.rows() {
            for b in 0..kernel.cols() {
                let i = (a + height - cr) % height;
                let j = (b + width - cc) % width;
                wrapped[i * width + j] += kernel.tap(a, b);
            }
        }
        let fft = Fft2::new(height, width);
        let spectrum = fft.forward_real(&wrapped);
        Ok(Self {
            height,
            width,
            spectrum,
            fft,
        })
    }

    pub fn identity(height: usize, width: usize) -> Self {
        Self::from_kernel(&ConvolutionKernel::identity(), height, width)
            .expect("1x1 kernel fits any grid")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// DFT coefficients of the operator, row-major over the grid.
    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    fn check(&self, x: &Image) -> Result<()> {
        if x.height() != self.height || x.width() != self.width {
            return Err(Error::shape(
                format!("{}x{} grid", self.height, self.width),
                x.shape(),
            ));
        }
        Ok(())
    }

    pub fn apply(&self, x: &Image) -> Result<Image> {
        self.filter(x, |k, v| v * self.spectrum[k])
    }

    pub fn adjoint(&self, x: &Image) -> Result<Image> {
        self.filter(x, |k, v| v * self.spectrum[k].conj())
    }

    /// Applies an arbitrary Fourier multiplier `f(frequency_index, coefficient)`
    /// to every channel. `f` must preserve Hermitian symmetry.
    pub fn filter(&self, x: &Image, f: impl Fn(usize, Complex64) -> Complex64) -> Result<Image> {
        self.check(x)?;
        let mut out = Image::zeros(x.shape());
        for c in 0..x.channels() {
            let mut spec = self.fft.forward_real(x.plane(c));
            for (k, v) in spec.iter_mut().enumerate() {
                *v = f(k, *v);
            }
            out.plane_mut(c).copy_from_slice(&self.fft.inverse_real(spec));
        }
        Ok(out)
    }
}

/// Binary subsampling: keeps a fixed, ordered set of spatial pixels in every
/// channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskOperator {
    height: usize,
    width: usize,
    kept: Vec<usize>,
}

impl MaskOperator {
    pub fn new(height: usize, width: usize, kept: Vec<usize>) -> Result<Self> {
        let total = height * width;
        if kept.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter(
                "mask indices must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = kept.last() {
            if last >= total {
                return Err(Error::Parameter(format!(
                    "mask index {last} outside grid of {total} pixels"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            kept,
        })
    }

    pub fn all(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            kept: (0..height * width).collect(),
        }
    }

    /// Hides `round(masked_fraction * N)` pixels chosen uniformly without
    /// replacement.
    pub fn random<R: Rng + ?Sized>(
        height: usize,
        width: usize,
        masked_fraction: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&masked_fraction) {
            return Err(Error::Parameter(format!(
                "masked fraction must lie in [0, 1], got {masked_fraction}"
            )));
        }
        let total = height * width;
        let keep = total - (masked_fraction * total as f64).round() as usize;
        let mut kept = index::sample(rng, total, keep).into_vec();
        kept.sort_unstable();
        Self::new(height, width, kept)
    }

    /// Keeps every `factor`-th pixel in both directions, starting at (0, 0).
    pub fn strided(height: usize, width: usize, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Parameter("downsampling factor must be positive".into()));
        }
        let kept = (0..height)
            .step_by(factor)
            .flat_map(|i| (0..width).step_by(factor).map(move |j| i * width + j))
            .collect();
        Self::new(height, width, kept)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn total_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn kept_indices(&self) -> &[usize] {
        &self.kept
    }

    pub fn kept_len(&self) -> usize {
        self.kept.len()
    }

    /// Per-pixel flag, `true` where the pixel is observed.
    pub fn keep_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.total_pixels()];
        for &k in &self.kept {
            flags[k] = true;
        }
        flags
    }

    fn check(&self, x: &Image) -> Result<()> {
        if x.height() != self.height || x.width() != self.width {
            return Err(Error::shape(
                format!("{}x{} grid", self.height, self.width),
                x.shape(),
            ));
        }
        Ok(())
    }

    pub fn gather(&self, x: &Image) -> Result<Measurement> {
        self.check(x)?;
        let mut values = Vec::with_capacity(x.channels() * self.kept.len());
        for plane in x.planes() {
            values.extend(self.kept.iter().map(|&k| plane[k]));
        }
        Ok(Measurement::new(x.channels(), values))
    }

    /// Adjoint of [`gather`](Self::gather): writes measurements back onto the
    /// grid and leaves unobserved pixels at `fill`.
    pub fn scatter(&self, v: &Measurement, fill: f64) -> Result<Image> {
        if v.per_channel() != self.kept.len() {
            return Err(Error::shape(
                format!("{} values per channel", self.kept.len()),
                v.per_channel(),
            ));
        }
        let shape = Shape::new(v.channels(), self.height, self.width);
        let mut out = Image::filled(shape, fill);
        for c in 0..v.channels() {
            let plane = out.plane_mut(c);
            for (&k, &val) in self.kept.iter().zip(v.channel(c)) {
                plane[k] = val;
            }
        }
        Ok(out)
    }
}

/// Output of a forward operator: planar per-channel value lists.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    channels: usize,
    values: Vec<f64>,
}

impl Measurement {
    pub fn new(channels: usize, values: Vec<f64>) -> Self {
        assert!(
            channels > 0 && values.len().is_multiple_of(channels),
            "measurement length must split evenly across channels"
        );
        Self { channels, values }
    }

    pub fn from_image(image: Image) -> Self {
        let channels = image.channels();
        Self::new(channels, image.into_vec())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn per_channel(&self) -> usize {
        self.values.len() / self.channels
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.per_channel();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn into_image(self, height: usize, width: usize) -> Result<Image> {
        Image::from_vec(Shape::new(self.channels, height, width), self.values)
    }

    pub fn dot(&self, other: &Measurement) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

#[derive(Clone, Debug)]
pub enum LinearOperator {
    Circulant(CirculantOperator),
    Mask(MaskOperator),
    /// `S·B`: blur with `blur`, then subsample with `mask`.
    Composed {
        blur: CirculantOperator,
        mask: MaskOperator,
    },
}

impl LinearOperator {
    pub fn composed(blur: CirculantOperator, mask: MaskOperator) -> Result<Self> {
        if blur.height() != mask.height() || blur.width() != mask.width() {
            return Err(Error::shape(
                format!("{}x{} mask grid", blur.height(), blur.width()),
                format!("{}x{}", mask.height(), mask.width()),
            ));
        }
        Ok(LinearOperator::Composed { blur, mask })
    }

    pub fn grid(&self) -> (usize, usize) {
        match self {
            LinearOperator::Circulant(op) => (op.height(), op.width()),
            LinearOperator::Mask(m) => (m.height(), m.width()),
            LinearOperator::Composed { blur, .. } => (blur.height(), blur.width()),
        }
    }

    /// Values per channel produced by [`apply`](Self::apply).
    pub fn output_per_channel(&self) -> usize {
        match self {
            LinearOperator::Circulant(op) => op.height() * op.width(),
            LinearOperator::Mask(m) | LinearOperator::Composed { mask: m, .. } => m.kept_len(),
        }
    }

    pub fn apply(&self, x: &Image) -> Result<Measurement> {
        match self {
            LinearOperator::Circulant(op) => Ok(Measurement::from_image(op.apply(x)?)),
            LinearOperator::Mask(m) => m.gather(x),
            LinearOperator::Composed { blur, mask } => mask.gather(&blur.apply(x)?),
        }
    }

    pub fn adjoint(&self, v: &Measurement) -> Result<Image> {
        let (h, w) = self.grid();
        match self {
            LinearOperator::Circulant(op) => {
                if v.per_channel() != h * w {
                    return Err(Error::shape(h * w, v.per_channel()));
                }
                op.adjoint(&v.clone().into_image(h, w)?)
            }
            LinearOperator::Mask(m) => m.scatter(v, 0.0),
            LinearOperator::Composed { blur, mask } => blur.adjoint(&mask.scatter(v, 0.0)?),
        }
    }
}

/// Additive Gaussian measurement noise.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseModel {
    /// i.i.d. noise with standard deviation `sigma`.
    Scalar { sigma: f64 },
    /// Independent noise with one variance per measurement entry.
    Diagonal { variances: Vec<f64> },
}

impl NoiseModel {
    /// `sigma = 0` is accepted and means noiseless synthesis.
    pub fn scalar(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "noise sigma must be finite and non-negative, got {sigma}"
            )));
        }
        Ok(NoiseModel::Scalar { sigma })
    }

    pub fn diagonal(variances: Vec<f64>) -> Result<Self> {
        if variances.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Parameter(
                "noise variances must be finite and non-negative".into(),
            ));
        }
        Ok(NoiseModel::Diagonal { variances })
    }

    /// True when every variance is strictly positive, as the samplers require.
    pub fn is_proper(&self) -> bool {
        match self {
            NoiseModel::Scalar { sigma } => *sigma > 0.0,
            NoiseModel::Diagonal { variances } => variances.iter().all(|&v| v > 0.0),
        }
    }

    pub fn variance(&self, index: usize) -> f64 {
        match self {
            NoiseModel::Scalar { sigma } => sigma * sigma,
            NoiseModel::Diagonal { variances } => variances[index],
        }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        match self {
            NoiseModel::Diagonal { variances } if variances.len() != len => {
                Err(Error::shape(format!("{len} noise variances"), variances.len()))
            }
            _ => Ok(()),
        }
    }
}

/// Synthesizes `y = Hx + n` with noise drawn from `noise`.
pub fn degrade<R: Rng + ?Sized>(
    x: &Image,
    op: &LinearOperator,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Measurement> {
    let mut y = op.apply(x)?;
    noise.check_len(y.len())?;
    for (i, v) in y.values_mut().iter_mut().enumerate() {
        let var = noise.variance(i);
        let eps: f64 = rng.sample(StandardNormal);
        if var > 0.0 {
            *v += var.sqrt() * eps;
        }
    }
    Ok(y)
}
