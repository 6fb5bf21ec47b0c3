//! Slow, dense reference computations for the test suites.
//!
//! Nothing here depends on the sampler crate: operators are rebuilt as
//! explicit matrices from their definitions and Gaussian quantities come from
//! plain linear algebra, so agreement with the fast paths is meaningful.

pub use nalgebra;
use nalgebra::{DMatrix, DVector};

/// Dense matrix of cyclic 2-D convolution with a centre-anchored kernel on an
/// `h x w` grid (row-major flattening).
///
/// `(Hx)[i, j] = sum_{a, b} k[a, b] x[(i - a + a0) mod h, (j - b + b0) mod w]`
/// with `(a0, b0)` the kernel centre.
pub fn circulant_matrix(taps: &[f64], rows: usize, cols: usize, h: usize, w: usize) -> DMatrix<f64> {
    assert_eq!(taps.len(), rows * cols);
    let (a0, b0) = (rows / 2, cols / 2);
    let n = h * w;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..h {
        for j in 0..w {
            for a in 0..rows {
                for b in 0..cols {
                    let si = (i + h * rows - a + a0) % h;
                    let sj = (j + w * cols - b + b0) % w;
                    m[(i * w + j, si * w + sj)] += taps[a * cols + b];
                }
            }
        }
    }
    m
}

/// Selection matrix keeping the listed flat indices, `kept.len() x n`.
pub fn mask_matrix(kept: &[usize], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(kept.len(), n);
    for (r, &k) in kept.iter().enumerate() {
        m[(r, k)] = 1.0;
    }
    m
}

#[derive(Clone, Debug)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    /// `N(Q^-1 b, Q^-1)` from precision `Q` and potential vector `b`.
    pub fn from_precision(q: &DMatrix<f64>, b: &DVector<f64>) -> Self {
        let cov = q.clone().try_inverse().expect("precision must be invertible");
        let cov = symmetrize(&cov);
        Self {
            mean: &cov * b,
            cov,
        }
    }

    pub fn variances(&self) -> DVector<f64> {
        self.cov.diagonal()
    }

    /// Conditions on `x[observed] = values` and returns the law of
    /// `x[hidden]`.
    pub fn condition(&self, hidden: &[usize], observed: &[usize], values: &DVector<f64>) -> Self {
        let pick = |rows: &[usize], cols: &[usize]| {
            DMatrix::from_fn(rows.len(), cols.len(), |r, c| self.cov[(rows[r], cols[c])])
        };
        let s_hh = pick(hidden, hidden);
        let s_ho = pick(hidden, observed);
        let s_oo = pick(observed, observed);
        let gain = &s_ho * s_oo.try_inverse().expect("observed block must be invertible");
        let m_h = DVector::from_fn(hidden.len(), |r, _| self.mean[hidden[r]]);
        let m_o = DVector::from_fn(observed.len(), |r, _| self.mean[observed[r]]);
        Self {
            mean: m_h + &gain * (values - m_o),
            cov: symmetrize(&(s_hh - &gain * s_ho.transpose())),
        }
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `nu(t) = 1 - prod_{j<=t} (1 - beta_j)` evaluated through a log-domain sum.
pub fn cumulative_noise_variance(betas: &[f64], t: usize) -> f64 {
    let log_keep: f64 = betas[..t].iter().map(|b| (-b).ln_1p()).sum();
    -log_keep.exp_m1()
}

/// Joint law of `(u_0, u_1, ..., u_t)` for a pixel-wise diffusion started
/// from `u_0 ~ N(m0, tau2 I)`, built as a linear map of independent inputs
/// `(u_0, eps_1, ..., eps_t)`. Block `j` holds `u_j`.
pub fn diffusion_joint(m0: &[f64], tau2: f64, betas: &[f64], t: usize) -> Gaussian {
    let d = m0.len();
    let blocks = t + 1;
    // map from inputs (u0 standardized, eps_1..eps_t) to stacked states
    let mut map = DMatrix::zeros(d * blocks, d * blocks);
    let mut offset = DVector::zeros(d * blocks);
    for p in 0..d {
        map[(p, p)] = tau2.sqrt();
        offset[p] = m0[p];
    }
    for j in 1..blocks {
        let keep = (1.0 - betas[j - 1]).sqrt();
        let noise = betas[j - 1].sqrt();
        for p in 0..d {
            let row = j * d + p;
            for col in 0..d * blocks {
                map[(row, col)] = keep * map[((j - 1) * d + p, col)];
            }
            map[(row, j * d + p)] += noise;
            offset[row] = keep * offset[(j - 1) * d + p];
        }
    }
    Gaussian {
        mean: offset,
        cov: symmetrize(&(&map * map.transpose())),
    }
}

/// Stationary law of `x' = F x + g + e`, `e ~ N(0, S)`, for a stable `F`.
pub fn stationary(f: &DMatrix<f64>, g: &DVector<f64>, s: &DMatrix<f64>) -> Gaussian {
    let n = f.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mean = (&eye - f).try_inverse().expect("I - F must be invertible") * g;
    // doubling: P_{k+1} = P_k + A_k P_k A_k^T, A_{k+1} = A_k^2
    let mut cov = s.clone();
    let mut a = f.clone();
    for _ in 0..64 {
        let step = &a * &cov * a.transpose();
        cov += &step;
        a = &a * &a;
        if step.amax() <= 1e-18 * cov.amax().max(1e-300) {
            break;
        }
    }
    Gaussian {
        mean,
        cov: symmetrize(&cov),
    }
}

/// Variance of the time average of `n` consecutive stationary draws,
/// per coordinate, using the long-run covariance
/// `(I - F)^-1 G + G (I - F)^-T - G`.
pub fn time_average_variance(f: &DMatrix<f64>, gamma0: &DMatrix<f64>, n: usize) -> DVector<f64> {
    let eye = DMatrix::<f64>::identity(f.nrows(), f.nrows());
    let inv = (&eye - f).try_inverse().expect("I - F must be invertible");
    let lrv = &inv * gamma0 + gamma0 * inv.transpose() - gamma0;
    lrv.diagonal() / n as f64
}

/// Variance of the per-coordinate sample variance over `n` draws of a
/// stationary Gaussian AR(1) chain: `(2 / n) sum_k gamma_i(k)^2`.
pub fn sample_variance_variance(f: &DMatrix<f64>, gamma0: &DMatrix<f64>, n: usize) -> DVector<f64> {
    let d = f.nrows();
    let mut total = DVector::from_fn(d, |i, _| gamma0[(i, i)].powi(2));
    let mut lag = gamma0.clone();
    for _ in 0..10_000 {
        lag = f * lag;
        let contrib = DVector::from_fn(d, |i, _| 2.0 * lag[(i, i)].powi(2));
        total += &contrib;
        if contrib.amax() <= 1e-16 * total.amax() {
            break;
        }
    }
    total * (2.0 / n as f64)
}

/// Stationary law of the x-samples of a split Gibbs chain for inpainting
/// whose z-step is an exact conjugate reverse run from a fixed step `t`
/// started at `sqrt(1 - nu(t)) x`, with Monte Carlo standard errors for
/// `samples` consecutive draws.
pub struct ChainLaw {
    pub law: Gaussian,
    pub mean_se: DVector<f64>,
    pub variance_se: DVector<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn inpaint_chain_law(
    kept: &[usize],
    y: &[f64],
    sigma: f64,
    rho: f64,
    m0: &[f64],
    tau2: f64,
    betas: &[f64],
    t: usize,
    samples: usize,
) -> ChainLaw {
    let n = m0.len();
    let m = mask_matrix(kept, n);
    let eye = DMatrix::<f64>::identity(n, n);
    // x | z ~ N(C (M^T y / sigma^2 + z / rho^2), C)
    let q = m.transpose() * &m / (sigma * sigma) + &eye / (rho * rho);
    let c = symmetrize(&q.try_inverse().expect("x precision must be invertible"));
    let a_z = &c / (rho * rho);
    let a_y = &c * (m.transpose() * DVector::from_column_slice(y)) / (sigma * sigma);

    // z | u_t from the joint law of one pixel's diffusion with unit prior mean
    let joint = diffusion_joint(&[1.0], tau2, betas, t);
    let s_t = joint.mean[t];
    let gain = joint.cov[(0, t)] / joint.cov[(t, t)];
    let post_var = joint.cov[(0, 0)] - gain * joint.cov[(0, t)];
    let input_scale = (1.0 - cumulative_noise_variance(betas, t)).sqrt();

    let m0v = DVector::from_column_slice(m0);
    let f = &a_z * (gain * input_scale);
    let g = &a_z * (&m0v * (1.0 - gain * s_t)) + a_y;
    let s = symmetrize(&(&a_z * a_z.transpose() * post_var + &c));
    let law = stationary(&f, &g, &s);
    let mean_se = time_average_variance(&f, &law.cov, samples).map(f64::sqrt);
    let variance_se = sample_variance_variance(&f, &law.cov, samples).map(f64::sqrt);
    ChainLaw {
        law,
        mean_se,
        variance_se,
    }
}

/// Per-coordinate running mean and unbiased variance.
#[derive(Clone, Debug)]
pub struct Moments {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> Vec<f64> {
        self.m2.iter().map(|s| s / (self.n - 1) as f64).collect()
    }

    /// Standard error of each mean for independent draws.
    pub fn mean_se(&self) -> Vec<f64> {
        self.variance().iter().map(|v| (v / self.n as f64).sqrt()).collect()
    }

    /// Standard error of each variance for independent Gaussian draws.
    pub fn variance_se(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.variance().iter().map(|v| v * (2.0 / (n - 1.0)).sqrt()).collect()
    }
}

/// Largest `|observed - expected| / se` over all coordinates.
pub fn max_z(observed: &[f64], expected: &[f64], se: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .zip(se)
        .map(|((o, e), s)| (o - e).abs() / s)
        .fold(0.0, f64::max)
}

/// Straightforward SSIM of one channel: 7x7 uniform windows fully inside the
/// image, unbiased local (co)variances, constants from `peak`.
pub fn ssim_reference(a: &[f64], b: &[f64], h: usize, w: usize, peak: f64) -> f64 {
    const WIN: usize = 7;
    let c1 = (0.01 * peak) * (0.01 * peak);
    let c2 = (0.03 * peak) * (0.03 * peak);
    let clamp = |v: f64| v.clamp(0.0, peak);
    let n = (WIN * WIN) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..=h - WIN {
        for j in 0..=w - WIN {
            let mut xs = Vec::with_capacity(WIN * WIN);
            let mut ys = Vec::with_capacity(WIN * WIN);
            for di in 0..WIN {
                for dj in 0..WIN {
                    xs.push(clamp(a[(i + di) * w + j + dj]));
                    ys.push(clamp(b[(i + di) * w + j + dj]));
                }
            }
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let vx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / (n - 1.0);
            let vy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / (n - 1.0);
            let cxy = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n - 1.0);
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}
