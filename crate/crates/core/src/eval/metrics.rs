use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn metric_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Metric(msg.into()))
}

fn moments(set: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = set.len();
    let d = set[0].len();
    let mut mean = DVector::zeros(d);
    for v in set {
        mean += DVector::from_column_slice(v);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for v in set {
        let c = DVector::from_column_slice(v) - &mean;
        cov += &c * c.transpose();
    }
    cov /= (n - 1) as f64;
    (mean, cov)
}

const EIGEN_EPS: f64 = 1e-12;
const EIGEN_MAX_ITER: usize = 10_000;

fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (m + m.transpose()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance matrix".into()));
    }
    SymmetricEigen::try_new(sym, EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Metric("covariance square root did not converge".into()))
}

/// PSD square root via eigendecomposition, negative eigenvalues clamped to 0.
fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetric_eigenvalues(m)?;
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose())
}

/// Fréchet distance between Gaussians fitted to two embedding sets:
/// `‖μ_a − μ_b‖² + tr Σ_a + tr Σ_b − 2 tr (Σ_a^{1/2} Σ_b Σ_a^{1/2})^{1/2}`.
/// The trace term is the symmetric form of `tr (Σ_a Σ_b)^{1/2}`.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return metric_err("Fréchet distance needs at least two vectors per set");
    }
    let d = a[0].len();
    if d == 0 || a.iter().chain(b).any(|v| v.len() != d) {
        return metric_err("embedding dimensions differ");
    }
    let (mu_a, cov_a) = moments(a);
    let (mu_b, cov_b) = moments(b);
    let root_a = psd_sqrt(&cov_a)?;
    let inner = &root_a * &cov_b * &root_a;
    let tr_cross: f64 = symmetric_eigenvalues(&inner)?
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let diff = (&mu_a - &mu_b).norm_squared();
    let value = diff + cov_a.trace() + cov_b.trace() - 2.0 * tr_cross;
    if !value.is_finite() {
        return Err(Error::NonFinite("Fréchet distance".into()));
    }
    Ok(value.max(0.0))
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Dynamic range of `[-1, 1]` data.
pub const SSIM_RANGE: f64 = 2.0;

pub fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering of an `h × w` plane.
fn filter_valid(img: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|j| k[j] * img[y * w + x + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|j| k[j] * rows[(y + j) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over all valid 11×11 windows of one image plane.
pub fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> Result<f64> {
    if a.len() != h * w || b.len() != h * w {
        return metric_err("SSIM planes differ in size");
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return metric_err(format!("SSIM needs planes of at least {SSIM_WINDOW}x{SSIM_WINDOW}"));
    }
    let k = gaussian_window();
    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let mu_a = filter_valid(a, h, w, &k);
    let mu_b = filter_valid(b, h, w, &k);
    let e_aa = filter_valid(&prod(a, a), h, w, &k);
    let e_bb = filter_valid(&prod(b, b), h, w, &k);
    let e_ab = filter_valid(&prod(a, b), h, w, &k);
    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let saa = e_aa[i] - ma * ma;
            let sbb = e_bb[i] - mb * mb;
            let sab = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * sab + c2)) / ((ma * ma + mb * mb + c1) * (saa + sbb + c2))
        })
        .sum();
    Ok(total / mu_a.len() as f64)
}

fn check_clip(c: &Tensor<f32>) -> Result<[usize; 4]> {
    let s = c.shape();
    if s.len() != 4 || s[1] < 3 {
        return metric_err(format!("clip must be (c, T>=3, H, W), got {s:?}"));
    }
    Ok([s[0], s[1], s[2], s[3]])
}

/// SSIM of two clips `(c, T, H, W)` averaged over the intermediate frames
/// `1..T-1` and all channels.
pub fn ssim(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<f64> {
    let dims = check_clip(a)?;
    if a.shape() != b.shape() {
        return metric_err(format!("SSIM inputs differ: {:?} vs {:?}", a.shape(), b.shape()));
    }
    let [c, t, h, w] = dims;
    let plane = |x: &Tensor<f32>, ch: usize, f: usize| -> Vec<f64> {
        let off = (ch * t + f) * h * w;
        x.data()[off..off + h * w].iter().map(|&v| v as f64).collect()
    };
    let mut total = 0.0;
    for ch in 0..c {
        for f in 1..t - 1 {
            total += ssim_plane(&plane(a, ch, f), &plane(b, ch, f), h, w)?;
        }
    }
    Ok(total / (c * (t - 2)) as f64)
}

/// Best SSIM of any sample against the ground truth.
pub fn best_of_n_ssim(samples: &[Tensor<f32>], ground_truth: &Tensor<f32>) -> Result<f64> {
    if samples.is_empty() {
        return metric_err("best-of-n SSIM needs at least one sample");
    }
    samples
        .iter()
        .map(|s| ssim(s, ground_truth))
        .try_fold(f64::NEG_INFINITY, |m, v| Ok(m.max(v?)))
}

/// Mean of `1 − cos(e_i, e_j)` over unordered pairs, evaluated as
/// `‖ê_i − ê_j‖² / 2` on unit vectors so identical embeddings give exactly 0.
pub fn diversity(embeddings: &[Vec<f64>]) -> Result<f64> {
    if embeddings.len() < 2 {
        return metric_err("diversity needs at least two samples");
    }
    let unit = embeddings
        .iter()
        .map(|e| {
            let n = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 || !n.is_finite() {
                return metric_err("zero-norm or non-finite embedding");
            }
            Ok(e.iter().map(|v| v / n).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let n = unit.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| (a - b).powi(2)).sum();
            total += d2 / 2.0;
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// Per-pixel mean of equally shaped clips, accumulated in `f64`.
pub fn average_video(samples: &[Tensor<f32>]) -> Result<Tensor<f32>> {
    let Some(first) = samples.first() else {
        return metric_err("average of zero videos");
    };
    if samples.iter().any(|s| s.shape() != first.shape()) {
        return Err(Error::Shape("videos to average differ in shape".into()));
    }
    let mut acc = vec![0f64; first.numel()];
    for s in samples {
        for (a, &v) in acc.iter_mut().zip(s.data()) {
            *a += v as f64;
        }
    }
    let n = samples.len() as f64;
    Ok(Tensor::from_vec(first.shape(), acc.into_iter().map(|a| (a / n) as f32).collect()))
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_ci(values: &[f64], n_resamples: usize, level: f64, rng: &mut impl Rng) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return metric_err("bootstrap needs at least two values");
    }
    if n_resamples == 0 || !(0.0 < level && level < 1.0) {
        return Err(Error::Config("bootstrap needs n_resamples > 0 and 0 < level < 1".into()));
    }
    let n = values.len();
    let mut means: Vec<f64> = (0..n_resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let idx = |q: f64| ((q * n_resamples as f64).floor() as usize).min(n_resamples - 1);
    Ok((means[idx(alpha)], means[idx(1.0 - alpha)]))
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}
