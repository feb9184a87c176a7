use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Eigenvalues in `[-NEG_TOLERANCE, 0)` are roundoff and clamped to zero;
/// anything more negative means the input was not positive semi-definite.
const NEG_TOLERANCE: f64 = 1e-8;
const MAX_SWEEPS: usize = 100;

/// Sample mean and unbiased covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    /// Row-major `d×d`.
    pub cov: Vec<f64>,
    pub count: usize,
}

impl FeatureStats {
    /// Builds stats directly from moments; `cov` must be symmetric.
    pub fn new(mean: Vec<f64>, cov: Vec<f64>, count: usize) -> Result<Self> {
        let d = mean.len();
        if cov.len() != d * d {
            return Err(Error::shape(format!("{d}x{d} covariance"), format!("{} values", cov.len())));
        }
        for i in 0..d {
            for j in 0..i {
                if (cov[i * d + j] - cov[j * d + i]).abs() > 1e-9 {
                    return Err(Error::Degenerate(format!("covariance not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { mean, cov, count })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Fewer samples than `d + 1`: the covariance is rank deficient.
    pub fn is_degenerate(&self) -> bool {
        self.count < self.dim() + 1
    }
}

pub fn gaussian_stats(features: &[Vec<f64>]) -> Result<FeatureStats> {
    if features.len() < 2 {
        return Err(Error::Degenerate(format!(
            "covariance needs at least 2 features, got {}",
            features.len()
        )));
    }
    let d = features[0].len();
    if let Some(f) = features.iter().find(|f| f.len() != d) {
        return Err(Error::shape(format!("{d}-dimensional features"), format!("{}", f.len())));
    }
    let n = features.len() as f64;
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = vec![0.0; d * d];
    for f in features {
        for i in 0..d {
            let di = f[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += di * (f[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1.0);
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    Ok(FeatureStats {
        mean,
        cov,
        count: features.len(),
    })
}

/// Eigendecomposition of a symmetric row-major `n×n` matrix by cyclic
/// Jacobi rotations. Returns eigenvalues and the eigenvectors as the columns
/// of a row-major matrix.
pub fn sym_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>();
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

fn checked_eigenvalue(value: f64) -> Result<f64> {
    if value < -NEG_TOLERANCE {
        Err(Error::NotPsd(value))
    } else {
        Ok(value.max(0.0))
    }
}

/// `Tr((Σ₁Σ₂)^{1/2})` through the symmetric form `Σ₁^{1/2} Σ₂ Σ₁^{1/2}`.
fn trace_sqrt_product(s1: &[f64], s2: &[f64], d: usize) -> Result<f64> {
    let (vals, vecs) = sym_eigen(s1, d);
    let roots = vals.into_iter().map(|l| checked_eigenvalue(l).map(libm::sqrt)).collect::<Result<Vec<_>>>()?;
    let mut half = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += vecs[i * d + k] * roots[k] * vecs[j * d + k];
            }
            half[i * d + j] = acc;
        }
    }
    let matmul = |x: &[f64], y: &[f64]| {
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let xik = x[i * d + k];
                for j in 0..d {
                    out[i * d + j] += xik * y[k * d + j];
                }
            }
        }
        out
    };
    let mut m = matmul(&matmul(&half, s2), &half);
    for i in 0..d {
        for j in 0..i {
            let avg = 0.5 * (m[i * d + j] + m[j * d + i]);
            m[i * d + j] = avg;
            m[j * d + i] = avg;
        }
    }
    let (vals, _) = sym_eigen(&m, d);
    let mut tr = 0.0;
    for l in vals {
        tr += libm::sqrt(checked_eigenvalue(l)?);
    }
    Ok(tr)
}

fn one_sided(s1: &FeatureStats, s2: &FeatureStats) -> Result<f64> {
    let d = s1.dim();
    let mean_term: f64 = s1.mean.iter().zip(&s2.mean).map(|(a, b)| (a - b) * (a - b)).sum();
    let trace: f64 = (0..d).map(|i| s1.cov[i * d + i] + s2.cov[i * d + i]).sum();
    Ok(mean_term + trace - 2.0 * trace_sqrt_product(&s1.cov, &s2.cov, d)?)
}

/// Squared Fréchet distance between two Gaussians,
/// `‖μ₁−μ₂‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^{1/2})`, clamped at zero.
///
/// Both argument orders are evaluated and averaged, which makes the result
/// exactly symmetric.
pub fn frechet_distance(s1: &FeatureStats, s2: &FeatureStats) -> Result<f64> {
    if s1.dim() != s2.dim() || s1.cov.len() != s2.cov.len() {
        return Err(Error::shape(format!("dimension {}", s1.dim()), format!("dimension {}", s2.dim())));
    }
    let d = 0.5 * (one_sided(s1, s2)? + one_sided(s2, s1)?);
    if !d.is_finite() {
        return Err(Error::numeric("non-finite Fréchet distance"));
    }
    Ok(d.max(0.0))
}
