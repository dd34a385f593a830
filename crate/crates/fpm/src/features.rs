//! PCA over spectral vectors: fitting via the small Gram matrix, projection
//! of images to compact global feature vectors, and reconstruction back to
//! spectrum space.
//!
//! Sample counts are tiny (tens of images) while the vectors are long, so
//! the fit eigendecomposes the `n x n` inner-product matrix of centered
//! samples and maps its eigenvectors back into sample space. The
//! eigensolver is a cyclic Jacobi iteration: simple, portable and
//! deterministic.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Eigenvalues within this distance of zero are reported as zero.
const EIGEN_CLAMP: f64 = 1e-10;

/// Orthonormal component basis of the feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    /// Input vector length.
    pub dim: usize,
    /// Number of retained components.
    pub rank: usize,
    /// Sample mean, length `dim`.
    pub mean: Vec<f64>,
    /// One row per component, each length `dim`, pairwise orthonormal,
    /// ordered by descending eigenvalue. Sign is fixed so the
    /// largest-magnitude entry of each component is positive.
    pub components: Vec<Vec<f64>>,
    /// Variance along each component, non-increasing, non-negative.
    pub eigenvalues: Vec<f64>,
}

/// A projected feature vector (GFV), length equal to the basis rank.
pub type FeatureVector = Vec<f64>;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns `(eigenvalues, eigenvectors)` unsorted, `eigenvectors[k]` being
/// the unit vector for `eigenvalues[k]`. Iterates until the off-diagonal
/// Frobenius norm falls below `1e-12` relative to the initial Frobenius
/// norm, or 100 sweeps.
#[allow(clippy::needless_range_loop)]
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let frob: f64 = a
        .iter()
        .flat_map(|r| r.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    let tol = 1e-12 * frob;
    if frob > 0.0 {
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum::<f64>()
                .sqrt();
            if off <= tol {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p][q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for row in v.iter_mut() {
                        let vp = row[p];
                        let vq = row[q];
                        row[p] = c * vp - s * vq;
                        row[q] = s * vp + c * vq;
                    }
                }
            }
        }
    }
    let eigenvalues: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    let eigenvectors: Vec<Vec<f64>> = (0..n)
        .map(|k| (0..n).map(|i| v[i][k]).collect())
        .collect();
    (eigenvalues, eigenvectors)
}

/// Make the largest-magnitude entry positive; ties keep the first such entry.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

fn clamp_eigen(lambda: f64) -> f64 {
    if lambda.abs() < EIGEN_CLAMP {
        0.0
    } else {
        lambda.max(0.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Indices of `values` in descending order, ties broken by index.
fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| {
        values[j]
            .partial_cmp(&values[i])
            .expect("eigenvalues are finite")
            .then(i.cmp(&j))
    });
    order
}

/// Fit a PCA basis on `samples`, retaining at most `rank` components.
///
/// `rank` is clamped down to `min(dim, n - 1)` with a warning. Eigenvalues
/// are the variances with the `n - 1` divisor. Directions with numerically
/// zero variance are dropped; if every direction is degenerate (all samples
/// identical) the result is a rank-0 basis holding only the mean.
#[allow(clippy::needless_range_loop)]
pub fn fit_pca(samples: &[&[f64]], rank: usize) -> Result<PcaBasis> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    let d = samples[0].len();
    if d == 0 {
        return Err(Error::DegenerateInput("zero-dimensional samples".into()));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.len() != d {
            return Err(Error::LengthMismatch(format!(
                "sample {i} has length {}, expected {d}",
                s.len()
            )));
        }
    }
    if rank == 0 {
        return Err(Error::DegenerateInput("rank must be >= 1".into()));
    }
    let max_rank = d.min(n - 1);
    let rank = if rank > max_rank {
        warn!("pca rank {rank} clamped to {max_rank}");
        max_rank
    } else {
        rank
    };

    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(*s) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();

    let bessel = (n - 1) as f64;
    let mut components: Vec<Vec<f64>> = Vec::new();
    let mut eigenvalues: Vec<f64> = Vec::new();

    if n <= d {
        // Gram trick: eigendecompose the n x n inner-product matrix
        let mut gram = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let g = dot(&centered[i], &centered[j]);
                gram[i][j] = g;
                gram[j][i] = g;
            }
        }
        let (vals, vecs) = jacobi_eigen(gram);
        let order = descending_order(&vals);
        let lam_max = vals[order[0]].max(0.0);
        let keep_tol = (EIGEN_CLAMP * bessel).max(lam_max * 1e-12);
        for &idx in &order {
            if components.len() == rank {
                break;
            }
            let lam = vals[idx];
            if lam <= keep_tol {
                break;
            }
            let mut comp = vec![0.0; d];
            for (u, c) in vecs[idx].iter().zip(&centered) {
                if *u != 0.0 {
                    for (out, x) in comp.iter_mut().zip(c) {
                        *out += u * x;
                    }
                }
            }
            let norm = dot(&comp, &comp).sqrt();
            if norm <= 0.0 {
                continue;
            }
            for x in &mut comp {
                *x /= norm;
            }
            fix_sign(&mut comp);
            components.push(comp);
            eigenvalues.push(clamp_eigen(lam / bessel));
        }
    } else {
        // more samples than dimensions: direct covariance eigendecomposition
        let mut cov = vec![vec![0.0; d]; d];
        for c in &centered {
            for i in 0..d {
                let ci = c[i];
                if ci != 0.0 {
                    for j in i..d {
                        cov[i][j] += ci * c[j];
                    }
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                cov[i][j] /= bessel;
                cov[j][i] = cov[i][j];
            }
        }
        let (vals, vecs) = jacobi_eigen(cov);
        let order = descending_order(&vals);
        let lam_max = vals[order[0]].max(0.0);
        let keep_tol = EIGEN_CLAMP.max(lam_max * 1e-12);
        for &idx in &order {
            if components.len() == rank {
                break;
            }
            let lam = vals[idx];
            if lam <= keep_tol {
                break;
            }
            let mut comp = vecs[idx].clone();
            let norm = dot(&comp, &comp).sqrt();
            if norm <= 0.0 {
                continue;
            }
            for x in &mut comp {
                *x /= norm;
            }
            fix_sign(&mut comp);
            components.push(comp);
            eigenvalues.push(clamp_eigen(lam));
        }
    }

    if components.is_empty() {
        warn!("all samples identical: returning a rank-0 basis");
    } else if components.len() < rank {
        warn!(
            "pca rank reduced from {rank} to {} by zero-variance directions",
            components.len()
        );
    }
    Ok(PcaBasis {
        dim: d,
        rank: components.len(),
        mean,
        components,
        eigenvalues,
    })
}

/// Project `x` onto the basis: `g_i = <component_i, x - mean>`.
pub fn project(basis: &PcaBasis, x: &[f64]) -> Result<FeatureVector> {
    if x.len() != basis.dim {
        return Err(Error::LengthMismatch(format!(
            "vector length {} does not match basis dim {}",
            x.len(),
            basis.dim
        )));
    }
    Ok(basis
        .components
        .iter()
        .map(|comp| {
            comp.iter()
                .zip(x)
                .zip(&basis.mean)
                .map(|((c, xv), m)| c * (xv - m))
                .sum()
        })
        .collect())
}

/// Map a feature vector back to spectrum space: `mean + sum g_i component_i`.
pub fn reconstruct(basis: &PcaBasis, g: &[f64]) -> Result<Vec<f64>> {
    if g.len() != basis.rank {
        return Err(Error::LengthMismatch(format!(
            "feature vector length {} does not match basis rank {}",
            g.len(),
            basis.rank
        )));
    }
    let mut out = basis.mean.clone();
    for (gi, comp) in g.iter().zip(&basis.components) {
        if *gi != 0.0 {
            for (o, c) in out.iter_mut().zip(comp) {
                *o += gi * c;
            }
        }
    }
    Ok(out)
}
