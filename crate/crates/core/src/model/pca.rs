//! Principal component analysis with a variance-retention cut.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{AamError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Orthonormal components, strongest first.
    pub components: Vec<Vec<f64>>,
    /// Unbiased sample variances along each component, descending.
    pub eigenvalues: Vec<f64>,
    /// Trace of the sample covariance.
    pub total_variance: f64,
}

impl Pca {
    pub fn retained_fraction(&self) -> f64 {
        if self.total_variance > 0.0 {
            self.eigenvalues.iter().sum::<f64>() / self.total_variance
        } else {
            1.0
        }
    }
}

/// Eigenvalues below this fraction of the largest are treated as rank noise.
const RANK_TOL: f64 = 1e-10;
/// Variance below this fraction of the mean squared sample norm is rounding.
const ABS_TOL: f64 = 1e-20;

/// PCA of `samples`, keeping the fewest leading components whose variance
/// reaches `retained_variance` of the total.
///
/// Uses the `d x d` covariance when the dimension does not exceed the sample
/// count and the `N x N` Gram matrix otherwise. Each component is signed so
/// that its largest-magnitude entry is positive. Rank-0 data yields a model
/// with no components.
pub fn pca(samples: &[Vec<f64>], retained_variance: f64) -> Result<Pca> {
    if !(retained_variance > 0.0 && retained_variance <= 1.0) {
        return Err(AamError::InvalidConfig(format!(
            "retained variance {retained_variance} outside (0, 1]"
        )));
    }
    let n = samples.len();
    if n < 2 {
        return Err(AamError::EmptyTraining(format!("PCA needs at least 2 samples, got {n}")));
    }
    let d = samples[0].len();
    if let Some(s) = samples.iter().find(|s| s.len() != d) {
        return Err(AamError::DimensionMismatch {
            what: "sample dimension",
            expected: d,
            got: s.len(),
        });
    }
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| samples[i][j] - mean[j]);
    let denom = (n - 1) as f64;
    let total_variance = centered.iter().map(|x| x * x).sum::<f64>() / denom;

    let mut pairs: Vec<(f64, Vec<f64>)> = if d <= n {
        let cov = centered.transpose() * &centered / denom;
        let eig = SymmetricEigen::new(cov);
        (0..d)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).iter().copied().collect()))
            .collect()
    } else {
        let gram = &centered * centered.transpose() / denom;
        let eig = SymmetricEigen::new(gram);
        (0..n)
            .filter(|&k| eig.eigenvalues[k] > 0.0)
            .map(|k| {
                let lambda = eig.eigenvalues[k];
                let u = eig.eigenvectors.column(k);
                let v = centered.transpose() * u / (denom * lambda).sqrt();
                (lambda, v.iter().copied().collect())
            })
            .collect()
    };
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let lambda_max = pairs.first().map_or(0.0, |p| p.0);
    // variance at the rounding level of the raw samples is not signal
    let energy = samples.iter().flatten().map(|x| x * x).sum::<f64>() / n as f64;
    let floor = (RANK_TOL * lambda_max).max(ABS_TOL * energy);
    let mut eigenvalues = Vec::new();
    let mut components = Vec::new();
    if total_variance > ABS_TOL * energy && lambda_max > floor {
        let target = retained_variance * total_variance * (1.0 - 1e-12);
        let mut cumulative = 0.0;
        for (lambda, vec) in pairs {
            if cumulative >= target || lambda <= floor {
                break;
            }
            cumulative += lambda;
            eigenvalues.push(lambda);
            components.push(vec);
        }
    }
    orthonormalize_in_place(&mut components);
    for c in &mut components {
        apply_sign_convention(c);
    }
    Ok(Pca {
        mean,
        components,
        eigenvalues,
        total_variance,
    })
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is positive.
pub fn apply_sign_convention(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-pass modified Gram-Schmidt; vectors are assumed independent.
fn orthonormalize_in_place(vectors: &mut [Vec<f64>]) {
    for i in 0..vectors.len() {
        let (done, rest) = vectors.split_at_mut(i);
        let v = &mut rest[0];
        for _ in 0..2 {
            for u in done.iter() {
                let c = dot(v, u);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = dot(v, v).sqrt();
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Gram-Schmidt over `vectors` in order, dropping any whose residual norm
/// falls below `drop_tol` times its original norm. Returns the kept
/// orthonormal vectors and the input index of each.
pub fn gram_schmidt(vectors: &[Vec<f64>], drop_tol: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (i, v) in vectors.iter().enumerate() {
        let original = dot(v, v).sqrt();
        if original == 0.0 {
            continue;
        }
        let mut r = v.clone();
        for _ in 0..2 {
            for u in &out {
                let c = dot(&r, u);
                r.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = dot(&r, &r).sqrt();
        if n < drop_tol * original {
            continue;
        }
        r.iter_mut().for_each(|x| *x /= n);
        out.push(r);
        kept.push(i);
    }
    (out, kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_spread() {
        let p = pca(&[vec![1.0, 0.0], vec![-1.0, 0.0]], 1.0).unwrap();
        assert_eq!(p.mean, vec![0.0, 0.0]);
        assert_eq!(p.components.len(), 1);
        assert!((p.components[0][0] - 1.0).abs() < 1e-15 && p.components[0][1].abs() < 1e-15);
        // unbiased variance of {1, -1}
        assert!((p.eigenvalues[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank_zero_gives_empty_model() {
        let p = pca(&[vec![3.0, 1.0], vec![3.0, 1.0], vec![3.0, 1.0]], 0.95).unwrap();
        assert!(p.components.is_empty());
        assert_eq!(p.mean, vec![3.0, 1.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(pca(&[vec![1.0]], 0.9).is_err());
        assert!(pca(&[vec![1.0], vec![2.0]], 0.0).is_err());
        assert!(pca(&[vec![1.0], vec![2.0, 1.0]], 0.5).is_err());
    }

    #[test]
    fn gram_schmidt_drops_dependent_vectors() {
        let vs = vec![vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]];
        let (out, kept) = gram_schmidt(&vs, 1e-10);
        assert_eq!(kept, vec![0, 2]);
        assert!((out[1][1] - 1.0).abs() < 1e-15);
    }
}
