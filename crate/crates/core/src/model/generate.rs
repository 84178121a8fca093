//! Synthetic data generation from a ground-truth mixture.

use super::{Dataset, MixtureConfig, ModelPoint, TrueMixture};
use crate::error::{Error, Result};
use crate::linalg;
use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Draw labels from the categorical weights and points from the matching
/// Gaussian component. Deterministic under a fixed RNG stream.
pub fn generate_dataset(
    cfg: &MixtureConfig,
    truth_spec: &ModelPoint,
    rng: &mut impl Rng,
) -> Result<(Dataset, TrueMixture)> {
    cfg.validate()?;
    truth_spec.validate()?;
    if truth_spec.k() != cfg.k || truth_spec.p() != cfg.p {
        return Err(Error::config("truth spec dimensions do not match the mixture config"));
    }
    for l in &truth_spec.precisions {
        linalg::check_spd(l).map_err(|e| {
            Error::Geometry(format!("truth precision rejected: {e}"))
        })?;
    }

    // Σ^{1/2} per component: Λ = L Lᵀ gives Σ = L^{-T} L^{-1}, so x = μ + L^{-T} z.
    let mut sigma_roots = Vec::with_capacity(cfg.k);
    for l in &truth_spec.precisions {
        let chol = l
            .clone()
            .cholesky()
            .ok_or_else(|| Error::geometry("truth precision is not positive definite"))?;
        let linv = chol
            .l()
            .try_inverse()
            .ok_or_else(|| Error::geometry("precision factor not invertible"))?;
        sigma_roots.push(linv.transpose());
    }

    let mut labels = Vec::with_capacity(cfg.n);
    let mut points = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut z = cfg.k - 1;
        for (k, &w) in truth_spec.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                z = k;
                break;
            }
        }
        labels.push(z);
        let noise = DVector::from_iterator(
            cfg.p,
            (0..cfg.p).map(|_| StandardNormal.sample(rng)),
        );
        points.push(&truth_spec.means[z] + &sigma_roots[z] * noise);
    }

    let mut class_sizes = vec![0usize; cfg.k];
    for &z in &labels {
        class_sizes[z] += 1;
    }

    let truth = TrueMixture {
        weights: truth_spec.weights.clone(),
        means: truth_spec.means.clone(),
        precisions: truth_spec.precisions.clone(),
        true_labels: labels,
        class_sizes,
    };
    Ok((Dataset { points }, truth))
}

/// Hard labels from a few Lloyd iterations, used to seed the discrete factor.
/// Ties break toward the lowest component index.
pub fn kmeans_labels(ds: &Dataset, k: usize, rng: &mut impl Rng, iters: usize) -> Vec<usize> {
    let n = ds.n();
    let p = ds.p();
    assert!(n >= k && k >= 1);
    // seed centers on distinct random points
    let mut centers: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut used = vec![false; n];
    while centers.len() < k {
        let i = rng.random_range(0..n);
        if !used[i] {
            used[i] = true;
            centers.push(ds.points[i].clone());
        }
    }
    let mut labels = vec![0usize; n];
    for _ in 0..iters {
        for (i, x) in ds.points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, ctr) in centers.iter().enumerate() {
                let d = (x - ctr).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            labels[i] = best;
        }
        let mut sums = vec![DVector::zeros(p); k];
        let mut counts = vec![0usize; k];
        for (i, x) in ds.points.iter().enumerate() {
            sums[labels[i]] += x;
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = &sums[c] / counts[c] as f64;
            }
        }
    }
    // keep every class non-empty so the labeling is admissible at λ₀ = 1
    let mut counts = vec![0usize; k];
    for &z in &labels {
        counts[z] += 1;
    }
    for c in 0..k {
        if counts[c] == 0 {
            let donor = (0..n).find(|&i| counts[labels[i]] > 1).expect("n >= k");
            counts[labels[donor]] -= 1;
            labels[donor] = c;
            counts[c] += 1;
        }
    }
    labels
}
