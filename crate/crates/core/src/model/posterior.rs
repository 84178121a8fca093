//! Cut-off log-posterior, the scaled potential, and its gradient.
//!
//! The joint log density over a labeling z and a parameter point ξ is
//!
//!   Σ_{n,k} z_{nk} [ log π_k − ½ (x_n−μ_k)ᵀ Λ_k (x_n−μ_k) + ½ log|Λ_k| ]
//!     + Σ_k log p(μ_k) + Σ_k log p(Λ_k) + log p(π)
//!
//! with the additive constant fixed to zero, and −∞ outside the cut-off
//! region. The potential is the negative log density divided by the base
//! scale λ₀, so that exp(−λ · potential) with λ = β λ₀ is proportional to
//! the β-tempered posterior.

use super::{Assignment, Dataset, ModelPoint, PriorConfig};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Per-class sufficient statistics of a labeling: counts, sums, and second
/// moments. Counts are kept as f64 so the same carrier serves expected
/// (fractional) statistics.
#[derive(Debug, Clone)]
pub struct SheetStats {
    pub n: Vec<f64>,
    pub t: Vec<DVector<f64>>,
    pub q: Vec<DMatrix<f64>>,
}

impl SheetStats {
    pub fn zeros(k: usize, p: usize) -> Self {
        SheetStats {
            n: vec![0.0; k],
            t: vec![DVector::zeros(p); k],
            q: vec![DMatrix::zeros(p, p); k],
        }
    }

    pub fn from_assignment(ds: &Dataset, z: &Assignment) -> Self {
        let k = z.k();
        let p = ds.p();
        let mut s = SheetStats::zeros(k, p);
        for (x, &c) in ds.points.iter().zip(z.labels()) {
            s.n[c] += 1.0;
            s.t[c] += x;
            s.q[c] += x * x.transpose();
        }
        s
    }

    pub fn k(&self) -> usize {
        self.n.len()
    }

    /// u-weighted mixture of statistics, Σ_i u_i · stats_i.
    pub fn weighted_mix(list: &[SheetStats], weights: &[f64]) -> Self {
        let k = list[0].k();
        let p = list[0].t[0].len();
        let mut out = SheetStats::zeros(k, p);
        for (s, &u) in list.iter().zip(weights) {
            if u == 0.0 {
                continue;
            }
            for c in 0..k {
                out.n[c] += u * s.n[c];
                out.t[c] += u * &s.t[c];
                out.q[c] += u * &s.q[c];
            }
        }
        out
    }
}

/// Per-point quantities reused across many labelings at the same ξ.
#[derive(Debug, Clone)]
pub struct PointTerms {
    pub in_cutoff: bool,
    ln_pi: Vec<f64>,
    half_logdet: Vec<f64>,
    lam: Vec<DMatrix<f64>>,
    lam_mu: Vec<DVector<f64>>,
    mu_lam_mu: Vec<f64>,
    /// log prior of the point (μ, Λ, π blocks together).
    pub log_prior: f64,
}

impl PointTerms {
    pub fn new(point: &ModelPoint, priors: &PriorConfig) -> Self {
        let k = point.k();
        let in_cutoff = point.in_cutoff(priors);
        let mut ln_pi = vec![0.0; k];
        let mut half_logdet = vec![0.0; k];
        let mut lam_mu = Vec::with_capacity(k);
        let mut mu_lam_mu = vec![0.0; k];
        let mut log_prior = 0.0;
        for c in 0..k {
            ln_pi[c] = point.weights[c].ln();
            let lam = &point.precisions[c];
            half_logdet[c] = 0.5
                * lam
                    .clone()
                    .cholesky()
                    .map(|ch| 2.0 * (0..lam.nrows()).map(|i| ch.l()[(i, i)].ln()).sum::<f64>())
                    .unwrap_or(f64::NEG_INFINITY);
            let lm = lam * &point.means[c];
            mu_lam_mu[c] = point.means[c].dot(&lm);
            lam_mu.push(lm);
            log_prior += -priors.mean_decay * point.means[c].norm_squared();
            log_prior += -(lam * lam).trace() / (2.0 * priors.sigma[c]);
            // π entries of zero contribute only through the Dirichlet exponent
            if priors.dirichlet_alpha != 1.0 {
                log_prior += (priors.dirichlet_alpha - 1.0) * ln_pi[c];
            }
        }
        PointTerms {
            in_cutoff,
            ln_pi,
            half_logdet,
            lam: point.precisions.clone(),
            lam_mu,
            mu_lam_mu,
            log_prior,
        }
    }

    /// Data term Σ_{n,k} z_{nk}[log π_k − ½(x−μ)ᵀΛ(x−μ) + ½ log|Λ|],
    /// expressed through sufficient statistics; empty classes contribute
    /// nothing (the 0·log 0 convention).
    pub fn data_term(&self, stats: &SheetStats) -> f64 {
        let mut total = 0.0;
        for c in 0..self.lam.len() {
            let n = stats.n[c];
            if n == 0.0 {
                continue;
            }
            let quad = (&self.lam[c] * &stats.q[c]).trace() - 2.0 * self.lam_mu[c].dot(&stats.t[c])
                + n * self.mu_lam_mu[c];
            total += n * self.ln_pi[c] - 0.5 * quad + n * self.half_logdet[c];
        }
        total
    }
}

/// Cut-off joint log density; −∞ outside the admissible region.
pub fn log_posterior(
    ds: &Dataset,
    point: &ModelPoint,
    z: &Assignment,
    priors: &PriorConfig,
) -> f64 {
    let terms = PointTerms::new(point, priors);
    log_posterior_from_terms(&terms, &SheetStats::from_assignment(ds, z))
}

pub fn log_posterior_from_terms(terms: &PointTerms, stats: &SheetStats) -> f64 {
    if !terms.in_cutoff {
        return f64::NEG_INFINITY;
    }
    terms.data_term(stats) + terms.log_prior
}

/// Convenience wrapper when a single point is evaluated against one sheet.
pub fn log_posterior_stats(point: &ModelPoint, stats: &SheetStats, priors: &PriorConfig) -> f64 {
    log_posterior_from_terms(&PointTerms::new(point, priors), stats)
}

/// Scaled potential, −(1/λ₀) · log posterior; +∞ outside the cut-off.
pub fn potential(
    ds: &Dataset,
    point: &ModelPoint,
    z: &Assignment,
    priors: &PriorConfig,
    lambda0: f64,
) -> f64 {
    assert!(lambda0 > 0.0, "lambda0 must be positive");
    -log_posterior(ds, point, z, priors) / lambda0
}

pub fn potential_from_stats(
    terms: &PointTerms,
    stats: &SheetStats,
    lambda0: f64,
) -> f64 {
    -log_posterior_from_terms(terms, stats) / lambda0
}

/// Tangent-space gradient of the potential: per-component mean and symmetric
/// precision blocks, and the weight block projected onto the simplex tangent.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub mu: Vec<DVector<f64>>,
    pub lambda: Vec<DMatrix<f64>>,
    pub pi: Vec<f64>,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for g in &self.mu {
            s += g.norm_squared();
        }
        for g in &self.lambda {
            s += g.norm_squared();
        }
        for g in &self.pi {
            s += g * g;
        }
        s.sqrt()
    }

    pub fn scaled(&self, c: f64) -> Gradient {
        Gradient {
            mu: self.mu.iter().map(|g| g * c).collect(),
            lambda: self.lambda.iter().map(|g| g * c).collect(),
            pi: self.pi.iter().map(|g| g * c).collect(),
        }
    }

    pub fn add_in(&mut self, other: &Gradient, c: f64) {
        for (a, b) in self.mu.iter_mut().zip(&other.mu) {
            *a += b * c;
        }
        for (a, b) in self.lambda.iter_mut().zip(&other.lambda) {
            *a += b * c;
        }
        for (a, b) in self.pi.iter_mut().zip(&other.pi) {
            *a += b * c;
        }
    }

    pub fn zeros(k: usize, p: usize) -> Gradient {
        Gradient {
            mu: vec![DVector::zeros(p); k],
            lambda: vec![DMatrix::zeros(p, p); k],
            pi: vec![0.0; k],
        }
    }
}

/// Analytic gradient of the potential at a strict interior point.
pub fn potential_gradient(
    stats: &SheetStats,
    point: &ModelPoint,
    priors: &PriorConfig,
    lambda0: f64,
) -> Result<Gradient> {
    if !point.strictly_inside(priors, 0.0) {
        return Err(Error::geometry("gradient undefined at cut-off boundary"));
    }
    if point.weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::geometry("gradient undefined at the simplex boundary"));
    }
    let k = point.k();
    let scale = -1.0 / lambda0;
    let mut mu = Vec::with_capacity(k);
    let mut lambda = Vec::with_capacity(k);
    let mut pi = Vec::with_capacity(k);
    for c in 0..k {
        let n = stats.n[c];
        let lam = &point.precisions[c];
        let m = &point.means[c];
        // ∂ log posterior / ∂μ = Λ (T − n μ) − 2 a μ
        let gmu = lam * (&stats.t[c] - m * n) - m * (2.0 * priors.mean_decay);
        mu.push(gmu * scale);
        // ∂ log posterior / ∂Λ = −½(Q − Tμᵀ − μTᵀ + n μμᵀ) + (n/2) Λ⁻¹ − Λ/σ
        let cross = &stats.t[c] * m.transpose();
        let mut glam = (&stats.q[c] - &cross - cross.transpose() + (m * m.transpose()) * n) * -0.5;
        if n > 0.0 {
            let inv = lam
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::geometry("precision not invertible"))?;
            glam += inv * (n / 2.0);
        }
        glam -= lam / priors.sigma[c];
        lambda.push(glam * scale);
        // ∂ log posterior / ∂π = (n + α − 1)/π
        pi.push(scale * (n + priors.dirichlet_alpha - 1.0) / point.weights[c]);
    }
    // project the weight block onto the simplex tangent {v : Σ v = 0}
    let mean = pi.iter().sum::<f64>() / k as f64;
    for g in &mut pi {
        *g -= mean;
    }
    Ok(Gradient { mu, lambda, pi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn flat(k: usize) -> PriorConfig {
        PriorConfig::weak(k, 1e6)
    }

    fn small_instance(seed: u64) -> (Dataset, ModelPoint, Assignment, PriorConfig) {
        let mut rng = crate::rng::stream(seed, "posterior-test", 0);
        let ds = Dataset {
            points: (0..5)
                .map(|_| DVector::from_vec(vec![rng.random_range(-2.0..2.0)]))
                .collect(),
        };
        let point = ModelPoint {
            weights: vec![0.4, 0.6],
            means: vec![
                DVector::from_vec(vec![rng.random_range(-1.0..1.0)]),
                DVector::from_vec(vec![rng.random_range(-1.0..1.0)]),
            ],
            precisions: vec![
                DMatrix::from_element(1, 1, rng.random_range(0.5..2.0)),
                DMatrix::from_element(1, 1, rng.random_range(0.5..2.0)),
            ],
        };
        let labels: Vec<usize> = (0..5).map(|_| rng.random_range(0..2)).collect();
        let z = Assignment::new(labels, 2).unwrap();
        let priors = PriorConfig {
            radius: 10.0,
            mean_decay: 0.3,
            sigma: vec![2.0, 3.0],
            dirichlet_alpha: 1.5,
        };
        (ds, point, z, priors)
    }

    /// Independent term-by-term summation, no sufficient statistics.
    fn naive_log_posterior(
        ds: &Dataset,
        pt: &ModelPoint,
        z: &Assignment,
        priors: &PriorConfig,
    ) -> f64 {
        let mut total = 0.0;
        for (i, x) in ds.points.iter().enumerate() {
            for k in 0..pt.k() {
                let zik = z.indicator(i, k);
                if zik == 0.0 {
                    continue;
                }
                let d = x - &pt.means[k];
                let quad = d.dot(&(&pt.precisions[k] * &d));
                let logdet = pt.precisions[k].determinant().ln();
                total += zik * (pt.weights[k].ln() - 0.5 * quad + 0.5 * logdet);
            }
        }
        for k in 0..pt.k() {
            total += -priors.mean_decay * pt.means[k].norm_squared();
            total += -(&pt.precisions[k] * &pt.precisions[k]).trace() / (2.0 * priors.sigma[k]);
            total += (priors.dirichlet_alpha - 1.0) * pt.weights[k].ln();
        }
        total
    }

    #[test]
    fn zero_data_term_for_centered_identity() {
        let ds = Dataset {
            points: vec![DVector::from_vec(vec![0.0]), DVector::from_vec(vec![0.0])],
        };
        let point = ModelPoint {
            weights: vec![1.0],
            means: vec![DVector::from_vec(vec![0.0])],
            precisions: vec![DMatrix::from_element(1, 1, 1.0)],
        };
        let z = Assignment::new(vec![0, 0], 1).unwrap();
        let terms = PointTerms::new(&point, &flat(1));
        let data = terms.data_term(&SheetStats::from_assignment(&ds, &z));
        assert_eq!(data, 0.0);
    }

    #[test]
    fn data_term_is_translation_invariant() {
        let (ds, point, z, priors) = small_instance(3);
        let shift = DVector::from_vec(vec![0.8]);
        let ds2 = Dataset { points: ds.points.iter().map(|x| x + &shift).collect() };
        let mut point2 = point.clone();
        for m in &mut point2.means {
            *m += &shift;
        }
        let t1 = PointTerms::new(&point, &priors).data_term(&SheetStats::from_assignment(&ds, &z));
        let t2 = PointTerms::new(&point2, &priors).data_term(&SheetStats::from_assignment(&ds2, &z));
        assert_relative_eq!(t1, t2, max_relative = 1e-12);
    }

    #[test]
    fn matches_naive_summation() {
        for seed in 0..16 {
            let (ds, point, z, priors) = small_instance(seed);
            let fast = log_posterior(&ds, &point, &z, &priors);
            let slow = naive_log_posterior(&ds, &point, &z, &priors);
            assert_relative_eq!(fast, slow, max_relative = 1e-12);
        }
    }

    #[test]
    fn quadratic_decomposition_identity() {
        // Σ z (μ−x)ᵀΛ(μ−x) = N_k (μ−x̄)ᵀΛ(μ−x̄) + Σ z (x−x̄)ᵀΛ(x−x̄)
        for seed in 20..30 {
            let (ds, point, z, _) = small_instance(seed);
            for k in 0..2 {
                let nk: f64 = ds
                    .points
                    .iter()
                    .enumerate()
                    .map(|(i, _)| z.indicator(i, k))
                    .sum();
                if nk == 0.0 {
                    continue;
                }
                let lam = &point.precisions[k];
                let mu = &point.means[k];
                let xbar: DVector<f64> = ds
                    .points
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x * z.indicator(i, k))
                    .sum::<DVector<f64>>()
                    / nk;
                let lhs: f64 = ds
                    .points
                    .iter()
                    .enumerate()
                    .map(|(i, x)| {
                        let d = mu - x;
                        z.indicator(i, k) * d.dot(&(lam * &d))
                    })
                    .sum();
                let dm = mu - &xbar;
                let rhs: f64 = nk * dm.dot(&(lam * &dm))
                    + ds.points
                        .iter()
                        .enumerate()
                        .map(|(i, x)| {
                            let d = x - &xbar;
                            z.indicator(i, k) * d.dot(&(lam * &d))
                        })
                        .sum::<f64>();
                assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn potential_is_scaled_negative_log_posterior() {
        let (ds, point, z, priors) = small_instance(1);
        let lp = log_posterior(&ds, &point, &z, &priors);
        let phi5 = potential(&ds, &point, &z, &priors, 5.0);
        assert_relative_eq!(phi5, -lp / 5.0, max_relative = 1e-14);
        // doubling the scale halves the potential
        let phi10 = potential(&ds, &point, &z, &priors, 10.0);
        assert_relative_eq!(phi10, 0.5 * phi5, max_relative = 1e-14);
        // definition example: log posterior −10, λ₀ = 5 → potential 2
        assert_eq!(-(-10.0) / 5.0, 2.0);
    }

    #[test]
    fn cutoff_sentinel_propagates() {
        let (ds, mut point, z, mut priors) = small_instance(2);
        priors.radius = 0.5;
        point.means[0] = DVector::from_vec(vec![3.0]);
        assert_eq!(log_posterior(&ds, &point, &z, &priors), f64::NEG_INFINITY);
        assert_eq!(potential(&ds, &point, &z, &priors, 2.0), f64::INFINITY);
    }

    #[test]
    fn label_switching_symmetry() {
        let (ds, point, z, mut priors) = small_instance(7);
        priors.sigma = vec![2.0, 2.0]; // exchangeable prior
        let perm = [1usize, 0];
        let swapped_point = point.permuted(&perm);
        let swapped_labels: Vec<usize> = z.labels().iter().map(|&c| perm[c]).collect();
        let zs = Assignment::new(swapped_labels, 2).unwrap();
        let a = log_posterior(&ds, &point, &z, &priors);
        let b = log_posterior(&ds, &swapped_point, &zs, &priors);
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let lambda0 = 3.0;
        let h = 1e-5;
        let mut checked = 0;
        for seed in 100..150 {
            let (ds, point, z, priors) = small_instance(seed);
            let stats = SheetStats::from_assignment(&ds, &z);
            let g = potential_gradient(&stats, &point, &priors, lambda0).unwrap();
            let phi = |pt: &ModelPoint| potential(&ds, pt, &z, &priors, lambda0);
            // mean block
            for c in 0..2 {
                let mut plus = point.clone();
                plus.means[c][0] += h;
                let mut minus = point.clone();
                minus.means[c][0] -= h;
                let fd = (phi(&plus) - phi(&minus)) / (2.0 * h);
                assert_relative_eq!(g.mu[c][0], fd, max_relative = 1e-6, epsilon = 1e-9);
                checked += 1;
            }
            // precision block
            for c in 0..2 {
                let mut plus = point.clone();
                plus.precisions[c][(0, 0)] += h;
                let mut minus = point.clone();
                minus.precisions[c][(0, 0)] -= h;
                let fd = (phi(&plus) - phi(&minus)) / (2.0 * h);
                assert_relative_eq!(g.lambda[c][(0, 0)], fd, max_relative = 1e-6, epsilon = 1e-9);
                checked += 1;
            }
            // weight block along the tangent direction (1,-1)/√2
            let dir = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt()];
            let mut plus = point.clone();
            let mut minus = point.clone();
            for c in 0..2 {
                plus.weights[c] += h * dir[c];
                minus.weights[c] -= h * dir[c];
            }
            let fd = (phi(&plus) - phi(&minus)) / (2.0 * h);
            let analytic: f64 = (0..2).map(|c| g.pi[c] * dir[c]).sum();
            assert_relative_eq!(analytic, fd, max_relative = 1e-6, epsilon = 1e-9);
            checked += 1;
        }
        assert!(checked >= 100, "need at least 100 direction checks, got {checked}");
    }

    #[test]
    fn empty_class_has_zero_mean_gradient_under_flat_prior() {
        let (ds, point, _, _) = small_instance(4);
        let z = Assignment::new(vec![0; 5], 2).unwrap(); // class 1 empty
        let priors = flat(2);
        let stats = SheetStats::from_assignment(&ds, &z);
        let g = potential_gradient(&stats, &point, &priors, 1.0).unwrap();
        assert_eq!(g.mu[1][0], 0.0);
    }

    #[test]
    fn boundary_point_rejects_gradient() {
        let (ds, mut point, z, mut priors) = small_instance(5);
        priors.radius = 1.0;
        point.means[0] = DVector::from_vec(vec![1.0]); // exactly on the boundary
        let stats = SheetStats::from_assignment(&ds, &z);
        let err = potential_gradient(&stats, &point, &priors, 1.0).unwrap_err();
        assert!(format!("{err}").contains("cut-off boundary"));
    }

    #[test]
    fn stationary_at_single_component_minimizer() {
        // K = 1 with a flat mean prior: the minimizer is the sample mean and
        // the precision root of −½ S + n/(2Λ) − Λ/σ = 0.
        let ds = Dataset {
            points: vec![
                DVector::from_vec(vec![0.4]),
                DVector::from_vec(vec![-0.7]),
                DVector::from_vec(vec![1.1]),
                DVector::from_vec(vec![0.2]),
            ],
        };
        let z = Assignment::new(vec![0; 4], 1).unwrap();
        let priors = PriorConfig {
            radius: 50.0,
            mean_decay: 0.0,
            sigma: vec![10.0],
            dirichlet_alpha: 1.0,
        };
        let n = 4.0;
        let xbar: f64 = ds.points.iter().map(|x| x[0]).sum::<f64>() / n;
        let s: f64 = ds.points.iter().map(|x| (x[0] - xbar).powi(2)).sum();
        let lam = crate::numerics::bisect_root(
            |l| -0.5 * s + n / (2.0 * l) - l / priors.sigma[0],
            1e-6,
            1e3,
            1e-14,
        )
        .unwrap();
        let point = ModelPoint {
            weights: vec![1.0],
            means: vec![DVector::from_vec(vec![xbar])],
            precisions: vec![DMatrix::from_element(1, 1, lam)],
        };
        let stats = SheetStats::from_assignment(&ds, &z);
        let g = potential_gradient(&stats, &point, &priors, 1.0).unwrap();
        assert!(g.norm() < 1e-10, "gradient norm {}", g.norm());
    }

    #[test]
    fn truth_beats_perturbation_across_seeds() {
        // Monte-Carlo oracle: well-separated data, potential at the truth vs a
        // strongly perturbed point, at least 95 of 100 seeds.
        let mut wins = 0;
        for seed in 0..100u64 {
            let cfg = MixtureConfig { k: 2, p: 1, n: 200, beta: 1.0, seed };
            let spec = ModelPoint {
                weights: vec![0.5, 0.5],
                means: vec![DVector::from_vec(vec![-2.0]), DVector::from_vec(vec![2.0])],
                precisions: vec![DMatrix::from_element(1, 1, 1.0); 2],
            };
            let (ds, truth) =
                generate_dataset(&cfg, &spec, &mut crate::rng::stream(seed, "mc", 0)).unwrap();
            let priors = PriorConfig::weak(2, 8.0);
            let z = Assignment::new(truth.true_labels.clone(), 2).unwrap();
            let lambda0 = 20.0;
            let at_truth = potential(&ds, &truth.as_point(), &z, &priors, lambda0);
            let mut perturbed = truth.as_point();
            perturbed.means[0][0] += 1.5;
            perturbed.means[1][0] -= 1.5;
            perturbed.precisions[0][(0, 0)] *= 2.5;
            perturbed.weights = vec![0.85, 0.15];
            let at_perturbed = potential(&ds, &perturbed, &z, &priors, lambda0);
            if at_truth < at_perturbed {
                wins += 1;
            }
        }
        assert!(wins >= 95, "truth won only {wins}/100 seeds");
    }

    use super::super::{generate_dataset, MixtureConfig};
}
