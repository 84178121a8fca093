//! Affine-invariant (Rao–Fisher) geometry on symmetric positive definite
//! matrices, unit-speed product geodesics over the component manifold, and a
//! numerical convexity scan of the scaled potential along those geodesics.

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{log_posterior_stats, Assignment, Dataset, ModelPoint, PriorConfig, SheetStats};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

/// A validated symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SpdPoint(DMatrix<f64>);

impl SpdPoint {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        linalg::check_spd(&m)?;
        Ok(SpdPoint(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// d(X, Y) = ‖log eig(X^{-1/2} Y X^{-1/2})‖₂.
pub fn rao_fisher_distance(x: &SpdPoint, y: &SpdPoint) -> Result<f64> {
    let logs = linalg::whitened_log_eigs(&x.0, &y.0)?;
    Ok(logs.norm())
}

/// Constant-speed geodesic γ(t) = X^{1/2} (X^{-1/2} Y X^{-1/2})^t X^{1/2}.
pub fn spd_geodesic(x: &SpdPoint, y: &SpdPoint, t: f64) -> Result<SpdPoint> {
    let xh = linalg::spd_sqrt(&x.0);
    let xih = linalg::spd_inv_sqrt(&x.0);
    let w = &xih * &y.0 * &xih;
    let powed = linalg::spd_map(&w, |v| v.powf(t));
    SpdPoint::new(&xh * powed * &xh)
}

/// One component's mean segment, μ(t) = start + dir · (α t).
#[derive(Debug, Clone)]
pub struct MeanSegment {
    pub start: DVector<f64>,
    /// Unit direction (arbitrary unit vector for zero-length segments).
    pub dir: DVector<f64>,
    pub len: f64,
}

/// One component's precision segment in diagonalized form,
/// Λ(s) = A diag(e^{r s}) Aᵀ with ‖r‖ = 1.
#[derive(Debug, Clone)]
pub struct SpdSegment {
    pub frame: DMatrix<f64>,
    pub exponents: DVector<f64>,
    pub len: f64,
}

/// Unit-speed geodesic on the product of per-component mean and precision
/// spaces; the weight block stays fixed. Speed fractions satisfy
/// Σ_k α_k² + β_k² = 1 whenever the total length is positive.
#[derive(Debug, Clone)]
pub struct ProductGeodesic {
    pub means: Vec<MeanSegment>,
    pub precisions: Vec<SpdSegment>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub total_len: f64,
    pub weights: Vec<f64>,
}

impl ProductGeodesic {
    /// Point at arc length t ∈ [0, total_len].
    pub fn at(&self, t: f64) -> ModelPoint {
        let k = self.means.len();
        let mut means = Vec::with_capacity(k);
        let mut precisions = Vec::with_capacity(k);
        for c in 0..k {
            let seg = &self.means[c];
            means.push(&seg.start + &seg.dir * (self.alphas[c] * t));
            let ps = &self.precisions[c];
            let s = self.betas[c] * t;
            let d = DMatrix::from_diagonal(&ps.exponents.map(|r| (r * s).exp()));
            precisions.push(&ps.frame * d * ps.frame.transpose());
        }
        ModelPoint {
            weights: self.weights.clone(),
            means,
            precisions,
        }
    }
}

fn random_unit(rng: &mut impl Rng, p: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_iterator(p, (0..p).map(|_| rng.random_range(-1.0..1.0)));
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

/// Build the unit-speed product geodesic through two interior points. The rng
/// only fills the direction fields of zero-length segments, so every segment
/// carries a unit direction.
pub fn sample_product_geodesic(
    rng: &mut impl Rng,
    start: &ModelPoint,
    end: &ModelPoint,
    priors: &PriorConfig,
) -> Result<ProductGeodesic> {
    if !start.in_cutoff(priors) || !end.in_cutoff(priors) {
        return Err(Error::geometry("geodesic endpoints outside the cut-off region"));
    }
    let k = start.k();
    let p = start.p();
    let mut means = Vec::with_capacity(k);
    let mut precisions = Vec::with_capacity(k);
    let mut sq_total = 0.0;
    for c in 0..k {
        let delta = &end.means[c] - &start.means[c];
        let len = delta.norm();
        let dir = if len > 0.0 { delta / len } else { random_unit(rng, p) };
        sq_total += len * len;
        means.push(MeanSegment {
            start: start.means[c].clone(),
            dir,
            len,
        });

        let x = &start.precisions[c];
        linalg::check_spd(x)?;
        linalg::check_spd(&end.precisions[c])?;
        let xh = linalg::spd_sqrt(x);
        let xih = linalg::spd_inv_sqrt(x);
        let w = &xih * &end.precisions[c] * &xih;
        let (vals, vecs) = linalg::sym_eigen(&w);
        let rho = vals.map(f64::ln);
        // eigen roundoff leaves ~1e-16 lengths for identical endpoints
        let len2 = if rho.norm() > 1e-12 { rho.norm() } else { 0.0 };
        let exponents = if len2 > 0.0 {
            &rho / len2
        } else {
            random_unit(rng, p)
        };
        sq_total += len2 * len2;
        precisions.push(SpdSegment {
            frame: &xh * vecs,
            exponents,
            len: len2,
        });
    }
    let total_len = sq_total.sqrt();
    let (alphas, betas) = if total_len > 0.0 {
        (
            means.iter().map(|s| s.len / total_len).collect(),
            precisions.iter().map(|s| s.len / total_len).collect(),
        )
    } else {
        (vec![0.0; k], vec![0.0; k])
    };
    Ok(ProductGeodesic {
        means,
        precisions,
        alphas,
        betas,
        total_len,
        weights: start.weights.clone(),
    })
}

/// Random interior point: means in the ball of radius `fill`·R, precision
/// exponents in the matching Rao–Fisher ball, uniform weights.
pub fn sample_interior_point(
    rng: &mut impl Rng,
    k: usize,
    p: usize,
    priors: &PriorConfig,
    fill: f64,
) -> ModelPoint {
    let rmax = priors.radius * fill;
    let mut means = Vec::with_capacity(k);
    let mut precisions = Vec::with_capacity(k);
    for _ in 0..k {
        let radius: f64 = rng.random_range(0.0..rmax);
        means.push(random_unit(rng, p) * radius);
        let mut g = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..=i {
                let v: f64 = rng.random_range(-1.0..1.0);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        let norm = g.norm();
        if norm > 0.0 {
            let target: f64 = rng.random_range(0.0..rmax);
            g *= target / norm;
        }
        precisions.push(linalg::spd_map(&g, f64::exp));
    }
    ModelPoint {
        weights: vec![1.0 / k as f64; k],
        means,
        precisions,
    }
}

/// One grid sample of a scan: (geodesic id, arc-length position, second
/// difference of the scaled potential λ₀·Φ).
#[derive(Debug, Clone, Serialize)]
pub struct ScanSample {
    pub geodesic_id: usize,
    pub t: f64,
    pub second_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    pub samples: Vec<ScanSample>,
    pub min_second_diff: f64,
    /// min / (min_k N_k); the scan's estimate of the convexity constant.
    pub c_hat: f64,
    pub pass: bool,
    /// Geodesic ids whose grid left the cut-off region and were truncated.
    pub clipped: Vec<usize>,
}

impl ConvexityReport {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "geodesic_id,t,second_diff")?;
        for s in &self.samples {
            writeln!(w, "{},{},{}", s.geodesic_id, s.t, s.second_diff)?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "min": self.min_second_diff,
            "C_hat": self.c_hat,
            "pass": self.pass,
        })
    }
}

/// Second differences of λ₀·Φ (= the negative cut-off log density) along one
/// geodesic, on a uniform grid of `steps` intervals. Returns the samples and
/// whether the grid was clipped at the cut-off.
pub fn scan_geodesic(
    geo: &ProductGeodesic,
    ds: &Dataset,
    z: &Assignment,
    priors: &PriorConfig,
    steps: usize,
) -> (Vec<(f64, f64)>, bool) {
    let stats = SheetStats::from_assignment(ds, z);
    let h = geo.total_len / steps as f64;
    let mut values = Vec::with_capacity(steps + 1);
    let mut clipped = false;
    for j in 0..=steps {
        let point = geo.at(j as f64 * h);
        let v = -log_posterior_stats(&point, &stats, priors);
        if !v.is_finite() {
            clipped = true;
            break;
        }
        values.push(v);
    }
    let mut out = Vec::new();
    for j in 1..values.len().saturating_sub(1) {
        let sd = crate::numerics::second_difference(values[j - 1], values[j], values[j + 1], h);
        out.push((j as f64 * h, sd));
    }
    (out, clipped)
}

/// Scan randomly sampled product geodesics on a fixed labeling sheet.
///
/// Preconditions: the labeling satisfies the minimum class-size condition for
/// `lambda0`, and sampled endpoints stay in the cut-off region.
pub fn convexity_scan(
    ds: &Dataset,
    z: &Assignment,
    priors: &PriorConfig,
    lambda0: usize,
    n_geodesics: usize,
    steps: usize,
    seed: u64,
) -> Result<ConvexityReport> {
    if !z.admissible(lambda0) {
        return Err(Error::Config(format!(
            "labeling violates the class-size condition: min class {} < {}",
            z.lambda_of(),
            lambda0
        )));
    }
    let k = z.k();
    let p = ds.p();
    let per_geodesic: Vec<(Vec<(f64, f64)>, bool)> = (0..n_geodesics)
        .into_par_iter()
        .map(|g| {
            let mut rng = crate::rng::stream(seed, "convexity-scan", g as u64);
            // resample until the geodesic is long enough for stable second
            // differences
            loop {
                let a = sample_interior_point(&mut rng, k, p, priors, 0.9);
                let b = sample_interior_point(&mut rng, k, p, priors, 0.9);
                let geo = sample_product_geodesic(&mut rng, &a, &b, priors)
                    .expect("sampled endpoints lie inside the cut-off");
                if geo.total_len >= 0.05 * priors.radius {
                    return scan_geodesic(&geo, ds, z, priors, steps);
                }
            }
        })
        .collect();

    let mut samples = Vec::new();
    let mut clipped = Vec::new();
    for (g, (list, was_clipped)) in per_geodesic.into_iter().enumerate() {
        if was_clipped {
            clipped.push(g);
        }
        for (t, sd) in list {
            samples.push(ScanSample {
                geodesic_id: g,
                t,
                second_diff: sd,
            });
        }
    }
    if samples.is_empty() {
        return Err(Error::numerical("convexity scan produced no samples"));
    }
    let min_second_diff = samples
        .iter()
        .map(|s| s.second_diff)
        .fold(f64::INFINITY, f64::min);
    let min_class = z.lambda_of().max(1) as f64;
    let c_hat = min_second_diff / min_class;
    Ok(ConvexityReport {
        pass: min_second_diff > 0.0,
        samples,
        min_second_diff,
        c_hat,
        clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_dataset, MixtureConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spd2(rng: &mut impl Rng, scale: f64) -> SpdPoint {
        let mut g = DMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..=i {
                let v: f64 = rng.random_range(-scale..scale);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        SpdPoint::new(linalg::spd_map(&g, f64::exp)).unwrap()
    }

    #[test]
    fn distance_identity_cases() {
        let id = SpdPoint::new(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(rao_fisher_distance(&id, &id).unwrap(), 0.0);
        let a = SpdPoint::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let b = SpdPoint::new(DMatrix::from_element(1, 1, std::f64::consts::E.powi(2))).unwrap();
        assert_relative_eq!(rao_fisher_distance(&a, &b).unwrap(), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn distance_is_affine_invariant() {
        let mut rng = crate::rng::stream(3, "spd-test", 0);
        for _ in 0..20 {
            let x = spd2(&mut rng, 1.0);
            let y = spd2(&mut rng, 1.0);
            let mut a = DMatrix::identity(2, 2);
            for i in 0..2 {
                for j in 0..2 {
                    a[(i, j)] += rng.random_range(-0.4..0.4);
                }
            }
            let xa = SpdPoint::new(a.transpose() * &x.0 * &a).unwrap();
            let ya = SpdPoint::new(a.transpose() * &y.0 * &a).unwrap();
            let d0 = rao_fisher_distance(&x, &y).unwrap();
            let d1 = rao_fisher_distance(&xa, &ya).unwrap();
            assert_relative_eq!(d0, d1, max_relative = 1e-10);
        }
    }

    #[test]
    fn geodesic_endpoints_midpoint_and_speed() {
        let a = SpdPoint::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let b = SpdPoint::new(DMatrix::from_element(1, 1, 4.0)).unwrap();
        let mid = spd_geodesic(&a, &b, 0.5).unwrap();
        assert_relative_eq!(mid.0[(0, 0)], 2.0, max_relative = 1e-12);

        let mut rng = crate::rng::stream(4, "spd-test", 1);
        for _ in 0..100 {
            let x = spd2(&mut rng, 1.0);
            let y = spd2(&mut rng, 1.0);
            let t: f64 = rng.random();
            let gt = spd_geodesic(&x, &y, t).unwrap();
            assert!(linalg::check_spd(&gt.0).is_ok());
        }
        // constant speed
        for _ in 0..20 {
            let x = spd2(&mut rng, 1.0);
            let y = spd2(&mut rng, 1.0);
            let d = rao_fisher_distance(&x, &y).unwrap();
            let q1 = spd_geodesic(&x, &y, 0.25).unwrap();
            let q3 = spd_geodesic(&x, &y, 0.75).unwrap();
            let dq = rao_fisher_distance(&q1, &q3).unwrap();
            assert_relative_eq!(dq, 0.5 * d, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn triangle_inequality(seed in 0u64..10_000) {
            let mut rng = crate::rng::stream(seed, "spd-triangle", 0);
            let x = spd2(&mut rng, 1.2);
            let y = spd2(&mut rng, 1.2);
            let z = spd2(&mut rng, 1.2);
            let dxz = rao_fisher_distance(&x, &z).unwrap();
            let dxy = rao_fisher_distance(&x, &y).unwrap();
            let dyz = rao_fisher_distance(&y, &z).unwrap();
            prop_assert!(dxz <= dxy + dyz + 1e-10);
        }
    }

    fn priors(r: f64, k: usize) -> PriorConfig {
        PriorConfig::weak(k, r)
    }

    #[test]
    fn product_geodesic_identical_endpoints() {
        let mut rng = crate::rng::stream(5, "spd-test", 2);
        let pr = priors(3.0, 2);
        let a = sample_interior_point(&mut rng, 2, 2, &pr, 0.8);
        let geo = sample_product_geodesic(&mut rng, &a, &a, &pr).unwrap();
        assert_eq!(geo.total_len, 0.0);
        let pt = geo.at(0.0);
        assert_relative_eq!(pt.means[0][0], a.means[0][0], epsilon = 1e-12);
    }

    #[test]
    fn product_geodesic_mean_only_motion() {
        let mut rng = crate::rng::stream(6, "spd-test", 3);
        let pr = priors(5.0, 1);
        let a = ModelPoint {
            weights: vec![1.0],
            means: vec![DVector::from_vec(vec![0.0])],
            precisions: vec![DMatrix::from_element(1, 1, 1.3)],
        };
        let mut b = a.clone();
        b.means[0][0] = 2.0;
        let geo = sample_product_geodesic(&mut rng, &a, &b, &pr).unwrap();
        assert_relative_eq!(geo.alphas[0], 1.0, epsilon = 1e-12);
        assert_eq!(geo.betas[0], 0.0);
        assert_relative_eq!(geo.total_len, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn speed_fractions_sum_to_one() {
        let mut rng = crate::rng::stream(7, "spd-test", 4);
        let pr = priors(3.0, 2);
        for _ in 0..50 {
            let a = sample_interior_point(&mut rng, 2, 2, &pr, 0.9);
            let b = sample_interior_point(&mut rng, 2, 2, &pr, 0.9);
            let geo = sample_product_geodesic(&mut rng, &a, &b, &pr).unwrap();
            let s: f64 = geo
                .alphas
                .iter()
                .zip(&geo.betas)
                .map(|(al, be)| al * al + be * be)
                .sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-12);
        }
        // endpoints must be interior
        let mut outside = sample_interior_point(&mut rng, 2, 2, &pr, 0.5);
        outside.means[0] = DVector::from_vec(vec![10.0, 0.0]);
        let inside = sample_interior_point(&mut rng, 2, 2, &pr, 0.5);
        assert!(sample_product_geodesic(&mut rng, &outside, &inside, &pr).is_err());
    }

    /// Analytic −d²/dt² of the negative log density along a one-component,
    /// one-dimensional product geodesic (the convexity theorem's display).
    #[allow(clippy::too_many_arguments)]
    fn analytic_second_derivative(
        t: f64,
        n: f64,
        s_within: f64,
        a_off: f64,
        b: f64,
        alpha: f64,
        beta: f64,
        r: f64,
        lam0: f64,
        mean_decay: f64,
        sigma: f64,
    ) -> f64 {
        let e = (r * beta * t).exp();
        let u = a_off + b * alpha * t;
        let data_mean = 0.5
            * n
            * (2.0 * (b * alpha).powi(2)
                + 4.0 * u * b * alpha * r * beta
                + u * u * (r * beta).powi(2))
            * lam0
            * e;
        let data_within = 0.5 * s_within * (r * beta).powi(2) * lam0 * e;
        let prior_mu = 2.0 * mean_decay * (b * alpha).powi(2);
        let prior_lam =
            2.0 * lam0 * lam0 * (r * beta).powi(2) * (2.0 * r * beta * t).exp() / sigma;
        data_mean + data_within + prior_mu + prior_lam
    }

    #[test]
    fn scan_matches_analytic_second_derivative() {
        let ds = Dataset {
            points: vec![-0.9, -0.2, 0.1, 0.4, 0.8, 1.3]
                .into_iter()
                .map(|v| DVector::from_vec(vec![v]))
                .collect(),
        };
        let z = Assignment::new(vec![0; 6], 1).unwrap();
        let pr = PriorConfig {
            radius: 4.0,
            mean_decay: 0.7,
            sigma: vec![2.5],
            dirichlet_alpha: 1.0,
        };
        let start = ModelPoint {
            weights: vec![1.0],
            means: vec![DVector::from_vec(vec![-0.5])],
            precisions: vec![DMatrix::from_element(1, 1, 0.8)],
        };
        let end = ModelPoint {
            weights: vec![1.0],
            means: vec![DVector::from_vec(vec![1.1])],
            precisions: vec![DMatrix::from_element(1, 1, 2.1)],
        };
        let mut rng = crate::rng::stream(8, "spd-test", 5);
        let geo = sample_product_geodesic(&mut rng, &start, &end, &pr).unwrap();
        let (samples, clipped) = scan_geodesic(&geo, &ds, &z, &pr, 512);
        assert!(!clipped);

        let n = 6.0;
        let xbar: f64 = ds.points.iter().map(|x| x[0]).sum::<f64>() / n;
        let s_within: f64 = ds.points.iter().map(|x| (x[0] - xbar).powi(2)).sum();
        let a_off = start.means[0][0] - xbar;
        let b = geo.means[0].dir[0];
        let r = geo.precisions[0].exponents[0];
        let lam_start = start.precisions[0][(0, 0)];
        for &(t, sd) in &samples {
            let exact = analytic_second_derivative(
                t,
                n,
                s_within,
                a_off,
                b,
                geo.alphas[0],
                geo.betas[0],
                r,
                lam_start,
                pr.mean_decay,
                pr.sigma[0],
            );
            assert_relative_eq!(sd, exact, max_relative = 1e-4);
        }
    }

    #[test]
    fn mean_direction_second_diff_is_n_lambda() {
        // fixed precision, motion only in the mean: second derivative N·Λ
        let ds = Dataset {
            points: (0..5).map(|i| DVector::from_vec(vec![i as f64 * 0.3])).collect(),
        };
        let z = Assignment::new(vec![0; 5], 1).unwrap();
        let pr = priors(10.0, 1);
        let lam = 1.7;
        let start = ModelPoint {
            weights: vec![1.0],
            means: vec![DVector::from_vec(vec![-1.0])],
            precisions: vec![DMatrix::from_element(1, 1, lam)],
        };
        let mut end = start.clone();
        end.means[0][0] = 1.5;
        let mut rng = crate::rng::stream(9, "spd-test", 6);
        let geo = sample_product_geodesic(&mut rng, &start, &end, &pr).unwrap();
        let (samples, _) = scan_geodesic(&geo, &ds, &z, &pr, 64);
        for &(_, sd) in &samples {
            assert_relative_eq!(sd, 5.0 * lam, max_relative = 1e-6);
        }
    }

    #[test]
    fn scan_positive_under_conditions_a_and_b() {
        let cfg = MixtureConfig { k: 2, p: 2, n: 400, beta: 1.0, seed: 21 };
        let spec = ModelPoint {
            weights: vec![0.5, 0.5],
            means: vec![
                DVector::from_vec(vec![-1.5, 0.0]),
                DVector::from_vec(vec![1.5, 0.0]),
            ],
            precisions: vec![DMatrix::identity(2, 2); 2],
        };
        let (ds, truth) =
            generate_dataset(&cfg, &spec, &mut crate::rng::stream(21, "generate", 0)).unwrap();
        let pr = priors(3.0, 2);
        let z = Assignment::new(truth.true_labels.clone(), 2).unwrap();
        let report = convexity_scan(&ds, &z, &pr, 150, 25, 64, 21).unwrap();
        assert!(report.pass, "min second diff {}", report.min_second_diff);
        assert!(report.clipped.is_empty());
        assert!(report.c_hat > 0.0);
        // every sample is recorded
        assert_eq!(report.samples.len(), 25 * 63);
    }

    #[test]
    fn weight_edge_is_convex() {
        // 1-D convexity of λ₀Φ along a simplex edge (all other blocks fixed);
        // the weight direction is excluded from product geodesics.
        let ds = Dataset {
            points: (0..6)
                .map(|i| DVector::from_vec(vec![i as f64 * 0.5 - 1.0]))
                .collect(),
        };
        let z = Assignment::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
        let pr = PriorConfig {
            radius: 8.0,
            mean_decay: 0.0,
            sigma: vec![5.0, 5.0],
            dirichlet_alpha: 2.0,
        };
        let stats = SheetStats::from_assignment(&ds, &z);
        let base = ModelPoint {
            weights: vec![0.5, 0.5],
            means: vec![DVector::from_vec(vec![-0.5]), DVector::from_vec(vec![0.5])],
            precisions: vec![DMatrix::from_element(1, 1, 1.0); 2],
        };
        let f = |t: f64| {
            let mut pt = base.clone();
            pt.weights = vec![0.1 + 0.8 * t, 0.9 - 0.8 * t];
            -log_posterior_stats(&pt, &stats, &pr)
        };
        let h = 1.0 / 64.0;
        for j in 1..64 {
            let t = j as f64 * h;
            let sd = crate::numerics::second_difference(f(t - h), f(t), f(t + h), h);
            assert!(sd > 0.0, "second diff at t = {t} is {sd}");
        }
    }
}
