//! Domain types for the mixture model: configuration, ground truth, points on
//! the parameter manifold, labelings, priors, and their file formats.
//!
//! A point on the manifold carries mixture weights on the simplex, one mean
//! per component, and one symmetric positive definite precision matrix per
//! component. Priors implement the cut-off construction: means live in the
//! ball |μ| < R and precisions within affine-invariant distance R of the
//! identity; everything outside is assigned zero posterior mass.

mod generate;
mod posterior;

pub use generate::{generate_dataset, kmeans_labels};
pub use posterior::{
    log_posterior, log_posterior_from_terms, log_posterior_stats, potential,
    potential_from_stats, potential_gradient, Gradient, PointTerms, SheetStats,
};

use crate::error::{Error, Result};
use crate::linalg;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

/// Run-level mixture dimensions and temperature.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureConfig {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "N")]
    pub n: usize,
    /// Temperature factor multiplying the base inverse temperature.
    pub beta: f64,
    pub seed: u64,
}

impl MixtureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::config("K must be >= 1"));
        }
        if self.p < 1 {
            return Err(Error::config("P must be >= 1"));
        }
        if self.n < self.k {
            return Err(Error::Config(format!(
                "N = {} must be >= K = {}",
                self.n, self.k
            )));
        }
        if !(self.beta > 0.0) {
            return Err(Error::config("beta must be > 0"));
        }
        Ok(())
    }
}

/// Prior configuration: cut-off radius, Gaussian mean decay, per-component
/// precision scale, and the Dirichlet concentration for the weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Cut-off radius for both the mean ball and the precision ball.
    #[serde(rename = "R")]
    pub radius: f64,
    /// Quadratic coefficient of the mean log-prior, log p(μ) = -a|μ|².
    #[serde(rename = "a")]
    pub mean_decay: f64,
    /// Per-component scale of the precision log-prior, -tr(Λ²)/(2σ_k).
    #[serde(rename = "sigma_k")]
    pub sigma: Vec<f64>,
    /// Dirichlet concentration for the weight prior.
    pub dirichlet_alpha: f64,
}

impl PriorConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::config("R must be > 0"));
        }
        if self.mean_decay < 0.0 {
            return Err(Error::config("a must be >= 0"));
        }
        if self.sigma.len() != k {
            return Err(Error::Config(format!(
                "sigma_k must list {k} entries, got {}",
                self.sigma.len()
            )));
        }
        if self.sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::config("all sigma_k must be > 0"));
        }
        if !(self.dirichlet_alpha > 0.0) {
            return Err(Error::config("dirichlet_alpha must be > 0"));
        }
        Ok(())
    }

    /// Weak priors used when a test wants the data terms to dominate.
    pub fn weak(k: usize, radius: f64) -> Self {
        PriorConfig {
            radius,
            mean_decay: 0.0,
            sigma: vec![1e12; k],
            dirichlet_alpha: 1.0,
        }
    }
}

/// A point ξ on the parameter manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPoint {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub precisions: Vec<DMatrix<f64>>,
}

impl ModelPoint {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn p(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 || self.means.len() != k || self.precisions.len() != k {
            return Err(Error::config("component counts of weights/means/precisions differ"));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Config(format!("weights must lie on the simplex (sum = {sum})")));
        }
        let p = self.p();
        for (j, (m, l)) in self.means.iter().zip(&self.precisions).enumerate() {
            if m.len() != p || l.nrows() != p {
                return Err(Error::Config(format!("component {j} has inconsistent dimension")));
            }
            linalg::check_spd(l)?;
        }
        Ok(())
    }

    /// Membership in the cut-off region: |μ_k| < R and d_RF(Λ_k, Id) < R.
    pub fn in_cutoff(&self, priors: &PriorConfig) -> bool {
        self.means.iter().all(|m| m.norm() < priors.radius)
            && self
                .precisions
                .iter()
                .all(|l| matches!(linalg::rao_fisher_to_identity(l), Ok(d) if d < priors.radius))
    }

    /// Strict interior with a margin, used where gradients must exist.
    pub fn strictly_inside(&self, priors: &PriorConfig, margin: f64) -> bool {
        self.means.iter().all(|m| m.norm() < priors.radius - margin)
            && self.precisions.iter().all(|l| {
                matches!(linalg::rao_fisher_to_identity(l), Ok(d) if d < priors.radius - margin)
            })
    }

    /// Apply a component permutation consistently to weights, means, precisions.
    pub fn permuted(&self, perm: &[usize]) -> ModelPoint {
        ModelPoint {
            weights: perm.iter().map(|&j| self.weights[j]).collect(),
            means: perm.iter().map(|&j| self.means[j].clone()).collect(),
            precisions: perm.iter().map(|&j| self.precisions[j].clone()).collect(),
        }
    }
}

/// Ground-truth mixture together with the realized labels and class sizes.
#[derive(Debug, Clone)]
pub struct TrueMixture {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub precisions: Vec<DMatrix<f64>>,
    /// Realized labels, 0-based internally (serialized 1-based).
    pub true_labels: Vec<usize>,
    pub class_sizes: Vec<usize>,
}

impl TrueMixture {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn p(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    pub fn n(&self) -> usize {
        self.true_labels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let point = ModelPoint {
            weights: self.weights.clone(),
            means: self.means.clone(),
            precisions: self.precisions.clone(),
        };
        point.validate()?;
        let k = self.k();
        if self.class_sizes.len() != k {
            return Err(Error::config("classSizes length differs from K"));
        }
        let mut counts = vec![0usize; k];
        for &z in &self.true_labels {
            if z >= k {
                return Err(Error::config("label out of range"));
            }
            counts[z] += 1;
        }
        if counts != self.class_sizes {
            return Err(Error::config("classSizes inconsistent with trueLabels"));
        }
        Ok(())
    }

    pub fn as_point(&self) -> ModelPoint {
        ModelPoint {
            weights: self.weights.clone(),
            means: self.means.clone(),
            precisions: self.precisions.clone(),
        }
    }
}

/// A labeling ζ of the N points into K classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    labels: Vec<usize>,
    counts: Vec<usize>,
}

impl Assignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        let mut counts = vec![0usize; k];
        for &z in &labels {
            if z >= k {
                return Err(Error::Config(format!("label {z} out of range for K = {k}")));
            }
            counts[z] += 1;
        }
        Ok(Assignment { labels, counts })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    /// Smallest class size, min_k N_k.
    pub fn lambda_of(&self) -> usize {
        self.counts.iter().copied().min().unwrap_or(0)
    }

    /// Membership in the admissible set: every class holds at least `lambda0`.
    pub fn admissible(&self, lambda0: usize) -> bool {
        self.lambda_of() >= lambda0
    }

    /// Indicator z_{ik}.
    pub fn indicator(&self, i: usize, k: usize) -> f64 {
        if self.labels[i] == k {
            1.0
        } else {
            0.0
        }
    }
}

/// Enumerate every labeling of n points into k classes whose smallest class
/// holds at least `lambda0` points. Errors when kⁿ exceeds the budget.
pub fn enumerate_assignments(
    n: usize,
    k: usize,
    lambda0: usize,
    budget: u128,
) -> Result<Vec<Assignment>> {
    let total = (k as u128)
        .checked_pow(n as u32)
        .ok_or_else(|| Error::budget("labeling enumeration", u128::MAX, budget, ""))?;
    if total > budget {
        return Err(Error::budget(
            "labeling enumeration",
            total,
            budget,
            "; use the landscape module's effective form instead",
        ));
    }
    let mut out = Vec::new();
    let mut labels = vec![0usize; n];
    loop {
        let mut counts = vec![0usize; k];
        for &z in &labels {
            counts[z] += 1;
        }
        if counts.iter().all(|&c| c >= lambda0) {
            out.push(Assignment {
                labels: labels.clone(),
                counts,
            });
        }
        // odometer increment in base k
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < k {
                break;
            }
            labels[pos] = 0;
        }
    }
}

/// Observed data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Vec<DVector<f64>>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn p(&self) -> usize {
        self.points.first().map_or(0, |x| x.len())
    }

    /// Write as CSV with header `n,x1,...,xP`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let p = self.p();
        let header: Vec<String> = std::iter::once("n".to_string())
            .chain((1..=p).map(|j| format!("x{j}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (i, x) in self.points.iter().enumerate() {
            let row: Vec<String> = std::iter::once((i + 1).to_string())
                .chain(x.iter().map(|v| format!("{v}")))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(r: &mut impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::config("dataset CSV is empty"))??;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"n") {
            return Err(Error::config("dataset CSV must start with header n,x1,...,xP"));
        }
        let p = cols.len() - 1;
        let mut points = Vec::new();
        for (row_idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != p + 1 {
                return Err(Error::Config(format!(
                    "dataset CSV row {}: expected {} fields, got {}",
                    row_idx + 2,
                    p + 1,
                    fields.len()
                )));
            }
            let vals: std::result::Result<Vec<f64>, _> =
                fields[1..].iter().map(|f| f.parse::<f64>()).collect();
            let vals = vals.map_err(|e| {
                Error::Config(format!("dataset CSV row {}: {e}", row_idx + 2))
            })?;
            points.push(DVector::from_vec(vals));
        }
        Ok(Dataset { points })
    }
}

// ---------------------------------------------------------------------------
// JSON mirrors (field names fixed by the file formats)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TrueMixtureJson {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    precisions: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "trueLabels")]
    true_labels: Vec<usize>,
    #[serde(rename = "classSizes")]
    class_sizes: Vec<usize>,
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::config("precision matrix rows must be square"));
    }
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

impl Serialize for TrueMixture {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TrueMixtureJson {
            weights: self.weights.clone(),
            means: self.means.iter().map(|m| m.iter().copied().collect()).collect(),
            precisions: self.precisions.iter().map(matrix_to_rows).collect(),
            true_labels: self.true_labels.iter().map(|&z| z + 1).collect(),
            class_sizes: self.class_sizes.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TrueMixture {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = TrueMixtureJson::deserialize(d)?;
        let k = raw.weights.len();
        let mut labels = Vec::with_capacity(raw.true_labels.len());
        for &z in &raw.true_labels {
            if z < 1 || z > k {
                return Err(serde::de::Error::custom(format!(
                    "trueLabels entries must lie in 1..={k}, got {z}"
                )));
            }
            labels.push(z - 1);
        }
        let precisions: std::result::Result<Vec<_>, _> = raw
            .precisions
            .iter()
            .map(|rows| matrix_from_rows(rows).map_err(serde::de::Error::custom))
            .collect();
        Ok(TrueMixture {
            weights: raw.weights,
            means: raw.means.iter().map(|m| DVector::from_vec(m.clone())).collect(),
            precisions: precisions?,
            true_labels: labels,
            class_sizes: raw.class_sizes,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelPointJson {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    precisions: Vec<Vec<Vec<f64>>>,
}

impl Serialize for ModelPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelPointJson {
            weights: self.weights.clone(),
            means: self.means.iter().map(|m| m.iter().copied().collect()).collect(),
            precisions: self.precisions.iter().map(matrix_to_rows).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModelPoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = ModelPointJson::deserialize(d)?;
        let precisions: std::result::Result<Vec<_>, _> = raw
            .precisions
            .iter()
            .map(|rows| matrix_from_rows(rows).map_err(serde::de::Error::custom))
            .collect();
        Ok(ModelPoint {
            weights: raw.weights,
            means: raw.means.iter().map(|m| DVector::from_vec(m.clone())).collect(),
            precisions: precisions?,
        })
    }
}

// ---------------------------------------------------------------------------
// Unconstrained chart
// ---------------------------------------------------------------------------

/// Global unconstrained chart on the manifold: raw means, log-Cholesky
/// precisions, pinned softmax weights. All mode finding, Hessians, and the
/// reference measure for integrals live in these coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Chart {
    pub k: usize,
    pub p: usize,
}

impl Chart {
    pub fn new(k: usize, p: usize) -> Self {
        Chart { k, p }
    }

    pub fn lam_block_len(&self) -> usize {
        self.p * (self.p + 1) / 2
    }

    pub fn dim(&self) -> usize {
        self.k * self.p + self.k * self.lam_block_len() + (self.k - 1)
    }

    pub fn mu_offset(&self, comp: usize) -> usize {
        comp * self.p
    }

    pub fn lam_offset(&self, comp: usize) -> usize {
        self.k * self.p + comp * self.lam_block_len()
    }

    pub fn pi_offset(&self) -> usize {
        self.k * self.p + self.k * self.lam_block_len()
    }

    pub fn pack(&self, pt: &ModelPoint) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.dim()];
        for c in 0..self.k {
            let off = self.mu_offset(c);
            for j in 0..self.p {
                x[off + j] = pt.means[c][j];
            }
            let l = pt.precisions[c]
                .clone()
                .cholesky()
                .ok_or_else(|| Error::geometry("precision matrix is not positive definite"))?;
            let l = l.l();
            let off = self.lam_offset(c);
            let mut idx = 0;
            for i in 0..self.p {
                for j in 0..=i {
                    x[off + idx] = if i == j { l[(i, i)].ln() } else { l[(i, j)] };
                    idx += 1;
                }
            }
        }
        let off = self.pi_offset();
        let last = pt.weights[self.k - 1];
        if !(last > 0.0) || pt.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::geometry("chart requires strictly positive weights"));
        }
        for c in 0..self.k - 1 {
            x[off + c] = (pt.weights[c] / last).ln();
        }
        Ok(x)
    }

    pub fn chol_factor(&self, x: &[f64], comp: usize) -> DMatrix<f64> {
        let off = self.lam_offset(comp);
        let mut l = DMatrix::zeros(self.p, self.p);
        let mut idx = 0;
        for i in 0..self.p {
            for j in 0..=i {
                l[(i, j)] = if i == j { x[off + idx].exp() } else { x[off + idx] };
                idx += 1;
            }
        }
        l
    }

    pub fn weights_of(&self, x: &[f64]) -> Vec<f64> {
        let off = self.pi_offset();
        let mut logits = vec![0.0; self.k];
        for c in 0..self.k - 1 {
            logits[c] = x[off + c];
        }
        crate::numerics::softmax_from_log(&logits)
    }

    pub fn unpack(&self, x: &[f64]) -> ModelPoint {
        let mut means = Vec::with_capacity(self.k);
        let mut precisions = Vec::with_capacity(self.k);
        for c in 0..self.k {
            let off = self.mu_offset(c);
            means.push(DVector::from_iterator(self.p, (0..self.p).map(|j| x[off + j])));
            let l = self.chol_factor(x, c);
            precisions.push(&l * l.transpose());
        }
        ModelPoint {
            weights: self.weights_of(x),
            means,
            precisions,
        }
    }

    /// Chain rule from manifold gradient blocks to chart coordinates.
    ///
    /// The Λ blocks expect the symmetric matrix G with df = tr(G dΛ); the
    /// weight block accepts the gradient up to an additive constant (the
    /// softmax chain rule kills constant shifts).
    pub fn grad_to_chart(&self, x: &[f64], grad: &Gradient) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for c in 0..self.k {
            let off = self.mu_offset(c);
            for j in 0..self.p {
                g[off + j] = grad.mu[c][j];
            }
            let l = self.chol_factor(x, c);
            let gl = &grad.lambda[c] * &l;
            let off = self.lam_offset(c);
            let mut idx = 0;
            for i in 0..self.p {
                for j in 0..=i {
                    let d = 2.0 * gl[(i, j)];
                    g[off + idx] = if i == j { d * l[(i, i)] } else { d };
                    idx += 1;
                }
            }
        }
        let weights = self.weights_of(x);
        let dot: f64 = grad.pi.iter().zip(&weights).map(|(gi, wi)| gi * wi).sum();
        let off = self.pi_offset();
        for c in 0..self.k - 1 {
            g[off + c] = weights[c] * (grad.pi[c] - dot);
        }
        g
    }
}
