//! Effective free energy over confusion matrices.
//!
//! Labelings are grouped by their confusion matrix against the true labels.
//! Within one class the potential concentrates around an averaged potential
//! that is affine in the column-normalized (Markov) matrix A; minimizing it
//! gives the energy Φ̂(A), counting the class gives the entropy ψ(A), and the
//! free energy F = Φ̂ + ψ governs where the marginal partition function
//! concentrates. This module sweeps the integer lattice of confusion
//! matrices, samples labeling classes for U-statistics checks, and compares
//! grid maxima of the marginal partition function against the sweep argmin.

use crate::error::{Error, Result};
use crate::model::{
    enumerate_assignments, Assignment, Dataset, ModelPoint, PointTerms, PriorConfig, SheetStats,
    TrueMixture,
};
use crate::numerics;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::io::Write;

/// Integer confusion table: counts[k][k'] points assigned to class k whose
/// true class is k'. Column sums equal the true class sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
    pub class_sizes: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(counts: Vec<Vec<usize>>, class_sizes: Vec<usize>) -> Result<Self> {
        let k = counts.len();
        if class_sizes.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::config("confusion matrix must be K x K"));
        }
        for (col, &size) in class_sizes.iter().enumerate() {
            let sum: usize = (0..k).map(|row| counts[row][col]).sum();
            if sum != size {
                return Err(Error::Config(format!(
                    "confusion column {col} sums to {sum}, expected {size}"
                )));
            }
        }
        Ok(ConfusionMatrix { counts, class_sizes })
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    /// Row sums N_k: the sizes of the hypothesized classes.
    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Column-normalized Markov matrix (the lattice embedding).
    pub fn markov(&self) -> MarkovMatrix {
        let k = self.k();
        let mut alpha = vec![vec![0.0; k]; k];
        for (row, alpha_row) in alpha.iter_mut().enumerate() {
            for (col, a) in alpha_row.iter_mut().enumerate() {
                *a = self.counts[row][col] as f64 / self.class_sizes[col] as f64;
            }
        }
        MarkovMatrix { alpha }
    }

    /// Exact log-cardinality of the labeling class, Σ_col log multinomial.
    pub fn exact_log_count(&self) -> f64 {
        let k = self.k();
        (0..k)
            .map(|col| {
                let parts: Vec<u64> = (0..k).map(|row| self.counts[row][col] as u64).collect();
                numerics::ln_multinomial(self.class_sizes[col] as u64, &parts)
            })
            .sum()
    }

    /// Stirling approximation of the log-cardinality, applied factor by
    /// factor with the 0! = 1 convention; on interior cells this equals the
    /// closed-form display with the (2π) and square-root corrections.
    pub fn stirling_log_count(&self) -> f64 {
        let k = self.k();
        (0..k)
            .map(|col| {
                let parts: Vec<u64> = (0..k).map(|row| self.counts[row][col] as u64).collect();
                numerics::stirling_ln_multinomial(self.class_sizes[col] as u64, &parts)
            })
            .sum()
    }

    /// All entries at least one: the Stirling display is exact term for term.
    pub fn interior(&self) -> bool {
        self.counts.iter().all(|r| r.iter().all(|&c| c > 0))
    }
}

/// Column-stochastic K x K matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovMatrix {
    pub alpha: Vec<Vec<f64>>,
}

impl MarkovMatrix {
    pub fn new(alpha: Vec<Vec<f64>>) -> Result<Self> {
        let k = alpha.len();
        if alpha.iter().any(|r| r.len() != k) {
            return Err(Error::config("Markov matrix must be square"));
        }
        for col in 0..k {
            let sum: f64 = (0..k).map(|row| alpha[row][col]).sum();
            if (sum - 1.0).abs() > 1e-9 || (0..k).any(|row| alpha[row][col] < 0.0) {
                return Err(Error::Config(format!(
                    "Markov column {col} must be a probability vector (sum {sum})"
                )));
            }
        }
        Ok(MarkovMatrix { alpha })
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.alpha[k].clone()
    }

    /// Convex combination t·self + (1−t)·other.
    pub fn mix(&self, other: &MarkovMatrix, t: f64) -> MarkovMatrix {
        let k = self.k();
        let mut alpha = vec![vec![0.0; k]; k];
        for r in 0..k {
            for c in 0..k {
                alpha[r][c] = t * self.alpha[r][c] + (1.0 - t) * other.alpha[r][c];
            }
        }
        MarkovMatrix { alpha }
    }

    pub fn identity(k: usize) -> MarkovMatrix {
        let mut alpha = vec![vec![0.0; k]; k];
        for (i, row) in alpha.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        MarkovMatrix { alpha }
    }
}

/// Confusion matrix of a labeling against the true labels.
pub fn confusion_matrix(z: &Assignment, truth: &TrueMixture) -> Result<ConfusionMatrix> {
    if z.n() != truth.n() {
        return Err(Error::config("labeling and truth have different lengths"));
    }
    let k = truth.k();
    let mut counts = vec![vec![0usize; k]; k];
    for (i, &zi) in z.labels().iter().enumerate() {
        counts[zi][truth.true_labels[i]] += 1;
    }
    ConfusionMatrix::new(counts, truth.class_sizes.clone())
}

/// Expected sufficient statistics of a labeling class: per hypothesized
/// class k, the weights Ñ_k' α(k,k') π̃_k' contract the true moments. These
/// feed the same potential evaluation as integer labelings.
pub fn cell_stats(a: &MarkovMatrix, truth: &TrueMixture) -> SheetStats {
    let k = truth.k();
    let p = truth.p();
    let mut stats = SheetStats::zeros(k, p);
    // precision inverses and second moments of the true components
    let inv: Vec<DMatrix<f64>> = truth
        .precisions
        .iter()
        .map(|l| l.clone().try_inverse().expect("truth precision invertible"))
        .collect();
    for row in 0..k {
        for col in 0..k {
            let w = truth.class_sizes[col] as f64 * a.alpha[row][col] * truth.weights[col];
            if w == 0.0 {
                continue;
            }
            stats.n[row] += w;
            stats.t[row] += &truth.means[col] * w;
            stats.q[row] += (&inv[col] + &truth.means[col] * truth.means[col].transpose()) * w;
        }
    }
    stats
}

/// As `cell_stats` but with the plain conditional-expectation weights
/// Ñ_k' α(k,k'), no π̃ factor. This is the population mean of the potential
/// over a labeling class and backs the U-statistics check.
pub fn conditional_cell_stats(a: &MarkovMatrix, truth: &TrueMixture) -> SheetStats {
    let k = truth.k();
    let p = truth.p();
    let mut stats = SheetStats::zeros(k, p);
    let inv: Vec<DMatrix<f64>> = truth
        .precisions
        .iter()
        .map(|l| l.clone().try_inverse().expect("truth precision invertible"))
        .collect();
    for row in 0..k {
        for col in 0..k {
            let w = truth.class_sizes[col] as f64 * a.alpha[row][col];
            if w == 0.0 {
                continue;
            }
            stats.n[row] += w;
            stats.t[row] += &truth.means[col] * w;
            stats.q[row] += (&inv[col] + &truth.means[col] * truth.means[col].transpose()) * w;
        }
    }
    stats
}

/// Averaged potential φ̂_A(ξ) of one labeling class, in the same scale as
/// the per-sheet potential (to be minimized); +∞ outside the cut-off.
pub fn averaged_potential(
    a: &MarkovMatrix,
    xi: &ModelPoint,
    truth: &TrueMixture,
    priors: &PriorConfig,
    lambda0: f64,
) -> f64 {
    let stats = cell_stats(a, truth);
    crate::model::potential_from_stats(&PointTerms::new(xi, priors), &stats, lambda0)
}

/// Entropy term ψ(A) = −log|class| / λ from the Stirling count.
pub fn entropy_term(conf: &ConfusionMatrix, lambda: f64) -> f64 {
    -conf.stirling_log_count() / lambda
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolverStatus {
    Converged,
    /// The unconstrained minimizer left the cut-off and was clamped back.
    Boundary,
    /// A class with zero weight was pinned to the prior center.
    Degenerate,
}

impl SolverStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverStatus::Converged => "converged",
            SolverStatus::Boundary => "boundary",
            SolverStatus::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinimizerMethod {
    /// Closed forms for P = 1, Newton otherwise.
    Auto,
    ClosedForm,
    Newton,
}

/// Minimizer of the averaged potential over the manifold: weights in closed
/// form, per-component mean/precision blocks by the one-dimensional closed
/// forms or damped Newton. Returns the minimizing point, the value
/// Φ̂(A) = φ̂_A(𝔐(A)), and a status flag.
pub fn cell_minimizer(
    a: &MarkovMatrix,
    truth: &TrueMixture,
    priors: &PriorConfig,
    lambda0: f64,
    method: MinimizerMethod,
) -> Result<(ModelPoint, f64, SolverStatus)> {
    let k = truth.k();
    let p = truth.p();
    let stats = cell_stats(a, truth);
    let mut status = SolverStatus::Converged;

    // weight block: π_k ∝ W_k + α_dir − 1 (0·log 0 on empty classes)
    let coeffs: Vec<f64> = stats
        .n
        .iter()
        .map(|&w| w + priors.dirichlet_alpha - 1.0)
        .collect();
    if coeffs.iter().any(|&c| c < 0.0) {
        return Err(Error::numerical(
            "weight solve undefined: a class weight plus dirichlet_alpha - 1 is negative",
        ));
    }
    let total: f64 = coeffs.iter().sum();
    let weights: Vec<f64> = coeffs.iter().map(|&c| c / total).collect();

    let mut means = Vec::with_capacity(k);
    let mut precisions = Vec::with_capacity(k);
    let use_closed = match method {
        MinimizerMethod::Auto => p == 1,
        MinimizerMethod::ClosedForm => {
            if p != 1 {
                return Err(Error::config("closed-form minimizer requires P = 1"));
            }
            true
        }
        MinimizerMethod::Newton => false,
    };

    for comp in 0..k {
        if stats.n[comp] == 0.0 {
            // unidentified component: pin to the center of the admissible set
            means.push(DVector::zeros(p));
            precisions.push(DMatrix::identity(p, p));
            status = SolverStatus::Degenerate;
            continue;
        }
        if use_closed {
            let st = crate::univariate::ScalarTruth::new(truth)?;
            let (mu, lam) = crate::univariate::solve_row(&a.row(comp), &st, priors, comp)?;
            means.push(DVector::from_vec(vec![mu]));
            precisions.push(DMatrix::from_element(1, 1, lam));
        } else {
            let (mu, lam) = newton_component(&stats, comp, priors, p)?;
            means.push(mu);
            precisions.push(lam);
        }
    }

    let mut point = ModelPoint {
        weights,
        means,
        precisions,
    };
    if !point.in_cutoff(priors) {
        clamp_into_cutoff(&mut point, priors);
        status = SolverStatus::Boundary;
    }
    let value = averaged_potential(a, &point, truth, priors, lambda0);
    Ok((point, value, status))
}

/// Damped Newton on one component's (mean, precision) block in the
/// log-Cholesky chart, using the analytic gradient of the averaged
/// potential.
fn newton_component(
    stats: &SheetStats,
    comp: usize,
    priors: &PriorConfig,
    p: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chart = crate::model::Chart::new(1, p);
    let one_priors = PriorConfig {
        radius: priors.radius,
        mean_decay: priors.mean_decay,
        sigma: vec![priors.sigma[comp]],
        dirichlet_alpha: 1.0,
    };
    let one_stats = SheetStats {
        n: vec![stats.n[comp]],
        t: vec![stats.t[comp].clone()],
        q: vec![stats.q[comp].clone()],
    };
    let value = |x: &[f64]| {
        let pt = chart.unpack(x);
        // objective without the cut-off sentinel: the chart is unconstrained
        let terms = PointTerms::new(&pt, &one_priors);
        terms.data_term(&one_stats).mul_add(-1.0, -terms.log_prior)
    };
    let grad = |x: &[f64]| {
        let pt = chart.unpack(x);
        let g = crate::model::potential_gradient(&one_stats, &pt, &one_priors, 1.0)
            .expect("chart points are interior");
        chart.grad_to_chart(x, &g)
    };
    let init_mu = &stats.t[comp] / stats.n[comp];
    let init = ModelPoint {
        weights: vec![1.0],
        means: vec![init_mu],
        precisions: vec![DMatrix::identity(p, p)],
    };
    let x0 = chart.pack(&init)?;
    let result = crate::optim::minimize(&value, &grad, &x0, &crate::optim::NewtonOptions::default())?;
    let solution = chart.unpack(&result.x);
    Ok((solution.means[0].clone(), solution.precisions[0].clone()))
}

/// Pull a point back inside the cut-off region (boundary flag handling).
fn clamp_into_cutoff(point: &mut ModelPoint, priors: &PriorConfig) {
    let shrink = 0.999 * priors.radius;
    for m in &mut point.means {
        let norm = m.norm();
        if norm >= shrink {
            *m *= shrink / norm;
        }
    }
    for l in &mut point.precisions {
        if let Ok(d) = crate::linalg::rao_fisher_to_identity(l) {
            if d >= shrink {
                *l = crate::linalg::spd_map(l, |v| (v.ln() * shrink / d).exp());
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Lattice sweep
// ---------------------------------------------------------------------------

/// The integer lattice of confusion matrices over fixed class sizes, with an
/// optional stride that subsamples each column's compositions by index.
#[derive(Debug, Clone, Serialize)]
pub struct LatticeSpec {
    pub class_sizes: Vec<usize>,
    pub stride: usize,
}

impl LatticeSpec {
    pub fn new(class_sizes: Vec<usize>, stride: usize) -> Result<Self> {
        if class_sizes.is_empty() || class_sizes.iter().any(|&s| s == 0) {
            return Err(Error::config("lattice class sizes must be positive"));
        }
        if stride == 0 {
            return Err(Error::config("stride must be >= 1"));
        }
        Ok(LatticeSpec { class_sizes, stride })
    }

    pub fn k(&self) -> usize {
        self.class_sizes.len()
    }

    /// Full lattice cardinality Π_col C(Ñ_col + K − 1, K − 1).
    pub fn full_size(&self) -> u128 {
        let k = self.k() as u64;
        self.class_sizes
            .iter()
            .map(|&n| numerics::binomial_u128(n as u64 + k - 1, k - 1))
            .product()
    }

    /// Cardinality after stride subsampling.
    pub fn strided_size(&self) -> u128 {
        let k = self.k() as u64;
        self.class_sizes
            .iter()
            .map(|&n| {
                let full = numerics::binomial_u128(n as u64 + k - 1, k - 1);
                full.div_ceil(self.stride as u128)
            })
            .product()
    }

    /// Materialize the (strided) cells in deterministic lexicographic order.
    pub fn cells(&self, budget: u128) -> Result<Vec<ConfusionMatrix>> {
        let size = self.strided_size();
        if size > budget {
            return Err(Error::budget(
                "lattice sweep",
                size,
                budget,
                "; increase the stride to subsample the lattice",
            ));
        }
        let k = self.k();
        let per_column: Vec<Vec<Vec<usize>>> = self
            .class_sizes
            .iter()
            .map(|&n| {
                compositions(n, k)
                    .into_iter()
                    .enumerate()
                    .filter(|(i, _)| i % self.stride == 0)
                    .map(|(_, c)| c)
                    .collect()
            })
            .collect();
        let mut cells = Vec::with_capacity(size as usize);
        let mut idx = vec![0usize; k];
        'outer: loop {
            let mut counts = vec![vec![0usize; k]; k];
            for col in 0..k {
                for row in 0..k {
                    counts[row][col] = per_column[col][idx[col]][row];
                }
            }
            cells.push(ConfusionMatrix {
                counts,
                class_sizes: self.class_sizes.clone(),
            });
            let mut pos = k;
            loop {
                if pos == 0 {
                    break 'outer;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < per_column[pos].len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
        Ok(cells)
    }
}

/// All length-k vectors of nonnegative integers summing to n, lexicographic.
pub fn compositions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 1 {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=n {
            prefix.push(first);
            rec(n - first, k - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, &mut Vec::new(), &mut out);
    out
}

/// One lattice cell's solved record.
#[derive(Debug, Clone, Serialize)]
pub struct LandscapeRecord {
    pub a: MarkovMatrix,
    pub point: ModelPoint,
    pub phi_hat: f64,
    pub psi: f64,
    pub f: f64,
    pub status: SolverStatus,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub cells: Vec<ConfusionMatrix>,
    pub records: Vec<LandscapeRecord>,
    pub argmin: usize,
    pub lambda: f64,
    pub lambda0: f64,
    /// log Π Ñ^{K−1}: the plain cell-volume normalization.
    pub log_cell_norm: f64,
    /// The same with the extra 2^{D/2} factor, D = K(K−1).
    pub log_cell_norm_sqrt2: f64,
}

/// Evaluate every lattice cell: minimize the averaged potential, attach the
/// entropy term, and locate the free-energy argmin (lexicographic tie-break
/// on the Markov entries).
pub fn sweep(
    lattice: &LatticeSpec,
    truth: &TrueMixture,
    priors: &PriorConfig,
    lambda: f64,
    lambda0: f64,
    budget: u128,
) -> Result<SweepResult> {
    let cells = lattice.cells(budget)?;
    let records: Result<Vec<LandscapeRecord>> = cells
        .par_iter()
        .map(|conf| {
            let a = conf.markov();
            let (point, phi_hat, status) =
                cell_minimizer(&a, truth, priors, lambda0, MinimizerMethod::Auto)?;
            let psi = entropy_term(conf, lambda);
            Ok(LandscapeRecord {
                f: phi_hat + psi,
                a,
                point,
                phi_hat,
                psi,
                status,
            })
        })
        .collect();
    let records = records?;
    let mut argmin = 0;
    for i in 1..records.len() {
        let fi = records[i].f;
        let fb = records[argmin].f;
        let better = if fi.is_nan() {
            false
        } else if fb.is_nan() {
            true
        } else if fi != fb {
            fi < fb
        } else {
            flat_alpha(&records[i].a) < flat_alpha(&records[argmin].a)
        };
        if better {
            argmin = i;
        }
    }
    let k = lattice.k() as f64;
    let log_cell_norm: f64 = lattice
        .class_sizes
        .iter()
        .map(|&n| (k - 1.0) * (n as f64).ln())
        .sum();
    let d = k * (k - 1.0);
    Ok(SweepResult {
        cells,
        records,
        argmin,
        lambda,
        lambda0,
        log_cell_norm,
        log_cell_norm_sqrt2: log_cell_norm + 0.5 * d * 2.0_f64.ln(),
    })
}

fn flat_alpha(a: &MarkovMatrix) -> Vec<ordered_float_bits> {
    a.alpha
        .iter()
        .flat_map(|r| r.iter().map(|v| v.to_bits()))
        .collect()
}

#[allow(non_camel_case_types)]
type ordered_float_bits = u64;

impl SweepResult {
    /// CSV with one row per cell: the Markov entries row-major, the energy,
    /// the entropy, the free energy, and the solver status.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let k = self.records.first().map_or(0, |r| r.a.k());
        let mut header = Vec::new();
        for row in 1..=k {
            for col in 1..=k {
                header.push(format!("alpha_{row}{col}"));
            }
        }
        header.extend(["phi_hat", "psi", "F", "solver_status"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for rec in &self.records {
            let mut fields = Vec::new();
            for row in &rec.a.alpha {
                for v in row {
                    fields.push(format!("{v}"));
                }
            }
            fields.push(format!("{}", rec.phi_hat));
            fields.push(format!("{}", rec.psi));
            fields.push(format!("{}", rec.f));
            fields.push(rec.status.as_str().to_string());
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let best = &self.records[self.argmin];
        serde_json::json!({
            "A_star": best.a,
            "minimizer": best.point,
            "phi_hat": best.phi_hat,
            "psi": best.psi,
            "F": best.f,
            "lambda": self.lambda,
            "lambda0": self.lambda0,
            "cells": self.records.len(),
            "normalization": {
                "log_cell_norm": self.log_cell_norm,
                "log_cell_norm_sqrt2": self.log_cell_norm_sqrt2,
            },
        })
    }
}

// ---------------------------------------------------------------------------
// Labeling-class sampling and U-statistics
// ---------------------------------------------------------------------------

/// Uniform labeling with the given confusion matrix: per true class, shuffle
/// its indices and cut them into groups of the prescribed sizes.
pub fn sample_assignment_in_cell(
    rng: &mut impl Rng,
    conf: &ConfusionMatrix,
    truth: &TrueMixture,
) -> Assignment {
    let k = conf.k();
    let mut labels = vec![0usize; truth.n()];
    for col in 0..k {
        let mut members: Vec<usize> = (0..truth.n())
            .filter(|&i| truth.true_labels[i] == col)
            .collect();
        members.shuffle(rng);
        let mut offset = 0;
        for row in 0..k {
            for &i in &members[offset..offset + conf.counts[row][col]] {
                labels[i] = row;
            }
            offset += conf.counts[row][col];
        }
    }
    Assignment::new(labels, k).expect("labels in range")
}

#[derive(Debug, Clone, Serialize)]
pub struct UStatReport {
    pub draws: usize,
    pub empirical_mean: f64,
    pub empirical_std: f64,
    /// 3 · std / √draws band around the empirical mean.
    pub band: f64,
    /// Averaged potential with the printed π̃-weighted sums.
    pub printed_value: f64,
    /// Plain conditional expectation over the class (no π̃ factor).
    pub conditional_value: f64,
    pub bias_printed: f64,
    pub bias_conditional: f64,
}

/// Monte-Carlo mean of the potential over one labeling class against the two
/// averaged-potential conventions. The conditional value is the population
/// mean; the report quantifies the printed form's systematic gap.
pub fn u_statistics_report(
    ds: &Dataset,
    truth: &TrueMixture,
    conf: &ConfusionMatrix,
    xi: &ModelPoint,
    priors: &PriorConfig,
    lambda0: f64,
    draws: usize,
    rng: &mut impl Rng,
) -> UStatReport {
    let terms = PointTerms::new(xi, priors);
    let mut values = Vec::with_capacity(draws);
    for _ in 0..draws {
        let z = sample_assignment_in_cell(rng, conf, truth);
        let stats = SheetStats::from_assignment(ds, &z);
        values.push(crate::model::potential_from_stats(&terms, &stats, lambda0));
    }
    let mean = values.iter().sum::<f64>() / draws as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0);
    let std = var.sqrt();
    let a = conf.markov();
    let printed = averaged_potential(&a, xi, truth, priors, lambda0);
    let conditional = crate::model::potential_from_stats(
        &terms,
        &conditional_cell_stats(&a, truth),
        lambda0,
    );
    UStatReport {
        draws,
        empirical_mean: mean,
        empirical_std: std,
        band: 3.0 * std / (draws as f64).sqrt(),
        printed_value: printed,
        conditional_value: conditional,
        bias_printed: mean - printed,
        bias_conditional: mean - conditional,
    }
}

// ---------------------------------------------------------------------------
// Concentration check
// ---------------------------------------------------------------------------

/// Axis-aligned grid over the one-dimensional manifold chart:
/// means, log-precisions per component, and the first K−1 weights.
#[derive(Debug, Clone, Serialize)]
pub struct GridSpec {
    pub mean_range: (f64, f64),
    pub mean_points: usize,
    pub log_precision_range: (f64, f64),
    pub log_precision_points: usize,
    pub weight_range: (f64, f64),
    pub weight_points: usize,
}

impl GridSpec {
    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Product-metric distance on the manifold: Euclidean on means and weights,
/// affine-invariant on precisions.
pub fn param_distance(a: &ModelPoint, b: &ModelPoint) -> f64 {
    let mut s = 0.0;
    for (ma, mb) in a.means.iter().zip(&b.means) {
        s += (ma - mb).norm_squared();
    }
    for (la, lb) in a.precisions.iter().zip(&b.precisions) {
        if let Ok(logs) = crate::linalg::whitened_log_eigs(la, lb) {
            s += logs.norm_squared();
        }
    }
    for (wa, wb) in a.weights.iter().zip(&b.weights) {
        s += (wa - wb).powi(2);
    }
    s.sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaConcentration {
    pub beta: f64,
    pub lambda: f64,
    pub argmax: ModelPoint,
    pub argmax_interior: bool,
    pub grad_norm_at_argmax: f64,
    pub grad_resolution_bound: f64,
    pub a_star: MarkovMatrix,
    pub minimizer_at_a_star: ModelPoint,
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaviModeCheck {
    pub nearest_cell: usize,
    pub grad_f_norm: f64,
    pub decile_rank: f64,
    pub in_smallest_decile: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    pub per_beta: Vec<BetaConcentration>,
    pub distances_nonincreasing: bool,
    pub cavi_mode: Option<CaviModeCheck>,
}

/// Exhaustive small-N comparison of the marginal partition function's grid
/// argmax against the lattice free-energy argmin, across temperatures.
/// Sheet corrections are not modeled here (set to zero), matching the
/// leading-order effective free energy.
#[allow(clippy::too_many_arguments)]
pub fn concentration_check(
    ds: &Dataset,
    truth: &TrueMixture,
    priors: &PriorConfig,
    betas: &[f64],
    lambda0: f64,
    grid: &GridSpec,
    lattice: &LatticeSpec,
    enumeration_budget: u128,
    lattice_budget: u128,
    cavi_mode: Option<&ModelPoint>,
) -> Result<ConcentrationReport> {
    if ds.p() != 1 {
        return Err(Error::config("the concentration grid is defined for P = 1"));
    }
    let k = truth.k();
    let n = ds.n();
    let sheets = enumerate_assignments(n, k, lambda0.max(1.0) as usize, enumeration_budget)?;
    let stats: Vec<SheetStats> = sheets
        .iter()
        .map(|z| SheetStats::from_assignment(ds, z))
        .collect();

    // grid axes
    let mu_axis = GridSpec::axis(grid.mean_range.0, grid.mean_range.1, grid.mean_points);
    let ll_axis = GridSpec::axis(
        grid.log_precision_range.0,
        grid.log_precision_range.1,
        grid.log_precision_points,
    );
    let w_axis = GridSpec::axis(grid.weight_range.0, grid.weight_range.1, grid.weight_points);
    let axes: Vec<&[f64]> = {
        let mut v: Vec<&[f64]> = Vec::new();
        for _ in 0..k {
            v.push(&mu_axis);
        }
        for _ in 0..k {
            v.push(&ll_axis);
        }
        for _ in 0..k - 1 {
            v.push(&w_axis);
        }
        v
    };
    let dims: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    let total: usize = dims.iter().product();

    let point_at = |flat: usize| -> ModelPoint {
        let mut rem = flat;
        let mut coords = Vec::with_capacity(dims.len());
        for d in (0..dims.len()).rev() {
            coords.push(axes[d][rem % dims[d]]);
            rem /= dims[d];
        }
        coords.reverse();
        let means = (0..k)
            .map(|c| DVector::from_vec(vec![coords[c]]))
            .collect();
        let precisions = (0..k)
            .map(|c| DMatrix::from_element(1, 1, coords[k + c].exp()))
            .collect();
        let mut weights: Vec<f64> = coords[2 * k..].to_vec();
        let head: f64 = weights.iter().sum();
        weights.push(1.0 - head);
        ModelPoint {
            weights,
            means,
            precisions,
        }
    };

    let mut per_beta = Vec::with_capacity(betas.len());
    for &beta in betas {
        let lambda = beta * lambda0;
        let logz_at = |flat: usize| -> f64 {
            let point = point_at(flat);
            if point.weights.iter().any(|&w| w <= 0.0) {
                return f64::NEG_INFINITY;
            }
            let terms = PointTerms::new(&point, priors);
            let vals: Vec<f64> = stats
                .iter()
                .map(|s| -lambda * crate::model::potential_from_stats(&terms, s, lambda0))
                .collect();
            numerics::log_sum_exp(&vals)
        };
        let values: Vec<f64> = (0..total).into_par_iter().map(logz_at).collect();
        let mut best = 0;
        for (i, &v) in values.iter().enumerate() {
            if v > values[best] {
                best = i;
            }
        }

        // finite-difference gradient and curvature bound at the argmax
        let mut coords_idx = Vec::with_capacity(dims.len());
        {
            let mut rem = best;
            for d in (0..dims.len()).rev() {
                coords_idx.push(rem % dims[d]);
                rem /= dims[d];
            }
            coords_idx.reverse();
        }
        let mut interior = true;
        let mut grad_norm_sq = 0.0;
        let mut bound_sq = 0.0;
        let mut stride = 1usize;
        let mut strides = vec![0usize; dims.len()];
        for d in (0..dims.len()).rev() {
            strides[d] = stride;
            stride *= dims[d];
        }
        for d in 0..dims.len() {
            if coords_idx[d] == 0 || coords_idx[d] + 1 >= dims[d] {
                interior = false;
                continue;
            }
            let h = axes[d][1] - axes[d][0];
            let up = values[best + strides[d]];
            let down = values[best - strides[d]];
            let g = (up - down) / (2.0 * h);
            let curv = (up - 2.0 * values[best] + down) / (h * h);
            grad_norm_sq += g * g;
            bound_sq += (1.5 * curv.abs() * h).powi(2);
        }

        let sweep_result = sweep(lattice, truth, priors, lambda, lambda0, lattice_budget)?;
        let best_rec = &sweep_result.records[sweep_result.argmin];
        let argmax_point = point_at(best);
        per_beta.push(BetaConcentration {
            beta,
            lambda,
            distance: param_distance(&argmax_point, &best_rec.point),
            argmax: argmax_point,
            argmax_interior: interior,
            grad_norm_at_argmax: grad_norm_sq.sqrt(),
            grad_resolution_bound: bound_sq.sqrt().max(1e-9),
            a_star: best_rec.a.clone(),
            minimizer_at_a_star: best_rec.point.clone(),
        });
    }

    let distances_nonincreasing = per_beta
        .windows(2)
        .all(|w| w[1].distance <= w[0].distance + 1e-12);

    // nearest-cell discrete gradient check for an externally supplied mode
    let cavi_mode = match cavi_mode {
        None => None,
        Some(mode) => {
            let lambda = betas.last().copied().unwrap_or(1.0) * lambda0;
            let sweep_result = sweep(lattice, truth, priors, lambda, lambda0, lattice_budget)?;
            let mut nearest = 0;
            let mut nearest_d = f64::INFINITY;
            for (i, rec) in sweep_result.records.iter().enumerate() {
                let d = param_distance(mode, &rec.point);
                if d < nearest_d {
                    nearest_d = d;
                    nearest = i;
                }
            }
            let grads = lattice_gradient_norms(&sweep_result);
            let target = grads[nearest];
            let mut interior_grads: Vec<f64> = sweep_result
                .cells
                .iter()
                .zip(&grads)
                .filter(|(c, _)| c.interior())
                .map(|(_, &g)| g)
                .collect();
            interior_grads.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let rank = interior_grads.iter().filter(|&&g| g <= target).count() as f64
                / interior_grads.len().max(1) as f64;
            Some(CaviModeCheck {
                nearest_cell: nearest,
                grad_f_norm: target,
                decile_rank: rank,
                in_smallest_decile: rank <= 0.1 + 1e-12,
            })
        }
    };

    Ok(ConcentrationReport {
        per_beta,
        distances_nonincreasing,
        cavi_mode,
    })
}

/// Discrete free-energy gradient norms on the lattice: central differences
/// over single-unit moves within each column.
pub fn lattice_gradient_norms(sweep_result: &SweepResult) -> Vec<f64> {
    let index: HashMap<Vec<usize>, usize> = sweep_result
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            (
                c.counts.iter().flatten().copied().collect::<Vec<usize>>(),
                i,
            )
        })
        .collect();
    let k = sweep_result.cells.first().map_or(0, |c| c.k());
    sweep_result
        .cells
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let f0 = sweep_result.records[i].f;
            let mut acc = 0.0;
            for col in 0..k {
                let spacing = 1.0 / cell.class_sizes[col] as f64;
                for r1 in 0..k {
                    for r2 in (r1 + 1)..k {
                        let mut up = cell.counts.clone();
                        let mut down = cell.counts.clone();
                        let up_ok = up[r1][col] > 0 && {
                            up[r1][col] -= 1;
                            up[r2][col] += 1;
                            true
                        };
                        let down_ok = down[r2][col] > 0 && {
                            down[r2][col] -= 1;
                            down[r1][col] += 1;
                            true
                        };
                        let f_up = up_ok
                            .then(|| index.get(&up.iter().flatten().copied().collect::<Vec<_>>()))
                            .flatten()
                            .map(|&j| sweep_result.records[j].f);
                        let f_down = down_ok
                            .then(|| index.get(&down.iter().flatten().copied().collect::<Vec<_>>()))
                            .flatten()
                            .map(|&j| sweep_result.records[j].f);
                        let d = match (f_up, f_down) {
                            (Some(a), Some(b)) => (a - b) / (2.0 * spacing),
                            (Some(a), None) => (a - f0) / spacing,
                            (None, Some(b)) => (f0 - b) / spacing,
                            (None, None) => 0.0,
                        };
                        acc += d * d;
                    }
                }
            }
            acc.sqrt()
        })
        .collect()
}
