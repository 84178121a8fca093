//! Damped Newton minimization for small unconstrained problems.
//!
//! All optimization in this crate runs in an unconstrained chart (raw means,
//! log-Cholesky precisions, pinned softmax weights), so a dense Newton step
//! with Levenberg damping and backtracking is enough; dimensions stay below
//! a dozen.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub fd_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 200,
            grad_tol: 1e-11,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub hessian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Forward-difference gradient for callers without an analytic one.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let hi = h * (1.0 + x[i].abs());
        xp[i] = x[i] + hi;
        let fp = f(&xp);
        xp[i] = x[i] - hi;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * hi);
    }
    g
}

/// Symmetrized central-difference Hessian built from the gradient.
pub fn fd_hessian(grad: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let hj = h * (1.0 + x[j].abs());
        xp[j] = x[j] + hj;
        let gp = grad(&xp);
        xp[j] = x[j] - hj;
        let gm = grad(&xp);
        xp[j] = x[j];
        for i in 0..n {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * hj);
        }
    }
    let ht = hess.transpose();
    (hess + ht) * 0.5
}

/// Minimize f with analytic gradient by damped Newton with a
/// finite-difference Hessian. Returns the Hessian at the minimizer.
pub fn minimize(
    f: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    opts: &NewtonOptions,
) -> Result<NewtonResult> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(Error::numerical("Newton start has non-finite value"));
    }
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let g = DVector::from_vec(grad(&x));
        let gnorm = g.norm();
        if gnorm <= opts.grad_tol * (1.0 + fx.abs()) {
            converged = true;
            break;
        }
        let hess = fd_hessian(grad, &x, opts.fd_step);
        // Levenberg damping: escalate until the step is a descent direction
        // and actually reduces f.
        let scale = hess.diagonal().amax().max(1e-8);
        let mut tau = 0.0;
        let mut moved = false;
        for _ in 0..40 {
            let mut hdamp = hess.clone();
            for i in 0..n {
                hdamp[(i, i)] += tau;
            }
            if let Some(chol) = hdamp.clone().cholesky() {
                let step = chol.solve(&g);
                // backtracking on the Newton direction
                let mut t = 1.0;
                for _ in 0..30 {
                    let xt: Vec<f64> = (0..n).map(|i| x[i] - t * step[i]).collect();
                    let ft = f(&xt);
                    if ft.is_finite() && ft < fx {
                        x = xt;
                        fx = ft;
                        moved = true;
                        break;
                    }
                    t *= 0.5;
                }
                if moved {
                    break;
                }
            }
            tau = if tau == 0.0 { 1e-8 * scale } else { tau * 10.0 };
        }
        if !moved {
            // no further descent possible at this scale
            break;
        }
    }
    let g = DVector::from_vec(grad(&x));
    let grad_norm = g.norm();
    let hessian = fd_hessian(grad, &x, opts.fd_step);
    if !converged && grad_norm > 1e-6 * (1.0 + fx.abs()) {
        return Err(Error::Numerical(format!(
            "Newton did not converge: |grad| = {grad_norm:.3e} after {iterations} iterations (best value {fx:.6e})"
        )));
    }
    Ok(NewtonResult {
        x,
        value: fx,
        grad_norm,
        hessian,
        iterations,
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn minimizes_shifted_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2);
        let g = |x: &[f64]| vec![2.0 * (x[0] - 1.0), 4.0 * (x[1] + 0.5)];
        let r = minimize(&f, &g, &[3.0, 3.0], &NewtonOptions::default()).unwrap();
        assert_relative_eq!(r.x[0], 1.0, epsilon = 1e-8);
        assert_relative_eq!(r.x[1], -0.5, epsilon = 1e-8);
        assert_relative_eq!(r.hessian[(0, 0)], 2.0, max_relative = 1e-4);
    }

    #[test]
    fn minimizes_quartic_bowl() {
        let f = |x: &[f64]| 0.5 * x[0] * x[0] + x[0].powi(4) + (x[1] - 2.0).powi(2);
        let g = |x: &[f64]| vec![x[0] + 4.0 * x[0].powi(3), 2.0 * (x[1] - 2.0)];
        let r = minimize(&f, &g, &[1.5, -1.0], &NewtonOptions::default()).unwrap();
        assert!(r.x[0].abs() < 1e-8);
        assert_relative_eq!(r.x[1], 2.0, epsilon = 1e-8);
    }
}
