//! Scalar numerical utilities: stable log-sum-exp, log-gamma, Stirling
//! counting, 1-D root finding and quadrature.

/// log(Σ exp(v_i)) guarded against overflow; -inf for an empty slice.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Normalized weights exp(v_i - logΣexp(v)).
pub fn softmax_from_log(v: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(v);
    v.iter().map(|x| (x - z).exp()).collect()
}

/// ln Γ(x) for x > 0 by the 6-term Lanczos series (g = 5).
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    const COEFF: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let tmp = x + 5.5;
    let log = (x + 0.5) * tmp.ln() - tmp;
    let mut a = 1.000000000190015;
    let mut denom = x;
    for c in &COEFF {
        denom += 1.0;
        a += c / denom;
    }
    log + (2.5066282746310005 * a / x).ln()
}

/// Exact ln(n!) via ln Γ(n+1).
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// Stirling approximation ln(n!) ≈ n ln n − n + ½ ln(2πn), with the 0! = 1
/// convention (zero maps to zero, so boundary counts stay finite).
pub fn stirling_ln_factorial(n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let x = n as f64;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
}

/// Exact log multinomial coefficient ln( total! / Π parts_i! ).
pub fn ln_multinomial(total: u64, parts: &[u64]) -> f64 {
    debug_assert_eq!(total, parts.iter().sum::<u64>());
    ln_factorial(total) - parts.iter().map(|&p| ln_factorial(p)).sum::<f64>()
}

/// Stirling log multinomial, factor by factor.
pub fn stirling_ln_multinomial(total: u64, parts: &[u64]) -> f64 {
    stirling_ln_factorial(total) - parts.iter().map(|&p| stirling_ln_factorial(p)).sum::<f64>()
}

/// Binomial coefficient C(n, k) in u128, saturating-free for the lattice
/// sizes used here.
pub fn binomial_u128(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut num: u128 = 1;
    for i in 0..k {
        num = num * (n - i) as u128 / (i + 1) as u128;
    }
    num
}

/// Golden-section minimizer of a unimodal f on [lo, hi].
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Bisection root of f on [lo, hi]; requires a sign change.
pub fn bisect_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

fn adaptive_simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    m: f64,
    fm: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let (left, lm, flm) = simpson(f, a, fa, m, fm);
    let (right, rm, frm) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        left + right + delta / 15.0
    } else {
        adaptive_simpson_rec(f, a, fa, m, fm, left, lm, flm, 0.5 * eps, depth - 1)
            + adaptive_simpson_rec(f, m, fm, b, fb, right, rm, frm, 0.5 * eps, depth - 1)
    }
}

/// Adaptive Simpson quadrature of f on [a, b]; `panels` initial subdivisions
/// keep narrow peaks from slipping through the first error estimate.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, eps: f64, panels: usize) -> f64 {
    let n = panels.max(1);
    let h = (b - a) / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let x0 = a + i as f64 * h;
        let x1 = x0 + h;
        let f0 = f(x0);
        let f1 = f(x1);
        let (whole, m, fm) = simpson(&f, x0, f0, x1, f1);
        total += adaptive_simpson_rec(&f, x0, f0, x1, f1, whole, m, fm, eps / n as f64, 40);
    }
    total
}

/// Gauss–Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let (p, dp) = legendre_with_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_deriv(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Central second difference (f(x-h) - 2 f(x) + f(x+h)) / h².
pub fn second_difference(fm: f64, f0: f64, fp: f64, h: f64) -> f64 {
    (fm - 2.0 * f0 + fp) / (h * h)
}

/// Five-point second derivative, O(h⁴) truncation:
/// (-f(-2h) + 16 f(-h) - 30 f(0) + 16 f(h) - f(2h)) / (12 h²).
pub fn second_derivative_5pt(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x - 2.0 * h) + 16.0 * f(x - h) - 30.0 * f(x) + 16.0 * f(x + h) - f(x + 2.0 * h))
        / (12.0 * h * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let v = [0.3, -1.2, 2.0];
        let direct: f64 = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert_relative_eq!(log_sum_exp(&v), direct, max_relative = 1e-14);
        // extreme values stay finite
        assert!(log_sum_exp(&[-1e4, -1e4 + 1.0]).is_finite());
    }

    #[test]
    fn ln_gamma_half_integers() {
        // Γ(1/2) = √π, Γ(5) = 24
        assert_relative_eq!(
            ln_gamma(0.5),
            std::f64::consts::PI.sqrt().ln(),
            max_relative = 1e-12
        );
        assert_relative_eq!(ln_gamma(5.0), 24.0f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn multinomial_small_counts() {
        // C(4,2)·C(2,2) arrangements: 4!/(2!2!) = 6
        assert_relative_eq!(ln_multinomial(4, &[2, 2]), 6.0f64.ln(), max_relative = 1e-12);
        // Stirling error at n = 4 stays below 3% of the value
        let exact = ln_multinomial(4, &[2, 2]);
        let approx_v = stirling_ln_multinomial(4, &[2, 2]);
        assert!((exact - approx_v).abs() < 0.1);
    }

    #[test]
    fn golden_section_finds_quartic_min() {
        let x = golden_section_min(|x| (x - 0.3).powi(4), -2.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-4);
    }

    #[test]
    fn simpson_integrates_gaussian() {
        let v = adaptive_simpson(|x: f64| (-0.5 * x * x).exp(), -10.0, 10.0, 1e-12, 8);
        assert_relative_eq!(v, (2.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        // ∫_{-1}^{1} x^6 dx = 2/7
        let v: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(6)).sum();
        assert_relative_eq!(v, 2.0 / 7.0, max_relative = 1e-12);
        let total: f64 = w.iter().sum();
        assert_relative_eq!(total, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial_u128(31, 1), 31);
        assert_eq!(binomial_u128(10, 5), 252);
        assert_eq!(binomial_u128(101, 1), 101);
    }
}
