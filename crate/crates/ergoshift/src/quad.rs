//! Gauss-Legendre quadrature with dyadic panel layouts adapted to kernels
//! with an integrable singularity at the origin.

use std::sync::OnceLock;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1]
/// (Newton iteration on the Legendre recurrence).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn rule24() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(24))
}

/// Integral of `f` over [a, b] with the cached 24-point rule.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (nodes, weights) = rule24();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes
        .iter()
        .zip(weights)
        .map(|(&x, &w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Integral of `f` over (0, 1] on dyadic panels [2^{-j-1}, 2^{-j}],
/// j = 0..panels. The truncated mass below 2^{-panels} must be negligible
/// for the integrand at hand; panels around 200 reach 1e-60 scales.
pub fn integrate_dyadic_unit(f: &dyn Fn(f64) -> f64, panels: u32) -> f64 {
    let mut total = 0.0;
    for j in 0..panels {
        let hi = 0.5f64.powi(j as i32);
        let lo = 0.5 * hi;
        total += integrate(f, lo, hi);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_exact() {
        let v = integrate(&|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0);
        // antiderivative x^4/4 - x^2 + x
        assert_relative_eq!(v, (81.0 / 4.0 - 9.0 + 3.0) - (0.25 - 1.0 - 1.0), epsilon = 1e-12);
    }

    #[test]
    fn sqrt_singularity_on_dyadic_panels() {
        // integral of t^{-1/2} over (0,1] = 2
        let v = integrate_dyadic_unit(&|t| t.powf(-0.5), 220);
        assert_relative_eq!(v, 2.0, max_relative = 1e-10);
    }

    #[test]
    fn log_kernel_on_dyadic_panels() {
        // integral of 1/(t (1 - ln t)^3) over (0,1] = 1/2; panel count stays
        // inside f64 range (2^-900 is still normal) and truncation leaves
        // ~1.3e-6 of the mass
        let u = |t: f64| 1.0 - t.ln();
        let v = integrate_dyadic_unit(&|t| 1.0 / (t * u(t) * u(t) * u(t)), 900);
        assert_relative_eq!(v, 0.5, max_relative = 1e-5);
    }
}
