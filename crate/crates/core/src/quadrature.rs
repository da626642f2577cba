//! Gauss–Legendre and Gauss–Jacobi rules on [-1, 1].

use nalgebra::{DMatrix, SymmetricEigen};

use crate::special::ln_gamma;

/// Nodes and weights of an n-point rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// ∫_a^b f(x) dx for the Legendre rule mapped onto [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

/// Legendre polynomial P_n and its derivative at x.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n_f = n as f64;
    let dp = n_f * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// n-point Gauss–Legendre rule; nodes by Newton iteration from the
/// Chebyshev-like initial guess, sorted ascending.
pub fn gauss_legendre(n: usize) -> GaussRule {
    if n == 0 {
        return GaussRule { nodes: vec![], weights: vec![] };
    }
    if n == 1 {
        return GaussRule { nodes: vec![0.0], weights: vec![2.0] };
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    GaussRule { nodes, weights }
}

/// n-point Gauss–Jacobi rule for the weight (1 − x)^alpha (1 + x)^beta,
/// alpha, beta > −1, by the Golub–Welsch eigenvalue method. Nodes ascending.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> GaussRule {
    assert!(alpha > -1.0 && beta > -1.0, "Jacobi exponents must exceed -1");
    if n == 0 {
        return GaussRule { nodes: vec![], weights: vec![] };
    }
    let ab = alpha + beta;
    let ln_mu0 = (ab + 1.0) * 2f64.ln() + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0) - ln_gamma(ab + 2.0);
    let mu0 = ln_mu0.exp();

    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let diag = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
        jacobi[(k, k)] = diag;
        if k + 1 < n {
            let j = kf + 1.0;
            let num = 4.0 * j * (j + alpha) * (j + beta) * (j + ab);
            let s = 2.0 * j + ab;
            let den = s * s * (s + 1.0) * (s - 1.0);
            let off = (num / den).sqrt();
            jacobi[(k, k + 1)] = off;
            jacobi[(k + 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    GaussRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        for n in 1..=20 {
            let rule = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let got = rule.integrate(0.0, 1.0, |x| x.powi(deg as i32));
                let want = 1.0 / (deg as f64 + 1.0);
                assert!((got - want).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn legendre_matches_known_three_point_rule() {
        let rule = gauss_legendre(3);
        let x = (0.6f64).sqrt();
        assert!((rule.nodes[0] + x).abs() < 1e-15 && rule.nodes[1].abs() < 1e-15);
        assert!((rule.weights[1] - 8.0 / 9.0).abs() < 1e-15);
        assert!((rule.weights[2] - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_reduces_to_legendre() {
        let j = gauss_jacobi(7, 0.0, 0.0);
        let l = gauss_legendre(7);
        for i in 0..7 {
            assert!((j.nodes[i] - l.nodes[i]).abs() < 1e-14);
            assert!((j.weights[i] - l.weights[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobi_moments() {
        // ∫_{-1}^{1} (1+x)^beta (1+x)^k dx = 2^(beta+k+1) / (beta+k+1)
        let beta = -0.57;
        for n in 1..=12 {
            let rule = gauss_jacobi(n, 0.0, beta);
            for k in 0..(2 * n) {
                let got: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * (1.0 + x).powi(k as i32))
                    .sum();
                let e = beta + k as f64 + 1.0;
                let want = 2f64.powf(e) / e;
                assert!(((got - want) / want).abs() < 1e-12, "n={n} k={k}");
            }
        }
    }
}
