//! Covariance of the per-step Gaussian vector Ξ = (ΔW, OU₁ … OU_N, I_local),
//! its factorization, and seeded sampling.
//!
//! Component 0 is the Brownian increment over one step, component k ∈ 1..=N
//! is ∫ e^(−λₖ(τ−s)) dW_s over the step, and component N+1 is the exact local
//! Volterra integral √(2H) ∫ (τ−s)^(H−1/2) dW_s.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::soe_kernel::SoeApprox;
use crate::special::lower_incomplete_gamma_scaled;

/// Relative threshold (against the largest diagonal entry) at which the
/// pivoted factorization stops. Roundoff in the residual diagonal sits near
/// 1e-16 of the diagonal, so the cut is two orders above noise.
pub const PIVOT_REL_TOL: f64 = 1e-14;

const JITTER_BASE: f64 = 1e-14;
const JITTER_RETRIES: usize = 3;

/// ∫₀^τ e^(−c s) ds, equal to τ at c = 0.
#[inline]
pub(crate) fn exp_integral(c: f64, tau: f64) -> f64 {
    if c == 0.0 {
        tau
    } else {
        -(-c * tau).exp_m1() / c
    }
}

/// Dense symmetric covariance of Ξ, row-major, dimension N + 2.
pub fn covariance_matrix(soe: &SoeApprox, hurst: f64, tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::domain(format!("step size must be positive, got {tau}")));
    }
    if !(hurst > 0.0 && hurst < 0.5) {
        return Err(Error::domain(format!("H must lie in (0, 1/2), got {hurst}")));
    }
    let lambdas = soe.nodes();
    let n = lambdas.len();
    let dim = n + 2;
    let last = n + 1;
    let root = (2.0 * hurst).sqrt();
    let s = hurst + 0.5;
    let mut m = vec![0.0; dim * dim];
    let mut set = |i: usize, j: usize, v: f64| {
        m[i * dim + j] = v;
        m[j * dim + i] = v;
    };
    set(0, 0, tau);
    set(last, 0, root * tau.powf(s) / s);
    set(last, last, tau.powf(2.0 * hurst));
    for (k, &lk) in lambdas.iter().enumerate() {
        set(k + 1, 0, exp_integral(lk, tau));
        for (l, &ll) in lambdas.iter().enumerate().take(k + 1) {
            set(k + 1, l + 1, exp_integral(lk + ll, tau));
        }
        // √(2H) γ(s, λτ)/λ^s = √(2H) τ^s · γ(s, λτ)/(λτ)^s
        set(last, k + 1, root * tau.powf(s) * lower_incomplete_gamma_scaled(s, lk * tau)?);
    }
    Ok(m)
}

/// Low-rank factor F (dim × rank, row-major) with F Fᵀ ≈ Σ, produced by a
/// diagonally pivoted Cholesky factorization. Permuting rows into `order`
/// makes the factor lower triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct CovFactor {
    dim: usize,
    order: Vec<usize>,
    cols: Vec<f64>,
}

impl CovFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of standard normals consumed per sample.
    pub fn rank(&self) -> usize {
        self.order.len()
    }

    /// Pivot sequence; row `order[j]` is the j-th pivot.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.cols[row * self.rank() + col]
    }

    /// out = F z.
    #[inline]
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        let r = self.rank();
        debug_assert_eq!(z.len(), r);
        for (o, row) in out.iter_mut().zip(self.cols.chunks_exact(r.max(1))) {
            *o = row.iter().zip(z).map(|(a, b)| a * b).sum();
        }
        if r == 0 {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
    }

    /// Dense F Fᵀ.
    pub fn reconstruct(&self) -> Vec<f64> {
        let (d, r) = (self.dim, self.rank());
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (0..r).map(|k| self.cols[i * r + k] * self.cols[j * r + k]).sum();
            }
        }
        out
    }

    /// Factor equal to zero: every sample is the zero vector.
    pub fn zero(dim: usize) -> Self {
        CovFactor {
            dim,
            order: Vec::new(),
            cols: Vec::new(),
        }
    }
}

fn check_square(matrix: &[f64], dim: usize) -> Result<()> {
    if matrix.len() != dim * dim {
        return Err(Error::domain(format!("matrix has {} entries, expected {dim}²", matrix.len())));
    }
    Ok(())
}

/// Pivoted Cholesky: at each step the largest remaining residual diagonal is
/// eliminated, stopping once it falls below `rel_tol` × the largest diagonal.
pub fn pivoted_cholesky(matrix: &[f64], dim: usize, rel_tol: f64) -> Result<CovFactor> {
    check_square(matrix, dim)?;
    let max_diag = (0..dim).map(|i| matrix[i * dim + i]).fold(0.0, f64::max);
    let threshold = rel_tol * max_diag;
    let mut residual: Vec<f64> = (0..dim).map(|i| matrix[i * dim + i]).collect();
    let mut chosen = vec![false; dim];
    let mut order = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    while order.len() < dim {
        let pivot = (0..dim)
            .filter(|&j| !chosen[j])
            .max_by(|&a, &b| residual[a].total_cmp(&residual[b]))
            .expect("unchosen index exists");
        if !(residual[pivot] > threshold) {
            break;
        }
        eliminate(matrix, dim, pivot, residual[pivot], &mut residual, &chosen, &mut columns);
        chosen[pivot] = true;
        order.push(pivot);
    }
    Ok(assemble(dim, order, columns))
}

/// Cholesky with a prescribed pivot sequence, so that a factor of a nearby
/// matrix maps the same normals onto the same directions. Pivots whose
/// residual has dropped to zero or below contribute a zero column.
pub fn cholesky_in_order(matrix: &[f64], dim: usize, order: &[usize]) -> Result<CovFactor> {
    check_square(matrix, dim)?;
    let mut residual: Vec<f64> = (0..dim).map(|i| matrix[i * dim + i]).collect();
    let mut chosen = vec![false; dim];
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for &pivot in order {
        if pivot >= dim || chosen[pivot] {
            return Err(Error::domain(format!("invalid pivot sequence entry {pivot}")));
        }
        if residual[pivot] > 0.0 {
            eliminate(matrix, dim, pivot, residual[pivot], &mut residual, &chosen, &mut columns);
        } else {
            columns.push(vec![0.0; dim]);
        }
        chosen[pivot] = true;
    }
    Ok(assemble(dim, order.to_vec(), columns))
}

fn eliminate(
    matrix: &[f64],
    dim: usize,
    pivot: usize,
    pivot_residual: f64,
    residual: &mut [f64],
    chosen: &[bool],
    columns: &mut Vec<Vec<f64>>,
) {
    let diag = pivot_residual.sqrt();
    let mut col = vec![0.0; dim];
    col[pivot] = diag;
    for j in 0..dim {
        if chosen[j] || j == pivot {
            continue;
        }
        let mut v = matrix[j * dim + pivot];
        for prev in columns.iter() {
            v -= prev[j] * prev[pivot];
        }
        v /= diag;
        col[j] = v;
        residual[j] -= v * v;
    }
    columns.push(col);
}

fn assemble(dim: usize, order: Vec<usize>, columns: Vec<Vec<f64>>) -> CovFactor {
    let rank = order.len();
    let mut cols = vec![0.0; dim * rank];
    for (k, col) in columns.iter().enumerate() {
        for i in 0..dim {
            cols[i * rank + k] = col[i];
        }
    }
    CovFactor { dim, order, cols }
}

/// Dense lower-triangular Cholesky factor (row-major). On failure the
/// diagonal is shifted by 1e-14·trace/dim, escalating tenfold for up to three
/// retries.
pub fn cholesky(matrix: &[f64], dim: usize) -> Result<Vec<f64>> {
    check_square(matrix, dim)?;
    for i in 0..dim {
        for j in 0..i {
            if matrix[i * dim + j] != matrix[j * dim + i] {
                return Err(Error::domain("cholesky input is not symmetric"));
            }
        }
    }
    if let Some(l) = try_cholesky(matrix, dim, 0.0) {
        return Ok(l);
    }
    let trace: f64 = (0..dim).map(|i| matrix[i * dim + i]).sum();
    let mut jitter = JITTER_BASE * trace / dim as f64;
    for _ in 0..JITTER_RETRIES {
        if let Some(l) = try_cholesky(matrix, dim, jitter) {
            return Ok(l);
        }
        jitter *= 10.0;
    }
    Err(Error::numerical(format!(
        "matrix of dimension {dim} is not positive definite within the jitter budget"
    )))
}

fn try_cholesky(matrix: &[f64], dim: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let (ri, rj) = (i * dim, j * dim);
            let s = matrix[ri + j] - dot(&l[ri..ri + j], &l[rj..rj + j]);
            if i == j {
                let d = s + jitter;
                if !(d > 0.0) {
                    return None;
                }
                l[ri + i] = d.sqrt();
            } else {
                l[ri + j] = s / l[rj + j];
            }
        }
    }
    Some(l)
}

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Covariance of Ξ for one step together with its factor.
#[derive(Debug, Clone)]
pub struct StepCovariance {
    matrix: Vec<f64>,
    factor: CovFactor,
    tau: f64,
    hurst: f64,
    soe: SoeApprox,
}

impl StepCovariance {
    pub fn dim(&self) -> usize {
        self.factor.dim()
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dim() + j]
    }

    pub fn factor(&self) -> &CovFactor {
        &self.factor
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn soe(&self) -> &SoeApprox {
        &self.soe
    }

    /// ‖F Fᵀ − Σ‖_F / ‖Σ‖_F.
    pub fn relative_reconstruction_error(&self) -> f64 {
        let rec = self.factor.reconstruct();
        let num: f64 = rec.iter().zip(&self.matrix).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = self.matrix.iter().map(|a| a * a).sum();
        (num / den).sqrt()
    }
}

/// Builds Σ and factors it with diagonal pivoting.
pub fn build_covariance(soe: &SoeApprox, hurst: f64, tau: f64) -> Result<StepCovariance> {
    let matrix = covariance_matrix(soe, hurst, tau)?;
    let dim = soe.len() + 2;
    let factor = pivoted_cholesky(&matrix, dim, PIVOT_REL_TOL)?;
    Ok(StepCovariance {
        matrix,
        factor,
        tau,
        hurst,
        soe: soe.clone(),
    })
}

/// Builds Σ and factors it along a given pivot sequence (see
/// [`cholesky_in_order`]).
pub fn build_covariance_in_order(soe: &SoeApprox, hurst: f64, tau: f64, order: &[usize]) -> Result<StepCovariance> {
    let matrix = covariance_matrix(soe, hurst, tau)?;
    let dim = soe.len() + 2;
    let factor = cholesky_in_order(&matrix, dim, order)?;
    Ok(StepCovariance {
        matrix,
        factor,
        tau,
        hurst,
        soe: soe.clone(),
    })
}

/// `count` draws of F z with z standard normal from `stream`, consumed in
/// order: vector v uses draws v·rank … v·rank + rank − 1.
pub fn sample_gaussian(factor: &CovFactor, stream: RngStream, count: usize) -> Vec<Vec<f64>> {
    let mut normals = stream.normals();
    let mut z = vec![0.0; factor.rank()];
    (0..count)
        .map(|_| {
            normals.fill(&mut z);
            let mut out = vec![0.0; factor.dim()];
            factor.apply(&z, &mut out);
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn soe(nodes: Vec<f64>, weights: Vec<f64>) -> SoeApprox {
        SoeApprox::new(nodes, weights, 0.07, 1.0 / 128.0, 1.0).unwrap()
    }

    #[test]
    fn two_by_two_without_nodes() {
        let (h, tau) = (0.07, 1.0 / 128.0);
        let cov = build_covariance(&soe(vec![], vec![]), h, tau).unwrap();
        assert_eq!(cov.dim(), 2);
        assert_eq!(cov.entry(0, 0), tau);
        let cross = (2.0 * h).sqrt() * tau.powf(h + 0.5) / (h + 0.5);
        assert!((cov.entry(1, 0) - cross).abs() < 1e-16);
        assert_eq!(cov.entry(0, 1), cov.entry(1, 0));
        assert!((cov.entry(1, 1) - tau.powf(2.0 * h)).abs() < 1e-16);
    }

    #[test]
    fn small_node_limits() {
        let tau = 0.01;
        let cov = build_covariance(&soe(vec![1e-14, 1e-12], vec![1.0, 1.0]), 0.07, tau).unwrap();
        assert!(((cov.entry(1, 0) - tau) / tau).abs() < 1e-9);
        let limit = cov.entry(3, 0);
        assert!(((cov.entry(3, 2) - limit) / limit).abs() < 1e-6);
    }

    #[test]
    fn matrix_is_exactly_symmetric() {
        let s = soe(vec![0.047108, 1.0, 21.227784, 450.618823], vec![0.4, 1.5, 5.5, 20.5]);
        let cov = build_covariance(&s, 0.07, 1.0 / 128.0).unwrap();
        let d = cov.dim();
        for i in 0..d {
            for j in 0..d {
                assert_eq!(cov.entry(i, j), cov.entry(j, i));
            }
        }
        assert!(cov.relative_reconstruction_error() < 1e-12);
    }

    #[test]
    fn dense_cholesky_examples() {
        let eye = vec![1.0, 0.0, 0.0, 1.0];
        assert_eq!(cholesky(&eye, 2).unwrap(), eye);
        let l = cholesky(&[4.0, 2.0, 2.0, 5.0], 2).unwrap();
        assert_eq!(l, vec![2.0, 0.0, 1.0, 2.0]);
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
        assert!(cholesky(&[1.0, 2.0, 0.0, 1.0], 2).is_err());
    }

    #[test]
    fn pivoted_matches_dense_on_definite_input() {
        let a = [4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let f = pivoted_cholesky(&a, 3, 1e-15).unwrap();
        assert_eq!(f.rank(), 3);
        let rec = f.reconstruct();
        for (x, y) in rec.iter().zip(&a) {
            assert!((x - y).abs() < 1e-14);
        }
        let g = cholesky_in_order(&a, 3, f.order()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn zero_factor_gives_zero_vectors() {
        let draws = sample_gaussian(&CovFactor::zero(4), RngStream::new(1, 2), 3);
        assert!(draws.iter().flatten().all(|x| *x == 0.0));
        assert!(draws.iter().all(|v| v.len() == 4));
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = soe(vec![0.5, 20.0], vec![0.5, 3.0]);
        let cov = build_covariance(&s, 0.1, 0.01).unwrap();
        let a = sample_gaussian(cov.factor(), RngStream::new(9, 1), 5);
        let b = sample_gaussian(cov.factor(), RngStream::new(9, 1), 5);
        assert_eq!(a, b);
    }

    #[test]
    fn normals_pass_kolmogorov_smirnov() {
        let mut s = RngStream::new(2024, 11).normals();
        let mut draws: Vec<f64> = (0..100_000).map(|_| s.next_normal()).collect();
        draws.sort_by(f64::total_cmp);
        let n = draws.len() as f64;
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let f = crate::special::norm_cdf(*x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        // 0.1% critical value 1.9495/√n
        assert!(ks < 1.9495 / n.sqrt(), "KS = {ks}");
    }
}
