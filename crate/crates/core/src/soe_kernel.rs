//! The fractional kernel K(t) = t^(H−1/2) and its sum-of-exponentials
//! approximations.
//!
//! K is the Laplace transform of the Bernstein density
//! w(x) = x^(−H−1/2) / Γ(1/2 − H). Discretizing that integral with
//! Gauss–Jacobi on [0, 1] (absorbing the x-singularity) and Gauss–Legendre on
//! the dyadic intervals [2^j, 2^(j+1)] gives nodes λₖ and weights ωₖ with
//! K(t) ≈ Σ ωₖ e^(−λₖ t) uniformly on [δ, T].

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_jacobi, gauss_legendre};
use crate::special::gamma;

/// Points of the geometric certification grid used by [`generate_soe`].
pub const DEFAULT_GRID_POINTS: usize = 10_000;

const MAX_INTERVALS: usize = 256;
const MAX_NODES_PER_INTERVAL: usize = 64;
const REFERENCE_NODES: usize = 48;

/// Nodes λₖ ≥ 0 and weights ωₖ > 0 of a finite exponential sum.
#[derive(Debug, Clone, PartialEq)]
pub struct SoeApprox {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    hurst: f64,
    valid_from: f64,
    valid_to: f64,
    target_eps: Option<f64>,
}

impl SoeApprox {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>, hurst: f64, valid_from: f64, valid_to: f64) -> Result<Self> {
        if nodes.len() != weights.len() {
            return Err(Error::domain(format!(
                "{} nodes but {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        if let Some(l) = nodes.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::domain(format!("node {l} must be finite and nonnegative")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::domain(format!("weight {w} must be finite and positive")));
        }
        if !(valid_from > 0.0 && valid_from < valid_to) {
            return Err(Error::domain(format!(
                "validity interval [{valid_from}, {valid_to}] needs 0 < from < to"
            )));
        }
        Ok(SoeApprox {
            nodes,
            weights,
            hurst,
            valid_from,
            valid_to,
            target_eps: None,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn valid_from(&self) -> f64 {
        self.valid_from
    }

    pub fn valid_to(&self) -> f64 {
        self.valid_to
    }

    /// Uniform precision requested at generation; `None` when loaded from file.
    pub fn target_eps(&self) -> Option<f64> {
        self.target_eps
    }

    /// Σₖ ωₖ e^(−λₖ t).
    pub fn eval(&self, t: f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(l, w)| w * (-l * t).exp())
            .sum()
    }
}

/// K(t) = t^(H − 1/2).
pub fn eval_fractional_kernel(t: f64, hurst: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("kernel needs t > 0, got {t}")));
    }
    Ok(t.powf(hurst - 0.5))
}

/// Density of the Bernstein measure of K: x^(−H−1/2) / Γ(1/2 − H).
pub fn bernstein_weight(x: f64, hurst: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::domain(format!("Bernstein weight needs x > 0, got {x}")));
    }
    Ok(x.powf(-hurst - 0.5) / gamma(0.5 - hurst))
}

/// Σₖ ωₖ e^(−λₖ t).
pub fn eval_soe(soe: &SoeApprox, t: f64) -> f64 {
    soe.eval(t)
}

/// `points` geometrically spaced values from `from` to `to`, both included.
pub fn geometric_grid(from: f64, to: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2 && from > 0.0 && to > from);
    let ratio = (to / from).ln() / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| from * (ratio * i as f64).exp()).collect();
    grid[points - 1] = to;
    grid
}

/// max over a geometric grid on [delta, T] of |K(t) − Σ ωₖ e^(−λₖ t)|.
pub fn sup_error(soe: &SoeApprox, hurst: f64, delta: f64, horizon: f64, grid_points: usize) -> f64 {
    geometric_grid(delta, horizon, grid_points)
        .into_iter()
        .map(|t| (t.powf(hurst - 0.5) - soe.eval(t)).abs())
        .fold(0.0, f64::max)
}

/// Quadrature layout behind a generated approximation: the interval
/// boundaries [0, 1, 2, 4, …] and the node count on each interval.
///
/// The layout is independent of H, so the nodes and weights it produces are
/// smooth functions of H at fixed node count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SoeLayout {
    intervals: usize,
    counts: Vec<usize>,
}

impl SoeLayout {
    pub fn node_count(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    fn bounds(&self, i: usize) -> (f64, f64) {
        if i == 0 {
            (0.0, 1.0)
        } else {
            (2f64.powi(i as i32 - 1), 2f64.powi(i as i32))
        }
    }

    /// Nodes and weights of this layout at Hurst index `hurst`.
    pub fn nodes_and_weights(&self, hurst: f64) -> (Vec<f64>, Vec<f64>) {
        let mut nodes = Vec::with_capacity(self.node_count());
        let mut weights = Vec::with_capacity(self.node_count());
        for i in 0..self.intervals {
            let (n, w) = interval_rule(self.bounds(i), self.counts[i], hurst);
            nodes.extend(n);
            weights.extend(w);
        }
        (nodes, weights)
    }
}

/// Nodes and weights discretizing ∫_lo^hi e^(−xt) w(x) dx.
fn interval_rule((lo, hi): (f64, f64), count: usize, hurst: f64) -> (Vec<f64>, Vec<f64>) {
    let expo = -hurst - 0.5;
    let norm = gamma(0.5 - hurst);
    if lo == 0.0 {
        // x = hi (1 + y) / 2 turns x^expo dx into (hi/2)^(expo+1) (1+y)^expo dy.
        let rule = gauss_jacobi(count, 0.0, expo);
        let scale = (0.5 * hi).powf(expo + 1.0) / norm;
        let nodes = rule.nodes.iter().map(|y| 0.5 * hi * (1.0 + y)).collect();
        let weights = rule.weights.iter().map(|w| w * scale).collect();
        (nodes, weights)
    } else {
        let rule = gauss_legendre(count);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let nodes: Vec<f64> = rule.nodes.iter().map(|y| mid + half * y).collect();
        let weights = rule
            .weights
            .iter()
            .zip(&nodes)
            .map(|(w, x)| w * half * x.powf(expo) / norm)
            .collect();
        (nodes, weights)
    }
}

fn contribution(grid: &[f64], (nodes, weights): &(Vec<f64>, Vec<f64>)) -> Vec<f64> {
    grid.iter()
        .map(|t| nodes.iter().zip(weights).map(|(l, w)| w * (-l * t).exp()).sum())
        .collect()
}

fn check_soe_args(hurst: f64, delta: f64, horizon: f64) -> Result<()> {
    if !(hurst > 0.0 && hurst < 0.5) {
        return Err(Error::domain(format!("H must lie in (0, 1/2), got {hurst}")));
    }
    if !(delta > 0.0 && delta < horizon) || !horizon.is_finite() {
        return Err(Error::domain(format!("need 0 < delta < T, got delta={delta}, T={horizon}")));
    }
    Ok(())
}

/// Certified approximation: sup over the default grid of |K − Σωe^(−λt)| ≤ eps.
pub fn generate_soe(hurst: f64, delta: f64, horizon: f64, eps: f64) -> Result<SoeApprox> {
    generate_soe_with_layout(hurst, delta, horizon, eps).map(|(soe, _)| soe)
}

/// Like [`generate_soe`], also returning the quadrature layout so that the
/// same node count can be re-evaluated at nearby H.
///
/// The truncation point 2^(J+1) is the first power of two where the tail
/// bound w(X)e^(−Xδ)/δ drops below eps/10. Every interval starts with one
/// node; the interval whose rule deviates most from a high-order reference is
/// refined one node at a time until the certificate holds.
pub fn generate_soe_with_layout(hurst: f64, delta: f64, horizon: f64, eps: f64) -> Result<(SoeApprox, SoeLayout)> {
    check_soe_args(hurst, delta, horizon)?;
    if !(eps > 0.0) {
        return Err(Error::domain(format!("eps must be positive, got {eps}")));
    }
    let tail = |x: f64| x.powf(-hurst - 0.5) * (-x * delta).exp() / delta / gamma(0.5 - hurst);
    let mut intervals = 1;
    let mut upper = 1.0;
    while tail(upper) >= 0.1 * eps {
        intervals += 1;
        upper *= 2.0;
        if intervals > MAX_INTERVALS {
            return Err(Error::numerical(format!(
                "tail of the Bernstein integral not below {eps}/10 within {MAX_INTERVALS} intervals"
            )));
        }
    }
    let grid = geometric_grid(delta, horizon, DEFAULT_GRID_POINTS);
    let kernel: Vec<f64> = grid.iter().map(|t| t.powf(hurst - 0.5)).collect();
    let mut layout = SoeLayout {
        intervals,
        counts: vec![1; intervals],
    };
    let reference: Vec<Vec<f64>> = (0..intervals)
        .map(|i| contribution(&grid, &interval_rule(layout.bounds(i), REFERENCE_NODES, hurst)))
        .collect();
    let mut parts: Vec<Vec<f64>> = (0..intervals)
        .map(|i| contribution(&grid, &interval_rule(layout.bounds(i), 1, hurst)))
        .collect();
    let mut best = f64::INFINITY;
    loop {
        let err = (0..grid.len())
            .map(|g| (kernel[g] - parts.iter().map(|p| p[g]).sum::<f64>()).abs())
            .fold(0.0, f64::max);
        best = best.min(err);
        if err <= eps {
            let (nodes, weights) = layout.nodes_and_weights(hurst);
            let mut soe = SoeApprox::new(nodes, weights, hurst, delta, horizon)?;
            // The summation order differs from the incremental estimate, so
            // the certificate is checked on the assembled approximation.
            if sup_error(&soe, hurst, delta, horizon, DEFAULT_GRID_POINTS) <= eps {
                soe.target_eps = Some(eps);
                return Ok((soe, layout));
            }
        }
        let worst = (0..intervals)
            .filter(|&i| layout.counts[i] < MAX_NODES_PER_INTERVAL)
            .max_by(|&a, &b| {
                let ea = local_error(&parts[a], &reference[a]);
                let eb = local_error(&parts[b], &reference[b]);
                ea.total_cmp(&eb)
            });
        let Some(i) = worst else {
            return Err(Error::numerical(format!(
                "eps={eps} unreachable: best uniform error {best:.3e} with {} nodes",
                layout.node_count()
            )));
        };
        layout.counts[i] += 1;
        parts[i] = contribution(&grid, &interval_rule(layout.bounds(i), layout.counts[i], hurst));
    }
}

fn local_error(part: &[f64], reference: &[f64]) -> f64 {
    part.iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Evaluates a previously generated layout at a new Hurst index.
pub fn soe_from_layout(layout: &SoeLayout, hurst: f64, delta: f64, horizon: f64) -> Result<SoeApprox> {
    check_soe_args(hurst, delta, horizon)?;
    let (nodes, weights) = layout.nodes_and_weights(hurst);
    SoeApprox::new(nodes, weights, hurst, delta, horizon)
}

const CSV_HEADER: &str = "lambda,omega";

/// Formats with 17 significant digits in plain decimal notation.
pub fn format_sig17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:?}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (16 - magnitude).max(1) as usize;
    format!("{x:.decimals$}")
}

/// Node/weight CSV text: header `lambda,omega`, one pair per row.
pub fn soe_to_csv(soe: &SoeApprox) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (l, w) in soe.nodes.iter().zip(&soe.weights) {
        let _ = writeln!(out, "{},{}", format_sig17(*l), format_sig17(*w));
    }
    out
}

/// Parses node/weight CSV text. The file carries no H or validity interval,
/// so the caller supplies them.
pub fn soe_from_csv(text: &str, hurst: f64, valid_from: f64, valid_to: f64) -> Result<SoeApprox> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `{CSV_HEADER}`, found `{h}`"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: "empty file".into(),
            })
        }
    }
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 2 fields, found {}", fields.len()),
            });
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line: line_no,
                msg: format!("`{s}`: {e}"),
            })
        };
        let (l, w) = (parse(fields[0])?, parse(fields[1])?);
        if !(l.is_finite() && l >= 0.0) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("node {l} must be finite and nonnegative"),
            });
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("weight {w} must be finite and positive"),
            });
        }
        nodes.push(l);
        weights.push(w);
    }
    SoeApprox::new(nodes, weights, hurst, valid_from, valid_to)
}

pub fn write_soe(path: &Path, soe: &SoeApprox) -> Result<()> {
    std::fs::write(path, soe_to_csv(soe))?;
    Ok(())
}

pub fn read_soe(path: &Path, hurst: f64, valid_from: f64, valid_to: f64) -> Result<SoeApprox> {
    let text = std::fs::read_to_string(path)?;
    soe_from_csv(&text, hurst, valid_from, valid_to)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn four_node_set() -> SoeApprox {
        SoeApprox::new(
            vec![0.047108, 1.0, 21.227784, 450.618823],
            vec![0.398569, 1.482765, 5.516218, 20.521561],
            0.07,
            1.0 / 128.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(eval_fractional_kernel(1.0, 0.07).unwrap(), 1.0);
        assert!((eval_fractional_kernel(0.5, 0.07).unwrap() - 1.347_233_576_865_69).abs() < 1e-13);
        assert!((eval_fractional_kernel(4.0, 0.25).unwrap() - 0.707_106_78).abs() < 1e-8);
        assert!(eval_fractional_kernel(0.0, 0.07).is_err());
        assert!(eval_fractional_kernel(-1.0, 0.07).is_err());
    }

    #[test]
    fn bernstein_examples() {
        assert!((bernstein_weight(1.0, 0.25).unwrap() - 0.275_815_662_830_209_3).abs() < 1e-13);
        let (x, h) = (0.37, 0.07);
        let scaled = 4f64.powf(-h - 0.5) * bernstein_weight(x, h).unwrap();
        assert!((bernstein_weight(4.0 * x, h).unwrap() - scaled).abs() < 1e-15);
        assert!(bernstein_weight(0.0, 0.1).is_err());
    }

    #[test]
    fn eval_soe_examples() {
        let one = SoeApprox::new(vec![0.0], vec![1.0], 0.07, 0.01, 1.0).unwrap();
        assert_eq!(eval_soe(&one, 3.7), 1.0);
        let two = SoeApprox::new(vec![2f64.ln()], vec![2.0], 0.07, 0.01, 1.0).unwrap();
        assert!((eval_soe(&two, 1.0) - 1.0).abs() < 1e-15);
        assert!((eval_soe(&four_node_set(), 1.0) - 0.925_71).abs() < 1e-5);
        let sum: f64 = four_node_set().weights().iter().sum();
        assert!((eval_soe(&four_node_set(), 0.0) - sum).abs() < 1e-14);
    }

    #[test]
    fn empty_sup_error_is_kernel_at_left_end() {
        let empty = SoeApprox::new(vec![], vec![], 0.07, 1.0 / 128.0, 1.0).unwrap();
        let e = sup_error(&empty, 0.07, 1.0 / 128.0, 1.0, DEFAULT_GRID_POINTS);
        assert!((e - 8.056_4).abs() < 1e-3, "{e}");
    }

    #[test]
    fn four_node_sup_error_regression() {
        // Attained at the left endpoint; frozen from a numpy evaluation.
        let e = sup_error(&four_node_set(), 0.07, 1.0 / 128.0, 1.0, DEFAULT_GRID_POINTS);
        assert!(e.is_finite() && e > 0.0);
        assert!((e - 0.905_618_791_538_282_5).abs() < 1e-12, "{e}");
    }

    #[test]
    fn generated_soe_is_certified() {
        let soe = generate_soe(0.07, 1.0 / 128.0, 1.0, 1e-3).unwrap();
        assert!(soe.len() >= 1);
        assert_eq!(soe.target_eps(), Some(1e-3));
        assert!(sup_error(&soe, 0.07, 1.0 / 128.0, 1.0, DEFAULT_GRID_POINTS) <= 1e-3);
    }

    #[test]
    fn tighter_eps_needs_more_nodes() {
        let coarse = generate_soe(0.07, 1.0 / 128.0, 1.0, 1e-3).unwrap();
        let fine = generate_soe(0.07, 1.0 / 128.0, 1.0, 1e-5).unwrap();
        assert!(fine.len() >= coarse.len());
    }

    #[test]
    fn generate_rejects_bad_arguments() {
        assert!(generate_soe(0.07, 1.0, 1.0, 1e-3).is_err());
        assert!(generate_soe(0.07, 2.0, 1.0, 1e-3).is_err());
        assert!(generate_soe(0.07, 0.01, 1.0, 0.0).is_err());
        assert!(generate_soe(0.6, 0.01, 1.0, 1e-3).is_err());
    }

    #[test]
    fn unreachable_eps_reports_best_error() {
        let err = generate_soe(0.07, 1e-3, 1.0, 1e-15).unwrap_err();
        assert!(err.to_string().contains("best uniform error"), "{err}");
    }

    #[test]
    fn layout_reevaluation_keeps_node_count() {
        let (soe, layout) = generate_soe_with_layout(0.1, 0.01, 1.0, 1e-3).unwrap();
        let moved = soe_from_layout(&layout, 0.1001, 0.01, 1.0).unwrap();
        assert_eq!(moved.len(), soe.len());
        assert!(sup_error(&moved, 0.1001, 0.01, 1.0, 2000) < 2e-3);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let soe = four_node_set();
        let text = soe_to_csv(&soe);
        assert!(text.starts_with("lambda,omega\n"));
        let back = soe_from_csv(&text, 0.07, 1.0 / 128.0, 1.0).unwrap();
        assert_eq!(back.nodes(), soe.nodes());
        assert_eq!(back.weights(), soe.weights());

        let empty = soe_from_csv("lambda,omega\n", 0.07, 0.01, 1.0).unwrap();
        assert!(empty.is_empty());

        let err = soe_from_csv("lambda,omega\n0.5,1\n-1, 0.5\n", 0.07, 0.01, 1.0).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = soe_from_csv("lambda,omega\n1,0\n", 0.07, 0.01, 1.0).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = soe_from_csv("lambda,omega\n1;2\n", 0.07, 0.01, 1.0).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(soe_from_csv("nodes,weights\n", 0.07, 0.01, 1.0).is_err());
    }

    #[test]
    fn sig17_formatting_is_plain_decimal() {
        assert_eq!(format_sig17(450.618823).len(), "450.61882300000000".len());
        assert_eq!(format_sig17(0.047108).len(), "0.047108000000000000".len());
        assert_eq!(format_sig17(450.618823).parse::<f64>().unwrap(), 450.618823);
        assert!(!format_sig17(1.2345e-7).contains('e'));
        let x = 0.123_456_789_012_345_67_f64;
        assert_eq!(format_sig17(x).parse::<f64>().unwrap(), x);
    }
}
