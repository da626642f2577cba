//! Path simulation of (S, V) under the mSOE, pure SOE and exact Cholesky
//! schemes.
//!
//! Every path owns two random streams (see [`crate::rng`]); path `p` uses
//! the same draws regardless of how paths are split across threads, so a
//! batch is a pure function of its inputs.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{build_covariance, build_covariance_in_order, cholesky, exp_integral, StepCovariance};
use crate::model::ModelParams;
use crate::quadrature::{gauss_jacobi, gauss_legendre};
use crate::rng::{RngStream, TAG_DRIVER, TAG_ORTHOGONAL};
use crate::soe_kernel::SoeApprox;

/// Largest step count accepted by the Cholesky scheme unless raised.
pub const DEFAULT_CHOLESKY_CAP: usize = 512;
/// Paths per work unit. Fixed so that work partitioning never depends on
/// the thread count.
const CHUNK: usize = 256;
/// Paths per blocked product in the Cholesky scheme.
const CHOL_CHUNK: usize = 64;
const CHOL_BLOCK: usize = 128;
/// Largest admissible exponent of the variance update.
pub const EXPONENT_GUARD: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Msoe,
    Soe,
    Cholesky,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Msoe => "msoe",
            Scheme::Soe => "soe",
            Scheme::Cholesky => "cholesky",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "msoe" => Ok(Scheme::Msoe),
            "soe" => Ok(Scheme::Soe),
            "cholesky" => Ok(Scheme::Cholesky),
            other => Err(Error::domain(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Uniform grid t_i = iτ, i = 0…n, with the maturities on grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSchedule {
    n: usize,
    tau: f64,
    maturities: Vec<f64>,
    steps: Vec<usize>,
}

impl GridSchedule {
    /// n steps up to the largest maturity.
    pub fn new(maturities: Vec<f64>, n: usize) -> Result<Self> {
        let horizon = check_maturities(&maturities)?;
        if n == 0 {
            return Err(Error::domain("step count must be positive"));
        }
        Self::build(maturities, horizon / n as f64, n)
    }

    /// Step size τ; the largest maturity must be a multiple of τ.
    pub fn with_step(maturities: Vec<f64>, tau: f64) -> Result<Self> {
        let horizon = check_maturities(&maturities)?;
        if !(tau > 0.0 && tau <= horizon) {
            return Err(Error::domain(format!("step {tau} must lie in (0, {horizon}]")));
        }
        let n = (horizon / tau).round() as usize;
        Self::build(maturities, horizon / n as f64, n)
    }

    fn build(maturities: Vec<f64>, tau: f64, n: usize) -> Result<Self> {
        let mut steps = Vec::with_capacity(maturities.len());
        for &t in &maturities {
            let k = t / tau;
            let kr = k.round();
            if (k - kr).abs() > 1e-6 * k.max(1.0) || kr < 1.0 {
                return Err(Error::domain(format!("maturity {t} is not a grid point for step {tau}")));
            }
            steps.push(kr as usize);
        }
        Ok(GridSchedule { n, tau, maturities, steps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    /// Grid index of each maturity.
    pub fn maturity_steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.tau
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.n)
    }
}

fn check_maturities(maturities: &[f64]) -> Result<f64> {
    if maturities.is_empty() {
        return Err(Error::domain("at least one maturity is required"));
    }
    if maturities.iter().any(|t| !(*t > 0.0 && t.is_finite())) || maturities.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("maturities must be positive and strictly increasing"));
    }
    Ok(*maturities.last().expect("nonempty"))
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Grid indices at which every path's variance is kept.
    pub record_variance: Vec<usize>,
    /// Keep full (S, V) trajectories. Memory grows as m·(n+1).
    pub store_paths: bool,
    pub cholesky_cap: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            record_variance: Vec::new(),
            store_paths: false,
            cholesky_cap: DEFAULT_CHOLESKY_CAP,
        }
    }
}

/// Simulation output. Per-maturity vectors are indexed by path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub scheme: Scheme,
    pub seed: u64,
    maturities: Vec<f64>,
    terminal: Vec<Vec<f64>>,
    running_min: Vec<Vec<f64>>,
    running_max: Vec<Vec<f64>>,
    variance_steps: Vec<usize>,
    variance: Vec<Vec<f64>>,
    /// Row-major (path, grid index) pairs (S, V).
    paths: Option<Vec<[f64; 2]>>,
}

impl PathBatch {
    /// A batch assembled from given samples, mostly for tests and imports.
    pub fn from_parts(
        scheme: Scheme,
        maturities: Vec<f64>,
        terminal: Vec<Vec<f64>>,
        running_min: Vec<Vec<f64>>,
        running_max: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let m = terminal.first().map_or(0, Vec::len);
        let shapes_ok = terminal.len() == maturities.len()
            && running_min.len() == maturities.len()
            && running_max.len() == maturities.len()
            && terminal.iter().chain(&running_min).chain(&running_max).all(|v| v.len() == m);
        if !shapes_ok || m == 0 {
            return Err(Error::domain("inconsistent batch shapes"));
        }
        Ok(PathBatch {
            scheme,
            seed: 0,
            maturities,
            terminal,
            running_min,
            running_max,
            variance_steps: Vec::new(),
            variance: Vec::new(),
            paths: None,
        })
    }

    /// One maturity, extrema equal to the terminal values.
    pub fn from_terminal(maturity: f64, values: Vec<f64>) -> Result<Self> {
        Self::from_parts(
            Scheme::Msoe,
            vec![maturity],
            vec![values.clone()],
            vec![values.clone()],
            vec![values],
        )
    }

    pub fn m(&self) -> usize {
        self.terminal[0].len()
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn maturity_index(&self, t: f64) -> Result<usize> {
        self.maturities
            .iter()
            .position(|x| (x - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or_else(|| Error::domain(format!("maturity {t} is not recorded in the batch")))
    }

    pub fn terminal(&self, t: f64) -> Result<&[f64]> {
        Ok(&self.terminal[self.maturity_index(t)?])
    }

    /// Running minimum of S over grid points in [0, t].
    pub fn running_min(&self, t: f64) -> Result<&[f64]> {
        Ok(&self.running_min[self.maturity_index(t)?])
    }

    pub fn running_max(&self, t: f64) -> Result<&[f64]> {
        Ok(&self.running_max[self.maturity_index(t)?])
    }

    pub fn variance_steps(&self) -> &[usize] {
        &self.variance_steps
    }

    /// Variance of every path at a recorded grid index.
    pub fn variance_at(&self, step: usize) -> Option<&[f64]> {
        self.variance_steps.iter().position(|s| *s == step).map(|k| self.variance[k].as_slice())
    }

    /// Stored (S, V) trajectory of one path, if kept.
    pub fn path(&self, p: usize) -> Option<&[[f64; 2]]> {
        let paths = self.paths.as_ref()?;
        let len = paths.len() / self.m();
        paths.get(p * len..(p + 1) * len)
    }
}

/// Path dump with header "path,step,t,S,V".
pub fn paths_to_csv(batch: &PathBatch, tau: f64) -> Option<String> {
    batch.paths.as_ref()?;
    let mut out = String::from("path,step,t,S,V\n");
    for p in 0..batch.m() {
        for (i, [s, v]) in batch.path(p)?.iter().enumerate() {
            out.push_str(&format!("{p},{i},{},{s},{v}\n", i as f64 * tau));
        }
    }
    Some(out)
}

/// E[Ī(t_i)²] of the mSOE driver: exact local part plus SOE history.
pub fn second_moment_approx(soe: &SoeApprox, hurst: f64, tau: f64, t_i: f64) -> f64 {
    let (l, w) = (soe.nodes(), soe.weights());
    let span = (t_i - tau).max(0.0);
    let mut hist = 0.0;
    for k in 0..l.len() {
        for j in 0..l.len() {
            let c = l[k] + l[j];
            // (e^(−cτ) − e^(−c t_i))/c
            hist += w[k] * w[j] * (-c * tau).exp() * exp_integral(c, span);
        }
    }
    tau.powf(2.0 * hurst) + 2.0 * hurst * hist
}

/// E[I(t)²] when the whole kernel is replaced by its SOE approximation.
pub fn second_moment_soe(soe: &SoeApprox, hurst: f64, t: f64) -> f64 {
    let (l, w) = (soe.nodes(), soe.weights());
    let mut acc = 0.0;
    for k in 0..l.len() {
        for j in 0..l.len() {
            acc += w[k] * w[j] * exp_integral(l[k] + l[j], t);
        }
    }
    2.0 * hurst * acc
}

/// Cov(I_s, I_t) = 2H ∫₀^min(s,t) (s−u)^(H−1/2) (t−u)^(H−1/2) du.
///
/// After v = (min − u)^(H+1/2) the integrand is bounded; composite
/// Gauss–Legendre on panels graded toward v = 0, doubling the order until two
/// successive values agree to 1e−12 relative.
pub fn exact_volterra_covariance(hurst: f64, s: f64, t: f64) -> Result<f64> {
    if !(s > 0.0 && t > 0.0) {
        return Err(Error::domain("covariance needs positive times"));
    }
    let (a, b) = (s.min(t), s.max(t));
    if a == b {
        return Ok(a.powf(2.0 * hurst));
    }
    let d = b - a;
    let p = hurst + 0.5;
    let upper = a.powf(p);
    let f = |v: f64| (d + v.powf(1.0 / p)).powf(hurst - 0.5);
    // below d^p the integrand changes on the scale of v itself
    let floor = upper.min(d.powf(p)) * 1e-8;
    let mut panels = vec![upper];
    while *panels.last().unwrap() > floor {
        let next = panels.last().unwrap() * 0.25;
        panels.push(next);
    }
    panels.push(0.0);
    let mut prev = f64::NAN;
    let mut order = 8;
    while order <= 512 {
        let rule = gauss_legendre(order);
        let total: f64 = panels.windows(2).map(|w| rule.integrate(w[1], w[0], f)).sum();
        let value = 2.0 * hurst / p * total;
        if (value - prev).abs() <= 1e-12 * value.abs() {
            return Ok(value);
        }
        prev = value;
        order *= 2;
    }
    Err(Error::numerical(format!("Volterra covariance at ({s}, {t}) did not converge")))
}

/// Cov(I_{t_i}, W_{t_j}) = √(2H)/(H+1/2)·[t_i^(H+1/2) − (t_i − min(t_i,t_j))^(H+1/2)].
pub fn exact_cross_covariance(hurst: f64, t_i: f64, t_j: f64) -> f64 {
    let p = hurst + 0.5;
    (2.0 * hurst).sqrt() / p * (t_i.powf(p) - (t_i - t_i.min(t_j)).powf(p))
}

/// n×n matrix Cov(I_{iτ}, I_{jτ}), i, j = 1…n.
///
/// Splitting the integral into unit cells of the rescaled grid gives
/// Cov = τ^(2H) Σ_{a=1}^{min} g(a, |i−j|) where
/// g(a, d) = 2H ∫₀¹ (a−1+x)^(H−1/2) (a−1+d+x)^(H−1/2) dx.
/// The a = 1 cell carries the x^(H−1/2) singularity and uses Gauss–Jacobi;
/// the rest are smooth and use Gauss–Legendre.
pub fn volterra_grid_covariance(hurst: f64, tau: f64, n: usize) -> Vec<f64> {
    const Q: usize = 24;
    let beta = hurst - 0.5;
    let two_h = 2.0 * hurst;
    let gl = gauss_legendre(Q);
    let xs: Vec<f64> = gl.nodes.iter().map(|y| 0.5 * (1.0 + y)).collect();
    let ws: Vec<f64> = gl.weights.iter().map(|w| 0.5 * w).collect();
    // pw[a][q] = (a−1+x_q)^β, a = 2…n (index a−2)
    let pw: Vec<f64> = (2..=n.max(1))
        .flat_map(|a| xs.iter().map(move |x| (a as f64 - 1.0 + x).powf(beta)))
        .collect();
    // ∫₀¹ x^β f(x) dx = 2^(−β−1) Σ w f((1+y)/2)
    let gj = gauss_jacobi(Q, 0.0, beta);
    let scale = 2f64.powf(-beta - 1.0);
    let first: Vec<f64> = (0..n)
        .map(|d| {
            if d == 0 {
                1.0
            } else {
                two_h
                    * scale
                    * gj.nodes
                        .iter()
                        .zip(&gj.weights)
                        .map(|(y, w)| w * (d as f64 + 0.5 * (1.0 + y)).powf(beta))
                        .sum::<f64>()
            }
        })
        .collect();
    let row = |a: usize| &pw[(a - 2) * Q..(a - 1) * Q];
    let scale_t = tau.powf(two_h);
    let mut cov = vec![0.0; n * n];
    for d in 0..n {
        // running sum over a for fixed lag d: entry (i, i+d) = Σ_{a≤i} g(a, d)
        let mut acc = 0.0;
        for i in 1..=n - d {
            let g = if i == 1 {
                first[d]
            } else {
                let (ra, rb) = (row(i), row(i + d));
                two_h * (0..Q).map(|q| ws[q] * ra[q] * rb[q]).sum::<f64>()
            };
            acc += g;
            let (r, c) = (i - 1, i - 1 + d);
            cov[r * n + c] = scale_t * acc;
            cov[c * n + r] = scale_t * acc;
        }
    }
    cov
}

/// 2n×2n covariance of (W_{t_1}, I_{t_1}, W_{t_2}, I_{t_2}, …).
pub fn joint_covariance(hurst: f64, tau: f64, n: usize) -> Vec<f64> {
    let ii = volterra_grid_covariance(hurst, tau, n);
    let dim = 2 * n;
    let mut m = vec![0.0; dim * dim];
    for i in 0..n {
        let ti = (i + 1) as f64 * tau;
        for j in 0..n {
            let tj = (j + 1) as f64 * tau;
            m[2 * i * dim + 2 * j] = ti.min(tj);
            m[(2 * i + 1) * dim + 2 * j + 1] = ii[i * n + j];
            let c = exact_cross_covariance(hurst, ti, tj);
            m[(2 * i + 1) * dim + 2 * j] = c;
            m[2 * j * dim + 2 * i + 1] = c;
        }
    }
    m
}

/// Per-model data that stays fixed across paths.
#[derive(Debug, Clone)]
pub struct PreparedModel {
    scheme: Scheme,
    params: ModelParams,
    cov: Option<StepCovariance>,
    /// OU rows of the step factor, transposed: rank × `padded`, zero padded.
    ou_factor: Vec<f64>,
    /// Factor rows of the Brownian increment and of the local integral.
    w_factor: Vec<f64>,
    loc_factor: Vec<f64>,
    /// Node count rounded up to a multiple of [`LANES`].
    padded: usize,
    /// e^(−λₖτ), zero padded.
    decay: Vec<f64>,
    /// √(2H) ωₖ, zero padded.
    scaled_weights: Vec<f64>,
    xi: Vec<f64>,
    /// η²/2 times the driver's second moment at each grid time.
    compensator: Vec<f64>,
    chol: Option<Vec<f64>>,
}

impl PreparedModel {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn covariance(&self) -> Option<&StepCovariance> {
        self.cov.as_ref()
    }

    /// Standard normals consumed per step from the driver stream.
    pub fn draws_per_step(&self) -> usize {
        self.cov.as_ref().map_or(2, |c| c.factor().rank())
    }
}

fn curve_on_grid(params: &ModelParams, schedule: &GridSchedule) -> Result<Vec<f64>> {
    let xi = (0..=schedule.n())
        .map(|i| params.xi0.eval(schedule.time(i)))
        .collect::<Result<Vec<f64>>>()?;
    if let Some(i) = xi.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::domain(format!(
            "forward variance is not positive at t={}",
            schedule.time(i)
        )));
    }
    Ok(xi)
}

/// Prepares an mSOE/SOE model with a freshly pivoted step factor, or the
/// Cholesky model (ignoring `soe`).
pub fn prepare(
    params: &ModelParams,
    schedule: &GridSchedule,
    soe: &SoeApprox,
    scheme: Scheme,
    opts: &SimOptions,
) -> Result<PreparedModel> {
    params.validate()?;
    match scheme {
        Scheme::Cholesky => prepare_cholesky(params, schedule, opts),
        _ => {
            let cov = build_covariance(soe, params.hurst, schedule.tau())?;
            prepare_soe_family(params, schedule, cov, scheme)
        }
    }
}

/// Like [`prepare`] for the SOE schemes, pivoting in a prescribed order so
/// that models at nearby parameters share their noise directions.
pub fn prepare_in_order(
    params: &ModelParams,
    schedule: &GridSchedule,
    soe: &SoeApprox,
    scheme: Scheme,
    order: &[usize],
) -> Result<PreparedModel> {
    params.validate()?;
    if scheme == Scheme::Cholesky {
        return Err(Error::domain("pivot order applies to the SOE schemes only"));
    }
    let cov = build_covariance_in_order(soe, params.hurst, schedule.tau(), order)?;
    prepare_soe_family(params, schedule, cov, scheme)
}

fn prepare_soe_family(
    params: &ModelParams,
    schedule: &GridSchedule,
    cov: StepCovariance,
    scheme: Scheme,
) -> Result<PreparedModel> {
    let soe = cov.soe();
    let h = params.hurst;
    let tau = schedule.tau();
    let xi = curve_on_grid(params, schedule)?;
    let half_eta2 = 0.5 * params.eta * params.eta;
    let compensator = (0..=schedule.n())
        .map(|i| {
            let t = schedule.time(i);
            half_eta2
                * match (scheme, i) {
                    (_, 0) => 0.0,
                    (Scheme::Msoe, _) => second_moment_approx(soe, h, tau, t),
                    _ => second_moment_soe(soe, h, t),
                }
        })
        .collect();
    let f = cov.factor();
    let r = f.rank();
    let nodes = soe.len();
    let padded = nodes.div_ceil(LANES) * LANES;
    let mut ou_factor = vec![0.0; r * padded];
    for k in 0..nodes {
        for j in 0..r {
            ou_factor[j * padded + k] = f.entry(k + 1, j);
        }
    }
    let pad = |v: Vec<f64>| {
        let mut v = v;
        v.resize(padded, 0.0);
        v
    };
    Ok(PreparedModel {
        scheme,
        params: params.clone(),
        w_factor: (0..r).map(|j| f.entry(0, j)).collect(),
        loc_factor: (0..r).map(|j| f.entry(nodes + 1, j)).collect(),
        ou_factor,
        padded,
        decay: pad(soe.nodes().iter().map(|l| (-l * tau).exp()).collect()),
        scaled_weights: pad(soe.weights().iter().map(|w| (2.0 * h).sqrt() * w).collect()),
        cov: Some(cov),
        xi,
        compensator,
        chol: None,
    })
}

fn prepare_cholesky(params: &ModelParams, schedule: &GridSchedule, opts: &SimOptions) -> Result<PreparedModel> {
    let n = schedule.n();
    if n > opts.cholesky_cap {
        return Err(Error::domain(format!(
            "Cholesky scheme capped at n={} steps, requested {n}",
            opts.cholesky_cap
        )));
    }
    let h = params.hurst;
    let joint = joint_covariance(h, schedule.tau(), n);
    let chol = cholesky(&joint, 2 * n).map_err(|e| e.context("joint (W, I) covariance"))?;
    let half_eta2 = 0.5 * params.eta * params.eta;
    Ok(PreparedModel {
        scheme: Scheme::Cholesky,
        params: params.clone(),
        cov: None,
        ou_factor: Vec::new(),
        w_factor: Vec::new(),
        loc_factor: Vec::new(),
        padded: 0,
        decay: Vec::new(),
        scaled_weights: Vec::new(),
        xi: curve_on_grid(params, schedule)?,
        compensator: (0..=n)
            .map(|i| half_eta2 * schedule.time(i).powf(2.0 * h))
            .collect(),
        chol: Some(chol),
    })
}

/// Simulates `m` paths of one model with default options.
pub fn simulate_paths(
    params: &ModelParams,
    schedule: &GridSchedule,
    soe: &SoeApprox,
    scheme: Scheme,
    m: usize,
    seed: u64,
) -> Result<PathBatch> {
    simulate_paths_with(params, schedule, soe, scheme, m, seed, &SimOptions::default())
}

pub fn simulate_paths_with(
    params: &ModelParams,
    schedule: &GridSchedule,
    soe: &SoeApprox,
    scheme: Scheme,
    m: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<PathBatch> {
    let model = prepare(params, schedule, soe, scheme, opts)?;
    let mut out = simulate_prepared(std::slice::from_ref(&model), schedule, m, seed, opts)?;
    Ok(out.pop().expect("one model in, one batch out"))
}

/// Per-path results for one chunk, path-major.
struct ChunkOut {
    terminal: Vec<f64>,
    min: Vec<f64>,
    max: Vec<f64>,
    variance: Vec<f64>,
    paths: Vec<[f64; 2]>,
}

impl ChunkOut {
    fn with_capacity(len: usize, maturities: usize, recorded: usize) -> Self {
        ChunkOut {
            terminal: Vec::with_capacity(len * maturities),
            min: Vec::with_capacity(len * maturities),
            max: Vec::with_capacity(len * maturities),
            variance: Vec::with_capacity(len * recorded),
            paths: Vec::new(),
        }
    }
}

const EVENT_MATURITY: u8 = 1;
const EVENT_VARIANCE: u8 = 2;

/// Which grid indices need any recording, computed once per simulation.
struct Events<'a> {
    flags: Vec<u8>,
    opts: &'a SimOptions,
}

impl<'a> Events<'a> {
    fn new(schedule: &GridSchedule, opts: &'a SimOptions) -> Self {
        let mut flags = vec![0u8; schedule.n() + 1];
        for &k in schedule.maturity_steps() {
            flags[k] |= EVENT_MATURITY;
        }
        for &k in &opts.record_variance {
            flags[k] |= EVENT_VARIANCE;
        }
        Events { flags, opts }
    }
}

/// Tracks log S along one path and records what the batch keeps. Extrema
/// are kept on the log scale and exponentiated when stored.
struct PathRecorder<'a> {
    events: &'a Events<'a>,
    lo: f64,
    hi: f64,
}

impl<'a> PathRecorder<'a> {
    fn start(events: &'a Events<'a>, log_s0: f64, v0: f64, out: &mut ChunkOut) -> Self {
        let mut rec = PathRecorder {
            events,
            lo: log_s0,
            hi: log_s0,
        };
        rec.observe(0, log_s0, v0, out);
        rec
    }

    #[inline(always)]
    fn observe(&mut self, step: usize, log_s: f64, v: f64, out: &mut ChunkOut) {
        self.lo = self.lo.min(log_s);
        self.hi = self.hi.max(log_s);
        let flags = self.events.flags[step];
        if flags == 0 && !self.events.opts.store_paths {
            return;
        }
        self.record(step, flags, log_s, v, out);
    }

    #[cold]
    fn record(&mut self, step: usize, flags: u8, log_s: f64, v: f64, out: &mut ChunkOut) {
        if self.events.opts.store_paths {
            out.paths.push([log_s.exp(), v]);
        }
        if flags & EVENT_VARIANCE != 0 {
            for &k in &self.events.opts.record_variance {
                if k == step {
                    out.variance.push(v);
                }
            }
        }
        if flags & EVENT_MATURITY != 0 {
            out.terminal.push(log_s.exp());
            out.min.push(self.lo.exp());
            out.max.push(self.hi.exp());
        }
    }
}

fn overflow(path: usize, step: usize, schedule: &GridSchedule, expo: f64) -> Error {
    Error::numerical(format!(
        "variance exponent {expo:.3e} exceeds {EXPONENT_GUARD} on path {path} at t={}",
        schedule.time(step)
    ))
}

/// Simulates several prepared models on common random numbers: every model
/// consumes the same driver and orthogonal draws on each path.
///
/// Models must share a scheme family and, for the SOE schemes, the number
/// of draws per step.
pub fn simulate_prepared(
    models: &[PreparedModel],
    schedule: &GridSchedule,
    m: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<Vec<PathBatch>> {
    if m == 0 {
        return Err(Error::domain("path count must be positive"));
    }
    let Some(first) = models.first() else {
        return Ok(Vec::new());
    };
    let cholesky = first.scheme == Scheme::Cholesky;
    if models
        .iter()
        .any(|x| (x.scheme == Scheme::Cholesky) != cholesky || x.draws_per_step() != first.draws_per_step())
    {
        return Err(Error::domain("models simulated together must consume identical draws"));
    }
    if let Some(k) = opts.record_variance.iter().find(|k| **k > schedule.n()) {
        return Err(Error::domain(format!("recorded step {k} beyond the grid")));
    }
    let chunk = if cholesky { CHOL_CHUNK } else { CHUNK };
    let chunks: Vec<(usize, usize)> = (0..m.div_ceil(chunk))
        .map(|c| (c * chunk, chunk.min(m - c * chunk)))
        .collect();
    let results: Vec<Vec<ChunkOut>> = chunks
        .par_iter()
        .map(|&(start, len)| {
            if cholesky {
                models
                    .iter()
                    .map(|model| cholesky_chunk(model, schedule, opts, seed, start, len))
                    .collect()
            } else {
                soe_chunk(models, schedule, opts, seed, start, len)
            }
        })
        .collect::<Result<_>>()?;

    let n_mat = schedule.maturities().len();
    let n_rec = opts.record_variance.len();
    let mut batches = Vec::with_capacity(models.len());
    for (k, model) in models.iter().enumerate() {
        let mut terminal = vec![Vec::with_capacity(m); n_mat];
        let mut lo = vec![Vec::with_capacity(m); n_mat];
        let mut hi = vec![Vec::with_capacity(m); n_mat];
        let mut variance = vec![Vec::with_capacity(m); n_rec];
        let mut paths = opts.store_paths.then(Vec::new);
        for chunk in &results {
            let c = &chunk[k];
            for p in 0..c.terminal.len() / n_mat {
                for j in 0..n_mat {
                    terminal[j].push(c.terminal[p * n_mat + j]);
                    lo[j].push(c.min[p * n_mat + j]);
                    hi[j].push(c.max[p * n_mat + j]);
                }
                for (r, v) in variance.iter_mut().enumerate() {
                    v.push(c.variance[p * n_rec + r]);
                }
            }
            if let Some(paths) = paths.as_mut() {
                paths.extend_from_slice(&c.paths);
            }
        }
        batches.push(PathBatch {
            scheme: model.scheme,
            seed,
            maturities: schedule.maturities().to_vec(),
            terminal,
            running_min: lo,
            running_max: hi,
            variance_steps: opts.record_variance.clone(),
            variance,
            paths,
        });
    }
    Ok(batches)
}

fn soe_chunk(
    models: &[PreparedModel],
    schedule: &GridSchedule,
    opts: &SimOptions,
    seed: u64,
    start: usize,
    len: usize,
) -> Result<Vec<ChunkOut>> {
    let n = schedule.n();
    let tau = schedule.tau();
    let sqrt_tau = tau.sqrt();
    let r = models[0].draws_per_step();
    let n_mat = schedule.maturities().len();
    let mut outs: Vec<ChunkOut> = models
        .iter()
        .map(|_| ChunkOut::with_capacity(len, n_mat, opts.record_variance.len()))
        .collect();
    let events = Events::new(schedule, opts);
    let mut dz = vec![0.0; n * r];
    let mut dperp = vec![0.0; n];
    let mut ou = vec![0.0; models.iter().map(|x| x.padded).max().unwrap_or(0)];
    let mut dw = vec![0.0; n];
    let mut drive = vec![0.0; n];
    let groups = driver_groups(models);
    for path in start..start + len {
        RngStream::for_path(seed, TAG_DRIVER, path as u64).normals().fill(&mut dz);
        RngStream::for_path(seed, TAG_ORTHOGONAL, path as u64).normals().fill(&mut dperp);
        for group in &groups {
            let lead = &models[group[0]];
            let ou = &mut ou[..lead.padded];
            ou.fill(0.0);
            run_driver(lead, r, &dz, ou, &mut dw, &mut drive);
            for &k in group {
                let model = &models[k];
                let out = &mut outs[k];
                let p = &model.params;
                let (rho, rho_bar) = (p.rho, (1.0 - p.rho * p.rho).sqrt());
                let mut log_s = p.s0.ln();
                let mut v = model.xi[0];
                let mut rec = PathRecorder::start(&events, log_s, v, out);
                for i in 0..n {
                    log_s += (p.r - 0.5 * v) * tau + v.sqrt() * (rho * dw[i] + rho_bar * sqrt_tau * dperp[i]);
                    let expo = p.eta * drive[i] - model.compensator[i + 1];
                    if expo > EXPONENT_GUARD {
                        return Err(overflow(path, i + 1, schedule, expo));
                    }
                    v = model.xi[i + 1] * expo.exp();
                    rec.observe(i + 1, log_s, v, out);
                }
            }
        }
    }
    Ok(outs)
}

/// Partitions models into groups whose Volterra drivers coincide path by
/// path (same scheme, kernel and step factor), so that the driver is
/// computed once per group.
fn driver_groups(models: &[PreparedModel]) -> Vec<Vec<usize>> {
    let same = |a: &PreparedModel, b: &PreparedModel| {
        a.scheme == b.scheme
            && a.decay == b.decay
            && a.scaled_weights == b.scaled_weights
            && a.ou_factor == b.ou_factor
            && a.w_factor == b.w_factor
            && a.loc_factor == b.loc_factor
    };
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (k, model) in models.iter().enumerate() {
        match groups.iter_mut().find(|g| same(&models[g[0]], model)) {
            Some(g) => g.push(k),
            None => groups.push(vec![k]),
        }
    }
    groups
}

/// Width of the blocks the node loop is split into.
const LANES: usize = 8;

/// Brownian increments and Volterra driver values of one path.
fn run_driver(model: &PreparedModel, r: usize, dz: &[f64], ou: &mut [f64], dw: &mut [f64], drive: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { run_driver_avx2(model, r, dz, ou, dw, drive) };
    }
    match model.scheme {
        Scheme::Msoe => driver_kernel::<true>(model, r, dz, ou, dw, drive),
        _ => driver_kernel::<false>(model, r, dz, ou, dw, drive),
    }
}

/// Same code compiled for wider vectors. No fused multiply-add is enabled,
/// so results match the baseline build bit for bit.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn run_driver_avx2(model: &PreparedModel, r: usize, dz: &[f64], ou: &mut [f64], dw: &mut [f64], drive: &mut [f64]) {
    match model.scheme {
        Scheme::Msoe => driver_kernel::<true>(model, r, dz, ou, dw, drive),
        _ => driver_kernel::<false>(model, r, dz, ou, dw, drive),
    }
}

/// mSOE (`MSOE = true`) or SOE recursion for the driver.
#[inline(always)]
fn driver_kernel<const MSOE: bool>(
    model: &PreparedModel,
    r: usize,
    dz: &[f64],
    ou: &mut [f64],
    dw: &mut [f64],
    drive: &mut [f64],
) {
    let padded = model.padded;
    for (i, zs) in dz.chunks_exact(r).enumerate() {
        let mut w = 0.0;
        let mut local = 0.0;
        for j in 0..r {
            w += zs[j] * model.w_factor[j];
            local += zs[j] * model.loc_factor[j];
        }
        let mut h = [0.0; LANES];
        for b in (0..padded).step_by(LANES) {
            let mut acc = [0.0; LANES];
            for (j, zj) in zs.iter().enumerate() {
                let col: &[f64; LANES] = model.ou_factor[j * padded + b..j * padded + b + LANES].try_into().unwrap();
                for l in 0..LANES {
                    acc[l] += zj * col[l];
                }
            }
            let o: &mut [f64; LANES] = (&mut ou[b..b + LANES]).try_into().unwrap();
            let d: &[f64; LANES] = model.decay[b..b + LANES].try_into().unwrap();
            let c: &[f64; LANES] = model.scaled_weights[b..b + LANES].try_into().unwrap();
            for l in 0..LANES {
                if MSOE {
                    // history decays over one step before the new increment joins it
                    let decayed = d[l] * o[l];
                    h[l] += c[l] * decayed;
                    o[l] = decayed + acc[l];
                } else {
                    o[l] = d[l] * o[l] + acc[l];
                    h[l] += c[l] * o[l];
                }
            }
        }
        let hist = ((h[0] + h[1]) + (h[2] + h[3])) + ((h[4] + h[5]) + (h[6] + h[7]));
        dw[i] = w;
        drive[i] = if MSOE { hist + local } else { hist };
    }
}

fn cholesky_chunk(
    model: &PreparedModel,
    schedule: &GridSchedule,
    opts: &SimOptions,
    seed: u64,
    start: usize,
    len: usize,
) -> Result<ChunkOut> {
    let n = schedule.n();
    let dim = 2 * n;
    let tau = schedule.tau();
    let sqrt_tau = tau.sqrt();
    let l = model.chol.as_ref().expect("prepared Cholesky model");
    let mut z = vec![0.0; len * dim];
    for (k, row) in z.chunks_exact_mut(dim).enumerate() {
        RngStream::for_path(seed, TAG_DRIVER, (start + k) as u64).normals().fill(row);
    }
    let mut x = vec![0.0; len * dim];
    // X[:, I] = Z[:, ..end(I)] · L[I, ..end(I)]ᵀ, one block of rows of L at a time
    for b0 in (0..dim).step_by(CHOL_BLOCK) {
        let b1 = (b0 + CHOL_BLOCK).min(dim);
        unsafe {
            matrixmultiply::dgemm(
                len,
                b1,
                b1 - b0,
                1.0,
                z.as_ptr(),
                dim as isize,
                1,
                l.as_ptr().add(b0 * dim),
                1,
                dim as isize,
                0.0,
                x.as_mut_ptr().add(b0),
                dim as isize,
                1,
            );
        }
    }
    let p = &model.params;
    let (rho, rho_bar) = (p.rho, (1.0 - p.rho * p.rho).sqrt());
    let mut out = ChunkOut::with_capacity(len, schedule.maturities().len(), opts.record_variance.len());
    let mut dperp = vec![0.0; n];
    let events = Events::new(schedule, opts);
    for (k, row) in x.chunks_exact(dim).enumerate() {
        let path = start + k;
        RngStream::for_path(seed, TAG_ORTHOGONAL, path as u64).normals().fill(&mut dperp);
        let mut log_s = p.s0.ln();
        let mut v = model.xi[0];
        let mut w_prev = 0.0;
        let mut rec = PathRecorder::start(&events, log_s, v, &mut out);
        for i in 0..n {
            let (w, vol) = (row[2 * i], row[2 * i + 1]);
            let sv = v.sqrt();
            log_s += (p.r - 0.5 * v) * tau + sv * (rho * (w - w_prev) + rho_bar * sqrt_tau * dperp[i]);
            w_prev = w;
            let expo = p.eta * vol - model.compensator[i + 1];
            if expo > EXPONENT_GUARD {
                return Err(overflow(path, i + 1, schedule, expo));
            }
            v = model.xi[i + 1] * expo.exp();
            rec.observe(i + 1, log_s, v, &mut out);
        }
    }
    Ok(out)
}
