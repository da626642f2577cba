//! Distribution-matching calibration: Adam on frozen-noise finite-difference
//! gradients, stopping rules, and loss landscapes.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::forward_variance::{constrain, from_natural, natural_bounds, natural_vector, parameter_names, unconstrain};
use crate::model::ModelParams;
use crate::pricing::{price, Contract};
use crate::rng::derive_seed;
use crate::simulate::{prepare, prepare_in_order, simulate_prepared, GridSchedule, PathBatch, Scheme, SimOptions};
use crate::soe_kernel::{generate_soe_with_layout, soe_from_layout, sup_error, SoeApprox, SoeLayout, DEFAULT_GRID_POINTS};
use crate::wasserstein::{mse_loss, w1_loss_presorted, SampleSet};

pub const DEFAULT_FD_STEP: f64 = 1e-3;
pub const DEFAULT_REGEN_THRESHOLD: f64 = 1e-4;
pub const DEFAULT_LANDSCAPE_GRID: usize = 25;

/// Seed tag for the market batch, kept apart from the per-iteration seeds.
const MARKET_TAG: u64 = u64::MAX;

/// Probe models simulated in one pass. Bounds memory for large parameter sets.
const PROBE_GROUP: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    W1,
    Mse,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::W1 => "w1",
            LossKind::Mse => "mse",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w1" => Ok(LossKind::W1),
            "mse" => Ok(LossKind::Mse),
            _ => Err(Error::domain(format!("unknown loss kind '{s}' (expected w1 or mse)"))),
        }
    }
}

/// Piecewise-constant learning rate. `iteration` counts from 1.
pub fn lr_schedule(kind: &str, iteration: usize) -> Result<f64> {
    Ok(LrSchedule::Default(kind.parse()?).rate(iteration))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    /// 0.001 then 0.0002 after 800 iterations for W1; 0.003 then 0.001 after 20 for MSE.
    Default(LossKind),
    Constant(f64),
}

impl LrSchedule {
    pub fn rate(&self, iteration: usize) -> f64 {
        match *self {
            LrSchedule::Default(LossKind::W1) => {
                if iteration <= 800 {
                    1e-3
                } else {
                    2e-4
                }
            }
            LrSchedule::Default(LossKind::Mse) => {
                if iteration <= 20 {
                    3e-3
                } else {
                    1e-3
                }
            }
            LrSchedule::Constant(r) => r,
        }
    }
}

/// Assembles central differences from probe losses ordered
/// `[+h e_0, −h e_0, +h e_1, …]`.
fn assemble_gradient(losses: &[f64], steps: &[f64], names: Option<&[String]>) -> Result<Vec<f64>> {
    debug_assert_eq!(losses.len(), 2 * steps.len());
    steps
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let (up, down) = (losses[2 * i], losses[2 * i + 1]);
            if !(up.is_finite() && down.is_finite()) {
                let label = names.map_or_else(|| i.to_string(), |n| format!("{i} ({})", n[i]));
                return Err(Error::numerical(format!(
                    "non-finite loss at probe of component {label}: +h gives {up}, -h gives {down}"
                )));
            }
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

fn check_steps(dim: usize, steps: &[f64]) -> Result<()> {
    if steps.len() != dim {
        return Err(Error::domain(format!("{} step sizes for {dim} parameters", steps.len())));
    }
    if let Some(h) = steps.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(Error::domain(format!("step sizes must be positive, got {h}")));
    }
    Ok(())
}

/// Central finite-difference gradient. The evaluator is responsible for
/// using identical random draws at every probe.
pub fn fd_gradient<F>(mut loss: F, u: &[f64], steps: &[f64]) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    check_steps(u.len(), steps)?;
    let mut losses = Vec::with_capacity(2 * u.len());
    for (i, h) in steps.iter().enumerate() {
        for sign in [1.0, -1.0] {
            let mut probe = u.to_vec();
            probe[i] += sign * h;
            losses.push(loss(&probe)?);
        }
    }
    assemble_gradient(&losses, steps, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64], rate: f64) -> Result<()> {
    if params.len() != state.m.len() || grad.len() != state.m.len() {
        return Err(Error::domain(format!(
            "dimension mismatch: state {}, parameters {}, gradient {}",
            state.m.len(),
            params.len(),
            grad.len()
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::numerical(format!("non-finite gradient component {i}: {}", grad[i])));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params[i] -= rate * mhat / (vhat.sqrt() + state.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub eps_stop: f64,
    pub patience: usize,
    pub delta_min: f64,
    pub max_iters: usize,
}

impl StopRule {
    pub fn defaults(kind: LossKind) -> Self {
        match kind {
            LossKind::W1 => StopRule {
                eps_stop: 1e-4,
                patience: 80,
                delta_min: 1e-5,
                max_iters: 5000,
            },
            LossKind::Mse => StopRule {
                eps_stop: 1e-8,
                patience: 40,
                delta_min: 1e-9,
                max_iters: 5000,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_stop >= 0.0) {
            return Err(Error::domain(format!("tolerance must be nonnegative, got {}", self.eps_stop)));
        }
        if self.patience == 0 {
            return Err(Error::domain("patience must be at least 1"));
        }
        if !(self.delta_min > 0.0) {
            return Err(Error::domain(format!("minimum improvement must be positive, got {}", self.delta_min)));
        }
        if self.max_iters == 0 {
            return Err(Error::domain("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    Patience,
    MaxIters,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Tolerance => "tolerance",
            StopReason::Patience => "patience",
            StopReason::MaxIters => "max-iters",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop(StopReason),
}

/// Tolerance first, then patience, then the iteration cap.
///
/// An iteration improves on the best only when it beats it by at least
/// `delta_min`; smaller gains leave the best (and its index) untouched.
pub fn check_stop(history: &[f64], rule: &StopRule) -> StopDecision {
    let Some(&last) = history.last() else {
        return StopDecision::Continue;
    };
    if last <= rule.eps_stop {
        return StopDecision::Stop(StopReason::Tolerance);
    }
    let mut best = history[0];
    let mut best_at = 0;
    for (i, &x) in history.iter().enumerate().skip(1) {
        if x <= best - rule.delta_min {
            best = x;
            best_at = i;
        }
    }
    if history.len() - 1 - best_at >= rule.patience {
        return StopDecision::Stop(StopReason::Patience);
    }
    if history.len() >= rule.max_iters {
        return StopDecision::Stop(StopReason::MaxIters);
    }
    StopDecision::Continue
}

/// Observed data the model is fitted to.
#[derive(Debug, Clone)]
pub enum Market {
    /// Terminal price samples per maturity, each of the model batch size.
    Samples(Vec<SampleSet>),
    Prices { contracts: Vec<Contract>, prices: Vec<f64> },
}

/// Where Adam moves: directly on the parameters with box projection, or on
/// the unconstrained transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSpace {
    Natural,
    Unconstrained,
}

impl FromStr for ParamSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "natural" => Ok(ParamSpace::Natural),
            "unconstrained" => Ok(ParamSpace::Unconstrained),
            _ => Err(Error::domain(format!("unknown parameter space '{s}' (expected natural or unconstrained)"))),
        }
    }
}

impl fmt::Display for ParamSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamSpace::Natural => "natural",
            ParamSpace::Unconstrained => "unconstrained",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CalibConfig {
    pub loss: LossKind,
    pub market: Market,
    /// Starting point; also supplies the curve family, s₀ and r.
    pub init: ModelParams,
    pub truth: Option<ModelParams>,
    pub schedule: GridSchedule,
    pub m: usize,
    pub kernel_eps: f64,
    pub stop: StopRule,
    pub lr: LrSchedule,
    pub seed: u64,
    /// One step per parameter; empty means [`DEFAULT_FD_STEP`] everywhere.
    pub fd_steps: Vec<f64>,
    pub space: ParamSpace,
    pub regen_threshold: f64,
}

impl CalibConfig {
    /// Default schedule, stopping rule and FD steps for the given loss around `init`.
    pub fn new(loss: LossKind, market: Market, init: ModelParams, schedule: GridSchedule, m: usize, kernel_eps: f64, seed: u64) -> Self {
        CalibConfig {
            loss,
            market,
            init,
            truth: None,
            schedule,
            m,
            kernel_eps,
            stop: StopRule::defaults(loss),
            lr: LrSchedule::Default(loss),
            seed,
            fd_steps: Vec::new(),
            space: ParamSpace::Natural,
            regen_threshold: DEFAULT_REGEN_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::domain(format!("batch size must be at least 2, got {}", self.m)));
        }
        if !(self.kernel_eps > 0.0) {
            return Err(Error::domain(format!("kernel eps must be positive, got {}", self.kernel_eps)));
        }
        if !(self.regen_threshold >= 0.0) {
            return Err(Error::domain("regeneration threshold must be nonnegative"));
        }
        self.stop.validate()?;
        self.init.validate()?;
        if let Some(t) = &self.truth {
            t.validate()?;
            if natural_vector(t).len() != natural_vector(&self.init).len() {
                return Err(Error::domain("truth and initial guess have different parameter counts"));
            }
        }
        if !self.fd_steps.is_empty() {
            check_steps(natural_vector(&self.init).len(), &self.fd_steps)?;
        }
        let maturities = self.schedule.maturities();
        match (&self.market, self.loss) {
            (Market::Samples(sets), LossKind::W1) => {
                if sets.len() != maturities.len() || sets.iter().zip(maturities).any(|(s, t)| s.maturity != *t) {
                    return Err(Error::domain("market samples must cover exactly the schedule maturities, in order"));
                }
                if let Some(s) = sets.iter().find(|s| s.values.len() != self.m) {
                    return Err(Error::domain(format!(
                        "market sample at T={} has {} values, batch size is {}",
                        s.maturity,
                        s.values.len(),
                        self.m
                    )));
                }
            }
            (Market::Prices { contracts, prices }, LossKind::Mse) => {
                if contracts.is_empty() || contracts.len() != prices.len() {
                    return Err(Error::domain("market prices must pair one-to-one with a nonempty contract list"));
                }
                if let Some(c) = contracts.iter().find(|c| !maturities.contains(&c.maturity)) {
                    return Err(Error::domain(format!("contract maturity {} not on the schedule", c.maturity)));
                }
            }
            (Market::Samples(_), LossKind::Mse) => return Err(Error::domain("mse loss needs market prices")),
            (Market::Prices { .. }, LossKind::W1) => return Err(Error::domain("w1 loss needs market samples")),
        }
        Ok(())
    }

    fn steps(&self, dim: usize) -> Vec<f64> {
        if self.fd_steps.is_empty() {
            vec![DEFAULT_FD_STEP; dim]
        } else {
            self.fd_steps.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    /// Counts from 1.
    pub iter: usize,
    pub loss: f64,
    pub lr: f64,
    /// Kernel node count in use.
    pub nodes: usize,
    /// Natural-unit parameters at which the loss was evaluated.
    pub params: Vec<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct CalibRun {
    pub names: Vec<String>,
    pub records: Vec<IterRecord>,
    pub stop: StopReason,
    pub theta: ModelParams,
    pub truth: Option<ModelParams>,
    pub loss: LossKind,
}

impl CalibRun {
    pub fn initial_loss(&self) -> f64 {
        self.records[0].loss
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().expect("at least one iteration").loss
    }

    /// |θ* − θ_true| / |θ_true| per parameter, when a truth is known.
    pub fn ape(&self) -> Option<Vec<f64>> {
        let truth = natural_vector(self.truth.as_ref()?);
        Some(
            natural_vector(&self.theta)
                .iter()
                .zip(&truth)
                .map(|(a, b)| (a - b).abs() / b.abs())
                .collect(),
        )
    }

    pub fn trajectory_csv(&self) -> String {
        let mut out = format!("iter,loss,lr,N,{}\n", self.names.join(","));
        for r in &self.records {
            out.push_str(&format!("{},{:e},{},{}", r.iter, r.loss, r.lr, r.nodes));
            for p in &r.params {
                out.push_str(&format!(",{p:e}"));
            }
            out.push('\n');
        }
        out
    }

    /// `key = value` lines: stop reason, losses, θ*, APE when a truth is known.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("loss_kind = {}\n", self.loss));
        out.push_str(&format!("stop_reason = {}\n", self.stop));
        out.push_str(&format!("iterations = {}\n", self.records.len()));
        out.push_str(&format!("initial_loss = {:e}\n", self.initial_loss()));
        out.push_str(&format!("final_loss = {:e}\n", self.final_loss()));
        for (n, v) in self.names.iter().zip(natural_vector(&self.theta)) {
            out.push_str(&format!("theta_{n} = {v:e}\n"));
        }
        if let (Some(truth), Some(ape)) = (&self.truth, self.ape()) {
            for ((n, v), a) in self.names.iter().zip(natural_vector(truth)).zip(ape) {
                out.push_str(&format!("truth_{n} = {v:e}\n"));
                out.push_str(&format!("ape_{n} = {a:e}\n"));
            }
        }
        out
    }
}

/// Kernel in use by the optimizer: a node layout certified at `hurst`.
#[derive(Debug, Clone)]
struct KernelState {
    layout: SoeLayout,
    hurst: f64,
}

/// Reuses the layout while H stays within the threshold and the certificate
/// still holds at the new H; otherwise generates a fresh one.
fn refresh_kernel(state: Option<KernelState>, hurst: f64, cfg: &CalibConfig) -> Result<(KernelState, SoeApprox)> {
    let (tau, horizon) = (cfg.schedule.tau(), cfg.schedule.horizon());
    if let Some(k) = state {
        if (hurst - k.hurst).abs() <= cfg.regen_threshold {
            let soe = soe_from_layout(&k.layout, hurst, tau, horizon)?;
            if sup_error(&soe, hurst, tau, horizon, DEFAULT_GRID_POINTS) <= cfg.kernel_eps {
                return Ok((k, soe));
            }
        }
    }
    let (_, layout) = generate_soe_with_layout(hurst, tau, horizon, cfg.kernel_eps)?;
    let soe = soe_from_layout(&layout, hurst, tau, horizon)?;
    Ok((KernelState { layout, hurst }, soe))
}

fn batch_samples(batch: &PathBatch) -> Result<Vec<SampleSet>> {
    batch
        .maturities()
        .iter()
        .map(|&t| SampleSet::new(t, batch.terminal(t)?.to_vec()))
        .collect()
}

fn batch_prices(batch: &PathBatch, contracts: &[Contract], r: f64) -> Result<Vec<f64>> {
    contracts.iter().map(|c| Ok(price(batch, c, r)?.mean)).collect()
}

/// Market data prepared once per run.
enum Target {
    Samples(Vec<SampleSet>),
    Prices { contracts: Vec<Contract>, prices: Vec<f64> },
}

impl Target {
    fn new(market: &Market) -> Self {
        match market {
            Market::Samples(sets) => Target::Samples(sets.iter().map(SampleSet::sorted).collect()),
            Market::Prices { contracts, prices } => Target::Prices {
                contracts: contracts.clone(),
                prices: prices.clone(),
            },
        }
    }

    fn loss(&self, batch: &PathBatch, r: f64) -> Result<f64> {
        match self {
            Target::Samples(sorted) => w1_loss_presorted(&batch_samples(batch)?, sorted),
            Target::Prices { contracts, prices } => mse_loss(&batch_prices(batch, contracts, r)?, prices),
        }
    }
}

/// Losses of `points` on common noise. The first point is pivoted freshly
/// and the others reuse its pivot order so that all share noise directions.
fn evaluate_points(points: &[ModelParams], layout: &SoeLayout, cfg: &CalibConfig, target: &Target, seed: u64) -> Result<Vec<f64>> {
    let (tau, horizon) = (cfg.schedule.tau(), cfg.schedule.horizon());
    let opts = SimOptions::default();
    let soe_at = |h: f64| soe_from_layout(layout, h, tau, horizon);
    let base = prepare(&points[0], &cfg.schedule, &soe_at(points[0].hurst)?, Scheme::Msoe, &opts)?;
    let order = base.covariance().expect("SOE-family model").factor().order().to_vec();
    let mut losses = Vec::with_capacity(points.len());
    let mut pending = vec![base];
    let mut rest = points[1..].iter();
    loop {
        for p in rest.by_ref() {
            pending.push(prepare_in_order(p, &cfg.schedule, &soe_at(p.hurst)?, Scheme::Msoe, &order)?);
            if pending.len() == PROBE_GROUP {
                break;
            }
        }
        if pending.is_empty() {
            break;
        }
        for batch in simulate_prepared(&pending, &cfg.schedule, cfg.m, seed, &opts)? {
            losses.push(target.loss(&batch, points[0].r)?);
        }
        pending.clear();
    }
    Ok(losses)
}

/// Runs the optimizer until a stopping rule fires.
pub fn calibrate(cfg: &CalibConfig) -> Result<CalibRun> {
    calibrate_with(cfg, |_| {})
}

/// [`calibrate`] with a callback after every iteration (progress reporting).
pub fn calibrate_with<F: FnMut(&IterRecord)>(cfg: &CalibConfig, mut on_iter: F) -> Result<CalibRun> {
    cfg.validate()?;
    let template = &cfg.init;
    let names = parameter_names(template);
    let dim = names.len();
    let steps = cfg.steps(dim);
    let bounds = natural_bounds(template);
    let target = Target::new(&cfg.market);

    let to_params = |x: &[f64]| match cfg.space {
        ParamSpace::Natural => from_natural(template, x),
        ParamSpace::Unconstrained => constrain(template, x),
    };
    let mut x = match cfg.space {
        ParamSpace::Natural => natural_vector(template),
        ParamSpace::Unconstrained => unconstrain(template)?,
    };
    if cfg.space == ParamSpace::Natural {
        project(&mut x, &bounds);
    }

    let mut adam = AdamState::new(dim);
    let mut kernel: Option<KernelState> = None;
    let mut records: Vec<IterRecord> = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    let mut iter = 0;
    let stop = loop {
        iter += 1;
        let start = Instant::now();
        let ctx = |e: Error| e.context(format!("iteration {iter}"));

        let params = to_params(&x).map_err(ctx)?;
        let (k, _) = refresh_kernel(kernel.take(), params.hurst, cfg).map_err(ctx)?;
        let nodes = k.layout.node_count();

        // Probes: in natural units the centre is pulled inside the box so
        // that both sides stay admissible.
        let centre: Vec<f64> = match cfg.space {
            ParamSpace::Natural => x
                .iter()
                .zip(&bounds)
                .zip(&steps)
                .map(|((v, (lo, hi)), h)| if hi - lo > 2.0 * h { v.clamp(lo + h, hi - h) } else { *v })
                .collect(),
            ParamSpace::Unconstrained => x.clone(),
        };
        let mut points = vec![params.clone()];
        for (i, h) in steps.iter().enumerate() {
            for sign in [1.0, -1.0] {
                let mut probe = centre.clone();
                probe[i] += sign * h;
                points.push(to_params(&probe).map_err(ctx)?);
            }
        }
        let seed = derive_seed(cfg.seed, iter as u64);
        let losses = evaluate_points(&points, &k.layout, cfg, &target, seed).map_err(ctx)?;
        kernel = Some(k);
        let loss = losses[0];
        if !loss.is_finite() {
            return Err(ctx(Error::numerical(format!("non-finite loss {loss}"))));
        }
        let lr = cfg.lr.rate(iter);
        let record = IterRecord {
            iter,
            loss,
            lr,
            nodes,
            params: natural_vector(&params),
            seconds: start.elapsed().as_secs_f64(),
        };
        on_iter(&record);
        records.push(record);
        history.push(loss);
        if let StopDecision::Stop(reason) = check_stop(&history, &cfg.stop) {
            break reason;
        }
        let grad = assemble_gradient(&losses[1..], &steps, Some(&names)).map_err(ctx)?;
        adam_step(&mut adam, &mut x, &grad, lr).map_err(ctx)?;
        if cfg.space == ParamSpace::Natural {
            project(&mut x, &bounds);
        }
    };
    let theta = from_natural(template, &records.last().expect("one iteration").params)?;
    Ok(CalibRun {
        names,
        records,
        stop,
        theta,
        truth: cfg.truth.clone(),
        loss: cfg.loss,
    })
}

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Simulates "market" paths from `params` exactly as the calibrator would
/// simulate its base model with the same seed.
pub fn market_batch(params: &ModelParams, schedule: &GridSchedule, m: usize, kernel_eps: f64, seed: u64) -> Result<PathBatch> {
    let (tau, horizon) = (schedule.tau(), schedule.horizon());
    let (_, layout) = generate_soe_with_layout(params.hurst, tau, horizon, kernel_eps)?;
    let soe = soe_from_layout(&layout, params.hurst, tau, horizon)?;
    let opts = SimOptions::default();
    let model = prepare(params, schedule, &soe, Scheme::Msoe, &opts)?;
    let mut out = simulate_prepared(std::slice::from_ref(&model), schedule, m, seed, &opts)?;
    Ok(out.pop().expect("one batch"))
}

/// Seed of the market batch for a run with master seed `seed`.
pub fn market_seed(seed: u64) -> u64 {
    derive_seed(seed, MARKET_TAG)
}

/// Seed used by iteration `iter` (counting from 1) of a run.
pub fn iteration_seed(seed: u64, iter: usize) -> u64 {
    derive_seed(seed, iter as u64)
}

pub fn market_samples(batch: &PathBatch) -> Result<Vec<SampleSet>> {
    batch_samples(batch)
}

pub fn market_prices(batch: &PathBatch, contracts: &[Contract], r: f64) -> Result<Vec<f64>> {
    batch_prices(batch, contracts, r)
}

/// One swept parameter of a landscape.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone)]
pub struct LandscapeConfig {
    pub truth: ModelParams,
    pub schedule: GridSchedule,
    pub m: usize,
    pub kernel_eps: f64,
    pub seed: u64,
    /// Contracts for the MSE surface.
    pub contracts: Vec<Contract>,
    pub axes: [Axis; 2],
    pub grid: usize,
}

#[derive(Debug, Clone)]
pub struct Landscape {
    pub names: [String; 2],
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major over (x, y); `None` where the cell failed.
    pub w1: Vec<Option<f64>>,
    pub mse: Vec<Option<f64>>,
}

/// Log transform applied to landscape cells. Exact zeros map to the log of
/// the smallest normal double instead of −∞.
pub fn log_loss(x: f64) -> f64 {
    x.max(f64::MIN_POSITIVE).ln()
}

impl Landscape {
    pub fn grid(&self) -> (usize, usize) {
        (self.xs.len(), self.ys.len())
    }

    /// Grid indices of the smallest finite cell of a surface.
    pub fn argmin(values: &[Option<f64>], ny: usize) -> Option<(usize, usize)> {
        values
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| (k / ny, k % ny))
    }

    /// Header `<x>,<y>,w1,log_w1,mse,log_mse`; failed cells leave the loss fields empty.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{},w1,log_w1,mse,log_mse\n", self.names[0], self.names[1]);
        let ny = self.ys.len();
        let cell = |v: Option<f64>| match v {
            Some(v) => format!("{v:e},{:e}", log_loss(v)),
            None => ",".to_string(),
        };
        for (ix, x) in self.xs.iter().enumerate() {
            for (iy, y) in self.ys.iter().enumerate() {
                let k = ix * ny + iy;
                out.push_str(&format!("{x:e},{y:e},{},{}\n", cell(self.w1[k]), cell(self.mse[k])));
            }
        }
        out
    }
}

/// Grid from `lo` to `hi`; a point within rounding of `snap` is replaced by it
/// so that the truth can sit exactly on the grid.
fn axis_values(axis: &Axis, grid: usize, snap: f64) -> Vec<f64> {
    (0..grid)
        .map(|i| {
            let v = if grid == 1 {
                0.5 * (axis.lo + axis.hi)
            } else {
                axis.lo + (axis.hi - axis.lo) * i as f64 / (grid - 1) as f64
            };
            if (v - snap).abs() <= 1e-12 * snap.abs().max(1e-300) {
                snap
            } else {
                v
            }
        })
        .collect()
}

/// Both losses over a grid of two parameters, the others held at truth.
/// All cells face the same market batch and reuse its seed.
pub fn landscape(cfg: &LandscapeConfig) -> Result<Landscape> {
    if cfg.grid == 0 {
        return Err(Error::domain("landscape grid must be positive"));
    }
    if cfg.m < 2 {
        return Err(Error::domain("batch size must be at least 2"));
    }
    let names = parameter_names(&cfg.truth);
    let truth_vec = natural_vector(&cfg.truth);
    let index = |a: &Axis| {
        names
            .iter()
            .position(|n| *n == a.name)
            .ok_or_else(|| Error::domain(format!("unknown parameter '{}' (have {})", a.name, names.join(", "))))
    };
    let (ix, iy) = (index(&cfg.axes[0])?, index(&cfg.axes[1])?);
    if ix == iy {
        return Err(Error::domain("landscape axes must differ"));
    }
    for a in &cfg.axes {
        if !(a.lo.is_finite() && a.hi.is_finite() && a.lo <= a.hi) {
            return Err(Error::domain(format!("bad range for {}: [{}, {}]", a.name, a.lo, a.hi)));
        }
    }
    let xs = axis_values(&cfg.axes[0], cfg.grid, truth_vec[ix]);
    let ys = axis_values(&cfg.axes[1], cfg.grid, truth_vec[iy]);

    let seed = cfg.seed;
    let market = market_batch(&cfg.truth, &cfg.schedule, cfg.m, cfg.kernel_eps, seed)?;
    let sorted: Vec<SampleSet> = market_samples(&market)?.iter().map(SampleSet::sorted).collect();
    let market_px = if cfg.contracts.is_empty() {
        Vec::new()
    } else {
        market_prices(&market, &cfg.contracts, cfg.truth.r)?
    };

    let cells: Vec<Vec<f64>> = xs
        .iter()
        .flat_map(|&x| {
            ys.iter().map(move |&y| (x, y))
        })
        .map(|(x, y)| {
            let mut v = truth_vec.clone();
            v[ix] = x;
            v[iy] = y;
            v
        })
        .collect();
    let mut w1 = vec![None; cells.len()];
    let mut mse = vec![None; cells.len()];

    // Cells sharing H share a kernel and are simulated together.
    let h_index = names.len() - 3;
    let mut hs: Vec<f64> = cells.iter().map(|c| c[h_index]).collect();
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    let (tau, horizon) = (cfg.schedule.tau(), cfg.schedule.horizon());
    let opts = SimOptions::default();
    for h in hs {
        let members: Vec<usize> = (0..cells.len()).filter(|&k| cells[k][h_index] == h).collect();
        let Ok((_, layout)) = generate_soe_with_layout(h, tau, horizon, cfg.kernel_eps) else {
            continue;
        };
        let Ok(soe) = soe_from_layout(&layout, h, tau, horizon) else {
            continue;
        };
        let mut models = Vec::new();
        let mut ok = Vec::new();
        for &k in &members {
            let Ok(p) = from_natural(&cfg.truth, &cells[k]) else {
                continue;
            };
            if let Ok(model) = prepare(&p, &cfg.schedule, &soe, Scheme::Msoe, &opts) {
                models.push(model);
                ok.push(k);
            }
        }
        let Ok(batches) = simulate_prepared(&models, &cfg.schedule, cfg.m, seed, &opts) else {
            continue;
        };
        for (batch, k) in batches.iter().zip(ok) {
            let finite = |r: Result<f64>| r.ok().filter(|v| v.is_finite());
            w1[k] = finite(batch_samples(batch).and_then(|s| w1_loss_presorted(&s, &sorted)));
            if !cfg.contracts.is_empty() {
                mse[k] = finite(batch_prices(batch, &cfg.contracts, cfg.truth.r).and_then(|p| mse_loss(&p, &market_px)));
            }
        }
    }
    Ok(Landscape {
        names: [cfg.axes[0].name.clone(), cfg.axes[1].name.clone()],
        xs,
        ys,
        w1,
        mse,
    })
}
