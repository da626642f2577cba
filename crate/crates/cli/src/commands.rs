//! Subcommand bodies. Each returns the files it wrote.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use msoe::calibrate::{
    calibrate_with, landscape, market_batch, market_prices, market_samples, market_seed, Axis, CalibConfig, CalibRun,
    LandscapeConfig, LossKind, LrSchedule, Market, DEFAULT_LANDSCAPE_GRID,
};
use msoe::implied_vol::{max_rel_error, smile_from_batch, surface_row, VolSurfacePoint};
use msoe::pricing::{price, Contract, OptionKind};
use msoe::simulate::{simulate_paths_with, GridSchedule, Scheme, SimOptions, DEFAULT_CHOLESKY_CAP};
use msoe::soe_kernel::{format_sig17, generate_soe, soe_to_csv, sup_error, SoeApprox, DEFAULT_GRID_POINTS};
use msoe::wasserstein::samples_from_csv;
use msoe::ModelParams;

use crate::config::{default_log_strikes, resolve, BarrierFamily, CalibrateSpec, GenNodesSpec, LandscapeSpec, RunConfig};
use crate::error::CliError;

/// Everything a command needs besides its config section.
#[derive(Debug, Clone)]
pub struct Context {
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    /// Directory relative input paths resolve against.
    pub base_dir: Option<PathBuf>,
    /// Progress lines on stderr.
    pub verbose: bool,
}

impl Context {
    fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("no seed given (set `seed` in the config or pass --seed)".into()))
    }

    fn write(&self, name: &str, content: &str) -> Result<PathBuf, CliError> {
        write_file(&self.out_dir.join(name), content)
    }

    fn input(&self, p: &Path) -> PathBuf {
        resolve(self.base_dir.as_deref(), p)
    }
}

pub(crate) fn write_file(path: &Path, content: &str) -> Result<PathBuf, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, content).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    s.as_ref().ok_or_else(|| config_err(format!("missing [{name}] section")))
}

fn parse_scheme(s: &str) -> Result<Scheme, CliError> {
    s.parse::<Scheme>().map_err(|_| config_err(format!("unknown scheme '{s}' (expected msoe, soe or cholesky)")))
}

fn check_positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("{name} must be positive, got {v}")))
    }
}

fn check_count(name: &str, v: usize) -> Result<(), CliError> {
    if v == 0 {
        Err(config_err(format!("{name} must be at least 1")))
    } else {
        Ok(())
    }
}

/// Writes the certified kernel for the given arguments.
pub fn gen_nodes(spec: &GenNodesSpec, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let get = |v: Option<f64>, name: &str| v.ok_or_else(|| config_err(format!("gen-nodes needs {name}")));
    let hurst = get(spec.hurst, "hurst")?;
    let delta = get(spec.delta, "delta")?;
    let horizon = get(spec.horizon, "horizon")?;
    let eps = get(spec.eps, "eps")?;
    if !(delta < horizon) {
        return Err(config_err(format!("delta ({delta}) must be smaller than horizon ({horizon})")));
    }
    let soe = generate_soe(hurst, delta, horizon, eps)?;
    let err = sup_error(&soe, hurst, delta, horizon, DEFAULT_GRID_POINTS);
    println!("N = {}", soe.len());
    println!("sup_error = {err:e}");
    let out = match &spec.output {
        Some(p) => write_file(&ctx.out_dir.join(p), &soe_to_csv(&soe))?,
        None => ctx.write("nodes.csv", &soe_to_csv(&soe))?,
    };
    Ok(vec![out])
}

/// Shared body of the smile and surface commands.
struct SurfaceJob<'a> {
    model: ModelParams,
    maturities: Vec<f64>,
    ns: &'a [usize],
    m: usize,
    kernel_eps: f64,
    schemes: Vec<Scheme>,
    benchmark: Option<Scheme>,
    benchmark_n: Option<usize>,
    log_strikes: Vec<f64>,
    cholesky_cap: usize,
}

/// Points of one run: one smile per maturity, maturities in order.
struct Run {
    scheme: Scheme,
    n: usize,
    nodes: usize,
    points: Vec<VolSurfacePoint>,
}

impl SurfaceJob<'_> {
    fn validate(&self) -> Result<(), CliError> {
        if self.m == 0 {
            return Err(config_err("m must be at least 1"));
        }
        if self.ns.is_empty() || self.ns.contains(&0) {
            return Err(config_err("n must be a nonempty list of positive step counts"));
        }
        if self.log_strikes.is_empty() {
            return Err(config_err("no strikes"));
        }
        if self.schemes.is_empty() {
            return Err(config_err("no schemes"));
        }
        check_positive("kernel_eps", self.kernel_eps)?;
        if let Some(n) = self.benchmark_n {
            check_count("benchmark_n", n)?;
        }
        GridSchedule::new(self.maturities.clone(), self.ns[0])?;
        Ok(())
    }

    fn run(&self, scheme: Scheme, n: usize, seed: u64, verbose: bool) -> Result<Run, CliError> {
        let schedule = GridSchedule::new(self.maturities.clone(), n)?;
        let soe = if scheme == Scheme::Cholesky {
            // Unused by the exact scheme.
            SoeApprox::new(Vec::new(), Vec::new(), self.model.hurst, schedule.tau(), schedule.horizon())?
        } else {
            generate_soe(self.model.hurst, schedule.tau(), schedule.horizon(), self.kernel_eps)?
        };
        let opts = SimOptions {
            cholesky_cap: self.cholesky_cap,
            ..SimOptions::default()
        };
        if verbose {
            eprintln!("simulating {scheme} n={n} m={} N={}", self.m, soe.len());
        }
        let batch = simulate_paths_with(&self.model, &schedule, &soe, scheme, self.m, seed, &opts)?;
        let mut points = Vec::new();
        for &t in &self.maturities {
            points.extend(smile_from_batch(&batch, t, &self.log_strikes, self.model.s0, self.model.r)?);
        }
        Ok(Run {
            scheme,
            n,
            nodes: soe.len(),
            points,
        })
    }

    /// Writes `<stem>.csv` with every point and, with a benchmark,
    /// `<stem>_summary.csv` with one error row per compared run.
    fn execute(&self, stem: &str, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
        self.validate()?;
        let seed = ctx.seed()?;
        let mut rows = String::from("scheme,n,N,T,k,strike,price,stderr,iv,valid\n");
        let mut summary = String::from("scheme,n,benchmark,benchmark_n,max_rel_error,valid,excluded\n");
        let push_rows = |rows: &mut String, r: &Run| {
            for p in &r.points {
                let _ = writeln!(rows, "{},{},{},{}", r.scheme, r.n, r.nodes, surface_row(p));
            }
        };
        let fixed_benchmark = match (self.benchmark, self.benchmark_n) {
            (Some(b), Some(bn)) => {
                let r = self.run(b, bn, seed, ctx.verbose)?;
                push_rows(&mut rows, &r);
                Some(r)
            }
            _ => None,
        };
        for &n in self.ns {
            let per_n = match (self.benchmark, &fixed_benchmark) {
                (Some(b), None) => {
                    let r = self.run(b, n, seed, ctx.verbose)?;
                    push_rows(&mut rows, &r);
                    Some(r)
                }
                _ => None,
            };
            for &scheme in &self.schemes {
                if fixed_benchmark.is_none() && Some(scheme) == self.benchmark {
                    continue;
                }
                let r = self.run(scheme, n, seed, ctx.verbose)?;
                push_rows(&mut rows, &r);
                if let Some(bench) = fixed_benchmark.as_ref().or(per_n.as_ref()) {
                    let e = max_rel_error(&r.points, &bench.points)?;
                    let _ = writeln!(
                        summary,
                        "{},{},{},{},{},{},{}",
                        r.scheme,
                        r.n,
                        bench.scheme,
                        bench.n,
                        format_sig17(e.max),
                        e.valid,
                        e.excluded
                    );
                    if ctx.verbose {
                        eprintln!("{} n={} max_rel_error={:.4}", r.scheme, r.n, e.max);
                    }
                }
            }
        }
        let mut out = vec![ctx.write(&format!("{stem}.csv"), &rows)?];
        if self.benchmark.is_some() {
            out.push(ctx.write(&format!("{stem}_summary.csv"), &summary)?);
        }
        Ok(out)
    }
}

fn schemes(list: &[String]) -> Result<Vec<Scheme>, CliError> {
    list.iter().map(|s| parse_scheme(s)).collect()
}

pub fn smile(cfg: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let spec = section(&cfg.smile, "smile")?;
    let job = SurfaceJob {
        model: cfg.model()?,
        maturities: vec![spec.maturity],
        ns: &spec.n,
        m: spec.m,
        kernel_eps: spec.kernel_eps,
        schemes: schemes(&spec.schemes)?,
        benchmark: spec.benchmark.as_deref().map(parse_scheme).transpose()?,
        benchmark_n: spec.benchmark_n,
        log_strikes: spec.log_strikes.clone().unwrap_or_else(default_log_strikes).values(),
        cholesky_cap: spec.cholesky_cap.unwrap_or(DEFAULT_CHOLESKY_CAP),
    };
    job.execute("smile", ctx)
}

pub fn surface(cfg: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let spec = section(&cfg.surface, "surface")?;
    let job = SurfaceJob {
        model: cfg.model()?,
        maturities: spec.maturities.clone(),
        ns: &spec.n,
        m: spec.m,
        kernel_eps: spec.kernel_eps,
        schemes: schemes(&spec.schemes)?,
        benchmark: spec.benchmark.as_deref().map(parse_scheme).transpose()?,
        benchmark_n: spec.benchmark_n,
        log_strikes: spec.log_strikes.clone().unwrap_or_else(default_log_strikes).values(),
        cholesky_cap: spec.cholesky_cap.unwrap_or(DEFAULT_CHOLESKY_CAP),
    };
    job.execute("surface", ctx)
}

/// DOP K=0.95 with B = 0.70, 0.71, …, 0.85 and UOC K=1.05 with B = 1.15, …, 1.30.
pub fn default_barrier_families() -> Vec<BarrierFamily> {
    let grid = |start: f64| (0..16).map(|i| ((start + 0.01 * i as f64) * 100.0).round() / 100.0).collect();
    vec![
        BarrierFamily {
            kind: "dop".into(),
            strike: 0.95,
            barriers: grid(0.70),
        },
        BarrierFamily {
            kind: "uoc".into(),
            strike: 1.05,
            barriers: grid(1.15),
        },
    ]
}

/// Barrier prices on one batch. Each family is followed by its vanilla
/// counterpart (empty `B`) and, for down-and-out puts, a B=0 row.
pub fn barrier(cfg: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let spec = section(&cfg.barrier, "barrier")?;
    let model = cfg.model()?;
    check_count("m", spec.m)?;
    check_count("n", spec.n)?;
    check_positive("kernel_eps", spec.kernel_eps)?;
    let scheme = parse_scheme(&spec.scheme)?;
    let families = spec.families.clone().unwrap_or_else(default_barrier_families);
    let mut parsed = Vec::new();
    for f in &families {
        let kind: OptionKind = f.kind.parse().map_err(|_| config_err(format!("unknown barrier kind '{}'", f.kind)))?;
        let vanilla = match kind {
            OptionKind::DownAndOutPut | OptionKind::DownAndInPut => OptionKind::Put,
            OptionKind::UpAndOutCall => OptionKind::Call,
            _ => return Err(config_err(format!("'{}' is not a barrier kind", f.kind))),
        };
        check_positive("strike", f.strike)?;
        parsed.push((kind, vanilla, f));
    }
    let seed = ctx.seed()?;
    let schedule = GridSchedule::new(spec.maturities.clone(), spec.n)?;
    let soe = if scheme == Scheme::Cholesky {
        SoeApprox::new(Vec::new(), Vec::new(), model.hurst, schedule.tau(), schedule.horizon())?
    } else {
        generate_soe(model.hurst, schedule.tau(), schedule.horizon(), spec.kernel_eps)?
    };
    let opts = SimOptions {
        cholesky_cap: spec.cholesky_cap.unwrap_or(DEFAULT_CHOLESKY_CAP),
        ..SimOptions::default()
    };
    let batch = simulate_paths_with(&model, &schedule, &soe, scheme, spec.m, seed, &opts)?;
    let mut rows = String::from("kind,T,K,B,price,stderr\n");
    let mut row = |kind: OptionKind, c: &Contract, barrier: Option<f64>| -> Result<(), CliError> {
        let est = price(&batch, c, model.r)?;
        let _ = writeln!(
            rows,
            "{kind},{},{},{},{},{}",
            format_sig17(c.maturity),
            format_sig17(c.strike),
            barrier.map(format_sig17).unwrap_or_default(),
            format_sig17(est.mean),
            format_sig17(est.stderr)
        );
        Ok(())
    };
    for &t in &spec.maturities {
        for (kind, vanilla, f) in &parsed {
            for &b in &f.barriers {
                row(*kind, &Contract::barrier(*kind, f.strike, t, b), Some(b))?;
            }
            row(*vanilla, &Contract::vanilla(*vanilla, f.strike, t), None)?;
            if *kind == OptionKind::DownAndOutPut {
                row(*kind, &Contract::barrier(*kind, f.strike, t, 0.0), Some(0.0))?;
            }
        }
    }
    Ok(vec![ctx.write("barrier.csv", &rows)?])
}

/// European contracts for the MSE loss: puts below spot, calls otherwise.
pub fn mse_contracts(maturities: &[f64], strikes: &[f64], s0: f64) -> Vec<Contract> {
    maturities
        .iter()
        .flat_map(|&t| {
            strikes.iter().map(move |&k| {
                let kind = if k < s0 { OptionKind::Put } else { OptionKind::Call };
                Contract::vanilla(kind, k, t)
            })
        })
        .collect()
}

/// Market prices file: header `kind,strike,maturity,price`.
pub fn read_market_prices(text: &str) -> Result<(Vec<Contract>, Vec<f64>), CliError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "kind,strike,maturity,price" => {}
        _ => return Err(config_err("market prices need the header kind,strike,maturity,price")),
    }
    let mut contracts = Vec::new();
    let mut prices = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || config_err(format!("market prices line {}: malformed row '{line}'", i + 1));
        if f.len() != 4 {
            return Err(bad());
        }
        let kind: OptionKind = f[0].parse().map_err(|_| bad())?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        contracts.push(Contract::vanilla(kind, num(f[1])?, num(f[2])?));
        prices.push(num(f[3])?);
    }
    Ok((contracts, prices))
}

pub fn build_calib_config(spec: &CalibrateSpec, ctx: &Context) -> Result<CalibConfig, CliError> {
    let seed = ctx.seed()?;
    let loss: LossKind = spec.loss.parse()?;
    let init = spec.init.build(ctx.base_dir.as_deref())?;
    let truth = spec.truth.as_ref().map(|t| t.build(ctx.base_dir.as_deref())).transpose()?;
    check_count("m", spec.m)?;
    check_positive("kernel_eps", spec.kernel_eps)?;
    check_positive("tau", spec.tau)?;
    let schedule = GridSchedule::with_step(spec.maturities.clone(), spec.tau)?;
    let contracts = mse_contracts(&spec.maturities, &spec.strikes, init.s0);
    let market = match (&spec.market_file, &truth) {
        (Some(file), _) => {
            let path = ctx.input(file);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| config_err(format!("cannot read market file {}: {e}", path.display())))?;
            match loss {
                LossKind::W1 => Market::Samples(samples_from_csv(&text)?),
                LossKind::Mse => {
                    let (contracts, prices) = read_market_prices(&text)?;
                    Market::Prices { contracts, prices }
                }
            }
        }
        (None, Some(truth)) => {
            let batch = market_batch(truth, &schedule, spec.m, spec.kernel_eps, market_seed(seed))?;
            match loss {
                LossKind::W1 => Market::Samples(market_samples(&batch)?),
                LossKind::Mse => Market::Prices {
                    prices: market_prices(&batch, &contracts, truth.r)?,
                    contracts,
                },
            }
        }
        (None, None) => return Err(config_err("calibrate needs either market_file or a [calibrate.truth] model")),
    };
    let mut cfg = CalibConfig::new(loss, market, init, schedule, spec.m, spec.kernel_eps, seed);
    cfg.truth = truth;
    if let Some(v) = spec.eps_stop {
        cfg.stop.eps_stop = v;
    }
    if let Some(v) = spec.patience {
        cfg.stop.patience = v;
    }
    if let Some(v) = spec.delta_min {
        cfg.stop.delta_min = v;
    }
    if let Some(v) = spec.max_iters {
        cfg.stop.max_iters = v;
    }
    if let Some(v) = spec.lr {
        check_positive("lr", v)?;
        cfg.lr = LrSchedule::Constant(v);
    }
    if let Some(h) = spec.fd_step {
        check_positive("fd_step", h)?;
        cfg.fd_steps = vec![h; msoe::forward_variance::natural_vector(&cfg.init).len()];
    }
    cfg.space = spec.space.parse()?;
    if let Some(v) = spec.regen_threshold {
        cfg.regen_threshold = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn calibrate(cfg: &RunConfig, ctx: &Context) -> Result<(Vec<PathBuf>, CalibRun), CliError> {
    let spec = section(&cfg.calibrate, "calibrate")?;
    let config = build_calib_config(spec, ctx)?;
    let verbose = ctx.verbose;
    let run = calibrate_with(&config, |r| {
        if verbose && (r.iter == 1 || r.iter % 50 == 0) {
            eprintln!("iter {} loss {:.6e} N={} ({:.2}s)", r.iter, r.loss, r.nodes, r.seconds);
        }
    })?;
    let files = vec![
        ctx.write("trajectory.csv", &run.trajectory_csv())?,
        ctx.write("summary.txt", &run.summary())?,
    ];
    if verbose {
        let mean = run.records.iter().map(|r| r.seconds).sum::<f64>() / run.records.len() as f64;
        eprintln!("stop: {} after {} iterations, {mean:.2}s per iteration", run.stop, run.records.len());
    }
    Ok((files, run))
}

pub fn build_landscape_config(spec: &LandscapeSpec, ctx: &Context) -> Result<LandscapeConfig, CliError> {
    let truth = spec.truth.build(ctx.base_dir.as_deref())?;
    check_count("m", spec.m)?;
    check_positive("kernel_eps", spec.kernel_eps)?;
    check_positive("tau", spec.tau)?;
    let grid = spec.grid.unwrap_or(DEFAULT_LANDSCAPE_GRID);
    check_count("grid", grid)?;
    Ok(LandscapeConfig {
        schedule: GridSchedule::with_step(spec.maturities.clone(), spec.tau)?,
        m: spec.m,
        kernel_eps: spec.kernel_eps,
        seed: ctx.seed()?,
        contracts: mse_contracts(&spec.maturities, &spec.strikes, truth.s0),
        axes: [
            Axis {
                name: spec.x.param.clone(),
                lo: spec.x.lo,
                hi: spec.x.hi,
            },
            Axis {
                name: spec.y.param.clone(),
                lo: spec.y.lo,
                hi: spec.y.hi,
            },
        ],
        grid,
        truth,
    })
}

pub fn landscape_cmd(cfg: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let spec = section(&cfg.landscape, "landscape")?;
    let config = build_landscape_config(spec, ctx)?;
    let l = landscape(&config)?;
    Ok(vec![ctx.write("landscape.csv", &l.to_csv())?])
}
