//! Run configuration. TOML, unknown keys rejected everywhere.
//! The full schema with comments lives in `configs/schema.toml`.

use std::path::{Path, PathBuf};

use msoe::forward_variance::{init_nn_weights, read_weights_csv, ForwardVarianceCurve, GroundTruth, NelsonSiegel, DEFAULT_KAPPA};
use msoe::ModelParams;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random draw of a command derives from it.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub model: Option<ModelSpec>,
    pub gen_nodes: Option<GenNodesSpec>,
    pub smile: Option<SmileSpec>,
    pub surface: Option<SurfaceSpec>,
    pub barrier: Option<BarrierSpec>,
    pub calibrate: Option<CalibrateSpec>,
    pub landscape: Option<LandscapeSpec>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|_| CliError::Config(format!("{} is not UTF-8", path.display())))?;
        Ok((Self::parse(text)?, bytes))
    }

    pub fn model(&self) -> Result<ModelParams, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [model] section".into()))?
            .build(None)
    }
}

/// Forward-variance curve. `kind` selects the family.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    Constant {
        value: f64,
    },
    Piecewise {
        pillars: Vec<f64>,
        levels: Vec<f64>,
    },
    NelsonSiegel {
        beta0: f64,
        beta1: f64,
        beta2: f64,
        tau: f64,
    },
    NsNn {
        beta0: f64,
        beta1: f64,
        beta2: f64,
        tau: f64,
        kappa: Option<f64>,
        /// CSV with header `weight` and 97 rows; random small weights when absent.
        weights_file: Option<PathBuf>,
        weights_seed: Option<u64>,
    },
    GroundTruth {
        /// `decay`, `nelson_siegel` or `hump`.
        curve: String,
    },
}

impl CurveSpec {
    fn build(&self, base: Option<&Path>) -> Result<ForwardVarianceCurve, CliError> {
        Ok(match self {
            CurveSpec::Constant { value } => ForwardVarianceCurve::Constant(*value),
            CurveSpec::Piecewise { pillars, levels } => ForwardVarianceCurve::piecewise(pillars.clone(), levels.clone())?,
            CurveSpec::NelsonSiegel { beta0, beta1, beta2, tau } => ForwardVarianceCurve::NelsonSiegel(NelsonSiegel {
                beta0: *beta0,
                beta1: *beta1,
                beta2: *beta2,
                tau: *tau,
            }),
            CurveSpec::NsNn {
                beta0,
                beta1,
                beta2,
                tau,
                kappa,
                weights_file,
                weights_seed,
            } => {
                let weights = match weights_file {
                    Some(f) => {
                        let path = resolve(base, f);
                        let text = std::fs::read_to_string(&path)
                            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                        read_weights_csv(&text)?
                    }
                    None => init_nn_weights(weights_seed.unwrap_or(0)),
                };
                ForwardVarianceCurve::ns_nn(
                    NelsonSiegel {
                        beta0: *beta0,
                        beta1: *beta1,
                        beta2: *beta2,
                        tau: *tau,
                    },
                    kappa.unwrap_or(DEFAULT_KAPPA),
                    weights,
                )?
            }
            CurveSpec::GroundTruth { curve } => ForwardVarianceCurve::GroundTruth(match curve.as_str() {
                "decay" => GroundTruth::Decay,
                "nelson_siegel" => GroundTruth::NelsonSiegel,
                "hump" => GroundTruth::Hump,
                other => {
                    return Err(CliError::Config(format!(
                        "unknown ground-truth curve '{other}' (expected decay, nelson_siegel or hump)"
                    )))
                }
            }),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub xi0: CurveSpec,
    pub hurst: f64,
    pub rho: f64,
    pub eta: f64,
    #[serde(default = "one")]
    pub s0: f64,
    #[serde(default)]
    pub r: f64,
}

fn one() -> f64 {
    1.0
}

impl ModelSpec {
    /// Relative weight-file paths resolve against `base`.
    pub fn build(&self, base: Option<&Path>) -> Result<ModelParams, CliError> {
        let p = ModelParams::new(self.xi0.build(base)?, self.hurst, self.rho, self.eta, self.s0, self.r);
        p.validate()?;
        Ok(p)
    }
}

pub fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenNodesSpec {
    pub hurst: Option<f64>,
    pub delta: Option<f64>,
    pub horizon: Option<f64>,
    pub eps: Option<f64>,
    pub output: Option<PathBuf>,
}

/// Log-strikes as an explicit list or as `start + step·i`, i = 0..count.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StrikeGrid {
    List(Vec<f64>),
    Range { start: f64, step: f64, count: usize },
}

impl StrikeGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            StrikeGrid::List(v) => v.clone(),
            StrikeGrid::Range { start, step, count } => (0..*count).map(|i| start + step * i as f64).collect(),
        }
    }
}

/// Default smile strikes: k = −0.5, −0.45, …, 0.5.
pub fn default_log_strikes() -> StrikeGrid {
    StrikeGrid::Range {
        start: -0.5,
        step: 0.05,
        count: 21,
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmileSpec {
    pub maturity: f64,
    /// One run per step count.
    pub n: Vec<usize>,
    pub m: usize,
    pub kernel_eps: f64,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<String>,
    /// Scheme every other scheme is compared to; no comparison when absent.
    pub benchmark: Option<String>,
    /// Step count of the benchmark run; per-n benchmark when absent.
    pub benchmark_n: Option<usize>,
    pub log_strikes: Option<StrikeGrid>,
    pub cholesky_cap: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub maturities: Vec<f64>,
    pub n: Vec<usize>,
    pub m: usize,
    pub kernel_eps: f64,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<String>,
    pub benchmark: Option<String>,
    pub benchmark_n: Option<usize>,
    pub log_strikes: Option<StrikeGrid>,
    pub cholesky_cap: Option<usize>,
}

fn default_schemes() -> Vec<String> {
    vec!["msoe".into()]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierFamily {
    /// `dop`, `dip` or `uoc`.
    pub kind: String,
    pub strike: f64,
    pub barriers: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSpec {
    pub maturities: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub kernel_eps: f64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    /// Defaults to the standard grid: DOP K=0.95, B=0.70..0.85 and UOC
    /// K=1.05, B=1.15..1.30, 16 barriers each.
    pub families: Option<Vec<BarrierFamily>>,
    pub cholesky_cap: Option<usize>,
}

fn default_scheme() -> String {
    "msoe".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSpec {
    #[serde(default = "default_loss")]
    pub loss: String,
    pub maturities: Vec<f64>,
    pub tau: f64,
    pub m: usize,
    pub kernel_eps: f64,
    /// Strikes of the MSE contracts: puts below s₀, calls at or above.
    #[serde(default = "default_strikes")]
    pub strikes: Vec<f64>,
    /// `maturity,value` samples for w1 or `kind,strike,maturity,price` for mse.
    /// Generated from `truth` when absent.
    pub market_file: Option<PathBuf>,
    pub init: ModelSpec,
    pub truth: Option<ModelSpec>,
    pub eps_stop: Option<f64>,
    pub patience: Option<usize>,
    pub delta_min: Option<f64>,
    pub max_iters: Option<usize>,
    /// Constant learning rate replacing the default schedule.
    pub lr: Option<f64>,
    pub fd_step: Option<f64>,
    #[serde(default = "default_space")]
    pub space: String,
    pub regen_threshold: Option<f64>,
}

fn default_loss() -> String {
    "w1".into()
}

fn default_strikes() -> Vec<f64> {
    vec![0.9, 0.95, 1.0, 1.05]
}

fn default_space() -> String {
    "natural".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub param: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSpec {
    pub maturities: Vec<f64>,
    pub tau: f64,
    pub m: usize,
    pub kernel_eps: f64,
    pub x: AxisSpec,
    pub y: AxisSpec,
    pub grid: Option<usize>,
    #[serde(default = "default_strikes")]
    pub strikes: Vec<f64>,
    pub truth: ModelSpec,
}
