//! Forward variance curves ξ₀(t) and the parameter transforms used by the
//! calibrator.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::RngStream;

/// Negative-side slope of the leaky ReLU in the correction network.
pub const LEAKY_SLOPE: f64 = 0.01;
/// Hidden width of the 1→8→8→1 correction network.
pub const NN_HIDDEN: usize = 8;
/// Weight count of the correction network, biases included.
pub const NN_WEIGHTS: usize = NN_HIDDEN + NN_HIDDEN + NN_HIDDEN * NN_HIDDEN + NN_HIDDEN + NN_HIDDEN + 1;
/// Initial network scale κ.
pub const DEFAULT_KAPPA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelsonSiegel {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub tau: f64,
}

impl NelsonSiegel {
    pub fn eval(&self, t: f64) -> f64 {
        let x = t / self.tau;
        let e = (-x).exp();
        self.beta0 + self.beta1 * e + self.beta2 * x * e
    }
}

/// Built-in synthetic curves used to generate test markets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundTruth {
    /// 0.05 e^(−t)
    Decay,
    /// Nelson–Siegel with (0.02, 0.03, 0.6, 0.2)
    NelsonSiegel,
    /// 0.03 + 0.05 e^(−5(t−0.3)²) + 0.01 sin(15t)
    Hump,
}

impl GroundTruth {
    pub const NS: NelsonSiegel = NelsonSiegel {
        beta0: 0.02,
        beta1: 0.03,
        beta2: 0.6,
        tau: 0.2,
    };

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            GroundTruth::Decay => 0.05 * (-t).exp(),
            GroundTruth::NelsonSiegel => Self::NS.eval(t),
            GroundTruth::Hump => 0.03 + 0.05 * (-5.0 * (t - 0.3) * (t - 0.3)).exp() + 0.01 * (15.0 * t).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForwardVarianceCurve {
    Constant(f64),
    /// Levels on half-open buckets [T_{l−1}, T_l); the last bucket also
    /// contains its right end.
    Piecewise { pillars: Vec<f64>, levels: Vec<f64> },
    NelsonSiegel(NelsonSiegel),
    /// |ξ_ns(t)(1 + κ NN(t))|
    NsNn { ns: NelsonSiegel, kappa: f64, weights: Vec<f64> },
    GroundTruth(GroundTruth),
}

impl ForwardVarianceCurve {
    pub fn piecewise(pillars: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if pillars.len() != levels.len() + 1 || levels.is_empty() {
            return Err(Error::domain(format!(
                "{} pillars cannot bound {} levels",
                pillars.len(),
                levels.len()
            )));
        }
        if pillars.windows(2).any(|w| !(w[1] > w[0])) || !(pillars[0] >= 0.0) {
            return Err(Error::domain("pillars must be nonnegative and strictly increasing"));
        }
        Ok(ForwardVarianceCurve::Piecewise { pillars, levels })
    }

    pub fn ns_nn(ns: NelsonSiegel, kappa: f64, weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights)?;
        Ok(ForwardVarianceCurve::NsNn { ns, kappa, weights })
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("curve evaluated at negative time {t}")));
        }
        Ok(match self {
            ForwardVarianceCurve::Constant(v) => *v,
            ForwardVarianceCurve::Piecewise { pillars, levels } => {
                let last = *pillars.last().expect("validated pillars");
                if t < pillars[0] || t > last {
                    return Err(Error::domain(format!(
                        "t={t} outside pillar range [{}, {last}]",
                        pillars[0]
                    )));
                }
                // number of interior pillars ≤ t picks the bucket
                let idx = pillars[1..pillars.len() - 1].partition_point(|p| *p <= t);
                levels[idx]
            }
            ForwardVarianceCurve::NelsonSiegel(ns) => ns.eval(t),
            ForwardVarianceCurve::NsNn { ns, kappa, weights } => (ns.eval(t) * (1.0 + kappa * nn_forward(weights, t)?)).abs(),
            ForwardVarianceCurve::GroundTruth(g) => g.eval(t),
        })
    }

    pub fn param_count(&self) -> usize {
        match self {
            ForwardVarianceCurve::Constant(_) => 1,
            ForwardVarianceCurve::Piecewise { levels, .. } => levels.len(),
            ForwardVarianceCurve::NelsonSiegel(_) => 4,
            ForwardVarianceCurve::NsNn { .. } => 5 + NN_WEIGHTS,
            ForwardVarianceCurve::GroundTruth(_) => 0,
        }
    }

    /// Free parameters in natural units.
    pub fn params(&self) -> Vec<f64> {
        match self {
            ForwardVarianceCurve::Constant(v) => vec![*v],
            ForwardVarianceCurve::Piecewise { levels, .. } => levels.clone(),
            ForwardVarianceCurve::NelsonSiegel(ns) => vec![ns.beta0, ns.beta1, ns.beta2, ns.tau],
            ForwardVarianceCurve::NsNn { ns, kappa, weights } => {
                let mut v = vec![ns.beta0, ns.beta1, ns.beta2, ns.tau, *kappa];
                v.extend_from_slice(weights);
                v
            }
            ForwardVarianceCurve::GroundTruth(_) => vec![],
        }
    }

    /// Same shape with the free parameters replaced.
    pub fn with_params(&self, p: &[f64]) -> Result<Self> {
        if p.len() != self.param_count() {
            return Err(Error::domain(format!(
                "curve takes {} parameters, got {}",
                self.param_count(),
                p.len()
            )));
        }
        let ns = |p: &[f64]| NelsonSiegel {
            beta0: p[0],
            beta1: p[1],
            beta2: p[2],
            tau: p[3],
        };
        Ok(match self {
            ForwardVarianceCurve::Constant(_) => ForwardVarianceCurve::Constant(p[0]),
            ForwardVarianceCurve::Piecewise { pillars, .. } => ForwardVarianceCurve::Piecewise {
                pillars: pillars.clone(),
                levels: p.to_vec(),
            },
            ForwardVarianceCurve::NelsonSiegel(_) => ForwardVarianceCurve::NelsonSiegel(ns(p)),
            ForwardVarianceCurve::NsNn { .. } => ForwardVarianceCurve::NsNn {
                ns: ns(p),
                kappa: p[4],
                weights: p[5..].to_vec(),
            },
            ForwardVarianceCurve::GroundTruth(g) => ForwardVarianceCurve::GroundTruth(*g),
        })
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            ForwardVarianceCurve::Constant(_) => vec!["xi0".into()],
            ForwardVarianceCurve::Piecewise { levels, .. } => (1..=levels.len()).map(|l| format!("xi{l}")).collect(),
            ForwardVarianceCurve::NelsonSiegel(_) => ns_names(),
            ForwardVarianceCurve::NsNn { .. } => {
                let mut v = ns_names();
                v.push("kappa".into());
                v.extend((0..NN_WEIGHTS).map(|i| format!("w{i}")));
                v
            }
            ForwardVarianceCurve::GroundTruth(_) => vec![],
        }
    }

    /// Per-parameter transform between natural and unconstrained values.
    fn transforms(&self) -> Vec<Transform> {
        match self {
            ForwardVarianceCurve::NsNn { .. } => {
                let mut v = vec![Transform::Softplus; 4];
                v.resize(5 + NN_WEIGHTS, Transform::Identity);
                v
            }
            other => vec![Transform::Softplus; other.param_count()],
        }
    }
}

fn ns_names() -> Vec<String> {
    ["beta0", "beta1", "beta2", "tau_ns"].iter().map(|s| s.to_string()).collect()
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.len() != NN_WEIGHTS {
        return Err(Error::domain(format!(
            "network takes {NN_WEIGHTS} weights, got {}",
            weights.len()
        )));
    }
    Ok(())
}

#[inline]
fn leaky_relu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

/// 1→8→8→1 network with leaky ReLU hidden activations.
/// Weight layout: W1 (8), b1 (8), W2 (8×8 row-major, out × in), b2 (8), W3 (8), b3 (1).
pub fn nn_forward(weights: &[f64], t: f64) -> Result<f64> {
    check_weights(weights)?;
    let h = NN_HIDDEN;
    let (w1, rest) = weights.split_at(h);
    let (b1, rest) = rest.split_at(h);
    let (w2, rest) = rest.split_at(h * h);
    let (b2, rest) = rest.split_at(h);
    let (w3, b3) = rest.split_at(h);
    let mut a1 = [0.0; NN_HIDDEN];
    for i in 0..h {
        a1[i] = leaky_relu(w1[i] * t + b1[i]);
    }
    let mut out = b3[0];
    for i in 0..h {
        let pre: f64 = b2[i] + (0..h).map(|j| w2[i * h + j] * a1[j]).sum::<f64>();
        out += w3[i] * leaky_relu(pre);
    }
    Ok(out)
}

/// Initial network weights: uniform in [−0.5, 0.5]/fan-in, zero biases.
pub fn init_nn_weights(seed: u64) -> Vec<f64> {
    let mut u = RngStream::new(seed, 0).normals();
    let mut draw = |fan_in: f64| (u.next_uniform() - 0.5) / fan_in;
    let h = NN_HIDDEN;
    let mut w = Vec::with_capacity(NN_WEIGHTS);
    w.extend((0..h).map(|_| draw(1.0)));
    w.extend(std::iter::repeat(0.0).take(h));
    w.extend((0..h * h).map(|_| draw(h as f64)));
    w.extend(std::iter::repeat(0.0).take(h));
    w.extend((0..h).map(|_| draw(h as f64)));
    w.push(0.0);
    w
}

pub fn write_weights_csv(weights: &[f64]) -> String {
    let mut s = String::from("weight\n");
    for w in weights {
        s.push_str(&crate::soe_kernel::format_sig17(*w));
        s.push('\n');
    }
    s
}

pub fn read_weights_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "weight")) => {}
        _ => return Err(Error::Parse { line: 1, msg: "expected header \"weight\"".into() }),
    }
    let w = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    check_weights(&w)?;
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Transform {
    Identity,
    Softplus,
    /// x = scale · sigmoid(u)
    Sigmoid(f64),
    /// x = −sigmoid(−u), so that x → −1 as u → −∞
    NegSigmoid,
}

impl Transform {
    fn forward(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Softplus => softplus(u),
            Transform::Sigmoid(scale) => scale * sigmoid(u),
            Transform::NegSigmoid => -sigmoid(-u),
        }
    }

    fn inverse(self, x: f64, name: &str) -> Result<f64> {
        let out = match self {
            Transform::Identity => x,
            Transform::Softplus if x > 0.0 => inverse_softplus(x),
            Transform::Sigmoid(scale) if x / scale > 0.0 && x / scale < 1.0 => logit(x / scale),
            Transform::NegSigmoid if x > -1.0 && x < 0.0 => -logit(-x),
            _ => f64::NAN,
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::domain(format!("{name}={x} lies on or outside the boundary of its range")))
        }
    }
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

pub fn inverse_softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

fn model_transforms(template: &ModelParams) -> Vec<Transform> {
    let mut t = template.xi0.transforms();
    t.push(Transform::Sigmoid(0.5));
    t.push(Transform::NegSigmoid);
    t.push(Transform::Softplus);
    t
}

/// Calibrated parameters in natural units: curve parameters, then H, ρ, η.
pub fn natural_vector(p: &ModelParams) -> Vec<f64> {
    let mut v = p.xi0.params();
    v.extend([p.hurst, p.rho, p.eta]);
    v
}

pub fn parameter_names(p: &ModelParams) -> Vec<String> {
    let mut v = p.xi0.param_names();
    v.extend(["H", "rho", "eta"].iter().map(|s| s.to_string()));
    v
}

/// Inverse of [`natural_vector`]; s₀ and r come from `template`.
pub fn from_natural(template: &ModelParams, v: &[f64]) -> Result<ModelParams> {
    let k = template.xi0.param_count();
    if v.len() != k + 3 {
        return Err(Error::domain(format!("expected {} parameters, got {}", k + 3, v.len())));
    }
    Ok(ModelParams {
        xi0: template.xi0.with_params(&v[..k])?,
        hurst: v[k],
        rho: v[k + 1],
        eta: v[k + 2],
        s0: template.s0,
        r: template.r,
    })
}

/// Unconstrained vector u ↦ parameters: H = σ(u)/2, ρ = −σ(−u), η and positive
/// curve quantities through softplus, network quantities unchanged.
pub fn constrain(template: &ModelParams, u: &[f64]) -> Result<ModelParams> {
    let tr = model_transforms(template);
    if u.len() != tr.len() {
        return Err(Error::domain(format!("expected {} parameters, got {}", tr.len(), u.len())));
    }
    let v: Vec<f64> = u.iter().zip(&tr).map(|(x, t)| t.forward(*x)).collect();
    from_natural(template, &v)
}

pub fn unconstrain(p: &ModelParams) -> Result<Vec<f64>> {
    let names = parameter_names(p);
    natural_vector(p)
        .iter()
        .zip(model_transforms(p))
        .zip(&names)
        .map(|((x, t), name)| t.inverse(*x, name))
        .collect()
}

/// Box used when optimizing directly in natural units.
pub fn natural_bounds(template: &ModelParams) -> Vec<(f64, f64)> {
    let mut b: Vec<(f64, f64)> = template
        .xi0
        .transforms()
        .iter()
        .map(|t| match t {
            Transform::Identity => (f64::NEG_INFINITY, f64::INFINITY),
            _ => (1e-6, f64::INFINITY),
        })
        .collect();
    b.push((0.01, 0.49));
    b.push((-0.995, 0.0));
    b.push((0.01, f64::INFINITY));
    b
}
