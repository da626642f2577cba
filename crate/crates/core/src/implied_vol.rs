//! Black–Scholes prices, implied-volatility inversion, smiles and the
//! maximal relative error between two smiles or surfaces.

use crate::error::{Error, Result};
use crate::pricing::{price, Contract, OptionKind};
use crate::simulate::PathBatch;
use crate::soe_kernel::format_sig17;
use crate::special::{norm_cdf, norm_pdf};

/// Black–Scholes value of a call or put. At σ = 0 this is the discounted
/// intrinsic value on the forward.
pub fn bs_price(s0: f64, strike: f64, r: f64, t: f64, sigma: f64, kind: OptionKind) -> f64 {
    let df = (-r * t).exp();
    let call = match kind {
        OptionKind::Call => true,
        OptionKind::Put => false,
        other => panic!("bs_price takes a call or put, got {other}"),
    };
    let sd = sigma * t.sqrt();
    if sd == 0.0 {
        return if call {
            (s0 - strike * df).max(0.0)
        } else {
            (strike * df - s0).max(0.0)
        };
    }
    let d1 = ((s0 / strike).ln() + r * t) / sd + 0.5 * sd;
    let d2 = d1 - sd;
    if call {
        s0 * norm_cdf(d1) - strike * df * norm_cdf(d2)
    } else {
        strike * df * norm_cdf(-d2) - s0 * norm_cdf(-d1)
    }
}

/// ∂(bs_price)/∂σ.
pub fn bs_vega(s0: f64, strike: f64, r: f64, t: f64, sigma: f64) -> f64 {
    let sd = sigma * t.sqrt();
    if sd == 0.0 {
        return 0.0;
    }
    let d1 = ((s0 / strike).ln() + r * t) / sd + 0.5 * sd;
    s0 * norm_pdf(d1) * t.sqrt()
}

const MAX_SIGMA: f64 = 1e4;

/// Volatility reproducing `price`.
///
/// The option is first mapped to its out-of-the-money twin by put-call
/// parity; the equation ln bs(σ) = ln p is then solved by Newton steps kept
/// inside a bisection bracket, which stays well conditioned for deep
/// out-of-the-money strikes.
pub fn implied_vol(price: f64, s0: f64, strike: f64, r: f64, t: f64, kind: OptionKind) -> Result<f64> {
    if !(s0 > 0.0 && strike > 0.0 && t > 0.0) {
        return Err(Error::domain("implied vol needs positive spot, strike and maturity"));
    }
    let df = (-r * t).exp();
    let kdf = strike * df;
    let (lower, upper) = match kind {
        OptionKind::Call => ((s0 - kdf).max(0.0), s0),
        OptionKind::Put => ((kdf - s0).max(0.0), kdf),
        other => return Err(Error::domain(format!("implied vol takes a call or put, got {other}"))),
    };
    if !(price >= lower && price < upper) {
        return Err(Error::Inversion { price, lower, upper });
    }
    // out-of-the-money twin: its price is the time value
    let otm_kind = if kdf >= s0 { OptionKind::Call } else { OptionKind::Put };
    let target = match (kind, otm_kind) {
        (OptionKind::Call, OptionKind::Put) => price - (s0 - kdf),
        (OptionKind::Put, OptionKind::Call) => price - (kdf - s0),
        _ => price,
    };
    if target <= 0.0 {
        return Ok(0.0);
    }
    let f = |sigma: f64| bs_price(s0, strike, r, t, sigma, otm_kind);
    let mut hi = 0.5;
    while f(hi) < target {
        hi *= 2.0;
        if hi > MAX_SIGMA {
            return Err(Error::Inversion { price, lower, upper });
        }
    }
    let mut lo = 0.0;
    let ln_target = target.ln();
    let mut sigma = 0.5 * hi;
    for _ in 0..300 {
        let p = f(sigma);
        if p > target {
            hi = sigma;
        } else {
            lo = sigma;
        }
        let g = p.ln() - ln_target;
        if g.abs() <= 1e-15 || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let vega = bs_vega(s0, strike, r, t, sigma);
        let newton = if p > 0.0 && vega > 0.0 { sigma - g * p / vega } else { f64::NAN };
        sigma = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    let residual = (f(sigma) - target).abs();
    if residual > 1e-10 * s0 {
        return Err(Error::numerical(format!(
            "implied vol did not converge: residual {residual:.3e} at sigma {sigma}"
        )));
    }
    Ok(sigma)
}

/// One point of a smile or surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolSurfacePoint {
    pub maturity: f64,
    /// ln(K/s0)
    pub log_strike: f64,
    pub strike: f64,
    /// Price of the out-of-the-money option that was inverted.
    pub price: f64,
    pub stderr: f64,
    /// None when the inversion failed.
    pub iv: Option<f64>,
}

/// Out-of-the-money option for a strike: put below the forward, call at or
/// above it.
pub fn otm_kind(s0: f64, strike: f64, r: f64, t: f64) -> OptionKind {
    if strike < s0 * (r * t).exp() {
        OptionKind::Put
    } else {
        OptionKind::Call
    }
}

/// Implied vols at strikes s0·e^k from the batch's maturity-T samples.
pub fn smile_from_batch(batch: &PathBatch, maturity: f64, log_strikes: &[f64], s0: f64, r: f64) -> Result<Vec<VolSurfacePoint>> {
    log_strikes
        .iter()
        .map(|&k| {
            let strike = s0 * k.exp();
            let kind = otm_kind(s0, strike, r, maturity);
            let est = price(batch, &Contract::vanilla(kind, strike, maturity), r)?;
            Ok(VolSurfacePoint {
                maturity,
                log_strike: k,
                strike,
                price: est.mean,
                stderr: est.stderr,
                iv: implied_vol(est.mean, s0, strike, r, maturity, kind).ok(),
            })
        })
        .collect()
}

/// Result of comparing a surface against a benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelError {
    pub max: f64,
    /// Points where both inversions succeeded.
    pub valid: usize,
    /// Points dropped because either inversion failed.
    pub excluded: usize,
}

/// max |σ_a − σ_b| / |σ_b| over points valid in both; `b` is the benchmark.
pub fn max_rel_error(a: &[VolSurfacePoint], b: &[VolSurfacePoint]) -> Result<RelError> {
    if a.len() != b.len() {
        return Err(Error::domain(format!("surfaces differ in size: {} vs {}", a.len(), b.len())));
    }
    let mut max: f64 = 0.0;
    let mut valid = 0;
    for (x, y) in a.iter().zip(b) {
        if let (Some(sa), Some(sb)) = (x.iv, y.iv) {
            if sb > 0.0 {
                max = max.max((sa - sb).abs() / sb);
                valid += 1;
            }
        }
    }
    if valid == 0 {
        return Err(Error::numerical("no point has a valid implied vol in both surfaces"));
    }
    Ok(RelError {
        max,
        valid,
        excluded: a.len() - valid,
    })
}

/// Rows "T,k,strike,price,stderr,iv,valid"; failed inversions leave iv empty.
pub fn surface_to_csv(points: &[VolSurfacePoint]) -> String {
    let mut out = String::from("T,k,strike,price,stderr,iv,valid\n");
    for p in points {
        out.push_str(&surface_row(p));
        out.push('\n');
    }
    out
}

pub fn surface_row(p: &VolSurfacePoint) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        format_sig17(p.maturity),
        format_sig17(p.log_strike),
        format_sig17(p.strike),
        format_sig17(p.price),
        format_sig17(p.stderr),
        p.iv.map(format_sig17).unwrap_or_default(),
        u8::from(p.iv.is_some())
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bs_examples() {
        let (s0, k) = (1.0, 0.9);
        assert_eq!(bs_price(s0, k, 0.05, 1.0, 0.0, OptionKind::Call), s0 - k * (-0.05f64).exp());
        let atm = bs_price(1.0, 1.0, 0.0, 1.0, 0.2, OptionKind::Call);
        assert!((atm - (2.0 * norm_cdf(0.1) - 1.0)).abs() < 1e-15);
        assert!((atm - 0.07966).abs() < 1e-5);
        assert!((bs_price(1.0, 1.0, 0.0, 1.0, 50.0, OptionKind::Call) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn inversion_examples() {
        let p = bs_price(1.0, 1.1, 0.01, 0.5, 0.235, OptionKind::Call);
        assert!((implied_vol(p, 1.0, 1.1, 0.01, 0.5, OptionKind::Call).unwrap() - 0.235).abs() < 1e-8);
        let atm = 2.0 * norm_cdf(0.1) - 1.0;
        assert!((implied_vol(atm, 1.0, 1.0, 0.0, 1.0, OptionKind::Call).unwrap() - 0.2).abs() < 1e-12);
        let intrinsic = 1.0 - 0.9;
        let err = implied_vol(intrinsic - 1e-6, 1.0, 0.9, 0.0, 1.0, OptionKind::Call).unwrap_err();
        assert!(matches!(err, Error::Inversion { .. }));
        assert!(implied_vol(1.0, 1.0, 0.9, 0.0, 1.0, OptionKind::Call).is_err());
    }

    #[test]
    fn rel_error_examples() {
        let pt = |iv: Option<f64>| VolSurfacePoint {
            maturity: 1.0,
            log_strike: 0.0,
            strike: 1.0,
            price: 0.0,
            stderr: 0.0,
            iv,
        };
        let a = [pt(Some(0.22)), pt(Some(0.27))];
        let b = [pt(Some(0.20)), pt(Some(0.30))];
        let e = max_rel_error(&a, &b).unwrap();
        assert!((e.max - 0.1).abs() < 1e-12);
        assert_eq!(max_rel_error(&a, &a).unwrap().max, 0.0);
        let reversed = max_rel_error(&b, &a).unwrap().max;
        assert!((reversed - 0.03 / 0.27).abs() < 1e-12);
        let c = [pt(None), pt(Some(0.33))];
        let e = max_rel_error(&c, &b).unwrap();
        assert_eq!((e.valid, e.excluded), (1, 1));
        assert!(max_rel_error(&[pt(None)], &[pt(Some(0.2))]).is_err());
    }
}
