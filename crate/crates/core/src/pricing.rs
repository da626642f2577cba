//! Monte Carlo prices of European and barrier contracts from a path batch.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::simulate::PathBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptionKind {
    Call,
    Put,
    /// Put that dies once S touches or crosses B from above.
    DownAndOutPut,
    /// Put that only pays once S has touched or crossed B from above.
    DownAndInPut,
    /// Call that dies once S touches or crosses B from below.
    UpAndOutCall,
}

impl fmt::Display for OptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptionKind::Call => "call",
            OptionKind::Put => "put",
            OptionKind::DownAndOutPut => "dop",
            OptionKind::DownAndInPut => "dip",
            OptionKind::UpAndOutCall => "uoc",
        })
    }
}

impl FromStr for OptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "call" => OptionKind::Call,
            "put" => OptionKind::Put,
            "dop" => OptionKind::DownAndOutPut,
            "dip" => OptionKind::DownAndInPut,
            "uoc" => OptionKind::UpAndOutCall,
            other => return Err(Error::domain(format!("unknown option kind {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contract {
    pub kind: OptionKind,
    pub strike: f64,
    pub maturity: f64,
    /// Ignored by vanilla kinds.
    pub barrier: f64,
}

impl Contract {
    pub fn vanilla(kind: OptionKind, strike: f64, maturity: f64) -> Self {
        Contract {
            kind,
            strike,
            maturity,
            barrier: 0.0,
        }
    }

    pub fn barrier(kind: OptionKind, strike: f64, maturity: f64, barrier: f64) -> Self {
        Contract {
            kind,
            strike,
            maturity,
            barrier,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.strike >= 0.0 && self.strike.is_finite()) {
            return Err(Error::domain(format!("strike must be nonnegative, got {}", self.strike)));
        }
        if !(self.barrier >= 0.0) {
            return Err(Error::domain(format!("barrier must be nonnegative, got {}", self.barrier)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub m: usize,
}

/// Discounted sample mean and standard error (unbiased variance) of payoffs.
pub fn estimate(payoffs: &[f64], discount: f64) -> PriceEstimate {
    let m = payoffs.len();
    let mean = payoffs.iter().sum::<f64>() / m as f64;
    let var = if m > 1 {
        payoffs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1) as f64
    } else {
        0.0
    };
    PriceEstimate {
        mean: discount * mean,
        stderr: discount * (var / m as f64).sqrt(),
        m,
    }
}

/// Undiscounted payoff of every path.
pub fn payoffs(batch: &PathBatch, contract: &Contract) -> Result<Vec<f64>> {
    contract.validate()?;
    let t = contract.maturity;
    let (k, b) = (contract.strike, contract.barrier);
    let s = batch.terminal(t)?;
    Ok(match contract.kind {
        OptionKind::Call => s.iter().map(|x| (x - k).max(0.0)).collect(),
        OptionKind::Put => s.iter().map(|x| (k - x).max(0.0)).collect(),
        OptionKind::DownAndOutPut => s
            .iter()
            .zip(batch.running_min(t)?)
            .map(|(x, lo)| if *lo > b { (k - x).max(0.0) } else { 0.0 })
            .collect(),
        OptionKind::DownAndInPut => s
            .iter()
            .zip(batch.running_min(t)?)
            .map(|(x, lo)| if *lo > b { 0.0 } else { (k - x).max(0.0) })
            .collect(),
        OptionKind::UpAndOutCall => s
            .iter()
            .zip(batch.running_max(t)?)
            .map(|(x, hi)| if *hi < b { (x - k).max(0.0) } else { 0.0 })
            .collect(),
    })
}

/// Any supported contract.
pub fn price(batch: &PathBatch, contract: &Contract, r: f64) -> Result<PriceEstimate> {
    let pay = payoffs(batch, contract)?;
    Ok(estimate(&pay, (-r * contract.maturity).exp()))
}

pub fn price_european(batch: &PathBatch, strike: f64, maturity: f64, r: f64, kind: OptionKind) -> Result<PriceEstimate> {
    if !matches!(kind, OptionKind::Call | OptionKind::Put) {
        return Err(Error::domain(format!("{kind} is not a European payoff")));
    }
    price(batch, &Contract::vanilla(kind, strike, maturity), r)
}

/// Discretely monitored barrier price; survival requires min S > B (down)
/// or max S < B (up) over grid points.
pub fn price_barrier(batch: &PathBatch, contract: &Contract, r: f64) -> Result<PriceEstimate> {
    if matches!(contract.kind, OptionKind::Call | OptionKind::Put) {
        return Err(Error::domain(format!("{} is not a barrier payoff", contract.kind)));
    }
    price(batch, contract, r)
}

/// Mean absolute bid-ask spread.
pub fn tolerance_epsilon(bids: &[f64], asks: &[f64]) -> Result<f64> {
    if bids.len() != asks.len() || bids.is_empty() {
        return Err(Error::domain(format!(
            "need equally many bids and asks, got {} and {}",
            bids.len(),
            asks.len()
        )));
    }
    Ok(bids.iter().zip(asks).map(|(b, a)| (b - a).abs()).sum::<f64>() / bids.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanilla_examples() {
        let one = PathBatch::from_terminal(1.0, vec![1.0; 10]).unwrap();
        assert_eq!(price_european(&one, 0.0, 1.0, 0.0, OptionKind::Call).unwrap().mean, 1.0);
        let two = PathBatch::from_terminal(1.0, vec![0.8, 1.2]).unwrap();
        let c = price_european(&two, 1.0, 1.0, 0.0, OptionKind::Call).unwrap();
        assert!((c.mean - 0.1).abs() < 1e-15);
        assert_eq!(c.m, 2);
        assert!(price_european(&two, 1.0, 0.5, 0.0, OptionKind::Call).is_err());
    }

    #[test]
    fn tolerance_examples() {
        assert_eq!(tolerance_epsilon(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((tolerance_epsilon(&[1.00], &[1.02]).unwrap() - 0.02).abs() < 1e-15);
        assert!((tolerance_epsilon(&[1.0, 1.0], &[1.02, 1.04]).unwrap() - 0.03).abs() < 1e-15);
        assert!(tolerance_epsilon(&[1.0], &[]).is_err());
    }

    #[test]
    fn barrier_breach_is_strict() {
        let b = PathBatch::from_parts(
            crate::simulate::Scheme::Msoe,
            vec![1.0],
            vec![vec![0.9, 0.9]],
            vec![vec![0.8, 0.85]],
            vec![vec![1.0, 1.0]],
        )
        .unwrap();
        let dop = price_barrier(&b, &Contract::barrier(OptionKind::DownAndOutPut, 1.0, 1.0, 0.8), 0.0).unwrap();
        assert!((dop.mean - 0.05).abs() < 1e-15);
        let uoc = price_barrier(&b, &Contract::barrier(OptionKind::UpAndOutCall, 0.5, 1.0, 1.0), 0.0).unwrap();
        assert_eq!(uoc.mean, 0.0);
    }
}
