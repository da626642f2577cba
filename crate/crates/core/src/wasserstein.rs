//! Empirical Wasserstein-1 distance between equal-size samples and the
//! calibration losses built on it.

use crate::error::{Error, Result};
use crate::soe_kernel::format_sig17;

/// Samples of S at one maturity.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub maturity: f64,
    pub values: Vec<f64>,
}

impl SampleSet {
    pub fn new(maturity: f64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("a sample set needs at least one finite value"));
        }
        Ok(SampleSet { maturity, values })
    }

    /// Same samples in ascending order.
    pub fn sorted(&self) -> SampleSet {
        let mut values = self.values.clone();
        values.sort_unstable_by(f64::total_cmp);
        SampleSet {
            maturity: self.maturity,
            values,
        }
    }
}

/// Mean absolute difference of already sorted samples.
pub fn w1_sorted(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::domain(format!(
            "empirical W1 needs equal nonzero sample sizes, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    Ok(xs.iter().zip(ys).map(|(x, y)| (x - y).abs()).sum::<f64>() / xs.len() as f64)
}

/// (1/m) Σ |X_(i) − Y_(i)| over order statistics.
pub fn empirical_w1(xs: &SampleSet, ys: &SampleSet) -> Result<f64> {
    w1_sorted(&xs.sorted().values, &ys.sorted().values)
}

fn check_maturities(model: &[SampleSet], market: &[SampleSet]) -> Result<()> {
    if model.len() != market.len() || model.is_empty() {
        return Err(Error::domain(format!(
            "loss needs matching maturity sets, got {} model and {} market",
            model.len(),
            market.len()
        )));
    }
    for (a, b) in model.iter().zip(market) {
        if (a.maturity - b.maturity).abs() > 1e-12 * b.maturity.abs().max(1.0) {
            return Err(Error::domain(format!(
                "maturity mismatch: model {} vs market {}",
                a.maturity, b.maturity
            )));
        }
    }
    Ok(())
}

/// Mean over maturities of the empirical W1.
pub fn w1_loss(model: &[SampleSet], market: &[SampleSet]) -> Result<f64> {
    check_maturities(model, market)?;
    let mut total = 0.0;
    for (a, b) in model.iter().zip(market) {
        total += empirical_w1(a, b)?;
    }
    Ok(total / model.len() as f64)
}

/// [`w1_loss`] when the market sets are already sorted.
pub fn w1_loss_presorted(model: &[SampleSet], sorted_market: &[SampleSet]) -> Result<f64> {
    check_maturities(model, sorted_market)?;
    let mut total = 0.0;
    for (a, b) in model.iter().zip(sorted_market) {
        total += w1_sorted(&a.sorted().values, &b.values)?;
    }
    Ok(total / model.len() as f64)
}

pub fn mse_loss(model: &[f64], market: &[f64]) -> Result<f64> {
    if model.len() != market.len() || model.is_empty() {
        return Err(Error::domain(format!(
            "MSE needs equal nonzero lengths, got {} and {}",
            model.len(),
            market.len()
        )));
    }
    Ok(model.iter().zip(market).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / model.len() as f64)
}

/// Market samples as CSV rows "maturity,value".
pub fn samples_to_csv(sets: &[SampleSet]) -> String {
    let mut out = String::from("maturity,value\n");
    for set in sets {
        let t = format_sig17(set.maturity);
        for v in &set.values {
            out.push_str(&t);
            out.push(',');
            out.push_str(&format_sig17(*v));
            out.push('\n');
        }
    }
    out
}

/// Parses "maturity,value" rows, grouping by maturity in ascending order.
pub fn samples_from_csv(text: &str) -> Result<Vec<SampleSet>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "maturity,value" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "expected header \"maturity,value\"".into(),
            })
        }
    }
    let mut sets: Vec<SampleSet> = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse { line: i + 1, msg };
        let (t, v) = line.split_once(',').ok_or_else(|| bad("expected two columns".into()))?;
        let t: f64 = t.trim().parse().map_err(|e| bad(format!("maturity: {e}")))?;
        let v: f64 = v.trim().parse().map_err(|e| bad(format!("value: {e}")))?;
        if !v.is_finite() || !(t > 0.0) {
            return Err(bad("maturity must be positive and value finite".into()));
        }
        match sets.iter_mut().find(|s| s.maturity == t) {
            Some(s) => s.values.push(v),
            None => sets.push(SampleSet { maturity: t, values: vec![v] }),
        }
    }
    if sets.is_empty() {
        return Err(Error::Parse { line: 1, msg: "no samples".into() });
    }
    sets.sort_by(|a, b| a.maturity.total_cmp(&b.maturity));
    Ok(sets)
}
