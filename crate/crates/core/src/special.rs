//! Special functions: gamma, lower incomplete gamma, and the standard normal
//! distribution.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum(x: f64) -> f64 {
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    acc
}

/// Gamma function via the Lanczos approximation (g = 7, nine terms), with
/// reflection below 1/2.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * lanczos_sum(x)
    }
}

/// Natural log of |Γ(x)|.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        (PI / (PI * x).sin()).abs().ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let t = x + LANCZOS_G + 0.5;
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + lanczos_sum(x).ln()
    }
}

const SERIES_MAX_TERMS: usize = 10_000;
const CF_MAX_TERMS: usize = 10_000;
const REL_EPS: f64 = 1e-16;

/// Sum of x^n / (s (s+1) ... (s+n)), so that γ(s, x) = x^s e^(-x) · series.
fn gamma_series(s: f64, x: f64) -> f64 {
    let mut term = 1.0 / s;
    let mut sum = term;
    for n in 1..SERIES_MAX_TERMS {
        term *= x / (s + n as f64);
        sum += term;
        if term.abs() < sum.abs() * REL_EPS {
            break;
        }
    }
    sum
}

/// Upper incomplete gamma Γ(s, x) by the modified Lentz continued fraction.
fn upper_gamma_cf(s: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..CF_MAX_TERMS {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < REL_EPS {
            break;
        }
    }
    (-x + s * x.ln()).exp() * h
}

fn check_gamma_args(s: f64, x: f64) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::domain(format!("incomplete gamma needs s > 0, got {s}")));
    }
    if !(x >= 0.0) {
        return Err(Error::domain(format!("incomplete gamma needs x >= 0, got {x}")));
    }
    Ok(())
}

/// Lower incomplete gamma γ(s, x) = ∫₀ˣ u^(s−1) e^(−u) du.
///
/// Series below x = s + 1, continued fraction above.
pub fn lower_incomplete_gamma(s: f64, x: f64) -> Result<f64> {
    check_gamma_args(s, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(gamma(s));
    }
    if x < s + 1.0 {
        Ok((-x + s * x.ln()).exp() * gamma_series(s, x))
    } else {
        Ok(gamma(s) - upper_gamma_cf(s, x))
    }
}

/// γ(s, x) / x^s, continuous at x = 0 where it equals 1/s.
pub fn lower_incomplete_gamma_scaled(s: f64, x: f64) -> Result<f64> {
    check_gamma_args(s, x)?;
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x < s + 1.0 {
        Ok((-x).exp() * gamma_series(s, x))
    } else {
        Ok((gamma(s) - upper_gamma_cf(s, x)) * (-s * x.ln()).exp())
    }
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function through the complementary error
/// function, accurate in both tails.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

const AS241_A: [f64; 8] = [
    3.387_132_872_796_366_608,
    133.141_667_891_784_377_45,
    1_971.590_950_306_551_442_7,
    13_731.693_765_509_461_125,
    45_921.953_931_549_871_457,
    67_265.770_927_008_700_853,
    33_430.575_583_588_128_105,
    2_509.080_928_730_122_672_7,
];
const AS241_B: [f64; 8] = [
    1.0,
    42.313_330_701_600_911_252,
    687.187_007_492_057_908_3,
    5_394.196_021_424_751_107_7,
    21_213.794_301_586_595_867,
    39_307.895_800_092_710_61,
    28_729.085_735_721_942_674,
    5_226.495_278_852_854_561,
];
const AS241_C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    0.241_780_725_177_450_611_77,
    0.022_723_844_989_269_184_583_3,
    7.745_450_142_783_414_076_4e-4,
];
const AS241_D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    0.689_767_334_985_100_004_55,
    0.148_103_976_427_480_074_59,
    0.015_198_666_563_616_457_196_6,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const AS241_E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    0.296_560_571_828_504_891_23,
    0.026_532_189_526_576_123_093,
    0.001_242_660_947_388_078_438_6,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const AS241_F: [f64; 8] = [
    1.0,
    0.599_832_206_555_887_937_69,
    0.136_929_880_922_735_805_31,
    0.014_875_361_290_850_614_852_5,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

/// |p − 1/2| up to which the central rational approximation applies.
pub(crate) const CENTRAL_HALF_WIDTH: f64 = 0.425;

/// Central branch of AS 241 at q = p − 1/2. Branch free, so loops over it
/// vectorize.
#[inline(always)]
pub(crate) fn central_quantile(q: f64) -> f64 {
    let r = 0.180_625 - q * q;
    q * poly7(&AS241_A, r) / poly7(&AS241_B, r)
}

#[inline(always)]
fn poly7(c: &[f64; 8], x: f64) -> f64 {
    let mut acc = c[7];
    for k in (0..7).rev() {
        acc = acc * x + c[k];
    }
    acc
}

/// Inverse of the standard normal distribution function (Wichura's AS 241,
/// about 16 significant digits) for p in (0, 1).
#[inline]
pub fn inverse_norm_cdf(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= CENTRAL_HALF_WIDTH {
        return central_quantile(q);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    if tail <= 0.0 {
        return if q < 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
    }
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        poly7(&AS241_C, r) / poly7(&AS241_D, r)
    } else {
        r -= 5.0;
        poly7(&AS241_E, r) / poly7(&AS241_F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}
