//! Complementary error function and its scaled form.
//!
//! Power series for small arguments, Lentz continued fraction for large
//! ones. Kept separate from the Laplace inversion code so the analytic
//! oracle built on it shares nothing with the numerical path.

use std::f64::consts::PI;

const SERIES_LIMIT: f64 = 2.0;

/// `erf(x)` by its Maclaurin series. Accurate for `|x| <= 2`.
fn erf_series(x: f64) -> f64 {
    // erf(x) = 2/sqrt(pi) * sum (-1)^k x^(2k+1) / (k! (2k+1))
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for k in 1..200 {
        term *= -x2 / k as f64;
        let add = term / (2 * k + 1) as f64;
        sum += add;
        if add.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    2.0 / PI.sqrt() * sum
}

/// `e^(x^2) erfc(x)` for `x >= SERIES_LIMIT` by the continued fraction
/// `erfc(x) = e^(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))`.
fn erfcx_cf(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / (PI.sqrt() * f)
}

pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        2.0 - erfc(-x)
    } else if x < SERIES_LIMIT {
        1.0 - erf_series(x)
    } else {
        (-x * x).exp() * erfcx_cf(x)
    }
}

/// Scaled complementary error function `e^(x^2) erfc(x)`, finite for large `x`.
pub fn erfcx(x: f64) -> f64 {
    if x < SERIES_LIMIT {
        (x * x).exp() * erfc(x)
    } else {
        erfcx_cf(x)
    }
}
