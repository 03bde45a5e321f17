//! Numerical inverse Laplace transform.
//!
//! Fourier-series inversion on the Bromwich line `Re s = gamma`, with the
//! series accelerated by the quotient-difference continued fraction of
//! de Hoog, Knight and Stokes (1982). Each time point gets its own period
//! `T = period_factor * t`, which makes the points independent and lets
//! them be evaluated in parallel.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::folti::FoTransferFunction;
use crate::par;
use crate::special::erfcx;

/// Sampled real time function on `t > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSamples {
    t: Vec<f64>,
    h: Vec<f64>,
}

impl TimeSamples {
    pub fn new(t: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if t.len() != h.len() {
            return Err(Error::InvalidArgument("time and value arrays differ in length".into()));
        }
        check_time_grid(&t)?;
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("samples must be finite".into()));
        }
        Ok(Self { t, h })
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Columns `t_s,h_per_s`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t_s,h_per_s")?;
        for (t, h) in self.t.iter().zip(&self.h) {
            writeln!(w, "{t},{h}")?;
        }
        Ok(())
    }
}

fn check_time_grid(t: &[f64]) -> Result<()> {
    if t.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
        return Err(Error::InvalidArgument("time points must be finite and > 0".into()));
    }
    if t.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidArgument("time grid must be strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionConfig {
    /// Fourier period as a multiple of the evaluation time.
    pub period_factor: f64,
    /// Continued-fraction depth `M`; `2M + 1` transform evaluations per point.
    pub terms: usize,
    /// Target discretization error; sets the contour abscissa.
    pub tol: f64,
    /// Abscissa of convergence of the transform.
    pub sigma0: f64,
    /// Relative gap between the last two convergents above which a point is
    /// flagged.
    pub warn_rel: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            period_factor: 2.0,
            terms: 20,
            tol: 1e-12,
            sigma0: 0.0,
            warn_rel: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyWarning {
    pub t: f64,
    /// Relative change contributed by the final convergent.
    pub remainder: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub samples: TimeSamples,
    pub warnings: Vec<AccuracyWarning>,
}

impl Inversion {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}

/// One inverted point: value and convergence remainder estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub value: f64,
    pub remainder: f64,
}

/// Inverts `f` at a single `t > 0`.
pub fn invert_at<F>(f: &F, t: f64, cfg: &InversionConfig) -> PointEstimate
where
    F: Fn(Complex64) -> Complex64 + ?Sized,
{
    let m = cfg.terms.max(2);
    let period = cfg.period_factor * t;
    let gamma = cfg.sigma0 - cfg.tol.ln() / (2.0 * period);

    let mut a: Vec<Complex64> = (0..=2 * m)
        .map(|k| f(Complex64::new(gamma, PI * k as f64 / period)))
        .collect();
    a[0] /= 2.0;

    // quotient-difference table, columns r = 0..=m
    let mut e = vec![vec![Complex64::new(0.0, 0.0); m + 1]; 2 * m + 1];
    let mut q = vec![vec![Complex64::new(0.0, 0.0); m + 1]; 2 * m];
    for i in 0..2 * m {
        q[i][1] = a[i + 1] / a[i];
    }
    for r in 1..=m {
        let len_e = 2 * (m - r) + 1;
        for i in 0..len_e {
            e[i][r] = q[i + 1][r] - q[i][r] + e[i + 1][r - 1];
        }
        if r < m {
            let len_q = 2 * (m - r - 1) + 2;
            for i in 0..len_q {
                q[i][r + 1] = q[i + 1][r] * e[i + 1][r] / e[i][r];
            }
        }
    }

    let mut d = vec![Complex64::new(0.0, 0.0); 2 * m + 1];
    d[0] = a[0];
    for r in 1..=m {
        d[2 * r - 1] = -q[0][r];
        d[2 * r] = -e[0][r];
    }

    // continued-fraction recurrences
    let z = Complex64::from_polar(1.0, PI * t / period);
    let mut big_a = vec![Complex64::new(0.0, 0.0); 2 * m + 2];
    let mut big_b = vec![Complex64::new(0.0, 0.0); 2 * m + 2];
    big_a[1] = d[0];
    big_b[0] = Complex64::new(1.0, 0.0);
    big_b[1] = Complex64::new(1.0, 0.0);
    for n in 2..=2 * m {
        big_a[n] = big_a[n - 1] + d[n - 1] * z * big_a[n - 2];
        big_b[n] = big_b[n - 1] + d[n - 1] * z * big_b[n - 2];
    }
    // tail of the fraction
    let h2m = 0.5 * (1.0 + (d[2 * m - 1] - d[2 * m]) * z);
    let rem = -h2m * (1.0 - (1.0 + d[2 * m] * z / (h2m * h2m)).sqrt());
    big_a[2 * m + 1] = big_a[2 * m] + rem * big_a[2 * m - 1];
    big_b[2 * m + 1] = big_b[2 * m] + rem * big_b[2 * m - 1];

    let scale = (gamma * t).exp() / period;
    let value = scale * (big_a[2 * m + 1] / big_b[2 * m + 1]).re;
    let previous = scale * (big_a[2 * m] / big_b[2 * m]).re;
    let remainder = if value.is_finite() && previous.is_finite() {
        (value - previous).abs() / value.abs().max(f64::MIN_POSITIVE)
    } else {
        f64::INFINITY
    };
    PointEstimate { value, remainder }
}

pub fn invert<F>(f: F, t_grid: &[f64]) -> Result<Inversion>
where
    F: Fn(Complex64) -> Complex64 + Sync + Send,
{
    invert_with(f, t_grid, &InversionConfig::default())
}

/// Inverts `f` on `t_grid`. Points whose convergence remainder exceeds
/// `cfg.warn_rel` are reported in [`Inversion::warnings`]; a non-finite value
/// is an error.
pub fn invert_with<F>(f: F, t_grid: &[f64], cfg: &InversionConfig) -> Result<Inversion>
where
    F: Fn(Complex64) -> Complex64 + Sync + Send,
{
    check_time_grid(t_grid)?;
    let points = par::map(t_grid, |&t| invert_at(&f, t, cfg));
    let mut warnings = Vec::new();
    let mut h = Vec::with_capacity(points.len());
    for (&t, p) in t_grid.iter().zip(&points) {
        if !p.value.is_finite() {
            return Err(Error::NotEvaluable { t });
        }
        if p.remainder > cfg.warn_rel {
            warnings.push(AccuracyWarning { t, remainder: p.remainder });
        }
        h.push(p.value);
    }
    Ok(Inversion {
        samples: TimeSamples { t: t_grid.to_vec(), h },
        warnings,
    })
}

/// Impulse response of a transfer function; evaluation failures on the
/// contour become NaN and surface as [`Error::NotEvaluable`].
pub fn invert_tf(tf: &FoTransferFunction, t_grid: &[f64]) -> Result<Inversion> {
    invert(|s| tf.eval(s).unwrap_or(Complex64::new(f64::NAN, f64::NAN)), t_grid)
}

/// Above this `t/tau` the asymptotic series replaces the erfcx difference.
const ASYMPTOTIC_FROM: f64 = 1e3;

/// `L^-1{1 / (1 + sqrt(tau s))}` at `t`:
/// `(1/tau) [1/sqrt(pi x) - e^x erfc(sqrt x)]` with `x = t/tau`.
pub fn analytic_half_order(tau: f64, t: f64) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau = {tau} must be positive")));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidArgument(format!("t = {t} must be positive")));
    }
    let x = t / tau;
    let lead = 1.0 / (PI * x).sqrt();
    let body = if x < ASYMPTOTIC_FROM {
        lead - erfcx(x.sqrt())
    } else {
        // 1/sqrt(pi x) * sum_{m>=1} (-1)^(m+1) (2m-1)!! / (2x)^m
        let mut term = 1.0;
        let mut sum = 0.0;
        for m in 1..=8 {
            term *= (2 * m - 1) as f64 / (2.0 * x);
            sum += if m % 2 == 1 { term } else { -term };
        }
        lead * sum
    };
    Ok(body / tau)
}

/// Step response of `1 / (1 + sqrt(tau s))`: `1 - e^x erfc(sqrt x)`.
pub fn analytic_half_order_step(tau: f64, t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        1.0 - erfcx((t / tau).sqrt())
    }
}
