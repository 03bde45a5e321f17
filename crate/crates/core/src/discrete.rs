//! Discrete-time realizations: the canceller as a DC-normalized FIR filter
//! and rational plants as zero-order-hold (step-invariant) recurrences.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::{self, BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::canceller::make_canceller;
use crate::error::{Error, Result};
use crate::folti::FoTransferFunction;
use crate::ilt::{invert_at, InversionConfig};
use crate::par;

/// Gauss-Legendre points per sampling cell.
const CELL_NODES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
    period: f64,
    dc_scale: f64,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>, period: f64) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidArgument("FIR needs at least one tap".into()));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("FIR taps must be finite".into()));
        }
        check_period(period)?;
        Ok(Self {
            taps,
            period,
            dc_scale: 1.0,
        })
    }

    /// Pass-through filter `[1]`.
    pub fn identity(period: f64) -> Result<Self> {
        Self::new(vec![1.0], period)
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Accumulated multiplier applied by [`normalize_dc`].
    pub fn dc_scale(&self) -> f64 {
        self.dc_scale
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn tap_sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    /// `sum_k taps[k] e^(-j w T k)`.
    pub fn freq_response(&self, omega: f64) -> Complex64 {
        let zinv = Complex64::from_polar(1.0, -omega * self.period);
        self.taps.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &t| acc * zinv + t)
    }

    pub fn runner(&self) -> FirRunner<'_> {
        FirRunner {
            fir: self,
            history: VecDeque::from(vec![0.0; self.taps.len()]),
        }
    }

    /// Header lines `# T=...`, `# N=...`, `# dc_scale=...`, then `index,tap`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# T={}", self.period)?;
        writeln!(w, "# N={}", self.taps.len())?;
        writeln!(w, "# dc_scale={}", self.dc_scale)?;
        writeln!(w, "index,tap")?;
        for (i, t) in self.taps.iter().enumerate() {
            writeln!(w, "{i},{t}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let bad = |m: String| Error::InvalidArgument(format!("FIR CSV: {m}"));
        let mut period = None;
        let mut n = None;
        let mut dc_scale = None;
        let mut taps = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            let line = line.trim();
            if let Some(meta) = line.strip_prefix('#') {
                let (key, val) = meta.trim().split_once('=').ok_or_else(|| bad(format!("line {}: bad header", lineno + 1)))?;
                let parse = |v: &str| v.parse::<f64>().map_err(|e| bad(format!("line {}: {e}", lineno + 1)));
                match key {
                    "T" => period = Some(parse(val)?),
                    "N" => n = Some(val.parse::<usize>().map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?),
                    "dc_scale" => dc_scale = Some(parse(val)?),
                    _ => {}
                }
            } else if line.is_empty() || line == "index,tap" {
                continue;
            } else {
                let (i, t) = line.split_once(',').ok_or_else(|| bad(format!("line {}: expected index,tap", lineno + 1)))?;
                let i: usize = i.parse().map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
                if i != taps.len() {
                    return Err(bad(format!("line {}: index {i} out of sequence", lineno + 1)));
                }
                taps.push(t.parse::<f64>().map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?);
            }
        }
        let period = period.ok_or_else(|| bad("missing T header".into()))?;
        if let Some(n) = n {
            if n != taps.len() {
                return Err(bad(format!("header says N={n}, found {} taps", taps.len())));
            }
        }
        let mut fir = Self::new(taps, period)?;
        fir.dc_scale = dc_scale.unwrap_or(1.0);
        Ok(fir)
    }
}

/// Streaming FIR evaluation with zero initial history.
#[derive(Debug, Clone)]
pub struct FirRunner<'a> {
    fir: &'a FirFilter,
    history: VecDeque<f64>,
}

impl FirRunner<'_> {
    pub fn step(&mut self, u: f64) -> f64 {
        self.history.pop_back();
        self.history.push_front(u);
        self.fir.taps.iter().zip(&self.history).map(|(t, x)| t * x).sum()
    }
}

fn check_period(period: f64) -> Result<()> {
    if period.is_finite() && period > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sample period {period} must be positive")))
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// `int_{t0}^{t1} h(t) dt` with `t = u^2`, which absorbs a `1/sqrt(t)`
/// singularity at the origin.
fn cell_integral<H>(h: &H, t0: f64, t1: f64, rule: &[(f64, f64)]) -> Result<f64>
where
    H: Fn(f64) -> f64 + ?Sized,
{
    let (u0, u1) = (t0.sqrt(), t1.sqrt());
    let (mid, half) = (0.5 * (u0 + u1), 0.5 * (u1 - u0));
    let mut sum = 0.0;
    for &(x, w) in rule {
        let u = mid + half * x;
        let t = u * u;
        let v = h(t);
        if !v.is_finite() {
            return Err(Error::NotEvaluable { t });
        }
        sum += w * 2.0 * u * v;
    }
    Ok(sum * half)
}

/// Unnormalized impulse-invariant taps: `taps[k]` is the integral of `h`
/// over the cell `[kT, (k+1)T]`, i.e. `T` times the cell average of `h`.
pub fn impulse_invariance_raw<H>(h: H, period: f64, len: usize) -> Result<FirFilter>
where
    H: Fn(f64) -> f64 + Sync + Send,
{
    check_period(period)?;
    if len == 0 {
        return Err(Error::InvalidArgument("FIR length must be >= 1".into()));
    }
    let rule = gauss_legendre(CELL_NODES);
    let cells: Vec<usize> = (0..len).collect();
    let taps = par::map(&cells, |&k| cell_integral(&h, k as f64 * period, (k + 1) as f64 * period, &rule))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    FirFilter::new(taps, period)
}

/// Impulse-invariant FIR of length `len` for the impulse response `h`,
/// normalized to unit DC gain.
pub fn impulse_invariance<H>(h: H, period: f64, len: usize) -> Result<FirFilter>
where
    H: Fn(f64) -> f64 + Sync + Send,
{
    normalize_dc(&impulse_invariance_raw(h, period, len)?)
}

/// Scales the taps to sum to one; `dc_scale` accumulates the multiplier.
pub fn normalize_dc(fir: &FirFilter) -> Result<FirFilter> {
    let sum = fir.tap_sum();
    if sum == 0.0 || !sum.is_finite() {
        return Err(Error::ZeroTapSum);
    }
    Ok(FirFilter {
        taps: fir.taps.iter().map(|t| t / sum).collect(),
        period: fir.period,
        dc_scale: fir.dc_scale / sum,
    })
}

/// FIR realization of the order-`n` canceller: numerical inverse Laplace
/// transform, impulse invariance, DC normalization. `n = 1` is the
/// pass-through `[1]`.
pub fn canceller_fir(z_nmp: f64, n: u32, period: f64, len: usize) -> Result<FirFilter> {
    canceller_fir_raw(z_nmp, n, period, len).and_then(|f| if n == 1 { Ok(f) } else { normalize_dc(&f) })
}

/// As [`canceller_fir`] without the final normalization.
pub fn canceller_fir_raw(z_nmp: f64, n: u32, period: f64, len: usize) -> Result<FirFilter> {
    let c = make_canceller(z_nmp, n)?;
    if n == 1 {
        return FirFilter::identity(period);
    }
    let cfg = InversionConfig::default();
    let f = |s: Complex64| c.eval(s).unwrap_or(Complex64::new(f64::NAN, f64::NAN));
    impulse_invariance_raw(|t| invert_at(&f, t, &cfg).value, period, len)
}

/// `y[k] = sum_m taps[m] u[k - m]`, causal, zero history.
pub fn fir_apply(fir: &FirFilter, u: &[f64]) -> Vec<f64> {
    let mut r = fir.runner();
    u.iter().map(|&x| r.step(x)).collect()
}

/// Step-invariant recurrence
/// `y[k] = sum_j b[j] u[k-j] - sum_{i>=1} a[i] y[k-i]` with `a[0] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePlant {
    b: Vec<f64>,
    a: Vec<f64>,
    period: f64,
}

impl DiscretePlant {
    pub fn input_coeffs(&self) -> &[f64] {
        &self.b
    }

    pub fn output_coeffs(&self) -> &[f64] {
        &self.a
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    pub fn runner(&self) -> PlantRunner<'_> {
        let n = self.a.len();
        PlantRunner {
            plant: self,
            u: VecDeque::from(vec![0.0; n]),
            y: VecDeque::from(vec![0.0; n]),
        }
    }

    /// Samples `y(kT)`, `k = 0..len`, for a unit step applied at `t = 0`.
    pub fn step_response(&self, len: usize) -> Vec<f64> {
        let mut r = self.runner();
        (0..len).map(|_| r.step(1.0)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct PlantRunner<'a> {
    plant: &'a DiscretePlant,
    u: VecDeque<f64>,
    y: VecDeque<f64>,
}

impl PlantRunner<'_> {
    /// Advances one sample with input `u` held over the coming period and
    /// returns the output at the current instant.
    pub fn step(&mut self, u: f64) -> f64 {
        self.u.pop_back();
        self.u.push_front(u);
        let forced: f64 = self.plant.b.iter().zip(&self.u).map(|(b, u)| b * u).sum();
        let free: f64 = self.plant.a[1..].iter().zip(&self.y).map(|(a, y)| a * y).sum();
        let y = forced - free;
        self.y.pop_back();
        self.y.push_front(y);
        y
    }
}

fn trim_trailing_zeros(c: &[f64]) -> Vec<f64> {
    let end = c.iter().rposition(|&x| x != 0.0).map_or(0, |i| i + 1);
    c[..end].to_vec()
}

/// Routh-Hurwitz test for all roots strictly in the open left half-plane.
/// `desc` holds polynomial coefficients from the highest power down.
fn is_hurwitz(desc: &[f64]) -> bool {
    let n = desc.len() - 1;
    if n == 0 {
        return true;
    }
    let sign = desc[0].signum();
    if desc.iter().any(|&c| c == 0.0 || c.signum() != sign) {
        return false;
    }
    let mut prev: Vec<f64> = desc.iter().step_by(2).copied().collect();
    let mut cur: Vec<f64> = desc.iter().skip(1).step_by(2).copied().collect();
    for _ in 0..n - 1 {
        let lead = cur[0];
        if lead == 0.0 || lead.signum() != sign {
            return false;
        }
        let next: Vec<f64> = (0..prev.len().saturating_sub(1))
            .map(|i| {
                let c = cur.get(i + 1).copied().unwrap_or(0.0);
                (lead * prev[i + 1] - prev[0] * c) / lead
            })
            .collect();
        if next.is_empty() {
            return false;
        }
        prev = cur;
        cur = next;
    }
    cur[0] != 0.0 && cur[0].signum() == sign
}

/// Zero-order-hold equivalent of an integer-order, proper, stable plant:
/// the discrete step response equals the continuous one at `t = kT`.
pub fn zoh_discretize(plant: &FoTransferFunction, period: f64) -> Result<DiscretePlant> {
    check_period(period)?;
    if !plant.is_integer_order() {
        return Err(Error::InvalidArgument("zero-order hold needs an integer-order plant".into()));
    }
    let num = trim_trailing_zeros(plant.num());
    let den = trim_trailing_zeros(plant.den());
    let n = den.len() - 1;
    if num.len() > den.len() {
        return Err(Error::InvalidArgument("plant must be proper".into()));
    }
    let desc: Vec<f64> = den.iter().rev().copied().collect();
    if plant.has_origin_pole() || !is_hurwitz(&desc) {
        return Err(Error::UnstablePlant("poles must lie strictly in the left half-plane".into()));
    }
    let g = plant.gain();
    let lead = desc[0];
    // monic descending denominator s^n + a1 s^(n-1) + ... + an
    let a_c: Vec<f64> = desc.iter().map(|c| c / lead).collect();
    let mut b_c = vec![0.0; n + 1];
    for (k, &c) in num.iter().enumerate() {
        b_c[n - k] = g * c / lead;
    }
    if n == 0 {
        return Ok(DiscretePlant {
            b: vec![b_c[0]],
            a: vec![1.0],
            period,
        });
    }

    // controllable canonical form
    let d = b_c[0];
    let mut m = DMatrix::<f64>::zeros(n + 1, n + 1);
    for j in 0..n {
        m[(0, j)] = -a_c[j + 1] * period;
    }
    for i in 1..n {
        m[(i, i - 1)] = period;
    }
    m[(0, n)] = period;
    let e = m.exp();
    let phi = e.view((0, 0), (n, n)).into_owned();
    let gamma = e.view((0, n), (n, 1)).into_owned();
    let c = DMatrix::<f64>::from_fn(1, n, |_, j| b_c[j + 1] - a_c[j + 1] * d);

    // Faddeev-LeVerrier characteristic polynomial of phi
    let mut a = vec![1.0; n + 1];
    let mut acc = DMatrix::<f64>::identity(n, n);
    for (k, ak) in a.iter_mut().enumerate().skip(1) {
        let pm = &phi * &acc;
        *ak = -pm.trace() / k as f64;
        acc = pm + DMatrix::<f64>::identity(n, n) * *ak;
    }

    // Markov parameters g[0] = D, g[k] = C phi^(k-1) gamma
    let mut markov = vec![d];
    let mut v = gamma;
    for _ in 1..=n {
        markov.push((&c * &v)[(0, 0)]);
        v = &phi * v;
    }
    let b = (0..=n).map(|j| (0..=j).map(|i| a[i] * markov[j - i]).sum()).collect();
    Ok(DiscretePlant { b, a, period })
}
