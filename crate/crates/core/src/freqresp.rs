//! Frequency response, crossover search and stability margins.
//!
//! Phase is always unwrapped and anchored at the `w -> 0+` limit (0 deg for
//! a positive DC gain, -180 deg for a negative one), so reflex phase margins
//! above 180 deg are representable.
//!
//! Crossovers are located on a log-spaced bracketing grid spanning
//! `[1e-4, 1e4]` times a characteristic frequency (the plant's NMP zero
//! when known, otherwise 1 rad/s) and refined by bisection in `log w`.
//! When several crossings exist the lowest one is reported.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};
use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folti::FoTransferFunction;
use crate::par;

const TWO_PI: f64 = 2.0 * PI;

/// Sampled frequency response with an unwrapped phase track.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySeries {
    omega: Vec<f64>,
    response: Vec<Complex64>,
    phase_rad: Vec<f64>,
}

impl FrequencySeries {
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn response(&self) -> &[Complex64] {
        &self.response
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn magnitude_db(&self) -> Vec<f64> {
        self.response.iter().map(|r| 20.0 * r.norm().log10()).collect()
    }

    pub fn phase_deg(&self) -> Vec<f64> {
        self.phase_rad.iter().map(|p| p.to_degrees()).collect()
    }

    pub fn phase_rad(&self) -> &[f64] {
        &self.phase_rad
    }

    /// Columns `omega_rad_s,re,im,mag_db,phase_deg`, shared by Bode and
    /// Nyquist exports.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "omega_rad_s,re,im,mag_db,phase_deg")?;
        for (((om, r), db), ph) in self
            .omega
            .iter()
            .zip(&self.response)
            .zip(self.magnitude_db())
            .zip(self.phase_deg())
        {
            writeln!(w, "{om},{},{},{db},{ph}", r.re, r.im)?;
        }
        Ok(())
    }
}

/// Gain/phase margins of an open-loop transfer function. Absent crossovers
/// are `None`; a missing phase crossover means an infinite gain margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub omega_gc: Option<f64>,
    pub omega_u: Option<f64>,
    pub pm_deg: Option<f64>,
    pub gm_db: Option<f64>,
    pub kappa: Option<f64>,
    pub dc_gain: f64,
}

impl MarginReport {
    pub fn gm_is_infinite(&self) -> bool {
        self.omega_u.is_none()
    }
}

/// Bracketing grid and tolerance for crossover searches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossoverSearch {
    /// Lower window edge as a multiple of the characteristic frequency.
    pub window_lo: f64,
    /// Upper window edge as a multiple of the characteristic frequency.
    pub window_hi: f64,
    /// Number of log-spaced bracketing points.
    pub points: usize,
    /// Relative bisection tolerance on `w`.
    pub rel_tol: f64,
    /// Characteristic frequency; defaults to the NMP zero, else 1 rad/s.
    pub characteristic: Option<f64>,
}

impl Default for CrossoverSearch {
    fn default() -> Self {
        Self {
            window_lo: 1e-4,
            window_hi: 1e4,
            points: 400,
            rel_tol: 1e-10,
            characteristic: None,
        }
    }
}

/// Decades searched below the window when the DC gain exceeds unity but the
/// magnitude is already below one at the lower window edge.
const MAX_EXTRA_DECADES: i32 = 12;

impl CrossoverSearch {
    fn char_freq(&self, tf: &FoTransferFunction) -> f64 {
        self.characteristic.or(tf.nmp_zero()).unwrap_or(1.0)
    }

    fn grid(&self, tf: &FoTransferFunction) -> Vec<f64> {
        let c = self.char_freq(tf);
        log_grid(c * self.window_lo, c * self.window_hi, self.points.max(2))
    }
}

/// `points` log-spaced frequencies from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let last = (points - 1) as f64;
    (0..points)
        .map(|i| match i {
            0 => lo,
            i if i + 1 == points => hi,
            i => (a + (b - a) * i as f64 / last).exp(),
        })
        .collect()
}

fn jw(w: f64) -> Complex64 {
    Complex64::new(0.0, w)
}

/// Low-frequency phase limit used as the unwrapping anchor.
fn phase_anchor(tf: &FoTransferFunction, first: Complex64) -> f64 {
    match tf.dc_gain() {
        Ok(dc) if dc > 0.0 => 0.0,
        Ok(dc) if dc < 0.0 => -PI,
        _ => first.arg(),
    }
}

/// Moves `arg` by a multiple of 2 pi to lie nearest `reference`.
fn unwrap_near(arg: f64, reference: f64) -> f64 {
    arg + TWO_PI * ((reference - arg) / TWO_PI).round()
}

fn unwrap_track(tf: &FoTransferFunction, response: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(response.len());
    let mut prev = phase_anchor(tf, response[0]);
    for r in response {
        prev = unwrap_near(r.arg(), prev);
        out.push(prev);
    }
    out
}

fn eval_grid(tf: &FoTransferFunction, omega: &[f64]) -> Result<Vec<Complex64>> {
    par::map(omega, |&w| tf.eval(jw(w))).into_iter().collect()
}

/// Samples `tf(jw)` on `omega_grid`.
pub fn freq_response(tf: &FoTransferFunction, omega_grid: &[f64]) -> Result<FrequencySeries> {
    if omega_grid.len() < 2 {
        return Err(Error::InvalidArgument("frequency grid needs at least 2 points".into()));
    }
    if omega_grid.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
        return Err(Error::InvalidArgument("frequencies must be finite and > 0".into()));
    }
    if omega_grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidArgument("frequency grid must be strictly increasing".into()));
    }
    let response = eval_grid(tf, omega_grid)?;
    let phase_rad = unwrap_track(tf, &response);
    Ok(FrequencySeries {
        omega: omega_grid.to_vec(),
        response,
        phase_rad,
    })
}

/// Unwrapped phase at `w`, tracked up from well below the search window.
pub fn unwrapped_phase_at(tf: &FoTransferFunction, w: f64) -> Result<f64> {
    unwrapped_phase_with(tf, w, &CrossoverSearch::default())
}

fn unwrapped_phase_with(tf: &FoTransferFunction, w: f64, search: &CrossoverSearch) -> Result<f64> {
    let start = (search.char_freq(tf) * search.window_lo).min(w / 10.0);
    let decades = (w / start).log10();
    let points = (50.0 * decades).ceil() as usize + 2;
    let grid = log_grid(start, w, points);
    let resp = grid.iter().map(|&x| tf.eval(jw(x))).collect::<Result<Vec<_>>>()?;
    Ok(*unwrap_track(tf, &resp).last().unwrap())
}

/// Bisection in `log w` on a bracket where `f` changes sign.
fn bisect<F>(mut lo: f64, mut hi: f64, rel_tol: f64, mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut f_lo = f(lo)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    for _ in 0..200 {
        if hi - lo <= rel_tol * lo {
            break;
        }
        let mid = (lo * hi).sqrt();
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

pub fn gain_crossover(tf: &FoTransferFunction) -> Result<Option<f64>> {
    gain_crossover_with(tf, &CrossoverSearch::default())
}

/// Lowest `w` with `|tf(jw)| = 1`, or `None` when the window holds no crossing.
pub fn gain_crossover_with(tf: &FoTransferFunction, search: &CrossoverSearch) -> Result<Option<f64>> {
    let log_mag = |w: f64| tf.eval(jw(w)).map(|r| r.norm().ln());
    let grid = search.grid(tf);
    let mags = par::map(&grid, |&w| log_mag(w)).into_iter().collect::<Result<Vec<_>>>()?;

    // crossing hidden below the window
    let dc_above_one = tf.dc_gain().map(|d| d.abs() > 1.0).unwrap_or(true);
    if mags[0] < 0.0 && dc_above_one {
        let mut hi = grid[0];
        for _ in 0..MAX_EXTRA_DECADES {
            let lo = hi / 10.0;
            if log_mag(lo)? >= 0.0 {
                return bisect(lo, hi, search.rel_tol, log_mag).map(Some);
            }
            hi = lo;
        }
        return Ok(None);
    }

    for i in 0..grid.len() - 1 {
        if mags[i] == 0.0 {
            return Ok(Some(grid[i]));
        }
        if (mags[i] > 0.0) != (mags[i + 1] > 0.0) {
            return bisect(grid[i], grid[i + 1], search.rel_tol, log_mag).map(Some);
        }
    }
    Ok(None)
}

pub fn phase_crossover(tf: &FoTransferFunction) -> Result<Option<f64>> {
    phase_crossover_with(tf, &CrossoverSearch::default())
}

/// Lowest `w` where the unwrapped phase reaches -180 deg.
pub fn phase_crossover_with(tf: &FoTransferFunction, search: &CrossoverSearch) -> Result<Option<f64>> {
    let grid = search.grid(tf);
    let resp = eval_grid(tf, &grid)?;
    let phase = unwrap_track(tf, &resp);
    for i in 0..grid.len() - 1 {
        let (a, b) = (phase[i] + PI, phase[i + 1] + PI);
        if a == 0.0 {
            return Ok(Some(grid[i]));
        }
        if (a > 0.0) != (b > 0.0) {
            // continuity reference moves with the left bracket edge
            let mut reference = phase[i];
            let mut lo = grid[i];
            let mut hi = grid[i + 1];
            for _ in 0..200 {
                if hi - lo <= search.rel_tol * lo {
                    break;
                }
                let mid = (lo * hi).sqrt();
                let p = unwrap_near(tf.eval(jw(mid))?.arg(), reference);
                if (p + PI > 0.0) == (a > 0.0) {
                    lo = mid;
                    reference = p;
                } else {
                    hi = mid;
                }
            }
            return Ok(Some((lo * hi).sqrt()));
        }
    }
    Ok(None)
}

pub fn margins(tf: &FoTransferFunction) -> Result<MarginReport> {
    margins_with(tf, &CrossoverSearch::default())
}

pub fn margins_with(tf: &FoTransferFunction, search: &CrossoverSearch) -> Result<MarginReport> {
    let dc_gain = match tf.dc_gain() {
        Ok(d) => d,
        Err(Error::InfiniteDcGain) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let omega_gc = gain_crossover_with(tf, search)?;
    let pm_deg = match omega_gc {
        Some(w) => Some(180.0 + unwrapped_phase_with(tf, w, search)?.to_degrees()),
        None => None,
    };
    let omega_u = phase_crossover_with(tf, search)?;
    let (gm_db, kappa) = match omega_u {
        Some(w) => {
            let mag = tf.eval(jw(w))?.norm();
            let kappa = dc_gain.is_finite().then(|| mag / dc_gain.abs());
            (Some(-20.0 * mag.log10()), kappa)
        }
        None => (None, None),
    };
    Ok(MarginReport {
        omega_gc,
        omega_u,
        pm_deg,
        gm_db,
        kappa,
        dc_gain,
    })
}

/// Controllability heuristic `|P(j w_u) / P(0)|` of a raw plant.
pub fn kappa(plant: &FoTransferFunction) -> Result<Option<f64>> {
    Ok(margins(plant)?.kappa)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha = {alpha} outside (0, 1]")))
    }
}

/// `|1 - (s/z)^alpha|` at `s = j z`: `sqrt(2 - 2 cos(pi alpha / 2))`.
pub fn nmp_mag_at_zero_freq(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((2.0 - 2.0 * (PI * alpha / 2.0).cos()).sqrt())
}

/// Phase of `1 - (s/z)^alpha` at `s = j z`: `-pi/2 + pi alpha / 4` (radians).
pub fn nmp_phase_at_zero_freq(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(-FRAC_PI_2 + FRAC_PI_4 * alpha)
}

/// Drop of `|1 - (s/z)^alpha|` at `s = j z` relative to the integer zero:
/// `sqrt(2) (1 - sqrt(1 - cos(pi alpha / 2)))`.
pub fn gain_reduction_at_zero_freq(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(SQRT_2 * (1.0 - (1.0 - (PI * alpha / 2.0).cos()).sqrt()))
}

/// Minimum of `|1 - (j w / z)^alpha|` over `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaMin {
    /// `cos(pi alpha / 2)^(1/alpha) z`; zero when `alpha = 1`.
    pub omega: f64,
    /// False when the magnitude increases monotonically from DC.
    pub has_decreasing_region: bool,
}

pub fn omega_min(alpha: f64, z_nmp: f64) -> Result<OmegaMin> {
    check_alpha(alpha)?;
    if !(z_nmp.is_finite() && z_nmp > 0.0) {
        return Err(Error::InvalidArgument(format!("z_nmp = {z_nmp} must be positive")));
    }
    if alpha >= 1.0 {
        return Ok(OmegaMin {
            omega: 0.0,
            has_decreasing_region: false,
        });
    }
    Ok(OmegaMin {
        omega: (PI * alpha / 2.0).cos().powf(1.0 / alpha) * z_nmp,
        has_decreasing_region: true,
    })
}
