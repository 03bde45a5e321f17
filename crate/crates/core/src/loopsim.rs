//! Sampled unity-feedback loop: proportional gain, optional FIR canceller,
//! zero-order-hold plant. The controller works on the previous output
//! sample (one period of computation delay).

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::discrete::{canceller_fir, zoh_discretize, DiscretePlant, FirFilter};
use crate::error::{Error, Result};
use crate::folti::FoTransferFunction;

/// Output magnitude treated as divergence.
const BLOW_UP: f64 = 1e6;
/// Fraction of the trajectory averaged for the steady-state estimate.
const FINAL_WINDOW: f64 = 0.1;
const SETTLING_BAND: f64 = 0.02;
/// Allowed spread of the final window before a run counts as unsettled.
const STEADY_SPREAD: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    kp: f64,
    canceller: Option<FirFilter>,
    plant: DiscretePlant,
    t_final: f64,
    reference: f64,
}

impl LoopConfig {
    pub fn new(kp: f64, canceller: Option<FirFilter>, plant: DiscretePlant, t_final: f64) -> Result<Self> {
        if !kp.is_finite() {
            return Err(Error::InvalidArgument("kp must be finite".into()));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::InvalidArgument(format!("t_final = {t_final} must be positive")));
        }
        if let Some(fir) = &canceller {
            if (fir.period() - plant.period()).abs() > 1e-12 * plant.period() {
                return Err(Error::InvalidArgument(format!(
                    "canceller period {} differs from plant period {}",
                    fir.period(),
                    plant.period()
                )));
            }
        }
        Ok(Self {
            kp,
            canceller,
            plant,
            t_final,
            reference: 1.0,
        })
    }

    /// Discretizes `plant` and, for `n >= 2`, realizes the order-`n`
    /// canceller as a `fir_len`-tap FIR at the same period.
    pub fn build(
        plant: &FoTransferFunction,
        kp: f64,
        canceller_order: Option<u32>,
        period: f64,
        fir_len: usize,
        t_final: f64,
    ) -> Result<Self> {
        let dp = zoh_discretize(plant, period)?;
        let fir = match canceller_order {
            Some(n) if n >= 2 => {
                let z = plant.nmp_zero().ok_or(Error::MissingNmpZero)?;
                Some(canceller_fir(z, n, period, fir_len)?)
            }
            _ => None,
        };
        Self::new(kp, fir, dp, t_final)
    }

    pub fn with_reference(mut self, reference: f64) -> Self {
        self.reference = reference;
        self
    }

    pub fn kp(&self) -> f64 {
        self.kp
    }

    pub fn canceller(&self) -> Option<&FirFilter> {
        self.canceller.as_ref()
    }

    pub fn plant(&self) -> &DiscretePlant {
        &self.plant
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    fn samples(&self) -> usize {
        (self.t_final / self.plant.period()).round() as usize + 1
    }
}

/// Signals at each sample `t = kT`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepTrajectory {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub e: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub y: Vec<f64>,
}

impl StepTrajectory {
    fn with_capacity(n: usize) -> Self {
        Self {
            t: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
            e: Vec::with_capacity(n),
            u1: Vec::with_capacity(n),
            u2: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, t: f64, r: f64, e: f64, u1: f64, u2: f64, y: f64) {
        self.t.push(t);
        self.r.push(r);
        self.e.push(e);
        self.u1.push(u1);
        self.u2.push(u2);
        self.y.push(y);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Columns `t_s,r,e,u1,u2,y`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t_s,r,e,u1,u2,y")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.t[k], self.r[k], self.e[k], self.u1[k], self.u2[k], self.y[k]
            )?;
        }
        Ok(())
    }
}

/// Closed-loop response to a step of `cfg.reference()`.
pub fn simulate_closed_step(cfg: &LoopConfig) -> Result<StepTrajectory> {
    let period = cfg.plant.period();
    let n = cfg.samples();
    let mut plant = cfg.plant.runner();
    let mut fir = cfg.canceller.as_ref().map(FirFilter::runner);
    let mut out = StepTrajectory::with_capacity(n);
    let mut y_prev = 0.0;
    for k in 0..n {
        let t = k as f64 * period;
        let r = cfg.reference;
        let e = r - y_prev;
        let u1 = cfg.kp * e;
        let u2 = match fir.as_mut() {
            Some(f) => f.step(u1),
            None => u1,
        };
        let y = plant.step(u2);
        if y.is_nan() || y.abs() > BLOW_UP {
            return Err(Error::Divergence { time_s: t });
        }
        out.push(t, r, e, u1, u2, y);
        y_prev = y;
    }
    Ok(out)
}

/// Plant driven directly by a unit step.
pub fn simulate_open_step(plant: &DiscretePlant, t_final: f64) -> Result<StepTrajectory> {
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidArgument(format!("t_final = {t_final} must be positive")));
    }
    let period = plant.period();
    let n = (t_final / period).round() as usize + 1;
    let mut runner = plant.runner();
    let mut out = StepTrajectory::with_capacity(n);
    for k in 0..n {
        let y = runner.step(1.0);
        out.push(k as f64 * period, 1.0, 1.0 - y, 1.0, 1.0, y);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Largest excursion opposite to the steady state, percent of steady state.
    pub undershoot_pct: f64,
    /// Peak above steady state, percent of steady state.
    pub overshoot_pct: f64,
    /// 10% to 90% of steady state.
    pub rise_time_s: f64,
    /// Last entry into the 2% band; `t_final` when never settled.
    pub settling_time_s: f64,
    /// Mean of the final 10% of samples.
    pub steady_state: f64,
    pub settled: bool,
}

/// First time the series reaches `level` (linear interpolation).
fn first_reach(t: &[f64], y: &[f64], level: f64) -> Option<f64> {
    let i = y.iter().position(|&v| v >= level)?;
    if i == 0 {
        return Some(t[0]);
    }
    let frac = (level - y[i - 1]) / (y[i] - y[i - 1]);
    Some(t[i - 1] + frac * (t[i] - t[i - 1]))
}

pub fn step_metrics(traj: &StepTrajectory) -> Result<StepMetrics> {
    let (t, y) = (&traj.t, &traj.y);
    if y.len() < 2 {
        return Err(Error::UndefinedMetrics("trajectory too short".into()));
    }
    let window = ((y.len() as f64 * FINAL_WINDOW).ceil() as usize).max(1);
    let tail = &y[y.len() - window..];
    let ss = tail.iter().sum::<f64>() / window as f64;
    if ss.is_nan() || ss.abs() <= 1e-12 {
        return Err(Error::UndefinedMetrics("steady state is zero".into()));
    }
    // orient so the steady state is positive
    let sign = ss.signum();
    let level = ss.abs();
    let yn: Vec<f64> = y.iter().map(|v| v * sign).collect();

    let min = yn.iter().copied().fold(f64::INFINITY, f64::min);
    let max = yn.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let undershoot_pct = (-min).max(0.0) / level * 100.0;
    let overshoot_pct = (max - level).max(0.0) / level * 100.0;

    let t10 = first_reach(t, &yn, 0.1 * level).unwrap_or(f64::NAN);
    let t90 = first_reach(t, &yn, 0.9 * level).unwrap_or(f64::NAN);
    let rise_time_s = (t90 - t10).max(0.0);

    let band = SETTLING_BAND * level;
    let t_end = *t.last().unwrap();
    let last_out = yn.iter().rposition(|v| (v - level).abs() > band);
    let settling_time_s = match last_out {
        None => t[0],
        Some(i) if i + 1 == yn.len() => t_end,
        Some(i) => {
            let edge = if yn[i] > level { level + band } else { level - band };
            let frac = (yn[i] - edge) / (yn[i] - yn[i + 1]);
            t[i] + frac * (t[i + 1] - t[i])
        }
    };
    let tail_min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let tail_max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let settled = (tail_max - tail_min) / level < STEADY_SPREAD && last_out.is_none_or(|i| i + 1 < yn.len());

    Ok(StepMetrics {
        undershoot_pct,
        overshoot_pct,
        rise_time_s,
        settling_time_s,
        steady_state: ss,
        settled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::folti::{benchmark_plant, PlantParams};
    use approx::assert_relative_eq;

    const T: f64 = 0.05;

    fn plant() -> FoTransferFunction {
        benchmark_plant(PlantParams::default()).unwrap()
    }

    fn closed(kp: f64, n: Option<u32>) -> StepTrajectory {
        simulate_closed_step(&LoopConfig::build(&plant(), kp, n, T, 100, 30.0).unwrap()).unwrap()
    }

    /// Continuous benchmark step response by partial fractions.
    fn benchmark_step(t: f64) -> f64 {
        let (a, b) = (0.495, 0.164);
        let (p1, p2) = (-1.0 / a, -1.0 / b);
        let dd = |s: f64| a * (1.0 + b * s) + b * (1.0 + a * s);
        let res = |p: f64| (1.0 - a * p) / (p * dd(p));
        1.0 + res(p1) * (p1 * t).exp() + res(p2) * (p2 * t).exp()
    }

    #[test]
    fn bare_loop_steady_state() {
        let m = step_metrics(&closed(1.07, None)).unwrap();
        assert!((m.steady_state - 1.07 / 2.07).abs() < 1e-4);
        assert!(m.settled);
    }

    #[test]
    fn zero_gain_is_open_switch() {
        let traj = closed(0.0, None);
        assert!(traj.y.iter().all(|&y| y == 0.0));
        assert!(matches!(step_metrics(&traj), Err(Error::UndefinedMetrics(_))));
    }

    #[test]
    fn cancelled_loop_steady_state() {
        // the sampled kp = 1.85 loop is lightly damped; give it time to ring down
        let cfg = LoopConfig::build(&plant(), 1.85, Some(2), T, 100, 300.0).unwrap();
        let m = step_metrics(&simulate_closed_step(&cfg).unwrap()).unwrap();
        assert!((m.steady_state - 1.85 / 2.85).abs() < 1e-4, "{m:?}");
        assert!(m.settled);
    }

    #[test]
    fn dc_consistency_over_gains() {
        for kp in [0.25, 0.5, 1.0, 1.07] {
            let m = step_metrics(&closed(kp, None)).unwrap();
            assert!((m.steady_state - kp / (1.0 + kp)).abs() < 1e-3, "bare kp {kp}");
        }
        for kp in [0.5, 1.07, 1.5] {
            let m = step_metrics(&closed(kp, Some(2))).unwrap();
            assert!((m.steady_state - kp / (1.0 + kp)).abs() < 1e-3, "cancelled kp {kp}");
        }
    }

    #[test]
    fn open_loop_matches_analytic_response() {
        let dp = zoh_discretize(&plant(), T).unwrap();
        let traj = simulate_open_step(&dp, 30.0).unwrap();
        for (t, y) in traj.t.iter().zip(&traj.y) {
            assert!((y - benchmark_step(*t)).abs() < 1e-10);
        }
        // single zero crossing after an early minimum
        let crossings = traj.y.windows(2).filter(|w| w[0] < 0.0 && w[1] >= 0.0).count();
        assert_eq!(crossings, 1);
        let argmin = (0..traj.len()).min_by(|&a, &b| traj.y[a].total_cmp(&traj.y[b])).unwrap();
        assert!(traj.t[argmin] < 0.5);
    }

    #[test]
    fn open_loop_metrics() {
        let dp = zoh_discretize(&plant(), T).unwrap();
        let m = step_metrics(&simulate_open_step(&dp, 30.0).unwrap()).unwrap();
        assert!((m.steady_state - 1.0).abs() < 1e-3);
        // sampled minimum of the analytic response
        let oracle = (0..=600).map(|k| benchmark_step(k as f64 * T)).fold(f64::INFINITY, f64::min);
        assert_relative_eq!(m.undershoot_pct, -oracle * 100.0, max_relative = 1e-6);
        assert_eq!(m.overshoot_pct, 0.0);
    }

    #[test]
    fn first_order_lag_metrics() {
        let lag = FoTransferFunction::new(1.0, 1, vec![1.0], vec![1.0, 1.0]).unwrap();
        let dp = zoh_discretize(&lag, 0.01).unwrap();
        let m = step_metrics(&simulate_open_step(&dp, 20.0).unwrap()).unwrap();
        assert_eq!(m.undershoot_pct, 0.0);
        assert!(m.overshoot_pct < 1e-5);
        // ln(9) rise and ln(50) settling for 1 - e^-t
        assert!((m.rise_time_s - 9f64.ln()).abs() < 1e-3);
        assert!((m.settling_time_s - 50f64.ln()).abs() < 1e-2);
        assert!(m.settled);
    }

    #[test]
    fn scenario_one_ordering() {
        let bare = step_metrics(&closed(1.07, None)).unwrap();
        let canc = step_metrics(&closed(1.07, Some(2))).unwrap();
        assert!(canc.undershoot_pct < bare.undershoot_pct);
        assert!(canc.overshoot_pct < bare.overshoot_pct);
        assert!(canc.settling_time_s < bare.settling_time_s);
        assert!(canc.rise_time_s > bare.rise_time_s);
    }

    #[test]
    fn scenario_two_ordering() {
        let bare = step_metrics(&closed(1.07, None)).unwrap();
        let canc = step_metrics(&closed(1.85, Some(2))).unwrap();
        assert!(canc.undershoot_pct < bare.undershoot_pct);
        assert!((1.0 - canc.steady_state).abs() < (1.0 - bare.steady_state).abs());
    }

    #[test]
    fn divergence_is_reported() {
        match simulate_closed_step(&LoopConfig::build(&plant(), 5.0, None, T, 100, 30.0).unwrap()) {
            Err(Error::Divergence { time_s }) => assert!(time_s > 0.0 && time_s < 30.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn runs_are_bit_identical() {
        let cfg = LoopConfig::build(&plant(), 1.85, Some(2), T, 100, 30.0).unwrap();
        assert_eq!(simulate_closed_step(&cfg).unwrap(), simulate_closed_step(&cfg).unwrap());
    }

    #[test]
    fn signals_follow_the_loop_equations() {
        let cfg = LoopConfig::build(&plant(), 1.07, Some(2), T, 100, 2.0).unwrap();
        let tr = simulate_closed_step(&cfg).unwrap();
        assert_eq!(tr.len(), 41);
        assert_eq!(tr.e[0], 1.0);
        for k in 1..tr.len() {
            assert_eq!(tr.e[k], tr.r[k] - tr.y[k - 1]);
            assert_eq!(tr.u1[k], 1.07 * tr.e[k]);
        }
        let fir_out = crate::discrete::fir_apply(cfg.canceller().unwrap(), &tr.u1);
        assert_eq!(fir_out, tr.u2);
    }

    #[test]
    fn period_mismatch_rejected() {
        let dp = zoh_discretize(&plant(), T).unwrap();
        let fir = FirFilter::identity(0.1).unwrap();
        assert!(LoopConfig::new(1.0, Some(fir), dp.clone(), 10.0).is_err());
        assert!(LoopConfig::new(1.0, None, dp, 0.0).is_err());
    }

    #[test]
    fn negative_steady_state_is_oriented() {
        let cfg = LoopConfig::build(&plant(), 1.07, None, T, 100, 30.0).unwrap().with_reference(-2.0);
        let m = step_metrics(&simulate_closed_step(&cfg).unwrap()).unwrap();
        let pos = step_metrics(&closed(1.07, None)).unwrap();
        assert_relative_eq!(m.steady_state, -2.0 * pos.steady_state, max_relative = 1e-12);
        assert_relative_eq!(m.undershoot_pct, pos.undershoot_pct, max_relative = 1e-9);
    }

    #[test]
    fn csv_columns() {
        let mut buf = Vec::new();
        closed(1.07, None).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_s,r,e,u1,u2,y\n0,1,1,1.07,1.07,0\n"));
    }
}
