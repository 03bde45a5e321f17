//! Fractional canceller and the proportional-gain design procedures.
//!
//! `C(s) = 1 / sum_{k=1..n} (s/z)^((k-1)/n)` turns `1 - s/z` into
//! `1 - (s/z)^(1/n)` when placed in series with the plant. The design
//! routines pick the proportional gain(s) by bisection on phase margin,
//! and the canceller order by exhaustive search over `n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folti::FoTransferFunction;
use crate::freqresp::{margins, MarginReport};
use crate::par;

/// Residual allowed at `s = z` when checking that the augmented plant
/// still vanishes at the NMP zero.
const ZERO_RESIDUAL: f64 = 1e-9;

pub fn make_canceller(z_nmp: f64, n: u32) -> Result<FoTransferFunction> {
    if !(z_nmp.is_finite() && z_nmp > 0.0) {
        return Err(Error::InvalidArgument(format!("z_nmp = {z_nmp} must be positive")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("canceller order n must be >= 1".into()));
    }
    // (s/z)^(k/n) = z^(-k/n) x^k with x = s^(1/n)
    let den = (0..n).map(|k| z_nmp.powf(-(k as f64) / n as f64)).collect();
    FoTransferFunction::new(1.0, n, vec![1.0], den)
}

/// `C(s) P(s)` for a plant carrying NMP-zero metadata.
pub fn augmented_plant(plant: &FoTransferFunction, n: u32) -> Result<FoTransferFunction> {
    let z = plant.nmp_zero().ok_or(Error::MissingNmpZero)?;
    let aug = make_canceller(z, n)?.series(plant);
    let at_zero = aug.eval(num_complex::Complex64::new(z, 0.0))?.norm();
    if at_zero >= ZERO_RESIDUAL {
        return Err(Error::InvalidTransferFunction(format!(
            "plant metadata places the NMP zero at {z}, but |C P| = {at_zero:e} there"
        )));
    }
    Ok(aug)
}

/// Search settings for the gain and order searches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions {
    pub k_min: f64,
    pub k_max: f64,
    /// Log-spaced gains scanned to bracket the target margin.
    pub scan_points: usize,
    /// Relative bisection tolerance on the gain.
    pub rel_tol: f64,
    /// Largest canceller order tried by [`design_same_dc`].
    pub n_max: u32,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            k_min: 1e-3,
            k_max: 1e3,
            scan_points: 241,
            rel_tol: 1e-6,
            n_max: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CancellerDesign {
    pub n: u32,
    pub alpha: f64,
    pub z_nmp: f64,
    pub kp1: f64,
    pub kp2: f64,
    /// `kp1 P` without canceller.
    pub report_before: MarginReport,
    /// `kp2 C P`.
    pub report_after: MarginReport,
    /// `kappa` of the raw plant.
    pub kappa: Option<f64>,
}

impl CancellerDesign {
    /// False when the requested margin forced the gain down (`kp2 <= kp1`).
    pub fn gain_increased(&self) -> bool {
        self.kp2 > self.kp1
    }

    pub fn report(&self) -> DesignReport {
        DesignReport {
            n: self.n,
            alpha: self.alpha,
            z_nmp: self.z_nmp,
            kp1: self.kp1,
            kp2: self.kp2,
            pm_before_deg: self.report_before.pm_deg,
            pm_after_deg: self.report_after.pm_deg,
            gm_before_db: self.report_before.gm_db,
            gm_after_db: self.report_after.gm_db,
            wgc_before: self.report_before.omega_gc,
            wgc_after: self.report_after.omega_gc,
            kappa: self.kappa,
            kp2_above_kp1: self.gain_increased(),
        }
    }
}

/// Flat JSON view of a design. Absent margins serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub n: u32,
    pub alpha: f64,
    pub z_nmp: f64,
    pub kp1: f64,
    pub kp2: f64,
    pub pm_before_deg: Option<f64>,
    pub pm_after_deg: Option<f64>,
    pub gm_before_db: Option<f64>,
    pub gm_after_db: Option<f64>,
    pub wgc_before: Option<f64>,
    pub wgc_after: Option<f64>,
    pub kappa: Option<f64>,
    pub kp2_above_kp1: bool,
}

/// Phase margin of `k L`; a loop that never reaches unit gain counts as
/// an infinite margin.
fn pm_at(l: &FoTransferFunction, k: f64) -> Result<f64> {
    Ok(margins(&l.scale(k))?.pm_deg.unwrap_or(f64::INFINITY))
}

/// Gain `k` with `PM(k L) = target`: the lowest scanned bracket where the
/// margin falls through the target, refined by bisection in `log k`.
pub fn solve_gain_for_pm(
    l: &FoTransferFunction,
    target_deg: f64,
    loop_name: &'static str,
    opts: &DesignOptions,
) -> Result<f64> {
    let no_solution = || Error::NoSolution {
        loop_name,
        target_deg,
        k_min: opts.k_min,
        k_max: opts.k_max,
    };
    let ks = crate::freqresp::log_grid(opts.k_min, opts.k_max, opts.scan_points.max(2));
    let gaps = par::map(&ks, |&k| pm_at(l, k).map(|pm| pm - target_deg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    for i in (0..ks.len() - 1).filter(|&i| gaps[i] > 0.0 && gaps[i + 1] <= 0.0) {
        let k = bisect_bracket(l, target_deg, ks[i], ks[i + 1], gaps[i + 1], opts)?;
        // a jump from "no crossover" straight past the target is not a solution
        if (pm_at(l, k)? - target_deg).abs() <= PM_RESIDUAL_DEG {
            return Ok(k);
        }
    }
    Err(no_solution())
}

const PM_RESIDUAL_DEG: f64 = 0.1;

fn bisect_bracket(l: &FoTransferFunction, target_deg: f64, lo: f64, hi: f64, g_hi: f64, opts: &DesignOptions) -> Result<f64> {
    if g_hi == 0.0 {
        return Ok(hi);
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > opts.rel_tol * lo {
        let mid = (lo * hi).sqrt();
        let g = pm_at(l, mid)? - target_deg;
        if g == 0.0 {
            return Ok(mid);
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if (pm_at(l, hi)? - target_deg).abs() <= (pm_at(l, lo)? - target_deg).abs() {
        hi
    } else {
        lo
    })
}

fn assemble(plant: &FoTransferFunction, n: u32, kp1: f64, kp2: f64) -> Result<CancellerDesign> {
    let z = plant.nmp_zero().ok_or(Error::MissingNmpZero)?;
    let aug = augmented_plant(plant, n)?;
    Ok(CancellerDesign {
        n,
        alpha: 1.0 / n as f64,
        z_nmp: z,
        kp1,
        kp2,
        report_before: margins(&plant.scale(kp1))?,
        report_after: margins(&aug.scale(kp2))?,
        kappa: margins(plant)?.kappa,
    })
}

/// Same phase margin with and without the canceller, larger gain with it.
pub fn design_same_pm(plant: &FoTransferFunction, pm_target_deg: f64, n: u32) -> Result<CancellerDesign> {
    design_boost_both_with(plant, pm_target_deg, 0.0, n, &DesignOptions::default())
}

/// Raises the margin by `pm_increase_deg` over the uncancelled design.
/// Check [`CancellerDesign::gain_increased`] to see whether the gain still grew.
pub fn design_boost_both(
    plant: &FoTransferFunction,
    pm_target_deg: f64,
    pm_increase_deg: f64,
    n: u32,
) -> Result<CancellerDesign> {
    design_boost_both_with(plant, pm_target_deg, pm_increase_deg, n, &DesignOptions::default())
}

pub fn design_boost_both_with(
    plant: &FoTransferFunction,
    pm_target_deg: f64,
    pm_increase_deg: f64,
    n: u32,
    opts: &DesignOptions,
) -> Result<CancellerDesign> {
    if !pm_target_deg.is_finite() || !pm_increase_deg.is_finite() {
        return Err(Error::InvalidArgument("phase margins must be finite".into()));
    }
    let aug = augmented_plant(plant, n)?;
    let kp1 = solve_gain_for_pm(plant, pm_target_deg, "uncancelled", opts)?;
    let kp2 = solve_gain_for_pm(&aug, pm_target_deg + pm_increase_deg, "cancelled", opts)?;
    assemble(plant, n, kp1, kp2)
}

/// Keeps the gain (and so the DC gain) fixed and returns the smallest
/// canceller order whose loop reaches `pm_min_deg`. `n = 1` means the bare
/// loop already does.
pub fn design_same_dc(plant: &FoTransferFunction, kp: f64, pm_min_deg: f64) -> Result<CancellerDesign> {
    design_same_dc_with(plant, kp, pm_min_deg, &DesignOptions::default())
}

pub fn design_same_dc_with(
    plant: &FoTransferFunction,
    kp: f64,
    pm_min_deg: f64,
    opts: &DesignOptions,
) -> Result<CancellerDesign> {
    if !(kp.is_finite() && kp > 0.0) {
        return Err(Error::InvalidArgument(format!("kp = {kp} must be positive")));
    }
    let orders: Vec<u32> = (1..=opts.n_max.max(1)).collect();
    let pms = par::map(&orders, |&n| augmented_plant(plant, n).and_then(|aug| pm_at(&aug, kp)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    match orders.iter().zip(&pms).find(|(_, &pm)| pm >= pm_min_deg) {
        Some((&n, _)) => assemble(plant, n, kp, kp),
        None => {
            let (best_n, best_pm_deg) = orders
                .iter()
                .zip(&pms)
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(&n, &pm)| (n, pm))
                .unwrap();
            Err(Error::NoCancellerOrder {
                n_max: opts.n_max,
                target_deg: pm_min_deg,
                best_n,
                best_pm_deg,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::folti::{benchmark_plant, principal_pow, PlantParams};
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn plant() -> FoTransferFunction {
        benchmark_plant(PlantParams::default()).unwrap()
    }

    fn jw(w: f64) -> Complex64 {
        Complex64::new(0.0, w)
    }

    #[test]
    fn first_order_canceller_is_identity() {
        let c = make_canceller(2.0202, 1).unwrap();
        for w in [0.01, 1.0, 100.0] {
            assert_eq!(c.eval(jw(w)).unwrap(), Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn half_order_canceller_matches_circuit_form() {
        let tau = 0.495;
        let c = make_canceller(1.0 / tau, 2).unwrap();
        for w in [0.01, 0.5, 2.0202, 40.0] {
            let s = jw(w);
            let expect = 1.0 / (1.0 + principal_pow(tau * s, 2).unwrap());
            assert!((c.eval(s).unwrap() - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn canceller_gain_below_one_off_dc() {
        for n in 2..=10 {
            let c = make_canceller(2.0202, n).unwrap();
            for &w in &crate::freqresp::log_grid(1e-6, 1e6, 500) {
                assert!(c.eval(jw(w)).unwrap().norm() < 1.0);
            }
        }
    }

    #[test]
    fn augmented_plant_basics() {
        let p = plant();
        let z = p.nmp_zero().unwrap();
        let a2 = augmented_plant(&p, 2).unwrap();
        assert_eq!(a2.dc_gain().unwrap(), 1.0);
        let a1 = augmented_plant(&p, 1).unwrap();
        for w in [0.1, 2.0, 30.0] {
            assert_eq!(a1.eval(jw(w)).unwrap(), p.eval(jw(w)).unwrap());
        }
        // |F| |P~| at j z with P~ = 1/((1 + j a z)(1 + j b z))
        let ptilde = 1.0 / ((1.0 + jw(0.495 * z)) * (1.0 + jw(0.164 * z)));
        let expect = (2.0 - 2f64.sqrt()).sqrt() * ptilde.norm();
        assert_relative_eq!(a2.eval(jw(z)).unwrap().norm(), expect, max_relative = 1e-12);
    }

    #[test]
    fn augmented_plant_requires_metadata() {
        let p = FoTransferFunction::new(1.0, 1, vec![1.0, -0.5], vec![1.0, 1.0]).unwrap();
        assert_eq!(augmented_plant(&p, 2), Err(Error::MissingNmpZero));
        let wrong = p.with_nmp_zero(3.0);
        assert!(matches!(augmented_plant(&wrong, 2), Err(Error::InvalidTransferFunction(_))));
    }

    #[test]
    fn same_pm_scenario_two() {
        let d = design_same_pm(&plant(), 60.0, 2).unwrap();
        assert!((d.kp1 - 1.07).abs() < 0.02, "kp1 = {}", d.kp1);
        assert!((d.kp2 - 1.85).abs() < 0.03, "kp2 = {}", d.kp2);
        assert!(d.gain_increased());
        assert!((d.report_after.pm_deg.unwrap() - 60.0).abs() < 0.01);
        assert!((d.report_before.pm_deg.unwrap() - 60.0).abs() < 0.01);
        assert!(d.report_after.omega_gc.unwrap() < d.report_before.omega_gc.unwrap());
    }

    #[test]
    fn same_pm_recovers_scenario_one_gain() {
        let d = design_same_pm(&plant(), 61.2, 2).unwrap();
        assert!((d.kp1 - 1.07).abs() < 1e-2);
    }

    #[test]
    fn same_pm_identity_canceller() {
        let d = design_same_pm(&plant(), 60.0, 1).unwrap();
        assert_eq!(d.kp1, d.kp2);
        assert!(!d.gain_increased());
    }

    #[test]
    fn same_pm_round_trip() {
        let p = plant();
        for n in [2, 3] {
            for target in [45.0, 61.2, 80.0] {
                let d = design_same_pm(&p, target, n).unwrap();
                let aug = augmented_plant(&p, n).unwrap();
                let pm = margins(&aug.scale(d.kp2)).unwrap().pm_deg.unwrap();
                assert!((pm - target).abs() < 0.01, "n {n} target {target}: {pm}");
            }
        }
    }

    #[test]
    fn unreachable_target_names_the_loop() {
        let opts = DesignOptions { k_max: 1.05, ..Default::default() };
        let err = design_boost_both_with(&plant(), 30.0, 0.0, 2, &opts).unwrap_err();
        assert!(matches!(err, Error::NoSolution { loop_name: "uncancelled", .. }), "{err:?}");
        let err = design_boost_both_with(&plant(), 61.2, 200.0, 2, &DesignOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoSolution { loop_name: "cancelled", .. }), "{err:?}");
    }

    #[test]
    fn zero_boost_equals_same_pm() {
        let a = design_same_pm(&plant(), 60.0, 2).unwrap();
        let b = design_boost_both(&plant(), 60.0, 0.0, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn boost_twenty_degrees() {
        let d = design_boost_both(&plant(), 60.0, 20.0, 2).unwrap();
        let pm = d.report_after.pm_deg.unwrap();
        assert!((pm - 80.0).abs() < 0.01);
        // brute force: PM at the found gain straddles 80 deg between neighbours
        let aug = augmented_plant(&plant(), 2).unwrap();
        let below = margins(&aug.scale(d.kp2 * 0.999)).unwrap().pm_deg.unwrap();
        let above = margins(&aug.scale(d.kp2 * 1.001)).unwrap().pm_deg.unwrap();
        assert!(below > 80.0 && above < 80.0);
        assert!(d.gain_increased());
    }

    #[test]
    fn boost_to_scenario_one_margin() {
        let d = design_boost_both(&plant(), 60.0, 115.0, 2).unwrap();
        assert!((d.kp2 - 1.07).abs() < 0.02, "kp2 = {}", d.kp2);
        assert!(!d.gain_increased() || d.kp2 - d.kp1 < 0.02);
    }

    #[test]
    fn same_dc_scenario_one() {
        let d = design_same_dc(&plant(), 1.07, 170.0).unwrap();
        assert_eq!(d.n, 2);
        assert_eq!(d.kp1, d.kp2);
        assert!((d.report_after.pm_deg.unwrap() - 175.0).abs() < 3.0);
        assert_eq!(d.report_after.dc_gain, d.report_before.dc_gain);
        assert!(d.report_after.omega_gc.unwrap() < d.report_before.omega_gc.unwrap());
    }

    #[test]
    fn same_dc_bare_loop_suffices() {
        let d = design_same_dc(&plant(), 1.07, 50.0).unwrap();
        assert_eq!(d.n, 1);
    }

    #[test]
    fn same_dc_smallest_order_for_ninety() {
        let p = plant();
        // oracle: PM against n by direct sweep
        let pms: Vec<f64> = (1..=4)
            .map(|n| margins(&augmented_plant(&p, n).unwrap().scale(1.07)).unwrap().pm_deg.unwrap())
            .collect();
        assert!(pms[0] < 90.0 && pms[1] >= 90.0);
        assert_eq!(design_same_dc(&p, 1.07, 90.0).unwrap().n, 2);
    }

    #[test]
    fn same_dc_no_solution_reports_best() {
        let opts = DesignOptions { n_max: 3, ..Default::default() };
        match design_same_dc_with(&plant(), 1.07, 179.9, &opts) {
            Err(Error::NoCancellerOrder { best_n, best_pm_deg, .. }) => {
                assert_eq!(best_n, 3);
                assert!(best_pm_deg > 175.0 && best_pm_deg < 179.9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cancelled_pm_larger_at_fixed_gain() {
        let p = plant();
        let aug = augmented_plant(&p, 2).unwrap();
        for i in 0..=30 {
            let k = 0.5 + 0.05 * i as f64;
            let bare = margins(&p.scale(k)).unwrap().pm_deg.unwrap_or(f64::INFINITY);
            let canc = margins(&aug.scale(k)).unwrap().pm_deg.unwrap_or(f64::INFINITY);
            // both infinite when k <= 1
            assert!(canc > bare || (canc.is_infinite() && bare.is_infinite()), "k = {k}");
        }
    }

    #[test]
    fn report_fields() {
        let d = design_same_pm(&plant(), 60.0, 2).unwrap();
        let r = d.report();
        assert_eq!(r.n, 2);
        assert_eq!(r.alpha, 0.5);
        assert_eq!(r.kp2, d.kp2);
        assert!(r.kappa.unwrap() > 0.7);
    }
}
