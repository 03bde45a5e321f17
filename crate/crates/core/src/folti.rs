//! Commensurate fractional-order LTI transfer functions.
//!
//! A transfer function is stored as
//!
//! ```text
//! G(s) = gain * (num[0] + num[1] x + ...) / (den[0] + den[1] x + ...),  x = s^(1/n)
//! ```
//!
//! and evaluated on the principal branch `arg s in (-pi, pi]`. Integer-order
//! transfer functions are the `n = 1` case.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoTransferFunction {
    gain: f64,
    order_den: u32,
    num: Vec<f64>,
    den: Vec<f64>,
    /// Location of the right-half-plane zero the plant was built around.
    nmp_zero: Option<f64>,
    origin_pole: bool,
}

impl FoTransferFunction {
    /// Builds `gain * num(x) / den(x)` with `x = s^(1/order_den)`.
    ///
    /// `den[0]` must be nonzero; use [`with_origin_pole`](Self::with_origin_pole)
    /// for transfer functions with a pole at `s = 0`.
    pub fn new(gain: f64, order_den: u32, num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        let tf = Self {
            gain,
            order_den,
            num,
            den,
            nmp_zero: None,
            origin_pole: false,
        };
        tf.validate()?;
        Ok(tf)
    }

    pub fn with_origin_pole(gain: f64, order_den: u32, num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        let tf = Self {
            gain,
            order_den,
            num,
            den,
            nmp_zero: None,
            origin_pole: true,
        };
        tf.validate()?;
        Ok(tf)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidTransferFunction(m.to_string()));
        if self.order_den == 0 {
            return bad("base order denominator n must be >= 1");
        }
        if self.num.is_empty() || self.den.is_empty() {
            return bad("numerator and denominator must be nonempty");
        }
        if !self.gain.is_finite() || self.num.iter().chain(&self.den).any(|c| !c.is_finite()) {
            return bad("gain and coefficients must be finite");
        }
        if self.den.iter().all(|&c| c == 0.0) {
            return bad("denominator is identically zero");
        }
        if self.den[0] == 0.0 && !self.origin_pole {
            return bad("den[0] = 0 (pole at s = 0) requires with_origin_pole");
        }
        if let Some(z) = self.nmp_zero {
            if !(z.is_finite() && z > 0.0) {
                return bad("NMP zero must be a finite positive frequency");
            }
        }
        Ok(())
    }

    /// The unit transfer function `G(s) = 1`.
    pub fn unit() -> Self {
        Self {
            gain: 1.0,
            order_den: 1,
            num: vec![1.0],
            den: vec![1.0],
            nmp_zero: None,
            origin_pole: false,
        }
    }

    /// The partly-cancelled zero term `F(s) = 1 - (s/z)^(k/n)`.
    pub fn fractional_zero(z_nmp: f64, k: u32, n: u32) -> Result<Self> {
        if !(z_nmp.is_finite() && z_nmp > 0.0) {
            return Err(Error::InvalidArgument(format!("z_nmp = {z_nmp} must be positive")));
        }
        if k == 0 || n == 0 {
            return Err(Error::InvalidArgument("exponent k/n needs k, n >= 1".into()));
        }
        let mut num = vec![0.0; k as usize + 1];
        num[0] = 1.0;
        num[k as usize] = -z_nmp.powf(-(k as f64) / n as f64);
        Ok(Self::new(1.0, n, num, vec![1.0])?.with_nmp_zero(z_nmp))
    }

    /// Attaches the NMP zero location as metadata.
    pub fn with_nmp_zero(mut self, z_nmp: f64) -> Self {
        self.nmp_zero = Some(z_nmp);
        self
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// `n` in the base order `q = 1/n`.
    pub fn order_den(&self) -> u32 {
        self.order_den
    }

    pub fn base_order(&self) -> f64 {
        1.0 / self.order_den as f64
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn nmp_zero(&self) -> Option<f64> {
        self.nmp_zero
    }

    pub fn has_origin_pole(&self) -> bool {
        self.origin_pole
    }

    pub fn is_integer_order(&self) -> bool {
        self.order_den == 1
    }

    /// Evaluates the transfer function at `s` on the principal branch.
    pub fn eval(&self, s: Complex64) -> Result<Complex64> {
        let x = principal_pow(s, self.order_den)?;
        let n = horner(&self.num, x);
        let (d, d_scale) = horner_with_scale(&self.den, x);
        if d.norm() <= 64.0 * f64::EPSILON * d_scale {
            return Err(Error::PoleHit { s });
        }
        Ok(self.gain * n / d)
    }

    /// Series connection `a(s) b(s)` on the common base order `1/lcm(n_a, n_b)`.
    pub fn series(&self, other: &Self) -> Self {
        let l = lcm(self.order_den, other.order_den);
        let a_num = stretch(&self.num, l / self.order_den);
        let a_den = stretch(&self.den, l / self.order_den);
        let b_num = stretch(&other.num, l / other.order_den);
        let b_den = stretch(&other.den, l / other.order_den);
        Self {
            gain: self.gain * other.gain,
            order_den: l,
            num: convolve(&a_num, &b_num),
            den: convolve(&a_den, &b_den),
            nmp_zero: self.nmp_zero.or(other.nmp_zero),
            origin_pole: self.origin_pole || other.origin_pole,
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.gain *= k;
        out
    }

    pub fn dc_gain(&self) -> Result<f64> {
        if self.origin_pole || self.den[0] == 0.0 {
            return Err(Error::InfiniteDcGain);
        }
        Ok(self.gain * self.num[0] / self.den[0])
    }
}

/// RC time constants of the benchmark NMP circuit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// `R2 C2` in seconds; the NMP zero sits at `1 / r2c2`.
    pub r2c2: f64,
    /// `R3 C3` in seconds.
    pub r3c3: f64,
}

impl Default for PlantParams {
    /// R2 = 1.5 kOhm, C2 = 330 uF, R3 = 820 Ohm, C3 = 200 uF.
    fn default() -> Self {
        Self {
            r2c2: 1.5e3 * 330e-6,
            r3c3: 820.0 * 200e-6,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        if self.r2c2.is_finite() && self.r2c2 > 0.0 && self.r3c3.is_finite() && self.r3c3 > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "plant time constants must be positive, got r2c2 = {}, r3c3 = {}",
                self.r2c2, self.r3c3
            )))
        }
    }

    pub fn z_nmp(&self) -> f64 {
        1.0 / self.r2c2
    }
}

/// `P(s) = (1 - r2c2 s) / ((1 + r2c2 s)(1 + r3c3 s))`.
pub fn benchmark_plant(p: PlantParams) -> Result<FoTransferFunction> {
    p.validate()?;
    let den = convolve(&[1.0, p.r2c2], &[1.0, p.r3c3]);
    Ok(FoTransferFunction::new(1.0, 1, vec![1.0, -p.r2c2], den)?.with_nmp_zero(p.z_nmp()))
}

/// Plant description as read from JSON: either explicit coefficients or the
/// `{"benchmark": {...}}` shorthand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlantSpec {
    Benchmark { benchmark: PlantParams },
    Explicit(ExplicitPlant),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitPlant {
    pub gain: f64,
    pub base_order_den: u32,
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nmp_zero: Option<f64>,
}

impl PlantSpec {
    pub fn build(&self) -> Result<FoTransferFunction> {
        match self {
            PlantSpec::Benchmark { benchmark } => benchmark_plant(*benchmark),
            PlantSpec::Explicit(p) => {
                let tf = FoTransferFunction::new(p.gain, p.base_order_den, p.num.clone(), p.den.clone())?;
                match p.nmp_zero {
                    Some(z) if z.is_finite() && z > 0.0 => Ok(tf.with_nmp_zero(z)),
                    Some(z) => Err(Error::InvalidTransferFunction(format!("nmp_zero = {z} must be positive"))),
                    None => Ok(tf),
                }
            }
        }
    }
}

/// `s^(1/n)` on the principal branch. For `n > 1` the negative real axis is
/// rejected as the branch cut.
pub fn principal_pow(s: Complex64, n: u32) -> Result<Complex64> {
    if n == 1 {
        return Ok(s);
    }
    if s.im == 0.0 && s.re < 0.0 {
        return Err(Error::BranchCut { s });
    }
    if s.re == 0.0 && s.im == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let q = 1.0 / n as f64;
    let r = s.norm().powf(q);
    let theta = s.im.atan2(s.re) * q;
    Ok(Complex64::from_polar(r, theta))
}

fn horner(c: &[f64], x: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &ck| acc * x + ck)
}

/// Horner value plus `sum |c_k| |x|^k`, the scale for the pole-hit test.
fn horner_with_scale(c: &[f64], x: Complex64) -> (Complex64, f64) {
    let ax = x.norm();
    let scale = c.iter().rev().fold(0.0, |acc, &ck| acc * ax + ck.abs());
    (horner(c, x), scale)
}

fn stretch(c: &[f64], m: u32) -> Vec<f64> {
    if m == 1 {
        return c.to_vec();
    }
    let m = m as usize;
    let mut out = vec![0.0; (c.len() - 1) * m + 1];
    for (k, &ck) in c.iter().enumerate() {
        out[k * m] = ck;
    }
    out
}

pub(crate) fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: u32, b: u32) -> u32 {
    a / gcd(a, b) * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canceller::make_canceller;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn j(w: f64) -> Complex64 {
        Complex64::new(0.0, w)
    }

    fn plant() -> FoTransferFunction {
        benchmark_plant(PlantParams::default()).unwrap()
    }

    #[test]
    fn benchmark_dc_gain_is_unity() {
        let p = plant();
        assert_eq!(p.eval(Complex64::new(0.0, 0.0)).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(p.dc_gain().unwrap(), 1.0);
    }

    #[test]
    fn benchmark_default_zero_and_poles() {
        let p = plant();
        assert_relative_eq!(p.nmp_zero().unwrap(), 2.0202, max_relative = 1e-4);
        // den = 1 + (a+b) s + ab s^2, roots -1/a and -1/b
        for pole in [-1.0 / 0.495, -1.0 / 0.164] {
            assert!(matches!(p.eval(Complex64::new(pole, 0.0)), Err(Error::PoleHit { .. })));
        }
        assert_relative_eq!(-1.0 / 0.164, -6.0976, max_relative = 1e-4);
        assert!(p.eval(Complex64::new(p.nmp_zero().unwrap(), 0.0)).unwrap().norm() < 1e-15);
    }

    #[test]
    fn symmetric_benchmark() {
        let p = benchmark_plant(PlantParams { r2c2: 1.0, r3c3: 1.0 }).unwrap();
        assert_eq!(p.num(), &[1.0, -1.0]);
        assert_eq!(p.den(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn benchmark_magnitude_is_allpass_times_lag() {
        let p = plant();
        for w in [1e-3_f64, 0.1, 1.0, 2.0202, 7.5, 100.0, 1e4] {
            let expect = 1.0 / (1.0 + (0.164 * w).powi(2)).sqrt();
            assert_relative_eq!(p.eval(j(w)).unwrap().norm(), expect, max_relative = 1e-13);
        }
    }

    #[test]
    fn half_order_zero_term_at_positive_real_zero_vanishes() {
        let f = FoTransferFunction::fractional_zero(2.0202, 1, 2).unwrap();
        assert!(f.eval(Complex64::new(2.0202, 0.0)).unwrap().norm() < 1e-15);
    }

    #[test]
    fn half_order_zero_term_on_imaginary_axis() {
        for z in [0.3, 2.0202, 17.0] {
            let f = FoTransferFunction::fractional_zero(z, 1, 2).unwrap();
            let v = f.eval(j(z)).unwrap();
            let expect = Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, FRAC_PI_4);
            assert!((v - expect).norm() < 1e-14);
            assert_relative_eq!(v.norm(), (2.0 - 2f64.sqrt()).sqrt(), max_relative = 1e-14);
            assert_relative_eq!(v.norm(), 0.76537, max_relative = 1e-5);
        }
    }

    #[test]
    fn branch_cut_rejected_for_fractional_order() {
        let f = FoTransferFunction::fractional_zero(1.0, 1, 2).unwrap();
        assert!(matches!(f.eval(Complex64::new(-1.0, 0.0)), Err(Error::BranchCut { .. })));
        // integer order has no cut
        assert!(plant().eval(Complex64::new(-1.0, 0.0)).is_ok());
        // principal branch just above and below the cut
        let up = principal_pow(Complex64::new(-4.0, 1e-300), 2).unwrap();
        let dn = principal_pow(Complex64::new(-4.0, -1e-300), 2).unwrap();
        assert_relative_eq!(up.im, 2.0, max_relative = 1e-12);
        assert_relative_eq!(dn.im, -2.0, max_relative = 1e-12);
    }

    #[test]
    fn principal_pow_matches_polar_definition() {
        let s = Complex64::from_polar(3.0, 0.75 * PI);
        let x = principal_pow(s, 3).unwrap();
        assert_relative_eq!(x.norm(), 3f64.powf(1.0 / 3.0), max_relative = 1e-14);
        assert_relative_eq!(x.arg(), 0.25 * PI, max_relative = 1e-14);
    }

    #[test]
    fn series_with_unit_is_identity() {
        let p = plant();
        assert_eq!(p.series(&FoTransferFunction::unit()), p);
    }

    #[test]
    fn series_of_canceller_and_zero_factor() {
        let z = 1.0 / 0.495;
        let c = make_canceller(z, 2).unwrap();
        let zero = FoTransferFunction::new(1.0, 1, vec![1.0, -1.0 / z], vec![1.0]).unwrap();
        let s = j(1.0);
        let lhs = c.series(&zero).eval(s).unwrap();
        let rhs = Complex64::new(1.0, 0.0) - principal_pow(s / z, 2).unwrap();
        assert!((lhs - rhs).norm() < 1e-9);
        assert!((lhs.norm() - rhs.norm()).abs() < 1e-9);
    }

    #[test]
    fn series_plant_canceller_unit_dc() {
        let p = plant();
        let c = make_canceller(p.nmp_zero().unwrap(), 2).unwrap();
        let l = p.series(&c);
        assert_eq!(l.order_den(), 2);
        assert_eq!(l.eval(Complex64::new(0.0, 0.0)).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(l.nmp_zero(), p.nmp_zero());
    }

    #[test]
    fn scale_multiplies_dc() {
        let p = plant();
        assert_relative_eq!(p.scale(1.07).eval(Complex64::new(0.0, 0.0)).unwrap().re, 1.07);
        assert_relative_eq!(p.scale(1.85).dc_gain().unwrap(), 1.85);
        assert_eq!(p.scale(1.0), p);
    }

    #[test]
    fn closed_loop_dc_value() {
        let k = plant().scale(1.07).dc_gain().unwrap();
        assert_relative_eq!(k / (1.0 + k), 0.51691, max_relative = 1e-5);
    }

    #[test]
    fn canceller_dc_is_unity() {
        for n in 1..=10 {
            assert_eq!(make_canceller(2.0202, n).unwrap().dc_gain().unwrap(), 1.0);
        }
    }

    #[test]
    fn origin_pole_signals_infinite_dc() {
        let integ = FoTransferFunction::with_origin_pole(1.0, 1, vec![1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(integ.dc_gain(), Err(Error::InfiniteDcGain));
        assert!(matches!(integ.eval(Complex64::new(0.0, 0.0)), Err(Error::PoleHit { .. })));
        assert!(FoTransferFunction::new(1.0, 1, vec![1.0], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn rejects_malformed() {
        assert!(FoTransferFunction::new(1.0, 0, vec![1.0], vec![1.0]).is_err());
        assert!(FoTransferFunction::new(f64::NAN, 1, vec![1.0], vec![1.0]).is_err());
        assert!(FoTransferFunction::new(1.0, 1, vec![], vec![1.0]).is_err());
        assert!(FoTransferFunction::new(1.0, 1, vec![1.0], vec![]).is_err());
        assert!(FoTransferFunction::new(1.0, 1, vec![1.0], vec![1.0, f64::INFINITY]).is_err());
        assert!(benchmark_plant(PlantParams { r2c2: 0.0, r3c3: 1.0 }).is_err());
    }

    #[test]
    fn plant_spec_round_trip() {
        let b = PlantSpec::Benchmark { benchmark: PlantParams::default() };
        assert_eq!(b.build().unwrap(), plant());
        let e = PlantSpec::Explicit(ExplicitPlant {
            gain: 2.0,
            base_order_den: 2,
            num: vec![1.0],
            den: vec![1.0, 1.0],
            nmp_zero: None,
        });
        let tf = e.build().unwrap();
        assert_eq!(tf.order_den(), 2);
        assert_eq!(tf.dc_gain().unwrap(), 2.0);
    }

    fn arb_tf() -> impl Strategy<Value = FoTransferFunction> {
        (
            0.1f64..5.0,
            1u32..5,
            prop::collection::vec(-2.0f64..2.0, 1..4),
            prop::collection::vec(0.1f64..2.0, 1..4),
        )
            .prop_map(|(g, n, num, den)| FoTransferFunction::new(g, n, num, den).unwrap())
    }

    fn arb_s() -> impl Strategy<Value = Complex64> {
        // keeps clear of the negative real axis
        (0.05f64..20.0, -0.95 * PI..0.95 * PI).prop_map(|(r, th)| Complex64::from_polar(r, th))
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
    }

    proptest! {
        #[test]
        fn prop_telescoping_identity(n in 1u32..8, z in 0.1f64..10.0, s in arb_s()) {
            let c = make_canceller(z, n).unwrap();
            let zero = Complex64::new(1.0, 0.0) - s / z;
            let lhs = c.eval(s).unwrap() * zero;
            let rhs = Complex64::new(1.0, 0.0) - principal_pow(s / z, n).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + rhs.norm()));
        }

        #[test]
        fn prop_conjugate_symmetry(tf in arb_tf(), s in arb_s()) {
            if let (Ok(a), Ok(b)) = (tf.eval(s), tf.eval(s.conj())) {
                prop_assert!(close(a.conj(), b, 1e-12));
            }
        }

        #[test]
        fn prop_series_pointwise_product(a in arb_tf(), b in arb_tf(), c in arb_tf(), s in arb_s()) {
            let (Ok(ea), Ok(eb), Ok(ec)) = (a.eval(s), b.eval(s), c.eval(s)) else { return Ok(()); };
            let ab = a.series(&b).eval(s).unwrap();
            let ba = b.series(&a).eval(s).unwrap();
            prop_assert!(close(ab, ea * eb, 1e-12));
            prop_assert!(close(ab, ba, 1e-12));
            let left = a.series(&b).series(&c).eval(s).unwrap();
            let right = a.series(&b.series(&c)).eval(s).unwrap();
            prop_assert!(close(left, right, 1e-12));
            prop_assert!(close(left, ea * eb * ec, 1e-12));
        }

        #[test]
        fn prop_series_dc_gain(a in arb_tf(), b in arb_tf()) {
            let d = a.series(&b).dc_gain().unwrap();
            let e = a.dc_gain().unwrap() * b.dc_gain().unwrap();
            prop_assert!((d - e).abs() <= 1e-12 * (1.0 + e.abs()));
        }
    }
}
