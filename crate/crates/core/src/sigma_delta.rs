//! Spatial sigma-delta modulators running across the antenna index.
//!
//! Each column of an antenna frame is one time instant; the recurrence runs
//! down the rows (antennas `1..=N`) with the feedback state reset to zero at
//! the top of every column. With first order,
//!
//! ```text
//! b_n = x_n - q_{n-1},   u_n = G(b_n),   q_n = u_n / A - b_n
//! ```
//!
//! so that `u_n = A x_n + A (q_n - q_{n-1})`. The second-order modulator
//! feeds back `2 q_{n-1} - q_{n-2}` and yields the second difference.
//!
//! Under i.i.d. distortion with `|q| ~ U[0, psi]` and uniform phase
//! (`E|q|^2 = psi^2 / 3`), the beamformed distortion power at spatial
//! frequency `w` follows from the per-antenna coefficients of `q_n`:
//!
//! * first order: `|1 - e^{-jw}|^2 = 4 sin^2(w/2)` for `n < N`, 1 for `n = N`;
//! * second order: `|1 - e^{-jw}|^4 = 16 sin^4(w/2)` for `n <= N - 2`,
//!   `|1 - 2e^{-jw}|^2 = 5 - 4 cos w` for `n = N - 1` and 1 for `n = N`.
//!
//! Tail-removing variants force the last one (first order) or two (second
//! order) distortion terms to zero, leaving only the shaped sum.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::pa::{PaModel, ShapingBudget};
use crate::{CMat, Complex64};

/// An `N x T` matrix of complex samples, one row per antenna in ULA order.
pub type AntennaFrame = CMat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    First,
    Second,
}

/// Transmit-chain selector as used in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// PAs driven directly, all antennas distorting.
    #[serde(rename = "none")]
    None,
    /// PAs driven directly with a linear PA on the last antenna.
    #[serde(rename = "none-tail")]
    NoneTail,
    #[serde(rename = "sd1")]
    Sd1,
    #[serde(rename = "tsd1")]
    Tsd1,
    #[serde(rename = "sd2")]
    Sd2,
    #[serde(rename = "tsd2")]
    Tsd2,
}

impl Scheme {
    pub fn order(self) -> Option<Order> {
        match self {
            Scheme::None | Scheme::NoneTail => None,
            Scheme::Sd1 | Scheme::Tsd1 => Some(Order::First),
            Scheme::Sd2 | Scheme::Tsd2 => Some(Order::Second),
        }
    }

    pub fn tail_removing(self) -> bool {
        matches!(self, Scheme::NoneTail | Scheme::Tsd1 | Scheme::Tsd2)
    }

    /// Number of trailing antennas fitted with a linear PA.
    pub fn linear_tail(self) -> usize {
        match self {
            Scheme::NoneTail | Scheme::Tsd1 => 1,
            Scheme::Tsd2 => 2,
            _ => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::NoneTail => "none-tail",
            Scheme::Sd1 => "sd1",
            Scheme::Tsd1 => "tsd1",
            Scheme::Sd2 => "sd2",
            Scheme::Tsd2 => "tsd2",
        }
    }

    /// The closed-form distortion law matching this transmit chain.
    pub fn distortion_law(self) -> DistortionLaw {
        match self {
            Scheme::None | Scheme::NoneTail => DistortionLaw::Unshaped,
            Scheme::Sd1 => DistortionLaw::FirstOrder,
            Scheme::Tsd1 => DistortionLaw::FirstOrderTail,
            Scheme::Sd2 => DistortionLaw::SecondOrder,
            Scheme::Tsd2 => DistortionLaw::SecondOrderTail,
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Scheme::None,
            "none-tail" => Scheme::NoneTail,
            "sd1" => Scheme::Sd1,
            "tsd1" => Scheme::Tsd1,
            "sd2" => Scheme::Sd2,
            "tsd2" => Scheme::Tsd2,
            other => return Err(Error::InvalidParameter(format!("unknown scheme `{other}`"))),
        })
    }
}

/// Memoryless response used inside the modulator loop.
pub trait Nonlinearity {
    fn respond(&self, z: Complex64) -> Complex64;
    fn gain(&self) -> f64;
}

impl Nonlinearity for PaModel {
    #[inline]
    fn respond(&self, z: Complex64) -> Complex64 {
        PaModel::respond(self, z)
    }

    fn gain(&self) -> f64 {
        self.gain
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulatorConfig {
    pub order: Order,
    pub tail_removing: bool,
    pub pa: PaModel,
    pub budget: ShapingBudget,
    pub antennas: usize,
}

impl ModulatorConfig {
    pub fn new(order: Order, tail_removing: bool, pa: PaModel, budget: ShapingBudget, antennas: usize) -> Result<Self> {
        let cfg = Self {
            order,
            tail_removing,
            pa,
            budget,
            antennas,
        };
        if cfg.input_bound() <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "modulator input bound {} is not positive (chi = {}, psi = {})",
                cfg.input_bound(),
                budget.chi,
                budget.psi
            )));
        }
        let min_n = if order == Order::Second && tail_removing { 2 } else { 1 };
        if antennas < min_n {
            return Err(Error::InvalidParameter(format!("need at least {min_n} antennas")));
        }
        Ok(cfg)
    }

    pub fn input_bound(&self) -> f64 {
        self.budget.input_bound(self.order)
    }
}

/// Modulator frames: PA outputs `u`, distortions `q`, PA inputs `b`.
#[derive(Debug, Clone)]
pub struct ModulatorOutput {
    pub u: AntennaFrame,
    pub q: AntennaFrame,
    pub b: AntennaFrame,
    /// Input samples exceeding the no-overloading bound.
    pub overloads: usize,
}

pub fn modulate(cfg: &ModulatorConfig, x: &AntennaFrame) -> Result<ModulatorOutput> {
    match cfg.order {
        Order::First => modulate_first_order(cfg, x),
        Order::Second => modulate_second_order(cfg, x),
    }
}

pub fn modulate_first_order(cfg: &ModulatorConfig, x: &AntennaFrame) -> Result<ModulatorOutput> {
    check_frame(cfg, x)?;
    let linear = cfg.pa.linearized();
    let tail = usize::from(cfg.tail_removing);
    let mut out = recurrence(&cfg.pa, &linear, tail, x, |q1, _| q1);
    out.overloads = count_overloads(x, cfg.input_bound());
    Ok(out)
}

pub fn modulate_second_order(cfg: &ModulatorConfig, x: &AntennaFrame) -> Result<ModulatorOutput> {
    check_frame(cfg, x)?;
    let linear = cfg.pa.linearized();
    let tail = if cfg.tail_removing { 2 } else { 0 };
    let mut out = recurrence(&cfg.pa, &linear, tail, x, |q1, q2| q1 * 2.0 - q2);
    out.overloads = count_overloads(x, cfg.input_bound());
    Ok(out)
}

/// Drives the PAs directly (`b = x`), with `linear_tail` trailing antennas
/// using the linear PA.
pub fn drive_direct(pa: &PaModel, linear_tail: usize, x: &AntennaFrame) -> ModulatorOutput {
    let linear = pa.linearized();
    let (n, t) = x.shape();
    let mut u = CMat::zeros(n, t);
    let mut q = CMat::zeros(n, t);
    let a = pa.gain;
    for col in 0..t {
        for row in 0..n {
            let xv = x[(row, col)];
            let uv = if row + linear_tail >= n { linear.respond(xv) } else { pa.respond(xv) };
            u[(row, col)] = uv;
            q[(row, col)] = uv / a - xv;
        }
    }
    ModulatorOutput {
        u,
        q,
        b: x.clone(),
        overloads: 0,
    }
}

/// Generic modulator loop. `feedback(q_{n-1}, q_{n-2})` is subtracted from
/// the input; the last `tail` antennas use `linear` instead of `pa`.
pub fn recurrence<P, L, F>(pa: &P, linear: &L, tail: usize, x: &AntennaFrame, feedback: F) -> ModulatorOutput
where
    P: Nonlinearity,
    L: Nonlinearity,
    F: Fn(Complex64, Complex64) -> Complex64,
{
    let (n, t) = x.shape();
    let a = pa.gain();
    let mut u = CMat::zeros(n, t);
    let mut q = CMat::zeros(n, t);
    let mut b = CMat::zeros(n, t);
    let zero = Complex64::new(0.0, 0.0);
    for col in 0..t {
        let (mut q1, mut q2) = (zero, zero);
        for row in 0..n {
            let bv = x[(row, col)] - feedback(q1, q2);
            let uv = if row + tail >= n { linear.respond(bv) } else { pa.respond(bv) };
            let qv = uv / a - bv;
            b[(row, col)] = bv;
            u[(row, col)] = uv;
            q[(row, col)] = qv;
            q2 = q1;
            q1 = qv;
        }
    }
    ModulatorOutput { u, q, b, overloads: 0 }
}

fn check_frame(cfg: &ModulatorConfig, x: &AntennaFrame) -> Result<()> {
    if x.nrows() != cfg.antennas {
        return Err(shape_err(format!("{} antenna rows", cfg.antennas), format!("{} rows", x.nrows())));
    }
    if x.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

fn count_overloads(x: &AntennaFrame, bound: f64) -> usize {
    let n = x.iter().filter(|z| z.norm() > bound * (1.0 + 1e-12)).count();
    if n > 0 {
        log::debug!("{n} modulator input samples exceed the no-overloading bound {bound:.6}");
    }
    n
}

/// Selector for the closed-form shaped-distortion power.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistortionLaw {
    /// No modulator: `N` unshaped terms.
    Unshaped,
    FirstOrder,
    FirstOrderTail,
    SecondOrder,
    SecondOrderTail,
}

impl DistortionLaw {
    /// Expected `|sum_n c_n(w) q_n|^2 / E|q|^2`, the array gain applied to
    /// i.i.d. distortion at spatial frequency `w`.
    pub fn array_gain(self, omega: f64, n: usize) -> f64 {
        let n = n as f64;
        let s2 = (omega / 2.0).sin().powi(2);
        match self {
            DistortionLaw::Unshaped => n,
            DistortionLaw::FirstOrder => 4.0 * (n - 1.0) * s2 + 1.0,
            DistortionLaw::FirstOrderTail => 4.0 * (n - 1.0) * s2,
            DistortionLaw::SecondOrder => 16.0 * (n - 2.0) * s2 * s2 + (5.0 - 4.0 * omega.cos()) + 1.0,
            DistortionLaw::SecondOrderTail => 16.0 * (n - 2.0) * s2 * s2,
        }
    }
}

/// Spatial frequency `2 pi (d / lambda) sin(theta)`.
pub fn spatial_frequency(theta: f64, d_over_lambda: f64) -> f64 {
    2.0 * std::f64::consts::PI * d_over_lambda * theta.sin()
}

/// Predicted `E|xi_w|^2` at angle `theta` under i.i.d. distortion with
/// `|q| ~ U[0, psi]`.
pub fn shaped_distortion_power(theta: f64, d_over_lambda: f64, n: usize, gain: f64, psi: f64, law: DistortionLaw) -> f64 {
    let omega = spatial_frequency(theta, d_over_lambda);
    gain * gain * psi * psi / 3.0 * law.array_gain(omega, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rapp_cfg(order: Order, tail: bool, n: usize) -> ModulatorConfig {
        let pa = PaModel::rapp_3gpp();
        let budget = ShapingBudget::new(&pa, pa.r_max).unwrap();
        ModulatorConfig::new(order, tail, pa, budget, n).unwrap()
    }

    fn random_frame(rng: &mut ChaCha8Rng, n: usize, t: usize, radius: f64) -> CMat {
        CMat::from_fn(n, t, |_, _| {
            let r = radius * rng.random::<f64>().sqrt();
            Complex64::from_polar(r, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
        })
    }

    #[test]
    fn zero_input_gives_zero_frames() {
        for order in [Order::First, Order::Second] {
            for tail in [false, true] {
                let out = modulate(&rapp_cfg(order, tail, 6), &CMat::zeros(6, 10)).unwrap();
                assert!(out.u.iter().chain(out.q.iter()).chain(out.b.iter()).all(|z| z.norm() == 0.0));
            }
        }
    }

    #[test]
    fn ideal_pa_in_linear_region_is_transparent() {
        let pa = PaModel::ideal(16.0, 0.1187);
        let budget = ShapingBudget::new(&pa, pa.r_max).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_frame(&mut rng, 8, 50, pa.r_max);
        for order in [Order::First, Order::Second] {
            let cfg = ModulatorConfig::new(order, false, pa, budget, 8).unwrap();
            let out = modulate(&cfg, &x).unwrap();
            assert_eq!(out.u, &x * Complex64::new(16.0, 0.0));
            assert!(out.q.iter().all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn shape_mismatch_reported() {
        let err = modulate(&rapp_cfg(Order::First, false, 4), &CMat::zeros(5, 3)).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn first_order_identity_and_bounds() {
        let cfg = rapp_cfg(Order::First, false, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_frame(&mut rng, 16, 400, cfg.input_bound());
        let out = modulate(&cfg, &x).unwrap();
        assert_eq!(out.overloads, 0);
        let a = cfg.pa.gain;
        for t in 0..x.ncols() {
            for n in 0..16 {
                let prev = if n == 0 { Complex64::new(0.0, 0.0) } else { out.q[(n - 1, t)] };
                let rhs = x[(n, t)] * a + (out.q[(n, t)] - prev) * a;
                assert!((out.u[(n, t)] - rhs).norm() <= 1e-12 * out.u[(n, t)].norm().max(1e-300));
                assert!(out.b[(n, t)].norm() <= cfg.budget.chi + 1e-12);
                assert!(out.q[(n, t)].norm() <= cfg.budget.psi + 1e-12);
            }
        }
    }

    #[test]
    fn tail_removing_zeroes_last_distortion() {
        let cfg = rapp_cfg(Order::First, true, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_frame(&mut rng, 10, 200, cfg.input_bound());
        let out = modulate(&cfg, &x).unwrap();
        for t in 0..200 {
            assert!(out.q[(9, t)].norm() < 1e-15);
            // telescoping: sum u = A sum x exactly up to rounding
            let su: Complex64 = out.u.column(t).iter().sum();
            let sx: Complex64 = x.column(t).iter().sum();
            assert!((su - sx * cfg.pa.gain).norm() < 1e-12);
        }
        let cfg2 = rapp_cfg(Order::Second, true, 10);
        let out = modulate(&cfg2, &x.map(|z| z * 0.5)).unwrap();
        for t in 0..200 {
            assert!(out.q[(8, t)].norm() < 1e-15 && out.q[(9, t)].norm() < 1e-15);
        }
    }

    /// Scripted PA for the hand-expanded N = 3 second-order check: the
    /// distortion added at antenna n is a fixed offset `d_n`.
    struct Scripted {
        offsets: Vec<Complex64>,
        counter: std::cell::Cell<usize>,
    }

    impl Nonlinearity for Scripted {
        fn respond(&self, z: Complex64) -> Complex64 {
            let k = self.counter.get();
            self.counter.set(k + 1);
            (z + self.offsets[k % self.offsets.len()]) * 2.0
        }
        fn gain(&self) -> f64 {
            2.0
        }
    }

    #[test]
    fn second_order_hand_expansion_n3() {
        let d = [Complex64::new(0.1, 0.0), Complex64::new(0.0, -0.2), Complex64::new(0.05, 0.03)];
        let pa = Scripted {
            offsets: d.to_vec(),
            counter: Default::default(),
        };
        let x = CMat::from_column_slice(3, 1, &[Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.4), Complex64::new(0.1, -0.1)]);
        let out = recurrence(&pa, &pa, 0, &x, |q1, q2| q1 * 2.0 - q2);
        // q_n = d_n by construction; expand u_n = A (x_n + q_n - 2 q_{n-1} + q_{n-2})
        let a = 2.0;
        let u1 = (x[0] + d[0]) * a;
        let u2 = (x[1] + d[1] - d[0] * 2.0) * a;
        let u3 = (x[2] + d[2] - d[1] * 2.0 + d[0]) * a;
        for (k, want) in [u1, u2, u3].into_iter().enumerate() {
            assert!((out.u[k] - want).norm() < 1e-15, "antenna {k}");
            assert!((out.q[k] - d[k]).norm() < 1e-15);
        }
    }

    /// One-bit quantizer in place of the PA (unit gain).
    struct Signum;

    impl Nonlinearity for Signum {
        fn respond(&self, z: Complex64) -> Complex64 {
            Complex64::new(if z.re >= 0.0 { 1.0 } else { -1.0 }, 0.0)
        }
        fn gain(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn one_bit_quantizer_no_overloading() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = CMat::from_fn(64, 500, |_, _| Complex64::new(rng.random_range(-1.0..=1.0), 0.0));
        let out = recurrence(&Signum, &Signum, 0, &x, |q1, _| q1);
        assert!(out.q.iter().all(|q| q.norm() <= 1.0 + 1e-12));
    }

    #[test]
    fn closed_form_special_values() {
        let psi = 0.03;
        let p0 = shaped_distortion_power(0.0, 0.125, 64, 16.0, psi, DistortionLaw::FirstOrderTail);
        assert_eq!(p0, 0.0);
        let p0 = shaped_distortion_power(0.0, 0.125, 64, 16.0, psi, DistortionLaw::FirstOrder);
        assert!((p0 - 256.0 * psi * psi / 3.0).abs() < 1e-15);
        let deg = std::f64::consts::PI / 180.0;
        let p30 = shaped_distortion_power(30.0 * deg, 0.125, 64, 16.0, psi, DistortionLaw::FirstOrderTail);
        let p5 = shaped_distortion_power(5.0 * deg, 0.125, 64, 16.0, psi, DistortionLaw::FirstOrderTail);
        let s = |t: f64| (std::f64::consts::PI / 8.0 * t.sin()).sin().powi(2);
        assert!((p30 / p5 - s(30.0 * deg) / s(5.0 * deg)).abs() < 1e-10);
    }

    #[test]
    fn closed_form_matches_iid_monte_carlo() {
        // Draw q per the uniform-amplitude law and beamform the coefficient
        // pattern of each modulator directly.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 16;
        let omega = 0.6;
        let w = Complex64::from_polar(1.0, -omega);
        let trials = 40_000;
        for (law, coef) in [
            (DistortionLaw::FirstOrder, vec![1.0, -1.0]),
            (DistortionLaw::SecondOrder, vec![1.0, -2.0, 1.0]),
        ] {
            let mut acc = 0.0;
            for _ in 0..trials {
                let q: Vec<Complex64> = (0..n)
                    .map(|_| Complex64::from_polar(rng.random::<f64>(), rng.random_range(-3.14159..3.14159)))
                    .collect();
                // u_n - A x_n = sum_k coef_k q_{n-k}
                let mut s = Complex64::new(0.0, 0.0);
                for row in 0..n {
                    let mut e = Complex64::new(0.0, 0.0);
                    for (k, c) in coef.iter().enumerate() {
                        if row >= k {
                            e += q[row - k] * *c;
                        }
                    }
                    s += e * w.powi(row as i32);
                }
                acc += s.norm_sqr();
            }
            let mc = acc / trials as f64;
            let want = law.array_gain(omega, n) / 3.0;
            assert!((mc / want - 1.0).abs() < 0.03, "{law:?}: {mc} vs {want}");
        }
    }

    #[test]
    fn scheme_strings() {
        for s in ["none", "none-tail", "sd1", "tsd1", "sd2", "tsd2"] {
            let scheme: Scheme = s.parse().unwrap();
            assert_eq!(scheme.as_str(), s);
            let json = serde_json::to_string(&scheme).unwrap();
            assert_eq!(json, format!("\"{s}\""));
        }
        assert!("sd3".parse::<Scheme>().is_err());
    }
}
