//! Memoryless power-amplifier models.
//!
//! Every model has the form `G(x) = g_a(|x|) exp(j arg x) exp(j g_p(|x|))`
//! with linear gain `A`. Phase responses are evaluated in radians with the
//! input amplitude in the same units as `r_max`; for the 3GPP modified Rapp
//! parameters (`B = -345`, `C = 0.17`, `zeta = 4`) this gives an AM-PM
//! swing of about -0.055 rad at `r = r_max`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaKind {
    /// Linear up to `r_max`, hard clipped above, no AM-PM.
    Ideal,
    ModifiedRapp,
    /// Travelling-wave tube amplifier.
    Twta,
}

/// A memoryless complex-baseband PA response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaModel {
    pub kind: PaKind,
    #[serde(rename = "A")]
    pub gain: f64,
    pub r_max: f64,
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub zeta: f64,
    #[serde(rename = "B", default)]
    pub b: f64,
    #[serde(rename = "C", default)]
    pub c: f64,
}

impl PaModel {
    pub fn ideal(gain: f64, r_max: f64) -> Self {
        Self {
            kind: PaKind::Ideal,
            gain,
            r_max,
            phi: 0.0,
            zeta: 0.0,
            b: 0.0,
            c: 0.0,
        }
    }

    pub fn modified_rapp(gain: f64, r_max: f64, phi: f64, zeta: f64, b: f64, c: f64) -> Self {
        Self {
            kind: PaKind::ModifiedRapp,
            gain,
            r_max,
            phi,
            zeta,
            b,
            c,
        }
    }

    pub fn twta(gain: f64, r_max: f64) -> Self {
        Self {
            kind: PaKind::Twta,
            gain,
            r_max,
            phi: 0.0,
            zeta: 0.0,
            b: 0.0,
            c: 0.0,
        }
    }

    /// 3GPP modified Rapp fit: `A = 16`, `phi = 1.1`, `r_max = 0.1187`,
    /// `B = -345`, `C = 0.17`, `zeta = 4`.
    pub fn rapp_3gpp() -> Self {
        Self::modified_rapp(16.0, 0.1187, 1.1, 4.0, -345.0, 0.17)
    }

    /// The ideal PA sharing this model's gain and saturation reference.
    pub fn linearized(&self) -> Self {
        Self::ideal(self.gain, self.r_max)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("PA {what}")));
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return bad("gain A must be > 0");
        }
        if !(self.r_max.is_finite() && self.r_max > 0.0) {
            return bad("r_max must be > 0");
        }
        if self.kind == PaKind::ModifiedRapp {
            if !(self.phi > 0.0 && self.zeta > 0.0 && self.c > 0.0) {
                return bad("modified Rapp requires phi, zeta, C > 0");
            }
            if !self.b.is_finite() {
                return bad("modified Rapp B must be finite");
            }
        }
        Ok(())
    }

    /// AM-AM conversion.
    pub fn amplitude(&self, r: f64) -> f64 {
        let a = self.gain;
        match self.kind {
            PaKind::Ideal => a * r.min(self.r_max),
            PaKind::ModifiedRapp => {
                let p = 2.0 * self.phi;
                a * r / (1.0 + (r / self.r_max).powf(p)).powf(1.0 / p)
            }
            PaKind::Twta => {
                let x = r / self.r_max;
                a * r / (1.0 + 0.25 * x * x)
            }
        }
    }

    /// AM-PM conversion in radians.
    pub fn phase(&self, r: f64) -> f64 {
        match self.kind {
            PaKind::Ideal => 0.0,
            PaKind::ModifiedRapp => {
                if self.b == 0.0 {
                    return 0.0;
                }
                let rz = r.powf(self.zeta);
                self.b * rz / (1.0 + (r / self.c).powf(self.zeta))
            }
            PaKind::Twta => {
                let x2 = (r / self.r_max).powi(2);
                std::f64::consts::PI / 12.0 * x2 / (1.0 + 0.25 * x2)
            }
        }
    }

    /// `G(z)` without the finiteness check. `G(0) = 0`.
    #[inline]
    pub fn respond(&self, z: Complex64) -> Complex64 {
        let r = z.norm();
        if r == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let phase = self.phase(r);
        let scale = self.amplitude(r) / r;
        if phase == 0.0 {
            z * scale
        } else {
            z * Complex64::from_polar(scale, phase)
        }
    }

    pub fn apply_pa(&self, z: Complex64) -> Result<Complex64> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(self.respond(z))
    }

    /// `|G(z)/A - z|` for any `z` with `|z| = r`.
    pub fn relative_distortion(&self, r: f64) -> f64 {
        let g = Complex64::from_polar(self.amplitude(r) / self.gain, self.phase(r));
        (g - r).norm()
    }

    /// Worst-case relative distortion `max_{|z| <= chi} |G(z)/A - z|`.
    ///
    /// A 4096-point coarse grid locates the best cell, then a golden-section
    /// search refines within the neighbouring cells.
    pub fn compute_psi(&self, chi: f64) -> f64 {
        const GRID: usize = 4096;
        let step = chi / (GRID - 1) as f64;
        let (mut best_k, mut best) = (0usize, f64::NEG_INFINITY);
        for k in 0..GRID {
            let v = self.relative_distortion(k as f64 * step);
            if v > best {
                best = v;
                best_k = k;
            }
        }
        let lo = best_k.saturating_sub(1) as f64 * step;
        let hi = ((best_k + 1).min(GRID - 1) as f64 * step).min(chi);
        let refined = golden_max(|r| self.relative_distortion(r), lo, hi, 1e-13);
        best.max(refined)
    }

    /// Input amplitude where the PA output falls 1 dB below linear.
    pub fn compute_r1db(&self) -> Result<f64> {
        let limit = 10.0 * self.r_max;
        if self.kind == PaKind::Ideal {
            return Err(Error::NoCompressionPoint { limit });
        }
        let f = |r: f64| 20.0 * (self.gain * r / self.amplitude(r)).log10() - 1.0;
        // bracket the first crossing on a scan of (0, limit]
        const SCAN: usize = 2000;
        let mut lo = 0.0;
        let mut hi = None;
        for k in 1..=SCAN {
            let r = limit * k as f64 / SCAN as f64;
            if f(r) >= 0.0 {
                hi = Some(r);
                break;
            }
            lo = r;
        }
        let mut hi = hi.ok_or(Error::NoCompressionPoint { limit })?;
        while (hi - lo) > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            if f(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut best = f(a).max(f(b));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        best = best.max(fc).max(fd);
    }
    best
}

/// The pair `(chi, psi)` governing the no-overloading condition, plus the
/// receive-filtered distortion bound `psi_hat = A psi int |Omega|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapingBudget {
    pub chi: f64,
    pub psi: f64,
    #[serde(default)]
    pub psi_hat: f64,
}

impl ShapingBudget {
    pub fn new(model: &PaModel, chi: f64) -> Result<Self> {
        if !(chi.is_finite() && chi > 0.0) {
            return Err(Error::InvalidParameter("chi must be > 0".into()));
        }
        Ok(Self {
            chi,
            psi: model.compute_psi(chi),
            psi_hat: 0.0,
        })
    }

    /// Sets `psi_hat = A * psi * filter_l1`, where `filter_l1` is the
    /// quadrature of `|Omega(t)|`.
    pub fn with_filter_gain(mut self, gain: f64, filter_l1: f64) -> Self {
        self.psi_hat = gain * self.psi * filter_l1;
        self
    }

    /// Largest modulator input amplitude that rules out overloading:
    /// `chi - psi` for first order, `chi - 3 psi` for second order.
    pub fn input_bound(&self, order: crate::sigma_delta::Order) -> f64 {
        match order {
            crate::sigma_delta::Order::First => self.chi - self.psi,
            crate::sigma_delta::Order::Second => self.chi - 3.0 * self.psi,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const RMAX: f64 = 0.1187;

    #[test]
    fn ideal_linear_region_is_exact() {
        let pa = PaModel::ideal(16.0, RMAX);
        let out = pa.apply_pa(Complex64::new(0.05, 0.0)).unwrap();
        assert_eq!(out, Complex64::new(0.8, 0.0));
        let z = Complex64::new(0.03, -0.07);
        assert_eq!(pa.respond(z) / 16.0, z);
    }

    #[test]
    fn zero_maps_to_zero() {
        for pa in [PaModel::rapp_3gpp(), PaModel::twta(16.0, RMAX), PaModel::ideal(16.0, RMAX)] {
            assert_eq!(pa.apply_pa(Complex64::new(0.0, 0.0)).unwrap(), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn non_finite_rejected() {
        let pa = PaModel::rapp_3gpp();
        assert_eq!(pa.apply_pa(Complex64::new(f64::NAN, 0.0)), Err(Error::NonFinite));
        assert_eq!(pa.apply_pa(Complex64::new(0.0, f64::INFINITY)), Err(Error::NonFinite));
    }

    #[test]
    fn rapp_at_saturation_reference() {
        let pa = PaModel::rapp_3gpp();
        let out = pa.apply_pa(Complex64::new(RMAX, 0.0)).unwrap();
        let expected = 16.0 * RMAX / 2f64.powf(1.0 / 2.2);
        assert_abs_diff_eq!(out.norm(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(out.norm(), 1.386, epsilon = 5e-4);
        // phase branch evaluated independently
        let gp = -345.0 * RMAX.powi(4) / (1.0 + (RMAX / 0.17).powi(4));
        assert_abs_diff_eq!(out.arg(), gp, epsilon = 1e-12);
    }

    #[test]
    fn twta_at_saturation_reference() {
        let pa = PaModel::twta(16.0, RMAX);
        let out = pa.apply_pa(Complex64::new(RMAX, 0.0)).unwrap();
        assert_abs_diff_eq!(out.norm(), 1.51936, epsilon = 1e-10);
        assert_abs_diff_eq!(out.arg(), std::f64::consts::PI / 12.0 / 1.25, epsilon = 1e-12);
    }

    #[test]
    fn psi_ideal_cases() {
        let pa = PaModel::ideal(16.0, RMAX);
        assert_eq!(pa.compute_psi(RMAX), 0.0);
        assert_abs_diff_eq!(pa.compute_psi(2.0 * RMAX), RMAX, epsilon = 1e-12);
    }

    #[test]
    fn psi_rapp_matches_dense_grid() {
        let pa = PaModel::rapp_3gpp();
        // brute-force oracle with 10^6 points
        let n = 1_000_000;
        let oracle = (0..=n)
            .map(|k| pa.relative_distortion(RMAX * k as f64 / n as f64))
            .fold(0.0f64, f64::max);
        let psi = pa.compute_psi(RMAX);
        assert!(psi > 0.0 && psi < RMAX);
        assert_abs_diff_eq!(psi, oracle, epsilon = 1e-6);
        assert_abs_diff_eq!(psi, 0.032_566_750_012, epsilon = 1e-9);
    }

    #[test]
    fn psi_nondecreasing_in_chi() {
        for pa in [PaModel::rapp_3gpp(), PaModel::twta(16.0, RMAX), PaModel::ideal(16.0, RMAX)] {
            let mut last = 0.0;
            for k in 1..=40 {
                let psi = pa.compute_psi(RMAX * k as f64 / 20.0);
                assert!(psi + 1e-12 >= last, "{:?} at k={k}", pa.kind);
                last = psi;
            }
        }
    }

    #[test]
    fn r1db_rapp_and_twta() {
        let r = PaModel::rapp_3gpp().compute_r1db().unwrap();
        // closed-form inverse of the amplitude branch as oracle
        let x = ((10f64.powf(1.0 / 20.0)).powf(2.2) - 1.0).powf(1.0 / 2.2);
        assert_abs_diff_eq!(r / RMAX, x, epsilon = 1e-8);
        assert_abs_diff_eq!(r / RMAX, 0.5681, epsilon = 1e-4);
        assert!(r < RMAX);

        let r = PaModel::twta(16.0, RMAX).compute_r1db().unwrap();
        let x = ((10f64.powf(1.0 / 20.0) - 1.0) / 0.25).sqrt();
        assert_abs_diff_eq!(r / RMAX, x, epsilon = 1e-8);
        assert_abs_diff_eq!(r / RMAX, 0.6985, epsilon = 2e-4);
    }

    #[test]
    fn r1db_ideal_has_none() {
        assert!(matches!(
            PaModel::ideal(16.0, RMAX).compute_r1db(),
            Err(Error::NoCompressionPoint { .. })
        ));
    }

    #[test]
    fn amplitude_is_monotone() {
        // the TWTA curve peaks at 2 r_max
        for (pa, top) in [(PaModel::rapp_3gpp(), 4.0), (PaModel::twta(16.0, RMAX), 2.0), (PaModel::ideal(16.0, RMAX), 4.0)] {
            let mut last = 0.0;
            for k in 0..20_000 {
                let g = pa.amplitude(top * RMAX * k as f64 / 20_000.0);
                assert!(g >= last);
                last = g;
            }
        }
    }

    #[test]
    fn validation() {
        assert!(PaModel::rapp_3gpp().validate().is_ok());
        assert!(PaModel::ideal(0.0, 1.0).validate().is_err());
        assert!(PaModel::ideal(1.0, -1.0).validate().is_err());
        assert!(PaModel::modified_rapp(16.0, RMAX, 0.0, 4.0, 0.0, 0.17).validate().is_err());
    }

    #[test]
    fn json_block_round_trip() {
        let text = r#"{"kind":"modified_rapp","A":16,"r_max":0.1187,"phi":1.1,"zeta":4,"B":-345,"C":0.17}"#;
        let pa: PaModel = serde_json::from_str(text).unwrap();
        assert_eq!(pa, PaModel::rapp_3gpp());
        let ideal: PaModel = serde_json::from_str(r#"{"kind":"ideal","A":16,"r_max":0.1187}"#).unwrap();
        assert_eq!(ideal.kind, PaKind::Ideal);
    }
}
