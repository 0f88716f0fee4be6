//! OFDM block machinery.
//!
//! The transmit transform is the unnormalised exponent matrix
//! `F = [exp(j 2 pi m p / M)]` restricted to the first `M_s` columns, so that
//! `F_s^H F_s = M I`: a modulate/demodulate round trip scales every symbol
//! by `M`. Receivers divide by [`Ofdm::round_trip_scale`].

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::{CMat, Complex64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfdmParams {
    /// IDFT/DFT size.
    #[serde(rename = "M")]
    pub m: usize,
    /// Active subcarriers `0..M_s`.
    #[serde(rename = "M_s")]
    pub m_s: usize,
    /// Cyclic prefix length in samples.
    #[serde(rename = "M_cp")]
    pub m_cp: usize,
    /// Fine-grid points per sampling period.
    pub osf: usize,
}

impl Default for OfdmParams {
    fn default() -> Self {
        Self {
            m: 512,
            m_s: 300,
            m_cp: 40,
            osf: 7,
        }
    }
}

impl OfdmParams {
    pub fn validate(&self) -> Result<()> {
        if self.m_s == 0 || self.m < self.m_s {
            return Err(Error::InvalidParameter(format!(
                "OFDM sizes require M >= M_s >= 1 (M = {}, M_s = {})",
                self.m, self.m_s
            )));
        }
        if self.osf == 0 {
            return Err(Error::InvalidParameter("osf must be >= 1".into()));
        }
        Ok(())
    }

    /// Samples per CP-extended block.
    pub fn block_len(&self) -> usize {
        self.m_cp + self.m
    }

    pub fn fine_len(&self) -> usize {
        self.osf * self.block_len()
    }
}

/// Time-domain block: `x` is `N x M`, `with_cp` is `N x (M_cp + M)` whose
/// first `M_cp` columns repeat the last `M_cp` columns of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub x: CMat,
    pub with_cp: CMat,
}

/// Planned transforms for one set of [`OfdmParams`].
#[derive(Clone)]
pub struct Ofdm {
    params: OfdmParams,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Ofdm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ofdm").field("params", &self.params).finish()
    }
}

impl Ofdm {
    pub fn new(params: OfdmParams) -> Result<Self> {
        params.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            params,
            forward: planner.plan_fft_forward(params.m),
            inverse: planner.plan_fft_inverse(params.m),
        })
    }

    pub fn params(&self) -> &OfdmParams {
        &self.params
    }

    /// Gain `M` of a modulate/demodulate round trip.
    pub fn round_trip_scale(&self) -> f64 {
        self.params.m as f64
    }

    /// `X = Z F_s^T`, one zero-padded unnormalised IDFT per row.
    pub fn synthesize(&self, z: &CMat) -> Result<CMat> {
        let OfdmParams { m, m_s, .. } = self.params;
        if z.ncols() != m_s {
            return Err(shape_err(format!("{m_s} subcarrier columns"), format!("{} columns", z.ncols())));
        }
        let mut out = CMat::zeros(z.nrows(), m);
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for row in 0..z.nrows() {
            buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for p in 0..m_s {
                buf[p] = z[(row, p)];
            }
            self.inverse.process(&mut buf);
            for (k, v) in buf.iter().enumerate() {
                out[(row, k)] = *v;
            }
        }
        Ok(out)
    }

    /// `X conj(F_s)`: forward DFT of each row, first `M_s` bins.
    pub fn analyze(&self, x: &CMat) -> Result<CMat> {
        let OfdmParams { m, m_s, .. } = self.params;
        if x.ncols() != m {
            return Err(shape_err(format!("{m} time columns"), format!("{} columns", x.ncols())));
        }
        let mut out = CMat::zeros(x.nrows(), m_s);
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for row in 0..x.nrows() {
            for k in 0..m {
                buf[k] = x[(row, k)];
            }
            self.forward.process(&mut buf);
            for p in 0..m_s {
                out[(row, p)] = buf[p];
            }
        }
        Ok(out)
    }

    /// Prepends the last `M_cp` columns.
    pub fn add_cp(&self, x: &CMat) -> CMat {
        let OfdmParams { m, m_cp, .. } = self.params;
        CMat::from_fn(x.nrows(), m_cp + m, |r, c| {
            if c < m_cp {
                x[(r, m - m_cp + c)]
            } else {
                x[(r, c - m_cp)]
            }
        })
    }

    pub fn idft_modulate(&self, z: &CMat) -> Result<TimeGrid> {
        if self.params.m_cp > self.params.m {
            return Err(Error::InvalidParameter("M_cp must not exceed M".into()));
        }
        let x = self.synthesize(z)?;
        let with_cp = self.add_cp(&x);
        Ok(TimeGrid { x, with_cp })
    }

    /// Drops the cyclic prefix and applies `F_s^H`.
    pub fn receiver_dft(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        let OfdmParams { m, m_s, m_cp, .. } = self.params;
        if y.len() != m_cp + m {
            return Err(shape_err(m_cp + m, y.len()));
        }
        let mut buf = y[m_cp..].to_vec();
        self.forward.process(&mut buf);
        buf.truncate(m_s);
        Ok(buf)
    }
}

/// Zero-order hold onto the fine grid: every sample is repeated `osf` times.
pub fn sample_hold(osf: usize, x_cp: &CMat) -> CMat {
    let (n, len) = x_cp.shape();
    CMat::from_fn(n, len * osf, |r, c| x_cp[(r, c / osf)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small(m: usize, m_s: usize, m_cp: usize) -> Ofdm {
        Ofdm::new(OfdmParams { m, m_s, m_cp, osf: 7 }).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
        CMat::from_fn(r, c, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn dc_tone_and_zero() {
        let ofdm = small(16, 10, 4);
        let mut z = CMat::zeros(2, 10);
        z[(1, 0)] = Complex64::new(1.0, 0.0);
        let tg = ofdm.idft_modulate(&z).unwrap();
        for m in 0..16 {
            assert!((tg.x[(1, m)] - 1.0).norm() < 1e-15);
            assert_eq!(tg.x[(0, m)].norm(), 0.0);
        }
        let tg = ofdm.idft_modulate(&CMat::zeros(3, 10)).unwrap();
        assert!(tg.with_cp.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn matches_naive_dft_and_round_trip() {
        let (m, m_s) = (8, 5);
        let ofdm = small(m, m_s, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = random(&mut rng, 3, m_s);
        let tg = ofdm.idft_modulate(&z).unwrap();
        // naive O(M^2) oracle
        for n in 0..3 {
            for t in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for p in 0..m_s {
                    let ang = 2.0 * std::f64::consts::PI * (t * p) as f64 / m as f64;
                    acc += z[(n, p)] * Complex64::from_polar(1.0, ang);
                }
                assert!((tg.x[(n, t)] - acc).norm() < 1e-12);
            }
            let row: Vec<Complex64> = tg.with_cp.row(n).iter().copied().collect();
            let r = ofdm.receiver_dft(&row).unwrap();
            for p in 0..m_s {
                assert!((r[p] - z[(n, p)] * m as f64).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn tone_demodulates_to_scaled_unit_vector() {
        let ofdm = small(16, 12, 0);
        let p0 = 5;
        let y: Vec<Complex64> = (0..16)
            .map(|m| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (m * p0) as f64 / 16.0))
            .collect();
        let r = ofdm.receiver_dft(&y).unwrap();
        for (p, v) in r.iter().enumerate() {
            let want = if p == p0 { 16.0 } else { 0.0 };
            assert!((v - want).norm() < 1e-12);
        }
        assert!(ofdm.receiver_dft(&vec![Complex64::new(0.0, 0.0); 16]).unwrap().iter().all(|v| v.norm() == 0.0));
        assert!(ofdm.receiver_dft(&y[..10]).is_err());
    }

    #[test]
    fn cyclic_prefix_is_periodic() {
        let ofdm = small(32, 20, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tg = ofdm.idft_modulate(&random(&mut rng, 2, 20)).unwrap();
        for n in 0..2 {
            for k in 0..9 {
                assert_eq!(tg.with_cp[(n, k)], tg.with_cp[(n, k + 32)]);
            }
        }
    }

    #[test]
    fn sample_hold_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&mut rng, 3, 11);
        assert_eq!(sample_hold(1, &x), x);
        let fine = sample_hold(7, &x);
        assert_eq!(fine.ncols(), 77);
        for n in 0..3 {
            for c in 1..77 {
                if c % 7 != 0 {
                    assert_eq!(fine[(n, c)], fine[(n, c - 1)]);
                }
            }
            let max_fine = fine.row(n).iter().map(|v| v.norm()).fold(0.0, f64::max);
            let max_coarse = x.row(n).iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert_eq!(max_fine, max_coarse);
        }
        let mut single = CMat::zeros(1, 4);
        single[(0, 2)] = Complex64::new(0.5, 0.5);
        let held = sample_hold(7, &single);
        assert_eq!(held.iter().filter(|v| v.norm() > 0.0).count(), 7);
        assert!((14..21).all(|c| held[(0, c)] == single[(0, 2)]));
    }

    #[test]
    fn shape_errors() {
        let ofdm = small(16, 10, 4);
        assert!(matches!(ofdm.idft_modulate(&CMat::zeros(2, 9)), Err(Error::ShapeMismatch { .. })));
        assert!(OfdmParams { m: 4, m_s: 5, m_cp: 0, osf: 1 }.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn round_trip_scales_by_m(m in 1usize..40, frac in 0.0f64..1.0, seed in any::<u64>()) {
                let m_s = 1 + ((m - 1) as f64 * frac) as usize;
                let ofdm = Ofdm::new(OfdmParams { m, m_s, m_cp: m / 2, osf: 1 }).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let z = random(&mut rng, 2, m_s);
                let x = ofdm.synthesize(&z).unwrap();
                let back = ofdm.analyze(&x).unwrap();
                for (a, b) in back.iter().zip(z.iter()) {
                    prop_assert!((a - b * m as f64).norm() < 1e-10 * m as f64);
                }
            }
        }
    }
}
