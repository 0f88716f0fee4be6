use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use super::{max_abs, Diagnostics, PrecodeResult};
use crate::error::{shape_err, Error, Result};
use crate::ofdm::Ofdm;
use crate::{CMat, Complex64};

const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZfVariant {
    SigmaDelta,
    Tail,
    BackOff,
    /// `budget` is read as `r_max`; `Gamma` sets `||X||_F^2 = N M r_max^2`.
    TotalPower,
    NoDistortionRef,
}

/// Columns `H_p^H (H_p H_p^H)^{-1} s_p` for every subcarrier.
pub(crate) fn pseudo_inverse_columns(freq: &[CMat], s: &CMat) -> Result<CMat> {
    let k = s.nrows();
    if freq.len() != s.ncols() {
        return Err(shape_err(format!("{} subcarrier channels", s.ncols()), freq.len()));
    }
    let n = freq.first().map(|h| h.ncols()).unwrap_or(0);
    let mut z = CMat::zeros(n, s.ncols());
    for (p, h) in freq.iter().enumerate() {
        if h.nrows() != k || h.ncols() != n {
            return Err(shape_err(format!("{k} x {n} channel"), format!("{} x {}", h.nrows(), h.ncols())));
        }
        let gram = h * h.adjoint();
        let scale = (0..k).map(|i| gram[(i, i)].re).fold(0.0, f64::max);
        let chol = Cholesky::new(gram.clone()).ok_or(Error::RankDeficient { subcarrier: p, pivot: 0.0 })?;
        let pivot = (0..k).map(|i| chol.l_dirty()[(i, i)].re.powi(2)).fold(f64::INFINITY, f64::min) / scale.max(f64::MIN_POSITIVE);
        if !(pivot >= PIVOT_TOL) {
            return Err(Error::RankDeficient { subcarrier: p, pivot });
        }
        let y = chol.solve(&s.column(p).into_owned());
        z.set_column(p, &(h.adjoint() * y));
    }
    Ok(z)
}

/// Zero-forcing with a common normalisation `Gamma`, `beta_i = 1 / Gamma`.
///
/// For the amplitude-budget variants `max |X| = budget`.
pub fn zf_precode(freq: &[CMat], ofdm: &Ofdm, s: &CMat, budget: f64, variant: ZfVariant) -> Result<PrecodeResult> {
    if !(budget > 0.0) {
        return Err(Error::InvalidParameter(format!("amplitude budget {budget} must be positive")));
    }
    let raw = pseudo_inverse_columns(freq, s)?;
    let x_raw = ofdm.synthesize(&raw)?;
    let (gamma, x) = match variant {
        ZfVariant::TotalPower => {
            let target = (x_raw.len() as f64).sqrt() * budget;
            let gamma = x_raw.norm() / target;
            (gamma, &x_raw / Complex64::new(gamma, 0.0))
        }
        _ => {
            let peak = max_abs(&x_raw);
            let ratio = budget / peak;
            (peak / budget, x_raw.map(|v| v * ratio))
        }
    };
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidParameter("symbols map to an all-zero transmit block".into()));
    }
    let z = raw.map(|v| v / gamma);
    Ok(PrecodeResult {
        z,
        x,
        beta: vec![1.0 / gamma; s.nrows()],
        gamma: Some(gamma),
        diagnostics: Diagnostics::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_normal, ChannelConfig, UlaGeometry};
    use crate::ofdm::OfdmParams;
    use crate::precoders::QamConstellation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_channel() {
        let ofdm = Ofdm::new(OfdmParams { m: 4, m_s: 1, m_cp: 0, osf: 1 }).unwrap();
        let h = Complex64::new(0.5, -2.0);
        let freq = vec![CMat::from_element(1, 1, h)];
        let s = CMat::from_element(1, 1, Complex64::new(1.0, 3.0));
        let r = zf_precode(&freq, &ofdm, &s, 0.2, ZfVariant::SigmaDelta).unwrap();
        let gamma = r.gamma.unwrap();
        assert!((r.z[(0, 0)] - s[(0, 0)] / (h * gamma)).norm() < 1e-15);
        assert!((h * r.z[(0, 0)] - s[(0, 0)] / gamma).norm() < 1e-15);
    }

    #[test]
    fn random_instance_inverts_channel() {
        let params = OfdmParams { m: 16, m_s: 10, m_cp: 16, osf: 7 };
        let ofdm = Ofdm::new(params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let geom = UlaGeometry::new(8, 0.125).unwrap();
        let ch = crate::channel::draw_channel(&mut rng, geom, 2, &ChannelConfig { taps: 8, ..Default::default() }, params, 16.0).unwrap();
        let q = QamConstellation::new(2).unwrap();
        let s = CMat::from_fn(2, 10, |_, _| q.random_symbol(&mut rng));
        let b = 0.086;
        let r = zf_precode(&ch.freq, &ofdm, &s, b, ZfVariant::Tail).unwrap();
        let gamma = r.gamma.unwrap();
        for p in 0..10 {
            let got = &ch.freq[p] * r.z.column(p) * Complex64::new(gamma, 0.0);
            for i in 0..2 {
                assert!((got[i] - s[(i, p)]).norm() < 1e-10);
            }
        }
        assert!((max_abs(&r.x) - b).abs() <= 2.0 * f64::EPSILON * b);
        let x = ofdm.synthesize(&r.z).unwrap();
        assert!((x - &r.x).norm() < 1e-12 * r.x.norm());
    }

    #[test]
    fn total_power_normalisation() {
        let params = OfdmParams { m: 16, m_s: 10, m_cp: 0, osf: 1 };
        let ofdm = Ofdm::new(params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let freq: Vec<CMat> = (0..10).map(|_| CMat::from_fn(2, 4, |_, _| complex_normal(&mut rng))).collect();
        let s = CMat::from_fn(2, 10, |_, _| complex_normal(&mut rng));
        let r = zf_precode(&freq, &ofdm, &s, 0.1187, ZfVariant::TotalPower).unwrap();
        assert!((r.x.norm_squared() - 4.0 * 16.0 * 0.1187f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_detected() {
        let ofdm = Ofdm::new(OfdmParams { m: 4, m_s: 1, m_cp: 0, osf: 1 }).unwrap();
        let row = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let h = CMat::from_fn(2, 2, |_, c| row[c]);
        let s = CMat::from_element(2, 1, Complex64::new(1.0, 1.0));
        assert!(matches!(zf_precode(&[h], &ofdm, &s, 1.0, ZfVariant::SigmaDelta), Err(Error::RankDeficient { subcarrier: 0, .. })));
    }
}
