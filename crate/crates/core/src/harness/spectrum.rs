use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{substream, ExperimentConfig};
use crate::error::Result;
use crate::pa::{PaModel, ShapingBudget};
use crate::sigma_delta::{drive_direct, modulate, shaped_distortion_power, ModulatorConfig, Order, Scheme};
use crate::{CMat, Complex64};

const CHUNK: usize = 256;
/// Stream offset keeping spectrum draws apart from trial streams.
const SPECTRUM_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub theta_deg: f64,
    pub measured: f64,
    pub predicted: f64,
}

/// Beamformed distortion power `E|a(theta)^T (u - A x)|^2` for random
/// constant-envelope inputs at the modulator bound with i.i.d. uniform
/// phases, next to the closed-form prediction.
pub fn run_shaping_spectrum(cfg: &ExperimentConfig, scheme: Scheme) -> Result<Vec<SpectrumRow>> {
    let sys = &cfg.system;
    let geom = sys.geometry()?;
    let pa = cfg.pa.model;
    pa.validate()?;
    let budget = ShapingBudget::new(&pa, cfg.pa.chi())?;
    let order = scheme.order();
    let bound = budget.input_bound(order.unwrap_or(Order::First));
    let mc = match order {
        Some(o) => Some(ModulatorConfig::new(o, scheme.tail_removing(), pa, budget, geom.n)?),
        None => None,
    };
    let spec = &cfg.run.spectrum;
    let steer: Vec<_> = spec.angles_deg.iter().map(|t| geom.steering_vector(t.to_radians())).collect();
    let chunks = spec.frames.div_ceil(CHUNK);
    let partial: Vec<Result<Vec<f64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let cols = CHUNK.min(spec.frames - c * CHUNK);
            let mut rng = substream(cfg.run.seed, SPECTRUM_STREAM + c as u64);
            let x = CMat::from_fn(geom.n, cols, |_, _| Complex64::from_polar(bound, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)));
            let out = match &mc {
                Some(m) => modulate(m, &x)?,
                None => drive_direct(&pa, scheme.linear_tail(), &x),
            };
            let e = &out.u - &x * Complex64::new(pa.gain, 0.0);
            Ok(steer
                .iter()
                .map(|a| (0..cols).map(|t| (a.transpose() * e.column(t))[0].norm_sqr()).sum::<f64>())
                .collect())
        })
        .collect();
    let mut sums = vec![0.0; steer.len()];
    for p in partial {
        for (s, v) in sums.iter_mut().zip(p?) {
            *s += v;
        }
    }
    let law = scheme.distortion_law();
    Ok(spec
        .angles_deg
        .iter()
        .zip(sums)
        .map(|(theta, sum)| SpectrumRow {
            theta_deg: *theta,
            measured: sum / spec.frames as f64,
            predicted: shaped_distortion_power(theta.to_radians(), geom.d_over_lambda, geom.n, pa.gain, budget.psi, law),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaCurveRow {
    pub r: f64,
    pub g_a: f64,
    pub g_p: f64,
    /// `min(A r, A r_max)`.
    pub ideal: f64,
    pub is_r1db: bool,
}

/// AM-AM/AM-PM table on `points` uniform amplitudes in `[0, r_top]`, with
/// the 1 dB compression point (when it exists) inserted and flagged.
pub fn pa_curves(pa: &PaModel, r_top: f64, points: usize) -> Result<(Vec<PaCurveRow>, Option<f64>)> {
    pa.validate()?;
    let r1db = pa.compute_r1db().ok();
    let row = |r: f64, flag: bool| PaCurveRow {
        r,
        g_a: pa.amplitude(r),
        g_p: pa.phase(r),
        ideal: pa.gain * r.min(pa.r_max),
        is_r1db: flag,
    };
    let steps = points.max(2) - 1;
    let mut rows: Vec<PaCurveRow> = (0..=steps).map(|k| row(r_top * k as f64 / steps as f64, false)).collect();
    if let Some(r) = r1db.filter(|r| *r <= r_top) {
        let at = rows.partition_point(|x| x.r < r);
        rows.insert(at, row(r, true));
    }
    Ok((rows, r1db))
}
