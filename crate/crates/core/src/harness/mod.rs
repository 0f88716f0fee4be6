//! Seeded Monte Carlo experiments over the full downlink chain:
//! precode, sigma-delta/PA, zero-order hold, multipath propagation with
//! receive filtering, receiver DFT and per-user detection.
//!
//! Trial `t` draws everything (channel, symbols, unit-variance noise) from
//! its own ChaCha8 stream, so adding trials or arms never changes the draws
//! of existing ones. All arms in a trial see the same channel, symbols and
//! noise realisation; noise is scaled per SNR point.

mod config;
mod output;
mod spectrum;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    default_scheme, Arm, ArmSpec, ExperimentConfig, NoiseConfig, PaConfig, PrecoderConfig, RunConfig, SchemeSelector, SpectrumConfig,
    SystemConfig,
};
pub use output::{ber_csv, constellation_csv, fmt_sig, pa_curves_csv, scatter_csv, spectrum_csv};
pub use spectrum::{pa_curves, run_shaping_spectrum, PaCurveRow, SpectrumRow};

use crate::channel::{complex_normal, draw_channel, ChannelRealization};
use crate::error::{Error, Result};
use crate::ofdm::{sample_hold, Ofdm};
use crate::pa::{PaModel, ShapingBudget};
use crate::precoders::{detect, slp_precode, zf_precode, BudgetKind, PrecodeResult, QamConstellation};
use crate::sigma_delta::{drive_direct, modulate, ModulatorConfig, ModulatorOutput, Order};
use crate::{CMat, Complex64};

/// Stream `index` of the generator keyed by `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Generator for Monte Carlo trial `trial`.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    substream(seed, trial as u64)
}

/// One BER point of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub label: String,
    pub scheme: String,
    pub precoder: String,
    pub snr_db: f64,
    pub ber: f64,
    pub bits: u64,
    pub errors: u64,
    pub mean_beta: f64,
    pub overloads: u64,
    pub failed_trials: usize,
    /// Mean ADMM iterations per SLP solve (0 for ZF).
    pub mean_iterations: f64,
    /// Fraction of SLP solves meeting the ADMM stopping rule (1 for ZF).
    pub converged_fraction: f64,
}

/// Per-run constants shared by all trials.
pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub arms: Vec<Arm>,
    pub ofdm: Ofdm,
    pub constellation: QamConstellation,
    pub pa: PaModel,
    pub budget: ShapingBudget,
    r1db: Option<f64>,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let pa = cfg.pa.model;
        let filter_l1 = crate::channel::ReceiveKernel::new(cfg.system.channel.filter, cfg.system.ofdm.osf).l1_norm();
        let budget = ShapingBudget::new(&pa, cfg.pa.chi())?.with_filter_gain(pa.gain, filter_l1);
        let arms = cfg.arms();
        let needs_bo = arms.iter().any(|a| a.precoder.budget_kind() == BudgetKind::BackOff);
        let r1db = if needs_bo { Some(pa.compute_r1db()?) } else { pa.compute_r1db().ok() };
        Ok(Self {
            cfg,
            arms,
            ofdm: Ofdm::new(cfg.system.ofdm)?,
            constellation: cfg.system.constellation()?,
            pa,
            budget,
            r1db,
        })
    }

    /// Amplitude budget (or `r_max` for total power) of an arm.
    pub fn arm_budget(&self, arm: &Arm) -> Result<f64> {
        Ok(match arm.precoder.budget_kind() {
            BudgetKind::NoOverload => self.budget.input_bound(arm.scheme.order().unwrap_or(Order::First)),
            BudgetKind::BackOff => self.r1db.ok_or(Error::NoCompressionPoint { limit: 10.0 * self.pa.r_max })?,
            BudgetKind::TotalPower => self.pa.r_max,
        })
    }

    /// PA actually fitted for an arm.
    pub fn arm_pa(&self, arm: &Arm) -> PaModel {
        if arm.precoder.is_reference() {
            self.pa.linearized()
        } else {
            self.pa
        }
    }

    /// Time-domain distortion power `E|xi_i|^2` the SLP design assumes.
    pub fn assumed_distortion(&self, arm: &Arm, chan: &ChannelRealization) -> Vec<f64> {
        let k = chan.users();
        if arm.precoder.is_reference() || arm.precoder.budget_kind() == BudgetKind::BackOff {
            return vec![0.0; k];
        }
        chan.distortion_noise_power(self.budget.psi_hat, arm.scheme.distortion_law())
    }

    /// Modulator/PA stage for a CP-extended block.
    pub fn transmit(&self, arm: &Arm, x_cp: &CMat) -> Result<ModulatorOutput> {
        let pa = self.arm_pa(arm);
        match arm.scheme.order() {
            None => Ok(drive_direct(&pa, arm.scheme.linear_tail(), x_cp)),
            Some(order) => {
                let mc = ModulatorConfig::new(order, arm.scheme.tail_removing(), pa, self.budget, x_cp.nrows())?;
                modulate(&mc, x_cp)
            }
        }
    }

    /// Noise-free received samples for a precoded block.
    pub fn received_clean(&self, arm: &Arm, chan: &ChannelRealization, x: &CMat) -> Result<(Vec<Vec<Complex64>>, usize)> {
        let x_cp = self.ofdm.add_cp(x);
        let out = self.transmit(arm, &x_cp)?;
        let fine = sample_hold(self.cfg.system.ofdm.osf, &out.u);
        Ok((chan.propagate_clean(&fine)?, out.overloads))
    }

    /// Receiver DFT divided by the round-trip scale.
    pub fn demodulate(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        let scale = 1.0 / self.ofdm.round_trip_scale();
        Ok(self.ofdm.receiver_dft(y)?.into_iter().map(|v| v * scale).collect())
    }

    pub fn precode(&self, arm: &Arm, chan: &ChannelRealization, s: &CMat, sigma_v2: f64) -> Result<PrecodeResult> {
        let budget = self.arm_budget(arm)?;
        if arm.precoder.is_slp() {
            let m = self.cfg.system.ofdm.m as f64;
            let sigma: Vec<f64> = self
                .assumed_distortion(arm, chan)
                .into_iter()
                .map(|d| ((d + sigma_v2) / m).sqrt())
                .collect();
            slp_precode(&chan.freq, &self.ofdm, s, budget, &sigma, self.constellation.d, &self.cfg.precoder.slp)
        } else {
            zf_precode(&chan.freq, &self.ofdm, s, budget, arm.precoder.zf_variant())
        }
    }
}

pub fn sigma_v2(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

#[derive(Debug, Clone, Default)]
struct ArmAccum {
    errors: Vec<u64>,
    bits: Vec<u64>,
    beta_sum: Vec<f64>,
    beta_count: Vec<u64>,
    overloads: u64,
    solves: u64,
    iterations: u64,
    converged: u64,
}

impl ArmAccum {
    fn new(points: usize) -> Self {
        Self {
            errors: vec![0; points],
            bits: vec![0; points],
            beta_sum: vec![0.0; points],
            beta_count: vec![0; points],
            ..Default::default()
        }
    }

    fn absorb(&mut self, other: &ArmAccum) {
        for (a, b) in self.errors.iter_mut().zip(&other.errors) {
            *a += b;
        }
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a += b;
        }
        for (a, b) in self.beta_sum.iter_mut().zip(&other.beta_sum) {
            *a += b;
        }
        for (a, b) in self.beta_count.iter_mut().zip(&other.beta_count) {
            *a += b;
        }
        self.overloads += other.overloads;
        self.solves += other.solves;
        self.iterations += other.iterations;
        self.converged += other.converged;
    }

    /// Records a solve used at the SNR points `points`.
    fn note(&mut self, res: &PrecodeResult, slp: bool, points: std::ops::Range<usize>) {
        for j in points {
            self.beta_sum[j] += res.beta.iter().sum::<f64>();
            self.beta_count[j] += res.beta.len() as u64;
        }
        if slp {
            self.solves += 1;
            self.iterations += res.diagnostics.iterations as u64;
            self.converged += u64::from(res.diagnostics.converged);
        }
    }
}

fn draw_symbols<R: Rng + ?Sized>(rng: &mut R, q: &QamConstellation, k: usize, m_s: usize) -> CMat {
    CMat::from_fn(k, m_s, |_, _| q.random_symbol(rng))
}

/// Counts bit errors of all users for one received block.
fn count_errors(ctx: &Context<'_>, clean: &[Vec<Complex64>], noise: &CMat, sigma_v: f64, s: &CMat, beta: &[f64]) -> Result<(u64, u64)> {
    let q = &ctx.constellation;
    let mut errors = 0u64;
    let mut bits = 0u64;
    for (i, y) in clean.iter().enumerate() {
        let noisy: Vec<Complex64> = y.iter().enumerate().map(|(m, v)| v + noise[(i, m)] * sigma_v).collect();
        let r = ctx.demodulate(&noisy)?;
        for (p, rv) in r.iter().enumerate() {
            let got = detect(*rv, beta[i], q);
            errors += u64::from(q.bit_errors(s[(i, p)], got));
            bits += u64::from(q.bits_per_symbol());
        }
    }
    Ok((errors, bits))
}

fn ber_trial(ctx: &Context<'_>, trial: usize) -> Result<Vec<ArmAccum>> {
    let sys = &ctx.cfg.system;
    let snrs = &ctx.cfg.noise.snr_db;
    let mut rng = trial_rng(ctx.cfg.run.seed, trial);
    let chan = draw_channel(&mut rng, sys.geometry()?, sys.k, &sys.channel, sys.ofdm, ctx.pa.gain)?;
    let mut acc: Vec<ArmAccum> = ctx.arms.iter().map(|_| ArmAccum::new(snrs.len())).collect();
    for _ in 0..ctx.cfg.run.blocks_per_trial {
        let s = draw_symbols(&mut rng, &ctx.constellation, sys.k, sys.ofdm.m_s);
        let noise = CMat::from_fn(sys.k, sys.ofdm.block_len(), |_, _| complex_normal(&mut rng));
        for (arm, a) in ctx.arms.iter().zip(acc.iter_mut()) {
            if arm.precoder.is_slp() {
                for (j, snr) in snrs.iter().enumerate() {
                    let v2 = sigma_v2(*snr);
                    let res = ctx.precode(arm, &chan, &s, v2)?;
                    a.note(&res, true, j..j + 1);
                    let (clean, over) = ctx.received_clean(arm, &chan, &res.x)?;
                    a.overloads += over as u64;
                    let (e, b) = count_errors(ctx, &clean, &noise, v2.sqrt(), &s, &res.beta)?;
                    a.errors[j] += e;
                    a.bits[j] += b;
                }
            } else {
                let res = ctx.precode(arm, &chan, &s, 0.0)?;
                a.note(&res, false, 0..snrs.len());
                let (clean, over) = ctx.received_clean(arm, &chan, &res.x)?;
                a.overloads += over as u64;
                for (j, snr) in snrs.iter().enumerate() {
                    let (e, b) = count_errors(ctx, &clean, &noise, sigma_v2(*snr).sqrt(), &s, &res.beta)?;
                    a.errors[j] += e;
                    a.bits[j] += b;
                }
            }
        }
    }
    Ok(acc)
}

/// BER versus SNR for every configured arm.
pub fn run_ber(cfg: &ExperimentConfig) -> Result<Vec<MetricRecord>> {
    let ctx = Context::new(cfg)?;
    let outcomes: Vec<Result<Vec<ArmAccum>>> = (0..cfg.run.trials).into_par_iter().map(|t| ber_trial(&ctx, t)).collect();
    let points = cfg.noise.snr_db.len();
    let mut total: Vec<ArmAccum> = ctx.arms.iter().map(|_| ArmAccum::new(points)).collect();
    let mut failed = 0usize;
    for (t, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(acc) => total.iter_mut().zip(&acc).for_each(|(a, b)| a.absorb(b)),
            Err(e) => {
                log::warn!("trial {t} failed: {e}");
                failed += 1;
            }
        }
    }
    if failed == cfg.run.trials {
        return Err(Error::InvalidParameter(format!("all {failed} trials failed")));
    }
    let mut records = Vec::new();
    for (arm, a) in ctx.arms.iter().zip(&total) {
        for (j, snr) in cfg.noise.snr_db.iter().enumerate() {
            records.push(MetricRecord {
                label: arm.label.clone(),
                scheme: arm.scheme.as_str().to_string(),
                precoder: arm.precoder.as_str().to_string(),
                snr_db: *snr,
                ber: if a.bits[j] > 0 { a.errors[j] as f64 / a.bits[j] as f64 } else { 0.0 },
                bits: a.bits[j],
                errors: a.errors[j],
                mean_beta: if a.beta_count[j] > 0 { a.beta_sum[j] / a.beta_count[j] as f64 } else { 0.0 },
                overloads: a.overloads,
                failed_trials: failed,
                mean_iterations: if a.solves > 0 { a.iterations as f64 / a.solves as f64 } else { 0.0 },
                converged_fraction: if a.solves > 0 { a.converged as f64 / a.solves as f64 } else { 1.0 },
            });
        }
    }
    Ok(records)
}

/// One noise-free received point `r_{i,p} / beta_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub label: String,
    pub trial: usize,
    pub block: usize,
    pub user: usize,
    pub point: Complex64,
    pub sent: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterSummary {
    pub label: String,
    /// RMS of `r / beta - s` over all users, subcarriers and blocks.
    pub rms_deviation: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterOutput {
    pub points: Vec<ScatterPoint>,
    pub summary: Vec<ScatterSummary>,
}

fn scatter_trial(ctx: &Context<'_>, trial: usize, p: usize) -> Result<(Vec<ScatterPoint>, Vec<(f64, u64)>)> {
    let sys = &ctx.cfg.system;
    let mut rng = trial_rng(ctx.cfg.run.seed, trial);
    let chan = draw_channel(&mut rng, sys.geometry()?, sys.k, &sys.channel, sys.ofdm, ctx.pa.gain)?;
    let v2 = ctx.cfg.noise.snr_db.first().map(|s| sigma_v2(*s)).unwrap_or(1.0);
    let mut points = Vec::new();
    let mut dev = vec![(0.0, 0u64); ctx.arms.len()];
    for block in 0..ctx.cfg.run.blocks_per_trial {
        let s = draw_symbols(&mut rng, &ctx.constellation, sys.k, sys.ofdm.m_s);
        // keep the stream aligned with the BER experiment
        for _ in 0..sys.k * sys.ofdm.block_len() {
            complex_normal(&mut rng);
        }
        for (a, arm) in ctx.arms.iter().enumerate() {
            let res = ctx.precode(arm, &chan, &s, v2)?;
            let (clean, _) = ctx.received_clean(arm, &chan, &res.x)?;
            for (i, y) in clean.iter().enumerate() {
                let r = ctx.demodulate(y)?;
                for (q, rv) in r.iter().enumerate() {
                    let z = rv / res.beta[i];
                    dev[a].0 += (z - s[(i, q)]).norm_sqr();
                    dev[a].1 += 1;
                    if q == p {
                        points.push(ScatterPoint {
                            label: arm.label.clone(),
                            trial,
                            block,
                            user: i,
                            point: z,
                            sent: s[(i, q)],
                        });
                    }
                }
            }
        }
    }
    Ok((points, dev))
}

/// Noise-free constellation clouds at subcarrier `p`.
pub fn run_scatter(cfg: &ExperimentConfig, p: usize) -> Result<ScatterOutput> {
    let ctx = Context::new(cfg)?;
    if p >= cfg.system.ofdm.m_s {
        return Err(Error::InvalidParameter(format!("subcarrier {p} outside 0..{}", cfg.system.ofdm.m_s)));
    }
    let outcomes: Vec<_> = (0..cfg.run.trials).into_par_iter().map(|t| scatter_trial(&ctx, t, p)).collect();
    let mut points = Vec::new();
    let mut dev = vec![(0.0, 0u64); ctx.arms.len()];
    for (t, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok((pts, d)) => {
                points.extend(pts);
                for (acc, v) in dev.iter_mut().zip(d) {
                    acc.0 += v.0;
                    acc.1 += v.1;
                }
            }
            Err(e) => log::warn!("trial {t} failed: {e}"),
        }
    }
    // arm-major order for readable output
    points.sort_by_key(|pt| ctx.arms.iter().position(|a| a.label == pt.label));
    let summary = ctx
        .arms
        .iter()
        .zip(dev)
        .map(|(arm, (sum, n))| ScatterSummary {
            label: arm.label.clone(),
            rms_deviation: if n > 0 { (sum / n as f64).sqrt() } else { 0.0 },
            samples: n,
        })
        .collect();
    Ok(ScatterOutput { points, summary })
}

/// Largest relative deviation between the full chain and `h_{i,p}^T z_p`
/// with ideal PAs and no modulator, for ZF symbols on trial 0.
pub fn self_check(cfg: &ExperimentConfig) -> Result<f64> {
    let ctx = Context::new(cfg)?;
    let sys = &cfg.system;
    let mut rng = trial_rng(cfg.run.seed, 0);
    let chan = draw_channel(&mut rng, sys.geometry()?, sys.k, &sys.channel, sys.ofdm, ctx.pa.gain)?;
    let s = draw_symbols(&mut rng, &ctx.constellation, sys.k, sys.ofdm.m_s);
    let arm = Arm::new(crate::precoders::Precoder::ZfRef, Some(crate::sigma_delta::Scheme::None));
    let res = ctx.precode(&arm, &chan, &s, 0.0)?;
    let (clean, _) = ctx.received_clean(&arm, &chan, &res.x)?;
    let mut worst = 0.0f64;
    for (i, y) in clean.iter().enumerate() {
        let r = ctx.demodulate(y)?;
        for (p, rv) in r.iter().enumerate() {
            let model = (chan.freq[p].row(i) * res.z.column(p))[0];
            worst = worst.max((rv - model).norm() / model.norm());
        }
    }
    Ok(worst)
}
