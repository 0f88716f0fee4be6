//! ULA geometry, multipath channel draws and continuous-time propagation
//! on the fine grid.
//!
//! Fine-grid cell `k` of a CP-extended block covers
//! `[(k - osf M_cp) delta, (k + 1 - osf M_cp) delta)` with `delta = T_s / osf`.
//! Path delays are whole numbers of fine steps. The receive filter is
//! discretised by midpoint quadrature, `W[j] = delta * Omega((j - 1/2) delta)`,
//! normalised to unit DC gain, so the received sample at `m T_s` is
//! `sum_k y_cell[k] W[m osf - k]`. The discrete taps use the same kernel:
//! `(Pi * Omega)(l T_s - tau) = sum_{r < osf} W[l osf - tau - r]`, which
//! makes the tap model and the fine-grid propagation agree to rounding.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::ofdm::OfdmParams;
use crate::sigma_delta::{spatial_frequency, DistortionLaw};
use crate::{CMat, CVec, Complex64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UlaGeometry {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default = "default_spacing")]
    pub d_over_lambda: f64,
}

fn default_spacing() -> f64 {
    0.125
}

impl UlaGeometry {
    pub fn new(n: usize, d_over_lambda: f64) -> Result<Self> {
        let g = Self { n, d_over_lambda };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("array needs at least one antenna".into()));
        }
        if !(self.d_over_lambda > 0.0 && self.d_over_lambda <= 0.5) {
            return Err(Error::InvalidParameter(format!(
                "antenna spacing d/lambda = {} outside (0, 1/2]",
                self.d_over_lambda
            )));
        }
        Ok(())
    }

    /// `a(theta)`, entry `n` equal to `exp(-j n 2 pi (d / lambda) sin theta)`.
    pub fn steering_vector(&self, theta: f64) -> CVec {
        let omega = spatial_frequency(theta, self.d_over_lambda);
        CVec::from_fn(self.n, |k, _| Complex64::from_polar(1.0, -(k as f64) * omega))
    }
}

/// Receive low-pass filter `Omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReceiveFilter {
    /// Root-raised cosine with period `T_s`, truncated to `[-span, span] T_s`.
    Rrc { rolloff: f64, span: usize },
    /// Ideal sampler (`Omega = delta`).
    Delta,
}

impl Default for ReceiveFilter {
    fn default() -> Self {
        ReceiveFilter::Rrc { rolloff: 0.22, span: 5 }
    }
}

/// Root-raised-cosine impulse response with `T_s = 1` and unit DC gain.
pub fn rrc_impulse(t: f64, beta: f64) -> f64 {
    use std::f64::consts::PI;
    if t.abs() < 1e-12 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    if beta > 0.0 && (t.abs() - 1.0 / (4.0 * beta)).abs() < 1e-10 {
        let arg = PI / (4.0 * beta);
        return beta / 2f64.sqrt() * ((1.0 + 2.0 / PI) * arg.sin() + (1.0 - 2.0 / PI) * arg.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Fine-grid receive kernel `W[j]` for `j = first, first + 1, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveKernel {
    pub first: isize,
    pub taps: Vec<f64>,
    pub osf: usize,
}

impl ReceiveKernel {
    pub fn new(filter: ReceiveFilter, osf: usize) -> Self {
        match filter {
            ReceiveFilter::Delta => Self {
                first: 0,
                taps: vec![1.0],
                osf,
            },
            ReceiveFilter::Rrc { rolloff, span } => {
                let half = (span * osf) as isize;
                let delta = 1.0 / osf as f64;
                let mut taps: Vec<f64> = (-half + 1..=half)
                    .map(|j| delta * rrc_impulse((j as f64 - 0.5) * delta, rolloff))
                    .collect();
                let dc: f64 = taps.iter().sum();
                taps.iter_mut().for_each(|w| *w /= dc);
                Self {
                    first: -half + 1,
                    taps,
                    osf,
                }
            }
        }
    }

    #[inline]
    pub fn at(&self, j: isize) -> f64 {
        let k = j - self.first;
        if k < 0 || k as usize >= self.taps.len() {
            0.0
        } else {
            self.taps[k as usize]
        }
    }

    /// Quadrature of `int |Omega(t)| dt`.
    pub fn l1_norm(&self) -> f64 {
        self.taps.iter().map(|w| w.abs()).sum()
    }

    /// `(Pi * Omega)(l T_s - tau)` for a delay of `delay` fine steps.
    pub fn pulse(&self, ell: usize, delay: usize) -> f64 {
        let base = (ell * self.osf) as isize - delay as isize;
        (0..self.osf as isize).map(|r| self.at(base - r)).sum()
    }
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain: Complex64,
    /// Angle of departure in radians.
    pub angle: f64,
    /// Delay in fine-grid steps (`T_s / osf`).
    pub delay: usize,
}

/// Multipath draw settings; delays are in units of `T_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    #[serde(rename = "J", default = "default_paths")]
    pub paths: usize,
    #[serde(rename = "L", default = "default_taps")]
    pub taps: usize,
    #[serde(default = "default_spread")]
    pub angle_spread_deg: f64,
    #[serde(default = "default_delay_range")]
    pub delay_range: [f64; 2],
    #[serde(default)]
    pub filter: ReceiveFilter,
}

fn default_paths() -> usize {
    4
}
fn default_taps() -> usize {
    20
}
fn default_spread() -> f64 {
    35.0
}
fn default_delay_range() -> [f64; 2] {
    [5.0, 15.0]
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            paths: default_paths(),
            taps: default_taps(),
            angle_spread_deg: default_spread(),
            delay_range: default_delay_range(),
            filter: ReceiveFilter::default(),
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self, ofdm: &OfdmParams) -> Result<()> {
        if self.paths == 0 || self.taps == 0 {
            return Err(Error::InvalidParameter("J and L must be >= 1".into()));
        }
        let [lo, hi] = self.delay_range;
        if !(lo >= 0.0 && hi >= lo) {
            return Err(Error::InvalidParameter("delay range must satisfy 0 <= min <= max".into()));
        }
        if hi > ofdm.m_cp as f64 {
            return Err(Error::InvalidParameter(format!(
                "maximum delay {hi} T_s exceeds the cyclic prefix ({} samples)",
                ofdm.m_cp
            )));
        }
        if let ReceiveFilter::Rrc { rolloff, span } = self.filter {
            if !(0.0..=1.0).contains(&rolloff) || span == 0 {
                return Err(Error::InvalidParameter("RRC needs rolloff in [0, 1] and span >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Perfect-CSI multi-user channel for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub geometry: UlaGeometry,
    pub ofdm: OfdmParams,
    pub filter: ReceiveFilter,
    /// PA gain folded into the taps.
    pub pa_gain: f64,
    /// `paths[i][j]` for user `i`.
    pub paths: Vec<Vec<Path>>,
    /// Per user, an `N x L` matrix whose column `l` is `h_{i,l}`.
    pub taps: Vec<CMat>,
    /// Per subcarrier, the `K x N` matrix with rows `h_{i,p}^T`.
    pub freq: Vec<CMat>,
}

impl ChannelRealization {
    /// Builds taps and frequency responses from explicit paths.
    pub fn from_paths(
        geometry: UlaGeometry,
        ofdm: OfdmParams,
        filter: ReceiveFilter,
        pa_gain: f64,
        n_taps: usize,
        paths: Vec<Vec<Path>>,
    ) -> Result<Self> {
        geometry.validate()?;
        ofdm.validate()?;
        let kernel = ReceiveKernel::new(filter, ofdm.osf);
        let n = geometry.n;
        let taps: Vec<CMat> = paths
            .iter()
            .map(|user| {
                let mut h = CMat::zeros(n, n_taps);
                for path in user {
                    let a = geometry.steering_vector(path.angle);
                    for ell in 0..n_taps {
                        let g = kernel.pulse(ell, path.delay);
                        if g != 0.0 {
                            let coef = path.gain * (pa_gain * g);
                            for row in 0..n {
                                h[(row, ell)] += a[row] * coef;
                            }
                        }
                    }
                }
                h
            })
            .collect();
        let k = paths.len();
        let m = ofdm.m as f64;
        let freq = (0..ofdm.m_s)
            .map(|p| {
                let mut hp = CMat::zeros(k, n);
                for (i, h) in taps.iter().enumerate() {
                    for ell in 0..n_taps {
                        let ph = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (ell * p) as f64 / m);
                        for row in 0..n {
                            hp[(i, row)] += h[(row, ell)] * ph;
                        }
                    }
                }
                hp
            })
            .collect();
        Ok(Self {
            geometry,
            ofdm,
            filter,
            pa_gain,
            paths,
            taps,
            freq,
        })
    }

    pub fn users(&self) -> usize {
        self.paths.len()
    }

    pub fn kernel(&self) -> ReceiveKernel {
        ReceiveKernel::new(self.filter, self.ofdm.osf)
    }

    /// Noise-free received samples `y_{i,m}`, `m = -M_cp .. M-1`, for the
    /// fine-grid PA output frame `u` (`N x osf (M_cp + M)`).
    pub fn propagate_clean(&self, u: &CMat) -> Result<Vec<Vec<Complex64>>> {
        let ofdm = self.ofdm;
        let fine = ofdm.fine_len();
        if u.nrows() != self.geometry.n || u.ncols() != fine {
            return Err(shape_err(
                format!("{} x {fine} fine-grid frame", self.geometry.n),
                format!("{} x {}", u.nrows(), u.ncols()),
            ));
        }
        let max_delay = ofdm.osf * ofdm.m_cp;
        let kernel = self.kernel();
        let osf = ofdm.osf as isize;
        let mut out = Vec::with_capacity(self.users());
        for user in &self.paths {
            if let Some(p) = user.iter().find(|p| p.delay > max_delay) {
                return Err(Error::DelayOutOfRange { delay: p.delay });
            }
            let span = fine + user.iter().map(|p| p.delay).max().unwrap_or(0);
            let mut cells = vec![Complex64::new(0.0, 0.0); span];
            for path in user {
                let a = self.geometry.steering_vector(path.angle);
                for c in 0..fine {
                    let col = u.column(c);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (an, un) in a.iter().zip(col.iter()) {
                        acc += an * un;
                    }
                    cells[c + path.delay] += acc * path.gain;
                }
            }
            let y: Vec<Complex64> = (0..ofdm.block_len() as isize)
                .map(|m| {
                    let center = m * osf;
                    let lo = (center - (kernel.first + kernel.taps.len() as isize - 1)).max(0);
                    let hi = (center - kernel.first).min(span as isize - 1);
                    let mut acc = Complex64::new(0.0, 0.0);
                    let mut c = lo;
                    while c <= hi {
                        acc += cells[c as usize] * kernel.at(center - c);
                        c += 1;
                    }
                    acc
                })
                .collect();
            out.push(y);
        }
        Ok(out)
    }

    /// [`propagate_clean`](Self::propagate_clean) plus i.i.d. `CN(0, sigma_v2)`
    /// noise on every received sample.
    pub fn propagate<R: Rng + ?Sized>(&self, u: &CMat, sigma_v2: f64, rng: &mut R) -> Result<Vec<Vec<Complex64>>> {
        let mut y = self.propagate_clean(u)?;
        if sigma_v2 > 0.0 {
            for user in &mut y {
                for v in user.iter_mut() {
                    *v += complex_normal(rng) * sigma_v2.sqrt();
                }
            }
        }
        Ok(y)
    }

    /// Closed-form per-user distortion power `E|xi_{i,m}|^2` with
    /// `|q_hat| ~ U[0, psi_hat]` i.i.d. over antennas and paths.
    pub fn distortion_noise_power(&self, psi_hat: f64, law: DistortionLaw) -> Vec<f64> {
        let n = self.geometry.n;
        self.paths
            .iter()
            .map(|user| {
                user.iter()
                    .map(|p| {
                        let omega = spatial_frequency(p.angle, self.geometry.d_over_lambda);
                        p.gain.norm_sqr() * law.array_gain(omega, n)
                    })
                    .sum::<f64>()
                    * psi_hat
                    * psi_hat
                    / 3.0
            })
            .collect()
    }

    /// Discrete-time tap model `sum_l h_{i,l}^T x_{m-l}` for `m = 0..M`,
    /// with `x_cp` the CP-extended `N x (M_cp + M)` block.
    pub fn tap_model(&self, x_cp: &CMat) -> Vec<Vec<Complex64>> {
        let m_cp = self.ofdm.m_cp as isize;
        self.taps
            .iter()
            .map(|h| {
                (0..self.ofdm.m as isize)
                    .map(|m| {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for ell in 0..h.ncols() as isize {
                            let idx = m - ell + m_cp;
                            if idx < 0 {
                                continue;
                            }
                            acc += (h.column(ell as usize).transpose() * x_cp.column(idx as usize))[0];
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }
}

/// Draws `K` users' paths: `alpha ~ CN(0, 1/J)`, angle uniform on
/// `[-spread, spread]`, delay uniform on the configured range and snapped to
/// the fine grid.
pub fn draw_channel<R: Rng + ?Sized>(
    rng: &mut R,
    geometry: UlaGeometry,
    users: usize,
    cfg: &ChannelConfig,
    ofdm: OfdmParams,
    pa_gain: f64,
) -> Result<ChannelRealization> {
    cfg.validate(&ofdm)?;
    let spread = cfg.angle_spread_deg.to_radians();
    let osf = ofdm.osf as f64;
    let [lo, hi] = cfg.delay_range;
    let scale = (1.0 / cfg.paths as f64).sqrt();
    let paths = (0..users)
        .map(|_| {
            (0..cfg.paths)
                .map(|_| {
                    let gain = complex_normal(rng) * scale;
                    let angle = if spread > 0.0 { rng.random_range(-spread..=spread) } else { 0.0 };
                    let tau = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                    Path {
                        gain,
                        angle,
                        delay: (tau * osf).round() as usize,
                    }
                })
                .collect()
        })
        .collect();
    ChannelRealization::from_paths(geometry, ofdm, cfg.filter, pa_gain, cfg.taps, paths)
}

/// One `CN(0, 1)` sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}
