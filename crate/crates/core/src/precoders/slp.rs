//! Symbol-level precoding: maximise the joint detection probability subject
//! to `max |X| <= b` with an ADMM splitting whose `(beta, Z)` block is solved
//! by FISTA-style accelerated projected gradient with backtracking.

use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use super::dp::neg_log_dp_component;
use super::zf::{zf_precode, ZfVariant};
use super::{project_amplitude, Diagnostics, PrecodeResult};
use crate::error::{shape_err, Error, Result};
use crate::ofdm::Ofdm;
use crate::{CMat, Complex64};

/// Ceiling applied to the objective so line searches stay finite.
pub const OBJECTIVE_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlpConfig {
    pub rho: f64,
    pub admm_max_iter: usize,
    pub apg_max_iter: usize,
    /// Relative objective change for ADMM termination.
    pub objective_tol: f64,
    /// Bound on `||X - Z F_s^T||_F^2` for ADMM termination.
    pub residual_tol: f64,
    /// Bound on the squared APG step.
    pub apg_step_tol: f64,
    pub initial_step: f64,
    pub shrink: f64,
}

impl Default for SlpConfig {
    fn default() -> Self {
        Self {
            rho: 500.0,
            admm_max_iter: 30,
            apg_max_iter: 50,
            objective_tol: 1e-3,
            residual_tol: 1e-3,
            apg_step_tol: 1e-6,
            initial_step: 1.0,
            shrink: 0.5,
        }
    }
}

impl SlpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || self.admm_max_iter == 0 || self.apg_max_iter == 0 {
            return Err(Error::InvalidParameter("SLP needs rho > 0 and positive iteration caps".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) || !(self.initial_step > 0.0) {
            return Err(Error::InvalidParameter("line search needs 0 < shrink < 1 and a positive initial step".into()));
        }
        Ok(())
    }
}

/// Iterates of the ADMM solver.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub beta: Vec<f64>,
    pub z: CMat,
    pub x: CMat,
    pub lambda: CMat,
    pub rho: f64,
    /// Last accepted APG step.
    pub step: f64,
}

struct Problem<'a> {
    freq: &'a [CMat],
    s: &'a CMat,
    kappa: Vec<f64>,
    d: usize,
}

impl<'a> Problem<'a> {
    fn new(freq: &'a [CMat], s: &'a CMat, sigma_eta: &[f64], d: usize) -> Result<Self> {
        let k = s.nrows();
        if sigma_eta.len() != k {
            return Err(shape_err(format!("{k} noise levels"), sigma_eta.len()));
        }
        if freq.len() != s.ncols() || freq.iter().any(|h| h.nrows() != k) {
            return Err(shape_err(format!("{} channels with {k} rows", s.ncols()), "other"));
        }
        if sigma_eta.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("effective noise levels must be positive".into()));
        }
        Ok(Self {
            freq,
            s,
            kappa: sigma_eta.iter().map(|v| SQRT_2 / v).collect(),
            d,
        })
    }

    fn users(&self) -> usize {
        self.s.nrows()
    }

    /// `F` and optionally its gradient.
    fn eval(&self, beta: &[f64], z: &CMat, grad: Option<(&mut [f64], &mut CMat)>) -> f64 {
        let k = self.users();
        let mut total = 0.0;
        let (mut gb, mut gz) = match grad {
            Some((gb, gz)) => {
                gb.iter_mut().for_each(|v| *v = 0.0);
                (Some(gb), Some(gz))
            }
            None => (None, None),
        };
        let mut gp = vec![Complex64::new(0.0, 0.0); k];
        for (p, h) in self.freq.iter().enumerate() {
            let y = h * z.column(p);
            for i in 0..k {
                let s = self.s[(i, p)];
                let (fr, dtr, dbr) = neg_log_dp_component(s.re as i32, y[i].re, beta[i], self.kappa[i], self.d);
                let (fi, dti, dbi) = neg_log_dp_component(s.im as i32, y[i].im, beta[i], self.kappa[i], self.d);
                total += fr + fi;
                if let Some(gb) = gb.as_deref_mut() {
                    gb[i] += dbr + dbi;
                }
                gp[i] = Complex64::new(dtr, dti);
            }
            if let Some(gz) = gz.as_deref_mut() {
                // conj(h)^T (g_R + j g_I)
                for n in 0..h.ncols() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..k {
                        acc += h[(i, n)].conj() * gp[i];
                    }
                    gz[(n, p)] = acc;
                }
            }
        }
        if total.is_finite() {
            total.min(OBJECTIVE_CAP)
        } else {
            OBJECTIVE_CAP
        }
    }
}

fn check_shapes(freq: &[CMat], s: &CMat, beta: &[f64], z: &CMat) -> Result<()> {
    let n = freq.first().map(|h| h.ncols()).unwrap_or(0);
    if beta.len() != s.nrows() || z.nrows() != n || z.ncols() != s.ncols() {
        return Err(shape_err(
            format!("beta of {} and Z of {n} x {}", s.nrows(), s.ncols()),
            format!("beta of {} and Z of {} x {}", beta.len(), z.nrows(), z.ncols()),
        ));
    }
    Ok(())
}

/// `F(beta, Z) = -sum_{i,p} (log DP^R + log DP^I)`, capped at [`OBJECTIVE_CAP`].
pub fn slp_objective(beta: &[f64], z: &CMat, freq: &[CMat], s: &CMat, sigma_eta: &[f64], d: usize) -> Result<f64> {
    check_shapes(freq, s, beta, z)?;
    Ok(Problem::new(freq, s, sigma_eta, d)?.eval(beta, z, None))
}

/// `F` with its gradient; the `Z` part is `dF/dRe Z + j dF/dIm Z`.
pub fn slp_gradient(beta: &[f64], z: &CMat, freq: &[CMat], s: &CMat, sigma_eta: &[f64], d: usize) -> Result<(f64, Vec<f64>, CMat)> {
    check_shapes(freq, s, beta, z)?;
    let prob = Problem::new(freq, s, sigma_eta, d)?;
    let mut gb = vec![0.0; beta.len()];
    let mut gz = CMat::zeros(z.nrows(), z.ncols());
    let f = prob.eval(beta, z, Some((&mut gb, &mut gz)));
    Ok((f, gb, gz))
}

/// `h(beta, Z) = F + rho/2 ||Z F_s^T - V||^2` with `V = X + Lambda / rho`.
struct Augmented<'a> {
    prob: &'a Problem<'a>,
    ofdm: &'a Ofdm,
    v: CMat,
    rho: f64,
}

impl Augmented<'_> {
    fn value(&self, beta: &[f64], z: &CMat) -> Result<f64> {
        let f = self.prob.eval(beta, z, None);
        let y = self.ofdm.synthesize(z)?;
        Ok(f + 0.5 * self.rho * (y - &self.v).norm_squared())
    }

    fn value_grad(&self, beta: &[f64], z: &CMat, gb: &mut [f64], gz: &mut CMat) -> Result<f64> {
        let f = self.prob.eval(beta, z, Some((gb, gz)));
        let r = self.ofdm.synthesize(z)? - &self.v;
        let back = self.ofdm.analyze(&r)?;
        *gz += back * Complex64::new(self.rho, 0.0);
        Ok(f + 0.5 * self.rho * r.norm_squared())
    }
}

fn inner(gb: &[f64], gz: &CMat, db: &[f64], dz: &CMat) -> f64 {
    let a: f64 = gb.iter().zip(db).map(|(g, d)| g * d).sum();
    let b: f64 = gz.iter().zip(dz.iter()).map(|(g, d)| (g.conj() * d).re).sum();
    a + b
}

/// Accelerated projected gradient on `beta >= 0`, warm-started at `(beta, z)`.
/// Returns the iteration count.
fn apg(aug: &Augmented<'_>, beta: &mut Vec<f64>, z: &mut CMat, step: &mut f64, cfg: &SlpConfig) -> Result<usize> {
    let k = beta.len();
    let mut beta_prev = beta.clone();
    let mut z_prev = z.clone();
    let mut mu_prev = 0.0f64;
    let mut mu = 1.0f64;
    let mut gb = vec![0.0; k];
    let mut gz = CMat::zeros(z.nrows(), z.ncols());
    let mut iters = 0;
    for _ in 0..cfg.apg_max_iter {
        iters += 1;
        let coef = (mu_prev - 1.0) / mu;
        let mut by: Vec<f64> = (0..k).map(|i| (beta[i] + coef * (beta[i] - beta_prev[i])).max(0.0)).collect();
        let mut zy = &*z + (&*z - &z_prev) * Complex64::new(coef, 0.0);
        let mut hy = aug.value_grad(&by, &zy, &mut gb, &mut gz)?;
        if hy >= OBJECTIVE_CAP {
            // extrapolation left the finite region; restart from the iterate
            by = beta.clone();
            zy = z.clone();
            hy = aug.value_grad(&by, &zy, &mut gb, &mut gz)?;
        }
        let mut gamma = *step;
        let (nb, nz) = loop {
            let nb: Vec<f64> = (0..k).map(|i| (by[i] - gamma * gb[i]).max(0.0)).collect();
            let nz = &zy - &gz * Complex64::new(gamma, 0.0);
            let db: Vec<f64> = (0..k).map(|i| nb[i] - by[i]).collect();
            let dz = &nz - &zy;
            let dist = db.iter().map(|v| v * v).sum::<f64>() + dz.norm_squared();
            let bound = hy + inner(&gb, &gz, &db, &dz) + dist / (2.0 * gamma);
            if aug.value(&nb, &nz)? <= bound || gamma < 1e-300 {
                break (nb, nz);
            }
            gamma *= cfg.shrink;
        };
        *step = gamma;
        let change = (0..k).map(|i| (nb[i] - beta[i]).powi(2)).sum::<f64>() + (&nz - &*z).norm_squared();
        beta_prev = std::mem::replace(beta, nb);
        z_prev = std::mem::replace(z, nz);
        let next = 0.5 * (1.0 + (1.0 + 4.0 * mu * mu).sqrt());
        mu_prev = mu;
        mu = next;
        if change <= cfg.apg_step_tol {
            break;
        }
    }
    Ok(iters)
}

/// SLP over `X in {max |x| <= budget}`, initialised at the ZF solution with
/// zero duals. The returned `X` is `Pi(Z F_s^T)` and so is feasible exactly;
/// `diagnostics.residual` reports `||X - Z F_s^T||_F^2` for that pair.
pub fn slp_precode(freq: &[CMat], ofdm: &Ofdm, s: &CMat, budget: f64, sigma_eta: &[f64], d: usize, cfg: &SlpConfig) -> Result<PrecodeResult> {
    cfg.validate()?;
    let prob = Problem::new(freq, s, sigma_eta, d)?;
    let init = zf_precode(freq, ofdm, s, budget, ZfVariant::SigmaDelta)?;
    let mut state = AdmmState {
        beta: init.beta.clone(),
        z: init.z.clone(),
        x: init.x.clone(),
        lambda: CMat::zeros(init.x.nrows(), init.x.ncols()),
        rho: cfg.rho,
        step: cfg.initial_step,
    };
    let mut f_prev = prob.eval(&state.beta, &state.z, None);
    let mut diag = Diagnostics {
        objective: f_prev,
        best_objective: f_prev,
        ..Default::default()
    };
    let rho_c = Complex64::new(state.rho, 0.0);
    for _ in 0..cfg.admm_max_iter {
        diag.iterations += 1;
        let y = ofdm.synthesize(&state.z)?;
        state.x = project_amplitude(&(&y - &state.lambda / rho_c), budget);
        let aug = Augmented {
            prob: &prob,
            ofdm,
            v: &state.x + &state.lambda / rho_c,
            rho: state.rho,
        };
        // allow the step to grow back between outer iterations
        state.step = (state.step * 2.0).min(cfg.initial_step);
        diag.inner_iterations += apg(&aug, &mut state.beta, &mut state.z, &mut state.step, cfg)?;
        let y = ofdm.synthesize(&state.z)?;
        let r = &state.x - &y;
        state.lambda += &r * rho_c;
        let f = prob.eval(&state.beta, &state.z, None);
        let res = r.norm_squared();
        diag.objective = f;
        diag.best_objective = diag.best_objective.min(f);
        diag.residual = res;
        if (f - f_prev).abs() <= cfg.objective_tol * f_prev && res <= cfg.residual_tol {
            diag.converged = true;
            break;
        }
        f_prev = f;
    }
    if !diag.converged {
        log::debug!("ADMM stopped at the iteration cap (residual {:.3e})", diag.residual);
    }
    let y = ofdm.synthesize(&state.z)?;
    let x = project_amplitude(&y, budget);
    diag.residual = (&x - &y).norm_squared();
    Ok(PrecodeResult {
        z: state.z,
        x,
        beta: state.beta,
        gamma: None,
        diagnostics: diag,
    })
}
