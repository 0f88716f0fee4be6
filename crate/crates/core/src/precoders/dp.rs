//! Per-axis detection probabilities of odd-integer PAM under Gaussian noise,
//! evaluated in the log domain.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `log Phi(x)`, accurate in both tails.
pub fn log_phi(x: f64) -> f64 {
    if x > 0.0 {
        (-0.5 * libm::erfc(x * FRAC_1_SQRT_2)).ln_1p()
    } else if x > -30.0 {
        (0.5 * libm::erfc(-x * FRAC_1_SQRT_2)).ln()
    } else {
        // Mills-ratio asymptotics
        let y = -x;
        let y2 = y * y;
        -0.5 * y2 - y.ln() - LN_SQRT_2PI + (1.0 - 1.0 / y2 + 3.0 / (y2 * y2) - 15.0 / (y2 * y2 * y2)).ln()
    }
}

fn log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// `log(Phi(u) - Phi(w))` for `u >= w`.
fn log_phi_diff(u: f64, w: f64) -> f64 {
    if u <= w {
        return f64::NEG_INFINITY;
    }
    if w >= 0.0 {
        // Q(w) - Q(u)
        let (lu, lw) = (log_phi(-u), log_phi(-w));
        lw + (-(lu - lw).exp_m1()).ln()
    } else if u <= 0.0 {
        let (lu, lw) = (log_phi(u), log_phi(w));
        lu + (-(lw - lu).exp_m1()).ln()
    } else {
        (0.5 * (libm::erf(u * FRAC_1_SQRT_2) - libm::erf(w * FRAC_1_SQRT_2))).ln()
    }
}

/// Probability that one received axis `t` decodes to the transmitted odd
/// level `s` of a `4 D^2`-QAM scaled by `beta`, noise `CN(0, sigma^2)`.
pub fn dp_real_component(s: i32, t: f64, beta: f64, sigma: f64, d: usize) -> f64 {
    (-neg_log_dp_component(s, t, beta, SQRT_2 / sigma, d).0).exp()
}

/// `(-log DP, d/dt, d/dbeta)` for one axis with `kappa = sqrt(2) / sigma`.
/// Non-finite values are returned as `+inf` with zero derivatives.
pub fn neg_log_dp_component(s: i32, t: f64, beta: f64, kappa: f64, d: usize) -> (f64, f64, f64) {
    let top = 2 * d as i32 - 1;
    let sf = s as f64;
    let u = kappa * (beta * (1.0 + sf) - t);
    let w = kappa * (beta * (sf - 1.0) - t);
    let out = if s == top {
        // Phi(-w)
        let v = -w;
        let l = log_phi(v);
        let r = (log_pdf(v) - l).exp();
        (-l, -r * kappa, r * kappa * (sf - 1.0))
    } else if s == -top {
        let l = log_phi(u);
        let r = (log_pdf(u) - l).exp();
        (-l, r * kappa, -r * kappa * (1.0 + sf))
    } else {
        let l = log_phi_diff(u, w);
        let ru = (log_pdf(u) - l).exp();
        let rw = (log_pdf(w) - l).exp();
        (-l, kappa * (ru - rw), -kappa * (ru * (1.0 + sf) - rw * (sf - 1.0)))
    };
    if out.0.is_finite() && out.1.is_finite() && out.2.is_finite() {
        out
    } else {
        (f64::INFINITY, 0.0, 0.0)
    }
}
