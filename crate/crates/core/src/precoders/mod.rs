//! Transmit-signal designs under an amplitude budget.
//!
//! All precoders work on the per-subcarrier model `r_{i,p} = h_{i,p}^T z_p`,
//! where `r` is the receiver DFT output divided by the OFDM round-trip
//! scale `M`. Noise standard deviations handed to the SLP solver must be
//! expressed in the same units (time-domain variance divided by `M`).

mod dp;
mod qam;
mod slp;
mod zf;

use serde::{Deserialize, Serialize};

pub use dp::{dp_real_component, log_phi, neg_log_dp_component, phi};
pub use qam::{dec_axis, detect, QamConstellation};
pub use slp::{slp_gradient, slp_objective, slp_precode, AdmmState, SlpConfig, OBJECTIVE_CAP};
pub use zf::{zf_precode, ZfVariant};

use crate::{CMat, Complex64};

/// Precoder selector as used in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Precoder {
    #[serde(rename = "zf-sd")]
    ZfSd,
    #[serde(rename = "zf-tsd")]
    ZfTsd,
    #[serde(rename = "zf-bo")]
    ZfBo,
    #[serde(rename = "zf-tp")]
    ZfTp,
    #[serde(rename = "zf-ref")]
    ZfRef,
    #[serde(rename = "slp-sd")]
    SlpSd,
    #[serde(rename = "slp-tsd")]
    SlpTsd,
    #[serde(rename = "slp-bo")]
    SlpBo,
    #[serde(rename = "slp-ref")]
    SlpRef,
}

/// Which amplitude budget a precoder designs for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetKind {
    /// `chi - psi` (first order) or `chi - 3 psi` (second order).
    NoOverload,
    /// `r_1dB`.
    BackOff,
    /// Average power `N M r_max^2` per block.
    TotalPower,
}

impl Precoder {
    pub const ALL: [Precoder; 9] = [
        Precoder::ZfSd,
        Precoder::ZfTsd,
        Precoder::ZfBo,
        Precoder::ZfTp,
        Precoder::ZfRef,
        Precoder::SlpSd,
        Precoder::SlpTsd,
        Precoder::SlpBo,
        Precoder::SlpRef,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Precoder::ZfSd => "zf-sd",
            Precoder::ZfTsd => "zf-tsd",
            Precoder::ZfBo => "zf-bo",
            Precoder::ZfTp => "zf-tp",
            Precoder::ZfRef => "zf-ref",
            Precoder::SlpSd => "slp-sd",
            Precoder::SlpTsd => "slp-tsd",
            Precoder::SlpBo => "slp-bo",
            Precoder::SlpRef => "slp-ref",
        }
    }

    pub fn is_slp(self) -> bool {
        matches!(self, Precoder::SlpSd | Precoder::SlpTsd | Precoder::SlpBo | Precoder::SlpRef)
    }

    /// Reference designs assume distortion-free PAs.
    pub fn is_reference(self) -> bool {
        matches!(self, Precoder::ZfRef | Precoder::SlpRef)
    }

    pub fn budget_kind(self) -> BudgetKind {
        match self {
            Precoder::ZfBo | Precoder::SlpBo => BudgetKind::BackOff,
            Precoder::ZfTp => BudgetKind::TotalPower,
            _ => BudgetKind::NoOverload,
        }
    }

    pub fn zf_variant(self) -> ZfVariant {
        match self {
            Precoder::ZfSd | Precoder::SlpSd => ZfVariant::SigmaDelta,
            Precoder::ZfTsd | Precoder::SlpTsd => ZfVariant::Tail,
            Precoder::ZfBo | Precoder::SlpBo => ZfVariant::BackOff,
            Precoder::ZfTp => ZfVariant::TotalPower,
            Precoder::ZfRef | Precoder::SlpRef => ZfVariant::NoDistortionRef,
        }
    }
}

impl std::str::FromStr for Precoder {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        Precoder::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| crate::Error::InvalidParameter(format!("unknown precoder '{s}'")))
    }
}

/// Solver bookkeeping attached to a [`PrecodeResult`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub inner_iterations: usize,
    pub objective: f64,
    pub best_objective: f64,
    /// `||X - Z F_s^T||_F^2` of the returned pair.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecodeResult {
    /// `N x M_s` frequency-domain transmit grid.
    pub z: CMat,
    /// `N x M` time-domain block handed to the modulator.
    pub x: CMat,
    /// Per-user constellation scaling.
    pub beta: Vec<f64>,
    /// ZF normalisation factor.
    pub gamma: Option<f64>,
    pub diagnostics: Diagnostics,
}

/// Entrywise magnitude clipping to `b`, phase preserved.
pub fn project_amplitude(x: &CMat, b: f64) -> CMat {
    x.map(|v| clip(v, b))
}

#[inline]
pub(crate) fn clip(v: Complex64, b: f64) -> Complex64 {
    let r = v.norm();
    if r > b {
        let mut w = v * (b / r);
        // rounding can leave |w| one ulp above b
        while w.norm() > b {
            w *= 1.0 - f64::EPSILON;
        }
        w
    } else {
        v
    }
}

/// `max |x_{n,m}|`.
pub fn max_abs(x: &CMat) -> f64 {
    x.iter().map(|v| v.norm()).fold(0.0, f64::max)
}
