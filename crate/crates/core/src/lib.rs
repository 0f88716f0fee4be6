//! Spatial sigma-delta shaping of power-amplifier distortion for the
//! multi-user massive MIMO-OFDM downlink.
//!
//! The crate is organised bottom-up:
//!
//! * [`pa`] memoryless PA responses and their scalar characteristics.
//! * [`sigma_delta`] spatial modulators running across the antenna index.
//! * [`ofdm`] scaled IDFT, cyclic prefix, zero-order hold and receiver DFT.
//! * [`channel`] ULA geometry, multipath draws, receive filtering.
//! * [`precoders`] ZF variants and the ADMM-solved symbol-level precoder.
//! * [`harness`] seeded Monte Carlo experiments (BER, scatter, spectra).
//!
//! Time is normalised so that the sampling period `T_s` equals one.

pub mod channel;
pub mod error;
pub mod harness;
pub mod ofdm;
pub mod pa;
pub mod precoders;
pub mod sigma_delta;

pub use num_complex::Complex64;

/// Dense complex matrix used for antenna frames, grids and channels.
pub type CMat = nalgebra::DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<Complex64>;

pub use channel::{ChannelRealization, UlaGeometry};
pub use error::{Error, Result};
pub use ofdm::OfdmParams;
pub use pa::{PaKind, PaModel, ShapingBudget};
pub use precoders::{PrecodeResult, Precoder, QamConstellation};
pub use sigma_delta::{ModulatorConfig, Order, Scheme};
