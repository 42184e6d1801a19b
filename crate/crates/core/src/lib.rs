//! Link-level evaluation of simple modulation and equalization schemes over
//! sparse wideband multipath channels.
//!
//! The crate answers one question for a given channel impulse response: how
//! much equalization effort does a link actually need? It provides
//!
//! - [`cir`]: channel impulse response synthesis, file I/O, and the
//!   measurement-style preprocessing chain (coherent averaging, power
//!   normalization, sub-sample peak synchronization),
//! - [`singlecarrier`]: achievable spectral efficiency with inter-symbol
//!   interference treated as noise, the matched filter bound, and SINR-optimal
//!   linear MMSE equalizer design with decision-delay search,
//! - [`multicarrier`]: exact per-subcarrier signal/ICI/IBI power analysis for
//!   OFDM with short or absent cyclic prefixes,
//! - [`ldpc`]: the rate-1/2, 1296-bit quasi-cyclic LDPC code with a
//!   belief-propagation decoder,
//! - [`linksim`]: end-to-end coded QPSK Monte Carlo BER simulation,
//! - [`campaign`]: configuration-driven sweeps over channel ensembles with
//!   deterministic, plot-ready CSV output.

pub mod campaign;
pub mod cir;
pub mod ldpc;
pub mod linksim;
pub mod multicarrier;
pub mod rng;
pub mod singlecarrier;

mod error;

pub use error::{Error, Result};

/// Complex sample type used throughout the crate.
pub type Complex64 = num_complex::Complex<f64>;
