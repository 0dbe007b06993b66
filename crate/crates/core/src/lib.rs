//! Impulse-radio UWB link toolkit.
//!
//! The crate is organised bottom-up:
//!
//! * [`quadrature`]: adaptive Gauss-Kronrod integration used by the closed-form budget.
//! * [`channel`]: IEEE 802.15.4a indoor-office LOS channel realizations.
//! * [`pulse`]: Gaussian kernel banks, mask-constrained pulse synthesis, PSD and autocorrelation.
//! * [`analytic`]: interference budget (signal, noise, IASI, ISI, MUI), SINR and BER.
//! * [`montecarlo`]: time-hopping BPSK link simulation with a correlation receiver.
//!
//! Units are fixed throughout: times in ns, rates in 1/ns, frequencies in MHz at the
//! I/O boundary (GHz inside the optimizer), energies linear. Decibels only appear in
//! configuration and reports.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytic;
pub mod channel;
pub mod error;
pub mod montecarlo;
pub mod pulse;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
