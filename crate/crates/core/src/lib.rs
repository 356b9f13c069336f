//! q-dependent detrended cross-correlation analysis of multivariate time series.
//!
//! The crate is organised as a pipeline:
//!
//! - [`panel`]: price ingestion, alignment and log-returns.
//! - [`detrend`]: profiles, segment-wise polynomial detrending and q-order
//!   fluctuation functions (MFDFA / MFCCA), plus scaling exponents.
//! - [`rhoq`]: the coefficient ρ_q(s), the matrix C(q,s) and the distance D(q,s).
//! - [`spectra`]: eigen-analysis of C(q,s), eigenvector entropy and
//!   market-factor filtering.
//! - [`graph`]: minimum spanning trees over D(q,s), tree metrics and the
//!   DeltaCon0 / resistance-perturbation graph distances.
//! - [`rolling`]: the rolling-window driver and measure-series statistics.
//! - [`synth`]: synthetic panels with known ground truth.
//! - [`cli`]: the `qmst` command-line front end.

pub mod cli;
pub mod detrend;
pub mod error;
pub mod graph;
pub mod panel;
pub mod rhoq;
pub mod rolling;
pub mod spectra;
pub mod synth;

pub use error::{Error, Result};
