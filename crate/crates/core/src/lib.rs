//! Link-level Monte Carlo simulator for the massive-MIMO TDD downlink with
//! conjugate beamforming.
//!
//! Each user estimates its effective channel gain `‖g_k‖²` blindly from the
//! average power of the data it receives during one coherence block. The
//! crate provides the pieces needed to evaluate that estimator:
//!
//! - [`channel`]: i.i.d. Rayleigh and keyhole channel draws.
//! - [`precoder`]: conjugate beamforming with the long-term power normalization.
//! - [`link_sim`]: 4-QAM data blocks and the per-user received samples.
//! - [`estimators`]: blind, statistical, pilot-LMMSE and genie gain estimates.
//! - [`analysis`]: closed-form moments, the accuracy metric `ϱ_k`, normalized MSE.
//! - [`harness`]: seeded SNR sweeps and CSV/JSON output.

pub mod analysis;
pub mod channel;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod link_sim;
pub mod precoder;
pub mod rng;
pub mod stats;

pub use crate::channel::{ChannelModel, ChannelRealization, Gram, LargeScaleProfile};
pub use crate::error::{Error, Result};
pub use crate::precoder::PrecoderState;
pub use crate::rng::SeedTree;

pub use num_complex::Complex64;
