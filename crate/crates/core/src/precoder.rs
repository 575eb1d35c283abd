//! Conjugate beamforming `x = √α G s`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, LargeScaleProfile};
use crate::error::{Error, Result};

/// Transmit power `ρ` and the normalization `α` derived from it.
///
/// Noise at every user has unit variance, so `ρ` is also the SNR.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecoderState {
    alpha: f64,
    rho: f64,
}

impl PrecoderState {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Bypasses the `α > 0` invariant, e.g. to simulate a silent transmitter.
    #[cfg(test)]
    pub(crate) fn raw(alpha: f64, rho: f64) -> Self {
        PrecoderState { alpha, rho }
    }
}

/// `α = ρ / E[Tr(G Gᴴ)] = ρ / (M Σ_k β_k)`.
///
/// The expectation is the same for both channel models because every small
/// scale coefficient has unit power, so `α` is fixed by the large-scale
/// profile and never renormalized per realization.
pub fn normalization_alpha(
    rho: f64,
    antennas: usize,
    profile: &LargeScaleProfile,
) -> Result<PrecoderState> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::config(format!("transmit power must be positive, got {rho}")));
    }
    if antennas == 0 {
        return Err(Error::config("precoder needs M >= 1"));
    }
    let alpha = rho / (antennas as f64 * profile.sum_all());
    Ok(PrecoderState { alpha, rho })
}

/// The precoded vector `x = √α G s` (length `M`).
pub fn precode(
    ch: &ChannelRealization,
    symbols: &[Complex64],
    state: &PrecoderState,
) -> Result<Vec<Complex64>> {
    let mut x = vec![Complex64::new(0.0, 0.0); ch.num_antennas()];
    precode_into(ch, symbols, state, &mut x)?;
    Ok(x)
}

pub(crate) fn precode_into(
    ch: &ChannelRealization,
    symbols: &[Complex64],
    state: &PrecoderState,
    x: &mut [Complex64],
) -> Result<()> {
    if symbols.len() != ch.num_users() {
        return Err(Error::Dimension(format!(
            "{} symbols for {} users",
            symbols.len(),
            ch.num_users()
        )));
    }
    x.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    for (column, &s) in ch.columns().zip(symbols) {
        for (xm, g) in x.iter_mut().zip(column) {
            *xm += g * s;
        }
    }
    let scale = state.alpha.sqrt();
    x.iter_mut().for_each(|v| *v *= scale);
    Ok(())
}
