//! Closed-form moments and accuracy analysis of the blind estimator.
//!
//! With `β̄_k = Σ_{k'≠k} β_k'`, the error term
//!
//! ```text
//! ε_k = Σ_{k'≠k} |g_kᴴ g_k'|² − β̄_k ‖g_k‖²
//! ```
//!
//! is the only thing separating the exact received power from the quadratic
//! the blind estimator inverts. Its normalized second moment
//!
//! ```text
//! ϱ_k = E|ε_k|² / E[(β̄_k/2 + ‖g_k‖²)²]²
//! ```
//!
//! decays as `O(1/M²)` for both channel models.

use serde::{Deserialize, Serialize};

use crate::channel::{generate, ChannelModel, ChannelRealization, Gram, LargeScaleProfile};
use crate::error::{check_user, Error, Result};
use crate::precoder::PrecoderState;
use crate::rng::SeedTree;
use crate::stats::{map_trials, MeanEstimate};

/// Average received power `E|y_k|²` over symbols and noise for a fixed channel:
/// `α‖g_k‖⁴ + α Σ_{k'≠k} |g_kᴴ g_k'|² + 1`.
pub fn exact_power(ch: &ChannelRealization, state: &PrecoderState, k: usize) -> Result<f64> {
    check_user(k, ch.num_users())?;
    Ok(exact_power_from_gram(&ch.gram(), state.alpha(), k))
}

pub fn exact_power_from_gram(gram: &Gram, alpha: f64, k: usize) -> f64 {
    let gain = gram.gain(k);
    alpha * gain * gain + alpha * gram.interference(k) + 1.0
}

/// `ε_k = Σ_{k'≠k} |g_kᴴ g_k'|² − (Σ_{k'≠k} β_k') ‖g_k‖²`; zero when `K = 1`.
pub fn epsilon_k(ch: &ChannelRealization, profile: &LargeScaleProfile, k: usize) -> Result<f64> {
    check_profile(ch, profile)?;
    check_user(k, ch.num_users())?;
    epsilon_from_gram(&ch.gram(), profile, k)
}

pub fn epsilon_from_gram(gram: &Gram, profile: &LargeScaleProfile, k: usize) -> Result<f64> {
    if gram.num_users() == 1 {
        return Ok(0.0);
    }
    Ok(gram.interference(k) - profile.sum_excluding(k)? * gram.gain(k))
}

/// `|ε_k| / (M(K − 1))`.
///
/// `|ε_k|` itself grows like `M`, so at fixed `K` this stays of order
/// `1/√(K − 1)`; it shrinks as the number of interferers grows.
pub fn trace_lemma_deviation(
    ch: &ChannelRealization,
    profile: &LargeScaleProfile,
    k: usize,
) -> Result<f64> {
    let users = ch.num_users();
    if users < 2 {
        return Err(Error::config("trace-lemma deviation needs K >= 2"));
    }
    Ok(epsilon_k(ch, profile, k)?.abs() / (ch.num_antennas() * (users - 1)) as f64)
}

fn check_profile(ch: &ChannelRealization, profile: &LargeScaleProfile) -> Result<()> {
    if ch.num_users() != profile.num_users() {
        return Err(Error::Dimension(format!(
            "channel has {} users, profile has {}",
            ch.num_users(),
            profile.num_users()
        )));
    }
    Ok(())
}

/// First and second moments of the effective gain `‖g‖²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    /// `E‖g‖²`
    pub mean_gain: f64,
    /// `E‖g‖⁴`
    pub fourth: f64,
    /// `Var ‖g‖²`
    pub variance: f64,
}

/// Moments of `‖g‖²` for an `M`-antenna channel with large-scale gain `β`.
///
/// Rayleigh: `‖g‖²/β ~ Gamma(M, 1)`, so `E‖g‖⁴ = β²M(M+1)`.
/// Keyhole: `‖g‖² = β|ν|²‖h̄‖²` with independent factors and `E|ν|⁴ = 2`.
pub fn moments(model: ChannelModel, antennas: usize, beta: f64) -> Result<Moments> {
    if antennas == 0 {
        return Err(Error::config("moments need M >= 1"));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::config(format!("beta must be positive, got {beta}")));
    }
    let m = antennas as f64;
    let b2 = beta * beta;
    Ok(match model {
        ChannelModel::Rayleigh => Moments {
            mean_gain: m * beta,
            fourth: b2 * m * (m + 1.0),
            variance: m * b2,
        },
        ChannelModel::Keyhole => Moments {
            mean_gain: m * beta,
            fourth: 2.0 * b2 * m * (m + 1.0),
            variance: b2 * (m * m + 2.0 * m),
        },
    })
}

/// `E|ε_k|²`: `M(M+1)β_k² Σ_{k'≠k} β_k'²` for Rayleigh, six times that for keyhole.
pub fn epsilon_second_moment(
    model: ChannelModel,
    antennas: usize,
    profile: &LargeScaleProfile,
    k: usize,
) -> Result<f64> {
    let m = antennas as f64;
    let beta = profile.beta(k)?;
    let base = m * (m + 1.0) * beta * beta * profile.sum_squares_excluding(k)?;
    Ok(match model {
        ChannelModel::Rayleigh => base,
        ChannelModel::Keyhole => 6.0 * base,
    })
}

/// `E[(Σ_{k'≠k} |g_kᴴ g_k'|²)²] = β_k² M(M+1) (Σ β_k'² + (Σ β_k')²)` for Rayleigh.
pub fn interference_second_moment_rayleigh(
    antennas: usize,
    profile: &LargeScaleProfile,
    k: usize,
) -> Result<f64> {
    let m = antennas as f64;
    let beta = profile.beta(k)?;
    let others = profile.sum_excluding(k)?;
    Ok(beta * beta * m * (m + 1.0) * (profile.sum_squares_excluding(k)? + others * others))
}

/// `E[Σ_{k'≠k} |g_kᴴ g_k'|² · ‖g_k‖²] = β_k² M(M+1) Σ_{k'≠k} β_k'` for Rayleigh.
pub fn interference_gain_cross_moment_rayleigh(
    antennas: usize,
    profile: &LargeScaleProfile,
    k: usize,
) -> Result<f64> {
    let m = antennas as f64;
    let beta = profile.beta(k)?;
    Ok(beta * beta * m * (m + 1.0) * profile.sum_excluding(k)?)
}

/// `E[(β̄_k/2 + ‖g_k‖²)²] = β̄_k²/4 + β̄_k E‖g_k‖² + E‖g_k‖⁴`, from [`moments`].
pub fn varrho_denominator(
    model: ChannelModel,
    antennas: usize,
    profile: &LargeScaleProfile,
    k: usize,
) -> Result<f64> {
    let mo = moments(model, antennas, profile.beta(k)?)?;
    let others = profile.sum_excluding(k)?;
    Ok(0.25 * others * others + others * mo.mean_gain + mo.fourth)
}

fn require_two_users(profile: &LargeScaleProfile) -> Result<()> {
    if profile.num_users() < 2 {
        return Err(Error::config("the accuracy metric is undefined for K < 2"));
    }
    Ok(())
}

/// Closed-form `ϱ_k`.
///
/// ```text
/// Rayleigh: M(M+1)β_k² Σβ_k'² / (β̄²/4 + Mβ_k Σ_all β + β_k² M²)²
/// keyhole: 6M(M+1)β_k² Σβ_k'² / (β̄²/4 + Mβ_k Σ_all β + β_k² M(2M+1))²
/// ```
pub fn varrho_closed_form(
    model: ChannelModel,
    antennas: usize,
    profile: &LargeScaleProfile,
    k: usize,
) -> Result<f64> {
    require_two_users(profile)?;
    if antennas == 0 {
        return Err(Error::config("M must be at least 1"));
    }
    let m = antennas as f64;
    let beta = profile.beta(k)?;
    let bar = profile.sum_excluding(k)?;
    let squares = profile.sum_squares_excluding(k)?;
    let shared = 0.25 * bar * bar + m * beta * profile.sum_all();
    let (numerator, denominator) = match model {
        ChannelModel::Rayleigh => (
            m * (m + 1.0) * beta * beta * squares,
            shared + beta * beta * m * m,
        ),
        ChannelModel::Keyhole => (
            6.0 * m * (m + 1.0) * beta * beta * squares,
            shared + beta * beta * m * (2.0 * m + 1.0),
        ),
    };
    Ok(numerator / (denominator * denominator))
}

/// Monte Carlo estimate of `ϱ_k`: the sample mean of `|ε_k|²` over channel
/// draws, divided by the squared closed-form denominator from
/// [`varrho_denominator`]. Trial `t` draws from substream `t` of `seed`.
pub fn varrho_monte_carlo(
    model: ChannelModel,
    antennas: usize,
    profile: &LargeScaleProfile,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<MeanEstimate> {
    require_two_users(profile)?;
    profile.beta(k)?;
    if trials == 0 {
        return Err(Error::config("need at least one trial"));
    }
    let denominator = varrho_denominator(model, antennas, profile, k)?;
    let scale = 1.0 / (denominator * denominator);
    let samples = epsilon_samples(model, antennas, profile, k, trials, seed)?;
    let scaled: Vec<f64> = samples.iter().map(|e| e * e * scale).collect();
    Ok(MeanEstimate::from_samples(&scaled).expect("trials >= 1"))
}

/// `ε_k` for `trials` independent channel draws, in trial order.
pub fn epsilon_samples(
    model: ChannelModel,
    antennas: usize,
    profile: &LargeScaleProfile,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    profile.beta(k)?;
    if antennas == 0 {
        return Err(Error::config("M must be at least 1"));
    }
    let tree = SeedTree::new(seed).child(model.tag());
    let samples = map_trials(trials, |t| {
        let ch = generate(model, antennas, profile, &mut tree.stream(t)).expect("dims checked");
        epsilon_k(&ch, profile, k).expect("profile matches")
    });
    Ok(samples)
}

/// Normalized MSE `mean |(a − truth) / E‖g‖²|²` over `(estimate, truth)` pairs,
/// with the standard error over pairs.
pub fn normalized_mse(pairs: &[(f64, f64)], mean_gain: f64) -> Result<MeanEstimate> {
    if pairs.is_empty() {
        return Err(Error::Empty("normalized MSE needs at least one estimate"));
    }
    if !(mean_gain.is_finite() && mean_gain > 0.0) {
        return Err(Error::config(format!("mean gain must be positive, got {mean_gain}")));
    }
    let errors: Vec<f64> = pairs
        .iter()
        .map(|(a, truth)| ((a - truth) / mean_gain).powi(2))
        .collect();
    Ok(MeanEstimate::from_samples(&errors).expect("nonempty"))
}
