//! Effective-gain estimators.
//!
//! - [`Method::Blind`]: invert the received-power quadratic
//!   `ξ_k = α a² + α β̄_k a + 1` for its nonnegative root.
//! - [`Method::Statistical`]: use the mean gain `Mβ_k` as if it were the gain.
//! - [`Method::PilotLmmse`]: `K` beamformed downlink pilot symbols followed by
//!   a linear MMSE estimate of `‖g_k‖²`.
//! - [`Method::Genie`]: the true gain.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{exact_power, moments};
use crate::channel::{effective_gain, inner, ChannelModel, ChannelRealization, Gram, LargeScaleProfile};
use crate::error::{check_user, Error, Result};
use crate::link_sim::{sample_power, TransmissionBlock};
use crate::precoder::PrecoderState;
use crate::rng::complex_gaussian;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Blind,
    Statistical,
    PilotLmmse,
    Genie,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Blind => "blind",
            Method::Statistical => "statistical",
            Method::PilotLmmse => "pilot_lmmse",
            Method::Genie => "genie",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "blind" => Ok(Method::Blind),
            "statistical" => Ok(Method::Statistical),
            "pilot_lmmse" | "pilot" => Ok(Method::PilotLmmse),
            "genie" => Ok(Method::Genie),
            other => Err(Error::config(format!("unknown estimator `{other}`"))),
        }
    }
}

/// One user's estimate together with the truth it is scored against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    /// `a_k`, never negative.
    pub estimate: f64,
    /// Sample power `ξ_k` (blind only).
    pub xi: Option<f64>,
    /// `‖g_k‖²` of the realization.
    pub truth: f64,
    /// The raw estimate was negative and got clamped to zero.
    pub clamped: bool,
}

/// Nonnegative gain estimate, with a flag when clamping was needed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClampedEstimate {
    pub value: f64,
    pub clamped: bool,
}

/// The nonnegative root `a` of `ξ = α a² + α β̄ a + 1`.
///
/// When `ξ < 1` the quadratic has no nonnegative root (this only happens
/// through sampling noise in `ξ`), so the estimate is clamped to zero and
/// flagged.
pub fn blind_estimate(xi: f64, alpha: f64, sum_beta_others: f64) -> Result<ClampedEstimate> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::config(format!("alpha must be positive, got {alpha}")));
    }
    if !(sum_beta_others.is_finite() && sum_beta_others >= 0.0) {
        return Err(Error::config(format!(
            "interfering large-scale sum must be nonnegative, got {sum_beta_others}"
        )));
    }
    if xi.is_nan() {
        return Err(Error::config("sample power is NaN"));
    }
    let excess = xi - 1.0;
    if excess < 0.0 {
        return Ok(ClampedEstimate { value: 0.0, clamped: true });
    }
    if excess == 0.0 {
        return Ok(ClampedEstimate { value: 0.0, clamped: false });
    }
    // (−b + √(b² + 4αe)) / 2α rewritten as 2e / (b + √(b² + 4αe)) to avoid
    // cancellation when the interference term dominates
    let b = alpha * sum_beta_others;
    let root = (b * b + 4.0 * alpha * excess).sqrt();
    Ok(ClampedEstimate {
        value: 2.0 * excess / (b + root),
        clamped: false,
    })
}

/// `E‖g_k‖² = Mβ_k`, the same for both channel models.
pub fn statistical_estimate(antennas: usize, beta: f64) -> f64 {
    antennas as f64 * beta
}

/// The true gain, for scoring.
pub fn genie_estimate(ch: &ChannelRealization, k: usize) -> Result<f64> {
    effective_gain(ch, k)
}

/// Row `n` of the `K × K` DFT pilot matrix: `φ_i(n) = exp(−2πj i n / K)`.
/// Rows are orthogonal and each has energy `K`.
pub fn pilot_symbol(users: usize, i: usize, n: usize) -> Complex64 {
    let phase = -2.0 * PI * ((i * n) % users) as f64 / users as f64;
    Complex64::from_polar(1.0, phase)
}

/// User `k`'s correlator output after the `K`-symbol beamformed training
/// phase: `r_k = Σ_n y_k(n) φ_k(n)* = √α K ‖g_k‖² + ñ_k` with
/// `ñ_k ~ CN(0, K σ²)`. `gram_row` is `(g_kᴴ g_1, …, g_kᴴ g_K)`.
pub fn pilot_statistic<R: Rng + ?Sized>(
    gram_row: &[Complex64],
    k: usize,
    alpha: f64,
    rng: &mut R,
    noise_scale: f64,
) -> Complex64 {
    let users = gram_row.len();
    let scale = alpha.sqrt();
    let mut r = Complex64::new(0.0, 0.0);
    for n in 0..users {
        let mixed = gram_row
            .iter()
            .enumerate()
            .fold(Complex64::new(0.0, 0.0), |acc, (j, g)| acc + g * pilot_symbol(users, j, n));
        let y = mixed * scale + complex_gaussian(rng) * noise_scale;
        r += y * pilot_symbol(users, k, n).conj();
    }
    r
}

/// Linear MMSE coefficient for the real part of the correlator output.
///
/// `Re r = √α K G + w` with `G` of mean `μ`, variance `v`, and
/// `w ~ N(0, K σ²/2)`, giving `c = √α K v / (α K² v + K σ²/2)`.
pub fn lmmse_coefficient(alpha: f64, users: usize, prior_var: f64, noise_var: f64) -> f64 {
    let kf = users as f64;
    let denom = alpha * kf * kf * prior_var + 0.5 * kf * noise_var;
    if denom == 0.0 {
        0.0
    } else {
        alpha.sqrt() * kf * prior_var / denom
    }
}

/// `â = μ + c (Re r − √α K μ)`, clamped at zero.
pub fn lmmse_gain(
    statistic: Complex64,
    alpha: f64,
    users: usize,
    prior_mean: f64,
    prior_var: f64,
    noise_var: f64,
) -> ClampedEstimate {
    let c = lmmse_coefficient(alpha, users, prior_var, noise_var);
    let raw = prior_mean + c * (statistic.re - alpha.sqrt() * users as f64 * prior_mean);
    if raw < 0.0 {
        ClampedEstimate { value: 0.0, clamped: true }
    } else {
        ClampedEstimate { value: raw, clamped: false }
    }
}

/// Error variance of [`lmmse_gain`] (before clamping):
/// `v − c² (α K² v + K/2)`.
pub fn lmmse_error_variance(alpha: f64, users: usize, prior_var: f64) -> f64 {
    let kf = users as f64;
    let c = lmmse_coefficient(alpha, users, prior_var, 1.0);
    prior_var - c * c * (alpha * kf * kf * prior_var + 0.5 * kf)
}

/// Beamformed downlink pilots followed by a linear MMSE gain estimate, with
/// the prior mean and variance of `‖g_k‖²` matched to the channel model.
pub fn pilot_lmmse_estimate<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    state: &PrecoderState,
    profile: &LargeScaleProfile,
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    Ok(pilot_lmmse_scaled(ch, state, profile, k, rng, 1.0)?.value)
}

pub(crate) fn pilot_lmmse_scaled<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    state: &PrecoderState,
    profile: &LargeScaleProfile,
    k: usize,
    rng: &mut R,
    noise_scale: f64,
) -> Result<ClampedEstimate> {
    check_user(k, ch.num_users())?;
    if profile.num_users() != ch.num_users() {
        return Err(Error::Dimension(format!(
            "channel has {} users, profile has {}",
            ch.num_users(),
            profile.num_users()
        )));
    }
    let row: Vec<Complex64> = ch.columns().map(|g| inner(ch.column(k), g)).collect();
    let prior = moments(ch.model(), ch.num_antennas(), profile.beta(k)?)?;
    let r = pilot_statistic(&row, k, state.alpha(), rng, noise_scale);
    Ok(lmmse_gain(
        r,
        state.alpha(),
        ch.num_users(),
        prior.mean_gain,
        prior.variance,
        noise_scale * noise_scale,
    ))
}

/// Pilot-LMMSE estimates for every user from a precomputed Gram matrix.
/// Users draw their noise from `rng` in index order.
pub fn pilot_lmmse_all<R: Rng + ?Sized>(
    gram: &Gram,
    state: &PrecoderState,
    profile: &LargeScaleProfile,
    model: ChannelModel,
    antennas: usize,
    rng: &mut R,
) -> Result<Vec<ClampedEstimate>> {
    let users = gram.num_users();
    (0..users)
        .map(|k| {
            let prior = moments(model, antennas, profile.beta(k)?)?;
            let r = pilot_statistic(gram.row(k), k, state.alpha(), rng, 1.0);
            Ok(lmmse_gain(r, state.alpha(), users, prior.mean_gain, prior.variance, 1.0))
        })
        .collect()
}

/// Run one estimator for user `k`.
///
/// The blind method uses the sample power of `block` when given; without a
/// block it uses the exact average power (an infinitely long block).
pub fn estimate_user<R: Rng + ?Sized>(
    method: Method,
    ch: &ChannelRealization,
    block: Option<&TransmissionBlock>,
    state: &PrecoderState,
    profile: &LargeScaleProfile,
    k: usize,
    rng: &mut R,
) -> Result<EstimateReport> {
    let truth = effective_gain(ch, k)?;
    let (estimate, xi, clamped) = match method {
        Method::Blind => {
            let xi = match block {
                Some(b) => sample_power(b, k)?,
                None => exact_power(ch, state, k)?,
            };
            let est = blind_estimate(xi, state.alpha(), profile.sum_excluding(k)?)?;
            (est.value, Some(xi), est.clamped)
        }
        Method::Statistical => (statistical_estimate(ch.num_antennas(), profile.beta(k)?), None, false),
        Method::PilotLmmse => {
            let est = pilot_lmmse_scaled(ch, state, profile, k, rng, 1.0)?;
            (est.value, None, est.clamped)
        }
        Method::Genie => (truth, None, false),
    };
    Ok(EstimateReport {
        method,
        estimate,
        xi,
        truth,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{epsilon_k, exact_power_from_gram, normalized_mse};
    use crate::channel::generate;
    use crate::precoder::normalization_alpha;
    use crate::rng::SeedTree;
    use crate::stats::{map_trials, MeanEstimate};
    use proptest::prelude::*;

    fn quadratic(a: f64, alpha: f64, bar: f64) -> f64 {
        alpha * a * a + alpha * bar * a + 1.0
    }

    #[test]
    fn blind_examples() {
        for (alpha, bar) in [(0.3, 0.0), (0.01, 19.0), (5.0, 2.0)] {
            let est = blind_estimate(1.0, alpha, bar).unwrap();
            assert_eq!(est, ClampedEstimate { value: 0.0, clamped: false });
        }
        assert!((blind_estimate(5.0, 1.0, 0.0).unwrap().value - 2.0).abs() < 1e-15);

        let a = blind_estimate(2.0, 0.01, 19.0).unwrap().value;
        assert!((quadratic(a, 0.01, 19.0) - 2.0).abs() < 1e-9);
        // oracle: the textbook root formula
        let textbook = (-0.01 * 19.0 + ((0.01f64 * 19.0).powi(2) + 4.0 * 0.01 * 1.0).sqrt()) / 0.02;
        assert!((a - textbook).abs() < 1e-12);
        assert!((a - 4.2931).abs() < 1e-4, "{a}");
    }

    #[test]
    fn blind_clamps_below_unit_power() {
        let est = blind_estimate(0.7, 0.01, 19.0).unwrap();
        assert_eq!(est, ClampedEstimate { value: 0.0, clamped: true });
    }

    #[test]
    fn blind_rejects_bad_parameters() {
        assert!(matches!(blind_estimate(2.0, 0.0, 1.0), Err(Error::Config(_))));
        assert!(matches!(blind_estimate(2.0, -1.0, 1.0), Err(Error::Config(_))));
        assert!(blind_estimate(2.0, 1.0, -1.0).is_err());
        assert!(blind_estimate(f64::NAN, 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn blind_root_back_substitutes(
            xi in 1.0f64..1e6,
            alpha in 1e-6f64..10.0,
            bar in 0.0f64..1e3,
        ) {
            let a = blind_estimate(xi, alpha, bar).unwrap().value;
            prop_assert!(a >= 0.0);
            let back = quadratic(a, alpha, bar);
            prop_assert!((back - xi).abs() <= 1e-9 * xi, "xi={} back={}", xi, back);
        }

        #[test]
        fn blind_is_strictly_increasing(
            xi in 1.0001f64..1e4,
            step in 1e-3f64..10.0,
            alpha in 1e-4f64..1.0,
            bar in 0.0f64..100.0,
        ) {
            let lo = blind_estimate(xi, alpha, bar).unwrap().value;
            let hi = blind_estimate(xi + step, alpha, bar).unwrap().value;
            prop_assert!(hi > lo);
        }
    }

    #[test]
    fn blind_with_exact_power_matches_error_term_form() {
        // a_k = −β̄/2 + √((β̄/2 + ‖g_k‖²)² + ε_k)
        let p = LargeScaleProfile::new(vec![1.0, 0.5, 2.0, 0.8, 1.2]).unwrap();
        for model in ChannelModel::ALL {
            let tree = SeedTree::new(55).child(model.tag());
            for t in 0..200 {
                let ch = generate(model, 30, &p, &mut tree.stream(t)).unwrap();
                let state = normalization_alpha(10.0, 30, &p).unwrap();
                for k in 0..5 {
                    let bar = p.sum_excluding(k).unwrap();
                    let xi = exact_power(&ch, &state, k).unwrap();
                    let a = blind_estimate(xi, state.alpha(), bar).unwrap().value;
                    let gain = effective_gain(&ch, k).unwrap();
                    let eps = epsilon_k(&ch, &p, k).unwrap();
                    let closed = -bar / 2.0 + ((bar / 2.0 + gain).powi(2) + eps).sqrt();
                    assert!((a - closed).abs() <= 1e-9 * a.max(1.0), "{model} t={t} k={k}");
                }
            }
        }
    }

    #[test]
    fn blind_consistency_improves_with_antennas() {
        let median_err = |m: usize| {
            let p = LargeScaleProfile::uniform(8, 1.0).unwrap();
            let state = normalization_alpha(10.0, m, &p).unwrap();
            let tree = SeedTree::new(66).child(m as u64);
            let mut e = map_trials(2_000, |t| {
                let ch = generate(ChannelModel::Rayleigh, m, &p, &mut tree.stream(t)).unwrap();
                let g = ch.gram();
                let xi = exact_power_from_gram(&g, state.alpha(), 0);
                let a = blind_estimate(xi, state.alpha(), 7.0).unwrap().value;
                (a - g.gain(0)).abs() / m as f64
            });
            e.sort_by(f64::total_cmp);
            e[e.len() / 2]
        };
        let (a, b, c) = (median_err(25), median_err(100), median_err(400));
        assert!(a > b && b > c, "{a} {b} {c}");
    }

    #[test]
    fn statistical_examples() {
        assert_eq!(statistical_estimate(100, 1.0), 100.0);
        assert_eq!(statistical_estimate(100, 0.5), 50.0);
        let p = LargeScaleProfile::uniform(1, 0.5).unwrap();
        for model in ChannelModel::ALL {
            let tree = SeedTree::new(8).child(model.tag());
            let g = map_trials(100_000, |t| {
                effective_gain(&generate(model, 100, &p, &mut tree.stream(t)).unwrap(), 0).unwrap()
            });
            let est = MeanEstimate::from_samples(&g).unwrap();
            assert!(est.z_score(statistical_estimate(100, 0.5)) < 3.0, "{model}: {est:?}");
        }
    }

    #[test]
    fn genie_is_the_truth() {
        let p = LargeScaleProfile::uniform(3, 1.0).unwrap();
        let ch = generate(ChannelModel::Keyhole, 10, &p, &mut SeedTree::new(1).stream(0)).unwrap();
        let mut rng = SeedTree::new(1).stream(1);
        let mut pairs = Vec::new();
        for k in 0..3 {
            let g = genie_estimate(&ch, k).unwrap();
            assert_eq!(g, effective_gain(&ch, k).unwrap());
            let rep = estimate_user(Method::Genie, &ch, None, &PrecoderState::raw(1.0, 1.0), &p, k, &mut rng).unwrap();
            assert_eq!(rep.estimate, rep.truth);
            pairs.push((rep.estimate, rep.truth));
        }
        assert_eq!(normalized_mse(&pairs, 10.0).unwrap().mean, 0.0);
        let unit = ChannelRealization::from_columns(
            ChannelModel::Rayleigh,
            &[vec![Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0)]],
        )
        .unwrap();
        assert_eq!(genie_estimate(&unit, 0).unwrap(), 1.0);
    }

    #[test]
    fn pilots_are_orthogonal_with_energy_k() {
        let k = 7;
        for i in 0..k {
            for j in 0..k {
                let s: Complex64 = (0..k).map(|n| pilot_symbol(k, i, n) * pilot_symbol(k, j, n).conj()).sum();
                let want = if i == j { k as f64 } else { 0.0 };
                assert!((s - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_pilots_recover_the_gain() {
        let p = LargeScaleProfile::uniform(6, 1.0).unwrap();
        for model in ChannelModel::ALL {
            let ch = generate(model, 40, &p, &mut SeedTree::new(2).stream(model.tag())).unwrap();
            let state = normalization_alpha(1.0, 40, &p).unwrap();
            for k in 0..6 {
                let est = pilot_lmmse_scaled(&ch, &state, &p, k, &mut SeedTree::new(3).stream(0), 0.0).unwrap();
                let truth = effective_gain(&ch, k).unwrap();
                assert!((est.value - truth).abs() < 1e-9 * truth, "{model} k={k}");
            }
        }
        assert!((lmmse_coefficient(0.04, 5, 3.0, 0.0) - 1.0 / (0.2 * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_prior_returns_prior_mean() {
        let est = lmmse_gain(Complex64::new(123.0, -4.0), 0.01, 20, 100.0, 0.0, 1.0);
        assert_eq!(est, ClampedEstimate { value: 100.0, clamped: false });
    }

    #[test]
    fn pilot_statistic_has_stated_mean_and_noise() {
        let p = LargeScaleProfile::uniform(4, 1.0).unwrap();
        let ch = generate(ChannelModel::Rayleigh, 12, &p, &mut SeedTree::new(4).stream(0)).unwrap();
        let g = ch.gram();
        let alpha = 0.02;
        let tree = SeedTree::new(5);
        let r = map_trials(100_000, |t| pilot_statistic(g.row(1), 1, alpha, &mut tree.stream(t), 1.0));
        let mean = alpha.sqrt() * 4.0 * g.gain(1);
        let re: Vec<f64> = r.iter().map(|z| z.re).collect();
        let im2: Vec<f64> = r.iter().map(|z| z.im * z.im).collect();
        assert!(MeanEstimate::from_samples(&re).unwrap().z_score(mean) < 3.0);
        // imaginary part is pure noise with variance K/2
        assert!(MeanEstimate::from_samples(&im2).unwrap().z_score(2.0) < 3.0);
    }

    #[test]
    fn pilot_lmmse_mse_matches_closed_form() {
        let (m, users) = (100, 20);
        let p = LargeScaleProfile::uniform(users, 1.0).unwrap();
        let state = normalization_alpha(1.0, m, &p).unwrap();
        let prior = moments(ChannelModel::Rayleigh, m, 1.0).unwrap();
        let tree = SeedTree::new(99);
        let errs = map_trials(100_000, |t| {
            let mut rng = tree.stream(t);
            let ch = generate(ChannelModel::Rayleigh, m, &p, &mut rng).unwrap();
            let a = pilot_lmmse_estimate(&ch, &state, &p, 0, &mut rng).unwrap();
            ((a - effective_gain(&ch, 0).unwrap()) / prior.mean_gain).powi(2)
        });
        let est = MeanEstimate::from_samples(&errs).unwrap();
        let target = lmmse_error_variance(state.alpha(), users, prior.variance) / prior.mean_gain.powi(2);
        assert!(est.z_score(target) < 3.0, "{est:?} vs {target}");
    }

    #[test]
    fn estimate_user_blind_uses_block_or_exact_power() {
        let p = LargeScaleProfile::uniform(3, 1.0).unwrap();
        let ch = generate(ChannelModel::Rayleigh, 30, &p, &mut SeedTree::new(6).stream(0)).unwrap();
        let state = normalization_alpha(10.0, 30, &p).unwrap();
        let mut rng = SeedTree::new(6).stream(1);
        let block = crate::link_sim::run_block(&ch, &state, 50, &mut rng).unwrap();
        let with_block = estimate_user(Method::Blind, &ch, Some(&block), &state, &p, 2, &mut rng).unwrap();
        assert_eq!(with_block.xi, Some(sample_power(&block, 2).unwrap()));
        let exact = estimate_user(Method::Blind, &ch, None, &state, &p, 2, &mut rng).unwrap();
        assert_eq!(exact.xi, Some(exact_power(&ch, &state, 2).unwrap()));
        let stat = estimate_user(Method::Statistical, &ch, None, &state, &p, 0, &mut rng).unwrap();
        assert_eq!(stat.estimate, 30.0);
        assert!(estimate_user(Method::Genie, &ch, None, &state, &p, 3, &mut rng).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Blind, Method::Statistical, Method::PilotLmmse, Method::Genie] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
        assert!("mmse".parse::<Method>().is_err());
    }
}
