//! Downlink transmission of one coherence block.
//!
//! Within a block the channel is fixed. At every symbol time `n` the base
//! station sends fresh 4-QAM symbols `s(n)` and user `k` receives
//! `y_k(n) = g_kᴴ x(n) + n_k(n)` with unit-variance complex Gaussian noise.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{ChannelRealization, Gram};
use crate::error::{check_user, Error, Result};
use crate::precoder::{precode_into, PrecoderState};
use crate::rng::complex_gaussian;
use crate::stats::CompensatedSum;

/// `K × T` symbols stored slot by slot: `slot(n)` is the vector `s(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolBlock {
    users: usize,
    len: usize,
    data: Vec<Complex64>,
}

impl SymbolBlock {
    pub fn num_users(&self) -> usize {
        self.users
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn slot(&self, n: usize) -> &[Complex64] {
        &self.data[n * self.users..(n + 1) * self.users]
    }

    /// `s_k(n)`.
    pub fn get(&self, k: usize, n: usize) -> Complex64 {
        self.data[n * self.users + k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.data.iter()
    }
}

/// One 4-QAM symbol, uniform over `(±1 ± j)/√2`.
#[inline]
pub fn qam4<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let bits: u8 = rng.random();
    let re = if bits & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    let im = if bits & 2 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    Complex64::new(re, im)
}

fn check_block_dims(users: usize, len: usize) -> Result<()> {
    if users == 0 || len == 0 {
        return Err(Error::config(format!(
            "block needs K >= 1 and T >= 1 (got K = {users}, T = {len})"
        )));
    }
    Ok(())
}

/// i.i.d. 4-QAM symbols for `users` users over `len` symbol times.
pub fn draw_symbols<R: Rng + ?Sized>(users: usize, len: usize, rng: &mut R) -> Result<SymbolBlock> {
    check_block_dims(users, len)?;
    let data = (0..users * len).map(|_| qam4(rng)).collect();
    Ok(SymbolBlock { users, len, data })
}

/// Symbols and received samples of one coherence block.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionBlock {
    symbols: SymbolBlock,
    /// user-major: `received[k * T + n] = y_k(n)`
    received: Vec<Complex64>,
}

impl TransmissionBlock {
    pub fn len(&self) -> usize {
        self.symbols.len
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.len == 0
    }

    pub fn num_users(&self) -> usize {
        self.symbols.users
    }

    /// Noise variance at every user.
    pub fn noise_variance(&self) -> f64 {
        1.0
    }

    pub fn symbols(&self) -> &SymbolBlock {
        &self.symbols
    }

    /// `(y_k(1), …, y_k(T))`.
    pub fn received(&self, k: usize) -> &[Complex64] {
        let t = self.len();
        &self.received[k * t..(k + 1) * t]
    }
}

/// Simulate a `len`-symbol block over the fixed channel `ch`.
///
/// For each symbol time the generator yields `K` symbols then `K` noise
/// samples, so [`run_block_gram`] with the same stream produces the same
/// block up to rounding.
pub fn run_block<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    state: &PrecoderState,
    len: usize,
    rng: &mut R,
) -> Result<TransmissionBlock> {
    run_block_scaled(ch, state, len, rng, 1.0)
}

pub(crate) fn run_block_scaled<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    state: &PrecoderState,
    len: usize,
    rng: &mut R,
    noise_scale: f64,
) -> Result<TransmissionBlock> {
    let users = ch.num_users();
    check_block_dims(users, len)?;
    let mut symbols = Vec::with_capacity(users * len);
    let mut received = vec![Complex64::new(0.0, 0.0); users * len];
    let mut x = vec![Complex64::new(0.0, 0.0); ch.num_antennas()];
    for n in 0..len {
        let start = symbols.len();
        symbols.extend((0..users).map(|_| qam4(rng)));
        precode_into(ch, &symbols[start..], state, &mut x)?;
        for k in 0..users {
            let noise = complex_gaussian(rng) * noise_scale;
            received[k * len + n] = crate::channel::inner(ch.column(k), &x) + noise;
        }
    }
    Ok(TransmissionBlock {
        symbols: SymbolBlock {
            users,
            len,
            data: symbols,
        },
        received,
    })
}

/// Same block as [`run_block`], computed through `y(n) = √α Gᴴ G s(n) + n(n)`.
/// Costs `O(K²)` per symbol instead of `O(MK)`.
pub fn run_block_gram<R: Rng + ?Sized>(
    gram: &Gram,
    state: &PrecoderState,
    len: usize,
    rng: &mut R,
) -> Result<TransmissionBlock> {
    let users = gram.num_users();
    check_block_dims(users, len)?;
    let scale = state.alpha().sqrt();
    let mut symbols = Vec::with_capacity(users * len);
    let mut received = vec![Complex64::new(0.0, 0.0); users * len];
    for n in 0..len {
        let start = symbols.len();
        symbols.extend((0..users).map(|_| qam4(rng)));
        let s = &symbols[start..];
        for k in 0..users {
            let mixed = gram
                .row(k)
                .iter()
                .zip(s)
                .fold(Complex64::new(0.0, 0.0), |acc, (g, s)| acc + g * s);
            received[k * len + n] = mixed * scale + complex_gaussian(rng);
        }
    }
    Ok(TransmissionBlock {
        symbols: SymbolBlock {
            users,
            len,
            data: symbols,
        },
        received,
    })
}

/// `ξ_k = (1/T) Σ_n |y_k(n)|²`.
pub fn sample_power(block: &TransmissionBlock, k: usize) -> Result<f64> {
    check_user(k, block.num_users())?;
    Ok(mean_power(block.received(k)))
}

/// Mean of `|y|²` over a slice of samples; zero for an empty slice.
pub fn mean_power(samples: &[Complex64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|y| y.norm_sqr()).collect::<CompensatedSum>().value() / samples.len() as f64
}
