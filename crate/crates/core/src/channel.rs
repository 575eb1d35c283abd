//! Channel realizations for the i.i.d. Rayleigh and keyhole models.
//!
//! The channel matrix `G` is `M × K`; column `k` is the vector `g_k` between
//! the base station and user `k`. Storage is column-major so each `g_k` is a
//! contiguous slice.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_user, Error, Result};
use crate::rng::complex_gaussian;
use crate::stats::CompensatedSum;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelModel {
    /// `g_k = √β_k h_k` with `h_k` entries i.i.d. CN(0, 1).
    Rayleigh,
    /// `g_k = √β_k ν_k h̄_k` with `ν_k` and the entries of `h̄_k` i.i.d. CN(0, 1).
    Keyhole,
}

impl ChannelModel {
    pub const ALL: [ChannelModel; 2] = [ChannelModel::Rayleigh, ChannelModel::Keyhole];

    pub fn as_str(&self) -> &'static str {
        match self {
            ChannelModel::Rayleigh => "rayleigh",
            ChannelModel::Keyhole => "keyhole",
        }
    }

    pub(crate) fn tag(&self) -> u64 {
        match self {
            ChannelModel::Rayleigh => 1,
            ChannelModel::Keyhole => 2,
        }
    }
}

impl fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rayleigh" => Ok(ChannelModel::Rayleigh),
            "keyhole" => Ok(ChannelModel::Keyhole),
            other => Err(Error::config(format!("unknown channel model `{other}`"))),
        }
    }
}

/// Large-scale fading coefficients `β_k`, one per user.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LargeScaleProfile {
    betas: Vec<f64>,
    total: f64,
}

impl LargeScaleProfile {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::config("large-scale profile needs at least one user"));
        }
        if let Some((k, b)) = betas
            .iter()
            .enumerate()
            .find(|(_, b)| !(b.is_finite() && **b > 0.0))
        {
            return Err(Error::config(format!("beta[{k}] = {b} must be positive and finite")));
        }
        let total = betas.iter().copied().collect::<CompensatedSum>().value();
        Ok(LargeScaleProfile { betas, total })
    }

    /// `K` users with the same coefficient.
    pub fn uniform(users: usize, beta: f64) -> Result<Self> {
        Self::new(vec![beta; users])
    }

    pub fn num_users(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn beta(&self, k: usize) -> Result<f64> {
        check_user(k, self.betas.len())?;
        Ok(self.betas[k])
    }

    /// `Σ_k' β_k'`.
    pub fn sum_all(&self) -> f64 {
        self.total
    }

    /// `Σ_{k'≠k} β_k'`, summed directly rather than by subtraction.
    pub fn sum_excluding(&self, k: usize) -> Result<f64> {
        check_user(k, self.betas.len())?;
        Ok(self.others(k).collect::<CompensatedSum>().value())
    }

    /// `Σ_{k'≠k} β_k'²`.
    pub fn sum_squares_excluding(&self, k: usize) -> Result<f64> {
        check_user(k, self.betas.len())?;
        Ok(self.others(k).map(|b| b * b).collect::<CompensatedSum>().value())
    }

    fn others(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.betas
            .iter()
            .enumerate()
            .filter(move |(j, _)| *j != k)
            .map(|(_, b)| *b)
    }
}

/// One draw of the `M × K` channel matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    antennas: usize,
    users: usize,
    model: ChannelModel,
    data: Vec<Complex64>,
    keyhole_nu: Option<Vec<Complex64>>,
}

impl ChannelRealization {
    /// Build a realization from explicit columns `g_k`. All columns must have
    /// the same nonzero length.
    pub fn from_columns(model: ChannelModel, columns: &[Vec<Complex64>]) -> Result<Self> {
        let users = columns.len();
        let antennas = columns.first().map_or(0, Vec::len);
        check_dims(antennas, users)?;
        if let Some(bad) = columns.iter().position(|c| c.len() != antennas) {
            return Err(Error::Dimension(format!(
                "column {bad} has {} entries, expected {antennas}",
                columns[bad].len()
            )));
        }
        Ok(ChannelRealization {
            antennas,
            users,
            model,
            data: columns.concat(),
            keyhole_nu: None,
        })
    }

    pub fn num_antennas(&self) -> usize {
        self.antennas
    }

    pub fn num_users(&self) -> usize {
        self.users
    }

    pub fn model(&self) -> ChannelModel {
        self.model
    }

    /// The keyhole scalars `ν_k`; present only for keyhole draws.
    pub fn keyhole_nu(&self) -> Option<&[Complex64]> {
        self.keyhole_nu.as_deref()
    }

    /// Column `g_k`.
    pub fn column(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.antennas..(k + 1) * self.antennas]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks_exact(self.antennas)
    }

    /// Entry `G[m, k]`.
    pub fn entry(&self, m: usize, k: usize) -> Complex64 {
        self.data[k * self.antennas + m]
    }

    /// `Tr(G Gᴴ) = Σ_k ‖g_k‖²`.
    pub fn trace_gram(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).collect::<CompensatedSum>().value()
    }

    /// The Hermitian `K × K` matrix `Gᴴ G`.
    pub fn gram(&self) -> Gram {
        let k = self.users;
        let mut data = vec![Complex64::new(0.0, 0.0); k * k];
        for i in 0..k {
            let gi = self.column(i);
            data[i * k + i] = Complex64::new(gi.iter().map(|z| z.norm_sqr()).sum(), 0.0);
            for j in i + 1..k {
                let v = inner(gi, self.column(j));
                data[i * k + j] = v;
                data[j * k + i] = v.conj();
            }
        }
        Gram { users: k, data }
    }
}

/// `aᴴ b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter()
        .zip(b)
        .fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

/// Inner products `g_iᴴ g_j` of all column pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Gram {
    users: usize,
    data: Vec<Complex64>,
}

impl Gram {
    pub fn num_users(&self) -> usize {
        self.users
    }

    /// `g_iᴴ g_j`.
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.users + j]
    }

    /// Row `i`: `(g_iᴴ g_1, …, g_iᴴ g_K)`.
    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.users..(i + 1) * self.users]
    }

    /// `‖g_k‖²`.
    pub fn gain(&self, k: usize) -> f64 {
        self.get(k, k).re
    }

    /// `Σ_{k'≠k} |g_kᴴ g_k'|²`.
    pub fn interference(&self, k: usize) -> f64 {
        self.row(k)
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, z)| z.norm_sqr())
            .collect::<CompensatedSum>()
            .value()
    }
}

fn check_dims(antennas: usize, users: usize) -> Result<()> {
    if antennas == 0 || users == 0 {
        return Err(Error::config(format!(
            "channel needs M >= 1 and K >= 1 (got M = {antennas}, K = {users})"
        )));
    }
    Ok(())
}

/// Draw `g_k = √β_k h_k` with i.i.d. CN(0, 1) entries in `h_k`.
pub fn gen_rayleigh<R: Rng + ?Sized>(
    antennas: usize,
    profile: &LargeScaleProfile,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let users = profile.num_users();
    check_dims(antennas, users)?;
    Ok(ChannelRealization {
        antennas,
        users,
        model: ChannelModel::Rayleigh,
        data: scaled_gaussian_columns(antennas, profile, rng),
        keyhole_nu: None,
    })
}

/// Draw `g_k = √β_k ν_k h̄_k` with `ν_k` and the entries of `h̄_k` i.i.d. CN(0, 1).
pub fn gen_keyhole<R: Rng + ?Sized>(
    antennas: usize,
    profile: &LargeScaleProfile,
    rng: &mut R,
) -> Result<ChannelRealization> {
    keyhole_with(antennas, profile, rng, None)
}

/// Keyhole draw with the scalars `ν_k` supplied instead of sampled. Only the
/// `h̄_k` entries consume randomness, in the same order as [`gen_rayleigh`],
/// so `ν_k = 1` reproduces the Rayleigh draw of the same stream exactly.
#[cfg(test)]
pub(crate) fn gen_keyhole_forced_nu<R: Rng + ?Sized>(
    antennas: usize,
    profile: &LargeScaleProfile,
    rng: &mut R,
    nu: &[Complex64],
) -> Result<ChannelRealization> {
    if nu.len() != profile.num_users() {
        return Err(Error::Dimension(format!(
            "{} keyhole scalars for {} users",
            nu.len(),
            profile.num_users()
        )));
    }
    keyhole_with(antennas, profile, rng, Some(nu))
}

fn keyhole_with<R: Rng + ?Sized>(
    antennas: usize,
    profile: &LargeScaleProfile,
    rng: &mut R,
    forced_nu: Option<&[Complex64]>,
) -> Result<ChannelRealization> {
    let users = profile.num_users();
    check_dims(antennas, users)?;
    let mut data = scaled_gaussian_columns(antennas, profile, rng);
    let nu: Vec<Complex64> = match forced_nu {
        Some(nu) => nu.to_vec(),
        None => (0..users).map(|_| complex_gaussian(rng)).collect(),
    };
    for (column, &n) in data.chunks_exact_mut(antennas).zip(&nu) {
        column.iter_mut().for_each(|z| *z *= n);
    }
    Ok(ChannelRealization {
        antennas,
        users,
        model: ChannelModel::Keyhole,
        data,
        keyhole_nu: Some(nu),
    })
}

fn scaled_gaussian_columns<R: Rng + ?Sized>(
    antennas: usize,
    profile: &LargeScaleProfile,
    rng: &mut R,
) -> Vec<Complex64> {
    let mut data = Vec::with_capacity(antennas * profile.num_users());
    for &beta in profile.betas() {
        let scale = beta.sqrt();
        data.extend((0..antennas).map(|_| complex_gaussian(rng) * scale));
    }
    data
}

/// Draw a realization of either model.
pub fn generate<R: Rng + ?Sized>(
    model: ChannelModel,
    antennas: usize,
    profile: &LargeScaleProfile,
    rng: &mut R,
) -> Result<ChannelRealization> {
    match model {
        ChannelModel::Rayleigh => gen_rayleigh(antennas, profile, rng),
        ChannelModel::Keyhole => gen_keyhole(antennas, profile, rng),
    }
}

/// The effective channel gain `‖g_k‖²` of this realization.
pub fn effective_gain(ch: &ChannelRealization, k: usize) -> Result<f64> {
    check_user(k, ch.num_users())?;
    Ok(ch.column(k).iter().map(|z| z.norm_sqr()).sum())
}
