//! Deterministic random substreams.
//!
//! Every random quantity in a simulation is drawn from a stream addressed by
//! a path of integer tags below one master seed, e.g. `(model, trial)` for a
//! channel draw or `(model, snr, T, trial)` for a data block. Streams never
//! depend on scheduling, so results are identical for any worker count, and
//! removing one sweep cell leaves every other cell's streams untouched.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedTree {
    key: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        SeedTree {
            key: splitmix64(seed ^ 0x6d69_6d6f_626c_6e64),
        }
    }

    /// Derive the subtree addressed by `tag`.
    pub fn child(&self, tag: u64) -> Self {
        SeedTree {
            key: splitmix64(self.key ^ splitmix64(tag.wrapping_add(0xA076_1D64_78BD_642F))),
        }
    }

    /// Tag a subtree by a float value (e.g. an SNR point) through its bit pattern.
    pub fn child_f64(&self, value: f64) -> Self {
        // -0.0 and 0.0 address the same stream
        let value = if value == 0.0 { 0.0 } else { value };
        self.child(value.to_bits())
    }

    /// The generator for substream `index` of this subtree.
    pub fn stream(&self, index: u64) -> StreamRng {
        let mut seed = [0u8; 32];
        let mut state = self.key;
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(index);
        rng
    }
}

/// One circularly-symmetric CN(0, 1) sample: real and imaginary parts
/// independent N(0, 1/2).
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let tree = SeedTree::new(7).child(3);
        let a: Vec<u64> = (0..4).map(|_| tree.stream(11).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| tree.stream(11).random()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_paths_give_distinct_streams() {
        let root = SeedTree::new(1);
        let x: u64 = root.child(0).stream(0).random();
        let y: u64 = root.child(1).stream(0).random();
        let z: u64 = root.child(0).stream(1).random();
        let w: u64 = SeedTree::new(2).child(0).stream(0).random();
        assert!(x != y && x != z && y != z && x != w);
    }

    #[test]
    fn signed_zero_shares_stream() {
        let root = SeedTree::new(5);
        assert_eq!(root.child_f64(0.0), root.child_f64(-0.0));
        assert_ne!(root.child_f64(1.0), root.child_f64(2.0));
    }

    #[test]
    fn complex_gaussian_has_unit_power() {
        let mut rng = SeedTree::new(9).stream(0);
        let n = 200_000;
        let mut power = 0.0;
        let mut re2 = 0.0;
        for _ in 0..n {
            let z = complex_gaussian(&mut rng);
            power += z.norm_sqr();
            re2 += z.re * z.re;
        }
        let power = power / n as f64;
        let re2 = re2 / n as f64;
        assert!((power - 1.0).abs() < 0.01, "{power}");
        assert!((re2 - 0.5).abs() < 0.01, "{re2}");
    }
}
