//! Counter-based noise streams.
//!
//! Every draw is a pure function of the master seed, the stream identity and
//! a counter. A particle's Brownian path is therefore fixed once its key is
//! fixed, whichever flow consumes it and however finely a step is split.
//!
//! Increments are organised as a Brownian tree: the base increment over step
//! `n` lives at level 0, and each refinement level splits an interval with a
//! Brownian bridge draw. Two flows that subdivide the same base step
//! differently still see the same path.

use rand::RngCore;
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const LEVEL_SALT: u64 = 0xD134_2543_DE82_EF95;
const SECOND_UNIFORM: u64 = 0x94D0_49BB_1331_11EB;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit hash of a label, used for experiment names.
pub fn label_hash(name: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in name.as_bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

#[inline]
fn unit_open(bits: u64) -> f64 {
    // (0, 1], never zero so the logarithm in Box-Muller is finite
    ((bits >> 11) as f64 + 1.0) / (1u64 << 53) as f64
}

#[inline]
fn normal_from_key(key: u64) -> f64 {
    let u1 = unit_open(mix64(key));
    let u2 = unit_open(mix64(key ^ SECOND_UNIFORM));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Identity of a noise stream: master seed plus (experiment, replica).
///
/// Particle streams are derived from it by index, so two flows built from the
/// same `NoiseSource` are driven by the same Brownian motions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseSource {
    pub master_seed: u64,
    pub experiment: u64,
    pub replica: u64,
}

impl NoiseSource {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            experiment: 0,
            replica: 0,
        }
    }

    pub fn experiment(self, experiment: u64) -> Self {
        Self { experiment, ..self }
    }

    pub fn replica(self, replica: u64) -> Self {
        Self { replica, ..self }
    }

    fn key(&self) -> u64 {
        let k = mix64(self.master_seed ^ GOLDEN);
        let k = mix64(k ^ self.experiment.wrapping_mul(GOLDEN));
        mix64(k ^ self.replica.wrapping_mul(0xA076_1D64_78BD_642F))
    }

    /// Per-particle Brownian motion.
    pub fn particle(&self, index: usize) -> ParticleNoise {
        ParticleNoise {
            key: mix64(self.key() ^ mix64(index as u64 ^ 0xE703_7ED1_A0B4_28DB)),
        }
    }

    /// A sequential generator for samplers that need a plain stream of
    /// variates (tridiagonal models, dense matrices). `lane` separates
    /// independent uses within one replica.
    pub fn stream(&self, lane: u64) -> Stream {
        Stream {
            key: mix64(self.key() ^ mix64(lane ^ 0x8E9D_5A8F_6A09_E667)),
            counter: 0,
        }
    }
}

/// Random-access Brownian path of one particle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParticleNoise {
    key: u64,
}

impl ParticleNoise {
    /// Standard normal attached to node `(step, level, index)` of the tree.
    #[inline]
    pub fn normal(&self, step: u64, level: u32, index: u64) -> f64 {
        let node = mix64(self.key ^ step.wrapping_mul(GOLDEN));
        let node = mix64(node ^ ((u64::from(level) << 58) | index) ^ LEVEL_SALT);
        normal_from_key(node)
    }

    /// Increment over the whole base step `step` of length `dt`.
    #[inline]
    pub fn base_increment(&self, step: u64, dt: f64) -> f64 {
        dt.sqrt() * self.normal(step, 0, 0)
    }

    /// Split the increment `d` of node `(level, index)` (interval length `h`)
    /// into its two halves by a Brownian bridge draw.
    #[inline]
    pub fn split(&self, step: u64, level: u32, index: u64, d: f64, h: f64) -> (f64, f64) {
        let left = 0.5 * d + 0.5 * h.sqrt() * self.normal(step, level + 1, index);
        (left, d - left)
    }
}

/// SplitMix-style sequential stream with a fixed key.
#[derive(Clone, Debug)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn next_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64) / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        self.counter = self.counter.wrapping_add(1);
        normal_from_key(self.key ^ self.counter.wrapping_mul(GOLDEN))
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key ^ self.counter.wrapping_mul(GOLDEN))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_identity_same_draws() {
        let a = NoiseSource::new(7).replica(3).particle(11);
        let b = NoiseSource::new(7).replica(3).particle(11);
        for s in 0..50 {
            assert_eq!(a.normal(s, 2, 1).to_bits(), b.normal(s, 2, 1).to_bits());
        }
    }

    #[test]
    fn particles_and_replicas_differ() {
        let src = NoiseSource::new(7);
        assert_ne!(src.particle(0).normal(0, 0, 0), src.particle(1).normal(0, 0, 0));
        assert_ne!(
            src.replica(1).particle(0).normal(0, 0, 0),
            src.replica(2).particle(0).normal(0, 0, 0)
        );
    }

    #[test]
    fn split_preserves_sum() {
        let p = NoiseSource::new(1).particle(0);
        let (l, r) = p.split(4, 0, 0, 0.3, 0.01);
        assert!((l + r - 0.3).abs() < 1e-15);
    }
}
