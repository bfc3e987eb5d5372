//! Keyed Brownian increments.
//!
//! Every draw is addressed by `(seed, stream, estimator, particle, block)`,
//! where a block is the first fine step index of an assimilation interval.
//! Draws inside a block follow in step-major, channel-minor order. No draw
//! depends on which thread handles a particle, or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Increments are rounded to multiples of `2^-40` so that partial sums are
/// exact and coarse/fine totals agree to the bit.
const GRID: f64 = (1u64 << 40) as f64;

fn quantise(x: f64) -> f64 {
    (x * GRID).round() / GRID
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Draws from the initial distribution.
    Initial,
    /// Model noise of filter particles.
    Propagation,
    /// Model noise of the reference (truth) path.
    Reference,
    /// Observation errors.
    Observation,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Initial => 0x1d8e_4e27_c47d_124f,
            Stream::Propagation => 0x9e37_79b9_7f4a_7c15,
            Stream::Reference => 0xbf58_476d_1ce4_e5b9,
            Stream::Observation => 0x94d0_49bb_1331_11eb,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Identifies one independent family of random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseKey {
    pub seed: u64,
    pub stream: Stream,
    /// Index of the multilevel estimator; levels never share draws.
    pub estimator: u64,
}

impl NoiseKey {
    pub fn new(seed: u64, stream: Stream, estimator: u64) -> Self {
        Self { seed, stream, estimator }
    }

    /// Generator positioned at the start of `block` for `particle`.
    pub fn rng(&self, particle: u64, block: u64) -> ChaCha8Rng {
        let mut state = self.seed ^ self.stream.tag();
        state ^= splitmix64(&mut self.estimator.wrapping_mul(0xd6e8_feb8_6659_fd93));
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(particle);
        rng.set_word_pos((block as u128) << 32);
        rng
    }

    /// Fills `out` with standard normal draws for `(particle, block)`.
    pub fn standard_normals(&self, particle: u64, block: u64, out: &mut [f64]) {
        let mut rng = self.rng(particle, block);
        for z in out.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
    }
}

/// Brownian increments of one particle over one assimilation interval.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianIncrements {
    level: usize,
    step: f64,
    channels: usize,
    /// `steps x channels`, row-major.
    values: Vec<f64>,
}

impl BrownianIncrements {
    /// Draws `steps` increments of variance `step` on `channels` channels.
    pub fn draw(
        key: &NoiseKey,
        particle: u64,
        block: u64,
        level: usize,
        step: f64,
        steps: usize,
        channels: usize,
    ) -> Self {
        let mut values = vec![0.0; steps * channels];
        key.standard_normals(particle, block, &mut values);
        let scale = step.sqrt();
        values.iter_mut().for_each(|v| *v = quantise(scale * *v));
        Self { level, step, channels, values }
    }

    pub fn from_values(level: usize, step: f64, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || !values.len().is_multiple_of(channels) {
            return Err(Error::arg("increment count is not a multiple of the channel count"));
        }
        Ok(Self { level, step, channels, values })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn steps(&self) -> usize {
        self.values.len() / self.channels
    }

    /// Increment vector of step `s`.
    pub fn at(&self, s: usize) -> &[f64] {
        &self.values[s * self.channels..(s + 1) * self.channels]
    }

    /// Increments on the next coarser level: sums of `factor` consecutive
    /// steps.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::arg(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.steps()
            )));
        }
        let c = self.channels;
        let mut values = vec![0.0; self.values.len() / factor];
        for (s, out) in values.chunks_mut(c).enumerate() {
            for k in 0..factor {
                for (o, v) in out.iter_mut().zip(self.at(s * factor + k)) {
                    *o += v;
                }
            }
        }
        Ok(Self {
            level: self.level.saturating_sub(1),
            step: self.step * factor as f64,
            channels: c,
            values,
        })
    }

    /// Sum of all increments on `channel`.
    pub fn total(&self, channel: usize) -> f64 {
        self.values.iter().skip(channel).step_by(self.channels).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_keyed_not_sequenced() {
        let key = NoiseKey::new(42, Stream::Propagation, 3);
        let mut a = [0.0; 6];
        let mut b = [0.0; 6];
        key.standard_normals(5, 17, &mut a);
        key.standard_normals(9, 1, &mut [0.0; 3]);
        key.standard_normals(5, 17, &mut b);
        assert_eq!(a, b);
        let mut c = [0.0; 6];
        NoiseKey::new(42, Stream::Propagation, 4).standard_normals(5, 17, &mut c);
        assert_ne!(a, c);
        NoiseKey::new(42, Stream::Reference, 3).standard_normals(5, 17, &mut c);
        assert_ne!(a, c);
        key.standard_normals(5, 18, &mut c);
        assert_ne!(a, c);
    }

    #[test]
    fn coarse_increments_sum_fine_ones_exactly() {
        let key = NoiseKey::new(1, Stream::Propagation, 2);
        for channels in [1, 3] {
            let fine = BrownianIncrements::draw(&key, 0, 64, 3, 0.125 / 8.0, 64, channels);
            let coarse = fine.coarsen(2).unwrap();
            let coarser = coarse.coarsen(2).unwrap();
            assert_eq!(coarse.steps(), 32);
            assert_eq!(coarse.level(), 2);
            for ch in 0..channels {
                assert_eq!(fine.total(ch), coarse.total(ch));
                assert_eq!(fine.total(ch), coarser.total(ch));
                let forward: f64 = (0..64).map(|s| fine.at(s)[ch]).sum();
                let backward: f64 = (0..64).rev().map(|s| fine.at(s)[ch]).sum();
                assert_eq!(forward, backward);
            }
        }
    }

    #[test]
    fn increment_variance_matches_step() {
        let key = NoiseKey::new(9, Stream::Propagation, 0);
        let h = 1.0 / 32.0;
        let inc = BrownianIncrements::draw(&key, 0, 0, 0, h, 200_000, 1);
        let n = inc.steps() as f64;
        let mean = inc.total(0) / n;
        let var = (0..inc.steps()).map(|s| (inc.at(s)[0] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4.0 * (h / n).sqrt());
        assert!((var / h - 1.0).abs() < 0.02);
    }

    #[test]
    fn coarsen_rejects_ragged_blocks() {
        let inc = BrownianIncrements::from_values(1, 0.1, 1, vec![0.0; 3]).unwrap();
        assert!(inc.coarsen(2).is_err());
        assert!(BrownianIncrements::from_values(1, 0.1, 2, vec![0.0; 3]).is_err());
    }
}
