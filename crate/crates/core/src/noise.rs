//! Per-agent Gaussian noise streams.
//!
//! Every agent owns a ChaCha8 stream keyed by `(seed, stream id)` and consumes
//! it strictly in step order, so the draw for `(seed, agent, step, channel)` is
//! fixed regardless of how agents are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;

/// Stream ids at or above this offset are reserved for initial conditions.
const INIT_STREAM_OFFSET: u64 = 1 << 62;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone)]
pub struct NoiseStreams {
    rngs: Vec<ChaCha8Rng>,
    channels: usize,
}

impl NoiseStreams {
    pub fn new(seed: u64, stream_ids: &[u64], channels: usize) -> Self {
        Self {
            rngs: stream_ids.iter().map(|&id| stream(seed, id)).collect(),
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.rngs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rngs.is_empty()
    }

    /// Fills `out` (agent-major, `channels` per agent) with standard normals.
    pub fn fill(&mut self, out: &mut [f64]) {
        let k = self.channels;
        debug_assert_eq!(out.len(), k * self.rngs.len());
        if k == 0 {
            return;
        }
        out.par_chunks_mut(k)
            .zip(self.rngs.par_iter_mut())
            .with_min_len(256)
            .for_each(|(chunk, rng)| {
                for v in chunk {
                    *v = StandardNormal.sample(rng);
                }
            });
    }
}

/// Deterministic generator for initial-condition sampling of one agent.
pub fn init_rng(seed: u64, agent: u64) -> ChaCha8Rng {
    stream(seed, INIT_STREAM_OFFSET + agent)
}

pub fn sample_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + sd * z
}

pub fn sample_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    rng.sample(Uniform::new(lo, hi).expect("finite bounds"))
}

/// Independent sample generator for ensemble oracles and test fixtures.
pub fn generic_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
