use rand::seq::{index, SliceRandom};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{seeded_rng, STREAM_SAMPLER};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    FullBatch,
    /// Each step draws `b` distinct indices uniformly, independently across steps.
    WithReplacement,
    /// Each epoch shuffles `0..N` and splits it into `N/b` consecutive batches.
    WithoutReplacement,
}

/// Mini-batch index source. Batches are returned sorted so that a batch of all
/// `N` indices sums in the same order as the full gradient.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    mode: SamplerMode,
    n: usize,
    b: usize,
    seed: u64,
    rng: ChaCha8Rng,
    perm: Vec<usize>,
    pos: usize,
}

impl BatchSampler {
    pub fn new(mode: SamplerMode, n: usize, b: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("sampler needs n >= 1"));
        }
        let b = if mode == SamplerMode::FullBatch { n } else { b };
        if b == 0 || b > n {
            return Err(invalid(format!("batch size {b} must lie in [1, {n}]")));
        }
        if mode == SamplerMode::WithoutReplacement && n % b != 0 {
            return Err(invalid(format!("without-replacement sampling needs b | N (b = {b}, N = {n})")));
        }
        Ok(BatchSampler {
            mode,
            n,
            b,
            seed,
            rng: seeded_rng(seed, STREAM_SAMPLER),
            perm: (0..n).collect(),
            pos: n,
        })
    }

    pub fn mode(&self) -> SamplerMode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.b
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Batches per epoch (`N / b`).
    pub fn epoch_len(&self) -> usize {
        self.n / self.b
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut batch = match self.mode {
            SamplerMode::FullBatch => return (0..self.n).collect(),
            SamplerMode::WithReplacement => index::sample(&mut self.rng, self.n, self.b).into_vec(),
            SamplerMode::WithoutReplacement => {
                if self.pos >= self.n {
                    self.perm.shuffle(&mut self.rng);
                    self.pos = 0;
                }
                let batch = self.perm[self.pos..self.pos + self.b].to_vec();
                self.pos += self.b;
                batch
            }
        };
        batch.sort_unstable();
        batch
    }
}
