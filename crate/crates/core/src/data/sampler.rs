use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::mix_key;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    X,
    Y,
}

/// Stateless, counter-based mini-batch sampler. Every batch is a pure
/// function of `(seed, client, round, local_step, which)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSampler {
    pub seed: u64,
    pub b_x: usize,
    pub b_y: usize,
}

const ROUND_TAG: u64 = 0x524F_554E_4400;
const INIT_TAG: u64 = 0x494E_4954_0000;

impl BatchSampler {
    pub fn new(seed: u64, b_x: usize, b_y: usize) -> Self {
        BatchSampler { seed, b_x, b_y }
    }

    pub fn batch_size(&self, which: Which) -> usize {
        match which {
            Which::X => self.b_x,
            Which::Y => self.b_y,
        }
    }

    /// Local sample indices in `[0, m)`, drawn uniformly with replacement.
    pub fn draw_batch(&self, m: usize, client: usize, round: usize, local_step: usize, which: Which) -> Vec<usize> {
        self.draw(m, &[ROUND_TAG, client as u64, round as u64, local_step as u64], which)
    }

    /// Batch used for the correction initialization before round 0.
    pub fn draw_init(&self, m: usize, client: usize, which: Which) -> Vec<usize> {
        self.draw(m, &[INIT_TAG, client as u64], which)
    }

    fn draw(&self, m: usize, key: &[u64], which: Which) -> Vec<usize> {
        assert!(m > 0, "client partition must be nonempty");
        let mut parts = vec![self.seed];
        parts.extend_from_slice(key);
        parts.push(match which {
            Which::X => 1,
            Which::Y => 2,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(mix_key(&parts));
        (0..self.batch_size(which)).map(|_| rng.random_range(0..m)).collect()
    }
}
