//! Seeded sampling without replacement, reshuffled every epoch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset, Result};
use crate::linalg::Mat;
use crate::losses::TargetBatch;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    batch_size: usize,
    seed: u64,
    epoch: u64,
    perm: Vec<usize>,
    cursor: usize,
}

impl BatchPlan {
    pub fn new(batch_size: usize, seed: u64, dataset_len: usize) -> Result<Self> {
        if batch_size == 0 || batch_size > dataset_len {
            return Err(DataError::TooFew { requested: batch_size, available: dataset_len });
        }
        let mut plan = Self { batch_size, seed, epoch: 0, perm: (0..dataset_len).collect(), cursor: 0 };
        plan.shuffle();
        Ok(plan)
    }

    fn shuffle(&mut self) {
        // independent stream per epoch
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.epoch);
        self.perm.sort_unstable();
        self.perm.shuffle(&mut rng);
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Completed epochs.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.perm.len() / self.batch_size
    }

    /// Sample indices of the next batch. Rolls over to a new epoch as soon as
    /// fewer than `batch_size` indices remain (the remainder is dropped).
    pub fn next_indices(&mut self) -> Vec<usize> {
        let idx = self.perm[self.cursor..self.cursor + self.batch_size].to_vec();
        self.cursor += self.batch_size;
        if self.cursor + self.batch_size > self.perm.len() {
            self.epoch += 1;
            self.cursor = 0;
            self.shuffle();
        }
        idx
    }
}

pub fn next_batch(ds: &Dataset, plan: &mut BatchPlan) -> Result<(Mat, TargetBatch)> {
    if plan.perm.len() != ds.len() {
        return Err(DataError::Invalid(format!("plan built for {} samples, dataset has {}", plan.perm.len(), ds.len())));
    }
    let idx = plan.next_indices();
    Ok((ds.x.select_cols(&idx), ds.targets.select(&idx)))
}
