use rand::seq::index;
use rand_chacha::ChaCha8Rng;

use super::Transition;
use crate::rng::seeded;

/// Fixed-capacity FIFO of transitions with seeded uniform batch sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    head: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            data: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
            rng: seeded(seed),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Append, overwriting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Oldest-first view.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (a, b) = self.data.split_at(self.head);
        b.iter().chain(a.iter())
    }

    /// Indices of a batch drawn uniformly without replacement.
    pub fn sample_indices(&mut self, batch: usize) -> Vec<usize> {
        let k = batch.min(self.data.len());
        index::sample(&mut self.rng, self.data.len(), k).into_vec()
    }

    pub fn sample(&mut self, batch: usize) -> Vec<Transition> {
        self.sample_indices(batch).into_iter().map(|i| self.data[i].clone()).collect()
    }
}
