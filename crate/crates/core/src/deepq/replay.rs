use rand::Rng;

use crate::env::OBS_DIM;
use crate::error::DeepqError;

/// One `(s, a, r, s')` transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experience {
    pub state: [f64; OBS_DIM],
    pub action: usize,
    pub reward: f64,
    pub next_state: [f64; OBS_DIM],
}

/// Bounded FIFO memory with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    items: Vec<Experience>,
    capacity: usize,
    next: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stores `item`, evicting the oldest entry once full.
    pub fn push(&mut self, item: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Contents from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    /// Draws `k` items uniformly with replacement into `out`. The memory must
    /// hold at least `k` items.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        k: usize,
        rng: &mut R,
        out: &mut Vec<Experience>,
    ) -> Result<(), DeepqError> {
        if self.items.is_empty() || self.items.len() < k {
            return Err(DeepqError::InsufficientSamples {
                requested: k,
                available: self.items.len(),
            });
        }
        out.clear();
        for _ in 0..k {
            out.push(self.items[rng.gen_range(0..self.items.len())]);
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<Experience>, DeepqError> {
        let mut out = Vec::with_capacity(k);
        self.sample_into(k, rng, &mut out)?;
        Ok(out)
    }
}
