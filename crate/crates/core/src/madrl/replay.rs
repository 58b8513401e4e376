//! Experience replay: a fixed-capacity ring with uniform sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// One stored interaction of all agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Joint observation (all agents concatenated).
    pub obs: Vec<f64>,
    pub next_obs: Vec<f64>,
    /// Joint raw actions in (-1, 1), one per agent.
    pub actions: Vec<f64>,
    /// Per-agent immediate rewards.
    pub rewards: Vec<f64>,
}

/// Ring buffer over [`Transition`]s.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    head: usize,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            items: Vec::new(),
            head: 0,
            capacity,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.items[idx]
    }

    /// Uniform sample of `batch` distinct indices (fewer if the buffer is
    /// still small).
    pub fn sample_indices<R: Rng>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        let take = batch.min(self.items.len());
        rand::seq::index::sample(rng, self.items.len(), take).into_vec()
    }
}
