use std::collections::VecDeque;

use rand::seq::index;

use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// Bounded FIFO experience store.
#[derive(Clone, Debug)]
pub struct ReplayMemory {
    buf: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayMemory {
            buf: VecDeque::with_capacity(capacity.min(4096)),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buf.iter()
    }

    pub fn clear(&mut self) {
        self.buf.clear();
    }

    /// `n` distinct transitions, or `None` if fewer are stored.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Option<Vec<&Transition>> {
        if n > self.buf.len() || n == 0 {
            return None;
        }
        let picks = index::sample(rng, self.buf.len(), n);
        Some(picks.iter().map(|i| &self.buf[i]).collect())
    }
}
