use rand::Rng;

use crate::error::{Error, Result};

/// One stored experience tuple.
///
/// `partner_estimate` is the partner action predicted at collection time; it
/// is empty for a centralized learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub own_action: Vec<f64>,
    pub partner_estimate: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionDims {
    pub state: usize,
    pub own_action: usize,
    pub partner_action: usize,
}

impl TransitionDims {
    fn check(&self, t: &Transition) -> Result<()> {
        if t.state.len() != self.state
            || t.next_state.len() != self.state
            || t.own_action.len() != self.own_action
            || t.partner_estimate.len() != self.partner_action
        {
            return Err(Error::shape(format!(
                "transition dims ({}, {}, {}, {}) do not match buffer ({}, {}, {})",
                t.state.len(),
                t.own_action.len(),
                t.partner_estimate.len(),
                t.next_state.len(),
                self.state,
                self.own_action,
                self.partner_action
            )));
        }
        Ok(())
    }
}

/// Fixed-capacity FIFO experience store with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    dims: TransitionDims,
    capacity: usize,
    storage: Vec<Transition>,
    /// Slot that the next push overwrites once the buffer is full.
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, dims: TransitionDims) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(Self {
            dims,
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        })
    }

    pub fn dims(&self) -> TransitionDims {
        self.dims
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        self.dims.check(&t)?;
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.next] = t;
            self.next = (self.next + 1) % self.capacity;
        }
        Ok(())
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.storage.split_at(self.next);
        older.iter().chain(newer.iter())
    }

    /// Draws `n` transitions uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if self.storage.is_empty() {
            return Err(Error::Precondition("cannot sample an empty replay buffer".into()));
        }
        if n == 0 {
            return Err(Error::Precondition("minibatch size must be positive".into()));
        }
        let len = self.storage.len();
        Ok((0..n).map(|_| &self.storage[rng.random_range(0..len)]).collect())
    }
}
