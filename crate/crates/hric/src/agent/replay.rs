//! Fixed-capacity ring replay buffer with uniform sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// One MDP experience of a single MBS agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    storage: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        Self {
            storage: Vec::with_capacity(capacity.min(4096)),
            capacity,
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Push, overwriting the oldest entry once full.
    pub fn push(&mut self, transition: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(transition);
        } else {
            self.storage[self.next] = transition;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform sample with replacement; `None` while underfull.
    pub fn sample<'a, R: Rng + ?Sized>(
        &'a self,
        batch_size: usize,
        rng: &mut R,
    ) -> Option<Vec<&'a Transition>> {
        if self.storage.len() < batch_size {
            return None;
        }
        Some(
            (0..batch_size)
                .map(|_| &self.storage[rng.gen_range(0..self.storage.len())])
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(v: f64) -> Transition {
        Transition {
            state: vec![v],
            action: vec![1.0],
            reward: v,
            next_state: vec![v],
        }
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..4 {
            buf.push(t(i as f64));
        }
        assert_eq!(buf.len(), 3);
        let rewards: Vec<f64> = buf.storage.iter().map(|x| x.reward).collect();
        assert!(rewards.contains(&3.0));
        assert!(!rewards.contains(&0.0));
    }

    #[test]
    fn sample_requires_batch_size() {
        let mut buf = ReplayBuffer::new(10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        buf.push(t(1.0));
        assert!(buf.sample(2, &mut rng).is_none());
        buf.push(t(2.0));
        assert_eq!(buf.sample(2, &mut rng).unwrap().len(), 2);
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let mut buf = ReplayBuffer::new(16);
        for i in 0..16 {
            buf.push(t(i as f64));
        }
        let sample = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            buf.sample(8, &mut rng)
                .unwrap()
                .iter()
                .map(|x| x.reward)
                .collect::<Vec<f64>>()
        };
        assert_eq!(sample(5), sample(5));
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        let n = 20;
        let mut buf = ReplayBuffer::new(n);
        for i in 0..n {
            buf.push(t(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draws = 100_000;
        let mut counts = vec![0usize; n];
        for _ in 0..draws / 20 {
            for item in buf.sample(20, &mut rng).unwrap() {
                counts[item.reward as usize] += 1;
            }
        }
        // Chi-square against uniform with n-1 dof; 3-sigma-ish bound.
        let expected = draws as f64 / n as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        let dof = (n - 1) as f64;
        assert!(chi2 < dof + 3.0 * (2.0 * dof).sqrt(), "chi2 {chi2}");
    }
}
