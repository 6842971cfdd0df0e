// SPDX-License-Identifier: Apache-2.0

//! Tabular Q-learning with an epsilon-greedy default policy.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Multiplicative per-episode factor applied to `epsilon`.
    pub epsilon_decay: f64,
    pub q_init: f64,
}

impl Default for LearnParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.99,
            epsilon: 0.2,
            epsilon_decay: 0.999,
            q_init: 0.0,
        }
    }
}

impl LearnParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.alpha <= 1.0
            && (0.0..=1.0).contains(&self.gamma)
            && (0.0..=1.0).contains(&self.epsilon)
            && self.epsilon_decay > 0.0
            && self.epsilon_decay <= 1.0
            && self.q_init.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(alloc::format!(
                "learning parameters out of range: {self:?}"
            )))
        }
    }

    pub fn epsilon_at(&self, episode: u32) -> f64 {
        self.epsilon * crate::math::powi(self.epsilon_decay, episode)
    }
}

/// Dense state x action table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    state_count: usize,
    action_count: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(state_count: usize, action_count: usize, q_init: f64) -> Self {
        assert!(state_count > 0 && action_count > 0);
        Self {
            state_count,
            action_count,
            values: vec![q_init; state_count * action_count],
        }
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.action_count + a]
    }

    pub fn set(&mut self, s: usize, a: usize, q: f64) {
        self.values[s * self.action_count + a] = q;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.action_count..(s + 1) * self.action_count]
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(state, action, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &q)| (i / self.action_count, i % self.action_count, q))
    }

    /// Greedy action with ties broken uniformly at random.
    pub fn greedy(&self, s: usize, rng: &mut RngStream) -> usize {
        let row = self.row(s);
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties = row.iter().filter(|&&q| q == best).count();
        let pick = if ties == 1 { 0 } else { rng.below(ties) };
        row.iter()
            .enumerate()
            .filter(|(_, &q)| q == best)
            .nth(pick)
            .map(|(a, _)| a)
            .unwrap()
    }

    /// Epsilon-greedy action for state `s`.
    pub fn select_default(&self, s: usize, epsilon: f64, rng: &mut RngStream) -> usize {
        if rng.bernoulli(epsilon) {
            rng.below(self.action_count)
        } else {
            self.greedy(s, rng)
        }
    }

    /// One-step Q-learning backup. Only `Q(s, a)` changes.
    pub fn update(
        &mut self,
        s: usize,
        a: usize,
        reward: f64,
        s_next: usize,
        terminal: bool,
        params: &LearnParams,
    ) {
        let target = if terminal {
            reward
        } else {
            reward + params.gamma * self.max(s_next)
        };
        let q = self.get(s, a);
        self.set(s, a, q + params.alpha * (target - q));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn pure_argmax() {
        let mut q = QTable::new(1, 3, 0.0);
        q.set(0, 1, 5.0);
        q.set(0, 2, 1.0);
        let mut rng = derive_stream(0, "agent");
        for _ in 0..100 {
            assert_eq!(q.select_default(0, 0.0, &mut rng), 1);
        }
    }

    fn frequencies(q: &QTable, eps: f64, n: usize) -> [f64; 3] {
        let mut rng = derive_stream(11, "agent");
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[q.select_default(0, eps, &mut rng)] += 1;
        }
        counts.map(|c| c as f64 / n as f64)
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut q = QTable::new(1, 3, 0.0);
        q.set(0, 0, 9.0);
        for f in frequencies(&q, 1.0, 30_000) {
            assert!((f - 1.0 / 3.0).abs() < 0.01, "{f}");
        }
    }

    #[test]
    fn ties_are_broken_uniformly() {
        let q = QTable::new(1, 3, 0.0);
        for f in frequencies(&q, 0.0, 30_000) {
            assert!((f - 1.0 / 3.0).abs() < 0.01, "{f}");
        }
    }

    #[test]
    fn update_arithmetic() {
        let p = LearnParams {
            alpha: 0.1,
            gamma: 0.99,
            ..LearnParams::default()
        };
        let mut q = QTable::new(2, 2, 0.0);
        q.update(0, 0, 0.0, 1, false, &p);
        assert_eq!(q.get(0, 0), 0.0);
        q.update(0, 1, -1.0, 1, false, &p);
        assert_eq!(q.get(0, 1), -0.1);
        q.set(1, 0, -0.5);
        q.update(1, 0, 0.0, 0, true, &p);
        assert_eq!(q.get(1, 0), -0.45);
    }

    #[test]
    fn epsilon_schedule() {
        let p = LearnParams::default();
        assert_eq!(p.epsilon_at(0), 0.2);
        assert!((p.epsilon_at(1000) - 0.2 * 0.999f64.powi(1000)).abs() < 1e-15);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = LearnParams {
            alpha: 0.0,
            ..LearnParams::default()
        };
        assert!(p.validate().is_err());
        assert!(LearnParams::default().validate().is_ok());
    }
}
