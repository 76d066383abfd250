//! Stochastic and deterministic action-selection rules over tabular states.

use rand::Rng;

/// Anything that can pick an action in a given state.
pub trait Policy: Sync {
    fn sample_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize;

    /// Probability of choosing `action` in `state`.
    fn action_prob(&self, state: usize, action: usize) -> f64;
}

/// Per-state action distribution with ε-greedy structure.
///
/// Rows start uniform (an arbitrary ε-soft policy). Once a row is made
/// greedy towards `a*` it carries `1 − ε + ε/|A|` on `a*` and `ε/|A|`
/// elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSoftPolicy {
    num_states: usize,
    num_actions: usize,
    epsilon: f64,
    probs: Vec<f64>,
}

impl EpsilonSoftPolicy {
    pub fn uniform(num_states: usize, num_actions: usize, epsilon: f64) -> Self {
        assert!(num_actions > 0, "policy needs at least one action");
        assert!(
            epsilon > 0.0 && epsilon <= 1.0,
            "epsilon must lie in (0, 1], got {epsilon}"
        );
        Self {
            num_states,
            num_actions,
            epsilon,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.num_actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let start = state * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    /// Makes the row of `state` ε-greedy with respect to `greedy`.
    pub fn make_greedy(&mut self, state: usize, greedy: usize) {
        let na = self.num_actions;
        let floor = self.epsilon / na as f64;
        let row = &mut self.probs[state * na..(state + 1) * na];
        for (a, p) in row.iter_mut().enumerate() {
            *p = if a == greedy {
                1.0 - self.epsilon + floor
            } else {
                floor
            };
        }
    }

    /// Resets a row to the uniform distribution.
    pub fn make_uniform(&mut self, state: usize) {
        let na = self.num_actions;
        self.probs[state * na..(state + 1) * na].fill(1.0 / na as f64);
    }

    /// Row sums equal one within `1e-9` and every entry is at least `ε/|A|`.
    pub fn is_epsilon_soft(&self) -> bool {
        let floor = self.epsilon / self.num_actions as f64;
        self.probs.chunks(self.num_actions).all(|row| {
            let sum: f64 = row.iter().sum();
            (sum - 1.0).abs() <= 1e-9 && row.iter().all(|&p| p >= floor - 1e-12)
        })
    }
}

impl Policy for EpsilonSoftPolicy {
    fn sample_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let row = self.row(state);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        row.len() - 1
    }

    fn action_prob(&self, state: usize, action: usize) -> f64 {
        self.prob(state, action)
    }
}

/// Deterministic policy: one action per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyPolicy {
    actions: Vec<usize>,
}

impl GreedyPolicy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }

    pub fn action(&self, state: usize) -> usize {
        self.actions[state]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
}

impl Policy for GreedyPolicy {
    fn sample_action<R: Rng + ?Sized>(&self, state: usize, _rng: &mut R) -> usize {
        self.actions[state]
    }

    fn action_prob(&self, state: usize, action: usize) -> f64 {
        if self.actions[state] == action {
            1.0
        } else {
            0.0
        }
    }
}
