//! Tabular episodic MDPs.
//!
//! [`MdpSpec`] stores the full model `(S, A, P, β, R, γ)` plus reward bounds
//! and a set of absorbing zero-reward terminal states. Anything that can be
//! rolled out episode by episode implements [`Environment`]; [`MdpSpec`] is
//! the dense implementation, the NAS environment in [`crate::envs::nas`] is a
//! procedural one.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{GreedyPolicy, Policy};

/// Tolerance for probability vectors summing to one.
pub const PROB_TOL: f64 = 1e-9;
/// Maximum Bellman residual accepted from [`exact_q`].
pub const BELLMAN_TOL: f64 = 1e-10;
/// Default hard cap on episode length.
pub const DEFAULT_STEP_CAP: usize = 10_000;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("state {0} is out of range")]
    StateOutOfRange(usize),
    #[error("cannot start an episode in terminal state {0}")]
    TerminalStart(usize),
    #[error("discount must lie in [0, 1) for exact evaluation, got {0}")]
    Discount(f64),
    #[error("policy covers {policy} states but the MDP has {mdp}")]
    PolicyShape { policy: usize, mdp: usize },
    #[error("internal error: {0}")]
    Internal(String),
}

/// One violated [`MdpSpec`] invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeProbability { state: usize, action: usize, next: usize, value: f64 },
    RowSum { state: usize, action: usize, sum: f64 },
    TerminalNotAbsorbing { state: usize, action: usize },
    TerminalReward { state: usize, action: usize, reward: f64 },
    TerminalInitialMass { state: usize, mass: f64 },
    InitialSum { sum: f64 },
    NegativeInitialMass { state: usize, mass: f64 },
    RewardOutOfBounds { state: usize, action: usize, reward: f64 },
    Discount { discount: f64 },
    TerminalOutOfRange { state: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeProbability { state, action, next, value } => write!(
                f,
                "negative probability P({next}|{state},{action}) = {value}"
            ),
            Violation::RowSum { state, action, sum } => {
                write!(f, "row sum ≠ 1 at ({state},{action}): {sum}")
            }
            Violation::TerminalNotAbsorbing { state, action } => {
                write!(f, "terminal state {state} not absorbing under action {action}")
            }
            Violation::TerminalReward { state, action, reward } => {
                write!(f, "terminal reward ≠ 0 at ({state},{action}): {reward}")
            }
            Violation::TerminalInitialMass { state, mass } => {
                write!(f, "terminal state {state} has initial mass {mass}")
            }
            Violation::InitialSum { sum } => write!(f, "initial distribution sums to {sum}"),
            Violation::NegativeInitialMass { state, mass } => {
                write!(f, "negative initial mass {mass} at state {state}")
            }
            Violation::RewardOutOfBounds { state, action, reward } => {
                write!(f, "reward {reward} at ({state},{action}) outside [reward_min, reward_max]")
            }
            Violation::Discount { discount } => write!(f, "discount {discount} outside [0, 1)"),
            Violation::TerminalOutOfRange { state } => {
                write!(f, "terminal state {state} out of range")
            }
        }
    }
}

/// Dense tabular MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpSpecDoc", into = "MdpSpecDoc")]
pub struct MdpSpec {
    num_states: usize,
    num_actions: usize,
    /// `[S × A × S]`, row-major.
    transitions: Vec<f64>,
    /// `[S × A]`, row-major.
    rewards: Vec<f64>,
    initial_dist: Vec<f64>,
    discount: f64,
    terminal_states: Vec<usize>,
    reward_min: f64,
    reward_max: f64,
    is_terminal: Vec<bool>,
}

/// JSON document layout of an [`MdpSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MdpSpecDoc {
    num_states: usize,
    num_actions: usize,
    transitions: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<f64>>,
    initial_dist: Vec<f64>,
    discount: f64,
    terminal_states: Vec<usize>,
    reward_min: f64,
    reward_max: f64,
}

impl TryFrom<MdpSpecDoc> for MdpSpec {
    type Error = MdpError;

    fn try_from(doc: MdpSpecDoc) -> Result<Self, Self::Error> {
        let (s, a) = (doc.num_states, doc.num_actions);
        if doc.transitions.len() != s || doc.rewards.len() != s {
            return Err(MdpError::Shape(format!(
                "expected {s} transition and reward rows"
            )));
        }
        let mut transitions = Vec::with_capacity(s * a * s);
        for (i, per_action) in doc.transitions.into_iter().enumerate() {
            if per_action.len() != a {
                return Err(MdpError::Shape(format!("state {i}: expected {a} actions")));
            }
            for row in per_action {
                if row.len() != s {
                    return Err(MdpError::Shape(format!(
                        "state {i}: transition row of length {} (expected {s})",
                        row.len()
                    )));
                }
                transitions.extend(row);
            }
        }
        let mut rewards = Vec::with_capacity(s * a);
        for (i, row) in doc.rewards.into_iter().enumerate() {
            if row.len() != a {
                return Err(MdpError::Shape(format!("state {i}: expected {a} rewards")));
            }
            rewards.extend(row);
        }
        MdpSpec::new(
            s,
            a,
            transitions,
            rewards,
            doc.initial_dist,
            doc.discount,
            doc.terminal_states,
            doc.reward_min,
            doc.reward_max,
        )
    }
}

impl From<MdpSpec> for MdpSpecDoc {
    fn from(spec: MdpSpec) -> Self {
        let (s, a) = (spec.num_states, spec.num_actions);
        let transitions = spec
            .transitions
            .chunks(a * s)
            .map(|block| block.chunks(s).map(<[f64]>::to_vec).collect())
            .collect();
        let rewards = spec.rewards.chunks(a).map(<[f64]>::to_vec).collect();
        MdpSpecDoc {
            num_states: s,
            num_actions: a,
            transitions,
            rewards,
            initial_dist: spec.initial_dist,
            discount: spec.discount,
            terminal_states: spec.terminal_states,
            reward_min: spec.reward_min,
            reward_max: spec.reward_max,
        }
    }
}

impl MdpSpec {
    /// Builds a spec from flat row-major arrays. Only shapes are checked
    /// here; use [`validate_mdp`] for the model invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        initial_dist: Vec<f64>,
        discount: f64,
        terminal_states: Vec<usize>,
        reward_min: f64,
        reward_max: f64,
    ) -> Result<Self, MdpError> {
        if num_states == 0 || num_actions == 0 {
            return Err(MdpError::Shape("need at least one state and action".into()));
        }
        if transitions.len() != num_states * num_actions * num_states {
            return Err(MdpError::Shape(format!(
                "transitions has {} entries, expected {}",
                transitions.len(),
                num_states * num_actions * num_states
            )));
        }
        if rewards.len() != num_states * num_actions {
            return Err(MdpError::Shape(format!(
                "rewards has {} entries, expected {}",
                rewards.len(),
                num_states * num_actions
            )));
        }
        if initial_dist.len() != num_states {
            return Err(MdpError::Shape(format!(
                "initial_dist has {} entries, expected {num_states}",
                initial_dist.len()
            )));
        }
        let mut is_terminal = vec![false; num_states];
        for &t in &terminal_states {
            if t < num_states {
                is_terminal[t] = true;
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            transitions,
            rewards,
            initial_dist,
            discount,
            terminal_states,
            reward_min,
            reward_max,
            is_terminal,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn terminal_states(&self) -> &[usize] {
        &self.terminal_states
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn reward_bounds(&self) -> (f64, f64) {
        (self.reward_min, self.reward_max)
    }

    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let s = self.num_states;
        let start = (state * self.num_actions + action) * s;
        &self.transitions[start..start + s]
    }

    pub fn transition(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transition_row(state, action)[next]
    }

    pub fn reward_at(&self, state: usize, action: usize) -> f64 {
        self.rewards[state * self.num_actions + action]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    pub(crate) fn transitions_mut(&mut self) -> &mut [f64] {
        &mut self.transitions
    }

    pub(crate) fn rewards_mut(&mut self) -> &mut [f64] {
        &mut self.rewards
    }

    pub fn with_discount(mut self, discount: f64) -> Self {
        self.discount = discount;
        self
    }

    /// Replaces the reward bounds.
    pub fn with_reward_bounds(mut self, reward_min: f64, reward_max: f64) -> Self {
        self.reward_min = reward_min;
        self.reward_max = reward_max;
        self
    }

    /// Same dynamics, different reward matrix. Bounds are widened to cover
    /// the new rewards.
    pub fn with_rewards(&self, rewards: Vec<f64>) -> Result<Self, MdpError> {
        if rewards.len() != self.rewards.len() {
            return Err(MdpError::Shape("reward matrix shape differs".into()));
        }
        let (lo, hi) = rewards
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(r), hi.max(r))
            });
        let mut out = self.clone();
        out.rewards = rewards;
        out.reward_min = lo.min(0.0);
        out.reward_max = hi.max(0.0);
        Ok(out)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    fn sample_categorical<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in row.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = i;
                if u < acc {
                    return i;
                }
            }
        }
        last
    }
}

/// Lists every invariant violation of `spec`; empty means valid.
pub fn validate_mdp(spec: &MdpSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let (ns, na) = (spec.num_states, spec.num_actions);
    if !(0.0..1.0).contains(&spec.discount) {
        out.push(Violation::Discount { discount: spec.discount });
    }
    for &t in &spec.terminal_states {
        if t >= ns {
            out.push(Violation::TerminalOutOfRange { state: t });
        }
    }
    for s in 0..ns {
        for a in 0..na {
            let row = spec.transition_row(s, a);
            let mut sum = 0.0;
            for (next, &p) in row.iter().enumerate() {
                if p < 0.0 {
                    out.push(Violation::NegativeProbability { state: s, action: a, next, value: p });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > PROB_TOL {
                out.push(Violation::RowSum { state: s, action: a, sum });
            }
            let r = spec.reward_at(s, a);
            if spec.is_terminal[s] {
                if (row[s] - 1.0).abs() > PROB_TOL {
                    out.push(Violation::TerminalNotAbsorbing { state: s, action: a });
                }
                if r != 0.0 {
                    out.push(Violation::TerminalReward { state: s, action: a, reward: r });
                }
            }
            if !(spec.reward_min..=spec.reward_max).contains(&r) {
                out.push(Violation::RewardOutOfBounds { state: s, action: a, reward: r });
            }
        }
    }
    let mut sum = 0.0;
    for (s, &m) in spec.initial_dist.iter().enumerate() {
        if m < 0.0 {
            out.push(Violation::NegativeInitialMass { state: s, mass: m });
        }
        if spec.is_terminal[s] && m != 0.0 {
            out.push(Violation::TerminalInitialMass { state: s, mass: m });
        }
        sum += m;
    }
    if (sum - 1.0).abs() > PROB_TOL {
        out.push(Violation::InitialSum { sum });
    }
    out
}

/// Episodic environment with deterministic rewards `R(s, a)`.
///
/// Rewards are a function of the state-action pair only, which lets a
/// low-fidelity reward function be evaluated along a high-fidelity
/// trajectory.
pub trait Environment: Sync {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn is_terminal(&self, state: usize) -> bool;
    fn reward(&self, state: usize, action: usize) -> f64;
    fn discount(&self) -> f64;
    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize;
    fn next_state<R: Rng + ?Sized>(&self, state: usize, action: usize, rng: &mut R) -> usize;
}

impl Environment for MdpSpec {
    fn num_states(&self) -> usize {
        self.num_states
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn is_terminal(&self, state: usize) -> bool {
        self.is_terminal[state]
    }

    fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward_at(state, action)
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        Self::sample_categorical(&self.initial_dist, rng)
    }

    fn next_state<R: Rng + ?Sized>(&self, state: usize, action: usize, rng: &mut R) -> usize {
        Self::sample_categorical(self.transition_row(state, action), rng)
    }
}

/// One `(s_t, a_t, r_{t+1})` record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// A sampled episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// State reached after the last step.
    pub terminal_state: usize,
    /// The step cap was hit before a terminal state was entered.
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> impl DoubleEndedIterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.reward)
    }

    /// Undiscounted sum of rewards.
    pub fn total_reward(&self) -> f64 {
        self.rewards().sum()
    }

    /// Discounted return from the first step.
    pub fn discounted_return(&self, discount: f64) -> f64 {
        self.rewards().rev().fold(0.0, |g, r| discount * g + r)
    }

    pub fn returns(&self, discount: f64) -> Vec<f64> {
        discounted_returns(&self.rewards().collect::<Vec<_>>(), discount)
    }
}

/// `G_t = r_{t+1} + γ G_{t+1}` in one backward pass, with `G_T = 0`.
pub fn discounted_returns(rewards: &[f64], discount: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for (t, &r) in rewards.iter().enumerate().rev() {
        g = discount * g + r;
        out[t] = g;
    }
    out
}

/// Rolls out one episode.
///
/// Without `start`, the first state is drawn from the initial distribution
/// and the first action from the policy. With `start = Some((s, a))` the
/// episode begins from that pair (generative start). Episodes end on
/// entering a terminal state, or after `step_cap` steps with
/// `truncated = true`.
pub fn sample_episode<E, P, R>(
    env: &E,
    policy: &P,
    rng: &mut R,
    start: Option<(usize, usize)>,
    step_cap: usize,
) -> Result<Trajectory, MdpError>
where
    E: Environment,
    P: Policy,
    R: Rng + ?Sized,
{
    let (mut state, mut action) = match start {
        Some((s, a)) => {
            if s >= env.num_states() {
                return Err(MdpError::StateOutOfRange(s));
            }
            if env.is_terminal(s) {
                return Err(MdpError::TerminalStart(s));
            }
            (s, a)
        }
        None => {
            let s = env.initial_state(rng);
            if env.is_terminal(s) {
                return Err(MdpError::TerminalStart(s));
            }
            (s, policy.sample_action(s, rng))
        }
    };
    let mut steps = Vec::new();
    loop {
        let reward = env.reward(state, action);
        steps.push(Step { state, action, reward });
        let next = env.next_state(state, action, rng);
        if env.is_terminal(next) {
            return Ok(Trajectory { steps, terminal_state: next, truncated: false });
        }
        if steps.len() >= step_cap {
            return Ok(Trajectory { steps, terminal_state: next, truncated: true });
        }
        state = next;
        action = policy.sample_action(state, rng);
    }
}

/// State-action value table `[S × A]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self { num_states, num_actions, values: vec![0.0; num_states * num_actions] }
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), num_states * num_actions);
        Self { num_states, num_actions, values }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.num_actions + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Argmax of the row; ties go to the lowest action index.
    pub fn greedy_action(&self, state: usize) -> usize {
        argmax(self.row(state))
    }

    pub fn greedy_policy(&self) -> GreedyPolicy {
        GreedyPolicy::new((0..self.num_states).map(|s| self.greedy_action(s)).collect())
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Exact `Q^π` by a direct linear solve.
///
/// Solves `(I − γ P_π) V = r_π` over states, with terminal rows pinned to
/// `V = 0`, then sets `Q = R + γ P V`. One step of iterative refinement is
/// applied so the Bellman residual stays below [`BELLMAN_TOL`].
pub fn exact_q<P: Policy>(spec: &MdpSpec, policy: &P) -> Result<QTable, MdpError> {
    let (ns, na) = (spec.num_states, spec.num_actions);
    let gamma = spec.discount;
    if !(0.0..1.0).contains(&gamma) {
        return Err(MdpError::Discount(gamma));
    }
    let mut a_mat = DMatrix::<f64>::identity(ns, ns);
    let mut rhs = DVector::<f64>::zeros(ns);
    for s in 0..ns {
        if spec.is_terminal[s] {
            continue;
        }
        for a in 0..na {
            let pa = policy.action_prob(s, a);
            if pa == 0.0 {
                continue;
            }
            rhs[s] += pa * spec.reward_at(s, a);
            for (next, &p) in spec.transition_row(s, a).iter().enumerate() {
                if p != 0.0 && !spec.is_terminal[next] {
                    a_mat[(s, next)] -= gamma * pa * p;
                }
            }
        }
    }
    let lu = a_mat.clone().lu();
    let mut v = lu
        .solve(&rhs)
        .ok_or_else(|| MdpError::Internal("singular policy-evaluation system".into()))?;
    let resid = &rhs - &a_mat * &v;
    if let Some(dv) = lu.solve(&resid) {
        v += dv;
    }
    let mut q = QTable::zeros(ns, na);
    for s in 0..ns {
        if spec.is_terminal[s] {
            continue;
        }
        for a in 0..na {
            let cont: f64 = spec
                .transition_row(s, a)
                .iter()
                .zip(v.iter())
                .map(|(p, vn)| p * vn)
                .sum();
            q.set(s, a, spec.reward_at(s, a) + gamma * cont);
        }
    }
    let resid = bellman_residual(spec, policy, &q);
    if !resid.is_finite() {
        return Err(MdpError::Internal("non-finite policy-evaluation solution".into()));
    }
    Ok(q)
}

/// Largest absolute residual of the Bellman evaluation equation.
pub fn bellman_residual<P: Policy>(spec: &MdpSpec, policy: &P, q: &QTable) -> f64 {
    let (ns, na) = (spec.num_states, spec.num_actions);
    let v: Vec<f64> = (0..ns)
        .map(|s| {
            if spec.is_terminal[s] {
                0.0
            } else {
                (0..na).map(|a| policy.action_prob(s, a) * q.get(s, a)).sum()
            }
        })
        .collect();
    let mut worst = 0.0f64;
    for s in 0..ns {
        for a in 0..na {
            let target = if spec.is_terminal[s] {
                0.0
            } else {
                let cont: f64 = spec
                    .transition_row(s, a)
                    .iter()
                    .zip(&v)
                    .map(|(p, vn)| p * vn)
                    .sum();
                spec.reward_at(s, a) + spec.discount * cont
            };
            worst = worst.max((q.get(s, a) - target).abs());
        }
    }
    worst
}

/// Map `T` from high-fidelity to low-fidelity state indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateMap {
    map: Vec<usize>,
    num_low: usize,
    preimages: Vec<Vec<usize>>,
}

impl StateMap {
    /// Checks totality (one entry per high state) and that the image lies in
    /// `0..num_low`.
    pub fn new(map: Vec<usize>, num_low: usize) -> Result<Self, MdpError> {
        if let Some(&bad) = map.iter().find(|&&lo| lo >= num_low) {
            return Err(MdpError::StateOutOfRange(bad));
        }
        let mut preimages = vec![Vec::new(); num_low];
        for (hi, &lo) in map.iter().enumerate() {
            preimages[lo].push(hi);
        }
        Ok(Self { map, num_low, preimages })
    }

    pub fn identity(num_states: usize) -> Self {
        Self::new((0..num_states).collect(), num_states).expect("identity map is valid")
    }

    pub fn apply(&self, high: usize) -> usize {
        self.map[high]
    }

    pub fn num_high(&self) -> usize {
        self.map.len()
    }

    pub fn num_low(&self) -> usize {
        self.num_low
    }

    pub fn preimage(&self, low: usize) -> &[usize] {
        &self.preimages[low]
    }

    pub fn is_identity(&self) -> bool {
        self.num_low == self.map.len() && self.map.iter().enumerate().all(|(i, &m)| i == m)
    }

    /// Number of distinct low states hit by the map.
    pub fn image_size(&self) -> usize {
        self.preimages.iter().filter(|p| !p.is_empty()).count()
    }
}
