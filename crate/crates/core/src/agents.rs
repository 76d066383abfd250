//! On-policy first-visit Monte Carlo control, single- and multifidelity.
//!
//! [`mcrl_train`] is the standard ε-soft first-visit MC control baseline.
//! [`mfmcrl_train`] runs the same loop on the high-fidelity environment but
//! replaces the sample mean with the control-variate estimate:
//!
//! 1. roll out one high-fidelity episode under π;
//! 2. evaluate the low-fidelity reward `R^lo(T(s), a)` along it to obtain the
//!    paired low-fidelity trajectory;
//! 3. for every distinct `(T(s), a)` in that trajectory, start `m` extra
//!    rollouts in the generative low-fidelity environment and append their
//!    returns to `RetsLP`;
//! 4. walk the episode backwards, and at each first visit append the paired
//!    returns, re-estimate `Q(s, a)` with `mean(RetsLP(T(s), a))` as the
//!    low-fidelity reference and make π ε-greedy at `s`.
//!
//! The low-fidelity rollouts follow the ε-soft policy derived from the
//! aggregated value `Q^lo(s^lo, a) = Σ_{T(s)=s^lo} Q(s, a)`.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{control_variate_from_stats, PairedMoments, DEFAULT_MIN_CV_SAMPLES};
use crate::mdp::{argmax, sample_episode, Environment, MdpError, QTable, StateMap, DEFAULT_STEP_CAP};
use crate::policy::{EpsilonSoftPolicy, Policy};
use crate::rng::{stream_rng, SimRng};

const HI_STREAM: u64 = 0;
const LO_STREAM: u64 = 1;
const EVAL_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("environments disagree: {0}")]
    Mismatch(String),
    #[error("window of {window} episodes exceeds the {recorded} recorded")]
    Window { window: usize, recorded: usize },
    #[error("gave up after {0} consecutive truncated episodes")]
    Truncation(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Mcrl,
    Mfmcrl,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Mcrl => "mcrl",
            Algo::Mfmcrl => "mfmcrl",
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mcrl" => Ok(Algo::Mcrl),
            "mfmcrl" => Ok(Algo::Mfmcrl),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

/// How high-fidelity values are pooled over the preimage `T⁻¹(s^lo)` when
/// deriving the low-fidelity behaviour policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LowAggregation {
    #[default]
    Sum,
    /// Average over the preimage states that already have an estimate.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub discount: f64,
    pub epsilon: f64,
    pub episodes: usize,
    /// Low-fidelity rollouts per visited `(s^lo, a)` per episode.
    pub m: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Trailing window (episodes) for variance-reduction diagnostics.
    pub vr_window: usize,
    pub step_cap: usize,
    pub min_cv_samples: usize,
    pub low_aggregation: LowAggregation,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            discount: 0.99,
            epsilon: 0.1,
            episodes: 2_000,
            m: 10,
            eval_every: 50,
            eval_episodes: 200,
            vr_window: 1_000,
            step_cap: DEFAULT_STEP_CAP,
            min_cv_samples: DEFAULT_MIN_CV_SAMPLES,
            low_aggregation: LowAggregation::Sum,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(0.0..1.0).contains(&self.discount) {
            return Err(AgentError::Config(format!("discount {} not in [0, 1)", self.discount)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(AgentError::Config(format!("epsilon {} not in (0, 1]", self.epsilon)));
        }
        if self.eval_every == 0 || self.eval_episodes == 0 || self.step_cap == 0 {
            return Err(AgentError::Config(
                "eval_every, eval_episodes and step_cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct PairCell {
    rets_h: Vec<f64>,
    rets_l: Vec<f64>,
    moments: PairedMoments,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct AuxCell {
    rets: Vec<f64>,
    sum: f64,
}

/// Per-pair return lists: `RetsH` / `RetsL` keyed by high-fidelity
/// `(s, a)`, `RetsLP` keyed by low-fidelity `(s^lo, a)`. Append-only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReturnLedger {
    num_actions: usize,
    paired: HashMap<usize, PairCell>,
    aux: HashMap<usize, AuxCell>,
}

impl ReturnLedger {
    pub fn new(num_actions: usize) -> Self {
        Self { num_actions, ..Default::default() }
    }

    fn key(&self, state: usize, action: usize) -> usize {
        state * self.num_actions + action
    }

    pub fn push_paired(&mut self, state: usize, action: usize, high: f64, low: f64) -> &PairedMoments {
        let key = self.key(state, action);
        let cell = self.paired.entry(key).or_default();
        cell.rets_h.push(high);
        cell.rets_l.push(low);
        cell.moments.push(high, low);
        &cell.moments
    }

    pub fn push_aux(&mut self, low_state: usize, action: usize, ret: f64) {
        let key = self.key(low_state, action);
        let cell = self.aux.entry(key).or_default();
        cell.rets.push(ret);
        cell.sum += ret;
    }

    pub fn rets_h(&self, state: usize, action: usize) -> &[f64] {
        self.paired.get(&self.key(state, action)).map_or(&[], |c| &c.rets_h)
    }

    pub fn rets_l(&self, state: usize, action: usize) -> &[f64] {
        self.paired.get(&self.key(state, action)).map_or(&[], |c| &c.rets_l)
    }

    pub fn rets_lp(&self, low_state: usize, action: usize) -> &[f64] {
        self.aux.get(&self.key(low_state, action)).map_or(&[], |c| &c.rets)
    }

    /// Mean of `RetsLP(s^lo, a)`, `None` if empty.
    pub fn aux_mean(&self, low_state: usize, action: usize) -> Option<f64> {
        self.aux
            .get(&self.key(low_state, action))
            .filter(|c| !c.rets.is_empty())
            .map(|c| c.sum / c.rets.len() as f64)
    }

    /// Every paired list pair has equal lengths.
    pub fn is_synchronized(&self) -> bool {
        self.paired
            .values()
            .all(|c| c.rets_h.len() == c.rets_l.len() && c.moments.len() == c.rets_h.len())
    }

    pub fn paired_pairs(&self) -> usize {
        self.paired.len()
    }
}

/// Per-episode update diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub updates: u32,
    pub fallbacks: u32,
    pub vr_sum: f64,
    pub steps: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub episode: usize,
    pub eval_mean: f64,
    pub eval_std: f64,
    pub vr_factor: f64,
    pub fallback_frac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub algo: Algo,
    pub seed: u64,
    pub checkpoints: Vec<Checkpoint>,
    pub episodes: Vec<EpisodeStats>,
    /// High-fidelity episodes dropped for hitting the step cap.
    pub discarded_episodes: usize,
    pub discarded_low_rollouts: usize,
    pub high_steps: u64,
    pub low_steps: u64,
}

impl TrainingHistory {
    fn new(algo: Algo, seed: u64) -> Self {
        Self {
            algo,
            seed,
            checkpoints: Vec::new(),
            episodes: Vec::new(),
            discarded_episodes: 0,
            discarded_low_rollouts: 0,
            high_steps: 0,
            low_steps: 0,
        }
    }

    fn trailing(&self, window: usize) -> (f64, f64) {
        let start = self.episodes.len().saturating_sub(window);
        let (mut updates, mut fallbacks, mut vr) = (0u64, 0u64, 0.0);
        for e in &self.episodes[start..] {
            updates += u64::from(e.updates);
            fallbacks += u64::from(e.fallbacks);
            vr += e.vr_sum;
        }
        if updates == 0 {
            // no control-variate updates were attempted (single fidelity)
            (1.0, 0.0)
        } else {
            (vr / updates as f64, fallbacks as f64 / updates as f64)
        }
    }

    pub fn last(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }

    /// Mean of `eval_mean` over the last `k` checkpoints.
    pub fn final_reward(&self, k: usize) -> f64 {
        let k = k.clamp(1, self.checkpoints.len().max(1));
        let tail = &self.checkpoints[self.checkpoints.len().saturating_sub(k)..];
        if tail.is_empty() {
            return f64::NAN;
        }
        tail.iter().map(|c| c.eval_mean).sum::<f64>() / tail.len() as f64
    }
}

/// Mean per-update `1 − ρ²` over the last `window` training episodes.
/// Updates that fell back to the sample mean count as 1.
pub fn trailing_vr_factor(history: &TrainingHistory, window: usize) -> Result<f64, AgentError> {
    if window > history.episodes.len() {
        return Err(AgentError::Window { window, recorded: history.episodes.len() });
    }
    Ok(history.trailing(window).0)
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub q: QTable,
    pub policy: EpsilonSoftPolicy,
    pub history: TrainingHistory,
    pub ledger: ReturnLedger,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean: f64,
    /// Population standard deviation over episodes.
    pub std: f64,
}

/// Runs `n_episodes` episodes from the initial distribution and summarises
/// the undiscounted episode rewards.
pub fn evaluate_policy<E, P, R>(
    env: &E,
    policy: &P,
    n_episodes: usize,
    rng: &mut R,
    step_cap: usize,
) -> Result<EvalSummary, AgentError>
where
    E: Environment,
    P: Policy,
    R: Rng + ?Sized,
{
    if n_episodes == 0 {
        return Err(AgentError::Config("need at least one evaluation episode".into()));
    }
    let totals: Vec<f64> = (0..n_episodes)
        .map(|_| sample_episode(env, policy, rng, None, step_cap).map(|t| t.total_reward()))
        .collect::<Result<_, _>>()?;
    let n = totals.len() as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let var = totals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok(EvalSummary { mean, std: var.sqrt() })
}

impl Policy for QTable {
    fn sample_action<R: Rng + ?Sized>(&self, state: usize, _rng: &mut R) -> usize {
        self.greedy_action(state)
    }

    fn action_prob(&self, state: usize, action: usize) -> f64 {
        if self.greedy_action(state) == action {
            1.0
        } else {
            0.0
        }
    }
}

/// ε-soft policy over low-fidelity states derived from pooled high values.
struct LowPolicy<'a> {
    sums: &'a [f64],
    counts: &'a [u32],
    touched: &'a [bool],
    num_actions: usize,
    epsilon: f64,
    aggregation: LowAggregation,
}

impl LowPolicy<'_> {
    fn greedy(&self, state: usize) -> usize {
        let na = self.num_actions;
        let row: Vec<f64> = (0..na)
            .map(|a| {
                let i = state * na + a;
                match self.aggregation {
                    LowAggregation::Sum => self.sums[i],
                    LowAggregation::Mean if self.counts[i] > 0 => {
                        self.sums[i] / f64::from(self.counts[i])
                    }
                    LowAggregation::Mean => 0.0,
                }
            })
            .collect();
        argmax(&row)
    }
}

impl Policy for LowPolicy<'_> {
    fn sample_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let na = self.num_actions;
        if !self.touched[state] {
            return rng.random_range(0..na);
        }
        let greedy = self.greedy(state);
        let u: f64 = rng.random();
        if u < self.epsilon {
            rng.random_range(0..na)
        } else {
            greedy
        }
    }

    fn action_prob(&self, state: usize, action: usize) -> f64 {
        let na = self.num_actions as f64;
        if !self.touched[state] {
            return 1.0 / na;
        }
        if action == self.greedy(state) {
            1.0 - self.epsilon + self.epsilon / na
        } else {
            self.epsilon / na
        }
    }
}

/// Low-fidelity side of a multifidelity run.
struct LowSide<'a, L> {
    env: &'a L,
    map: &'a StateMap,
    sums: Vec<f64>,
    counts: Vec<u32>,
    touched: Vec<bool>,
    rng: SimRng,
}

fn checkpoint<H: Environment>(
    hi: &H,
    q: &QTable,
    history: &TrainingHistory,
    config: &AgentConfig,
    episode: usize,
) -> Result<Checkpoint, AgentError> {
    let index = (episode / config.eval_every) as u64;
    let mut eval_rng = stream_rng(config.seed, EVAL_STREAM_BASE + index);
    let summary = evaluate_policy(hi, q, config.eval_episodes, &mut eval_rng, config.step_cap)?;
    let window = config.vr_window.min(history.episodes.len()).max(1);
    let (vr_factor, fallback_frac) = history.trailing(window);
    Ok(Checkpoint { episode, eval_mean: summary.mean, eval_std: summary.std, vr_factor, fallback_frac })
}

fn train<H, L>(
    hi: &H,
    mut low: Option<LowSide<'_, L>>,
    config: &AgentConfig,
) -> Result<TrainingOutcome, AgentError>
where
    H: Environment,
    L: Environment,
{
    config.validate()?;
    let ns = hi.num_states();
    let na = hi.num_actions();
    let gamma = config.discount;
    let algo = if low.is_some() { Algo::Mfmcrl } else { Algo::Mcrl };
    let mut q = QTable::zeros(ns, na);
    let mut policy = EpsilonSoftPolicy::uniform(ns, na, config.epsilon);
    let mut ledger = ReturnLedger::new(na);
    let mut history = TrainingHistory::new(algo, config.seed);
    let mut rng = stream_rng(config.seed, HI_STREAM);

    for episode in 1..=config.episodes {
        let mut truncated_in_row = 0;
        let traj = loop {
            let t = sample_episode(hi, &policy, &mut rng, None, config.step_cap)?;
            history.high_steps += t.len() as u64;
            if !t.truncated {
                break t;
            }
            history.discarded_episodes += 1;
            truncated_in_row += 1;
            if truncated_in_row >= 1_000 {
                return Err(AgentError::Truncation(truncated_in_row));
            }
        };

        // first occurrence index of every (s, a)
        let mut first_visit: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, step) in traj.steps.iter().enumerate() {
            first_visit.entry((step.state, step.action)).or_insert(t);
        }

        let low_rewards: Vec<f64> = match &low {
            Some(side) => traj
                .steps
                .iter()
                .map(|s| side.env.reward(side.map.apply(s.state), s.action))
                .collect(),
            None => Vec::new(),
        };

        if let Some(side) = low.as_mut() {
            if config.m > 0 {
                let mut seen = HashSet::new();
                let pairs: Vec<(usize, usize)> = traj
                    .steps
                    .iter()
                    .map(|s| (side.map.apply(s.state), s.action))
                    .filter(|p| seen.insert(*p))
                    .collect();
                let behaviour = LowPolicy {
                    sums: &side.sums,
                    counts: &side.counts,
                    touched: &side.touched,
                    num_actions: na,
                    epsilon: config.epsilon,
                    aggregation: config.low_aggregation,
                };
                let mut collected = Vec::new();
                for &(s_lo, a) in &pairs {
                    if side.env.is_terminal(s_lo) {
                        continue;
                    }
                    for _ in 0..config.m {
                        let t = sample_episode(
                            side.env,
                            &behaviour,
                            &mut side.rng,
                            Some((s_lo, a)),
                            config.step_cap,
                        )?;
                        history.low_steps += t.len() as u64;
                        if t.truncated {
                            history.discarded_low_rollouts += 1;
                            continue;
                        }
                        let g = t.discounted_return(gamma);
                        collected.push((s_lo, a, g));
                    }
                }
                for (s_lo, a, g) in collected {
                    ledger.push_aux(s_lo, a, g);
                }
            }
        }

        let mut stats = EpisodeStats { steps: traj.len() as u32, ..Default::default() };
        let (mut g_hi, mut g_lo) = (0.0, 0.0);
        for t in (0..traj.len()).rev() {
            let step = traj.steps[t];
            g_hi = gamma * g_hi + step.reward;
            if let Some(r_lo) = low_rewards.get(t) {
                g_lo = gamma * g_lo + r_lo;
            }
            if first_visit[&(step.state, step.action)] != t {
                continue;
            }
            let (s, a) = (step.state, step.action);
            let old = q.get(s, a);
            let new = match &low {
                None => {
                    let moments = ledger.push_paired(s, a, g_hi, 0.0);
                    moments.stats().expect("non-empty").mean_hi
                }
                Some(side) => {
                    let s_lo = side.map.apply(s);
                    let reference = ledger.aux_mean(s_lo, a);
                    let moments = *ledger.push_paired(s, a, g_hi, g_lo);
                    let est = control_variate_from_stats(
                        &moments.stats().expect("non-empty"),
                        reference,
                        config.min_cv_samples,
                    );
                    stats.updates += 1;
                    stats.vr_sum += est.vr_factor;
                    if est.fallback_used {
                        stats.fallbacks += 1;
                    }
                    est.q_value
                }
            };
            q.set(s, a, new);
            if let Some(side) = low.as_mut() {
                let i = side.map.apply(s) * na + a;
                side.sums[i] += new - old;
                if ledger.rets_h(s, a).len() == 1 {
                    side.counts[i] += 1;
                }
                side.touched[side.map.apply(s)] = true;
            }
            policy.make_greedy(s, q.greedy_action(s));
        }
        history.episodes.push(stats);

        if episode % config.eval_every == 0 {
            let cp = checkpoint(hi, &q, &history, config, episode)?;
            history.checkpoints.push(cp);
        }
    }
    Ok(TrainingOutcome { q, policy, history, ledger })
}

/// First-visit ε-soft MC control on the high-fidelity environment alone.
pub fn mcrl_train<H: Environment>(hi: &H, config: &AgentConfig) -> Result<TrainingOutcome, AgentError> {
    train::<H, H>(hi, None, config)
}

/// Multifidelity MC control with control-variate value estimates.
pub fn mfmcrl_train<H, L>(
    hi: &H,
    lo: &L,
    map: &StateMap,
    config: &AgentConfig,
) -> Result<TrainingOutcome, AgentError>
where
    H: Environment,
    L: Environment,
{
    if hi.num_actions() != lo.num_actions() {
        return Err(AgentError::Mismatch(format!(
            "{} high-fidelity actions vs {} low-fidelity actions",
            hi.num_actions(),
            lo.num_actions()
        )));
    }
    if map.num_high() != hi.num_states() || map.num_low() != lo.num_states() {
        return Err(AgentError::Mismatch(format!(
            "state map {}→{} does not match environments {}→{}",
            map.num_high(),
            map.num_low(),
            hi.num_states(),
            lo.num_states()
        )));
    }
    let na = hi.num_actions();
    let side = LowSide {
        env: lo,
        map,
        sums: vec![0.0; lo.num_states() * na],
        counts: vec![0; lo.num_states() * na],
        touched: vec![false; lo.num_states()],
        rng: stream_rng(config.seed, LO_STREAM),
    };
    train(hi, Some(side), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{exact_q, MdpSpec};

    fn chain(p_term: f64) -> MdpSpec {
        MdpSpec::new(
            2,
            1,
            vec![1.0 - p_term, p_term, 0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            0.9,
            vec![1],
            0.0,
            1.0,
        )
        .unwrap()
    }

    /// Three states in a row, reward 1 per step, always ends after 3 steps.
    fn three_step_chain() -> MdpSpec {
        let mut p = vec![0.0; 4 * 4];
        p[1] = 1.0; // 0 -> 1
        p[4 + 2] = 1.0; // 1 -> 2
        p[8 + 3] = 1.0; // 2 -> 3
        p[12 + 3] = 1.0;
        MdpSpec::new(4, 1, p, vec![1.0, 1.0, 1.0, 0.0], vec![1.0, 0.0, 0.0, 0.0], 0.9, vec![3], 0.0, 1.0)
            .unwrap()
    }

    fn small_config(episodes: usize) -> AgentConfig {
        AgentConfig { discount: 0.9, episodes, eval_every: 50, eval_episodes: 20, seed: 5, ..Default::default() }
    }

    #[test]
    fn deterministic_chain_evaluation() {
        let spec = three_step_chain();
        let q = QTable::zeros(4, 1);
        let s = evaluate_policy(&spec, &q, 10, &mut stream_rng(0, 0), 100).unwrap();
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.std, 0.0);
    }

    #[test]
    fn mcrl_recovers_scalar_fixed_point() {
        let spec = chain(0.5);
        let out = mcrl_train(&spec, &small_config(2_000)).unwrap();
        let exact = exact_q(&spec, &out.policy).unwrap().get(0, 0);
        let est = out.q.get(0, 0);
        assert!((est - exact).abs() / exact < 0.05, "{est} vs {exact}");
    }

    #[test]
    fn training_is_deterministic() {
        let spec = chain(0.3);
        let a = mcrl_train(&spec, &small_config(300)).unwrap();
        let b = mcrl_train(&spec, &small_config(300)).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.q, b.q);
        let map = StateMap::identity(2);
        let c = mfmcrl_train(&spec, &spec, &map, &small_config(300)).unwrap();
        let d = mfmcrl_train(&spec, &spec, &map, &small_config(300)).unwrap();
        assert_eq!(c.history, d.history);
    }

    #[test]
    fn epsilon_one_keeps_uniform_policy() {
        let spec = three_step_chain();
        let cfg = AgentConfig { epsilon: 1.0, ..small_config(100) };
        let out = mcrl_train(&spec, &cfg).unwrap();
        assert!(out.policy.row(0).iter().all(|&p| (p - 1.0).abs() < 1e-15));
    }

    #[test]
    fn zero_m_falls_back_everywhere() {
        let spec = chain(0.3);
        let cfg = AgentConfig { m: 0, ..small_config(100) };
        let out = mfmcrl_train(&spec, &spec, &StateMap::identity(2), &cfg).unwrap();
        assert_eq!(trailing_vr_factor(&out.history, 100).unwrap(), 1.0);
        assert_eq!(out.history.last().unwrap().fallback_frac, 1.0);
    }

    #[test]
    fn window_longer_than_history_is_rejected() {
        let spec = chain(0.3);
        let out = mcrl_train(&spec, &small_config(50)).unwrap();
        assert!(matches!(trailing_vr_factor(&out.history, 51), Err(AgentError::Window { .. })));
    }

    #[test]
    fn mismatched_map_is_rejected() {
        let spec = chain(0.3);
        let err = mfmcrl_train(&spec, &spec, &StateMap::identity(3), &small_config(10)).unwrap_err();
        assert!(matches!(err, AgentError::Mismatch(_)));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let spec = chain(0.3);
        for cfg in [
            AgentConfig { discount: 1.0, ..small_config(10) },
            AgentConfig { epsilon: 0.0, ..small_config(10) },
            AgentConfig { eval_every: 0, ..small_config(10) },
        ] {
            assert!(matches!(mcrl_train(&spec, &cfg), Err(AgentError::Config(_))));
        }
    }

    #[test]
    fn algo_parses() {
        assert_eq!("MFMCRL".parse::<Algo>().unwrap(), Algo::Mfmcrl);
        assert!("td".parse::<Algo>().is_err());
    }
}
