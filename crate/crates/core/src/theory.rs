//! Concentration and policy-improvement bounds, plus Monte Carlo checks.
//!
//! The calculators are closed-form:
//!
//! * [`bernstein_tail`]: `P(|X̄ − μ| ≥ ξ) ≤ 2 exp(−nξ² / 4σ²)` for
//!   `0 ≤ ξ ≤ σ²/b`, where `|X − μ| ≤ b` almost surely;
//! * [`min_samples`]: the sample size `4σ²/ξ² · ln(2/δ)` that makes the
//!   tail at most `δ`, with `σ²` deflated by `1 − ρ²` for the control-variate
//!   estimator;
//! * [`improvement_bound`]: `Π_i Δ_i² / (Δ_i² + Var₁ + Var_i)`, a lower bound
//!   on the probability that the estimated greedy action is the true one.
//!
//! The verifiers estimate the corresponding probabilities by simulation.
//! Trials are split into fixed-size batches, each with its own random
//! stream, so results do not depend on the thread count.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::synthetic::snr_to_sigma;
use crate::estimators::{control_variate_from_stats, PairedMoments, DEFAULT_MIN_CV_SAMPLES};
use crate::mdp::{argmax, exact_q, sample_episode, Environment, MdpError, MdpSpec, DEFAULT_STEP_CAP};
use crate::parallel::{batch_sizes, map_indexed, sum_batches, Execution};
use crate::policy::{EpsilonSoftPolicy, Policy};
use crate::rng::{derive_seed, stream_rng, SimRng};

const BATCH: u64 = 1_000;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

fn positive(name: &str, v: f64) -> Result<(), TheoryError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(TheoryError::Param(format!("{name} must be positive, got {v}")))
    }
}

fn check_rho(rho: f64) -> Result<(), TheoryError> {
    if (-1.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(TheoryError::Param(format!("correlation {rho} outside [-1, 1]")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationParams {
    pub sigma2: f64,
    pub b: f64,
    pub xi: f64,
    pub delta: f64,
    pub n: u64,
}

impl ConcentrationParams {
    pub fn validate(&self) -> Result<(), TheoryError> {
        positive("sigma2", self.sigma2)?;
        positive("b", self.b)?;
        positive("xi", self.xi)?;
        positive("delta", self.delta)?;
        if self.n == 0 {
            return Err(TheoryError::Param("n must be positive".into()));
        }
        Ok(())
    }

    /// Largest deviation for which the tail bound holds.
    pub fn xi_max(&self) -> f64 {
        self.sigma2 / self.b
    }
}

/// A tail bound value and whether `ξ` lies in the region where it is proven.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub value: f64,
    pub valid: bool,
}

pub fn bernstein_tail(params: &ConcentrationParams) -> Result<TailBound, TheoryError> {
    params.validate()?;
    let n = params.n as f64;
    Ok(TailBound {
        value: 2.0 * (-n * params.xi * params.xi / (4.0 * params.sigma2)).exp(),
        valid: params.xi <= params.xi_max(),
    })
}

/// Smallest `n` with `4σ²(1 − ρ²)/ξ² · ln(2/δ) ≤ n`. `rho = None` gives the
/// single-fidelity size.
pub fn min_samples(sigma2: f64, xi: f64, delta: f64, rho: Option<f64>) -> Result<u64, TheoryError> {
    positive("sigma2", sigma2)?;
    positive("xi", xi)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(TheoryError::Param(format!("delta {delta} not in (0, 1)")));
    }
    let deflate = match rho {
        Some(r) => {
            check_rho(r)?;
            1.0 - r * r
        }
        None => 1.0,
    };
    let raw = 4.0 * deflate * sigma2 / (xi * xi) * (2.0 / delta).ln();
    // guard against 1475.9999999 style rounding
    Ok((raw - 1e-9).ceil().max(0.0) as u64)
}

/// Gaps and estimator variances at one state. Index 0 of `variances` and
/// `rhos` is the best action `a1`; `deltas[i]` pairs with index `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementGap {
    pub deltas: Vec<f64>,
    pub variances: Vec<f64>,
    pub rhos: Option<Vec<f64>>,
}

impl ImprovementGap {
    /// Orders actions by decreasing `q` (ties to the lower index) and
    /// computes the gaps. Returns the order alongside.
    pub fn from_q(
        q: &[f64],
        variances: &[f64],
        rhos: Option<&[f64]>,
    ) -> Result<(Self, Vec<usize>), TheoryError> {
        if q.len() < 2 || variances.len() != q.len() || rhos.is_some_and(|r| r.len() != q.len()) {
            return Err(TheoryError::Param("need matching per-action q, variances, rhos".into()));
        }
        let mut order: Vec<usize> = (0..q.len()).collect();
        order.sort_by(|&a, &b| q[b].total_cmp(&q[a]).then(a.cmp(&b)));
        let best = q[order[0]];
        let gap = Self {
            deltas: order[1..].iter().map(|&a| best - q[a]).collect(),
            variances: order.iter().map(|&a| variances[a]).collect(),
            rhos: rhos.map(|r| order.iter().map(|&a| r[a]).collect()),
        };
        Ok((gap, order))
    }

    pub fn min_gap(&self) -> f64 {
        self.deltas.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Lower bound on `P(a1 = argmax Q̂)`. With `multifidelity`, each variance is
/// scaled by its own `1 − ρ²`.
pub fn improvement_bound(gap: &ImprovementGap, multifidelity: bool) -> Result<f64, TheoryError> {
    let k = gap.deltas.len();
    if k == 0 || gap.variances.len() != k + 1 {
        return Err(TheoryError::Param(format!(
            "{k} gaps need {} variances, got {}",
            k + 1,
            gap.variances.len()
        )));
    }
    if let Some(d) = gap.deltas.iter().find(|&&d| !(d > 0.0)) {
        return Err(TheoryError::Param(format!("gap {d} is not strictly positive")));
    }
    if gap.variances.iter().any(|&v| !(v >= 0.0)) {
        return Err(TheoryError::Param("variances must be non-negative".into()));
    }
    let scale: Vec<f64> = if multifidelity {
        let rhos = gap
            .rhos
            .as_ref()
            .ok_or_else(|| TheoryError::Param("multifidelity bound needs correlations".into()))?;
        if rhos.len() != k + 1 {
            return Err(TheoryError::Param("one correlation per action required".into()));
        }
        rhos.iter().map(|&r| check_rho(r).map(|_| 1.0 - r * r)).collect::<Result<_, _>>()?
    } else {
        vec![1.0; k + 1]
    };
    let v1 = scale[0] * gap.variances[0];
    Ok(gap
        .deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let d2 = d * d;
            d2 / (d2 + v1 + scale[i + 1] * gap.variances[i + 1])
        })
        .product())
}

fn binomial_se(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Tail bound

/// Bounded distributions used to exercise the tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundedDist {
    Uniform { lo: f64, hi: f64 },
    Bernoulli { p: f64 },
}

impl BoundedDist {
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Bernoulli { p } => p,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            Self::Bernoulli { p } => p * (1.0 - p),
        }
    }

    /// Smallest `b` with `|X − μ| ≤ b` almost surely.
    pub fn b(&self) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => 0.5 * (hi - lo),
            Self::Bernoulli { p } => p.max(1.0 - p),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => rng.random_range(lo..hi),
            Self::Bernoulli { p } => f64::from(u8::from(rng.random::<f64>() < p)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub n: u64,
    pub xi: f64,
    pub trials: u64,
    pub empirical: f64,
    pub se: f64,
    pub bound: TailBound,
    pub pass: bool,
}

/// Empirical `P(|X̄_n − μ| ≥ ξ)` over `trials` independent sample means.
pub fn empirical_tail(
    dist: BoundedDist,
    n: u64,
    xi: f64,
    trials: u64,
    seed: u64,
    exec: Execution,
) -> Result<TailCheck, TheoryError> {
    let params = ConcentrationParams { sigma2: dist.variance(), b: dist.b(), xi, delta: 0.5, n };
    let bound = bernstein_tail(&params)?;
    if trials == 0 {
        return Err(TheoryError::Param("trials must be positive".into()));
    }
    let mu = dist.mean();
    let hits = sum_batches(trials, BATCH, exec, |batch, len| {
        let mut rng = stream_rng(seed, batch);
        (0..len)
            .filter(|_| {
                let s: f64 = (0..n).map(|_| dist.sample(&mut rng)).sum();
                (s / n as f64 - mu).abs() >= xi
            })
            .count() as u64
    });
    let empirical = hits as f64 / trials as f64;
    let se = binomial_se(empirical, trials);
    Ok(TailCheck {
        n,
        xi,
        trials,
        empirical,
        se,
        bound,
        pass: empirical <= bound.value + 3.0 * se,
    })
}

/// Twelve `(n, ξ)` points inside the validity region of `dist`.
pub fn tail_grid(dist: BoundedDist) -> Vec<(u64, f64)> {
    let xi_max = dist.variance() / dist.b();
    let mut grid = Vec::new();
    for n in [16, 64, 256] {
        for f in [0.25, 0.5, 0.75, 1.0] {
            grid.push((n, f * xi_max));
        }
    }
    grid
}

// ---------------------------------------------------------------------------
// Paired Gaussian returns

/// Jointly Gaussian `(G^hi, G^lo)` with correlation `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateReturns {
    pub mean_hi: f64,
    pub mean_lo: f64,
    pub sigma_hi: f64,
    pub sigma_lo: f64,
    pub rho: f64,
}

impl BivariateReturns {
    pub fn standard(rho: f64) -> Self {
        Self { mean_hi: 0.0, mean_lo: 0.0, sigma_hi: 1.0, sigma_lo: 1.0, rho }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let lo = self.rho * z1 + (1.0 - self.rho * self.rho).sqrt() * z2;
        (self.mean_hi + self.sigma_hi * z1, self.mean_lo + self.sigma_lo * lo)
    }

    /// Single- and multifidelity estimates from `n` fresh pairs. The
    /// multifidelity estimate uses the exact low-fidelity mean as reference.
    fn estimates<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> (f64, f64) {
        let mut m = PairedMoments::default();
        for _ in 0..n {
            let (h, l) = self.sample(rng);
            m.push(h, l);
        }
        let stats = m.stats().expect("n > 0");
        let mf = control_variate_from_stats(&stats, Some(self.mean_lo), DEFAULT_MIN_CV_SAMPLES);
        (stats.mean_hi, mf.q_value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRatio {
    pub rho: f64,
    pub n: u64,
    pub reps: u64,
    pub var_single: f64,
    pub var_multi: f64,
    pub ratio: f64,
    pub expected: f64,
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Repeats both estimators `reps` times on the same samples and compares
/// their spread with `1 − ρ²`.
pub fn variance_ratio(
    gen: BivariateReturns,
    n: u64,
    reps: u64,
    seed: u64,
    exec: Execution,
) -> Result<VarianceRatio, TheoryError> {
    if n < 3 || reps < 2 {
        return Err(TheoryError::Param("need n ≥ 3 and at least two repetitions".into()));
    }
    check_rho(gen.rho)?;
    let sizes = batch_sizes(reps, BATCH);
    let pairs: Vec<(f64, f64)> = map_indexed(sizes.len(), exec, |b| {
        let mut rng = stream_rng(seed, b as u64);
        (0..sizes[b]).map(|_| gen.estimates(n, &mut rng)).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    let (single, multi): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (var_single, var_multi) = (sample_variance(&single), sample_variance(&multi));
    Ok(VarianceRatio {
        rho: gen.rho,
        n,
        reps,
        var_single,
        var_multi,
        ratio: var_multi / var_single,
        expected: 1.0 - gen.rho * gen.rho,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Single,
    Multi,
}

/// Fraction of trials with `|Q̂ − μ_hi| ≤ ξ` at sample size `n`. Trial `i`
/// uses the same random stream for every `n`, so coverage is close to
/// monotone in `n`.
pub fn empirical_coverage(
    gen: BivariateReturns,
    n: u64,
    xi: f64,
    trials: u64,
    kind: EstimatorKind,
    seed: u64,
    exec: Execution,
) -> f64 {
    let hits = sum_batches(trials, BATCH, exec, |batch, len| {
        let mut rng = stream_rng(seed, batch);
        (0..len)
            .filter(|_| {
                let (single, multi) = gen.estimates(n, &mut rng);
                let est = match kind {
                    EstimatorKind::Single => single,
                    EstimatorKind::Multi => multi,
                };
                (est - gen.mean_hi).abs() <= xi
            })
            .count() as u64
    });
    hits as f64 / trials as f64
}

/// Smallest `n` whose empirical coverage reaches `1 − δ`, found by doubling
/// then bisection.
pub fn empirical_min_samples(
    gen: BivariateReturns,
    xi: f64,
    delta: f64,
    trials: u64,
    kind: EstimatorKind,
    seed: u64,
    exec: Execution,
) -> Result<u64, TheoryError> {
    positive("xi", xi)?;
    if !(delta > 0.0 && delta < 1.0) || trials == 0 {
        return Err(TheoryError::Param("delta must be in (0, 1) and trials positive".into()));
    }
    let ok = |n: u64| empirical_coverage(gen, n, xi, trials, kind, seed, exec) >= 1.0 - delta;
    let mut lo = 2; // coverage at lo is assumed short of the target
    let mut hi = 4;
    while !ok(hi) {
        lo = hi;
        hi *= 2;
        if hi > 1 << 24 {
            return Err(TheoryError::Param("coverage target not reached".into()));
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

// ---------------------------------------------------------------------------
// Greedy selection on small MDPs

/// Random episodic MDP with `num_states` non-terminal states plus one
/// terminal state (the last index). Every non-terminal next state has
/// probability at least `floor` under every `(s, a)`.
pub fn random_small_mdp<R: Rng + ?Sized>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    floor: f64,
    discount: f64,
) -> Result<MdpSpec, TheoryError> {
    if num_states == 0 || num_actions == 0 {
        return Err(TheoryError::Param("need at least one state and action".into()));
    }
    let ns = num_states + 1;
    let term = num_states;
    if !(floor >= 0.0 && floor * num_states as f64 <= 0.5) {
        return Err(TheoryError::Param(format!("floor {floor} too large")));
    }
    let mut p = vec![0.0; ns * num_actions * ns];
    let mut r = vec![0.0; ns * num_actions];
    for s in 0..num_states {
        for a in 0..num_actions {
            let row = &mut p[(s * num_actions + a) * ns..][..ns];
            let p_term: f64 = rng.random_range(0.2..0.5);
            let mass = 1.0 - p_term - floor * num_states as f64;
            let w: Vec<f64> = (0..num_states).map(|_| rng.random::<f64>()).collect();
            let total: f64 = w.iter().sum();
            for (j, wj) in w.iter().enumerate() {
                row[j] = floor + mass * wj / total;
            }
            row[term] = p_term;
            r[s * num_actions + a] = rng.random::<f64>();
        }
    }
    for a in 0..num_actions {
        p[(term * num_actions + a) * ns + term] = 1.0;
    }
    let mut init = vec![1.0 / num_states as f64; ns];
    init[term] = 0.0;
    Ok(MdpSpec::new(ns, num_actions, p, r, init, discount, vec![term], 0.0, 1.0)?)
}

/// Target state for a greedy-selection experiment. The low-fidelity
/// environment shares the high-fidelity state space and dynamics and
/// differs in rewards only.
#[derive(Debug, Clone)]
pub struct GreedySetup<P> {
    pub hi: MdpSpec,
    pub lo_rewards: Vec<f64>,
    pub policy: P,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotStats {
    pub var_hi: Vec<f64>,
    pub rho: Vec<f64>,
}

impl<P: Policy> GreedySetup<P> {
    fn paired_return<R: Rng + ?Sized>(&self, action: usize, rng: &mut R) -> Result<(f64, f64), TheoryError> {
        let na = self.hi.num_actions();
        let gamma = self.hi.discount();
        let t = sample_episode(&self.hi, &self.policy, rng, Some((self.target, action)), DEFAULT_STEP_CAP)?;
        let g_lo = t
            .steps
            .iter()
            .rev()
            .fold(0.0, |g, s| gamma * g + self.lo_rewards[s.state * na + s.action]);
        Ok((t.discounted_return(gamma), g_lo))
    }

    /// Exact `Q^hi(target, ·)` and the exact mean of the paired low return.
    pub fn oracle(&self) -> Result<(Vec<f64>, Vec<f64>), TheoryError> {
        let q_hi = exact_q(&self.hi, &self.policy)?;
        let lo = self.hi.with_rewards(self.lo_rewards.clone())?;
        let q_lo = exact_q(&lo, &self.policy)?;
        Ok((q_hi.row(self.target).to_vec(), q_lo.row(self.target).to_vec()))
    }

    /// Plug-in per-action return variance and correlation from `n` pilot
    /// returns per action.
    pub fn pilot(&self, n: usize, seed: u64) -> Result<PilotStats, TheoryError> {
        let mut rng = stream_rng(seed, u64::MAX);
        let mut out = PilotStats { var_hi: Vec::new(), rho: Vec::new() };
        for a in 0..self.hi.num_actions() {
            let mut m = PairedMoments::default();
            for _ in 0..n {
                let (h, l) = self.paired_return(a, &mut rng)?;
                m.push(h, l);
            }
            let s = m.stats().map_err(|e| TheoryError::Param(e.to_string()))?;
            out.var_hi.push(s.var_hi.unwrap_or(0.0));
            out.rho.push(s.rho.unwrap_or(0.0));
        }
        Ok(out)
    }

    /// `reps` independent `(Q̂^hi, Q̂^MFMC)` pairs at `(target, action)`, each
    /// from `n` paired returns with the exact low mean as reference.
    pub fn repeated_estimates(
        &self,
        action: usize,
        n: usize,
        reps: u64,
        seed: u64,
        exec: Execution,
    ) -> Result<Vec<(f64, f64)>, TheoryError> {
        let (_, q_lo) = self.oracle()?;
        let reference = q_lo[action];
        let sizes = batch_sizes(reps, BATCH);
        let batches = map_indexed(sizes.len(), exec, |b| -> Result<Vec<(f64, f64)>, TheoryError> {
            let mut rng: SimRng = stream_rng(seed, b as u64);
            let mut out = Vec::with_capacity(sizes[b] as usize);
            for _ in 0..sizes[b] {
                let mut m = PairedMoments::default();
                for _ in 0..n {
                    let (h, l) = self.paired_return(action, &mut rng)?;
                    m.push(h, l);
                }
                let stats = m.stats().map_err(|e| TheoryError::Param(e.to_string()))?;
                let mf = control_variate_from_stats(&stats, Some(reference), DEFAULT_MIN_CV_SAMPLES);
                out.push((stats.mean_hi, mf.q_value));
            }
            Ok(out)
        });
        let mut all = Vec::with_capacity(reps as usize);
        for b in batches {
            all.extend(b?);
        }
        Ok(all)
    }

    /// Counts, over `trials`, how often each estimator's argmax at the target
    /// equals the true greedy action. Both estimators see the same samples.
    pub fn greedy_hits(
        &self,
        n_per_action: u64,
        trials: u64,
        seed: u64,
        exec: Execution,
    ) -> Result<(u64, u64), TheoryError> {
        let (q_hi, q_lo) = self.oracle()?;
        let best = argmax(&q_hi);
        let na = self.hi.num_actions();
        let sizes = batch_sizes(trials, BATCH);
        let per_batch = map_indexed(sizes.len(), exec, |b| -> Result<(u64, u64), TheoryError> {
            let mut rng: SimRng = stream_rng(seed, b as u64);
            let (mut single, mut multi) = (0, 0);
            let mut est_s = vec![0.0; na];
            let mut est_m = vec![0.0; na];
            for _ in 0..sizes[b] {
                for a in 0..na {
                    let mut m = PairedMoments::default();
                    for _ in 0..n_per_action {
                        let (h, l) = self.paired_return(a, &mut rng)?;
                        m.push(h, l);
                    }
                    let stats = m.stats().map_err(|e| TheoryError::Param(e.to_string()))?;
                    est_s[a] = stats.mean_hi;
                    est_m[a] = control_variate_from_stats(&stats, Some(q_lo[a]), DEFAULT_MIN_CV_SAMPLES)
                        .q_value;
                }
                single += u64::from(argmax(&est_s) == best);
                multi += u64::from(argmax(&est_m) == best);
            }
            Ok((single, multi))
        });
        let mut totals = (0, 0);
        for r in per_batch {
            let (s, m) = r?;
            totals.0 += s;
            totals.1 += m;
        }
        Ok(totals)
    }
}

/// Empirical probability that the chosen estimator picks the true greedy
/// action at the target state with `n_per_action` returns per action.
pub fn empirical_greedy_prob<P: Policy>(
    setup: &GreedySetup<P>,
    n_per_action: u64,
    trials: u64,
    kind: EstimatorKind,
    seed: u64,
    exec: Execution,
) -> Result<f64, TheoryError> {
    let (s, m) = setup.greedy_hits(n_per_action, trials, seed, exec)?;
    let hits = match kind {
        EstimatorKind::Single => s,
        EstimatorKind::Multi => m,
    };
    Ok(hits as f64 / trials as f64)
}

/// One random-MDP instance of the greedy-selection check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyInstance {
    pub index: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub min_gap: f64,
    pub min_rho: f64,
    pub bound_single: f64,
    pub bound_multi: f64,
    pub prob_single: f64,
    pub prob_multi: f64,
    pub se_single: f64,
    pub se_multi: f64,
}

impl GreedyInstance {
    pub fn single_within_bound(&self) -> bool {
        self.prob_single >= self.bound_single - 3.0 * self.se_single
    }

    pub fn multi_within_bound(&self) -> bool {
        self.prob_multi >= self.bound_multi - 3.0 * self.se_multi
    }

    pub fn multi_not_worse(&self) -> bool {
        self.prob_multi >= self.prob_single
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyStudyConfig {
    pub instances: usize,
    pub n_per_action: u64,
    pub trials: u64,
    pub pilot: usize,
    /// Reward SNR of the low-fidelity copy.
    pub snr_db: f64,
    /// Instances whose smallest gap is below this are redrawn.
    pub min_gap: f64,
    pub floor: f64,
    pub discount: f64,
    pub seed: u64,
}

impl Default for GreedyStudyConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            n_per_action: 10,
            trials: 10_000,
            pilot: 4_000,
            snr_db: 10.0,
            min_gap: 0.02,
            floor: 0.02,
            discount: 0.9,
            seed: 7,
        }
    }
}

/// Draws random small MDPs with strict gaps at state 0 and compares the
/// empirical greedy-selection probabilities with the bounds.
pub fn greedy_study(cfg: &GreedyStudyConfig, exec: Execution) -> Result<Vec<GreedyInstance>, TheoryError> {
    let mut out = Vec::with_capacity(cfg.instances);
    let mut draw = 0u64;
    while out.len() < cfg.instances {
        draw += 1;
        if draw > 100 * cfg.instances as u64 + 100 {
            return Err(TheoryError::Param("could not draw instances with strict gaps".into()));
        }
        let mut rng = stream_rng(derive_seed(cfg.seed, &[draw]), 0);
        let ns = rng.random_range(3..=5);
        let na = rng.random_range(2..=4);
        let hi = random_small_mdp(&mut rng, ns, na, cfg.floor, cfg.discount)?;
        let power = hi.rewards().iter().map(|r| r * r).sum::<f64>() / (ns * na) as f64;
        let sigma = snr_to_sigma(cfg.snr_db, power).map_err(|e| TheoryError::Param(e.to_string()))?;
        let lo_rewards: Vec<f64> = hi
            .rewards()
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                if hi.is_terminal(i / na) {
                    0.0
                } else {
                    r + sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng)
                }
            })
            .collect::<Vec<f64>>();
        let setup = GreedySetup {
            hi,
            lo_rewards,
            policy: EpsilonSoftPolicy::uniform(ns + 1, na, 1.0),
            target: 0,
        };
        let (q_hi, _) = setup.oracle()?;
        let pilot = setup.pilot(cfg.pilot, derive_seed(cfg.seed, &[draw, 1]))?;
        let n = cfg.n_per_action as f64;
        let var_q: Vec<f64> = pilot.var_hi.iter().map(|v| v / n).collect();
        let (gap, _) = ImprovementGap::from_q(&q_hi, &var_q, Some(&pilot.rho))?;
        if gap.min_gap() < cfg.min_gap {
            continue;
        }
        let bound_single = improvement_bound(&gap, false)?;
        let bound_multi = improvement_bound(&gap, true)?;
        let (hs, hm) = setup.greedy_hits(cfg.n_per_action, cfg.trials, derive_seed(cfg.seed, &[draw, 2]), exec)?;
        let (ps, pm) = (hs as f64 / cfg.trials as f64, hm as f64 / cfg.trials as f64);
        out.push(GreedyInstance {
            index: out.len(),
            num_states: ns + 1,
            num_actions: na,
            min_gap: gap.min_gap(),
            min_rho: pilot.rho.iter().copied().fold(f64::INFINITY, f64::min),
            bound_single,
            bound_multi,
            prob_single: ps,
            prob_multi: pm,
            se_single: binomial_se(ps, cfg.trials),
            se_multi: binomial_se(pm, cfg.trials),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub group: String,
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
}

impl VerificationReport {
    fn push(&mut self, group: &str, name: String, value: f64, threshold: f64, pass: bool) {
        self.checks.push(Check { group: group.into(), name, value, threshold, pass });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:<40} {:>12} {:>12}  result", "group", "check", "value", "threshold");
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<12} {:<40} {:>12.6} {:>12.6}  {}",
                c.group,
                c.name,
                c.value,
                c.threshold,
                if c.pass { "PASS" } else { "FAIL" }
            );
        }
        let passed = self.checks.iter().filter(|c| c.pass).count();
        let _ = writeln!(s, "{passed}/{} checks passed", self.checks.len());
        s
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in &self.checks {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sizes of the checks run by [`run_verification`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub tail_trials: u64,
    pub variance_reps: u64,
    pub coverage_trials: u64,
    pub greedy: GreedyStudyConfig,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            tail_trials: 20_000,
            variance_reps: 5_000,
            coverage_trials: 4_000,
            greedy: GreedyStudyConfig { instances: 10, trials: 2_000, pilot: 2_000, ..Default::default() },
            seed: 2024,
        }
    }
}

/// Runs every bound check and collects pass/fail lines.
pub fn run_verification(cfg: &VerifyConfig, exec: Execution) -> Result<VerificationReport, TheoryError> {
    let mut report = VerificationReport::default();

    let sample = ConcentrationParams { sigma2: 1.0, b: 1.0, xi: 0.5, delta: 0.05, n: 64 };
    let t = bernstein_tail(&sample)?;
    let expect = 2.0 * (-4.0f64).exp();
    report.push("tail", "closed form σ²=1 ξ=0.5 n=64".into(), t.value, expect, (t.value - expect).abs() < 1e-12);

    for dist in [BoundedDist::Uniform { lo: -1.0, hi: 1.0 }, BoundedDist::Bernoulli { p: 0.3 }] {
        let label = match dist {
            BoundedDist::Uniform { .. } => "uniform",
            BoundedDist::Bernoulli { .. } => "bernoulli",
        };
        for (i, (n, xi)) in tail_grid(dist).into_iter().enumerate() {
            let c = empirical_tail(dist, n, xi, cfg.tail_trials, derive_seed(cfg.seed, &[1, i as u64]), exec)?;
            report.push(
                "tail",
                format!("{label} n={n} ξ={xi:.4}"),
                c.empirical,
                c.bound.value + 3.0 * c.se,
                c.pass,
            );
        }
    }

    let n1 = min_samples(1.0, 0.1, 0.05, None)?;
    report.push("samples", "n_min σ²=1 ξ=0.1 δ=0.05".into(), n1 as f64, 1476.0, n1 == 1476);
    let n2 = min_samples(1.0, 0.1, 0.05, Some(0.9))?;
    let ratio = n2 as f64 / n1 as f64;
    report.push("samples", "n_min ratio at ρ=0.9".into(), ratio, 0.19, (ratio - 0.19).abs() < 1e-3);

    let gen = BivariateReturns::standard(0.9);
    let seed = derive_seed(cfg.seed, &[2]);
    let es = empirical_min_samples(gen, 0.1, 0.05, cfg.coverage_trials, EstimatorKind::Single, seed, exec)?;
    let em = empirical_min_samples(gen, 0.1, 0.05, cfg.coverage_trials, EstimatorKind::Multi, seed, exec)?;
    let r = em as f64 / es as f64;
    report.push("samples", "empirical n ratio at ρ=0.9".into(), r, 0.19, (r - 0.19).abs() <= 0.25 * 0.19);

    for (i, rho) in [0.0, 0.5, 0.8, 0.95].into_iter().enumerate() {
        let v = variance_ratio(
            BivariateReturns::standard(rho),
            30,
            cfg.variance_reps,
            derive_seed(cfg.seed, &[3, i as u64]),
            exec,
        )?;
        report.push("variance", format!("Var ratio ρ={rho}"), v.ratio, v.expected, (v.ratio - v.expected).abs() <= 0.05);
    }

    let study = greedy_study(&GreedyStudyConfig { seed: derive_seed(cfg.seed, &[4]), ..cfg.greedy }, exec)?;
    let k = study.len() as f64;
    let single_ok = study.iter().filter(|i| i.single_within_bound()).count() as f64 / k;
    let multi_ok = study.iter().filter(|i| i.multi_within_bound()).count() as f64 / k;
    report.push("greedy", "single ≥ bound, fraction".into(), single_ok, 0.95, single_ok >= 0.95);
    report.push("greedy", "multi ≥ bound, fraction".into(), multi_ok, 0.95, multi_ok >= 0.95);
    let correlated: Vec<_> = study.iter().filter(|i| i.min_rho >= 0.8).collect();
    let better = if correlated.is_empty() {
        0.0
    } else {
        correlated.iter().filter(|i| i.multi_not_worse()).count() as f64 / correlated.len() as f64
    };
    report.push("greedy", format!("multi ≥ single, {} with ρ≥0.8", correlated.len()), better, 0.9, better >= 0.9);

    Ok(report)
}
