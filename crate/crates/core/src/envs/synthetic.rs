//! Random high-fidelity MDPs and noisy low-fidelity counterparts.
//!
//! High-fidelity rows are a uniform vector multiplied by a random binary
//! mask, scaled so the non-terminal successors carry `1 − p_t` and the single
//! absorbing terminal state (index `num_states`) carries `p_t`. Low-fidelity
//! models add Gaussian noise whose variance is set from a target SNR in dB.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::MdpSpec;

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("terminal probability must lie in (0, 1), got {0}")]
    TerminalProb(f64),
    #[error("need at least one non-terminal state and one action")]
    EmptySpace,
    #[error("signal power must be positive, got {0}")]
    SignalPower(f64),
    #[error("SNR must not be NaN")]
    Snr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomMdpConfig {
    /// Non-terminal state count; the generated spec has one more state.
    pub num_states: usize,
    pub num_actions: usize,
    pub terminal_prob: f64,
    pub discount: f64,
    pub seed: u64,
}

impl Default for RandomMdpConfig {
    fn default() -> Self {
        Self { num_states: 50, num_actions: 4, terminal_prob: 0.1, discount: 0.99, seed: 0 }
    }
}

impl RandomMdpConfig {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        if !(self.terminal_prob > 0.0 && self.terminal_prob < 1.0) {
            return Err(SyntheticError::TerminalProb(self.terminal_prob));
        }
        if self.num_states == 0 || self.num_actions == 0 {
            return Err(SyntheticError::EmptySpace);
        }
        Ok(())
    }
}

/// Target SNRs in dB. `f64::INFINITY` disables the corresponding noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub snr_p_db: f64,
    pub snr_r_db: f64,
}

impl NoiseConfig {
    pub fn both(snr_db: f64) -> Self {
        Self { snr_p_db: snr_db, snr_r_db: snr_db }
    }

    pub fn noiseless() -> Self {
        Self::both(f64::INFINITY)
    }
}

/// Noise standard deviation giving `snr_db` against `signal_power`:
/// `sqrt(signal_power / 10^(snr_db / 10))`.
pub fn snr_to_sigma(snr_db: f64, signal_power: f64) -> Result<f64, SyntheticError> {
    if snr_db.is_nan() {
        return Err(SyntheticError::Snr);
    }
    if !(signal_power > 0.0) {
        return Err(SyntheticError::SignalPower(signal_power));
    }
    Ok((signal_power / 10f64.powf(snr_db / 10.0)).sqrt())
}

fn draw_mask<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<bool> {
    loop {
        let reference: f64 = rng.random();
        let mask: Vec<bool> = (0..len).map(|_| rng.random::<f64>() > reference).collect();
        if mask.iter().any(|&m| m) {
            return mask;
        }
    }
}

/// Random high-fidelity MDP. Terminal state is the last index.
pub fn generate_high_fidelity<R: Rng + ?Sized>(
    config: &RandomMdpConfig,
    rng: &mut R,
) -> Result<MdpSpec, SyntheticError> {
    config.validate()?;
    let nt = config.num_states;
    let na = config.num_actions;
    let ns = nt + 1;
    let terminal = nt;
    let mut transitions = vec![0.0; ns * na * ns];
    let mut rewards = vec![0.0; ns * na];
    for s in 0..nt {
        for a in 0..na {
            let weights: Vec<f64> = (0..nt).map(|_| rng.random::<f64>()).collect();
            let mut mask = draw_mask(nt, rng);
            let mut row: Vec<f64> = weights
                .iter()
                .zip(&mask)
                .map(|(&w, &m)| if m { w } else { 0.0 })
                .collect();
            // masked-in entries can still all be zero-weight in principle
            while row.iter().sum::<f64>() <= 0.0 {
                mask = draw_mask(nt, rng);
                row = weights
                    .iter()
                    .zip(&mask)
                    .map(|(&w, &m)| if m { w } else { 0.0 })
                    .collect();
            }
            let total: f64 = row.iter().sum();
            let base = (s * na + a) * ns;
            for (next, w) in row.into_iter().enumerate() {
                transitions[base + next] = w / total * (1.0 - config.terminal_prob);
            }
            transitions[base + terminal] = config.terminal_prob;
            let pick = rng.random_range(0..nt);
            let u: f64 = rng.random();
            rewards[s * na + a] = if mask[pick] { u } else { 0.0 };
        }
    }
    for a in 0..na {
        transitions[(terminal * na + a) * ns + terminal] = 1.0;
    }
    let mut initial = vec![1.0 / nt as f64; ns];
    initial[terminal] = 0.0;
    let spec = MdpSpec::new(
        ns,
        na,
        transitions,
        rewards,
        initial,
        config.discount,
        vec![terminal],
        0.0,
        1.0,
    )
    .expect("generator produces consistent shapes");
    Ok(spec)
}

fn mean_square(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Low-fidelity MDP `P^lo = P^hi + P_N`, `R^lo = R^hi + R_N`.
///
/// Noise is added to every entry of the non-terminal transition rows and to
/// the non-terminal rewards. Transition rows are then clipped at zero and
/// renormalised (terminal column included). Rewards are left unclipped and
/// the reward bounds widen to the observed range. Terminal rows are never
/// touched. An infinite SNR leaves the corresponding part bit-identical.
pub fn derive_low_fidelity<R: Rng + ?Sized>(
    hi: &MdpSpec,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<MdpSpec, SyntheticError> {
    let ns = hi.num_states();
    let na = hi.num_actions();
    let terminal: Vec<bool> = (0..ns).map(|s| hi.terminal_states().contains(&s)).collect();
    let live_states: Vec<usize> = (0..ns).filter(|&s| !terminal[s]).collect();
    let mut lo = hi.clone();

    let p_power = mean_square(
        live_states
            .iter()
            .flat_map(|&s| (0..na).flat_map(move |a| hi.transition_row(s, a).iter().copied())),
    );
    let sigma_p = if noise.snr_p_db == f64::INFINITY || p_power == 0.0 {
        0.0
    } else {
        snr_to_sigma(noise.snr_p_db, p_power)?
    };
    if sigma_p > 0.0 {
        let trans = lo.transitions_mut();
        for &s in &live_states {
            for a in 0..na {
                let row = &mut trans[(s * na + a) * ns..(s * na + a + 1) * ns];
                for p in row.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *p = (*p + sigma_p * z).max(0.0);
                }
                let mut total: f64 = row.iter().sum();
                while total <= 0.0 {
                    // every entry clipped away: redraw the row's noise
                    for (p, &orig) in row.iter_mut().zip(hi.transition_row(s, a)) {
                        let z: f64 = StandardNormal.sample(rng);
                        *p = (orig + sigma_p * z).max(0.0);
                    }
                    total = row.iter().sum();
                }
                row.iter_mut().for_each(|p| *p /= total);
            }
        }
    }

    let r_power = mean_square(
        live_states
            .iter()
            .flat_map(|&s| (0..na).map(move |a| hi.reward_at(s, a))),
    );
    let sigma_r = if noise.snr_r_db == f64::INFINITY || r_power == 0.0 {
        0.0
    } else {
        snr_to_sigma(noise.snr_r_db, r_power)?
    };
    if sigma_r > 0.0 {
        let rewards = lo.rewards_mut();
        for &s in &live_states {
            for a in 0..na {
                let z: f64 = StandardNormal.sample(rng);
                rewards[s * na + a] += sigma_r * z;
            }
        }
        let (rmin, rmax) = hi.reward_bounds();
        let (lo_min, lo_max) = lo
            .rewards()
            .iter()
            .fold((rmin, rmax), |(a, b), &r| (a.min(r), b.max(r)));
        lo = lo.with_reward_bounds(lo_min, lo_max);
    }
    Ok(lo)
}

/// Mean absolute difference between the two models over non-terminal
/// entries: `(E|P^hi − P^lo|, E|R^hi − R^lo|)`.
pub fn mean_abs_perturbation(hi: &MdpSpec, lo: &MdpSpec) -> (f64, f64) {
    let ns = hi.num_states();
    let na = hi.num_actions();
    let live: Vec<usize> = (0..ns).filter(|s| !hi.terminal_states().contains(s)).collect();
    let (mut dp, mut np, mut dr) = (0.0, 0usize, 0.0);
    for &s in &live {
        for a in 0..na {
            for (x, y) in hi.transition_row(s, a).iter().zip(lo.transition_row(s, a)) {
                dp += (x - y).abs();
                np += 1;
            }
            dr += (hi.reward_at(s, a) - lo.reward_at(s, a)).abs();
        }
    }
    let nr = (live.len() * na).max(1);
    (dp / np.max(1) as f64, dr / nr as f64)
}
