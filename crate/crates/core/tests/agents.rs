use mfrl_core::agents::{mcrl_train, mfmcrl_train, trailing_vr_factor, AgentConfig, TrainingOutcome};
use mfrl_core::envs::synthetic::{derive_low_fidelity, generate_high_fidelity, NoiseConfig, RandomMdpConfig};
use mfrl_core::mdp::{exact_q, MdpSpec, QTable, StateMap};
use mfrl_core::policy::EpsilonSoftPolicy;
use mfrl_core::rng::stream_rng;

fn random_mdp(num_states: usize, num_actions: usize, discount: f64, seed: u64) -> MdpSpec {
    let cfg = RandomMdpConfig { num_states, num_actions, terminal_prob: 0.1, discount, seed };
    generate_high_fidelity(&cfg, &mut stream_rng(seed, 0)).unwrap()
}

fn quick(episodes: usize, seed: u64) -> AgentConfig {
    AgentConfig { episodes, eval_every: episodes, eval_episodes: 20, seed, ..AgentConfig::default() }
}

fn train_same(hi: &MdpSpec, cfg: &AgentConfig) -> TrainingOutcome {
    mfmcrl_train(hi, hi, &StateMap::identity(hi.num_states()), cfg).unwrap()
}

#[test]
fn each_pair_is_updated_once_per_episode() {
    // one state, one action, so every episode revisits the same pair
    let spec = MdpSpec::new(2, 1, vec![0.3, 0.7, 0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0], 0.9, vec![1], 0.0, 1.0)
        .unwrap();
    let cfg = AgentConfig { m: 2, ..quick(400, 1) };
    let mf = train_same(&spec, &cfg);
    assert_eq!(mf.ledger.rets_h(0, 0).len(), 400);
    assert_eq!(mf.ledger.rets_l(0, 0).len(), 400);
    assert!(mf.history.episodes.iter().all(|e| e.updates == 1));
    // expected length is 1 / 0.7 steps, so revisits are common
    assert!(mf.history.high_steps > 500, "{}", mf.history.high_steps);
    let mc = mcrl_train(&spec, &cfg).unwrap();
    assert_eq!(mc.ledger.rets_h(0, 0).len(), 400);
}

#[test]
fn paired_lists_stay_synchronized() {
    let hi = random_mdp(20, 3, 0.99, 2);
    let lo = derive_low_fidelity(&hi, &NoiseConfig::both(0.0), &mut stream_rng(2, 1)).unwrap();
    let out = mfmcrl_train(&hi, &lo, &StateMap::identity(hi.num_states()), &quick(300, 2)).unwrap();
    assert!(out.ledger.is_synchronized());
    let total: usize = (0..20)
        .flat_map(|s| (0..3).map(move |a| (s, a)))
        .map(|(s, a)| {
            assert_eq!(out.ledger.rets_h(s, a).len(), out.ledger.rets_l(s, a).len());
            out.ledger.rets_h(s, a).len()
        })
        .sum();
    let updates: u32 = out.history.episodes.iter().map(|e| e.updates).sum();
    assert_eq!(total, updates as usize);
    assert!(out.policy.is_epsilon_soft());
}

fn squared_error(q: &QTable, truth: &QTable, spec: &MdpSpec) -> f64 {
    let term = spec.terminal_states()[0];
    let mut sum = 0.0;
    for s in (0..spec.num_states()).filter(|&s| s != term) {
        for a in 0..spec.num_actions() {
            sum += (q.get(s, a) - truth.get(s, a)).powi(2);
        }
    }
    sum
}

#[test]
fn perfect_low_fidelity_reduces_estimation_error() {
    // ε = 1 keeps the policy fixed, so both agents estimate the same Q
    let hi = random_mdp(15, 2, 0.9, 3);
    let truth = exact_q(&hi, &EpsilonSoftPolicy::uniform(hi.num_states(), 2, 1.0)).unwrap();
    let diffs: Vec<f64> = (0..12)
        .map(|seed| {
            let cfg = AgentConfig { epsilon: 1.0, discount: 0.9, m: 10, ..quick(200, seed) };
            let mc = mcrl_train(&hi, &cfg).unwrap();
            let mf = train_same(&hi, &cfg);
            squared_error(&mc.q, &truth, &hi) - squared_error(&mf.q, &truth, &hi)
        })
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    // one-sided paired t-test, 11 degrees of freedom, 5% level
    let t = mean / (sd / n.sqrt());
    assert!(t > 1.796, "t = {t}, diffs {diffs:?}");
}

#[test]
fn zero_noise_gives_small_trailing_factor() {
    let hi = random_mdp(50, 4, 0.99, 4);
    let out = train_same(&hi, &quick(600, 4));
    let vr = trailing_vr_factor(&out.history, 500).unwrap();
    assert!(vr < 0.2, "{vr}");
}

#[test]
fn higher_snr_gives_lower_trailing_factor() {
    let hi = random_mdp(50, 4, 0.99, 5);
    let factor = |snr: f64| {
        let lo = derive_low_fidelity(&hi, &NoiseConfig::both(snr), &mut stream_rng(5, 1)).unwrap();
        let out = mfmcrl_train(&hi, &lo, &StateMap::identity(hi.num_states()), &quick(400, 5)).unwrap();
        trailing_vr_factor(&out.history, 300).unwrap()
    };
    assert!(factor(10.0) < factor(-10.0));
}

#[test]
fn mcrl_reports_unit_factor_and_no_fallbacks() {
    let hi = random_mdp(10, 2, 0.99, 6);
    let out = mcrl_train(&hi, &quick(100, 6)).unwrap();
    let cp = out.history.last().unwrap();
    assert_eq!((cp.vr_factor, cp.fallback_frac), (1.0, 0.0));
}
