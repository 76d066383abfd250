use proptest::prelude::*;

use mfrl_core::envs::nas::{map_high_to_low, ArchState, NasEnv, NasEnvConfig, NasSpace, RewardTable, NUM_ARCHS};
use mfrl_core::envs::synthetic::{generate_high_fidelity, RandomMdpConfig};
use mfrl_core::estimators::{summary_stats, PairedMoments, PairedReturns};
use mfrl_core::mdp::{argmax, bellman_residual, discounted_returns, exact_q, Environment};
use mfrl_core::policy::EpsilonSoftPolicy;
use mfrl_core::rng::stream_rng;
use mfrl_core::theory::{improvement_bound, min_samples, random_small_mdp, ImprovementGap};

fn flat_table() -> RewardTable {
    let col: Vec<f64> = (0..NUM_ARCHS).map(|i| (i % 97) as f64 / 96.0).collect();
    RewardTable::new(vec![200], vec![col]).unwrap()
}

fn arch_state(edges: [u8; 6], pointer: u8) -> ArchState {
    ArchState { edges, pointer }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backward_returns_match_forward_sums(
        rewards in prop::collection::vec(-1.0f64..1.0, 1..60),
        gamma in 0.0f64..0.999,
    ) {
        let fast = discounted_returns(&rewards, gamma);
        for t in 0..rewards.len() {
            let mut naive = 0.0;
            for k in t..rewards.len() {
                naive += gamma.powi((k - t) as i32) * rewards[k];
            }
            prop_assert!((fast[t] - naive).abs() <= 1e-12);
        }
    }

    #[test]
    fn exact_q_has_tiny_bellman_residual(
        seed in any::<u64>(),
        ns in 1usize..6,
        na in 1usize..4,
        eps in 0.05f64..1.0,
        gamma in 0.0f64..0.99,
    ) {
        let mut rng = stream_rng(seed, 0);
        let spec = random_small_mdp(&mut rng, ns, na, 0.0, gamma).unwrap();
        let mut policy = EpsilonSoftPolicy::uniform(ns + 1, na, eps);
        for s in 0..ns {
            policy.make_greedy(s, (seed as usize + s) % na);
        }
        let q = exact_q(&spec, &policy).unwrap();
        prop_assert!(bellman_residual(&spec, &policy, &q) <= 1e-10);
    }

    #[test]
    fn streaming_moments_match_two_pass(
        pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..200),
    ) {
        let mut m = PairedMoments::default();
        for &(h, l) in &pairs {
            m.push(h, l);
        }
        let s = m.stats().unwrap();
        let n = pairs.len() as f64;
        let mh = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let ml = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let vh = pairs.iter().map(|p| (p.0 - mh).powi(2)).sum::<f64>() / (n - 1.0);
        let vl = pairs.iter().map(|p| (p.1 - ml).powi(2)).sum::<f64>() / (n - 1.0);
        let c = pairs.iter().map(|p| (p.0 - mh) * (p.1 - ml)).sum::<f64>() / (n - 1.0);
        let tol = |x: f64| 1e-9 * (1.0 + x.abs());
        prop_assert!((s.mean_hi - mh).abs() <= tol(mh));
        prop_assert!((s.mean_lo - ml).abs() <= tol(ml));
        prop_assert!((s.var_hi.unwrap() - vh).abs() <= tol(vh));
        prop_assert!((s.var_lo.unwrap() - vl).abs() <= tol(vl));
        prop_assert!((s.cov.unwrap() - c).abs() <= tol(c));
        let (h, l): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let batch = summary_stats(&PairedReturns::new(h, l).unwrap()).unwrap();
        prop_assert_eq!(batch, s);
        if let Some(rho) = s.rho {
            prop_assert!((-1.0..=1.0).contains(&rho));
        }
    }

    #[test]
    fn policy_stays_epsilon_soft(
        eps in 0.01f64..=1.0,
        na in 1usize..8,
        edits in prop::collection::vec((0usize..10, 0usize..8, any::<bool>()), 0..100),
    ) {
        let mut policy = EpsilonSoftPolicy::uniform(10, na, eps);
        for (s, a, greedy) in edits {
            if greedy {
                policy.make_greedy(s, a % na);
            } else {
                policy.make_uniform(s);
            }
            prop_assert!(policy.is_epsilon_soft());
        }
    }

    #[test]
    fn reward_shift_keeps_greedy_actions(seed in any::<u64>(), shift in -3.0f64..3.0) {
        // constant terminal probability makes the expected discounted horizon equal for every pair
        let cfg = RandomMdpConfig { num_states: 12, num_actions: 3, terminal_prob: 0.2, discount: 0.9, seed };
        let spec = generate_high_fidelity(&cfg, &mut stream_rng(seed, 0)).unwrap();
        let na = spec.num_actions();
        let shifted: Vec<f64> = spec
            .rewards()
            .iter()
            .enumerate()
            .map(|(i, &r)| if spec.is_terminal(i / na) { 0.0 } else { r + shift })
            .collect();
        let moved = spec.with_rewards(shifted).unwrap();
        let policy = EpsilonSoftPolicy::uniform(spec.num_states(), na, 0.5);
        let q = exact_q(&spec, &policy).unwrap();
        let q2 = exact_q(&moved, &policy).unwrap();
        let offset = shift / (1.0 - 0.9 * 0.8);
        for s in 0..12 {
            for a in 0..na {
                prop_assert!((q2.get(s, a) - q.get(s, a) - offset).abs() < 1e-9);
            }
            prop_assert_eq!(argmax(q.row(s)), argmax(q2.row(s)));
        }
    }

    #[test]
    fn min_samples_is_monotone(
        sigma2 in 0.1f64..5.0,
        xi in 0.05f64..1.0,
        delta in 0.01f64..0.5,
        r1 in 0.0f64..0.99,
        r2 in 0.0f64..0.99,
    ) {
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        let n_lo = min_samples(sigma2, xi, delta, Some(lo)).unwrap();
        let n_hi = min_samples(sigma2, xi, delta, Some(hi)).unwrap();
        prop_assert!(n_hi <= n_lo);
        prop_assert!(min_samples(sigma2, xi * 1.5, delta, None).unwrap() <= min_samples(sigma2, xi, delta, None).unwrap());
        prop_assert_eq!(min_samples(sigma2, xi, delta, Some(0.0)).unwrap(), min_samples(sigma2, xi, delta, None).unwrap());
    }

    #[test]
    fn multifidelity_bound_dominates(
        deltas in prop::collection::vec(0.01f64..2.0, 1..4),
        var in 0.01f64..2.0,
        rho in -1.0f64..=1.0,
    ) {
        let k = deltas.len() + 1;
        let gap = ImprovementGap { deltas, variances: vec![var; k], rhos: Some(vec![rho; k]) };
        let single = improvement_bound(&gap, false).unwrap();
        let multi = improvement_bound(&gap, true).unwrap();
        prop_assert!((0.0..=1.0).contains(&single));
        prop_assert!(multi >= single - 1e-12 && multi <= 1.0);
    }

    #[test]
    fn nas_step_edits_at_most_one_edge(
        edges in prop::array::uniform6(0u8..5),
        pointer in 0u8..6,
        action in 0usize..5,
        seed in any::<u64>(),
    ) {
        let env = NasEnv::new(&flat_table(), &NasEnvConfig { fidelity_epoch: 200, restricted: false, discount: 0.99 }).unwrap();
        let s = arch_state(edges, pointer);
        let (next, _) = env.step_arch(s, action, &mut stream_rng(seed, 0)).unwrap();
        let changed = (0..6).filter(|&e| next.edges[e] != edges[e]).count();
        prop_assert!(changed <= 1);
        prop_assert_eq!(next.edges[pointer as usize], action as u8);
        prop_assert!(next.pointer <= 6);
    }

    #[test]
    fn mapping_commutes_with_edits(
        edges in prop::array::uniform6(0u8..5),
        k in 1u8..6,
        action in 0usize..5,
        seed in any::<u64>(),
    ) {
        let table = flat_table();
        let hi = NasEnv::new(&table, &NasEnvConfig { fidelity_epoch: 200, restricted: false, discount: 0.99 }).unwrap();
        let lo = NasEnv::new(&table, &NasEnvConfig { fidelity_epoch: 200, restricted: true, discount: 0.99 }).unwrap();
        let s = arch_state(edges, k);
        let (hi_next, _) = hi.step_arch(s, action, &mut stream_rng(seed, 0)).unwrap();
        let mapped = map_high_to_low(&s);
        prop_assert_eq!(mapped.pointer, k - 1);
        let (lo_next, _) = lo.step_arch(mapped, action, &mut stream_rng(seed, 0)).unwrap();
        prop_assert_eq!(map_high_to_low(&hi_next).edges, lo_next.edges);
        prop_assert!(mapped.index(NasSpace::Restricted) < NasSpace::Restricted.num_states());
    }
}
