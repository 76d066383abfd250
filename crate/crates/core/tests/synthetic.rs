use mfrl_core::envs::synthetic::{
    derive_low_fidelity, generate_high_fidelity, mean_abs_perturbation, snr_to_sigma, NoiseConfig, RandomMdpConfig,
};
use mfrl_core::mdp::{validate_mdp, MdpSpec};
use mfrl_core::rng::stream_rng;

fn high(num_states: usize, num_actions: usize, seed: u64) -> MdpSpec {
    let cfg = RandomMdpConfig { num_states, num_actions, terminal_prob: 0.1, discount: 0.99, seed };
    generate_high_fidelity(&cfg, &mut stream_rng(seed, 0)).unwrap()
}

fn low(hi: &MdpSpec, snr: f64, seed: u64) -> MdpSpec {
    derive_low_fidelity(hi, &NoiseConfig::both(snr), &mut stream_rng(seed, 1)).unwrap()
}

#[test]
fn sigma_from_snr() {
    assert!((snr_to_sigma(0.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
    assert!((snr_to_sigma(-10.0, 1.0).unwrap() - 10f64.sqrt()).abs() < 1e-12);
    // sqrt(2 / 10^0.3)
    assert!((snr_to_sigma(3.0, 2.0).unwrap() - 1.001_186_5).abs() < 1e-6);
    assert!(snr_to_sigma(0.0, 0.0).is_err());
}

#[test]
fn reward_perturbation_matches_reported_magnitudes() {
    let hi = high(200, 8, 0);
    let (_, dr_low_snr) = mean_abs_perturbation(&hi, &low(&hi, -10.0, 0));
    let (_, dr_high_snr) = mean_abs_perturbation(&hi, &low(&hi, 3.0, 0));
    assert!((dr_low_snr - 1.029).abs() <= 0.2 * 1.029, "E|dR| at -10 dB = {dr_low_snr}");
    assert!((dr_high_snr - 0.230).abs() <= 0.2 * 0.230, "E|dR| at +3 dB = {dr_high_snr}");
}

#[test]
fn perturbation_shrinks_with_snr() {
    let hi = high(50, 4, 1);
    for rep in 0..5 {
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for snr in [-10.0, -3.0, 0.0, 3.0] {
            let (dp, dr) = mean_abs_perturbation(&hi, &low(&hi, snr, rep));
            assert!(dp <= prev.0 && dr <= prev.1, "rep {rep} snr {snr}: {dp} {dr} after {prev:?}");
            prev = (dp, dr);
        }
    }
}

#[test]
fn low_fidelity_is_stochastic_at_any_snr() {
    let hi = high(30, 3, 2);
    for snr in [-40.0, -20.0, -10.0, 0.0, 10.0, 40.0] {
        let lo = low(&hi, snr, 3);
        assert!(validate_mdp(&lo).is_empty(), "snr {snr}");
        assert!(lo.transitions().iter().all(|&p| p >= 0.0));
        let term = hi.terminal_states()[0];
        for a in 0..3 {
            assert_eq!(lo.transition_row(term, a), hi.transition_row(term, a));
            assert_eq!(lo.reward_at(term, a), 0.0);
        }
    }
}

#[test]
fn generation_is_bit_identical_per_seed() {
    assert_eq!(high(50, 4, 9), high(50, 4, 9));
    assert_ne!(high(50, 4, 9), high(50, 4, 10));
    let hi = high(50, 4, 9);
    assert_eq!(low(&hi, -3.0, 4), low(&hi, -3.0, 4));
}

#[test]
fn terminal_mass_and_reward_range() {
    let hi = high(200, 8, 5);
    let term = hi.terminal_states()[0];
    for s in 0..200 {
        for a in 0..8 {
            assert!((hi.transition(s, a, term) - 0.1).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&hi.reward_at(s, a)));
        }
    }
}
