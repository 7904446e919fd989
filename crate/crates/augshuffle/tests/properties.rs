//! Property tests for the closed forms, the certifier and the wire formats.

use augshuffle::analysis::{amplify, gains_categorical, gains_kv_simple, top_k, GainProtocol};
use augshuffle::attacks::{actual_epsilon, CollusionScenario, CollusionTarget, VICTIM};
use augshuffle::crypto::{CipherSuite, Payload, SizeModel};
use augshuffle::dummy::{calibrate_offset, certify_dp, DummyCountDistribution, PrivacyBudget};
use augshuffle::protocols::FmeConfig;
use augshuffle::rng::Rng;
use augshuffle::transport::Message;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn amplify_never_exceeds_eps0(eps0 in 0.01f64..10.0, n in 1e3f64..1e8, log_delta in -14.0f64..-3.0) {
        let delta = 10f64.powf(log_delta);
        prop_assume!(eps0 >= 20.0 / n);
        prop_assert!(amplify(eps0, n, delta) <= eps0 + 1e-12);
    }

    #[test]
    fn amplify_decreases_in_n(eps0 in 0.01f64..10.0, n in 1e3f64..1e8, k in 1.0f64..50.0, log_delta in -14.0f64..-3.0) {
        let delta = 10f64.powf(log_delta);
        prop_assume!(eps0 >= 20.0 / n);
        prop_assert!(amplify(eps0, n * k, delta) <= amplify(eps0, n, delta) + 1e-12);
    }

    #[test]
    fn amplify_decreases_in_delta(eps0 in 0.01f64..10.0, n in 1e3f64..1e8, log_delta in -14.0f64..-4.0, step in 0.0f64..1.0) {
        prop_assume!(eps0 >= 20.0 / n);
        let lo = 10f64.powf(log_delta);
        let hi = 10f64.powf(log_delta + step);
        prop_assert!(amplify(eps0, n, hi) <= amplify(eps0, n, lo) + 1e-12);
    }

    #[test]
    fn certify_decreases_in_eps(decay in 0.3f64..0.95, offset in 0u64..60, beta in 0.05f64..1.0, e1 in 0.0f64..3.0, de in 0.0f64..2.0) {
        let d = DummyCountDistribution::asymmetric_geometric(decay, offset).unwrap();
        let a = certify_dp(&d, beta, e1);
        let b = certify_dp(&d, beta, e1 + de);
        prop_assert!(b <= a + 1e-15, "δ({}) = {a} < δ({}) = {b}", e1, e1 + de);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn certify_decreases_in_offset(decay in 0.3f64..0.95, offset in 0u64..60, beta in 0.05f64..1.0, eps in 0.05f64..3.0) {
        let a = certify_dp(&DummyCountDistribution::asymmetric_geometric(decay, offset).unwrap(), beta, eps);
        let b = certify_dp(&DummyCountDistribution::asymmetric_geometric(decay, offset + 1).unwrap(), beta, eps);
        prop_assert!(b <= a + 1e-15);
    }

    #[test]
    fn calibration_meets_target(eps in 0.1f64..3.0, log_delta in -12.0f64..-4.0, beta in 0.1f64..1.0) {
        let delta = 10f64.powf(log_delta);
        let d = calibrate_offset(eps, delta, beta).unwrap();
        prop_assert!(certify_dp(&d, beta, eps) <= delta);
    }

    #[test]
    fn collusion_leaves_augmented_eps_unchanged(n in 2usize..5000, frac in 0.0f64..0.95, eps in 0.1f64..5.0, seed in any::<u64>()) {
        let k = ((n - 1) as f64 * frac) as usize;
        let mut r = Rng::new(seed).stream("colluders");
        let pool: Vec<u32> = (1..=n as u32).filter(|&u| u != VICTIM).collect();
        let colluders = rand::seq::index::sample(&mut r, pool.len(), k).iter().map(|i| pool[i]).collect();
        let s = CollusionScenario { n, colluders, budget: PrivacyBudget::new(eps, 1e-12).unwrap() };
        prop_assert_eq!(actual_epsilon(CollusionTarget::Augmented, &s).unwrap(), eps);
    }

    #[test]
    fn two_stage_gains_ignore_the_budget(lambda in 0.0f64..0.5, raw in prop::collection::vec(0.0f64..1.0, 2..20), eta in 0.0f64..1.0) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 0.0);
        let f: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let targets = [1u32, 2];
        let etas = [eta, eta];
        let mut seen = Vec::new();
        for eps in [0.1, 1.0, 5.0] {
            let cfg = FmeConfig::calibrated(PrivacyBudget::new(eps, 1e-12).unwrap(), 0.5, 1.0, 0.05, 1, 2).unwrap();
            prop_assert!(cfg.d1.mean() > 0.0);
            let g = gains_categorical(lambda, &f, &targets, &etas, GainProtocol::Fme);
            let kv = gains_kv_simple(lambda, 1, &f[..2], &[0.0, 0.0], &etas);
            seen.push((g, kv));
        }
        prop_assert!(seen.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn top_k_is_sorted(raw in prop::collection::vec(0.0f64..1.0, 1..40), k in 1usize..40) {
        let k = k.min(raw.len());
        let items = top_k(&raw, k);
        prop_assert_eq!(items.len(), k);
        prop_assert!(items.windows(2).all(|w| raw[w[0] as usize - 1] >= raw[w[1] as usize - 1]));
    }

    #[test]
    fn item_messages_roundtrip(width in 1u32..64, items in prop::collection::vec(any::<u32>(), 0..50)) {
        let m = Message::Items { width_bits: width, items };
        prop_assert_eq!(Message::decode(&m.encode()).unwrap(), m);
    }

    #[test]
    fn ciphertext_messages_roundtrip(payloads in prop::collection::vec(1u32..1000, 1..4), seed in any::<u64>(), real in any::<bool>()) {
        let suite = if real { CipherSuite::real(256).unwrap() } else { CipherSuite::mock(SizeModel::ECIES_256) };
        let mut r = Rng::new(seed).stream("enc");
        let k1 = suite.keygen(&mut r).unwrap();
        let k2 = suite.keygen(&mut r).unwrap();
        let cts = payloads
            .iter()
            .map(|&p| suite.encrypt_layers(Payload(p), &[k1.public(), k2.public()], &mut r))
            .collect::<Result<Vec<_>, _>>()
            .unwrap();
        let m = Message::Ciphertexts(cts);
        prop_assert_eq!(Message::decode(&m.encode()).unwrap(), m);
    }
}
