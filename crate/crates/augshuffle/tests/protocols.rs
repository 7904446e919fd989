use augshuffle::crypto::{CipherSuite, Payload};
use augshuffle::data::{
    synth_kv, synth_zipf, true_frequencies, true_kv_statistics, CategoricalDataset, KvDataset,
    PairsLaw, ValueLaw,
};
use augshuffle::dummy::{DummyCountDistribution, PrivacyBudget};
use augshuffle::hashing::{Gf2Hash, HashFamily, HashFunction, HashTable, UniversalHash};
use augshuffle::protocols::kv::kv_domain;
use augshuffle::protocols::*;
use augshuffle::rng::Rng;
use augshuffle::transport::assert_one_round;
use augshuffle::Error;

fn toy() -> (CategoricalDataset, FmeConfig, HashFunction, Injected) {
    let data = CategoricalDataset::new(8, vec![2, 8, 4, 8, 2]).unwrap();
    let bin = DummyCountDistribution::binomial(2, 0.5).unwrap();
    let budget = PrivacyBudget::new(1.0, 0.0).unwrap();
    let cfg = FmeConfig {
        budget1: budget,
        budget2: budget,
        d1: bin.clone(),
        d2: bin,
        beta: 1.0,
        alpha: 0.05,
        l: 4,
        b: 4,
    };
    let h = HashFunction::Table(HashTable::new(8, 4, &[(2, 1), (8, 1), (4, 3)]).unwrap());
    let inj = Injected {
        keep: None,
        dummies1: Some(vec![1, 0, 1, 1]),
        dummies2: Some(vec![1, 2]),
        perm1: Some(vec![1, 2, 0, 7, 3, 5, 4, 6]),
        perm2: Some(vec![2, 0, 1, 3, 4, 6, 5, 7]),
    };
    (data, cfg, h, inj)
}

fn payloads(v: &[u32]) -> Vec<Payload> {
    v.iter().map(|&x| Payload(x)).collect()
}

#[test]
fn toy_replay_through_the_wire() {
    let (data, cfg, h, inj) = toy();
    let out = fme_run(
        &data,
        &[],
        &cfg,
        &h,
        &RunOptions::wire(),
        &Rng::new(0),
        Some(&inj),
    )
    .unwrap();
    assert_eq!(out.selected(), &[2, 8]);
    assert_eq!(out.filter.as_ref().unwrap().hashes, vec![1]);
    let f = out.frequencies().unwrap().to_dense();
    let want = [0.0, 0.4, 0.0, 0.0, 0.0, 0.0, 0.0, 0.6];
    for (a, b) in f.iter().zip(want) {
        assert!((a - b).abs() < 1e-12, "{f:?}");
    }
    let tr = out.trace.unwrap();
    assert_eq!(tr.stage1_hashes, vec![1, 3, 1, 4, 1, 1, 1, 3]);
    assert_eq!(tr.stage1_items, payloads(&[8, 4, 2, 0, 8, 0, 2, 0]));
    assert_eq!(tr.stage2_items, payloads(&[2, 8, 0, 8, 2, 8, 2, 8]));
    assert!(assert_one_round(&out.transcript));
    assert_eq!(out.stats.replaced, 3);
}

#[test]
fn toy_replay_tally_matches_wire() {
    let (data, cfg, h, inj) = toy();
    let w = fme_run(
        &data,
        &[],
        &cfg,
        &h,
        &RunOptions::wire(),
        &Rng::new(0),
        Some(&inj),
    )
    .unwrap();
    let t = fme_run(
        &data,
        &[],
        &cfg,
        &h,
        &RunOptions::tally(),
        &Rng::new(0),
        Some(&inj),
    )
    .unwrap();
    assert_eq!(w.estimate, t.estimate);
    assert_eq!(w.transcript.measure(), t.transcript.measure());
}

#[test]
fn injected_lengths_are_checked() {
    let (data, cfg, h, mut inj) = toy();
    inj.dummies1 = Some(vec![1, 0, 1]);
    let r = fme_run(
        &data,
        &[],
        &cfg,
        &h,
        &RunOptions::wire(),
        &Rng::new(0),
        Some(&inj),
    );
    assert!(matches!(r, Err(Error::Replay(_))));
    let (_, _, _, mut inj) = toy();
    inj.perm1 = Some(vec![0, 0, 1, 2, 3, 4, 5, 6]);
    let r = fme_run(
        &data,
        &[],
        &cfg,
        &h,
        &RunOptions::wire(),
        &Rng::new(0),
        Some(&inj),
    );
    assert!(matches!(r, Err(Error::Replay(_))));
}

#[test]
fn lnf_figure_replay() {
    let data = CategoricalDataset::new(3, vec![1, 3, 1, 2, 2, 3]).unwrap();
    let inj = Injected {
        keep: Some(vec![true, false, true, true, true, true]),
        dummies1: Some(vec![1, 0, 2]),
        ..Injected::default()
    };
    let dist = DummyCountDistribution::binomial(2, 0.5).unwrap();
    for opts in [RunOptions::wire(), RunOptions::tally()] {
        let out = lnf_run(&data, &[], &dist, 1.0, &opts, &Rng::new(1), Some(&inj)).unwrap();
        let f = out.frequencies().unwrap().to_dense();
        let counts: Vec<f64> = f.iter().map(|x| x * 6.0 + 1.0).collect();
        for (c, want) in counts.iter().zip([3.0, 2.0, 3.0]) {
            assert!((c - want).abs() < 1e-9);
        }
        assert_eq!(out.stats.kept, 5);
        assert!(assert_one_round(&out.transcript));
    }
}

fn noiseless_cfg(d: u32) -> FmeConfig {
    let z = DummyCountDistribution::point_mass(0);
    let budget = PrivacyBudget::new(0.0, 1.0).unwrap();
    FmeConfig {
        budget1: budget,
        budget2: budget,
        d1: z.clone(),
        d2: z,
        beta: 1.0,
        alpha: 1.0,
        l: d as usize,
        b: d,
    }
}

#[test]
fn noiseless_collapse() {
    let rng = Rng::new(9);
    let zero = DummyCountDistribution::point_mass(0);
    for (n, d, s) in [(1usize, 1u32, 0.0), (50, 7, 1.0), (1000, 40, 1.3)] {
        let data = synth_zipf(n, d, s, &rng.child("data", n as u64)).unwrap();
        let truth = true_frequencies(&data);
        let close = |f: &[f64]| f.iter().zip(&truth).all(|(a, b)| (a - b).abs() < 1e-12);
        let out = lnf_run(&data, &[], &zero, 1.0, &RunOptions::wire(), &rng, None).unwrap();
        assert!(close(&out.frequencies().unwrap().to_dense()));
        let cfg = noiseless_cfg(d);
        let h = HashFamily::Prime
            .sample(d, d, &mut rng.stream("h"))
            .unwrap();
        let out = fme_run(&data, &[], &cfg, &h, &RunOptions::wire(), &rng, None).unwrap();
        assert!(close(&out.frequencies().unwrap().to_dense()));
        let out = pure_grr_run(&data, &[], f64::INFINITY, &RunOptions::tally(), &rng).unwrap();
        assert!(close(&out.frequencies().unwrap().to_dense()));
    }
}

#[test]
fn ch_identity_hash_example() {
    let data = CategoricalDataset::new(3, vec![1, 1, 2, 3, 1, 2]).unwrap();
    let h = HashFunction::Prime(UniversalHash::new(1, 0, 3, 3, 3).unwrap());
    let zero = DummyCountDistribution::point_mass(0);
    let out = ch_run(
        &data,
        &[],
        &zero,
        1.0,
        &h,
        &RunOptions::wire(),
        &Rng::new(2),
    )
    .unwrap();
    let f = out.frequencies().unwrap().to_dense();
    let counts = data.counts();
    for i in 0..3 {
        let c = counts[i] as f64;
        let want = (c - 6.0 / 3.0) * 3.0 / (6.0 * 2.0);
        assert!((f[i] - want).abs() < 1e-12);
        let fi = c / 6.0;
        assert!((want - (fi * 3.0 - 1.0) / 2.0).abs() < 1e-12);
    }
}

/// Exact expectation of the noiseless CH estimate over every affine GF(2) hash.
#[test]
fn ch_is_unbiased_over_the_gf2_family() {
    let data = CategoricalDataset::new(8, vec![1, 1, 1, 2, 5, 5, 8, 3, 3, 3, 3, 7]).unwrap();
    let truth = true_frequencies(&data);
    let zero = DummyCountDistribution::point_mass(0);
    let mut mean = vec![0.0; 8];
    let mut count = 0;
    for r0 in 0..16u32 {
        for off in 0..2u32 {
            let h = HashFunction::Gf2(Gf2Hash::new(vec![r0], off, 8).unwrap());
            let out = ch_run(
                &data,
                &[],
                &zero,
                1.0,
                &h,
                &RunOptions::tally(),
                &Rng::new(3),
            )
            .unwrap();
            for (m, f) in mean.iter_mut().zip(out.frequencies().unwrap().to_dense()) {
                *m += f;
            }
            count += 1;
        }
    }
    for (m, t) in mean.iter().zip(&truth) {
        assert!((m / count as f64 - t).abs() < 1e-12, "{mean:?}");
    }
}

#[test]
fn gh_with_one_group_is_ch() {
    let rng = Rng::new(4);
    let data = synth_zipf(300, 20, 1.0, &rng).unwrap();
    let dist = DummyCountDistribution::binomial(10, 0.5).unwrap();
    let h = HashFamily::Prime
        .sample(20, 8, &mut rng.stream("h"))
        .unwrap();
    let a = ch_run(&data, &[], &dist, 0.7, &h, &RunOptions::tally(), &rng).unwrap();
    let b = gh_run(&data, &[], &dist, 0.7, &[h], &RunOptions::tally(), &rng).unwrap();
    assert_eq!(a.estimate, b.estimate);
}

#[test]
fn wire_and_tally_agree_everywhere() {
    let rng = Rng::new(5);
    let data = synth_zipf(200, 30, 1.1, &rng).unwrap();
    let dist = DummyCountDistribution::binomial(6, 0.5).unwrap();
    let h = HashFamily::Prime
        .sample(30, 8, &mut rng.stream("h"))
        .unwrap();
    let fakes = [3u32, 3, 4];
    for seed in 0..3 {
        let r = rng.child("trial", seed);
        let pairs = [
            (
                lnf_run(&data, &fakes, &dist, 0.8, &RunOptions::wire(), &r, None).unwrap(),
                lnf_run(&data, &fakes, &dist, 0.8, &RunOptions::tally(), &r, None).unwrap(),
            ),
            (
                ch_run(&data, &fakes, &dist, 0.8, &h, &RunOptions::wire(), &r).unwrap(),
                ch_run(&data, &fakes, &dist, 0.8, &h, &RunOptions::tally(), &r).unwrap(),
            ),
            (
                pure_grr_run(&data, &fakes, 2.0, &RunOptions::wire(), &r).unwrap(),
                pure_grr_run(&data, &fakes, 2.0, &RunOptions::tally(), &r).unwrap(),
            ),
        ];
        for (w, t) in pairs {
            assert_eq!(w.estimate, t.estimate);
            assert_eq!(w.transcript.measure(), t.transcript.measure());
        }
        let cfg =
            FmeConfig::calibrated(PrivacyBudget::new(2.0, 1e-9).unwrap(), 0.5, 0.8, 0.05, 8, 8)
                .unwrap();
        let w = fme_run(&data, &fakes, &cfg, &h, &RunOptions::wire(), &r, None).unwrap();
        let t = fme_run(&data, &fakes, &cfg, &h, &RunOptions::tally(), &r, None).unwrap();
        assert_eq!(w.estimate, t.estimate);
        assert_eq!(w.filter, t.filter);
        assert_eq!(w.stats, t.stats);
        assert_eq!(w.transcript.measure(), t.transcript.measure());
        assert_eq!(w.transcript.lambda_message(), t.transcript.lambda_message());
        let w = proposal_star_run(&data, &fakes, &cfg, 1.0, &h, &RunOptions::wire(), &r).unwrap();
        let t = proposal_star_run(&data, &fakes, &cfg, 1.0, &h, &RunOptions::tally(), &r).unwrap();
        assert_eq!(w.estimate, t.estimate);
    }
}

#[test]
fn parallel_encryption_matches_sequential() {
    let rng = Rng::new(6);
    let data = synth_zipf(64, 10, 1.0, &rng).unwrap();
    let cfg = FmeConfig::calibrated(PrivacyBudget::new(4.0, 1e-6).unwrap(), 0.5, 1.0, 0.05, 4, 4)
        .unwrap();
    let h = HashFamily::Prime
        .sample(10, 4, &mut rng.stream("h"))
        .unwrap();
    let seq = RunOptions::wire();
    let par = RunOptions {
        parallel: true,
        ..seq
    };
    let a = fme_run(&data, &[], &cfg, &h, &seq, &rng, None).unwrap();
    let b = fme_run(&data, &[], &cfg, &h, &par, &rng, None).unwrap();
    assert_eq!(a.estimate, b.estimate);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn real_cipher_end_to_end() {
    let rng = Rng::new(7);
    let data = CategoricalDataset::new(8, vec![2, 8, 4, 8, 2, 1, 1, 1]).unwrap();
    let mut cfg = noiseless_cfg(8);
    cfg.b = 4;
    cfg.l = 4;
    let h = HashFamily::Prime
        .sample(8, 4, &mut rng.stream("h"))
        .unwrap();
    let opts = RunOptions {
        suite: CipherSuite::real(256).unwrap(),
        ..RunOptions::wire()
    };
    let out = fme_run(&data, &[], &cfg, &h, &opts, &rng, None).unwrap();
    let truth = true_frequencies(&data);
    for (a, b) in out.frequencies().unwrap().to_dense().iter().zip(&truth) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(out.transcript.c_us(), (712 + 2072) * 8);
}

#[test]
fn fme_one_round_and_user_cost() {
    let rng = Rng::new(8);
    let data = synth_zipf(500, 50, 1.0, &rng).unwrap();
    let cfg = FmeConfig::calibrated(
        PrivacyBudget::new(1.0, 1e-12).unwrap(),
        0.5,
        1.0,
        0.05,
        16,
        16,
    )
    .unwrap();
    let h = HashFamily::Prime
        .sample(50, 16, &mut rng.stream("h"))
        .unwrap();
    let out = fme_run(&data, &[], &cfg, &h, &RunOptions::wire(), &rng, None).unwrap();
    assert!(assert_one_round(&out.transcript));
    assert_eq!(out.transcript.c_us(), 500 * (712 + 2072));
    let f = out.frequencies().unwrap();
    for i in 1..=50 {
        assert_eq!(f.reported(i), out.selected().contains(&i));
    }
}

#[test]
fn kv_small_cases() {
    let one = KvDataset::new(1, vec![vec![(1, 1.0)]]).unwrap();
    let cfg = noiseless_cfg(1);
    let h = HashFamily::Prime
        .sample(1, 1, &mut Rng::new(0).stream("h"))
        .unwrap();
    let out = kv_run(
        &one,
        &[],
        &cfg,
        1,
        &h,
        &RunOptions::wire(),
        &Rng::new(0),
        None,
    )
    .unwrap();
    let e = out.kv().unwrap();
    assert_eq!((e.phi(1), e.psi(1)), (1.0, 1.0));

    let two = KvDataset::new(1, vec![vec![(1, 1.0)], vec![(1, -1.0)]]).unwrap();
    let out = kv_run(
        &two,
        &[],
        &cfg,
        1,
        &h,
        &RunOptions::wire(),
        &Rng::new(0),
        None,
    )
    .unwrap();
    let e = out.kv().unwrap();
    assert_eq!((e.phi(1), e.psi(1)), (1.0, 0.0));
    assert!(assert_one_round(&out.transcript));
}

#[test]
fn kv_wire_tally_and_padding() {
    let rng = Rng::new(10);
    let data = synth_kv(
        300,
        12,
        PairsLaw::Uniform(1, 3),
        1.0,
        ValueLaw::Uniform,
        &rng,
    )
    .unwrap();
    let kappa = 3;
    let ext = kv_domain(12, kappa);
    assert_eq!(ext, 14);
    let cfg = FmeConfig::calibrated(PrivacyBudget::new(2.0, 1e-9).unwrap(), 0.5, 0.9, 0.05, 8, 8)
        .unwrap();
    let h = HashFamily::Prime
        .sample(ext, 8, &mut rng.stream("h"))
        .unwrap();
    let fakes = [KvFake {
        key: 2,
        positive: true,
    }];
    let w = kv_run(
        &data,
        &fakes,
        &cfg,
        kappa,
        &h,
        &RunOptions::wire(),
        &rng,
        None,
    )
    .unwrap();
    let t = kv_run(
        &data,
        &fakes,
        &cfg,
        kappa,
        &h,
        &RunOptions::tally(),
        &rng,
        None,
    )
    .unwrap();
    assert_eq!(w.estimate, t.estimate);
    assert_eq!(w.transcript.measure(), t.transcript.measure());
    assert!(assert_one_round(&w.transcript));
    let e = w.kv().unwrap();
    assert!(e.phi.keys().all(|&k| k <= 12));
    let hp = HashFamily::Prime
        .sample(2 * ext, 8, &mut rng.stream("hp"))
        .unwrap();
    let p = kv_pair_level_run(&data, &[], &cfg, kappa, &hp, &RunOptions::tally(), &rng).unwrap();
    assert!(p.kv().unwrap().phi.keys().all(|&k| k <= 12));
}

#[test]
fn kv_noiseless_recovers_truth_with_large_kappa_and_sign_values() {
    let rng = Rng::new(11);
    let data = synth_kv(
        2000,
        5,
        PairsLaw::Fixed(1),
        0.0,
        ValueLaw::Constant(1.0),
        &rng,
    )
    .unwrap();
    let (phi, _) = true_kv_statistics(&data);
    let ext = kv_domain(5, 1);
    let cfg = noiseless_cfg(ext);
    let h = HashFamily::Prime
        .sample(ext, ext, &mut rng.stream("h"))
        .unwrap();
    let out = kv_run(&data, &[], &cfg, 1, &h, &RunOptions::tally(), &rng, None).unwrap();
    let e = out.kv().unwrap();
    for k in 1..=5 {
        assert!((e.phi(k) - phi[k as usize - 1]).abs() < 1e-12);
        if phi[k as usize - 1] > 0.0 {
            assert_eq!(e.psi(k), 1.0);
        }
    }
}

#[test]
fn invalid_parameters() {
    let data = CategoricalDataset::new(4, vec![1, 2]).unwrap();
    let zero = DummyCountDistribution::point_mass(0);
    assert!(lnf_run(
        &data,
        &[],
        &zero,
        0.0,
        &RunOptions::tally(),
        &Rng::new(0),
        None
    )
    .is_err());
    let h1 = HashFunction::Prime(UniversalHash::new(1, 0, 5, 1, 4).unwrap());
    assert!(ch_run(
        &data,
        &[],
        &zero,
        1.0,
        &h1,
        &RunOptions::tally(),
        &Rng::new(0)
    )
    .is_err());
    assert!(pure_grr_run(&data, &[], 0.0, &RunOptions::tally(), &Rng::new(0)).is_err());
    let mut cfg = noiseless_cfg(4);
    cfg.l = 5;
    let h = HashFamily::Prime
        .sample(4, 4, &mut Rng::new(0).stream("h"))
        .unwrap();
    assert!(fme_run(
        &data,
        &[],
        &cfg,
        &h,
        &RunOptions::tally(),
        &Rng::new(0),
        None
    )
    .is_err());
    assert!(lnf_run(
        &data,
        &[9],
        &zero,
        1.0,
        &RunOptions::tally(),
        &Rng::new(0),
        None
    )
    .is_err());
}

#[test]
fn runs_are_deterministic() {
    let rng = Rng::new(12);
    let data = synth_zipf(400, 25, 1.0, &rng).unwrap();
    let cfg = FmeConfig::calibrated(
        PrivacyBudget::new(1.0, 1e-12).unwrap(),
        0.5,
        0.9,
        0.05,
        8,
        8,
    )
    .unwrap();
    let h = HashFamily::Gf2.sample(25, 8, &mut rng.stream("h")).unwrap();
    let a = fme_run(&data, &[], &cfg, &h, &RunOptions::wire(), &rng, None).unwrap();
    let b = fme_run(&data, &[], &cfg, &h, &RunOptions::wire(), &rng, None).unwrap();
    assert_eq!(a.estimate, b.estimate);
    assert_eq!(a.transcript.to_json(), b.transcript.to_json());
}
