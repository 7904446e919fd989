//! Experiment runner behind the command-line tool.

use std::fs::File;
use std::io::BufReader;

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    amplify, ch_c_tot, ch_error, eta_bound, fme_comm_bound, fme_error, kv_accuracy, lnf_c_tot,
    lnf_error, mse_topk, mse_topk_kv, top_k, CommInput, KvAccuracy, KvAccuracyInput, PredictorRow,
};
use crate::attacks::{
    actual_epsilon, m2ga_kv, mga_categorical, AttackRow, ChVariant, CollusionScenario,
    CollusionTarget, GainEstimate, MgaProtocol, PoisoningScenario,
};
use crate::config::{DatasetSource, ExperimentConfig, HashChoice, Metric, ProtocolId};
use crate::crypto::SizeModel;
use crate::data::{
    kv_value_second_moments, load_categorical_csv, load_kv_csv, synth_kv, synth_zipf,
    true_frequencies, true_kv_statistics, user_sample, CategoricalDataset, KvDataset, PairsLaw,
    ValueLaw,
};
use crate::dummy::{calibrate_offset, DummyCountDistribution};
use crate::error::{Error, Result};
use crate::hashing::{HashFamily, HashFunction};
use crate::protocols::{
    ch_run, fme_run, gh_run, kv_domain, kv_pair_level_run, kv_run, lnf_run, proposal_star_run,
    pure_grr_run, FmeConfig, ProtocolOutput, RunOptions,
};
use crate::rng::Rng;

/// Loaded input data.
#[derive(Clone, Debug)]
pub enum Dataset {
    Categorical(CategoricalDataset),
    Kv(KvDataset),
}

impl Dataset {
    pub fn n(&self) -> usize {
        match self {
            Dataset::Categorical(c) => c.n(),
            Dataset::Kv(k) => k.n(),
        }
    }

    pub fn d(&self) -> u32 {
        match self {
            Dataset::Categorical(c) => c.d(),
            Dataset::Kv(k) => k.d(),
        }
    }
}

/// Dataset before and after user sampling.
#[derive(Clone, Debug)]
pub struct Inputs {
    /// Ground truth, computed before sampling.
    pub full: Dataset,
    pub sampled: Dataset,
}

fn open(path: &str) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::InvalidDataset(format!("{path}: {e}")))
}

fn sample_kv(data: &KvDataset, p: f64, rng: &Rng) -> Result<KvDataset> {
    if p >= 1.0 {
        return Ok(data.clone());
    }
    let mut r = rng.stream("data/user_sample");
    let kept: Vec<_> = data
        .records()
        .iter()
        .filter(|_| r.gen_bool(p))
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidDataset("user sampling kept no users".into()));
    }
    KvDataset::new(data.d(), kept)
}

/// Loads or synthesizes the configured dataset and applies user sampling.
pub fn load_inputs(cfg: &ExperimentConfig) -> Result<Inputs> {
    let ds = &cfg.dataset;
    let rng = Rng::new(cfg.seed).child("dataset", 0);
    let d_hint = if ds.path.is_some() && ds.d == 0 {
        None
    } else {
        Some(ds.d)
    };
    let full = match ds.source {
        DatasetSource::Zipf => Dataset::Categorical(synth_zipf(ds.n, ds.d, ds.zipf, &rng)?),
        DatasetSource::Kv => {
            let values = match ds.p_plus {
                Some(p) => ValueLaw::Sign { p_plus: p },
                None => ValueLaw::Uniform,
            };
            Dataset::Kv(synth_kv(
                ds.n,
                ds.d,
                PairsLaw::Uniform(ds.pairs[0], ds.pairs[1]),
                ds.zipf,
                values,
                &rng,
            )?)
        }
        DatasetSource::CategoricalCsv => Dataset::Categorical(load_categorical_csv(
            open(ds.path.as_deref().unwrap_or_default())?,
            d_hint,
        )?),
        DatasetSource::KvCsv => Dataset::Kv(load_kv_csv(
            open(ds.path.as_deref().unwrap_or_default())?,
            d_hint,
        )?),
    };
    let sampled = match &full {
        Dataset::Categorical(c) if ds.sample < 1.0 => {
            Dataset::Categorical(user_sample(c, ds.sample, &rng)?)
        }
        Dataset::Kv(k) => Dataset::Kv(sample_kv(k, ds.sample, &rng)?),
        other => other.clone(),
    };
    Ok(Inputs { full, sampled })
}

/// Smallest `ε0` whose amplified level reaches `eps` over `n` users, or the
/// largest uncapped `ε0` when `eps` is out of reach.
pub fn grr_eps0_for(eps: f64, n: f64, delta: f64) -> f64 {
    let inner = n / (8.0 * (2.0 / delta).ln()) - 1.0;
    if inner <= 1.0 {
        return eps;
    }
    let cap = inner.ln();
    if amplify(cap, n, delta) <= eps {
        return cap;
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if amplify(mid, n, delta) < eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn family(cfg: &ExperimentConfig) -> HashFamily {
    HashFamily::from(cfg.protocol.hash)
}

/// Dummy distribution of single-stage protocols: the explicit one, else calibrated.
pub fn single_stage_dist(cfg: &ExperimentConfig) -> Result<DummyCountDistribution> {
    match &cfg.dist {
        Some(k) => DummyCountDistribution::new(k.clone()),
        None => {
            let m = cfg.budget()?.per_mechanism();
            calibrate_offset(m.eps, m.delta, cfg.protocol.beta)
        }
    }
}

/// Hash range of single-stage hashing protocols: the override, else `min(n, d)`.
fn single_stage_b(cfg: &ExperimentConfig, n: usize, d: u32) -> u32 {
    let b = cfg.protocol.b.unwrap_or((n as u32).min(d)).max(2);
    match cfg.protocol.hash {
        HashChoice::Prime => b,
        HashChoice::Gf2 => b.next_power_of_two(),
    }
}

/// Calibrates the two-stage parameters for a domain of `domain` symbols.
pub fn two_stage_config(cfg: &ExperimentConfig, n: usize, domain: u32) -> Result<FmeConfig> {
    let p = &cfg.protocol;
    let mut f = FmeConfig::calibrated(cfg.budget()?, cfg.budget.split, p.beta, p.alpha, 1, 2)?;
    f.b = cfg
        .resolve_b(n, domain, f.d1.mean(), f.d2.mean())
        .min(domain.max(2));
    if f.b > domain {
        return Err(Error::Config(format!(
            "hash range b={} exceeds the domain {domain}",
            f.b
        )));
    }
    f.l = cfg.resolve_l(n, domain, f.b);
    f.validate(domain)?;
    Ok(f)
}

/// Hash randomness of one trial.
fn hash_rng(r: &Rng) -> rand_chacha::ChaCha12Rng {
    r.child("collector", 0).stream("hash")
}

/// Runs the configured protocol once.
pub fn run_once(
    cfg: &ExperimentConfig,
    data: &Dataset,
    opts: &RunOptions,
    r: &Rng,
) -> Result<ProtocolOutput> {
    let p = &cfg.protocol;
    let n = data.n();
    match (p.kind, data) {
        (ProtocolId::Lnf, Dataset::Categorical(c)) => {
            lnf_run(c, &[], &single_stage_dist(cfg)?, p.beta, opts, r, None)
        }
        (ProtocolId::Ch, Dataset::Categorical(c)) => {
            let h = family(cfg).sample(c.d(), single_stage_b(cfg, n, c.d()), &mut hash_rng(r))?;
            ch_run(c, &[], &single_stage_dist(cfg)?, p.beta, &h, opts, r)
        }
        (ProtocolId::Gh, Dataset::Categorical(c)) => {
            let g = if p.groups == 0 { n } else { p.groups };
            let b = single_stage_b(cfg, n, c.d());
            let mut hr = hash_rng(r);
            let hashes = (0..g)
                .map(|_| family(cfg).sample(c.d(), b, &mut hr))
                .collect::<Result<Vec<_>>>()?;
            gh_run(c, &[], &single_stage_dist(cfg)?, p.beta, &hashes, opts, r)
        }
        (ProtocolId::Fme, Dataset::Categorical(c)) => {
            let f = two_stage_config(cfg, n, c.d())?;
            let h = family(cfg).sample(c.d(), f.b, &mut hash_rng(r))?;
            fme_run(c, &[], &f, &h, opts, r, None)
        }
        (ProtocolId::ProposalStar, Dataset::Categorical(c)) => {
            let f = two_stage_config(cfg, n, c.d())?;
            let h = family(cfg).sample(c.d(), f.b, &mut hash_rng(r))?;
            proposal_star_run(c, &[], &f, p.extra_eps, &h, opts, r)
        }
        (ProtocolId::Grr, Dataset::Categorical(c)) => {
            let eps0 = p
                .eps0
                .unwrap_or_else(|| grr_eps0_for(cfg.budget.eps, n as f64, cfg.budget.delta));
            pure_grr_run(c, &[], eps0, opts, r)
        }
        (ProtocolId::Kv, Dataset::Kv(k)) => {
            let ext = kv_domain(k.d(), p.kappa);
            let f = two_stage_config(cfg, n, ext)?;
            let h = family(cfg).sample(ext, f.b, &mut hash_rng(r))?;
            kv_run(k, &[], &f, p.kappa, &h, opts, r, None)
        }
        (ProtocolId::KvPair, Dataset::Kv(k)) => {
            let dom = 2 * kv_domain(k.d(), p.kappa);
            let f = two_stage_config(cfg, n, dom)?;
            let h = family(cfg).sample(dom, f.b, &mut hash_rng(r))?;
            kv_pair_level_run(k, &[], &f, p.kappa, &h, opts, r)
        }
        (kind, _) => Err(Error::Config(format!(
            "protocol {kind:?} does not accept this dataset"
        ))),
    }
}

/// Metrics of one trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrialMetrics {
    pub mse: f64,
    /// `Ψ̂` MSE for KV runs, NaN otherwise.
    pub mse_psi: f64,
    pub c_us: u64,
    pub c_sd: u64,
    pub c_tot: u64,
}

/// Runs trial `t` and scores it against the pre-sampling truth.
pub fn run_trial(cfg: &ExperimentConfig, inputs: &Inputs, t: usize) -> Result<TrialMetrics> {
    let opts = cfg.cipher.run_options()?;
    let r = Rng::new(cfg.seed).child("trial", t as u64);
    let out = run_once(cfg, &inputs.sampled, &opts, &r)?;
    let k = cfg.top_k.min(inputs.full.d() as usize);
    let (mse, mse_psi) = match &inputs.full {
        Dataset::Categorical(c) => (
            mse_topk(&true_frequencies(c), out.frequencies()?, k)?,
            f64::NAN,
        ),
        Dataset::Kv(kv) => {
            let (phi, psi) = true_kv_statistics(kv);
            mse_topk_kv(&phi, &psi, out.kv()?, k, cfg.clip)?
        }
    };
    let tr = &out.transcript;
    Ok(TrialMetrics {
        mse,
        mse_psi,
        c_us: tr.c_us(),
        c_sd: tr.c_sd(),
        c_tot: tr.c_tot(),
    })
}

/// One sweep point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub x: f64,
    pub mean: f64,
    pub stderr: f64,
}

fn summarize(x: f64, v: &[f64]) -> SweepRow {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let stderr = if v.len() > 1 {
        (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    SweepRow { x, mean, stderr }
}

/// Runs `cfg.trials` trials and averages `metric`.
pub fn measure(cfg: &ExperimentConfig, metric: Metric, x: f64) -> Result<SweepRow> {
    match metric {
        Metric::ActualEps => return collusion_point(cfg, x),
        Metric::Gain => {
            let g = attack_point(cfg, x)?;
            return Ok(SweepRow {
                x,
                mean: g.empirical,
                stderr: g.stderr,
            });
        }
        _ => {}
    }
    let inputs = load_inputs(cfg)?;
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, &inputs, t))
        .collect::<Result<Vec<_>>>()?;
    let v: Vec<f64> = trials
        .iter()
        .map(|m| match metric {
            Metric::Mse => m.mse,
            Metric::MsePsi => m.mse_psi,
            _ => m.c_tot as f64,
        })
        .collect();
    Ok(summarize(x, &v))
}

/// Runs the configured sweep; `x` is the swept value.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let s = &cfg.sweep;
    s.values
        .iter()
        .map(|&x| match s.metric {
            Metric::ActualEps => collusion_point(cfg, x),
            Metric::Gain => attack_point(cfg, x).map(|g| SweepRow {
                x,
                mean: g.empirical,
                stderr: g.stderr,
            }),
            m => measure(&cfg.with_override(&s.param, &x.to_string())?, m, x),
        })
        .collect()
}

fn collusion_point(cfg: &ExperimentConfig, frac: f64) -> Result<SweepRow> {
    let n = cfg.dataset.n;
    let k = ((frac * n as f64).round() as usize).min(n.saturating_sub(1));
    let scenario = CollusionScenario {
        n,
        colluders: (2..=k as u32 + 1).collect(),
        budget: cfg.budget()?,
    };
    let target = match cfg.protocol.kind {
        ProtocolId::Grr => CollusionTarget::PureShuffle {
            eps0: cfg
                .protocol
                .eps0
                .unwrap_or_else(|| grr_eps0_for(cfg.budget.eps, n as f64, cfg.budget.delta)),
        },
        _ => CollusionTarget::Augmented,
    };
    Ok(SweepRow {
        x: frac,
        mean: actual_epsilon(target, &scenario)?,
        stderr: 0.0,
    })
}

/// Poisoning with `λ = lambda` against the configured protocol.
pub fn attack_point(cfg: &ExperimentConfig, lambda: f64) -> Result<GainEstimate> {
    Ok(attack_estimates(cfg, lambda)?.swap_remove(0).1)
}

/// Gain estimates with their report labels; KV yields the `Φ` and `Ψ` gains.
pub fn attack_estimates(
    cfg: &ExperimentConfig,
    lambda: f64,
) -> Result<Vec<(String, GainEstimate)>> {
    let inputs = load_inputs(cfg)?;
    let n = inputs.sampled.n();
    let n_fake = (lambda * n as f64 / (1.0 - lambda)).round() as usize;
    let scenario = PoisoningScenario {
        targets: cfg.attack.targets.clone(),
        n_fake,
    };
    let opts = cfg.cipher.run_options()?;
    let rng = Rng::new(cfg.seed);
    let p = &cfg.protocol;
    match &inputs.sampled {
        Dataset::Categorical(c) => {
            let protocol = match p.kind {
                ProtocolId::Lnf => MgaProtocol::Lnf {
                    dist: single_stage_dist(cfg)?,
                    beta: p.beta,
                },
                ProtocolId::Ch => MgaProtocol::Ch {
                    dist: single_stage_dist(cfg)?,
                    beta: p.beta,
                    b: single_stage_b(cfg, n, c.d()),
                    family: family(cfg),
                    variant: if cfg.attack.colliding {
                        ChVariant::Colliding
                    } else {
                        ChVariant::Single
                    },
                },
                ProtocolId::Fme => MgaProtocol::Fme {
                    cfg: two_stage_config(cfg, n, c.d())?,
                    family: family(cfg),
                },
                other => return Err(Error::Config(format!("no poisoning harness for {other:?}"))),
            };
            let g = mga_categorical(&protocol, c, &scenario, cfg.trials, &opts, &rng)?;
            Ok(vec![(protocol.name().to_string(), g)])
        }
        Dataset::Kv(k) => {
            if p.kind != ProtocolId::Kv {
                return Err(Error::Config(format!(
                    "no poisoning harness for {:?}",
                    p.kind
                )));
            }
            let f = two_stage_config(cfg, n, kv_domain(k.d(), p.kappa))?;
            let g = m2ga_kv(
                k,
                &scenario,
                &f,
                p.kappa,
                family(cfg),
                cfg.trials,
                &opts,
                &rng,
            )?;
            Ok(vec![("kv-phi".into(), g.phi), ("kv-psi".into(), g.psi)])
        }
    }
}

/// Attack report rows for each `λ`.
pub fn attack_rows(cfg: &ExperimentConfig, lambdas: &[f64]) -> Result<Vec<AttackRow>> {
    let mut rows = Vec::new();
    for &lambda in lambdas {
        for (name, g) in attack_estimates(cfg, lambda)? {
            rows.push(AttackRow::new(name, cfg.budget.eps, lambda, &g));
        }
    }
    Ok(rows)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Analytic predictions next to Monte Carlo means over `cfg.trials` trials.
pub fn predict(cfg: &ExperimentConfig) -> Result<Vec<PredictorRow>> {
    let inputs = load_inputs(cfg)?;
    let n = inputs.sampled.n();
    let nf = n as f64;
    let p = &cfg.protocol;
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, &inputs, t))
        .collect::<Result<Vec<_>>>()?;
    let measured_mse = mean(&trials.iter().map(|m| m.mse).collect::<Vec<_>>());
    let measured_tot = mean(&trials.iter().map(|m| m.c_tot as f64).collect::<Vec<_>>());
    let k = cfg.top_k.min(inputs.full.d() as usize);
    let t = cfg.cipher.tau;
    let sizes = SizeModel {
        tau1: t[0],
        tau2: t[1],
        tau3: t[2],
    };
    let mut rows = Vec::new();
    match (&inputs.full, p.kind) {
        (Dataset::Categorical(c), ProtocolId::Lnf | ProtocolId::Ch | ProtocolId::Fme) => {
            let f = true_frequencies(c);
            let items = top_k(&f, k);
            let per_item: Vec<f64> = match p.kind {
                ProtocolId::Lnf => {
                    let s = single_stage_dist(cfg)?.variance();
                    items
                        .iter()
                        .map(|&i| lnf_error(f[i as usize - 1], nf, p.beta, s))
                        .collect()
                }
                ProtocolId::Ch => {
                    let s = single_stage_dist(cfg)?.variance();
                    let b = single_stage_b(cfg, n, c.d());
                    items
                        .iter()
                        .map(|&i| ch_error(&f, i, nf, p.beta, b, s))
                        .collect::<Result<_>>()?
                }
                _ => {
                    let fc = two_stage_config(cfg, n, c.d())?;
                    let c_th = (fc.d1.threshold(p.alpha) as f64 - fc.d1.mean()).max(0.0);
                    let s = fc.d2.variance();
                    items
                        .iter()
                        .map(|&i| {
                            let fi = f[i as usize - 1];
                            fme_error(fi, nf, p.beta, s, eta_bound(fi, nf, p.beta, c_th))
                        })
                        .collect()
                }
            };
            rows.push(PredictorRow::new("mse", mean(&per_item), measured_mse));
            let c_tot = match p.kind {
                ProtocolId::Lnf => lnf_c_tot(
                    nf,
                    c.d() as f64,
                    single_stage_dist(cfg)?.mean(),
                    p.beta,
                    sizes.tau1 as f64,
                ),
                ProtocolId::Ch => {
                    let b = single_stage_b(cfg, n, c.d()) as f64;
                    ch_c_tot(
                        nf,
                        b,
                        single_stage_dist(cfg)?.mean(),
                        p.beta,
                        sizes.tau1 as f64,
                    )
                }
                _ => {
                    let fc = two_stage_config(cfg, n, c.d())?;
                    fme_comm_bound(&CommInput {
                        n: nf,
                        d: c.d() as f64,
                        b: fc.b as f64,
                        l: fc.l as f64,
                        beta: p.beta,
                        alpha: p.alpha,
                        mu1: fc.d1.mean(),
                        mu2: fc.d2.mean(),
                        sizes,
                    })
                    .c_tot()
                }
            };
            rows.push(PredictorRow::new("c_tot", c_tot, measured_tot));
        }
        (Dataset::Kv(kv), ProtocolId::Kv) => {
            let (phi, psi) = true_kv_statistics(kv);
            let sq = kv_value_second_moments(kv);
            let fc = two_stage_config(cfg, n, kv_domain(kv.d(), p.kappa))?;
            let c_th = (fc.d1.threshold(p.alpha) as f64 - fc.d1.mean()).max(0.0);
            let items = top_k(&phi, k);
            let acc: Vec<KvAccuracy> = items
                .iter()
                .map(|&i| {
                    let (ph, ps) = (phi[i as usize - 1], psi[i as usize - 1]);
                    let kf = p.kappa as f64;
                    kv_accuracy(&KvAccuracyInput {
                        phi: ph,
                        psi: ps,
                        value_sq: sq[i as usize - 1],
                        n: nf,
                        beta: p.beta,
                        kappa: kf,
                        sigma2_sq: fc.d2.variance(),
                        eta: eta_bound(ph / kf, nf, p.beta, c_th),
                    })
                })
                .collect();
            let measured_psi = mean(&trials.iter().map(|m| m.mse_psi).collect::<Vec<_>>());
            rows.push(PredictorRow::new(
                "mse_phi",
                mean(&acc.iter().map(|a| a.phi_loss).collect::<Vec<_>>()),
                measured_mse,
            ));
            rows.push(PredictorRow::new(
                "mse_psi",
                mean(&acc.iter().map(|a| a.psi_loss).collect::<Vec<_>>()),
                measured_psi,
            ));
        }
        (_, kind) => return Err(Error::Config(format!("no predictor for {kind:?}"))),
    }
    Ok(rows)
}

/// Hash function used by the first trial, for reporting.
pub fn first_trial_hash(cfg: &ExperimentConfig, d: u32, b: u32) -> Result<HashFunction> {
    family(cfg).sample(d, b, &mut hash_rng(&Rng::new(cfg.seed).child("trial", 0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::parse(text, &[]).unwrap()
    }

    #[test]
    fn every_protocol_runs() {
        for kind in ["lnf", "ch", "gh", "fme", "proposal_star", "grr"] {
            let c = cfg(&format!(
                "trials = 2\n[protocol]\nkind = \"{kind}\"\n[dataset]\nn = 200\nd = 30"
            ));
            let row = measure(&c, Metric::Mse, 0.0).unwrap();
            assert!(row.mean.is_finite(), "{kind}");
        }
        for kind in ["kv", "kv_pair"] {
            let c = cfg(&format!(
                "trials = 2\n[protocol]\nkind = \"{kind}\"\nkappa = 2\n[dataset]\nsource = \"kv\"\nn = 200\nd = 10\npairs = [1, 3]"
            ));
            assert!(
                measure(&c, Metric::MsePsi, 0.0).unwrap().mean.is_finite(),
                "{kind}"
            );
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let c = cfg("trials = 3\n[dataset]\nn = 300\nd = 40\n[sweep]\nvalues = [0.5, 2.0]");
        let a = run_sweep(&c).unwrap();
        assert_eq!(a, run_sweep(&c).unwrap());
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn collusion_sweep_is_flat_for_fme() {
        let c = cfg("[sweep]\nmetric = \"actual_eps\"\nvalues = [0.0, 0.5, 0.9]");
        assert!(run_sweep(&c).unwrap().iter().all(|r| r.mean == 1.0));
    }

    #[test]
    fn predictor_rows() {
        for kind in ["lnf", "ch", "fme"] {
            let c = cfg(&format!(
                "trials = 4\n[protocol]\nkind = \"{kind}\"\n[dataset]\nn = 500\nd = 20"
            ));
            let rows = predict(&c).unwrap();
            assert_eq!(rows.len(), 2, "{kind}");
            assert!(
                rows.iter().all(|r| r.predicted > 0.0 && r.measured > 0.0),
                "{kind}"
            );
        }
        let c = cfg(
            "trials = 2\n[protocol]\nkind = \"kv\"\n[dataset]\nsource = \"kv\"\nn = 300\nd = 8",
        );
        assert_eq!(predict(&c).unwrap().len(), 2);
    }

    #[test]
    fn attack_rows_for_kv_have_both_gains() {
        let c = cfg(
            "trials = 2\n[protocol]\nkind = \"kv\"\n[dataset]\nsource = \"kv\"\nn = 300\nd = 8",
        );
        let rows = attack_rows(&c, &[0.1]).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.protocol.as_str()).collect::<Vec<_>>(),
            ["kv-phi", "kv-psi"]
        );
    }

    #[test]
    fn grr_inverse() {
        let e0 = grr_eps0_for(1.0, 1e6, 1e-12);
        assert!((amplify(e0, 1e6, 1e-12) - 1.0).abs() < 1e-9);
    }
}
