//! Collusion and data-poisoning harness.

use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{amplify, gains_categorical, gains_kv, GainProtocol};
use crate::crypto::SizeModel;
use crate::data::{
    true_frequencies, true_kv_statistics, CategoricalDataset, FrequencyEstimate, KvDataset,
};
use crate::dummy::{bernoulli, DummyCountDistribution, PrivacyBudget};
use crate::error::{Error, Result};
use crate::hashing::{HashFamily, HashFunction};
use crate::protocols::filter::filter_items;
use crate::protocols::{
    ch_run, fme_run, kv_domain, kv_run, lnf_run, FilterResult, FmeConfig, KvFake, RunOptions,
};
use crate::rng::Rng;
use crate::transport::{item_width_bits, Message, Network, Party, Transcript};

/// Index of the victim user in neighboring-database arguments.
pub const VICTIM: u32 = 1;

/// Protocol families for collusion accounting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum CollusionTarget {
    /// Pure shuffle with an `ε0`-LDP randomizer.
    PureShuffle { eps0: f64 },
    /// Any augmented protocol (LNF, CH, GH, FME, KV).
    Augmented,
}

/// Users `Ω` (1-based) colluding with the collector.
#[derive(Clone, Debug, PartialEq)]
pub struct CollusionScenario {
    pub n: usize,
    pub colluders: Vec<u32>,
    pub budget: PrivacyBudget,
}

impl CollusionScenario {
    /// Checks that `Ω ⊆ [n]` has distinct entries and excludes [`VICTIM`].
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for &u in &self.colluders {
            if u == 0 || u as usize > self.n || !seen.insert(u) {
                return Err(Error::Config(format!(
                    "colluder {u} invalid for n={}",
                    self.n
                )));
            }
        }
        if seen.contains(&VICTIM) {
            return Err(Error::Config("the victim cannot collude".into()));
        }
        Ok(())
    }
}

/// Privacy level that survives collusion with `Ω`.
///
/// Pure shuffling loses the colluders' reports from the crowd; augmented
/// protocols rely on shuffler dummies only and keep the target `ε`.
pub fn actual_epsilon(target: CollusionTarget, s: &CollusionScenario) -> Result<f64> {
    s.validate()?;
    Ok(match target {
        CollusionTarget::PureShuffle { eps0 } => {
            amplify(eps0, (s.n - s.colluders.len()) as f64, s.budget.delta)
        }
        CollusionTarget::Augmented => s.budget.eps,
    })
}

/// Targets and the number of injected users.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoisoningScenario {
    /// Target items or keys, 1-based.
    pub targets: Vec<u32>,
    pub n_fake: usize,
}

impl PoisoningScenario {
    /// `λ = n′/(n + n′)`.
    pub fn lambda(&self, n: usize) -> f64 {
        self.n_fake as f64 / (n + self.n_fake) as f64
    }

    fn validate(&self, d: u32) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Config("at least one target is required".into()));
        }
        if self.targets.iter().any(|&t| t == 0 || t > d) {
            return Err(Error::Config(format!("targets must lie in [1, {d}]")));
        }
        Ok(())
    }
}

/// How CH fakes choose their hash value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ChVariant {
    /// Fakes send the first target; the gain counts the first target only.
    Single,
    /// Fakes send the first target; the gain counts every target sharing its
    /// hash value under the sampled function.
    Colliding,
}

/// Categorical protocol under attack. Each trial draws a fresh hash.
#[derive(Clone, Debug)]
pub enum MgaProtocol {
    Lnf {
        dist: DummyCountDistribution,
        beta: f64,
    },
    Ch {
        dist: DummyCountDistribution,
        beta: f64,
        b: u32,
        family: HashFamily,
        variant: ChVariant,
    },
    Fme {
        cfg: FmeConfig,
        family: HashFamily,
    },
}

impl MgaProtocol {
    pub fn name(&self) -> &'static str {
        match self {
            MgaProtocol::Lnf { .. } => "lnf",
            MgaProtocol::Ch {
                variant: ChVariant::Single,
                ..
            } => "ch-single",
            MgaProtocol::Ch {
                variant: ChVariant::Colliding,
                ..
            } => "ch-colliding",
            MgaProtocol::Fme { .. } => "fme",
        }
    }
}

/// Empirical gain over paired trials and its analytic maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GainEstimate {
    pub analytic: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub trials: usize,
    /// Mean size of the counted target set.
    pub targets: f64,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

struct Trial {
    gain: f64,
    analytic: f64,
    counted: usize,
    missed: Vec<bool>,
}

fn gain_over(clean: &FrequencyEstimate, poisoned: &FrequencyEstimate, t: &[u32]) -> f64 {
    t.iter().map(|&i| poisoned.get(i) - clean.get(i)).sum()
}

/// Maximal gain attack: `n′` fakes each report a target item. Returns the
/// mean paired difference `Σ_{i∈T}(f̂′_i − f̂_i)` and the matching analytic
/// gain; for FME the `η_i` term uses the empirical non-selection rate of the
/// clean runs.
pub fn mga_categorical(
    protocol: &MgaProtocol,
    data: &CategoricalDataset,
    scenario: &PoisoningScenario,
    trials: usize,
    opts: &RunOptions,
    rng: &Rng,
) -> Result<GainEstimate> {
    scenario.validate(data.d())?;
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    let f = true_frequencies(data);
    let lambda = scenario.lambda(data.n());
    let t1 = scenario.targets[0];
    let results = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Trial> {
            let r = rng.child("attack", t as u64);
            let mut hr = r.stream("hash");
            let fakes_for = |m: u32| vec![m; scenario.n_fake];
            match protocol {
                MgaProtocol::Lnf { dist, beta } => {
                    let clean = lnf_run(data, &[], dist, *beta, opts, &r, None)?;
                    let pois = lnf_run(data, &fakes_for(t1), dist, *beta, opts, &r, None)?;
                    let g = gain_over(clean.frequencies()?, pois.frequencies()?, &scenario.targets);
                    let a =
                        gains_categorical(lambda, &f, &scenario.targets, &[], GainProtocol::Lnf);
                    Ok(Trial {
                        gain: g,
                        analytic: a,
                        counted: scenario.targets.len(),
                        missed: Vec::new(),
                    })
                }
                MgaProtocol::Ch {
                    dist,
                    beta,
                    b,
                    family,
                    variant,
                } => {
                    let h = family.sample(data.d(), *b, &mut hr)?;
                    let counted: Vec<u32> = match variant {
                        ChVariant::Single => vec![t1],
                        ChVariant::Colliding => {
                            let m = h.hash(t1)?;
                            let mut v = Vec::new();
                            for &x in &scenario.targets {
                                if h.hash(x)? == m {
                                    v.push(x);
                                }
                            }
                            v
                        }
                    };
                    let clean = ch_run(data, &[], dist, *beta, &h, opts, &r)?;
                    let pois = ch_run(data, &fakes_for(t1), dist, *beta, &h, opts, &r)?;
                    let g = gain_over(clean.frequencies()?, pois.frequencies()?, &counted);
                    let kind = match variant {
                        ChVariant::Single => GainProtocol::ChSingle,
                        ChVariant::Colliding => GainProtocol::ChColliding,
                    };
                    let a = gains_categorical(lambda, &f, &counted, &[], kind);
                    Ok(Trial {
                        gain: g,
                        analytic: a,
                        counted: counted.len(),
                        missed: Vec::new(),
                    })
                }
                MgaProtocol::Fme { cfg, family } => {
                    let h = family.sample(data.d(), cfg.b, &mut hr)?;
                    let clean = fme_run(data, &[], cfg, &h, opts, &r, None)?;
                    let n_t = scenario.targets.len();
                    let fakes: Vec<u32> = (0..scenario.n_fake)
                        .map(|k| scenario.targets[k % n_t])
                        .collect();
                    let pois = fme_run(data, &fakes, cfg, &h, opts, &r, None)?;
                    let cf = clean.frequencies()?;
                    let g = gain_over(cf, pois.frequencies()?, &scenario.targets);
                    let missed = scenario.targets.iter().map(|&i| !cf.reported(i)).collect();
                    Ok(Trial {
                        gain: g,
                        analytic: 0.0,
                        counted: n_t,
                        missed,
                    })
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let gains: Vec<f64> = results.iter().map(|t| t.gain).collect();
    let (empirical, stderr) = mean_se(&gains);
    let analytic = match protocol {
        MgaProtocol::Fme { .. } => {
            let eta: Vec<f64> = (0..scenario.targets.len())
                .map(|k| results.iter().filter(|t| t.missed[k]).count() as f64 / trials as f64)
                .collect();
            gains_categorical(lambda, &f, &scenario.targets, &eta, GainProtocol::Fme)
        }
        _ => results.iter().map(|t| t.analytic).sum::<f64>() / trials as f64,
    };
    let targets = results.iter().map(|t| t.counted as f64).sum::<f64>() / trials as f64;
    Ok(GainEstimate {
        analytic,
        empirical,
        stderr,
        trials,
        targets,
    })
}

/// KV gains with their analytic maxima.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KvGainEstimate {
    pub phi: GainEstimate,
    pub psi: GainEstimate,
}

/// Maximal gain attack on KV: each fake sends `⟨t, +1⟩` for a uniformly
/// drawn target `t`. Unselected keys read as `(Φ̂, Ψ̂) = (0, 1)`.
#[allow(clippy::too_many_arguments)]
pub fn m2ga_kv(
    data: &KvDataset,
    scenario: &PoisoningScenario,
    cfg: &FmeConfig,
    kappa: usize,
    family: HashFamily,
    trials: usize,
    opts: &RunOptions,
    rng: &Rng,
) -> Result<KvGainEstimate> {
    scenario.validate(data.d())?;
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    let ext = kv_domain(data.d(), kappa);
    let t = &scenario.targets;
    let results = (0..trials)
        .into_par_iter()
        .map(|k| -> Result<(f64, f64, Vec<bool>)> {
            let r = rng.child("attack", k as u64);
            let h = family.sample(ext, cfg.b, &mut r.stream("hash"))?;
            let mut pick = r.stream("fakes");
            let fakes: Vec<KvFake> = (0..scenario.n_fake)
                .map(|_| KvFake {
                    key: t[pick.gen_range(0..t.len())],
                    positive: true,
                })
                .collect();
            let clean = kv_run(data, &[], cfg, kappa, &h, opts, &r, None)?;
            let pois = kv_run(data, &fakes, cfg, kappa, &h, opts, &r, None)?;
            let (c, p) = (clean.kv()?, pois.kv()?);
            let gp = t.iter().map(|&i| p.phi(i) - c.phi(i)).sum();
            let gs = t.iter().map(|&i| p.psi(i) - c.psi(i)).sum();
            Ok((gp, gs, t.iter().map(|&i| !c.reported(i)).collect()))
        })
        .collect::<Result<Vec<_>>>()?;
    let eta: Vec<f64> = (0..t.len())
        .map(|k| results.iter().filter(|r| r.2[k]).count() as f64 / trials as f64)
        .collect();
    let (a_phi, a_psi) = gains_kv(data, t, scenario.n_fake, kappa, &eta);
    let (m_phi, s_phi) = mean_se(&results.iter().map(|r| r.0).collect::<Vec<_>>());
    let (m_psi, s_psi) = mean_se(&results.iter().map(|r| r.1).collect::<Vec<_>>());
    let nt = t.len() as f64;
    Ok(KvGainEstimate {
        phi: GainEstimate {
            analytic: a_phi,
            empirical: m_phi,
            stderr: s_phi,
            trials,
            targets: nt,
        },
        psi: GainEstimate {
            analytic: a_psi,
            empirical: m_psi,
            stderr: s_psi,
            trials,
            targets: nt,
        },
    })
}

/// True `(Φ_T, Ψ_T)` sums over the targets.
pub fn kv_target_totals(data: &KvDataset, targets: &[u32]) -> (f64, f64) {
    let (phi, psi) = true_kv_statistics(data);
    targets.iter().fold((0.0, 0.0), |(a, b), &i| {
        (a + phi[i as usize - 1], b + psi[i as usize - 1])
    })
}

/// One row of an attack report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackRow {
    pub protocol: String,
    pub epsilon: f64,
    pub lambda: f64,
    pub targets: f64,
    pub analytic_gain: f64,
    pub empirical_gain: f64,
    pub stderr: f64,
}

impl AttackRow {
    pub fn new(protocol: impl Into<String>, epsilon: f64, lambda: f64, g: &GainEstimate) -> Self {
        AttackRow {
            protocol: protocol.into(),
            epsilon,
            lambda,
            targets: g.targets,
            analytic_gain: g.analytic,
            empirical_gain: g.empirical,
            stderr: g.stderr,
        }
    }
}

/// Writes attack rows as CSV with the columns
/// `protocol,epsilon,lambda,targets,analytic_gain,empirical_gain,stderr`.
pub fn write_attack_report<W: std::io::Write>(w: W, rows: &[AttackRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// Output of [`two_round_oracle`].
#[derive(Clone, Debug)]
pub struct TwoRoundOutput {
    pub estimate: FrequencyEstimate,
    pub filter: FilterResult,
    pub transcript: Transcript,
}

/// Reference two-round protocol: users first send hashes, the collector
/// broadcasts `Λ` back to every user, and users then send their item or ⊥
/// for an LNF round over `Λ`. Used only as a contrast to the one-round
/// protocols; messages are charged at `sizes.tau1` except the broadcast.
pub fn two_round_oracle(
    data: &CategoricalDataset,
    cfg: &FmeConfig,
    h: &HashFunction,
    sizes: SizeModel,
    rng: &Rng,
) -> Result<TwoRoundOutput> {
    let n = data.n();
    let b = cfg.b;
    if h.domain() != data.d() || h.range() != b {
        return Err(Error::Config("hash must map [d] to [b]".into()));
    }
    let s = rng.child("shuffler", 0);
    let mut keep_r = s.stream("keep");
    let mut z1r = s.stream("dummies1");
    let z2f = s.family("dummies2");
    let mut net = Network::new(n);
    let tau = sizes.tau1;
    let keep: Vec<bool> = (0..n).map(|_| bernoulli(cfg.beta, &mut keep_r)).collect();

    let mut counts = vec![0i64; b as usize];
    for (j, &x) in data.values().iter().enumerate() {
        net.charge(Party::User(j as u32), Party::Shuffler, 1, tau)?;
        if keep[j] {
            counts[h.hash(x)? as usize - 1] += 1;
        }
    }
    let mut sent1 = keep.iter().filter(|&&k| k).count() as u64;
    for c in counts.iter_mut() {
        let z = cfg.d1.sample(&mut z1r);
        *c += z as i64;
        sent1 += z;
    }
    net.charge(Party::Shuffler, Party::Collector, sent1, tau)?;
    let filter = filter_items(&counts, cfg.alpha, &cfg.d1, cfg.l, h)?;

    let broadcast = Message::Items {
        width_bits: item_width_bits(data.d()),
        items: filter.items.clone(),
    };
    let mut item_counts: BTreeMap<u32, u64> = filter.items.iter().map(|&i| (i, 0)).collect();
    for (j, &x) in data.values().iter().enumerate() {
        let u = Party::User(j as u32);
        net.send(Party::Collector, u, &broadcast)?;
        net.recv(Party::Collector, u)?;
        net.charge(u, Party::Shuffler, 1, tau)?;
        if keep[j] {
            if let Some(c) = item_counts.get_mut(&x) {
                *c += 1;
            }
        }
    }
    let mut sent2 = 0u64;
    for (&i, c) in item_counts.iter_mut() {
        let z = cfg.d2.sample(&mut z2f.get(i as u64));
        *c += z;
        sent2 += *c;
    }
    net.charge(Party::Shuffler, Party::Collector, sent2, tau)?;
    let scale = n as f64 * cfg.beta;
    let mu2 = cfg.d2.mean();
    let values = item_counts
        .into_iter()
        .map(|(i, c)| (i, (c as f64 - mu2) / scale))
        .collect();
    Ok(TwoRoundOutput {
        estimate: FrequencyEstimate::Sparse {
            d: data.d(),
            values,
        },
        filter,
        transcript: net.close(),
    })
}
