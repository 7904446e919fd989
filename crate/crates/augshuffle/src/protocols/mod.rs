//! Protocol runs over the three-party fabric.
//!
//! Every protocol reduces to one of two engines. The single-stage engine
//! (LNF, CH, GH, pure-shuffle GRR) has users send `E_d[s]` for a symbol `s`;
//! the shuffler samples, adds dummies per symbol and shuffles. The
//! two-stage engine (FME, KV, Proposal*) adds collector-side filtering on hash
//! values and a second dummy stage over the selected symbols.
//!
//! [`ExecMode::Wire`] encrypts and serializes every message. [`ExecMode::Tally`]
//! keeps counts only and charges the transcript analytically. Both modes
//! consume the same randomness, so they return identical estimates.

pub mod ch;
pub mod filter;
pub mod fme;
pub mod grr;
pub mod kv;
pub mod lnf;

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crypto::{CipherSuite, KeyPair, LayeredCiphertext, Payload};
use crate::data::{FrequencyEstimate, KvEstimate};
use crate::dummy::{bernoulli, two_sided_geometric, DummyCountDistribution};
use crate::error::{Error, Result};
use crate::rng::{Rng, StreamFamily};
use crate::transport::{Message, Network, Party, Transcript};

pub use ch::{ch_run, gh_run};
pub use filter::{filter_items, FilterResult};
pub use fme::{fme_run, proposal_star_run, FmeConfig};
pub use grr::{grr_probabilities, pure_grr_run};
pub use kv::{kv_domain, kv_pair_level_run, kv_run, KvFake};
pub use lnf::lnf_run;

/// How messages are carried.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    /// Encrypt, serialize and route every message.
    #[default]
    Wire,
    /// Aggregate counts and charge sizes without materializing messages.
    Tally,
}

/// Execution options shared by every protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub mode: ExecMode,
    pub suite: CipherSuite,
    /// Encrypt user reports on the rayon pool.
    pub parallel: bool,
}

impl RunOptions {
    pub fn wire() -> Self {
        RunOptions::default()
    }

    pub fn tally() -> Self {
        RunOptions {
            mode: ExecMode::Tally,
            ..RunOptions::default()
        }
    }
}

/// Shuffler randomness supplied from outside, for replaying fixed runs.
///
/// Permutations are 0-based: output position `k` carries list entry `perm[k]`,
/// where the list holds kept reports in user order followed by dummies in
/// ascending symbol order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injected {
    pub keep: Option<Vec<bool>>,
    pub dummies1: Option<Vec<u64>>,
    pub dummies2: Option<Vec<u64>>,
    pub perm1: Option<Vec<usize>>,
    pub perm2: Option<Vec<usize>>,
}

/// Plaintexts in the order the collector received them (Wire mode only).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub stage1_hashes: Vec<u32>,
    pub stage1_items: Vec<Payload>,
    pub stage2_items: Vec<Payload>,
}

/// Message counts of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    /// Reports entering the shuffler, genuine plus fake.
    pub n_total: usize,
    /// Reports kept by sampling.
    pub kept: usize,
    pub dummies1: u64,
    pub dummies2: u64,
    /// Stage-one messages the collector replaced with ⊥.
    pub replaced: usize,
}

/// Estimates produced by a run.
#[derive(Clone, Debug, PartialEq)]
pub enum Estimate {
    Frequency(FrequencyEstimate),
    KeyValue(KvEstimate),
}

/// Result of one protocol run.
#[derive(Clone, Debug)]
pub struct ProtocolOutput {
    pub estimate: Estimate,
    pub filter: Option<FilterResult>,
    pub transcript: Transcript,
    pub stats: RunStats,
    pub trace: Option<Trace>,
}

impl ProtocolOutput {
    pub fn frequencies(&self) -> Result<&FrequencyEstimate> {
        match &self.estimate {
            Estimate::Frequency(f) => Ok(f),
            Estimate::KeyValue(_) => {
                Err(Error::Protocol("run produced key-value estimates".into()))
            }
        }
    }

    pub fn kv(&self) -> Result<&KvEstimate> {
        match &self.estimate {
            Estimate::KeyValue(k) => Ok(k),
            Estimate::Frequency(_) => {
                Err(Error::Protocol("run produced frequency estimates".into()))
            }
        }
    }

    /// Selected items Λ, empty for unfiltered protocols.
    pub fn selected(&self) -> &[u32] {
        self.filter
            .as_ref()
            .map(|f| f.items.as_slice())
            .unwrap_or(&[])
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Config(format!(
            "sampling probability {beta} outside (0, 1]"
        )));
    }
    Ok(())
}

fn check_perm(p: &[usize], len: usize) -> Result<()> {
    let mut seen = vec![false; len];
    if p.len() != len {
        return Err(Error::Replay(format!(
            "permutation of length {} for {len} messages",
            p.len()
        )));
    }
    for &i in p {
        if i >= len || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Replay(
                "permutation entries must be distinct and in range".into(),
            ));
        }
    }
    Ok(())
}

/// Shuffler randomness: sampling, dummy counts and permutations.
struct Draws<'a> {
    keep: ChaCha12Rng,
    z1: ChaCha12Rng,
    z2: StreamFamily,
    perm1: ChaCha12Rng,
    perm2: ChaCha12Rng,
    inj: Option<&'a Injected>,
    n_keep: usize,
    n_z1: usize,
    n_z2: usize,
}

fn injected_at<T: Copy>(v: &Option<Vec<T>>, i: usize, what: &str) -> Result<Option<T>> {
    match v {
        None => Ok(None),
        Some(v) => v
            .get(i)
            .copied()
            .map(Some)
            .ok_or_else(|| Error::Replay(format!("{what}: too few entries"))),
    }
}

impl<'a> Draws<'a> {
    fn new(rng: &Rng, inj: Option<&'a Injected>) -> Self {
        let s = rng.child("shuffler", 0);
        Draws {
            keep: s.stream("keep"),
            z1: s.stream("dummies1"),
            z2: s.family("dummies2"),
            perm1: s.stream("perm1"),
            perm2: s.stream("perm2"),
            inj,
            n_keep: 0,
            n_z1: 0,
            n_z2: 0,
        }
    }

    fn keep(&mut self, beta: f64) -> Result<bool> {
        let i = self.n_keep;
        self.n_keep += 1;
        match self
            .inj
            .map(|j| injected_at(&j.keep, i, "keep"))
            .transpose()?
            .flatten()
        {
            Some(k) => Ok(k),
            None => Ok(bernoulli(beta, &mut self.keep)),
        }
    }

    fn z1(&mut self, d: &DummyCountDistribution) -> Result<u64> {
        let i = self.n_z1;
        self.n_z1 += 1;
        match self
            .inj
            .map(|j| injected_at(&j.dummies1, i, "dummies1"))
            .transpose()?
            .flatten()
        {
            Some(z) => Ok(z),
            None => Ok(d.sample(&mut self.z1)),
        }
    }

    fn z2(&mut self, symbol: u32, d: &DummyCountDistribution) -> Result<u64> {
        let i = self.n_z2;
        self.n_z2 += 1;
        match self
            .inj
            .map(|j| injected_at(&j.dummies2, i, "dummies2"))
            .transpose()?
            .flatten()
        {
            Some(z) => Ok(z),
            None => Ok(d.sample(&mut self.z2.get(symbol as u64))),
        }
    }

    fn perm(&mut self, second: bool, len: usize) -> Result<Vec<usize>> {
        let given = self.inj.and_then(|j| {
            if second {
                j.perm2.as_ref()
            } else {
                j.perm1.as_ref()
            }
        });
        if let Some(p) = given {
            check_perm(p, len)?;
            return Ok(p.clone());
        }
        let mut p: Vec<usize> = (0..len).collect();
        p.shuffle(if second {
            &mut self.perm2
        } else {
            &mut self.perm1
        });
        Ok(p)
    }

    /// Fails if injected vectors were not consumed exactly.
    fn finish(&self) -> Result<()> {
        let Some(j) = self.inj else { return Ok(()) };
        for (v, used, what) in [
            (j.keep.as_ref().map(|v| v.len()), self.n_keep, "keep"),
            (j.dummies1.as_ref().map(|v| v.len()), self.n_z1, "dummies1"),
            (j.dummies2.as_ref().map(|v| v.len()), self.n_z2, "dummies2"),
        ] {
            if let Some(len) = v {
                if len != used {
                    return Err(Error::Replay(format!(
                        "{what}: {len} entries given, {used} used"
                    )));
                }
            }
        }
        Ok(())
    }
}

struct Keys {
    collector: KeyPair,
    shuffler: KeyPair,
}

fn keys(suite: &CipherSuite, rng: &Rng) -> Result<Keys> {
    Ok(Keys {
        collector: suite.keygen(&mut rng.child("collector", 0).stream("keygen"))?,
        shuffler: suite.keygen(&mut rng.child("shuffler", 0).stream("keygen"))?,
    })
}

/// Encrypts one payload per user with a per-user stream.
fn encrypt_users<F>(
    n: usize,
    rng: &Rng,
    parallel: bool,
    f: F,
) -> Result<Vec<Vec<LayeredCiphertext>>>
where
    F: Fn(usize, &mut ChaCha12Rng) -> Result<Vec<LayeredCiphertext>> + Sync,
{
    let fam = rng.child("user", 0).family("enc");
    let one = |j: usize| f(j, &mut fam.get(j as u64));
    if parallel {
        (0..n).into_par_iter().map(one).collect()
    } else {
        (0..n).map(one).collect()
    }
}

fn expect_ciphertexts(m: Message, k: usize) -> Result<Vec<LayeredCiphertext>> {
    match m {
        Message::Ciphertexts(cs) if cs.len() == k => Ok(cs),
        other => Err(Error::Protocol(format!(
            "expected {k} ciphertexts, got {other:?}"
        ))),
    }
}

fn symbol_of(p: Payload, symbols: u32) -> Result<u32> {
    if p.is_bottom() || p.0 > symbols {
        return Err(Error::Protocol(format!(
            "payload {} outside [1, {symbols}]",
            p.0
        )));
    }
    Ok(p.0)
}

/// Parameters of the single-stage engine.
pub(crate) struct SingleStage<'a> {
    /// Symbols are `1..=symbols`.
    pub symbols: u32,
    pub dummies: Option<&'a DummyCountDistribution>,
    pub beta: f64,
}

pub(crate) struct SingleOut {
    /// Count of symbol `s` at index `s - 1`.
    pub counts: Vec<u64>,
    pub transcript: Transcript,
    pub stats: RunStats,
    pub trace: Option<Trace>,
}

pub(crate) fn run_single(
    reports: &[u32],
    cfg: &SingleStage,
    opts: &RunOptions,
    rng: &Rng,
    inj: Option<&Injected>,
) -> Result<SingleOut> {
    check_beta(cfg.beta)?;
    let n = reports.len();
    let s_max = cfg.symbols;
    if let Some(&bad) = reports.iter().find(|&&s| s == 0 || s > s_max) {
        return Err(Error::Domain(format!(
            "report symbol {bad} outside [1, {s_max}]"
        )));
    }
    let tau1 = opts.suite.tau(1);
    let mut draws = Draws::new(rng, inj);
    let mut net = Network::new(n);
    let mut stats = RunStats {
        n_total: n,
        ..RunStats::default()
    };
    let mut counts = vec![0u64; s_max as usize];
    let mut trace = None;
    let t0 = Instant::now();
    match opts.mode {
        ExecMode::Tally => {
            for j in 0..n {
                net.charge(Party::User(j as u32), Party::Shuffler, 1, tau1)?;
            }
            for &s in reports {
                if draws.keep(cfg.beta)? {
                    counts[s as usize - 1] += 1;
                    stats.kept += 1;
                }
            }
            if let Some(d) = cfg.dummies {
                for c in counts.iter_mut() {
                    let z = draws.z1(d)?;
                    *c += z;
                    stats.dummies1 += z;
                }
            }
            net.record_stage("shuffle", t0.elapsed());
            net.charge(
                Party::Shuffler,
                Party::Collector,
                stats.kept as u64 + stats.dummies1,
                tau1,
            )?;
        }
        ExecMode::Wire => {
            let suite = opts.suite;
            let k = keys(&suite, rng)?;
            let pk_d = k.collector.public().clone();
            let cts = encrypt_users(n, rng, opts.parallel, |j, r| {
                Ok(vec![suite.encrypt_layers(
                    Payload(reports[j]),
                    &[&pk_d],
                    r,
                )?])
            })?;
            for (j, ct) in cts.into_iter().enumerate() {
                net.send(
                    Party::User(j as u32),
                    Party::Shuffler,
                    &Message::Ciphertexts(ct),
                )?;
            }
            net.record_stage("users", t0.elapsed());
            let t1 = Instant::now();
            let mut list: Vec<(LayeredCiphertext, Payload)> = Vec::new();
            for j in 0..n {
                let msgs = net.recv_all(Party::User(j as u32), Party::Shuffler)?;
                for m in msgs {
                    let mut cs = expect_ciphertexts(m, 1)?;
                    if draws.keep(cfg.beta)? {
                        list.push((cs.remove(0), Payload(reports[j])));
                    }
                }
            }
            stats.kept = list.len();
            if let Some(d) = cfg.dummies {
                let mut enc = rng.child("shuffler", 0).stream("enc");
                for s in 1..=s_max {
                    let z = draws.z1(d)?;
                    stats.dummies1 += z;
                    for _ in 0..z {
                        list.push((
                            suite.encrypt_layers(Payload(s), &[&pk_d], &mut enc)?,
                            Payload(s),
                        ));
                    }
                }
            }
            let perm = draws.perm(false, list.len())?;
            let mut order = Vec::with_capacity(list.len());
            for &i in &perm {
                net.send(
                    Party::Shuffler,
                    Party::Collector,
                    &Message::Ciphertexts(vec![list[i].0.clone()]),
                )?;
                order.push(list[i].1);
            }
            net.record_stage("shuffle", t1.elapsed());
            let t2 = Instant::now();
            let mut seen = Vec::new();
            for m in net.recv_all(Party::Shuffler, Party::Collector)? {
                let ct = expect_ciphertexts(m, 1)?.remove(0);
                let p = suite.decrypt_layer(&ct, &k.collector)?.into_payload()?;
                counts[symbol_of(p, s_max)? as usize - 1] += 1;
                seen.push(p);
            }
            net.record_stage("collect", t2.elapsed());
            trace = Some(Trace {
                stage1_hashes: Vec::new(),
                stage1_items: seen,
                stage2_items: Vec::new(),
            });
            debug_assert_eq!(trace.as_ref().map(|t| &t.stage1_items), Some(&order));
        }
    }
    draws.finish()?;
    Ok(SingleOut {
        counts,
        transcript: net.close(),
        stats,
        trace,
    })
}

/// Parameters of the two-stage engine.
pub(crate) struct TwoStage<'a> {
    /// Hash values are `1..=b`.
    pub b: u32,
    /// Symbols are `1..=symbols`.
    pub symbols: u32,
    pub d1: &'a DummyCountDistribution,
    pub d2: &'a DummyCountDistribution,
    pub beta: f64,
    pub alpha: f64,
    pub l: usize,
    /// Size of the domain of ids in the selected-set message.
    pub lambda_domain: u32,
    /// Ratio of the collector-side two-sided geometric noise, if any.
    pub noise: Option<f64>,
}

pub(crate) struct TwoOut {
    /// Selected symbols with their (noisy) second-stage counts, ascending.
    pub counts: Vec<(u32, i64)>,
    pub filter: FilterResult,
    pub transcript: Transcript,
    pub stats: RunStats,
    pub trace: Option<Trace>,
}

/// Maps selected hash values to `(Λ, selected symbols)` and `Λ` to symbols.
pub(crate) trait Expansion {
    fn lambda(&self, hashes: &[u32]) -> Result<Vec<u32>>;
    fn symbols(&self, lambda: &[u32]) -> Vec<u32>;
}

struct Noise {
    stage1: StreamFamily,
    stage2: StreamFamily,
    p: f64,
}

impl Noise {
    fn new(rng: &Rng, p: f64) -> Self {
        let c = rng.child("collector", 0);
        Noise {
            stage1: c.family("noise1"),
            stage2: c.family("noise2"),
            p,
        }
    }

    fn hash(&self, v: u32) -> i64 {
        two_sided_geometric(self.p, &mut self.stage1.get(v as u64))
    }

    fn symbol(&self, s: u32) -> i64 {
        two_sided_geometric(self.p, &mut self.stage2.get(s as u64))
    }
}

fn select(
    cfg: &TwoStage,
    mut hash_counts: Vec<i64>,
    noise: Option<&Noise>,
    exp: &dyn Expansion,
) -> Result<(FilterResult, Vec<u32>)> {
    if let Some(nz) = noise {
        for (i, c) in hash_counts.iter_mut().enumerate() {
            *c += nz.hash(i as u32 + 1);
        }
    }
    let z_th = cfg.d1.threshold(cfg.alpha);
    let hashes = filter::select_hashes(&hash_counts, z_th, cfg.l);
    let items = exp.lambda(&hashes)?;
    let symbols = exp.symbols(&items);
    Ok((
        FilterResult {
            hashes,
            items,
            z_th,
        },
        symbols,
    ))
}

pub(crate) fn run_two_stage(
    reports: &[(u32, u32)],
    cfg: &TwoStage,
    exp: &dyn Expansion,
    opts: &RunOptions,
    rng: &Rng,
    inj: Option<&Injected>,
) -> Result<TwoOut> {
    check_beta(cfg.beta)?;
    if cfg.l == 0 || cfg.l > cfg.b as usize {
        return Err(Error::Config(format!(
            "l={} outside [1, b={}]",
            cfg.l, cfg.b
        )));
    }
    for &(v, s) in reports {
        if v == 0 || v > cfg.b || s == 0 || s > cfg.symbols {
            return Err(Error::Domain(format!(
                "report ({v}, {s}) outside [1, {}] x [1, {}]",
                cfg.b, cfg.symbols
            )));
        }
    }
    let n = reports.len();
    let (tau1, tau2, tau3) = (opts.suite.tau(1), opts.suite.tau(2), opts.suite.tau(3));
    let mut draws = Draws::new(rng, inj);
    let noise = cfg.noise.map(|p| Noise::new(rng, p));
    let mut net = Network::new(n);
    let mut stats = RunStats {
        n_total: n,
        ..RunStats::default()
    };
    let mut trace = None;
    let t0 = Instant::now();
    let (filter, counts) = match opts.mode {
        ExecMode::Tally => {
            for j in 0..n {
                net.charge(Party::User(j as u32), Party::Shuffler, 1, tau1 + tau3)?;
            }
            let mut hash_counts = vec![0i64; cfg.b as usize];
            let mut kept: HashMap<u32, u64> = HashMap::new();
            for &(v, s) in reports {
                if draws.keep(cfg.beta)? {
                    hash_counts[v as usize - 1] += 1;
                    *kept.entry(s).or_default() += 1;
                    stats.kept += 1;
                }
            }
            for c in hash_counts.iter_mut() {
                let z = draws.z1(cfg.d1)?;
                *c += z as i64;
                stats.dummies1 += z;
            }
            let n1 = stats.kept as u64 + stats.dummies1;
            net.record_stage("shuffle1", t0.elapsed());
            net.charge(Party::Shuffler, Party::Collector, n1, tau1 + tau3)?;
            let t1 = Instant::now();
            let (filter, symbols) = select(cfg, hash_counts.clone(), noise.as_ref(), exp)?;
            let mut selected_hash = vec![false; cfg.b as usize + 1];
            for &v in &filter.hashes {
                selected_hash[v as usize] = true;
            }
            stats.replaced = hash_counts
                .iter()
                .enumerate()
                .filter(|(i, _)| !selected_hash[i + 1])
                .map(|(_, &c)| c as usize)
                .sum();
            net.charge(Party::Collector, Party::Shuffler, n1, tau2)?;
            net.send_selected(&filter.items, cfg.lambda_domain, tau1, false)?;
            net.record_stage("filter", t1.elapsed());
            let t2 = Instant::now();
            let mut counts = Vec::with_capacity(symbols.len());
            for &s in &symbols {
                let z = draws.z2(s, cfg.d2)?;
                stats.dummies2 += z;
                counts.push((s, (kept.get(&s).copied().unwrap_or(0) + z) as i64));
            }
            net.charge(
                Party::Shuffler,
                Party::Collector,
                stats.kept as u64 + stats.dummies2,
                tau1,
            )?;
            net.record_stage("shuffle2", t2.elapsed());
            (filter, counts)
        }
        ExecMode::Wire => {
            let suite = opts.suite;
            let k = keys(&suite, rng)?;
            let (pk_d, pk_s) = (k.collector.public().clone(), k.shuffler.public().clone());
            let cts = encrypt_users(n, rng, opts.parallel, |j, r| {
                let (v, s) = reports[j];
                Ok(vec![
                    suite.encrypt_layers(Payload(v), &[&pk_d], r)?,
                    suite.encrypt_layers(Payload(s), &[&pk_d, &pk_s, &pk_d], r)?,
                ])
            })?;
            for (j, ct) in cts.into_iter().enumerate() {
                net.send(
                    Party::User(j as u32),
                    Party::Shuffler,
                    &Message::Ciphertexts(ct),
                )?;
            }
            net.record_stage("users", t0.elapsed());

            // Shuffler, stage one.
            let t1 = Instant::now();
            let mut list: Vec<(Vec<LayeredCiphertext>, u32, Payload)> = Vec::new();
            for (j, &(v, s)) in reports.iter().enumerate() {
                for m in net.recv_all(Party::User(j as u32), Party::Shuffler)? {
                    let cs = expect_ciphertexts(m, 2)?;
                    if draws.keep(cfg.beta)? {
                        list.push((cs, v, Payload(s)));
                    }
                }
            }
            stats.kept = list.len();
            let mut enc_s = rng.child("shuffler", 0).stream("enc");
            for v in 1..=cfg.b {
                let z = draws.z1(cfg.d1)?;
                stats.dummies1 += z;
                for _ in 0..z {
                    let pair = vec![
                        suite.encrypt_layers(Payload(v), &[&pk_d], &mut enc_s)?,
                        suite.encrypt_layers(
                            Payload::BOTTOM,
                            &[&pk_d, &pk_s, &pk_d],
                            &mut enc_s,
                        )?,
                    ];
                    list.push((pair, v, Payload::BOTTOM));
                }
            }
            let pi = draws.perm(false, list.len())?;
            let own_dummy: Vec<bool> = pi.iter().map(|&i| i >= stats.kept).collect();
            let mut tr = Trace::default();
            for &i in &pi {
                net.send(
                    Party::Shuffler,
                    Party::Collector,
                    &Message::Ciphertexts(list[i].0.clone()),
                )?;
                tr.stage1_hashes.push(list[i].1);
                tr.stage1_items.push(list[i].2);
            }
            drop(list);
            net.record_stage("shuffle1", t1.elapsed());

            // Collector: count, filter, replace.
            let t2 = Instant::now();
            let mut received = Vec::new();
            let mut hash_counts = vec![0i64; cfg.b as usize];
            for m in net.recv_all(Party::Shuffler, Party::Collector)? {
                let mut cs = expect_ciphertexts(m, 2)?;
                let hv = suite.decrypt_layer(&cs[0], &k.collector)?.into_payload()?;
                let v = symbol_of(hv, cfg.b)?;
                hash_counts[v as usize - 1] += 1;
                let double = suite
                    .decrypt_layer(&cs.swap_remove(1), &k.collector)?
                    .into_layer()?;
                received.push((v, double));
            }
            let (filter, _) = select(cfg, hash_counts, noise.as_ref(), exp)?;
            let mut selected_hash = vec![false; cfg.b as usize + 1];
            for &v in &filter.hashes {
                selected_hash[v as usize] = true;
            }
            let mut enc_c = rng.child("collector", 0).stream("enc");
            for (v, double) in received {
                let out = if selected_hash[v as usize] {
                    double
                } else {
                    stats.replaced += 1;
                    suite.encrypt_layers(Payload::BOTTOM, &[&pk_d, &pk_s], &mut enc_c)?
                };
                net.send(
                    Party::Collector,
                    Party::Shuffler,
                    &Message::Ciphertexts(vec![out]),
                )?;
            }
            net.send_selected(&filter.items, cfg.lambda_domain, tau1, true)?;
            net.record_stage("filter", t2.elapsed());

            // Shuffler, stage two.
            let t3 = Instant::now();
            let mut doubles = Vec::new();
            let mut lambda = None;
            for m in net.recv_all(Party::Collector, Party::Shuffler)? {
                match m {
                    Message::Items { items, .. } => lambda = Some(items),
                    m => doubles.push(expect_ciphertexts(m, 1)?.remove(0)),
                }
            }
            let lambda = lambda.ok_or_else(|| Error::Protocol("selected set missing".into()))?;
            if doubles.len() != own_dummy.len() {
                return Err(Error::Protocol(format!(
                    "{} messages returned, {} sent",
                    doubles.len(),
                    own_dummy.len()
                )));
            }
            let mut second = Vec::new();
            for (ct, dummy) in doubles.into_iter().zip(&own_dummy) {
                if !dummy {
                    second.push(suite.decrypt_layer(&ct, &k.shuffler)?.into_layer()?);
                }
            }
            if second.len() != stats.kept {
                return Err(Error::Protocol(
                    "dummy removal left a wrong number of messages".into(),
                ));
            }
            let symbols = exp.symbols(&lambda);
            for &s in &symbols {
                let z = draws.z2(s, cfg.d2)?;
                stats.dummies2 += z;
                for _ in 0..z {
                    second.push(suite.encrypt_layers(Payload(s), &[&pk_d], &mut enc_s)?);
                }
            }
            let rho = draws.perm(true, second.len())?;
            for &i in &rho {
                net.send(
                    Party::Shuffler,
                    Party::Collector,
                    &Message::Ciphertexts(vec![second[i].clone()]),
                )?;
            }
            drop(second);
            net.record_stage("shuffle2", t3.elapsed());

            // Collector, estimation counts.
            let t4 = Instant::now();
            let mut tally: BTreeMap<u32, i64> = symbols.iter().map(|&s| (s, 0)).collect();
            let mut bottoms = 0usize;
            for m in net.recv_all(Party::Shuffler, Party::Collector)? {
                let ct = expect_ciphertexts(m, 1)?.remove(0);
                let p = suite.decrypt_layer(&ct, &k.collector)?.into_payload()?;
                tr.stage2_items.push(p);
                if p.is_bottom() {
                    bottoms += 1;
                } else if let Some(c) = tally.get_mut(&p.0) {
                    *c += 1;
                }
            }
            if bottoms > stats.replaced {
                return Err(Error::Protocol("more ⊥ received than injected".into()));
            }
            net.record_stage("collect", t4.elapsed());
            trace = Some(tr);
            (filter, tally.into_iter().collect())
        }
    };
    let counts = match &noise {
        Some(nz) => counts
            .into_iter()
            .map(|(s, c)| (s, c + nz.symbol(s)))
            .collect(),
        None => counts,
    };
    draws.finish()?;
    Ok(TwoOut {
        counts,
        filter,
        transcript: net.close(),
        stats,
        trace,
    })
}
