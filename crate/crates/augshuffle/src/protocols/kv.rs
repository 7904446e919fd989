//! Key-value protocol: padding-and-sampling, sign discretization and
//! key-level filtering (TKV-FK), plus a pair-level filtering ablation.
//!
//! Keys are padded into the extended domain `d' = d + κ − 1`. A sampled pair
//! `⟨k, ±1⟩` becomes the symbol `k` for −1 and `k + d'` for +1.

use std::collections::BTreeMap;

use rand::Rng as _;

use super::{
    filter, run_two_stage, Estimate, Expansion, FmeConfig, Injected, ProtocolOutput, RunOptions,
    TwoStage,
};
use crate::data::{KvDataset, KvEstimate};
use crate::error::{Error, Result};
use crate::hashing::HashFunction;
use crate::rng::Rng;

/// Pair sent by an injected user, bypassing padding and sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KvFake {
    pub key: u32,
    pub positive: bool,
}

/// Size `d + κ − 1` of the padded key domain.
pub fn kv_domain(d: u32, kappa: usize) -> u32 {
    d + kappa as u32 - 1
}

fn symbol(key: u32, positive: bool, ext: u32) -> u32 {
    if positive {
        key + ext
    } else {
        key
    }
}

/// Pads, samples one pair and discretizes its value for every user.
fn perturb(data: &KvDataset, kappa: usize, rng: &Rng) -> Vec<(u32, bool)> {
    let fam = rng.child("user", 0).family("input");
    let d = data.d();
    data.records()
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let mut r = fam.get(j as u64);
            let m = x.len().max(kappa);
            let idx = r.gen_range(0..m);
            let (k, v) = if idx < x.len() {
                x[idx]
            } else {
                (d + 1 + (idx - x.len()) as u32, 0.0)
            };
            (k, r.gen_bool(((1.0 + v) / 2.0).clamp(0.0, 1.0)))
        })
        .collect()
}

fn check(data: &KvDataset, fakes: &[KvFake], kappa: usize) -> Result<u32> {
    if kappa == 0 {
        return Err(Error::Config("padding length κ must be at least 1".into()));
    }
    let ext = kv_domain(data.d(), kappa);
    if let Some(f) = fakes.iter().find(|f| f.key == 0 || f.key > data.d()) {
        return Err(Error::Domain(format!(
            "fake key {} outside [1, {}]",
            f.key,
            data.d()
        )));
    }
    Ok(ext)
}

struct KeyExpansion<'a> {
    h: &'a HashFunction,
    ext: u32,
}

impl Expansion for KeyExpansion<'_> {
    fn lambda(&self, hashes: &[u32]) -> Result<Vec<u32>> {
        filter::items_for_hashes(self.h, hashes)
    }

    fn symbols(&self, lambda: &[u32]) -> Vec<u32> {
        lambda
            .iter()
            .copied()
            .chain(lambda.iter().map(|k| k + self.ext))
            .collect()
    }
}

struct PairExpansion<'a>(&'a HashFunction);

impl Expansion for PairExpansion<'_> {
    fn lambda(&self, hashes: &[u32]) -> Result<Vec<u32>> {
        filter::items_for_hashes(self.0, hashes)
    }

    fn symbols(&self, lambda: &[u32]) -> Vec<u32> {
        lambda.to_vec()
    }
}

fn estimates(d: u32, kappa: usize, scale: f64, per_key: BTreeMap<u32, (f64, f64)>) -> KvEstimate {
    let mut est = KvEstimate {
        d,
        ..KvEstimate::default()
    };
    for (k, (plus, minus)) in per_key {
        if k > d {
            continue;
        }
        let phi = kappa as f64 * (plus + minus) / scale;
        let psi = if phi > 0.0 {
            kappa as f64 * (plus - minus) / (scale * phi)
        } else {
            est.degenerate.push(k);
            0.0
        };
        est.phi.insert(k, phi);
        est.psi.insert(k, psi);
    }
    est
}

/// Key-level filtering over the padded domain; `h` maps `[d']` to `[b]`.
///
/// `Φ̂_k = κ(c₊ + c₋ − 2μ2)/(nβ)` and `Ψ̂_k = κ(c₊ − c₋)/(nβ Φ̂_k)` for
/// selected keys; a selected key with `Φ̂_k ≤ 0` reports `Ψ̂_k = 0` and is
/// listed as degenerate.
#[allow(clippy::too_many_arguments)]
pub fn kv_run(
    data: &KvDataset,
    fakes: &[KvFake],
    cfg: &FmeConfig,
    kappa: usize,
    h: &HashFunction,
    opts: &RunOptions,
    rng: &Rng,
    inj: Option<&Injected>,
) -> Result<ProtocolOutput> {
    let ext = check(data, fakes, kappa)?;
    cfg.validate(ext)?;
    if h.domain() != ext || h.range() != cfg.b {
        return Err(Error::Config(format!(
            "key hash must map [{ext}] to [{}]",
            cfg.b
        )));
    }
    let pairs: Vec<(u32, bool)> = perturb(data, kappa, rng)
        .into_iter()
        .chain(fakes.iter().map(|f| (f.key, f.positive)))
        .collect();
    let reports = pairs
        .iter()
        .map(|&(k, pos)| Ok((h.hash(k)?, symbol(k, pos, ext))))
        .collect::<Result<Vec<_>>>()?;
    let stage = TwoStage {
        b: cfg.b,
        symbols: 2 * ext,
        d1: &cfg.d1,
        d2: &cfg.d2,
        beta: cfg.beta,
        alpha: cfg.alpha,
        l: cfg.l,
        lambda_domain: ext,
        noise: None,
    };
    let out = run_two_stage(&reports, &stage, &KeyExpansion { h, ext }, opts, rng, inj)?;
    let mu2 = cfg.d2.mean();
    let mut per_key: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for &(s, c) in &out.counts {
        let e = per_key
            .entry(if s > ext { s - ext } else { s })
            .or_default();
        if s > ext {
            e.0 = c as f64 - mu2;
        } else {
            e.1 = c as f64 - mu2;
        }
    }
    let scale = reports.len() as f64 * cfg.beta;
    Ok(ProtocolOutput {
        estimate: Estimate::KeyValue(estimates(data.d(), kappa, scale, per_key)),
        filter: Some(out.filter),
        transcript: out.transcript,
        stats: out.stats,
        trace: out.trace,
    })
}

/// Ablation that hashes and filters the pair symbols over `[2d']` instead of
/// keys. An unselected symbol contributes no count to its key.
#[allow(clippy::too_many_arguments)]
pub fn kv_pair_level_run(
    data: &KvDataset,
    fakes: &[KvFake],
    cfg: &FmeConfig,
    kappa: usize,
    h: &HashFunction,
    opts: &RunOptions,
    rng: &Rng,
) -> Result<ProtocolOutput> {
    let ext = check(data, fakes, kappa)?;
    cfg.validate(2 * ext)?;
    if h.domain() != 2 * ext || h.range() != cfg.b {
        return Err(Error::Config(format!(
            "pair hash must map [{}] to [{}]",
            2 * ext,
            cfg.b
        )));
    }
    let pairs: Vec<(u32, bool)> = perturb(data, kappa, rng)
        .into_iter()
        .chain(fakes.iter().map(|f| (f.key, f.positive)))
        .collect();
    let reports = pairs
        .iter()
        .map(|&(k, pos)| {
            let s = symbol(k, pos, ext);
            Ok((h.hash(s)?, s))
        })
        .collect::<Result<Vec<_>>>()?;
    let stage = TwoStage {
        b: cfg.b,
        symbols: 2 * ext,
        d1: &cfg.d1,
        d2: &cfg.d2,
        beta: cfg.beta,
        alpha: cfg.alpha,
        l: cfg.l,
        lambda_domain: 2 * ext,
        noise: None,
    };
    let out = run_two_stage(&reports, &stage, &PairExpansion(h), opts, rng, None)?;
    let mu2 = cfg.d2.mean();
    let mut per_key: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for &(s, c) in &out.counts {
        let e = per_key
            .entry(if s > ext { s - ext } else { s })
            .or_default();
        if s > ext {
            e.0 = c as f64 - mu2;
        } else {
            e.1 = c as f64 - mu2;
        }
    }
    let scale = reports.len() as f64 * cfg.beta;
    Ok(ProtocolOutput {
        estimate: Estimate::KeyValue(estimates(data.d(), kappa, scale, per_key)),
        filter: Some(out.filter),
        transcript: out.transcript,
        stats: out.stats,
        trace: out.trace,
    })
}
