//! Collision-based hashing protocols: CH and its grouped variant GH.

use super::{run_single, Estimate, ProtocolOutput, RunOptions, SingleStage};
use crate::data::{CategoricalDataset, FrequencyEstimate};
use crate::dummy::DummyCountDistribution;
use crate::error::{Error, Result};
use crate::hashing::HashFunction;
use crate::rng::Rng;

/// LNF over hash values with one hash function `h`.
pub fn ch_run(
    data: &CategoricalDataset,
    fakes: &[u32],
    dist: &DummyCountDistribution,
    beta: f64,
    h: &HashFunction,
    opts: &RunOptions,
    rng: &Rng,
) -> Result<ProtocolOutput> {
    gh_run(data, fakes, dist, beta, std::slice::from_ref(h), opts, rng)
}

/// Grouped hashing: report `j` (fakes included) belongs to group `j mod g`
/// and is hashed with `hashes[j mod g]`; dummies are added per
/// (group, hash value). With one group this is CH; with `g = n` it is UH.
pub fn gh_run(
    data: &CategoricalDataset,
    fakes: &[u32],
    dist: &DummyCountDistribution,
    beta: f64,
    hashes: &[HashFunction],
    opts: &RunOptions,
    rng: &Rng,
) -> Result<ProtocolOutput> {
    let g = hashes.len();
    let Some(first) = hashes.first() else {
        return Err(Error::Config("at least one group is required".into()));
    };
    let b = first.range();
    if b < 2 {
        return Err(Error::Config("hash range b must be at least 2".into()));
    }
    if hashes
        .iter()
        .any(|h| h.range() != b || h.domain() != data.d())
    {
        return Err(Error::Config(
            "group hashes must share domain d and range b".into(),
        ));
    }
    let symbols = (g as u64 * b as u64)
        .try_into()
        .map_err(|_| Error::Config("g·b exceeds u32".into()))?;
    let reports = data
        .values()
        .iter()
        .chain(fakes)
        .enumerate()
        .map(|(j, &x)| {
            let k = j % g;
            Ok(k as u32 * b + hashes[k].hash(x)?)
        })
        .collect::<Result<Vec<u32>>>()?;
    let out = run_single(
        &reports,
        &SingleStage {
            symbols,
            dummies: Some(dist),
            beta,
        },
        opts,
        rng,
        None,
    )?;
    let n = reports.len() as f64;
    let bf = b as f64;
    let scale = bf / (n * beta * (bf - 1.0));
    let offset = n * beta / bf + g as f64 * dist.mean();
    let est = (1..=data.d())
        .map(|i| {
            let total: u64 = hashes
                .iter()
                .enumerate()
                .map(|(k, h)| {
                    out.counts[k * b as usize + h.hash(i).expect("i in domain") as usize - 1]
                })
                .sum();
            scale * (total as f64 - offset)
        })
        .collect();
    Ok(ProtocolOutput {
        estimate: Estimate::Frequency(FrequencyEstimate::Dense(est)),
        filter: None,
        transcript: out.transcript,
        stats: out.stats,
        trace: out.trace,
    })
}
