//! Local-noise-free protocol: sampling plus per-item dummies.

use super::{run_single, Estimate, Injected, ProtocolOutput, RunOptions, SingleStage};
use crate::data::{CategoricalDataset, FrequencyEstimate};
use crate::dummy::DummyCountDistribution;
use crate::error::Result;
use crate::rng::Rng;

/// Runs LNF on `data` plus `fakes` (items sent by injected users).
///
/// Returns `f̂_i = (c̃_i − μ)/(nβ)` for every item, where `n` counts fakes too.
pub fn lnf_run(
    data: &CategoricalDataset,
    fakes: &[u32],
    dist: &DummyCountDistribution,
    beta: f64,
    opts: &RunOptions,
    rng: &Rng,
    inj: Option<&Injected>,
) -> Result<ProtocolOutput> {
    let reports: Vec<u32> = data.values().iter().chain(fakes).copied().collect();
    let cfg = SingleStage {
        symbols: data.d(),
        dummies: Some(dist),
        beta,
    };
    let out = run_single(&reports, &cfg, opts, rng, inj)?;
    let scale = reports.len() as f64 * beta;
    let est = out
        .counts
        .iter()
        .map(|&c| (c as f64 - dist.mean()) / scale)
        .collect();
    Ok(ProtocolOutput {
        estimate: Estimate::Frequency(FrequencyEstimate::Dense(est)),
        filter: None,
        transcript: out.transcript,
        stats: out.stats,
        trace: out.trace,
    })
}
