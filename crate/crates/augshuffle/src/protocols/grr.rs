//! Pure shuffle baseline: users randomize with generalized random response.

use rand::Rng as _;

use super::{run_single, Estimate, ProtocolOutput, RunOptions, SingleStage};
use crate::data::{CategoricalDataset, FrequencyEstimate};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Keep probability `p` and per-other-item probability `q` of GRR.
pub fn grr_probabilities(eps0: f64, d: u32) -> (f64, f64) {
    let e = eps0.exp();
    let z = e + d as f64 - 1.0;
    if e.is_infinite() {
        return (1.0, 0.0);
    }
    (e / z, 1.0 / z)
}

/// Each user reports `x` w.p. `p`, otherwise a uniform other item; fakes
/// report their item as is. Returns `f̂_i = (c_i/n − q)/(p − q)`.
pub fn pure_grr_run(
    data: &CategoricalDataset,
    fakes: &[u32],
    eps0: f64,
    opts: &RunOptions,
    rng: &Rng,
) -> Result<ProtocolOutput> {
    if eps0 <= 0.0 || eps0.is_nan() {
        return Err(Error::Config(format!("GRR needs ε0 > 0, got {eps0}")));
    }
    let d = data.d();
    let (p, q) = grr_probabilities(eps0, d);
    let fam = rng.child("user", 0).family("input");
    let mut reports: Vec<u32> = data
        .values()
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let mut r = fam.get(j as u64);
            if d == 1 || r.gen_bool(p) {
                x
            } else {
                let y = r.gen_range(1..d);
                if y >= x {
                    y + 1
                } else {
                    y
                }
            }
        })
        .collect();
    reports.extend_from_slice(fakes);
    let out = run_single(
        &reports,
        &SingleStage {
            symbols: d,
            dummies: None,
            beta: 1.0,
        },
        opts,
        rng,
        None,
    )?;
    let n = reports.len() as f64;
    let est = out
        .counts
        .iter()
        .map(|&c| (c as f64 / n - q) / (p - q))
        .collect();
    Ok(ProtocolOutput {
        estimate: Estimate::Frequency(FrequencyEstimate::Dense(est)),
        filter: None,
        transcript: out.transcript,
        stats: out.stats,
        trace: out.trace,
    })
}
