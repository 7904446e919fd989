//! Filtering with multiple encryption, and its post-noise variant Proposal*.

use super::{
    filter, run_two_stage, Estimate, Expansion, Injected, ProtocolOutput, RunOptions, TwoStage,
};
use crate::data::{CategoricalDataset, FrequencyEstimate};
use crate::dummy::{calibrate_offset, DummyCountDistribution, PrivacyBudget};
use crate::error::{Error, Result};
use crate::hashing::HashFunction;
use crate::rng::Rng;

/// Parameters of the two-stage protocols.
#[derive(Clone, Debug, PartialEq)]
pub struct FmeConfig {
    /// Budget spent on the hash values.
    pub budget1: PrivacyBudget,
    /// Budget spent on the selected items.
    pub budget2: PrivacyBudget,
    pub d1: DummyCountDistribution,
    pub d2: DummyCountDistribution,
    pub beta: f64,
    pub alpha: f64,
    pub l: usize,
    pub b: u32,
}

impl FmeConfig {
    /// Splits `budget` by `split`, then calibrates `D1` at `(ε1/2, δ1/2)` with
    /// sampling `beta` and `D2` at `(ε2/2, δ2/2)` with no sampling.
    pub fn calibrated(
        budget: PrivacyBudget,
        split: f64,
        beta: f64,
        alpha: f64,
        l: usize,
        b: u32,
    ) -> Result<Self> {
        let (b1, b2) = budget.split(split)?;
        let (m1, m2) = (b1.per_mechanism(), b2.per_mechanism());
        let d1 = calibrate_offset(m1.eps, m1.delta, beta)?;
        let d2 = calibrate_offset(m2.eps, m2.delta, 1.0)?;
        Ok(FmeConfig {
            budget1: b1,
            budget2: b2,
            d1,
            d2,
            beta,
            alpha,
            l,
            b,
        })
    }

    /// Total budget `(ε1 + ε2, δ1 + δ2)`.
    pub fn budget(&self) -> PrivacyBudget {
        PrivacyBudget {
            eps: self.budget1.eps + self.budget2.eps,
            delta: self.budget1.delta + self.budget2.delta,
        }
    }

    /// Checks `1 ≤ l ≤ b ≤ domain` and the probability parameters.
    pub fn validate(&self, domain: u32) -> Result<()> {
        if !(self.l >= 1 && self.l <= self.b as usize && self.b <= domain) {
            return Err(Error::Config(format!(
                "need 1 ≤ l={} ≤ b={} ≤ d={domain}",
                self.l, self.b
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("α={} outside [0, 1]", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Config(format!("β={} outside (0, 1]", self.beta)));
        }
        Ok(())
    }
}

struct ItemExpansion<'a>(&'a HashFunction);

impl Expansion for ItemExpansion<'_> {
    fn lambda(&self, hashes: &[u32]) -> Result<Vec<u32>> {
        filter::items_for_hashes(self.0, hashes)
    }

    fn symbols(&self, lambda: &[u32]) -> Vec<u32> {
        lambda.to_vec()
    }
}

fn run(
    data: &CategoricalDataset,
    fakes: &[u32],
    cfg: &FmeConfig,
    h: &HashFunction,
    noise: Option<f64>,
    opts: &RunOptions,
    rng: &Rng,
    inj: Option<&Injected>,
) -> Result<ProtocolOutput> {
    let d = data.d();
    cfg.validate(d)?;
    if h.domain() != d || h.range() != cfg.b {
        return Err(Error::Config(format!(
            "hash maps [{}] to [{}], run needs [{d}] to [{}]",
            h.domain(),
            h.range(),
            cfg.b
        )));
    }
    let reports = data
        .values()
        .iter()
        .chain(fakes)
        .map(|&x| Ok((h.hash(x)?, x)))
        .collect::<Result<Vec<_>>>()?;
    let stage = TwoStage {
        b: cfg.b,
        symbols: d,
        d1: &cfg.d1,
        d2: &cfg.d2,
        beta: cfg.beta,
        alpha: cfg.alpha,
        l: cfg.l,
        lambda_domain: d,
        noise,
    };
    let out = run_two_stage(&reports, &stage, &ItemExpansion(h), opts, rng, inj)?;
    let scale = reports.len() as f64 * cfg.beta;
    let mu2 = cfg.d2.mean();
    let values = out
        .counts
        .iter()
        .map(|&(i, c)| (i, (c as f64 - mu2) / scale))
        .collect();
    Ok(ProtocolOutput {
        estimate: Estimate::Frequency(FrequencyEstimate::Sparse { d, values }),
        filter: Some(out.filter),
        transcript: out.transcript,
        stats: out.stats,
        trace: out.trace,
    })
}

/// Runs FME on `data` plus `fakes`; estimates `f̂_i = (c̃_i − μ2)/(nβ)` for `i ∈ Λ` only.
pub fn fme_run(
    data: &CategoricalDataset,
    fakes: &[u32],
    cfg: &FmeConfig,
    h: &HashFunction,
    opts: &RunOptions,
    rng: &Rng,
    inj: Option<&Injected>,
) -> Result<ProtocolOutput> {
    run(data, fakes, cfg, h, None, opts, rng, inj)
}

/// FME with collector-side two-sided geometric noise of ratio `e^{−ε/4}` added
/// to every hash count before filtering and every item count before estimation.
pub fn proposal_star_run(
    data: &CategoricalDataset,
    fakes: &[u32],
    cfg: &FmeConfig,
    extra_eps: f64,
    h: &HashFunction,
    opts: &RunOptions,
    rng: &Rng,
) -> Result<ProtocolOutput> {
    if !(extra_eps > 0.0) {
        return Err(Error::Config(format!(
            "extra ε must be positive, got {extra_eps}"
        )));
    }
    run(
        data,
        fakes,
        cfg,
        h,
        Some((-extra_eps / 4.0).exp()),
        opts,
        rng,
        None,
    )
}
