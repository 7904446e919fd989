//! Replay fixtures: runs with every shuffler decision fixed, plus the
//! expected outcome.
//!
//! Fixtures are TOML documents. Permutations are 1-based: `perm1[k] = j`
//! means output position `k` carries the `j`-th entry of the shuffler's list
//! (kept reports in user order, then dummies in ascending hash or item
//! order).

use serde::{Deserialize, Serialize};

use crate::crypto::Payload;
use crate::data::CategoricalDataset;
use crate::dummy::{DummyCountDistribution, DummyKind, PrivacyBudget};
use crate::error::{Error, Result};
use crate::hashing::{HashFunction, HashTable};
use crate::protocols::{fme_run, lnf_run, FmeConfig, Injected, ProtocolOutput, RunOptions};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureProtocol {
    Lnf,
    Fme,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureHash {
    /// `(item, hash value)` entries.
    pub table: Vec<(u32, u32)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureInjected {
    pub keep: Option<Vec<bool>>,
    pub dummies1: Option<Vec<u64>>,
    pub dummies2: Option<Vec<u64>>,
    pub perm1: Option<Vec<usize>>,
    pub perm2: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureExpected {
    pub selected: Option<Vec<u32>>,
    pub estimate: Option<Vec<f64>>,
    /// Shuffled per-item counts `c̃` (LNF).
    pub counts: Option<Vec<u64>>,
    pub stage1_hashes: Option<Vec<u32>>,
    pub stage1_items: Option<Vec<u32>>,
    pub stage2_items: Option<Vec<u32>>,
    pub replaced: Option<usize>,
}

/// A replay document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub name: String,
    pub protocol: FixtureProtocol,
    pub d: u32,
    pub values: Vec<u32>,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub l: usize,
    #[serde(default)]
    pub b: u32,
    pub d1: DummyKind,
    pub d2: Option<DummyKind>,
    #[serde(default)]
    pub hash: FixtureHash,
    #[serde(default)]
    pub injected: FixtureInjected,
    #[serde(default)]
    pub expected: FixtureExpected,
}

fn one() -> f64 {
    1.0
}

fn zero_based(p: &Option<Vec<usize>>, what: &str) -> Result<Option<Vec<usize>>> {
    p.as_ref()
        .map(|v| {
            v.iter()
                .map(|&j| {
                    j.checked_sub(1)
                        .ok_or_else(|| Error::Replay(format!("{what}: entries are 1-based")))
                })
                .collect()
        })
        .transpose()
}

/// Outcome of a replay.
#[derive(Clone, Debug)]
pub struct ReplayReport {
    pub output: ProtocolOutput,
    /// Descriptions of every expectation that did not hold.
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

const TOLERANCE: f64 = 1e-12;

impl Fixture {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Replay(e.to_string()))
    }

    pub fn dataset(&self) -> Result<CategoricalDataset> {
        CategoricalDataset::new(self.d, self.values.clone())
    }

    /// Shuffler decisions with 0-based permutations.
    pub fn injected(&self) -> Result<Injected> {
        let i = &self.injected;
        Ok(Injected {
            keep: i.keep.clone(),
            dummies1: i.dummies1.clone(),
            dummies2: i.dummies2.clone(),
            perm1: zero_based(&i.perm1, "perm1")?,
            perm2: zero_based(&i.perm2, "perm2")?,
        })
    }

    fn fme_config(&self) -> Result<(FmeConfig, HashFunction)> {
        let d2 = self
            .d2
            .clone()
            .ok_or_else(|| Error::Replay("FME fixtures need d2".into()))?;
        let unused = PrivacyBudget {
            eps: 0.0,
            delta: 0.0,
        };
        let cfg = FmeConfig {
            budget1: unused,
            budget2: unused,
            d1: DummyCountDistribution::new(self.d1.clone())?,
            d2: DummyCountDistribution::new(d2)?,
            beta: self.beta,
            alpha: self.alpha,
            l: self.l,
            b: self.b,
        };
        let h = HashFunction::Table(HashTable::new(self.d, self.b, &self.hash.table)?);
        Ok((cfg, h))
    }

    /// Runs the fixture over the wire and compares with the expectations.
    pub fn replay(&self) -> Result<ReplayReport> {
        let data = self.dataset()?;
        let inj = self.injected()?;
        let opts = RunOptions::wire();
        let rng = Rng::new(0);
        let output = match self.protocol {
            FixtureProtocol::Lnf => {
                let dist = DummyCountDistribution::new(self.d1.clone())?;
                lnf_run(&data, &[], &dist, self.beta, &opts, &rng, Some(&inj))?
            }
            FixtureProtocol::Fme => {
                let (cfg, h) = self.fme_config()?;
                fme_run(&data, &[], &cfg, &h, &opts, &rng, Some(&inj))?
            }
        };
        let mismatches = self.compare(&output)?;
        Ok(ReplayReport { output, mismatches })
    }

    fn compare(&self, out: &ProtocolOutput) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        let e = &self.expected;
        let est = out.frequencies()?.to_dense();
        if let Some(want) = &e.selected {
            if out.selected() != want.as_slice() {
                bad.push(format!("selected: got {:?}, want {want:?}", out.selected()));
            }
        }
        if let Some(want) = &e.estimate {
            if want.len() != est.len()
                || want
                    .iter()
                    .zip(&est)
                    .any(|(a, b)| (a - b).abs() > TOLERANCE)
            {
                bad.push(format!("estimate: got {est:?}, want {want:?}"));
            }
        }
        if let Some(want) = &e.counts {
            let mu = DummyCountDistribution::new(self.d1.clone())?.mean();
            let scale = self.values.len() as f64 * self.beta;
            let got: Vec<u64> = est
                .iter()
                .map(|f| (f * scale + mu).round() as u64)
                .collect();
            if &got != want {
                bad.push(format!("counts: got {got:?}, want {want:?}"));
            }
        }
        let trace = out.trace.clone().unwrap_or_default();
        let ids = |v: &[Payload]| v.iter().map(|p| p.0).collect::<Vec<u32>>();
        for (name, want, got) in [
            (
                "stage1_hashes",
                &e.stage1_hashes,
                trace.stage1_hashes.clone(),
            ),
            ("stage1_items", &e.stage1_items, ids(&trace.stage1_items)),
            ("stage2_items", &e.stage2_items, ids(&trace.stage2_items)),
        ] {
            if let Some(w) = want {
                if &got != w {
                    bad.push(format!("{name}: got {got:?}, want {w:?}"));
                }
            }
        }
        if let Some(want) = e.replaced {
            if out.stats.replaced != want {
                bad.push(format!("replaced: got {}, want {want}", out.stats.replaced));
            }
        }
        Ok(bad)
    }
}
