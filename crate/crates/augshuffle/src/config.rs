//! Experiment configuration.
//!
//! A configuration is a TOML document. Every key has a default, so an empty
//! document is valid. Dotted overrides such as `budget.eps=2` are applied to
//! the parsed document before validation.
//!
//! ```toml
//! seed = 7
//! trials = 10
//! top_k = 50
//!
//! [protocol]
//! kind = "fme"          # lnf | ch | gh | fme | kv | kv_pair | proposal_star | grr
//! beta = 1.0
//! alpha = 0.05
//! l = "auto"            # or an integer
//! hash = "prime"        # prime | gf2
//! kappa = 1
//!
//! [budget]
//! eps = 1.0
//! delta = 1e-12
//! split = 0.5
//!
//! [dataset]
//! source = "zipf"       # zipf | kv | categorical_csv | kv_csv
//! n = 1000
//! d = 100
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{l_policy, optimal_b, CommInput, Regime, L_POLICY_FLOOR};
use crate::crypto::{CipherSuite, SizeModel};
use crate::dummy::{DummyKind, PrivacyBudget};
use crate::error::{Error, Result};
use crate::hashing::HashFamily;
use crate::protocols::{ExecMode, RunOptions};

/// Protocol identifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolId {
    Lnf,
    Ch,
    Gh,
    Fme,
    Kv,
    KvPair,
    ProposalStar,
    Grr,
}

impl ProtocolId {
    pub fn is_kv(self) -> bool {
        matches!(self, ProtocolId::Kv | ProtocolId::KvPair)
    }

    pub fn is_two_stage(self) -> bool {
        matches!(
            self,
            ProtocolId::Fme | ProtocolId::Kv | ProtocolId::KvPair | ProtocolId::ProposalStar
        )
    }
}

/// Cap on the number of selected hash values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LSetting {
    Fixed(usize),
    Policy(LPolicy),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LPolicy {
    /// `l = max(n²/d, l_floor)`.
    Auto,
    /// `l = b`.
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HashChoice {
    Prime,
    Gf2,
}

impl From<HashChoice> for HashFamily {
    fn from(h: HashChoice) -> Self {
        match h {
            HashChoice::Prime => HashFamily::Prime,
            HashChoice::Gf2 => HashFamily::Gf2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub kind: ProtocolId,
    pub beta: f64,
    pub alpha: f64,
    pub l: LSetting,
    pub l_floor: f64,
    /// Hash range; chosen by the optimizer when absent.
    pub b: Option<u32>,
    pub hash: HashChoice,
    pub kappa: usize,
    /// Number of groups for GH; 0 means one per user.
    pub groups: usize,
    /// Extra budget of the collector-side noise in Proposal*.
    pub extra_eps: f64,
    /// Local budget of the GRR baseline.
    pub eps0: Option<f64>,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            kind: ProtocolId::Fme,
            beta: 1.0,
            alpha: 0.05,
            l: LSetting::Policy(LPolicy::Auto),
            l_floor: L_POLICY_FLOOR,
            b: None,
            hash: HashChoice::Prime,
            kappa: 1,
            groups: 1,
            extra_eps: 1.0,
            eps0: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    pub eps: f64,
    pub delta: f64,
    /// Fraction of the budget spent on hash values.
    pub split: f64,
}

impl Default for BudgetSection {
    fn default() -> Self {
        BudgetSection {
            eps: 1.0,
            delta: 1e-12,
            split: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Zipf,
    Kv,
    CategoricalCsv,
    KvCsv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub source: DatasetSource,
    pub path: Option<String>,
    pub n: usize,
    pub d: u32,
    pub zipf: f64,
    /// Pairs per user for synthetic KV data: `[lo, hi]`.
    pub pairs: [usize; 2],
    /// Probability of value +1 for synthetic KV data; values are uniform in `[-1, 1]` when absent.
    pub p_plus: Option<f64>,
    /// User sampling probability applied after loading.
    pub sample: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            source: DatasetSource::Zipf,
            path: None,
            n: 1000,
            d: 100,
            zipf: 1.0,
            pairs: [1, 1],
            p_plus: None,
            sample: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteChoice {
    Mock,
    Real,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CipherSection {
    pub suite: SuiteChoice,
    pub tau: [u64; 3],
    pub mode: ExecMode,
    pub parallel: bool,
}

impl Default for CipherSection {
    fn default() -> Self {
        CipherSection {
            suite: SuiteChoice::Mock,
            tau: [712, 1392, 2072],
            mode: ExecMode::Tally,
            parallel: false,
        }
    }
}

impl CipherSection {
    pub fn run_options(&self) -> Result<RunOptions> {
        let suite = match self.suite {
            SuiteChoice::Mock => {
                CipherSuite::mock(SizeModel::new(self.tau[0], self.tau[1], self.tau[2])?)
            }
            SuiteChoice::Real => CipherSuite::real(256)?,
        };
        Ok(RunOptions {
            mode: self.mode,
            suite,
            parallel: self.parallel,
        })
    }
}

/// Metric recorded by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// MSE over the top-k items (or `Φ̂` MSE for KV).
    Mse,
    /// MSE of `Ψ̂` over the top-k keys.
    MsePsi,
    /// Measured total communication in bits.
    CTot,
    /// Privacy level under collusion, with `x` the colluding fraction.
    ActualEps,
    /// Poisoning gain, with `x` equal to `λ`.
    Gain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Dotted key varied by the sweep, e.g. `budget.eps`.
    pub param: String,
    pub values: Vec<f64>,
    pub metric: Metric,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            param: "budget.eps".into(),
            values: vec![0.1, 0.5, 1.0, 2.0, 5.0],
            metric: Metric::Mse,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub targets: Vec<u32>,
    pub lambda: f64,
    /// Colluding fraction `|Ω|/n` for collusion runs.
    pub colluding: f64,
    pub colliding: bool,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            targets: vec![1],
            lambda: 0.1,
            colluding: 0.0,
            colliding: false,
        }
    }
}

/// Complete experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub top_k: usize,
    /// Clip `Φ̂` to `[0, 1]` in KV metrics.
    pub clip: bool,
    /// Output file stem; `-` writes to standard output.
    pub output: String,
    pub protocol: ProtocolSection,
    pub budget: BudgetSection,
    /// Explicit dummy distribution for single-stage protocols; calibrated when absent.
    pub dist: Option<DummyKind>,
    pub dataset: DatasetSection,
    pub cipher: CipherSection,
    pub sweep: SweepSection,
    pub attack: AttackSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            trials: 10,
            top_k: 50,
            clip: false,
            output: "-".into(),
            protocol: ProtocolSection::default(),
            budget: BudgetSection::default(),
            dist: None,
            dataset: DatasetSection::default(),
            cipher: CipherSection::default(),
            sweep: SweepSection::default(),
            attack: AttackSection::default(),
        }
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `key` (dotted) to `raw` inside `table`, creating sub-tables.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_scalar(raw));
    Ok(())
}

impl ExperimentConfig {
    /// Parses a TOML document, applies `key=value` overrides and validates.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a TOML document or a JSON manifest written by [`Manifest`].
    pub fn load(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        if !text.trim_start().starts_with('{') {
            return Self::parse(text, overrides);
        }
        let mut v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(inner) = v.get_mut("config") {
            v = inner.take();
        }
        let mut cfg: ExperimentConfig =
            serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        for (k, raw) in overrides {
            cfg = cfg.with_override(k, raw)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Returns a copy with one dotted key replaced.
    pub fn with_override(&self, key: &str, raw: &str) -> Result<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        apply_override(&mut table, key, raw)?;
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.protocol;
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if !(p.beta > 0.0 && p.beta <= 1.0) {
            return bad(format!("protocol.beta={} outside (0, 1]", p.beta));
        }
        if !(0.0..=1.0).contains(&p.alpha) {
            return bad(format!("protocol.alpha={} outside [0, 1]", p.alpha));
        }
        if p.kappa == 0 {
            return bad("protocol.kappa must be positive".into());
        }
        PrivacyBudget::new(self.budget.eps, self.budget.delta)?;
        if !(0.0..=1.0).contains(&self.budget.split) {
            return bad(format!("budget.split={} outside [0, 1]", self.budget.split));
        }
        let ds = &self.dataset;
        if !(ds.sample > 0.0 && ds.sample <= 1.0) {
            return bad(format!("dataset.sample={} outside (0, 1]", ds.sample));
        }
        if matches!(
            ds.source,
            DatasetSource::CategoricalCsv | DatasetSource::KvCsv
        ) && ds.path.is_none()
        {
            return bad("dataset.path is required for file sources".into());
        }
        if matches!(ds.source, DatasetSource::Zipf | DatasetSource::Kv) && (ds.n == 0 || ds.d == 0)
        {
            return bad("dataset.n and dataset.d must be positive".into());
        }
        if ds.pairs[0] == 0 || ds.pairs[0] > ds.pairs[1] {
            return bad(format!(
                "dataset.pairs={:?} is not a range of positive counts",
                ds.pairs
            ));
        }
        if p.kind.is_kv() != matches!(ds.source, DatasetSource::Kv | DatasetSource::KvCsv) {
            return bad(format!(
                "protocol {:?} does not fit dataset source {:?}",
                p.kind, ds.source
            ));
        }
        if let Some(v) = self.dist.clone() {
            crate::dummy::DummyCountDistribution::new(v)?;
        }
        if self.top_k == 0 {
            return bad("top_k must be positive".into());
        }
        if !(0.0..1.0).contains(&self.attack.colluding) || !(0.0..1.0).contains(&self.attack.lambda)
        {
            return bad("attack.colluding and attack.lambda must lie in [0, 1)".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring the output location.
    pub fn hash(&self) -> String {
        let canonical = ExperimentConfig {
            output: String::new(),
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn budget(&self) -> Result<PrivacyBudget> {
        PrivacyBudget::new(self.budget.eps, self.budget.delta)
    }

    /// Cap `l` for a domain of size `d`, `n` users and range `b`.
    pub fn resolve_l(&self, n: usize, d: u32, b: u32) -> usize {
        match self.protocol.l {
            LSetting::Fixed(l) => l,
            LSetting::Policy(LPolicy::B) => b as usize,
            LSetting::Policy(LPolicy::Auto) => l_policy(n as f64, d as f64, self.protocol.l_floor),
        }
        .clamp(1, b as usize)
    }

    /// Hash range: the override, or the optimizer's choice clamped to `[2, d]`.
    /// GF(2) hashes get the nearest power of two.
    pub fn resolve_b(&self, n: usize, d: u32, mu1: f64, mu2: f64) -> u32 {
        let b = match self.protocol.b {
            Some(b) => b,
            None => {
                let l_guess = match self.protocol.l {
                    LSetting::Fixed(l) => l as f64,
                    LSetting::Policy(LPolicy::Auto) => {
                        l_policy(n as f64, d as f64, self.protocol.l_floor) as f64
                    }
                    LSetting::Policy(LPolicy::B) => f64::INFINITY,
                };
                let t = self.cipher.tau;
                let input = CommInput {
                    n: n as f64,
                    d: d as f64,
                    b: 0.0,
                    l: l_guess,
                    beta: self.protocol.beta,
                    alpha: self.protocol.alpha,
                    mu1,
                    mu2,
                    sizes: SizeModel {
                        tau1: t[0],
                        tau2: t[1],
                        tau3: t[2],
                    },
                };
                let regime = if l_guess < self.protocol.beta * n as f64 {
                    Regime::LBelowBetaN
                } else {
                    Regime::LEqualsB
                };
                optimal_b(&input, regime)
                    .round()
                    .clamp(2.0, d.max(2) as f64) as u32
            }
        };
        match self.protocol.hash {
            HashChoice::Prime => b,
            HashChoice::Gf2 => {
                let up = b.next_power_of_two();
                let down = (up / 2).max(2);
                if up - b <= b - down {
                    up
                } else {
                    down
                }
            }
        }
    }

    /// Flattened view of every scalar key, for manifests.
    pub fn flatten(&self) -> BTreeMap<String, String> {
        fn walk(prefix: &str, v: &toml::Value, out: &mut BTreeMap<String, String>) {
            match v {
                toml::Value::Table(t) => {
                    for (k, v) in t {
                        let key = if prefix.is_empty() {
                            k.clone()
                        } else {
                            format!("{prefix}.{k}")
                        };
                        walk(&key, v, out);
                    }
                }
                other => {
                    out.insert(prefix.to_string(), other.to_string());
                }
            }
        }
        let mut out = BTreeMap::new();
        if let Ok(t) = toml::Table::try_from(self) {
            walk("", &toml::Value::Table(t), &mut out);
        }
        out
    }
}

/// Provenance record written next to every output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Manifest {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::parse("", &[]).unwrap();
        assert_eq!(c.protocol.alpha, 0.05);
        assert_eq!(c.budget.split, 0.5);
        assert_eq!(c.budget.delta, 1e-12);
        assert_eq!(c.trials, 10);
    }

    #[test]
    fn overrides_and_hash() {
        let a = ExperimentConfig::parse("[budget]\neps = 1.0\n", &[]).unwrap();
        let b = ExperimentConfig::parse("", &[("budget.eps".into(), "2.5".into())]).unwrap();
        assert_eq!(b.budget.eps, 2.5);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), ExperimentConfig::default().hash());
        let c = a.with_override("protocol.kind", "lnf").unwrap();
        assert_eq!(c.protocol.kind, ProtocolId::Lnf);
        let d = a.with_override("protocol.l", "40").unwrap();
        assert_eq!(d.protocol.l, LSetting::Fixed(40));
        let e = a.with_override("protocol.l", "b").unwrap();
        assert_eq!(e.protocol.l, LSetting::Policy(LPolicy::B));
    }

    #[test]
    fn manifest_roundtrip() {
        let a = ExperimentConfig::parse("seed = 9\n[protocol]\nkind = \"lnf\"", &[]).unwrap();
        let m = Manifest::new("sweep", &a);
        let b = ExperimentConfig::load(&m.to_json(), &[]).unwrap();
        assert_eq!(a, b);
        assert_eq!(m.config_hash, b.hash());
        let c = ExperimentConfig::load(&m.to_json(), &[("seed".into(), "3".into())]).unwrap();
        assert_eq!(c.seed, 3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("bogus = 1", &[]).is_err());
        assert!(ExperimentConfig::parse("[protocol]\nbeta = 0.0", &[]).is_err());
        assert!(ExperimentConfig::parse("[protocol]\nkind = \"kv\"", &[]).is_err());
        assert!(ExperimentConfig::parse("[dataset]\nsource = \"categorical_csv\"", &[]).is_err());
        assert!(ExperimentConfig::parse("", &[("budget..eps".into(), "1".into())]).is_err());
        assert!(
            ExperimentConfig::parse("[dist]\nkind = \"binomial\"\nm = 3\np = 1.5", &[]).is_err()
        );
    }

    #[test]
    fn resolves_b_and_l() {
        let c = ExperimentConfig::parse("[protocol]\nl = \"b\"", &[]).unwrap();
        let b = c.resolve_b(10_000, 1_000_000, 108.0, 108.0);
        assert!((b as f64 - 37372.0).abs() < 40.0, "{b}");
        assert_eq!(c.resolve_l(10_000, 1_000_000, b), b as usize);
        let g = c.with_override("protocol.hash", "gf2").unwrap();
        assert_eq!(g.resolve_b(10_000, 1_000_000, 108.0, 108.0), 32768);
    }
}
