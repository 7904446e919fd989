//! Datasets, ground-truth statistics, synthetic generators and CSV loaders.
//!
//! Items and keys are 1-based everywhere: a dataset over `d` items holds
//! values in `1..=d`.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use rand::Rng as _;
use rand_distr::{Distribution, WeightedAliasIndex};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// One item per user.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalDataset {
    d: u32,
    values: Vec<u32>,
}

impl CategoricalDataset {
    /// Validates that every value lies in `1..=d`.
    pub fn new(d: u32, values: Vec<u32>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDataset("d must be at least 1".into()));
        }
        if values.is_empty() {
            return Err(Error::InvalidDataset("dataset has no users".into()));
        }
        if let Some((j, &x)) = values.iter().enumerate().find(|(_, &x)| x == 0 || x > d) {
            return Err(Error::InvalidDataset(format!(
                "user {} holds item {x} outside [1, {d}]",
                j + 1
            )));
        }
        Ok(CategoricalDataset { d, values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    /// Count of users holding each item, index `i - 1`.
    pub fn counts(&self) -> Vec<u64> {
        let mut c = vec![0u64; self.d as usize];
        for &x in &self.values {
            c[x as usize - 1] += 1;
        }
        c
    }
}

/// A set of key-value pairs per user.
#[derive(Clone, Debug, PartialEq)]
pub struct KvDataset {
    d: u32,
    records: Vec<Vec<(u32, f64)>>,
}

impl KvDataset {
    /// Validates distinct keys per user, keys in `1..=d` and values in `[-1, 1]`.
    pub fn new(d: u32, records: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDataset("d must be at least 1".into()));
        }
        if records.is_empty() {
            return Err(Error::InvalidDataset("dataset has no users".into()));
        }
        for (j, rec) in records.iter().enumerate() {
            if rec.is_empty() {
                return Err(Error::InvalidDataset(format!(
                    "user {} holds no pairs",
                    j + 1
                )));
            }
            let mut seen = std::collections::HashSet::new();
            for &(k, v) in rec {
                if k == 0 || k > d {
                    return Err(Error::InvalidDataset(format!(
                        "user {} holds key {k} outside [1, {d}]",
                        j + 1
                    )));
                }
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::InvalidDataset(format!(
                        "user {} holds value {v} outside [-1, 1]",
                        j + 1
                    )));
                }
                if !seen.insert(k) {
                    return Err(Error::InvalidDataset(format!(
                        "user {} holds key {k} twice",
                        j + 1
                    )));
                }
            }
        }
        Ok(KvDataset { d, records })
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn records(&self) -> &[Vec<(u32, f64)>] {
        &self.records
    }

    /// Largest number of pairs held by one user.
    pub fn max_pairs(&self) -> usize {
        self.records.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Ground-truth frequency vector, entry `i - 1` for item `i`.
pub fn true_frequencies(data: &CategoricalDataset) -> Vec<f64> {
    let n = data.n() as f64;
    data.counts().into_iter().map(|c| c as f64 / n).collect()
}

/// Ground truth `(Φ, Ψ)`: share of users holding each key and the mean value
/// among holders, with `Ψ_i = 0` when nobody holds key `i`.
pub fn true_kv_statistics(data: &KvDataset) -> (Vec<f64>, Vec<f64>) {
    let d = data.d as usize;
    let mut holders = vec![0u64; d];
    let mut sums = vec![0f64; d];
    for rec in &data.records {
        for &(k, v) in rec {
            holders[k as usize - 1] += 1;
            sums[k as usize - 1] += v;
        }
    }
    let n = data.n() as f64;
    let phi = holders.iter().map(|&h| h as f64 / n).collect();
    let psi = holders
        .iter()
        .zip(&sums)
        .map(|(&h, &s)| if h == 0 { 0.0 } else { s / h as f64 })
        .collect();
    (phi, psi)
}

/// Mean squared value among the holders of each key, 0 for empty keys.
pub fn kv_value_second_moments(data: &KvDataset) -> Vec<f64> {
    let d = data.d as usize;
    let mut holders = vec![0u64; d];
    let mut sums = vec![0f64; d];
    for rec in &data.records {
        for &(k, v) in rec {
            holders[k as usize - 1] += 1;
            sums[k as usize - 1] += v * v;
        }
    }
    holders
        .iter()
        .zip(&sums)
        .map(|(&h, &s)| if h == 0 { 0.0 } else { s / h as f64 })
        .collect()
}

/// Estimated frequencies, either over every item or over a reported subset.
#[derive(Clone, Debug, PartialEq)]
pub enum FrequencyEstimate {
    Dense(Vec<f64>),
    Sparse { d: u32, values: BTreeMap<u32, f64> },
}

impl FrequencyEstimate {
    pub fn d(&self) -> u32 {
        match self {
            FrequencyEstimate::Dense(v) => v.len() as u32,
            FrequencyEstimate::Sparse { d, .. } => *d,
        }
    }

    /// Estimate for item `i`; unreported items read as 0.
    pub fn get(&self, i: u32) -> f64 {
        match self {
            FrequencyEstimate::Dense(v) => v[i as usize - 1],
            FrequencyEstimate::Sparse { values, .. } => values.get(&i).copied().unwrap_or(0.0),
        }
    }

    /// Whether item `i` carries an explicit estimate.
    pub fn reported(&self, i: u32) -> bool {
        match self {
            FrequencyEstimate::Dense(_) => true,
            FrequencyEstimate::Sparse { values, .. } => values.contains_key(&i),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        (1..=self.d()).map(|i| self.get(i)).collect()
    }
}

/// Estimated key-value statistics over the selected keys.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct KvEstimate {
    pub d: u32,
    pub phi: BTreeMap<u32, f64>,
    pub psi: BTreeMap<u32, f64>,
    /// Selected keys whose frequency estimate was not positive; their mean is reported as 0.
    pub degenerate: Vec<u32>,
}

impl KvEstimate {
    /// Frequency estimate; unreported keys read as 0.
    pub fn phi(&self, k: u32) -> f64 {
        self.phi.get(&k).copied().unwrap_or(0.0)
    }

    /// Mean estimate; unreported keys read as 1.
    pub fn psi(&self, k: u32) -> f64 {
        self.psi.get(&k).copied().unwrap_or(1.0)
    }

    pub fn reported(&self, k: u32) -> bool {
        self.phi.contains_key(&k)
    }
}

fn zipf_weights(d: u32, exponent: f64) -> Result<WeightedAliasIndex<f64>> {
    if !(exponent >= 0.0) || !exponent.is_finite() {
        return Err(Error::Config(format!("invalid zipf exponent {exponent}")));
    }
    let w: Vec<f64> = (1..=d).map(|k| (k as f64).powf(-exponent)).collect();
    WeightedAliasIndex::new(w).map_err(|e| Error::Config(format!("zipf weights: {e}")))
}

/// Users drawn i.i.d. from a Zipf law over `1..=d`; exponent 0 is uniform.
pub fn synth_zipf(n: usize, d: u32, exponent: f64, rng: &Rng) -> Result<CategoricalDataset> {
    if n == 0 || d == 0 {
        return Err(Error::Config("n and d must be at least 1".into()));
    }
    let table = zipf_weights(d, exponent)?;
    let mut r = rng.stream("data/zipf");
    let values = (0..n).map(|_| table.sample(&mut r) as u32 + 1).collect();
    CategoricalDataset::new(d, values)
}

/// Number of pairs each synthetic user holds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PairsLaw {
    Fixed(usize),
    /// Uniform on `lo..=hi`.
    Uniform(usize, usize),
}

/// Law of the value attached to each synthetic pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ValueLaw {
    /// Uniform on `[-1, 1]`.
    Uniform,
    /// `+1` with probability `p_plus`, else `-1`.
    Sign {
        p_plus: f64,
    },
    Constant(f64),
}

/// Synthetic key-value data: keys drawn without replacement from a Zipf law.
pub fn synth_kv(
    n: usize,
    d: u32,
    pairs: PairsLaw,
    key_exponent: f64,
    values: ValueLaw,
    rng: &Rng,
) -> Result<KvDataset> {
    if n == 0 || d == 0 {
        return Err(Error::Config("n and d must be at least 1".into()));
    }
    let (lo, hi) = match pairs {
        PairsLaw::Fixed(k) => (k, k),
        PairsLaw::Uniform(lo, hi) => (lo, hi),
    };
    if lo == 0 || lo > hi || hi > d as usize {
        return Err(Error::Config(format!(
            "invalid pairs-per-user law {lo}..={hi} for d={d}"
        )));
    }
    let table = zipf_weights(d, key_exponent)?;
    let mut r = rng.stream("data/kv");
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let m = r.gen_range(lo..=hi);
        let mut keys: Vec<u32> = Vec::with_capacity(m);
        while keys.len() < m {
            let k = table.sample(&mut r) as u32 + 1;
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        let rec = keys
            .into_iter()
            .map(|k| {
                let v = match values {
                    ValueLaw::Uniform => r.gen_range(-1.0..=1.0),
                    ValueLaw::Sign { p_plus } => {
                        if r.gen_bool(p_plus) {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    ValueLaw::Constant(c) => c,
                };
                (k, v)
            })
            .collect();
        records.push(rec);
    }
    KvDataset::new(d, records)
}

/// Keeps each user independently with probability `p`.
pub fn user_sample(data: &CategoricalDataset, p: f64, rng: &Rng) -> Result<CategoricalDataset> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!(
            "sampling probability {p} outside (0, 1]"
        )));
    }
    let mut r = rng.stream("data/user_sample");
    let kept: Vec<u32> = data
        .values
        .iter()
        .copied()
        .filter(|_| r.gen_bool(p))
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidDataset("user sampling kept no users".into()));
    }
    CategoricalDataset::new(data.d, kept)
}

fn dataset_error(line: u64, message: impl Into<String>) -> Error {
    Error::Dataset {
        line: line as usize,
        message: message.into(),
    }
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| dataset_error(1, e.to_string()))?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(dataset_error(
            1,
            format!("expected header {}", expected.join(",")),
        ));
    }
    Ok(())
}

/// Loads a categorical dataset with header `user_id,item`, one row per user.
///
/// When `d` is `None` the domain is the largest item seen.
pub fn load_categorical_csv(reader: impl Read, d: Option<u32>) -> Result<CategoricalDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    check_header(&mut rdr, &["user_id", "item"])?;
    let mut seen = std::collections::HashSet::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            dataset_error(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 2 {
            return Err(dataset_error(
                line,
                format!("expected 2 fields, found {}", rec.len()),
            ));
        }
        let user = rec[0].trim();
        if user.is_empty() {
            return Err(dataset_error(line, "empty user_id"));
        }
        if !seen.insert(user.to_string()) {
            return Err(dataset_error(line, format!("duplicate user_id {user}")));
        }
        let item: u32 = rec[1]
            .trim()
            .parse()
            .map_err(|_| dataset_error(line, format!("item {:?} is not an integer", &rec[1])))?;
        if item == 0 || d.is_some_and(|d| item > d) {
            return Err(dataset_error(
                line,
                format!(
                    "item {item} outside [1, {}]",
                    d.map_or("d".into(), |d| d.to_string())
                ),
            ));
        }
        values.push(item);
    }
    if values.is_empty() {
        return Err(dataset_error(1, "no rows"));
    }
    let d = d.unwrap_or_else(|| values.iter().copied().max().unwrap_or(1));
    CategoricalDataset::new(d, values)
}

/// Loads a key-value dataset with header `user_id,key,value`, one row per pair.
pub fn load_kv_csv(reader: impl Read, d: Option<u32>) -> Result<KvDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    check_header(&mut rdr, &["user_id", "key", "value"])?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut records: Vec<Vec<(u32, f64)>> = Vec::new();
    let mut max_key = 0u32;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            dataset_error(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 3 {
            return Err(dataset_error(
                line,
                format!("expected 3 fields, found {}", rec.len()),
            ));
        }
        let user = rec[0].trim();
        if user.is_empty() {
            return Err(dataset_error(line, "empty user_id"));
        }
        let key: u32 = rec[1]
            .trim()
            .parse()
            .map_err(|_| dataset_error(line, format!("key {:?} is not an integer", &rec[1])))?;
        if key == 0 || d.is_some_and(|d| key > d) {
            return Err(dataset_error(line, format!("key {key} out of range")));
        }
        let value: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| dataset_error(line, format!("value {:?} is not a number", &rec[2])))?;
        if !(-1.0..=1.0).contains(&value) {
            return Err(dataset_error(
                line,
                format!("value {value} outside [-1, 1]"),
            ));
        }
        let slot = *index.entry(user.to_string()).or_insert_with(|| {
            records.push(Vec::new());
            records.len() - 1
        });
        if records[slot].iter().any(|&(k, _)| k == key) {
            return Err(dataset_error(
                line,
                format!("user {user} repeats key {key}"),
            ));
        }
        records[slot].push((key, value));
        max_key = max_key.max(key);
    }
    if records.is_empty() {
        return Err(dataset_error(1, "no rows"));
    }
    KvDataset::new(d.unwrap_or(max_key), records)
}
