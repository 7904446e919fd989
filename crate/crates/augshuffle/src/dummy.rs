//! Dummy-count distributions, the binary input mechanism and its DP certifier.
//!
//! The binary input mechanism outputs `a·x + z` for an input bit `x`, with
//! `a ~ Bernoulli(β)` and `z` drawn from a dummy-count distribution `D`. The
//! certifier returns the tight `δ(ε)` of that mechanism over the truncated
//! support of `D`, working with log-probabilities.

use std::sync::Arc;

use rand::Rng as _;
use rand::RngCore;
use rand_distr::{Distribution, Geometric, WeightedAliasIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tail mass left out by truncating an infinite support.
pub const TRUNCATION_TAIL: f64 = 1e-18;

/// Slack granted to a certified δ for floating-point rounding.
pub const CERTIFY_TOLERANCE: f64 = 1e-15;

/// Parametric family of a dummy-count distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DummyKind {
    /// `Binomial(m, p)`.
    Binomial { m: u32, p: f64 },
    /// pmf ∝ `decay^|c − offset|` on `c ≥ 0`; with offset 0 this is a geometric law.
    AsymmetricGeometric { decay: f64, offset: u64 },
    /// Always `k`.
    PointMass { k: u64 },
}

/// Distribution of the number of dummies added per symbol.
#[derive(Clone, Debug)]
pub struct DummyCountDistribution {
    kind: DummyKind,
    log_pmf: Vec<f64>,
    pmf: Vec<f64>,
    tail: Vec<f64>,
    mean: f64,
    variance: f64,
    sampler: Option<Arc<WeightedAliasIndex<f64>>>,
}

impl PartialEq for DummyCountDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn normalize_log(mut w: Vec<f64>) -> Vec<f64> {
    let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = w.iter().map(|&x| (x - m).exp()).sum();
    let lz = m + z.ln();
    for x in &mut w {
        *x -= lz;
    }
    w
}

impl DummyCountDistribution {
    /// Builds the truncated pmf table for `kind`.
    pub fn new(kind: DummyKind) -> Result<Self> {
        let log_pmf = match kind {
            DummyKind::Binomial { m, p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!("binomial p={p} outside [0, 1]")));
                }
                let (lp, lq) = (p.ln(), (1.0 - p).ln());
                let mut log_choose = 0.0;
                let mut out = Vec::with_capacity(m as usize + 1);
                for c in 0..=m {
                    if c > 0 {
                        log_choose += ((m - c + 1) as f64).ln() - (c as f64).ln();
                    }
                    let term = |k: u32, l: f64| if k == 0 { 0.0 } else { k as f64 * l };
                    out.push(log_choose + term(c, lp) + term(m - c, lq));
                }
                out
            }
            DummyKind::AsymmetricGeometric { decay, offset } => {
                if !(decay > 0.0 && decay < 1.0) {
                    return Err(Error::Config(format!("decay {decay} must lie in (0, 1)")));
                }
                let lr = decay.ln();
                let k = ((TRUNCATION_TAIL * (1.0 - decay)).ln() / lr)
                    .ceil()
                    .max(1.0) as u64;
                let len = offset + k + 1;
                if len > 50_000_000 {
                    return Err(Error::Config(format!(
                        "support of {len} points is too large"
                    )));
                }
                normalize_log(
                    (0..len)
                        .map(|c| (c as i64 - offset as i64).unsigned_abs() as f64 * lr)
                        .collect(),
                )
            }
            DummyKind::PointMass { k } => {
                let mut v = vec![f64::NEG_INFINITY; k as usize + 1];
                v[k as usize] = 0.0;
                v
            }
        };
        let pmf: Vec<f64> = log_pmf.iter().map(|l| l.exp()).collect();
        let mut tail = vec![0.0; pmf.len() + 1];
        for c in (0..pmf.len()).rev() {
            tail[c] = tail[c + 1] + pmf[c];
        }
        let mean: f64 = pmf.iter().enumerate().map(|(c, p)| c as f64 * p).sum();
        let variance: f64 = pmf
            .iter()
            .enumerate()
            .map(|(c, p)| (c as f64 - mean).powi(2) * p)
            .sum();
        let sampler = match kind {
            DummyKind::PointMass { .. } => None,
            _ => Some(Arc::new(
                WeightedAliasIndex::new(pmf.clone())
                    .map_err(|e| Error::Config(format!("dummy pmf sampler: {e}")))?,
            )),
        };
        Ok(DummyCountDistribution {
            kind,
            log_pmf,
            pmf,
            tail,
            mean,
            variance,
            sampler,
        })
    }

    pub fn binomial(m: u32, p: f64) -> Result<Self> {
        Self::new(DummyKind::Binomial { m, p })
    }

    pub fn asymmetric_geometric(decay: f64, offset: u64) -> Result<Self> {
        Self::new(DummyKind::AsymmetricGeometric { decay, offset })
    }

    pub fn point_mass(k: u64) -> Self {
        Self::new(DummyKind::PointMass { k }).expect("point mass is always valid")
    }

    pub fn kind(&self) -> &DummyKind {
        &self.kind
    }

    /// Largest value with nonzero probability in the table.
    pub fn support_max(&self) -> u64 {
        self.pmf.len() as u64 - 1
    }

    pub fn pmf(&self, c: u64) -> f64 {
        self.pmf.get(c as usize).copied().unwrap_or(0.0)
    }

    pub fn log_pmf(&self, c: u64) -> f64 {
        self.log_pmf
            .get(c as usize)
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }

    /// `Pr[z ≥ c]`.
    pub fn tail(&self, c: u64) -> f64 {
        self.tail.get(c as usize).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Smallest integer `z` with `Pr[z' ≥ z] ≤ alpha`.
    pub fn threshold(&self, alpha: f64) -> u64 {
        (0..self.tail.len())
            .find(|&c| self.tail[c] <= alpha)
            .unwrap_or(self.tail.len() - 1) as u64
    }

    /// One draw.
    pub fn sample(&self, rng: &mut impl RngCore) -> u64 {
        match (&self.kind, &self.sampler) {
            (DummyKind::PointMass { k }, _) => *k,
            (_, Some(s)) => s.sample(rng) as u64,
            _ => unreachable!("sampler exists for every non-degenerate kind"),
        }
    }
}

/// `(ε, δ)` budget with an optional split into two parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub eps: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(eps >= 0.0) || !(0.0..=1.0).contains(&delta) {
            return Err(Error::Config(format!("invalid budget ε={eps}, δ={delta}")));
        }
        Ok(PrivacyBudget { eps, delta })
    }

    /// `(frac·ε, frac·δ)` and the remainder; the parts sum to the total.
    pub fn split(&self, frac: f64) -> Result<(PrivacyBudget, PrivacyBudget)> {
        if !(0.0..=1.0).contains(&frac) {
            return Err(Error::Config(format!("split {frac} outside [0, 1]")));
        }
        let first = PrivacyBudget {
            eps: self.eps * frac,
            delta: self.delta * frac,
        };
        let second = PrivacyBudget {
            eps: self.eps - first.eps,
            delta: self.delta - first.delta,
        };
        Ok((first, second))
    }

    /// Budget each binary mechanism must meet: `(ε/2, δ/2)`.
    pub fn per_mechanism(&self) -> PrivacyBudget {
        PrivacyBudget {
            eps: self.eps / 2.0,
            delta: self.delta / 2.0,
        }
    }
}

/// Output pmfs `(P0, P1)` of the binary mechanism over `0..=support_max+1`.
pub fn binary_mechanism_pmfs(dist: &DummyCountDistribution, beta: f64) -> (Vec<f64>, Vec<f64>) {
    let (l0, l1) = binary_mechanism_log_pmfs(dist, beta);
    (
        l0.iter().map(|l| l.exp()).collect(),
        l1.iter().map(|l| l.exp()).collect(),
    )
}

fn binary_mechanism_log_pmfs(dist: &DummyCountDistribution, beta: f64) -> (Vec<f64>, Vec<f64>) {
    let len = dist.log_pmf.len() + 1;
    let (lb, lnb) = (beta.ln(), (1.0 - beta).ln());
    let l0: Vec<f64> = (0..len as u64).map(|c| dist.log_pmf(c)).collect();
    let l1 = (0..len)
        .map(|c| {
            let shifted = if c == 0 || beta == 0.0 {
                f64::NEG_INFINITY
            } else {
                lb + l0[c - 1]
            };
            let stay = if beta == 1.0 {
                f64::NEG_INFINITY
            } else {
                lnb + l0[c]
            };
            log_sum_exp(shifted, stay)
        })
        .collect();
    (l0, l1)
}

fn hockey_stick(la: &[f64], lb: &[f64], eps: f64) -> f64 {
    la.iter()
        .zip(lb)
        .filter(|(&a, &b)| a > eps + b)
        .map(|(&a, &b)| {
            if b == f64::NEG_INFINITY {
                a.exp()
            } else {
                -a.exp() * (eps + b - a).exp_m1()
            }
        })
        .sum()
}

/// Tight `δ(ε)` of the binary mechanism built from `dist` and `beta`.
pub fn certify_dp(dist: &DummyCountDistribution, beta: f64, eps: f64) -> f64 {
    let (l0, l1) = binary_mechanism_log_pmfs(dist, beta);
    hockey_stick(&l0, &l1, eps).max(hockey_stick(&l1, &l0, eps))
}

/// Asymmetric geometric distribution with decay `e^{−ε}` and the smallest offset
/// whose binary mechanism is `(ε, δ)`-DP at sampling probability `beta`.
pub fn calibrate_offset(eps: f64, delta: f64, beta: f64) -> Result<DummyCountDistribution> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Infeasible(format!(
            "decay e^-ε needs ε > 0, got {eps}"
        )));
    }
    if !(0.0..=1.0).contains(&beta) || !(0.0..=1.0).contains(&delta) {
        return Err(Error::Config(format!(
            "β={beta} or δ={delta} outside [0, 1]"
        )));
    }
    if beta == 1.0 && delta == 0.0 {
        return Err(Error::Infeasible("β = 1 requires δ > 0".into()));
    }
    let decay = (-eps).exp();
    let ok = |offset: u64| -> Result<Option<DummyCountDistribution>> {
        let dist = DummyCountDistribution::asymmetric_geometric(decay, offset)?;
        Ok((certify_dp(&dist, beta, eps) <= delta + CERTIFY_TOLERANCE).then_some(dist))
    };
    if let Some(d) = ok(0)? {
        return Ok(d);
    }
    let mut hi = 1u64;
    loop {
        if hi > 10_000_000 {
            return Err(Error::Infeasible(format!(
                "no offset reaches δ={delta} at ε={eps}"
            )));
        }
        if ok(hi)?.is_some() {
            break;
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)?.is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ok(hi)?.expect("upper end certified"))
}

/// Draw from the two-sided geometric law `Pr[k] ∝ p^|k|`.
pub fn two_sided_geometric(p: f64, rng: &mut impl RngCore) -> i64 {
    if p <= 0.0 {
        return 0;
    }
    let g = Geometric::new(1.0 - p).expect("success probability in (0, 1]");
    g.sample(rng) as i64 - g.sample(rng) as i64
}

/// Bernoulli draw used for sampling decisions.
pub fn bernoulli(p: f64, rng: &mut impl RngCore) -> bool {
    if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        rng.gen_bool(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn binomial_shift() {
        let d = DummyCountDistribution::binomial(2, 0.5).unwrap();
        let (p0, p1) = binary_mechanism_pmfs(&d, 1.0);
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15);
        assert!(close(&p0, &[0.25, 0.5, 0.25, 0.0]));
        assert!(close(&p1, &[0.0, 0.25, 0.5, 0.25]));
    }

    #[test]
    fn point_mass_without_sampling() {
        let d = DummyCountDistribution::point_mass(0);
        let (p0, p1) = binary_mechanism_pmfs(&d, 0.0);
        assert_eq!(p0, vec![1.0, 0.0]);
        assert_eq!(p1, vec![1.0, 0.0]);
        assert_eq!(certify_dp(&d, 0.0, 0.0), 0.0);
    }

    #[test]
    fn geometric_ratio_closed_form() {
        let r = (-0.5f64).exp();
        let d = DummyCountDistribution::asymmetric_geometric(r, 0).unwrap();
        let (p0, p1) = binary_mechanism_pmfs(&d, 1.0 - r);
        let want = (1.0 - r + r * r) / r;
        for c in 1..40 {
            assert!((p1[c] / p0[c] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn binomial_certificate() {
        let d = DummyCountDistribution::binomial(2, 0.5).unwrap();
        for eps in [2f64.ln(), 1.0, 3.0, 10.0] {
            assert!((certify_dp(&d, 1.0, eps) - 0.25).abs() < 1e-15);
        }
        // below ln 2 the middle point also violates the ratio
        assert!((certify_dp(&d, 1.0, 0.0) - 0.5).abs() < 1e-15);
        let eps: f64 = 0.3;
        assert!((certify_dp(&d, 1.0, eps) - (0.75 - eps.exp() * 0.25)).abs() < 1e-15);
    }

    #[test]
    fn calibration_examples() {
        let d = calibrate_offset(0.5, 0.0, 1.0 - (-0.5f64).exp()).unwrap();
        assert_eq!(
            d.kind(),
            &DummyKind::AsymmetricGeometric {
                decay: (-0.5f64).exp(),
                offset: 0
            }
        );
        let d = calibrate_offset(0.5, 1.0, 1.0).unwrap();
        assert!(matches!(
            d.kind(),
            DummyKind::AsymmetricGeometric { offset: 0, .. }
        ));
        assert!(matches!(
            calibrate_offset(0.5, 0.0, 1.0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn calibration_is_minimal() {
        for (eps, delta) in [(0.5, 1e-12), (0.25, 5e-13), (1.0, 1e-6)] {
            let d = calibrate_offset(eps, delta, 1.0).unwrap();
            let DummyKind::AsymmetricGeometric { decay, offset } = *d.kind() else {
                panic!()
            };
            assert!(certify_dp(&d, 1.0, eps) <= delta + CERTIFY_TOLERANCE);
            let smaller = DummyCountDistribution::asymmetric_geometric(decay, offset - 1).unwrap();
            assert!(certify_dp(&smaller, 1.0, eps) > delta);
        }
    }

    #[test]
    fn pmf_invariants() {
        for d in [
            DummyCountDistribution::binomial(7, 0.3).unwrap(),
            DummyCountDistribution::asymmetric_geometric(0.8, 30).unwrap(),
            DummyCountDistribution::asymmetric_geometric(0.2, 0).unwrap(),
            DummyCountDistribution::point_mass(4),
        ] {
            let total: f64 = (0..=d.support_max()).map(|c| d.pmf(c)).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(d.tail(d.support_max() + 1) == 0.0);
        }
        let b = DummyCountDistribution::binomial(7, 0.3).unwrap();
        assert!((b.mean() - 2.1).abs() < 1e-9);
        assert!((b.variance() - 1.47).abs() < 1e-9);
    }

    #[test]
    fn sampling_statistics() {
        let mut r = Rng::new(4).stream("s");
        assert_eq!(DummyCountDistribution::point_mass(3).sample(&mut r), 3);
        let b = DummyCountDistribution::binomial(2, 0.5).unwrap();
        let n = 1_000_000;
        let mean = (0..n).map(|_| b.sample(&mut r)).sum::<u64>() as f64 / n as f64;
        assert!((mean - 1.0).abs() < 0.01);
        let p = (-1.0f64).exp();
        let zeros = (0..n)
            .filter(|_| two_sided_geometric(p, &mut r) == 0)
            .count() as f64
            / n as f64;
        assert!((zeros - (1.0 - p) / (1.0 + p)).abs() < 0.005);
    }

    #[test]
    fn threshold_examples() {
        let b = DummyCountDistribution::binomial(2, 0.5).unwrap();
        assert_eq!(b.threshold(0.05), 3);
        assert_eq!(b.threshold(1.0), 0);
        assert_eq!(b.threshold(0.25), 2);
    }

    #[test]
    fn budget_split_sums() {
        let b = PrivacyBudget::new(1.0, 1e-12).unwrap();
        let (x, y) = b.split(0.3).unwrap();
        assert_eq!(x.eps + y.eps, 1.0);
        assert_eq!(x.delta + y.delta, 1e-12);
    }
}
