//! Closed-form predictors and error metrics.
//!
//! Every function here is pure. The simulations in [`crate::protocols`] are
//! tested against these formulas.

use std::io::Write;

use serde::Serialize;

use crate::crypto::SizeModel;
use crate::data::{FrequencyEstimate, KvDataset, KvEstimate};
use crate::error::{Error, Result};

/// Shuffle amplification of an `ε0`-LDP randomizer over `n` users.
///
/// Returns `ε0` itself when `ε0 > ln(n / (8 ln(2/δ)) − 1)`.
pub fn amplify(eps0: f64, n: f64, delta: f64) -> f64 {
    let inner = n / (8.0 * (2.0 / delta).ln()) - 1.0;
    if inner <= 0.0 || eps0 > inner.ln() {
        return eps0;
    }
    let e = eps0.exp();
    let local = (e - 1.0) * 4.0 * (2.0 * (4.0 / delta).ln()).sqrt() / ((e + 1.0) * n).sqrt();
    (1.0 + local + 4.0 / n).ln()
}

/// Expected squared error of LNF for one item.
pub fn lnf_error(f_i: f64, n: f64, beta: f64, sigma_sq: f64) -> f64 {
    f_i * (1.0 - beta) / (n * beta) + sigma_sq / (n * n * beta * beta)
}

/// Collision term `ω` of the CH error for item `i` (1-based).
pub fn ch_omega(f: &[f64], i: u32, n: f64, beta: f64, b: f64) -> f64 {
    f.iter()
        .enumerate()
        .filter(|&(j, _)| j + 1 != i as usize)
        .map(|(_, &fj)| {
            let s = n * fj * beta * (1.0 - beta);
            (n * n * fj * fj * beta * beta + s) * (b - 1.0) / (b * b) + s / (b * b)
        })
        .sum()
}

/// Expected squared error of CH for item `i` (1-based) under a 2-wise
/// independent hash into `[b]`.
pub fn ch_error(f: &[f64], i: u32, n: f64, beta: f64, b: u32, sigma_sq: f64) -> Result<f64> {
    if b < 2 {
        return Err(Error::Domain("CH error needs b ≥ 2".into()));
    }
    if i == 0 || i as usize > f.len() {
        return Err(Error::Domain(format!("item {i} outside [1, {}]", f.len())));
    }
    let bf = b as f64;
    let fi = f[i as usize - 1];
    let omega = ch_omega(f, i, n, beta, bf);
    Ok(bf * bf / (n * n * beta * beta * (bf - 1.0) * (bf - 1.0))
        * (n * fi * beta * (1.0 - beta) + sigma_sq + omega))
}

/// Variance of an FME estimate given that the item was selected.
pub fn fme_variance(f_i: f64, n: f64, beta: f64, sigma2_sq: f64) -> f64 {
    lnf_error(f_i, n, beta, sigma2_sq)
}

/// Expected squared error of FME with non-selection probability `eta`.
pub fn fme_error(f_i: f64, n: f64, beta: f64, sigma2_sq: f64, eta: f64) -> f64 {
    (1.0 - eta) * fme_variance(f_i, n, beta, sigma2_sq) + eta * f_i * f_i
}

/// Chernoff bound on `η_i` for a threshold `c_th = (1 − ζ) n f_i β`.
///
/// Returns 1 when `c_th` exceeds the expected count.
pub fn eta_bound(f_i: f64, n: f64, beta: f64, c_th: f64) -> f64 {
    let m = n * f_i * beta;
    if m <= 0.0 {
        return 1.0;
    }
    let zeta = 1.0 - c_th / m;
    if zeta <= 0.0 {
        return 1.0;
    }
    let zeta = zeta.min(1.0);
    (-zeta * zeta * m / 2.0).exp()
}

/// Parameters of the FME communication predictors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommInput {
    pub n: f64,
    pub d: f64,
    pub b: f64,
    pub l: f64,
    pub beta: f64,
    pub alpha: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sizes: SizeModel,
}

/// Predicted FME communication.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CommBound {
    pub c_us: f64,
    /// Upper bound on `C_SD`, charging `τ1` per item of `Λ`.
    pub c_sd: f64,
    /// Upper bound on `E|Λ|`.
    pub expected_lambda: f64,
}

impl CommBound {
    pub fn c_tot(&self) -> f64 {
        self.c_us + self.c_sd
    }
}

/// Upper bound on the expected number of selected items.
pub fn expected_lambda_bound(n: f64, d: f64, b: f64, l: f64, beta: f64, alpha: f64) -> f64 {
    let bn = beta * n;
    if bn <= l && l <= b {
        (bn + alpha * (l - bn)) * d / b
    } else {
        l * d / b
    }
}

/// Communication of FME.
pub fn fme_comm_bound(p: &CommInput) -> CommBound {
    let t = p.sizes;
    let (t1, t2, t3) = (t.tau1 as f64, t.tau2 as f64, t.tau3 as f64);
    let lam = expected_lambda_bound(p.n, p.d, p.b, p.l, p.beta, p.alpha);
    CommBound {
        c_us: (t1 + t3) * p.n,
        c_sd: (2.0 * t1 + t2 + t3) * (p.beta * p.n + p.mu1 * p.b) + t1 * (p.mu2 + 1.0) * lam,
        expected_lambda: lam,
    }
}

/// Relation between the cap `l` and the range `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `l = b`: the cap never binds.
    LEqualsB,
    /// `l < βn`: at most `l` hash values survive.
    LBelowBetaN,
}

/// Range `b` minimizing the FME communication bound. `p.b` is ignored, and
/// so is `p.l` under [`Regime::LEqualsB`].
pub fn optimal_b(p: &CommInput, regime: Regime) -> f64 {
    let t = p.sizes;
    let (t1, t2, t3) = (t.tau1 as f64, t.tau2 as f64, t.tau3 as f64);
    let num = match regime {
        Regime::LEqualsB => t1 * (p.mu2 + 1.0) * p.beta * (1.0 - p.alpha) * p.n * p.d,
        Regime::LBelowBetaN => t1 * (p.mu2 + 1.0) * p.l * p.d,
    };
    (num / ((2.0 * t1 + t2 + t3) * p.mu1)).sqrt()
}

/// Default floor of the cap policy.
pub const L_POLICY_FLOOR: f64 = 50.0;

/// Cap policy `l = max(n²/d, c)`, rounded down.
pub fn l_policy(n: f64, d: f64, c: f64) -> usize {
    (n * n / d).max(c).floor() as usize
}

/// Total communication of LNF.
pub fn lnf_c_tot(n: f64, d: f64, mu: f64, beta: f64, tau: f64) -> f64 {
    tau * ((1.0 + beta) * n + mu * d)
}

/// Total communication of CH.
pub fn ch_c_tot(n: f64, b: f64, mu: f64, beta: f64, tau: f64) -> f64 {
    lnf_c_tot(n, b, mu, beta, tau)
}

/// Protocols with a categorical poisoning gain formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainProtocol {
    Lnf,
    Fme,
    /// CH when every target shares the fake hash value.
    ChColliding,
    /// CH when only one target maps to the fake hash value.
    ChSingle,
}

/// Maximal frequency gain. `f` is dense over `[d]`, `targets` are 1-based
/// and `eta[k]` is the non-selection probability of `targets[k]` (FME only;
/// missing entries read as 0).
pub fn gains_categorical(
    lambda: f64,
    f: &[f64],
    targets: &[u32],
    eta: &[f64],
    protocol: GainProtocol,
) -> f64 {
    let f_t: f64 = targets
        .iter()
        .map(|&i| f.get(i as usize - 1).copied().unwrap_or(0.0))
        .sum();
    match protocol {
        GainProtocol::Lnf | GainProtocol::ChSingle => lambda * (1.0 - f_t),
        GainProtocol::ChColliding => lambda * (targets.len() as f64 - f_t),
        GainProtocol::Fme => {
            let excess: f64 = targets
                .iter()
                .enumerate()
                .map(|(k, &i)| {
                    eta.get(k).copied().unwrap_or(0.0)
                        * f.get(i as usize - 1).copied().unwrap_or(0.0)
                })
                .sum();
            lambda * (1.0 - f_t) + excess
        }
    }
}

/// Maximal KV gains `(G_Φ, G_Ψ)` from per-user pair counts.
///
/// Each genuine user `j` holding target `i` contributes through
/// `ξ_j = max(|x_j|, κ)` and its value `ψ_{j,i}`. `eta[k]` belongs to
/// `targets[k]`.
pub fn gains_kv(
    data: &KvDataset,
    targets: &[u32],
    n_fake: usize,
    kappa: usize,
    eta: &[f64],
) -> (f64, f64) {
    let n = data.n() as f64;
    let nf = n_fake as f64;
    let t = targets.len() as f64;
    let k = kappa as f64;
    let mut inv_xi = vec![0.0; targets.len()];
    let mut psi_xi = vec![0.0; targets.len()];
    let mut holders = vec![0.0; targets.len()];
    let mut psi_sum = vec![0.0; targets.len()];
    for rec in data.records() {
        let xi = (rec.len() as f64).max(k);
        for &(key, v) in rec {
            if let Some(pos) = targets.iter().position(|&tk| tk == key) {
                inv_xi[pos] += 1.0 / xi;
                psi_xi[pos] += v / xi;
                holders[pos] += 1.0;
                psi_sum[pos] += v;
            }
        }
    }
    let phi: Vec<f64> = holders.iter().map(|&h| h / n).collect();
    let psi: Vec<f64> = holders
        .iter()
        .zip(&psi_sum)
        .map(|(&h, &s)| if h > 0.0 { s / h } else { 0.0 })
        .collect();
    let g_phi = k / (n + nf) * (inv_xi.iter().sum::<f64>() + nf) - phi.iter().sum::<f64>()
        + phi
            .iter()
            .enumerate()
            .map(|(i, &p)| eta.get(i).copied().unwrap_or(0.0) * p)
            .sum::<f64>();
    let g_psi = (0..targets.len())
        .map(|i| {
            let den = inv_xi[i] + nf / t;
            if den > 0.0 {
                (psi_xi[i] + nf / t) / den
            } else {
                0.0
            }
        })
        .sum::<f64>()
        - psi.iter().sum::<f64>();
    (g_phi, g_psi)
}

/// Maximal KV gains `(G_Φ, G_Ψ)` when no user holds more than `κ` pairs.
pub fn gains_kv_simple(
    lambda: f64,
    kappa: usize,
    phi: &[f64],
    psi: &[f64],
    eta: &[f64],
) -> (f64, f64) {
    let k = kappa as f64;
    let t = phi.len() as f64;
    let phi_t: f64 = phi.iter().sum();
    let psi_t: f64 = psi.iter().sum();
    let excess: f64 = phi
        .iter()
        .enumerate()
        .map(|(i, &p)| eta.get(i).copied().unwrap_or(0.0) * p)
        .sum();
    let g_phi = lambda * (k - phi_t) + excess;
    let g_psi = phi
        .iter()
        .zip(psi)
        .map(|(&p, &s)| {
            ((1.0 - lambda) * p * s * t + lambda * k) / ((1.0 - lambda) * p * t + lambda * k)
        })
        .sum::<f64>()
        - psi_t;
    (g_phi, g_psi)
}

/// Inputs of [`kv_accuracy`] for one key.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KvAccuracyInput {
    pub phi: f64,
    pub psi: f64,
    /// Mean of `v²` over the key's pairs; `Ψ²` when every value equals `Ψ`,
    /// 1 for `±1` values.
    pub value_sq: f64,
    pub n: f64,
    pub beta: f64,
    pub kappa: f64,
    pub sigma2_sq: f64,
    pub eta: f64,
}

/// Predicted moments and losses of the KV estimates for one key.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KvAccuracy {
    pub phi_mean: f64,
    pub phi_var: f64,
    /// First-order approximation.
    pub psi_mean: f64,
    /// First-order bound as usually stated, without the `1/Φ` factor and
    /// the dummy term.
    pub psi_var_bound: f64,
    /// First-order variance of the ratio `Ψ̂ = A/Φ̂`, including the
    /// covariance of numerator and denominator and the dummy term.
    pub psi_var: f64,
    pub phi_loss: f64,
    pub psi_loss: f64,
}

/// Moments of `Φ̂_i` and `Ψ̂_i` given selection, and the expected losses.
pub fn kv_accuracy(p: &KvAccuracyInput) -> KvAccuracy {
    let KvAccuracyInput {
        phi,
        psi,
        value_sq,
        n,
        beta,
        kappa,
        sigma2_sq,
        eta,
    } = *p;
    let q = beta * (1.0 + psi) / (2.0 * kappa);
    let r = beta * (1.0 - psi) / (2.0 * kappa);
    let s = beta / kappa;
    let core = 2.0 * (q - q * q + r - r * r) - s * (1.0 - s);
    let phi_var =
        phi * (kappa - beta) / (n * beta) + 2.0 * kappa * kappa * sigma2_sq / (n * n * beta * beta);
    let psi_var_bound = kappa * kappa / (n * beta * beta) * core;
    // Var(A − ΨB)/Φ² with A = Ψ̂Φ̂, B = Φ̂ and per-pair sign probabilities s(1 ± v)/2.
    let psi_var = if phi > 0.0 {
        kappa * (1.0 - psi * psi) / (n * beta * phi) - (value_sq - psi * psi) / (n * phi)
            + 2.0 * kappa * kappa * sigma2_sq * (1.0 + psi * psi)
                / (n * n * beta * beta * phi * phi)
    } else {
        f64::INFINITY
    };
    KvAccuracy {
        phi_mean: phi,
        phi_var,
        psi_mean: psi,
        psi_var_bound,
        psi_var,
        phi_loss: (1.0 - eta) * phi_var + eta * phi * phi,
        psi_loss: (1.0 - eta) * psi_var_bound + eta * (1.0 - psi) * (1.0 - psi),
    }
}

/// Equal-error point of any test distinguishing neighbors under `(ε, δ)`-DP.
pub fn hypothesis_error_bound(eps: f64, delta: f64) -> f64 {
    (1.0 - delta) / (1.0 + eps.exp())
}

/// The `k` items (1-based) with the largest values, ties to the smaller index.
pub fn top_k(truth: &[f64], k: usize) -> Vec<u32> {
    let mut idx: Vec<u32> = (1..=truth.len() as u32).collect();
    idx.sort_by(|&a, &b| {
        truth[b as usize - 1]
            .total_cmp(&truth[a as usize - 1])
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// MSE over the `k` most frequent items; unreported items read as 0.
pub fn mse_topk(truth: &[f64], est: &FrequencyEstimate, k: usize) -> Result<f64> {
    check_k(truth.len(), k)?;
    let items = top_k(truth, k);
    Ok(items
        .iter()
        .map(|&i| (est.get(i) - truth[i as usize - 1]).powi(2))
        .sum::<f64>()
        / k as f64)
}

/// MSE of `(Φ̂, Ψ̂)` over the `k` keys with the largest `Φ`; unreported keys
/// read as `(0, 1)`. With `clip`, `Φ̂` is clipped to `[0, 1]` first.
pub fn mse_topk_kv(
    phi: &[f64],
    psi: &[f64],
    est: &KvEstimate,
    k: usize,
    clip: bool,
) -> Result<(f64, f64)> {
    check_k(phi.len(), k)?;
    if psi.len() != phi.len() {
        return Err(Error::Domain("Φ and Ψ lengths differ".into()));
    }
    let keys = top_k(phi, k);
    let mut e_phi = 0.0;
    let mut e_psi = 0.0;
    for &i in &keys {
        let mut p = est.phi(i);
        if clip {
            p = p.clamp(0.0, 1.0);
        }
        e_phi += (p - phi[i as usize - 1]).powi(2);
        e_psi += (est.psi(i) - psi[i as usize - 1]).powi(2);
    }
    Ok((e_phi / k as f64, e_psi / k as f64))
}

fn check_k(d: usize, k: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::Domain(format!("k={k} outside [1, {d}]")));
    }
    Ok(())
}

/// One predicted-versus-measured comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictorRow {
    pub quantity: String,
    pub predicted: f64,
    pub measured: f64,
    pub rel_error: f64,
}

impl PredictorRow {
    pub fn new(quantity: impl Into<String>, predicted: f64, measured: f64) -> Self {
        let rel_error = if predicted == 0.0 {
            (measured - predicted).abs()
        } else {
            ((measured - predicted) / predicted).abs()
        };
        PredictorRow {
            quantity: quantity.into(),
            predicted,
            measured,
            rel_error,
        }
    }
}

/// Writes rows as CSV with a header.
pub fn write_predictor_report<W: Write>(w: W, rows: &[PredictorRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    out.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}
