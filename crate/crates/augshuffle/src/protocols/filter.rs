//! Collector-side selection of popular hash values.

use crate::dummy::DummyCountDistribution;
use crate::error::Result;
use crate::hashing::HashFunction;

/// Selected hash values and items.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FilterResult {
    /// Λ^H ⊆ [b], ascending.
    pub hashes: Vec<u32>,
    /// Λ ⊆ [d], ascending.
    pub items: Vec<u32>,
    pub z_th: u64,
}

/// Indices `v ∈ [b]` (1-based) with `counts[v-1] ≥ z_th`, capped at the `l`
/// largest counts; ties at the cut go to the smaller hash value.
pub fn select_hashes(counts: &[i64], z_th: u64, l: usize) -> Vec<u32> {
    let mut sel: Vec<u32> = (1..=counts.len() as u32)
        .filter(|&v| counts[v as usize - 1] >= z_th as i64)
        .collect();
    if sel.len() > l {
        sel.sort_by_key(|&v| (std::cmp::Reverse(counts[v as usize - 1]), v));
        sel.truncate(l);
        sel.sort_unstable();
    }
    sel
}

/// Items of `[d]` whose hash lies in the ascending set `hashes`.
pub fn items_for_hashes(h: &HashFunction, hashes: &[u32]) -> Result<Vec<u32>> {
    if hashes.is_empty() {
        return Ok(Vec::new());
    }
    let d = h.domain();
    let b = h.range();
    if let HashFunction::Prime(u) = h {
        let per = u.p().div_ceil(b as u64);
        if (hashes.len() as u64).saturating_mul(per) < d as u64 {
            let mut out = Vec::new();
            for &v in hashes {
                out.extend(h.preimages(v)?);
            }
            out.sort_unstable();
            return Ok(out);
        }
    }
    let mut mask = vec![false; b as usize + 1];
    for &v in hashes {
        mask[v as usize] = true;
    }
    let mut out = Vec::new();
    for x in 1..=d {
        if let Ok(v) = h.hash(x) {
            if mask[v as usize] {
                out.push(x);
            }
        }
    }
    Ok(out)
}

/// Thresholds hash counts at the `alpha` tail quantile of `d1` and keeps at most `l`.
pub fn filter_items(
    counts: &[i64],
    alpha: f64,
    d1: &DummyCountDistribution,
    l: usize,
    h: &HashFunction,
) -> Result<FilterResult> {
    let z_th = d1.threshold(alpha);
    let hashes = select_hashes(counts, z_th, l);
    let items = items_for_hashes(h, &hashes)?;
    Ok(FilterResult {
        hashes,
        items,
        z_th,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::HashTable;

    #[test]
    fn toy_selection() {
        let h = HashFunction::Table(HashTable::new(8, 4, &[(2, 1), (8, 1), (4, 3)]).unwrap());
        let d1 = DummyCountDistribution::binomial(2, 0.5).unwrap();
        let r = filter_items(&[5, 0, 2, 1], 0.05, &d1, 4, &h).unwrap();
        assert_eq!(
            r,
            FilterResult {
                hashes: vec![1],
                items: vec![2, 8],
                z_th: 3
            }
        );
    }

    #[test]
    fn cap_and_ties() {
        assert_eq!(select_hashes(&[3, 5, 5, 1, 5], 0, 2), vec![2, 3]);
        assert_eq!(select_hashes(&[3, 5, 5, 1, 5], 0, 5), vec![1, 2, 3, 4, 5]);
        assert_eq!(select_hashes(&[3, 5, 5, 1, 5], 4, 5), vec![2, 3, 5]);
        assert_eq!(select_hashes(&[-2, 0], 0, 2), vec![2]);
    }
}
