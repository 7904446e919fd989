//! Universal hash families over the item domain `[d]`.
//!
//! [`UniversalHash`] is the prime-field family `((a1 x + a0) mod p) mod b`
//! with `p` the smallest prime at least `d`; it supports preimage enumeration
//! in `O(p / b)`. [`Gf2Hash`] is the affine family `x ↦ A x ⊕ c` over GF(2),
//! which is exactly 3-wise independent for `b` a power of two. [`HashTable`]
//! is an explicit lookup table for replaying fixed executions.
//!
//! All public values are 1-based: items in `1..=d`, hash values in `1..=b`.

use rand::Rng as _;
use rand::RngCore;

use crate::error::{Error, Result};

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin, exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime `p ≥ d` (the result lies in `[d, 2d)` for `d ≥ 2`).
pub fn next_prime_at_least(d: u64) -> u64 {
    let mut p = d.max(2);
    while !is_prime(p) {
        p += 1;
    }
    p
}

fn inverse_mod(a: u64, p: u64) -> u64 {
    pow_mod(a, p - 2, p)
}

/// `h(x) = ((a1·x + a0) mod p) mod b`, exposed 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UniversalHash {
    a1: u64,
    a0: u64,
    p: u64,
    b: u32,
    d: u32,
    a1_inv: u64,
}

impl UniversalHash {
    /// Checks `p` prime with `p ≥ d`, `a1 ∈ [1, p−1]`, `a0 ∈ [0, p−1]`, `1 ≤ b ≤ d`.
    pub fn new(a1: u64, a0: u64, p: u64, b: u32, d: u32) -> Result<Self> {
        if d == 0 || b == 0 || b > d {
            return Err(Error::Config(format!(
                "hash range b={b} must lie in [1, d={d}]"
            )));
        }
        if !is_prime(p) || p < d as u64 {
            return Err(Error::Config(format!(
                "p={p} must be a prime at least d={d}"
            )));
        }
        if a1 == 0 || a1 >= p || a0 >= p {
            return Err(Error::Config(format!(
                "coefficients a1={a1}, a0={a0} invalid for p={p}"
            )));
        }
        Ok(UniversalHash {
            a1,
            a0,
            p,
            b,
            d,
            a1_inv: inverse_mod(a1, p),
        })
    }

    /// Draws `a1`, `a0` uniformly with `p = next_prime_at_least(d)`.
    pub fn sample(d: u32, b: u32, rng: &mut impl RngCore) -> Result<Self> {
        let p = next_prime_at_least(d as u64);
        let a1 = rng.gen_range(1..p.max(2));
        let a0 = rng.gen_range(0..p);
        UniversalHash::new(a1, a0, p, b, d)
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn coefficients(&self) -> (u64, u64) {
        (self.a1, self.a0)
    }

    fn hash0(&self, x: u32) -> u64 {
        (mul_mod(self.a1, x as u64, self.p) + self.a0) % self.p % self.b as u64
    }

    /// Number of `y` candidates scanned by [`Self::preimages`] for value `v`.
    pub fn scan_count(&self, v: u32) -> u64 {
        let v0 = (v - 1) as u64;
        if v0 >= self.p {
            0
        } else {
            (self.p - 1 - v0) / self.b as u64 + 1
        }
    }

    fn preimages_of(&self, v: u32) -> Vec<u32> {
        let mut out = Vec::new();
        let mut y = (v - 1) as u64;
        while y < self.p {
            let shifted = (y + self.p - self.a0) % self.p;
            let r = mul_mod(self.a1_inv, shifted, self.p);
            let x = if r == 0 { self.p } else { r };
            if x <= self.d as u64 {
                out.push(x as u32);
            }
            y += self.b as u64;
        }
        out.sort_unstable();
        out
    }
}

/// `h(x) = A·x ⊕ c` over GF(2) with `b = 2^bits`, exposed 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gf2Hash {
    rows: Vec<u32>,
    offset: u32,
    d: u32,
}

impl Gf2Hash {
    /// `rows[k]` is the mask producing output bit `k`.
    pub fn new(rows: Vec<u32>, offset: u32, d: u32) -> Result<Self> {
        let bits = rows.len();
        if bits == 0 || bits > 31 {
            return Err(Error::Config(format!(
                "GF(2) hash needs 1..=31 output bits, got {bits}"
            )));
        }
        if offset >> bits != 0 {
            return Err(Error::Config(format!(
                "offset {offset} exceeds {bits} bits"
            )));
        }
        if d == 0 {
            return Err(Error::Config("domain must be non-empty".into()));
        }
        Ok(Gf2Hash { rows, offset, d })
    }

    /// Draws a uniform matrix and offset; `b` must be a power of two, at least 2.
    pub fn sample(d: u32, b: u32, rng: &mut impl RngCore) -> Result<Self> {
        if b < 2 || !b.is_power_of_two() {
            return Err(Error::Config(format!(
                "GF(2) hash range must be a power of two ≥ 2, got {b}"
            )));
        }
        let bits = b.trailing_zeros() as usize;
        let rows = (0..bits).map(|_| rng.next_u32()).collect();
        let offset = rng.next_u32() & (b - 1);
        Gf2Hash::new(rows, offset, d)
    }

    fn hash0(&self, x: u32) -> u32 {
        let mut h = 0u32;
        for (k, &row) in self.rows.iter().enumerate() {
            h |= ((row & x).count_ones() & 1) << k;
        }
        h ^ self.offset
    }

    fn range(&self) -> u32 {
        1 << self.rows.len()
    }
}

/// Explicit mapping from items to hash values; unlisted items have no value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashTable {
    b: u32,
    map: Vec<u32>,
}

impl HashTable {
    /// Builds a table over `[d]` from `(item, value)` entries.
    pub fn new(d: u32, b: u32, entries: &[(u32, u32)]) -> Result<Self> {
        if b == 0 {
            return Err(Error::Config("hash range must be positive".into()));
        }
        let mut map = vec![0u32; d as usize];
        for &(x, v) in entries {
            if x == 0 || x > d || v == 0 || v > b {
                return Err(Error::Config(format!(
                    "hash table entry {x}→{v} out of range"
                )));
            }
            if map[x as usize - 1] != 0 {
                return Err(Error::Config(format!(
                    "item {x} listed twice in hash table"
                )));
            }
            map[x as usize - 1] = v;
        }
        Ok(HashTable { b, map })
    }
}

/// A hash function drawn from one of the supported families.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HashFunction {
    Prime(UniversalHash),
    Gf2(Gf2Hash),
    Table(HashTable),
}

/// Hash family selector used by configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HashFamily {
    Prime,
    Gf2,
}

impl HashFamily {
    /// Draws a member of the family with domain `d` and range `b`.
    pub fn sample(self, d: u32, b: u32, rng: &mut impl RngCore) -> Result<HashFunction> {
        Ok(match self {
            HashFamily::Prime => HashFunction::Prime(UniversalHash::sample(d, b, rng)?),
            HashFamily::Gf2 => HashFunction::Gf2(Gf2Hash::sample(d, b, rng)?),
        })
    }
}

/// Draws a prime-field hash with domain `d` and range `b`.
pub fn sample_hash(d: u32, b: u32, rng: &mut impl RngCore) -> Result<UniversalHash> {
    UniversalHash::sample(d, b, rng)
}

impl HashFunction {
    /// Size of the item domain.
    pub fn domain(&self) -> u32 {
        match self {
            HashFunction::Prime(h) => h.d,
            HashFunction::Gf2(h) => h.d,
            HashFunction::Table(t) => t.map.len() as u32,
        }
    }

    /// Number of hash values `b`.
    pub fn range(&self) -> u32 {
        match self {
            HashFunction::Prime(h) => h.b,
            HashFunction::Gf2(h) => h.range(),
            HashFunction::Table(t) => t.b,
        }
    }

    /// Hash value in `1..=b` for item `x ∈ [d]`.
    pub fn hash(&self, x: u32) -> Result<u32> {
        if x == 0 || x > self.domain() {
            return Err(Error::Domain(format!(
                "item {x} outside [1, {}]",
                self.domain()
            )));
        }
        match self {
            HashFunction::Prime(h) => Ok(h.hash0(x) as u32 + 1),
            HashFunction::Gf2(h) => Ok(h.hash0(x) + 1),
            HashFunction::Table(t) => match t.map[x as usize - 1] {
                0 => Err(Error::Domain(format!(
                    "item {x} has no entry in the hash table"
                ))),
                v => Ok(v),
            },
        }
    }

    /// Sorted items `x ∈ [d]` with `h(x) = v`.
    pub fn preimages(&self, v: u32) -> Result<Vec<u32>> {
        if v == 0 || v > self.range() {
            return Err(Error::Domain(format!(
                "hash value {v} outside [1, {}]",
                self.range()
            )));
        }
        Ok(match self {
            HashFunction::Prime(h) => h.preimages_of(v),
            HashFunction::Gf2(h) => (1..=h.d).filter(|&x| h.hash0(x) + 1 == v).collect(),
            HashFunction::Table(t) => (1..=t.map.len() as u32)
                .filter(|&x| t.map[x as usize - 1] == v)
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn trial_division(n: u64) -> bool {
        n >= 2 && (2..).take_while(|k| k * k <= n).all(|k| n % k != 0)
    }

    #[test]
    fn primes_match_trial_division() {
        for n in 0..5000 {
            assert_eq!(is_prime(n), trial_division(n), "n = {n}");
        }
        assert_eq!(next_prime_at_least(8), 11);
        assert!([2, 3].contains(&next_prime_at_least(2)));
        assert!(is_prime(1_000_000_007));
        assert!(!is_prime(3_215_031_751));
        assert!(is_prime(18_446_744_073_709_551_557));
    }

    #[test]
    fn worked_hash_value() {
        let h = HashFunction::Prime(UniversalHash::new(1, 0, 11, 4, 8).unwrap());
        assert_eq!(h.hash(5).unwrap(), 2);
        assert!(h.hash(9).is_err());
        assert_eq!(h.preimages(2).unwrap(), vec![1, 5]);
    }

    #[test]
    fn identity_parameters_reduce_mod_b() {
        let h = HashFunction::Prime(UniversalHash::new(1, 0, 11, 10, 10).unwrap());
        for x in 1..=10 {
            assert_eq!(h.hash(x).unwrap(), x % 10 + 1);
        }
    }

    #[test]
    fn minimal_prime_full_range_has_at_most_two_preimages() {
        let mut r = Rng::new(9).stream("t");
        for d in 2..60 {
            let h = HashFunction::Prime(UniversalHash::sample(d, d, &mut r).unwrap());
            for v in 1..=d {
                assert!(h.preimages(v).unwrap().len() <= 2);
            }
        }
    }

    #[test]
    fn table_hash() {
        let t = HashFunction::Table(HashTable::new(8, 4, &[(2, 1), (8, 1), (4, 3)]).unwrap());
        assert_eq!(t.preimages(1).unwrap(), vec![2, 8]);
        assert_eq!(t.hash(4).unwrap(), 3);
        assert!(t.hash(5).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = UniversalHash::sample(1000, 37, &mut Rng::new(1).stream("h")).unwrap();
        let b = UniversalHash::sample(1000, 37, &mut Rng::new(1).stream("h")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pair_collision_rate_matches_enumeration() {
        let (d, b, x, y) = (97u32, 10u32, 5u32, 40u32);
        let p = next_prime_at_least(d as u64);
        let mut exact = 0u64;
        for a1 in 1..p {
            for a0 in 0..p {
                let h = UniversalHash::new(a1, a0, p, b, d).unwrap();
                exact += u64::from(h.hash0(x) == h.hash0(y));
            }
        }
        let exact = exact as f64 / ((p - 1) * p) as f64;
        assert!((exact - 846.0 / 9312.0).abs() < 1e-15);
        let draws = 100_000;
        let mut r = Rng::new(7).stream("hash");
        let hits = (0..draws)
            .filter(|_| {
                let h = UniversalHash::sample(d, b, &mut r).unwrap();
                h.hash0(x) == h.hash0(y)
            })
            .count();
        let rate = hits as f64 / draws as f64;
        let se = (exact * (1.0 - exact) / draws as f64).sqrt();
        assert!(
            (rate - exact).abs() < 3.0 * se,
            "rate {rate}, exact {exact}"
        );
    }

    #[test]
    fn gf2_family_is_pairwise_uniform_by_enumeration() {
        // every matrix and offset for 2 output bits over 4-bit inputs
        let (x, y) = (3u32, 12u32);
        let mut joint = [[0u32; 4]; 4];
        for m in 0..(1u32 << 8) {
            for c in 0..4 {
                let h = Gf2Hash::new(vec![m & 0xF, m >> 4], c, 15).unwrap();
                joint[h.hash0(x) as usize][h.hash0(y) as usize] += 1;
            }
        }
        let expected = (1u32 << 10) / 16;
        assert!(joint.iter().flatten().all(|&c| c == expected));
    }

    proptest! {
        #[test]
        fn preimages_match_brute_force(d in 1u32..400, b_frac in 0.0f64..1.0, seed in any::<u64>()) {
            let b = ((b_frac * d as f64) as u32).clamp(1, d);
            let mut r = Rng::new(seed).stream("p");
            let uh = UniversalHash::sample(d, b, &mut r).unwrap();
            let h = HashFunction::Prime(uh.clone());
            let mut union = Vec::new();
            for v in 1..=b {
                let pre = h.preimages(v).unwrap();
                let brute: Vec<u32> = (1..=d).filter(|&x| h.hash(x).unwrap() == v).collect();
                prop_assert_eq!(&pre, &brute);
                prop_assert!(uh.scan_count(v) <= 2 * d as u64 / b as u64 + 1);
                union.extend(pre);
            }
            union.sort_unstable();
            prop_assert_eq!(union, (1..=d).collect::<Vec<_>>());
        }
    }
}
