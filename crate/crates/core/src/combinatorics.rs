//! Sample compositions and the counting primitives built on them.
//!
//! A sample of size `s` drawn from an urn on `k` colors is a composition of
//! `s` into `k` nonnegative parts. Compositions are ranked in reverse
//! lexicographic order: `x` precedes `y` when, at the first index where they
//! differ, `x` has the larger entry. Rank 0 is `s * e_1`, the last rank is
//! `s * e_k`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Composition {
    parts: Vec<u32>,
    s: u32,
    rank: usize,
}

impl Composition {
    /// Builds a composition from its parts and computes its rank.
    pub fn new(parts: Vec<u32>) -> Result<Self> {
        if parts.is_empty() {
            return Err(UrnError::invalid("a composition needs at least one part"));
        }
        let s = parts
            .iter()
            .try_fold(0u32, |acc, &p| acc.checked_add(p))
            .ok_or_else(|| UrnError::invalid("composition total overflows u32"))?;
        let rank = rank_of(&parts)?;
        Ok(Composition { parts, s, rank })
    }

    pub fn parts(&self) -> &[u32] {
        &self.parts
    }

    pub fn k(&self) -> usize {
        self.parts.len()
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Compact label: digits concatenated when every part is a single digit
    /// (`"201"`), otherwise colon separated (`"12:0:3"`).
    pub fn label(&self) -> String {
        if self.parts.iter().all(|&p| p < 10) {
            self.parts.iter().map(|p| p.to_string()).collect()
        } else {
            self.parts.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(":")
        }
    }
}

/// Number of compositions of `s` into `k` nonnegative parts, `C(s+k-1, s)`.
pub fn composition_count(k: usize, s: u32) -> Result<u128> {
    if k == 0 {
        return Err(UrnError::invalid("k must be at least 1"));
    }
    binomial(s as u128 + k as u128 - 1, s as u128)
        .ok_or_else(|| UrnError::invalid(format!("C({}+{}-1, {}) overflows", s, k, s)))
}

/// Checked binomial coefficient on 128-bit integers.
pub fn binomial(n: u128, r: u128) -> Option<u128> {
    if r > n {
        return Some(0);
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        // acc * (n - i) is divisible by (i + 1) after the multiplication.
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

fn rank_of(parts: &[u32]) -> Result<usize> {
    let k = parts.len();
    let mut remaining: u128 = parts.iter().map(|&p| p as u128).sum();
    let mut rank: u128 = 0;
    for (r, &x) in parts.iter().enumerate().take(k.saturating_sub(1)) {
        let tail = (k - r - 1) as u128;
        // Every composition with a larger value at position r comes first.
        for v in (x as u128 + 1)..=remaining {
            let rest = remaining - v;
            rank = binomial(rest + tail - 1, rest)
                .and_then(|c| rank.checked_add(c))
                .ok_or_else(|| UrnError::invalid("composition rank overflows"))?;
        }
        remaining -= x as u128;
    }
    usize::try_from(rank).map_err(|_| UrnError::invalid("composition rank overflows usize"))
}

/// Streams compositions of `s` into `k` parts in reverse lexicographic order.
#[derive(Debug, Clone)]
pub struct Compositions {
    current: Option<Vec<u32>>,
    rank: usize,
    s: u32,
}

impl Compositions {
    pub fn new(k: usize, s: u32) -> Result<Self> {
        if k == 0 || s == 0 {
            return Err(UrnError::invalid(format!(
                "compositions need k >= 1 and s >= 1 (got k={}, s={})",
                k, s
            )));
        }
        let mut first = vec![0u32; k];
        first[0] = s;
        Ok(Compositions {
            current: Some(first),
            rank: 0,
            s,
        })
    }
}

fn successor(x: &mut [u32]) -> bool {
    let k = x.len();
    if k < 2 {
        return false;
    }
    let Some(r) = (0..k - 1).rev().find(|&i| x[i] > 0) else {
        return false;
    };
    let tail: u32 = x[r + 1..].iter().sum();
    x[r] -= 1;
    for v in x[r + 1..].iter_mut() {
        *v = 0;
    }
    x[r + 1] = tail + 1;
    true
}

impl Iterator for Compositions {
    type Item = Composition;

    fn next(&mut self) -> Option<Composition> {
        let parts = self.current.take()?;
        let mut next = parts.clone();
        if successor(&mut next) {
            self.current = Some(next);
        }
        let item = Composition {
            parts,
            s: self.s,
            rank: self.rank,
        };
        self.rank += 1;
        Some(item)
    }
}

/// All compositions of `s` into `k` parts, canonically largest first.
pub fn enumerate_compositions(k: usize, s: u32) -> Result<Vec<Composition>> {
    let count = composition_count(k, s)?;
    if count > (1u128 << 32) {
        return Err(UrnError::invalid(format!(
            "{} compositions is too many to materialize",
            count
        )));
    }
    Ok(Compositions::new(k, s)?.collect())
}

/// Falling factorial `z (z-1) ... (z-r+1)`; `(z)_0 = 1`.
pub fn falling_factorial(z: f64, r: u32) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (z - i as f64))
}

/// Exact falling factorial on integers; `None` on overflow.
pub fn falling_factorial_int(z: i128, r: u32) -> Option<i128> {
    (0..r as i128).try_fold(1i128, |acc, i| acc.checked_mul(z - i))
}

/// Multinomial coefficient `s! / prod(c_i!)`.
pub fn multinomial(s: u32, c: &Composition) -> Result<u128> {
    if c.s() != s {
        return Err(UrnError::invalid(format!(
            "composition sums to {}, expected {}",
            c.s(),
            s
        )));
    }
    multinomial_parts(c.parts()).ok_or_else(|| UrnError::invalid("multinomial coefficient overflows u128"))
}

/// Multinomial coefficient of raw parts, as a product of binomials.
pub fn multinomial_parts(parts: &[u32]) -> Option<u128> {
    let mut total: u128 = 0;
    let mut acc: u128 = 1;
    for &p in parts {
        total += p as u128;
        acc = acc.checked_mul(binomial(total, p as u128)?)?;
    }
    Some(acc)
}
