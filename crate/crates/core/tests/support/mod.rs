//! Brute-force oracles shared by the integration tests. Nothing here calls
//! into the library's moment or sampling code.
#![allow(dead_code)]

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub fn rat(x: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().expect("finite rational")
}

fn binom(n: i64, r: i64) -> BigInt {
    if r < 0 || r > n {
        return BigInt::zero();
    }
    let mut acc = BigInt::one();
    for i in 0..r {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

fn factorial(n: u32) -> BigInt {
    (1..=n as i64).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// Every way to split `s` draws over `k` colors, in no particular order.
pub fn splits(k: usize, s: u32) -> Vec<Vec<u32>> {
    if k == 1 {
        return vec![vec![s]];
    }
    let mut out = Vec::new();
    for first in 0..=s {
        for mut rest in splits(k - 1, s - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Probability of drawing `q` from counts `x`.
pub fn sample_probability(x: &[i64], q: &[u32], with_replacement: bool) -> BigRational {
    let tau: i64 = x.iter().sum();
    let s: u32 = q.iter().sum();
    if with_replacement {
        let mut num = factorial(s);
        let mut den = BigInt::one();
        for (&xi, &qi) in x.iter().zip(q) {
            num *= BigInt::from(xi).pow(qi);
            den *= factorial(qi);
        }
        den *= BigInt::from(tau).pow(s);
        BigRational::new(num, den)
    } else {
        let num = x
            .iter()
            .zip(q)
            .fold(BigInt::one(), |acc, (&xi, &qi)| acc * binom(xi, qi as i64));
        BigRational::new(num, binom(tau, s as i64))
    }
}

/// Replacement vector `q A / s`; panics if it is not integral.
pub fn replacement(core: &[Vec<i64>], q: &[u32], s: u32) -> Vec<i64> {
    let k = core.len();
    (0..k)
        .map(|j| {
            let num: i64 = (0..k).map(|i| q[i] as i64 * core[i][j]).sum();
            assert_eq!(num % s as i64, 0, "non-integral replacement");
            num / s as i64
        })
        .collect()
}

/// Exact law of `X_n`, found by expanding every path of the draw tree;
/// `None` if some path drives a count negative.
pub fn path_tree(
    core: &[Vec<i64>],
    s: u32,
    x0: &[i64],
    with_replacement: bool,
    n: u32,
) -> Option<BTreeMap<Vec<i64>, BigRational>> {
    let k = core.len();
    let mut law = BTreeMap::new();
    law.insert(x0.to_vec(), BigRational::one());
    for _ in 0..n {
        let mut next: BTreeMap<Vec<i64>, BigRational> = BTreeMap::new();
        for (x, p) in &law {
            for q in splits(k, s) {
                let pq = sample_probability(x, &q, with_replacement);
                if pq.is_zero() {
                    continue;
                }
                let add = replacement(core, &q, s);
                let y: Vec<i64> = x.iter().zip(&add).map(|(a, b)| a + b).collect();
                if y.iter().any(|&v| v < 0) {
                    return None;
                }
                *next.entry(y).or_insert_with(BigRational::zero) += p * pq;
            }
        }
        law = next;
    }
    Some(law)
}

/// Mean and covariance of a finite law.
pub fn law_moments(law: &BTreeMap<Vec<i64>, BigRational>) -> (Vec<BigRational>, Vec<Vec<BigRational>>) {
    let k = law.keys().next().expect("nonempty law").len();
    let total: BigRational = law.values().sum();
    assert!(total.is_one(), "probabilities sum to {total}");
    let mut mean = vec![BigRational::zero(); k];
    let mut second = vec![vec![BigRational::zero(); k]; k];
    for (x, p) in law {
        for i in 0..k {
            mean[i] += p * rat(x[i]);
            for j in 0..k {
                second[i][j] += p * rat(x[i] * x[j]);
            }
        }
    }
    let cov = (0..k)
        .map(|i| (0..k).map(|j| &second[i][j] - &mean[i] * &mean[j]).collect())
        .collect();
    (mean, cov)
}

/// `Y = (q / s - x / tau) A` in exact rationals.
pub fn martingale_difference(core: &[Vec<i64>], x: &[i64], q: &[u32]) -> Vec<BigRational> {
    let k = core.len();
    let tau = rat(x.iter().sum());
    let s = rat(q.iter().map(|&v| v as i64).sum());
    (0..k)
        .map(|j| {
            (0..k).fold(BigRational::zero(), |acc, i| {
                acc + (rat(q[i] as i64) / &s - rat(x[i]) / &tau) * rat(core[i][j])
            })
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
