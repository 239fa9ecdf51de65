mod support;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use urnlab::combinatorics::{composition_count, Compositions};
use urnlab::moments::{exact_cov, exact_mean, exact_moments_rational};
use urnlab::simulator::simulate_one;
use urnlab::spectral::{decompose, DEFAULT_CLUSTER_TOL};
use urnlab::{build_replacement_matrix, CoreMatrix, SamplingMode, UrnSpec};

/// Rows `s * c_i + r`: a shared residue vector `r` keeps them congruent mod
/// `s`, and every `c_i` sums to the same total, so the core is balanced.
fn balanced_core() -> impl Strategy<Value = (Vec<Vec<i64>>, u32)> {
    (2usize..=4, 1u32..=3).prop_flat_map(|(k, s)| {
        let residue = prop::collection::vec(0..s as i64, k);
        let total = 1i64..=4;
        (
            residue,
            total,
            prop::collection::vec(prop::collection::vec(0u32..100, k), k),
        )
            .prop_map(move |(r, c, weights)| {
                let rows = weights
                    .iter()
                    .map(|w| {
                        // split c over k parts in proportion to the weights
                        let sum: u32 = w.iter().sum::<u32>().max(1);
                        let mut parts: Vec<i64> = w.iter().map(|&x| x as i64 * c / sum as i64).collect();
                        let short = c - parts.iter().sum::<i64>();
                        parts[0] += short;
                        parts.iter().zip(&r).map(|(p, ri)| s as i64 * p + ri).collect()
                    })
                    .collect();
                (rows, s)
            })
    })
}

fn spec_with_start(rows: Vec<Vec<i64>>, s: u32, extra: Vec<i64>, mode: SamplingMode) -> UrnSpec {
    let k = rows.len();
    let x0: Vec<i64> = (0..k)
        .map(|i| extra[i % extra.len()] + if i == 0 { s as i64 } else { 0 })
        .collect();
    UrnSpec::new(CoreMatrix::new(rows).unwrap(), s, x0, mode).unwrap()
}

fn psd_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compositions_are_ranked_in_reverse_lex_order(k in 1usize..=5, s in 1u32..=6) {
        let all: Vec<_> = Compositions::new(k, s).unwrap().collect();
        prop_assert_eq!(all.len() as u128, composition_count(k, s).unwrap());
        for (i, c) in all.iter().enumerate() {
            prop_assert_eq!(c.rank(), i);
            prop_assert_eq!(c.s(), s);
        }
        for w in all.windows(2) {
            prop_assert!(w[0].parts() > w[1].parts());
        }
    }

    #[test]
    fn replacement_rows_are_affine_and_balanced((rows, s) in balanced_core()) {
        let core = CoreMatrix::new(rows.clone()).unwrap();
        let b = core.row_sums()[0];
        let m = build_replacement_matrix(&core, s).unwrap();
        for (c, row) in m.samples.iter().zip(&m.rows) {
            prop_assert_eq!(row.iter().sum::<i64>(), b);
            prop_assert_eq!(row, &support::replacement(&rows, c.parts(), s));
        }
        for i in 0..rows.len() {
            let mut pure = vec![0u32; rows.len()];
            pure[i] = s;
            let c = urnlab::Composition::new(pure).unwrap();
            prop_assert_eq!(m.row_for(&c), &rows[i][..]);
        }
        let single = build_replacement_matrix(&core, 1).unwrap();
        prop_assert_eq!(single.rows, rows);
    }

    #[test]
    fn exact_moments_keep_their_invariants(
        (rows, s) in balanced_core(),
        extra in prop::collection::vec(0i64..4, 1..4),
        with_replacement in any::<bool>(),
    ) {
        let mode = if with_replacement { SamplingMode::WithReplacement } else { SamplingMode::WithoutReplacement };
        let spec = spec_with_start(rows, s, extra, mode);
        let k = spec.k;
        for n in [0u64, 1, 5, 40] {
            let mu = exact_mean(&spec, n);
            let sigma = exact_cov(&spec, n);
            let tau = spec.tau(n) as f64;
            prop_assert!((mu.sum() - tau).abs() <= 1e-9 * tau);
            let scale = 1.0 + sigma.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for i in 0..k {
                prop_assert!(sigma.row(i).sum().abs() <= 1e-9 * scale);
                for j in 0..k {
                    prop_assert_eq!(sigma[(i, j)], sigma[(j, i)]);
                }
            }
            prop_assert!(psd_min_eigenvalue(&sigma) >= -1e-9 * scale);
        }
        let exact = exact_moments_rational(&spec, 6).unwrap();
        let sigma = exact_cov(&spec, 6);
        for i in 0..k {
            for j in 0..k {
                let want = support::to_f64(&exact.sigma[i][j]);
                prop_assert!((sigma[(i, j)] - want).abs() <= 1e-10 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn simulated_paths_keep_their_invariants(
        (rows, s) in balanced_core(),
        extra in prop::collection::vec(0i64..4, 1..4),
        seed in any::<u64>(),
    ) {
        let spec = spec_with_start(rows.clone(), s, extra, SamplingMode::WithoutReplacement);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let t = simulate_one(&spec, 60, &mut rng, true).unwrap();
        for (n, st) in t.states.iter().enumerate() {
            prop_assert_eq!(st.tau, spec.tau(n as u64));
            prop_assert_eq!(st.x.iter().sum::<i64>(), st.tau);
            prop_assert!(st.x.iter().all(|&v| v >= 0));
        }
        for (n, (q, y)) in t.draws.iter().zip(t.y_seq.as_ref().unwrap()).enumerate() {
            let prev = &t.states[n].x;
            prop_assert_eq!(q.s(), s);
            prop_assert!(q.parts().iter().zip(prev).all(|(&a, &x)| a as i64 <= x));
            let add = support::replacement(&rows, q.parts(), s);
            let next: Vec<i64> = prev.iter().zip(&add).map(|(a, b)| a + b).collect();
            prop_assert_eq!(&next, &t.states[n + 1].x);
            let exact = support::martingale_difference(&rows, prev, q.parts());
            for (num, want) in y.numer.iter().zip(&exact) {
                prop_assert_eq!(&num_rational::BigRational::new((*num).into(), y.denom.into()), want);
            }
            prop_assert!(y.annihilates_ones());
        }
    }

    #[test]
    fn positive_cores_decompose_cleanly((rows, _s) in balanced_core()) {
        prop_assume!(rows.iter().flatten().all(|&v| v > 0));
        let core = CoreMatrix::new(rows).unwrap();
        let b = core.row_sums()[0] as f64;
        let dec = decompose(&core, DEFAULT_CLUSTER_TOL).unwrap();
        let k = core.k();
        let a = core.to_matrix();
        let mut sum = DMatrix::<Complex64>::zeros(k, k);
        let mut recon = DMatrix::<Complex64>::zeros(k, k);
        for g in &dec.groups {
            sum += &g.projection;
            recon += &g.projection * g.lambda + &g.nilpotent;
        }
        let ac = a.map(|v| Complex64::new(v, 0.0));
        let tol = 1e-8 * dec.scale;
        prop_assert!((sum - DMatrix::identity(k, k)).iter().all(|z| z.norm() < 1e-8));
        prop_assert!((recon - &ac).iter().all(|z| z.norm() < tol));
        prop_assert!((dec.lambda1 - b).abs() < 1e-12);
        let v1 = dec.v1.as_ref().unwrap();
        prop_assert!(v1.iter().all(|&v| v > 0.0));
        prop_assert!((v1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for j in 0..k {
            let va: f64 = (0..k).map(|i| v1[i] * a[(i, j)]).sum();
            prop_assert!((va - b * v1[j]).abs() < 1e-10 * b);
        }
        // the all-ones vector lives in the principal group
        let p1 = &dec.principal_group().projection;
        for i in 0..k {
            let row: Complex64 = p1.row(i).iter().sum();
            prop_assert!((row - 1.0).norm() < 1e-8);
        }
        prop_assert!(dec.index.map_or(true, |x| x < 1.0));
    }

    #[test]
    fn jordan_structure_survives_a_similarity(
        blocks in prop::collection::vec((1usize..=3, -4i64..=2), 1..=2),
        lower in prop::collection::vec(-1i64..=1, 10),
        b in 3i64..=6,
    ) {
        // one block per eigenvalue; b itself is reserved for the ones vector
        let mut eig: Vec<i64> = blocks.iter().map(|&(_, l)| l).collect();
        eig.sort();
        eig.dedup();
        prop_assume!(eig.len() == blocks.len());
        let k = 1 + blocks.iter().map(|&(m, _)| m).sum::<usize>();
        prop_assume!(k <= 5);
        let mut j = DMatrix::<i64>::zeros(k, k);
        j[(0, 0)] = b;
        let mut at = 1;
        for &(m, l) in &blocks {
            for p in 0..m {
                j[(at + p, at + p)] = l;
                if p + 1 < m {
                    j[(at + p, at + p + 1)] = 1;
                }
            }
            at += m;
        }
        // unit lower triangular with a ones first column, so T e1 = 1^T
        let mut t = DMatrix::<i64>::identity(k, k);
        let mut it = lower.iter().cycle();
        for r in 1..k {
            t[(r, 0)] = 1;
            for c in 1..r {
                t[(r, c)] = *it.next().unwrap();
            }
        }
        let t_inv = t.map(|v| v as f64).try_inverse().unwrap().map(|v| v.round() as i64);
        let a = &t * &j * &t_inv;
        let rows: Vec<Vec<i64>> = (0..k).map(|r| (0..k).map(|c| a[(r, c)]).collect()).collect();
        let core = CoreMatrix::new(rows).unwrap();
        prop_assume!(core.balance() == Some(b));
        let dec = decompose(&core, DEFAULT_CLUSTER_TOL).unwrap();
        prop_assume!(dec.scale < 100.0);
        prop_assert_eq!(dec.groups.len(), blocks.len() + 1);
        for &(m, l) in &blocks {
            let g = dec.groups.iter().find(|g| (g.lambda.re - l as f64).abs() < 1e-3).unwrap();
            prop_assert_eq!(g.multiplicity, m);
            prop_assert_eq!(g.nu, m - 1);
        }
    }
}
