//! Sampling, trajectory evolution and Monte Carlo estimation.

use nalgebra::{DMatrix, RowDVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::Composition;
use crate::error::{Result, UrnError};
use crate::linalg::serde_rows;
use crate::moments::{self, AsymptoticSummary, MomentTrajectory, Scaling};
use crate::rng;
use crate::spectral::Regime;
use crate::urn_model::{ReplacementMatrix, SamplingMode, UrnSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrnState {
    pub x: Vec<i64>,
    pub n: u64,
    pub tau: i64,
}

impl UrnState {
    pub fn initial(spec: &UrnSpec) -> Self {
        UrnState {
            x: spec.x0.clone(),
            n: 0,
            tau: spec.tau0(),
        }
    }
}

/// Up to this many draws a color count is sampled as a chain of exact
/// integer Bernoulli trials; larger samples go through `rand_distr`.
const CHAIN_LIMIT: u32 = 64;

fn hypergeometric<R: Rng + ?Sized>(total: i64, good: i64, draws: u32, rng: &mut R) -> Result<u32> {
    if draws <= CHAIN_LIMIT {
        let (mut total, mut good, mut hits) = (total, good, 0u32);
        for _ in 0..draws {
            if rng.gen_range(0..total) < good {
                hits += 1;
                good -= 1;
            }
            total -= 1;
        }
        return Ok(hits);
    }
    let d = Hypergeometric::new(total as u64, good as u64, draws as u64)
        .map_err(|e| UrnError::numeric(format!("hypergeometric sampler: {e}")))?;
    Ok(d.sample(rng) as u32)
}

fn binomial<R: Rng + ?Sized>(total: i64, good: i64, draws: u32, rng: &mut R) -> Result<u32> {
    if draws <= CHAIN_LIMIT {
        return Ok((0..draws).filter(|_| rng.gen_range(0..total) < good).count() as u32);
    }
    let d = Binomial::new(draws as u64, good as f64 / total as f64)
        .map_err(|e| UrnError::numeric(format!("binomial sampler: {e}")))?;
    Ok(d.sample(rng) as u32)
}

/// Fills `out` with a sample of size `s` drawn color by color: each count is
/// conditioned on the draws and balls left after the earlier colors.
fn draw_into<R: Rng + ?Sized>(
    x: &[i64],
    tau: i64,
    s: u32,
    mode: SamplingMode,
    rng: &mut R,
    out: &mut [u32],
) -> Result<()> {
    match mode {
        SamplingMode::WithoutReplacement if tau < s as i64 => {
            return Err(UrnError::Tenability(format!(
                "cannot draw {s} balls without replacement from {tau}"
            )))
        }
        SamplingMode::WithReplacement if tau < 1 => {
            return Err(UrnError::Tenability("cannot draw from an empty urn".into()))
        }
        _ => {}
    }
    let mut remaining_total = tau;
    let mut remaining_draws = s;
    let k = x.len();
    for i in 0..k {
        if remaining_draws == 0 {
            out[i] = 0;
            continue;
        }
        if i + 1 == k {
            out[i] = remaining_draws;
            break;
        }
        let q = match x[i] {
            0 => 0,
            xi if xi == remaining_total => remaining_draws,
            xi => match mode {
                SamplingMode::WithoutReplacement => hypergeometric(remaining_total, xi, remaining_draws, rng)?,
                SamplingMode::WithReplacement => binomial(remaining_total, xi, remaining_draws, rng)?,
            },
        };
        out[i] = q;
        remaining_draws -= q;
        remaining_total -= x[i];
    }
    Ok(())
}

/// One sample of size `s` from the current counts.
pub fn draw_sample<R: Rng + ?Sized>(state: &UrnState, s: u32, mode: SamplingMode, rng: &mut R) -> Result<Composition> {
    let mut parts = vec![0u32; state.x.len()];
    draw_into(&state.x, state.tau, s, mode, rng, &mut parts)?;
    Composition::new(parts)
}

/// Adds the replacement row for `draw`.
pub fn step(state: &UrnState, m: &ReplacementMatrix, draw: &Composition) -> Result<UrnState> {
    if draw.k() != state.x.len() || draw.s() != m.s || m.k != state.x.len() {
        return Err(UrnError::invalid(format!(
            "sample {} does not fit a {}-color urn with s = {}",
            draw.label(),
            m.k,
            m.s
        )));
    }
    let row = m.row_for(draw);
    let x: Vec<i64> = state.x.iter().zip(row).map(|(a, b)| a + b).collect();
    if let Some(c) = x.iter().position(|&v| v < 0) {
        return Err(UrnError::Tenability(format!(
            "sample {} drives color {} negative at step {}",
            draw.label(),
            c + 1,
            state.n + 1
        )));
    }
    Ok(UrnState {
        x,
        n: state.n + 1,
        tau: state.tau + row.iter().sum::<i64>(),
    })
}

/// `Y_n = (Q_n / s - X_{n-1} / tau_{n-1}) A` held exactly as `numer / denom`
/// with `denom = s tau_{n-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YRecord {
    pub numer: Vec<i128>,
    pub denom: i128,
}

impl YRecord {
    fn new(spec: &UrnSpec, q: &[u32], x_prev: &[i64], tau_prev: i64) -> Self {
        let k = spec.k;
        let (s, tau) = (spec.s as i128, tau_prev as i128);
        let numer = (0..k)
            .map(|j| {
                (0..k)
                    .map(|i| (tau * q[i] as i128 - s * x_prev[i] as i128) * spec.core.get(i, j) as i128)
                    .sum()
            })
            .collect();
        YRecord { numer, denom: s * tau }
    }

    /// `Y_n 1^T == 0`, checked in integers.
    pub fn annihilates_ones(&self) -> bool {
        self.numer.iter().sum::<i128>() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.numer.iter().map(|&v| v as f64 / self.denom as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<UrnState>,
    pub draws: Vec<Composition>,
    pub y_seq: Option<Vec<YRecord>>,
}

impl Trajectory {
    pub fn last(&self) -> &UrnState {
        self.states.last().expect("a trajectory holds at least X_0")
    }
}

pub fn simulate_one<R: Rng + ?Sized>(spec: &UrnSpec, n: u64, rng: &mut R, record_y: bool) -> Result<Trajectory> {
    let m = crate::urn_model::build_replacement_matrix(&spec.core, spec.s)?;
    let mut states = Vec::with_capacity(n as usize + 1);
    let mut draws = Vec::with_capacity(n as usize);
    let mut y_seq = record_y.then(|| Vec::with_capacity(n as usize));
    states.push(UrnState::initial(spec));
    for _ in 0..n {
        let cur = states.last().unwrap();
        let draw = draw_sample(cur, spec.s, spec.mode, rng)?;
        if let Some(ys) = y_seq.as_mut() {
            let y = YRecord::new(spec, draw.parts(), &cur.x, cur.tau);
            if !y.annihilates_ones() {
                return Err(UrnError::numeric(format!(
                    "Y_{} does not annihilate the ones vector",
                    cur.n + 1
                )));
            }
            ys.push(y);
        }
        let next = step(cur, &m, &draw)?;
        states.push(next);
        draws.push(draw);
    }
    Ok(Trajectory { states, draws, y_seq })
}

/// Runs one path to step `n` keeping only the current counts.
pub fn terminal_state<R: Rng + ?Sized>(spec: &UrnSpec, n: u64, rng: &mut R) -> Result<Vec<i64>> {
    let k = spec.k;
    let s = spec.s as i64;
    let mut x = spec.x0.clone();
    let mut tau = spec.tau0();
    let mut q = vec![0u32; k];
    for step in 0..n {
        draw_into(&x, tau, spec.s, spec.mode, rng, &mut q)?;
        for j in 0..k {
            let add: i64 = (0..k).map(|i| q[i] as i64 * spec.core.get(i, j)).sum::<i64>() / s;
            x[j] += add;
            if x[j] < 0 {
                return Err(UrnError::Tenability(format!(
                    "color {} went negative at step {}",
                    j + 1,
                    step + 1
                )));
            }
        }
        tau += spec.b;
    }
    Ok(x)
}

/// Terminal states of `reps` independent paths, in replication order.
pub fn monte_carlo_states(spec: &UrnSpec, n: u64, reps: u64, master_seed: u64) -> Result<Vec<Vec<i64>>> {
    (0..reps)
        .into_par_iter()
        .map(|r| terminal_state(spec, n, &mut rng::stream(master_seed, r)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdMoments {
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub reps: u64,
    pub n: u64,
    pub mean_hat: Vec<f64>,
    /// Per-color totals over all replications; they sum to `reps * tau_n`.
    pub sum_x: Vec<i128>,
    pub mean_se: Vec<f64>,
    #[serde(with = "serde_rows")]
    pub cov_hat: DMatrix<f64>,
    /// Standard error of each covariance entry, from the spread of the
    /// per-replication products.
    #[serde(with = "serde_rows")]
    pub cov_se: DMatrix<f64>,
    /// Moments of `(X_n - b v1 n) / sqrt(xi_n)`; absent when the core is reducible.
    pub std_moments: Option<Vec<StdMoments>>,
    pub scaling: Option<Scaling>,
    pub seed: u64,
    pub mode: SamplingMode,
}

/// Centering slope `b v1` and covariance scale used for standardization.
#[derive(Debug, Clone)]
pub struct Standardization {
    pub slope: Vec<f64>,
    pub scaling: Scaling,
}

impl From<&AsymptoticSummary> for Standardization {
    fn from(a: &AsymptoticSummary) -> Self {
        Standardization {
            slope: a.mu_slope.clone(),
            scaling: a.scaling,
        }
    }
}

fn mean_of(values: impl Iterator<Item = f64>, count: usize) -> f64 {
    values.sum::<f64>() / count as f64
}

impl MonteCarloSummary {
    pub fn from_terminal_states(
        states: &[Vec<i64>],
        n: u64,
        seed: u64,
        mode: SamplingMode,
        standardization: Option<&Standardization>,
    ) -> Result<Self> {
        let reps = states.len();
        if reps < 2 {
            return Err(UrnError::invalid("need at least two replications"));
        }
        let k = states[0].len();
        if states.iter().any(|x| x.len() != k) {
            return Err(UrnError::invalid("terminal states of different lengths"));
        }
        let rf = reps as f64;
        let sum_x: Vec<i128> = (0..k).map(|j| states.iter().map(|x| x[j] as i128).sum()).collect();
        let mean_hat: Vec<f64> = sum_x.iter().map(|&t| t as f64 / rf).collect();
        let dev: Vec<Vec<f64>> = states
            .iter()
            .map(|x| x.iter().zip(&mean_hat).map(|(&v, m)| v as f64 - m).collect())
            .collect();
        let mut cov_hat = DMatrix::zeros(k, k);
        let mut cov_se = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let prod_mean = mean_of(dev.iter().map(|d| d[i] * d[j]), reps);
                let c = prod_mean * rf / (rf - 1.0);
                let spread = dev.iter().map(|d| (d[i] * d[j] - prod_mean).powi(2)).sum::<f64>() / (rf - 1.0);
                let se = (spread / rf).sqrt();
                cov_hat[(i, j)] = c;
                cov_hat[(j, i)] = c;
                cov_se[(i, j)] = se;
                cov_se[(j, i)] = se;
            }
        }
        let mean_se = (0..k).map(|i| (cov_hat[(i, i)] / rf).sqrt()).collect();
        let std_moments = standardization.map(|st| {
            let xi = st.scaling.eval(n as f64).sqrt();
            (0..k)
                .map(|j| {
                    let z: Vec<f64> = states
                        .iter()
                        .map(|x| (x[j] as f64 - st.slope[j] * n as f64) / xi)
                        .collect();
                    let zm = mean_of(z.iter().copied(), reps);
                    let m2 = mean_of(z.iter().map(|v| (v - zm).powi(2)), reps);
                    let m3 = mean_of(z.iter().map(|v| (v - zm).powi(3)), reps);
                    let m4 = mean_of(z.iter().map(|v| (v - zm).powi(4)), reps);
                    StdMoments {
                        skewness: m3 / m2.powf(1.5),
                        excess_kurtosis: m4 / (m2 * m2) - 3.0,
                    }
                })
                .collect()
        });
        Ok(MonteCarloSummary {
            reps: reps as u64,
            n,
            mean_hat,
            sum_x,
            mean_se,
            cov_hat,
            cov_se,
            std_moments,
            scaling: standardization.map(|s| s.scaling),
            seed,
            mode,
        })
    }
}

pub fn monte_carlo(spec: &UrnSpec, n: u64, reps: u64, master_seed: u64) -> Result<MonteCarloSummary> {
    let theory = moments::clt_params(spec).ok();
    let st = theory.as_ref().map(Standardization::from);
    let states = monte_carlo_states(spec, n, reps, master_seed)?;
    MonteCarloSummary::from_terminal_states(&states, n, master_seed, spec.mode, st.as_ref())
}

/// Pass thresholds for [`compare`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CompareConfig {
    pub z_max: f64,
    pub skew_max: f64,
    pub kurtosis_max: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            z_max: 5.0,
            skew_max: 0.1,
            kurtosis_max: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitComparison {
    pub applicable: bool,
    pub note: Option<String>,
    #[serde(with = "serde_rows::option")]
    pub z: Option<DMatrix<f64>>,
    pub max_abs_z: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentCheck {
    pub color: usize,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub n: u64,
    pub reps: u64,
    pub mean_max_abs_dev: f64,
    pub mean_se: f64,
    pub mean_max_z: f64,
    pub mean_pass: bool,
    #[serde(with = "serde_rows")]
    pub cov_z: DMatrix<f64>,
    pub cov_max_abs_z: f64,
    pub cov_pass: bool,
    pub limit: LimitComparison,
    pub moments: Vec<MomentCheck>,
    pub moments_pass: bool,
    pub passed: bool,
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-9 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Checks a Monte Carlo summary against the exact moments at the same `n`
/// and, where one exists, against the covariance limit.
pub fn compare(
    summary: &MonteCarloSummary,
    theory: Option<&AsymptoticSummary>,
    exact: &MomentTrajectory,
    cfg: &CompareConfig,
) -> Result<CompareReport> {
    let k = summary.mean_hat.len();
    if summary.n > exact.n_max {
        return Err(UrnError::invalid(format!(
            "exact moments stop at n = {}, summary is at n = {}",
            exact.n_max, summary.n
        )));
    }
    let mu: &RowDVector<f64> = &exact.mu[summary.n as usize];
    let sigma = &exact.sigma[summary.n as usize];
    if mu.len() != k || summary.cov_hat.nrows() != k || theory.is_some_and(|t| t.v1.len() != k) {
        return Err(UrnError::invalid(
            "summary and reference have different numbers of colors",
        ));
    }

    let mut mean_max_abs_dev: f64 = 0.0;
    let mut mean_se = 0.0;
    let mut mean_max_z: f64 = 0.0;
    for j in 0..k {
        let d = (summary.mean_hat[j] - mu[j]).abs();
        if d >= mean_max_abs_dev {
            mean_max_abs_dev = d;
            mean_se = summary.mean_se[j];
        }
        mean_max_z = mean_max_z.max(z_score(d, summary.mean_se[j]));
    }
    let cov_z = DMatrix::from_fn(k, k, |i, j| {
        z_score(summary.cov_hat[(i, j)] - sigma[(i, j)], summary.cov_se[(i, j)])
    });
    let cov_max_abs_z = cov_z.iter().fold(0.0f64, |a, z| a.max(z.abs()));

    let regime = theory.map(|t| t.regime);
    let limit = match theory.and_then(|t| t.sigma_inf.as_ref().map(|s| (t, s))) {
        Some((t, sig)) => {
            let xi = t.scaling.eval(summary.n as f64);
            let z = DMatrix::from_fn(k, k, |i, j| {
                z_score(summary.cov_hat[(i, j)] / xi - sig[(i, j)], summary.cov_se[(i, j)] / xi)
            });
            let m = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            LimitComparison {
                applicable: true,
                note: None,
                z: Some(z),
                max_abs_z: Some(m),
            }
        }
        None => LimitComparison {
            applicable: false,
            note: Some(match regime {
                Some(Regime::Large) => "not applicable: large index, compared against exact moments only".into(),
                _ => "not applicable: no covariance limit for this core".into(),
            }),
            z: None,
            max_abs_z: None,
        },
    };

    let moments_apply = matches!(regime, Some(Regime::Small) | Some(Regime::Critical));
    let moments: Vec<MomentCheck> = summary
        .std_moments
        .iter()
        .flatten()
        .enumerate()
        .map(|(j, m)| MomentCheck {
            color: j + 1,
            skewness: m.skewness,
            excess_kurtosis: m.excess_kurtosis,
            pass: m.skewness.abs() < cfg.skew_max && m.excess_kurtosis.abs() < cfg.kurtosis_max,
        })
        .collect();
    let moments_pass = !moments_apply || moments.iter().all(|m| m.pass);
    let mean_pass = mean_max_z <= cfg.z_max;
    let cov_pass = cov_max_abs_z <= cfg.z_max;
    Ok(CompareReport {
        n: summary.n,
        reps: summary.reps,
        mean_max_abs_dev,
        mean_se,
        mean_max_z,
        mean_pass,
        cov_z,
        cov_max_abs_z,
        cov_pass,
        limit,
        moments,
        moments_pass,
        passed: mean_pass && cov_pass && moments_pass,
    })
}
