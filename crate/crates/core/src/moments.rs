//! Exact first and second moments of the composition vector, and the
//! asymptotic matrices that govern the Gaussian limits.
//!
//! Conventions: composition vectors are row vectors, so one step of the mean
//! is `mu <- mu (I + A / tau)`.

use nalgebra::{DMatrix, RowDVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::linalg::{self, serde_rows};
use crate::spectral::{self, Regime, SpectralDecomposition};
use crate::urn_model::{CoreMatrix, SamplingMode, UrnSpec};

/// Exact mean and covariance for `n = 0..=n_max`.
#[derive(Debug, Clone)]
pub struct MomentTrajectory {
    pub n_max: u64,
    pub mu: Vec<RowDVector<f64>>,
    pub sigma: Vec<DMatrix<f64>>,
    pub mode: SamplingMode,
}

/// Coefficient of the `A^T (...) A` correction in the covariance recurrence.
pub fn covariance_factor(mode: SamplingMode, tau: f64, s: u32) -> f64 {
    let s = s as f64;
    match mode {
        SamplingMode::WithReplacement => 1.0 / (s * tau * tau),
        // at s = 1 the factor is 1/tau^2, including the tau = 1 limit
        SamplingMode::WithoutReplacement if s == 1.0 => 1.0 / (tau * tau),
        SamplingMode::WithoutReplacement => (tau - s) / (s * tau * tau * (tau - 1.0)),
    }
}

fn x0_row(spec: &UrnSpec) -> RowDVector<f64> {
    RowDVector::from_iterator(spec.k, spec.x0.iter().map(|&x| x as f64))
}

/// `mu_n = X_0 F_{0,n}`; the same for both sampling modes.
pub fn exact_mean(spec: &UrnSpec, n: u64) -> RowDVector<f64> {
    let a = spec.core.to_matrix();
    let mut mu = x0_row(spec);
    for step in 0..n {
        let tau = spec.tau(step) as f64;
        mu = &mu + &mu * &a / tau;
    }
    mu
}

/// Joint recurrence for `mu_n` and `Sigma_n`. The covariance is kept as an
/// unevaluated sum `hi + lo`: each increment is added with TwoSum and its
/// rounding error carried in `lo`, so entries of size 1e5 keep their row sums
/// near 1e-11 over long horizons instead of drifting by an ulp per step.
struct Recurrence {
    a: DMatrix<f64>,
    mu: RowDVector<f64>,
    hi: DMatrix<f64>,
    lo: DMatrix<f64>,
    s: u32,
    mode: SamplingMode,
}

impl Recurrence {
    fn new(spec: &UrnSpec) -> Self {
        Recurrence {
            a: spec.core.to_matrix(),
            mu: x0_row(spec),
            hi: DMatrix::zeros(spec.k, spec.k),
            lo: DMatrix::zeros(spec.k, spec.k),
            s: spec.s,
            mode: spec.mode,
        }
    }

    fn step(&mut self, tau: f64) {
        let (a, mu) = (&self.a, &self.mu);
        let sigma = &self.hi + &self.lo;
        let c = covariance_factor(self.mode, tau, self.s);
        // tau equals the sum of mu exactly; using the computed sum keeps the
        // row sums of this term at roundoff level
        let inner = &sigma + mu.transpose() * mu - DMatrix::from_diagonal(&mu.transpose()) * mu.sum();
        // F^T S F expanded around S, so only the O(S / tau) increment is rounded
        let sa = &sigma * a;
        let delta = (&sa + sa.transpose()) / tau + a.transpose() * (&sigma / (tau * tau) - inner * c) * a;
        let delta = (&delta + delta.transpose()) * 0.5;
        for (h, (l, d)) in self.hi.iter_mut().zip(self.lo.iter_mut().zip(delta.iter())) {
            let sum = *h + d;
            let back = sum - d;
            *l += (*h - back) + (d - (sum - back));
            *h = sum;
        }
        self.mu = mu + mu * a / tau;
    }

    fn sigma(&self) -> DMatrix<f64> {
        &self.hi + &self.lo
    }
}

/// Covariance `Sigma_n` from the two-term recurrence, carrying `mu` alongside.
pub fn exact_cov(spec: &UrnSpec, n: u64) -> DMatrix<f64> {
    let mut rec = Recurrence::new(spec);
    for step in 0..n {
        rec.step(spec.tau(step) as f64);
    }
    rec.sigma()
}

/// Calls `visit(n, mu_n, Sigma_n)` for `n = 0..=n_max` without storing the path.
pub fn walk<F>(spec: &UrnSpec, n_max: u64, mut visit: F)
where
    F: FnMut(u64, &RowDVector<f64>, &DMatrix<f64>),
{
    let mut rec = Recurrence::new(spec);
    visit(0, &rec.mu, &rec.sigma());
    for step in 0..n_max {
        rec.step(spec.tau(step) as f64);
        visit(step + 1, &rec.mu, &rec.sigma());
    }
}

/// Every `mu_n` and `Sigma_n` up to `n_max`.
pub fn trajectory(spec: &UrnSpec, n_max: u64) -> MomentTrajectory {
    let mut mu = Vec::with_capacity(n_max as usize + 1);
    let mut sigma = Vec::with_capacity(n_max as usize + 1);
    walk(spec, n_max, |_, m, sg| {
        mu.push(m.clone());
        sigma.push(sg.clone());
    });
    MomentTrajectory {
        n_max,
        mu,
        sigma,
        mode: spec.mode,
    }
}

/// Exact rational mean and covariance, for checking the floating recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalMoments {
    pub mu: Vec<BigRational>,
    pub sigma: Vec<Vec<BigRational>>,
}

pub const RATIONAL_MAX_STEPS: u64 = 64;

pub fn exact_moments_rational(spec: &UrnSpec, n: u64) -> Result<RationalMoments> {
    if n > RATIONAL_MAX_STEPS {
        return Err(UrnError::invalid(format!(
            "rational evaluation is limited to n <= {}",
            RATIONAL_MAX_STEPS
        )));
    }
    let k = spec.k;
    let int = |x: i64| BigRational::from_integer(BigInt::from(x));
    let a: Vec<Vec<BigRational>> = spec.core.rows().map(|r| r.iter().map(|&x| int(x)).collect()).collect();
    let s = int(spec.s as i64);
    let mut mu: Vec<BigRational> = spec.x0.iter().map(|&x| int(x)).collect();
    let mut sigma = vec![vec![BigRational::zero(); k]; k];

    let matmul = |x: &Vec<Vec<BigRational>>, y: &Vec<Vec<BigRational>>| -> Vec<Vec<BigRational>> {
        (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| (0..k).fold(BigRational::zero(), |acc, l| acc + &x[i][l] * &y[l][j]))
                    .collect()
            })
            .collect()
    };
    let transpose = |x: &Vec<Vec<BigRational>>| -> Vec<Vec<BigRational>> {
        (0..k).map(|i| (0..k).map(|j| x[j][i].clone()).collect()).collect()
    };
    let at = transpose(&a);

    for step in 0..n {
        let tau = int(spec.tau(step));
        let c = match spec.mode {
            SamplingMode::WithReplacement => BigRational::one() / (&s * &tau * &tau),
            SamplingMode::WithoutReplacement if spec.s == 1 => BigRational::one() / (&tau * &tau),
            SamplingMode::WithoutReplacement => (&tau - &s) / (&s * &tau * &tau * (&tau - BigRational::one())),
        };
        let f: Vec<Vec<BigRational>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        let id = if i == j {
                            BigRational::one()
                        } else {
                            BigRational::zero()
                        };
                        id + &a[i][j] / &tau
                    })
                    .collect()
            })
            .collect();
        let inner: Vec<Vec<BigRational>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        let mut v = &sigma[i][j] + &mu[i] * &mu[j];
                        if i == j {
                            v -= &tau * &mu[i];
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        let prop = matmul(&matmul(&transpose(&f), &sigma), &f);
        let corr = matmul(&matmul(&at, &inner), &a);
        sigma = (0..k)
            .map(|i| (0..k).map(|j| &prop[i][j] - &c * &corr[i][j]).collect())
            .collect();
        mu = (0..k)
            .map(|j| (0..k).fold(BigRational::zero(), |acc, i| acc + &mu[i] * &f[i][j]))
            .collect();
    }
    Ok(RationalMoments { mu, sigma })
}

/// Conditional second moments `E[Q^T Q | X]` of a multivariate
/// hypergeometric sample of size `s` from counts `state` with total `tau`.
pub fn qcal_conditional(state: &[f64], tau: f64, s: u32) -> Result<DMatrix<f64>> {
    let sf = s as f64;
    if s == 0 || tau < sf {
        return Err(UrnError::invalid(format!(
            "cannot draw {} balls from a total of {}",
            s, tau
        )));
    }
    let k = state.len();
    // tau = s = 1 leaves (tau - 1) = 0 in the denominators, but both numerators vanish
    let denom = if tau > 1.0 { tau * (tau - 1.0) } else { 1.0 };
    Ok(DMatrix::from_fn(k, k, |i, j| {
        let cross = sf * (sf - 1.0) * state[i] * state[j] / denom;
        if i == j {
            let diag = if tau > 1.0 {
                sf * (tau - sf) * state[i] / denom
            } else {
                state[i]
            };
            cross + diag
        } else {
            cross
        }
    }))
}

/// Limit of the normalized conditional second moments, `s(s-1) v^T v + s diag(v)`.
pub fn qcal_limit(v1: &RowDVector<f64>, s: u32) -> DMatrix<f64> {
    let sf = s as f64;
    linalg::outer(v1, v1) * (sf * (sf - 1.0)) + DMatrix::from_diagonal(&v1.transpose()) * sf
}

/// `B = A^T Q A / s^2`.
pub fn b_matrix(dec: &SpectralDecomposition, core: &CoreMatrix, s: u32) -> Result<DMatrix<f64>> {
    let v1 = dec.v1_row()?;
    let a = core.to_matrix();
    let q = qcal_limit(&v1, s);
    let b = a.transpose() * q * &a / (s as f64 * s as f64);
    Ok((&b + b.transpose()) * 0.5)
}

/// Both routes to the small-index limit and how far apart they landed.
#[derive(Debug, Clone)]
pub struct SigmaSmallDetail {
    pub sylvester: Option<DMatrix<f64>>,
    pub quadrature: DMatrix<f64>,
    pub rel_diff: Option<f64>,
}

impl SigmaSmallDetail {
    pub fn value(&self) -> &DMatrix<f64> {
        &self.quadrature
    }
}

const SIGMA_AGREE_TOL: f64 = 1e-6;

fn require_regime(dec: &SpectralDecomposition, want: Regime) -> Result<()> {
    if dec.regime != want {
        return Err(UrnError::model(format!(
            "{} limit requested for a {} index core",
            want, dec.regime
        )));
    }
    if dec.v1.is_none() {
        return Err(UrnError::model("asymptotic limits need an irreducible core"));
    }
    Ok(())
}

/// Small-index limit `Sigma(A) = b int_0^inf e^{sA^T} P^T B P e^{sA} e^{-bs} ds`
/// with `P = I - P_{lambda1}`, computed by a Lyapunov solve on the range of `P`
/// and by quadrature, which must agree.
pub fn sigma_small(dec: &SpectralDecomposition, b_mat: &DMatrix<f64>, b: i64) -> Result<DMatrix<f64>> {
    Ok(sigma_small_detail(dec, b_mat, b)?.value().clone())
}

pub fn sigma_small_detail(dec: &SpectralDecomposition, b_mat: &DMatrix<f64>, b: i64) -> Result<SigmaSmallDetail> {
    require_regime(dec, Regime::Small)?;
    let p_hat = dec.complement_projection()?;
    let a = &dec.matrix;
    let quadrature = sigma_small_quadrature(a, &p_hat, b_mat, b as f64)?;
    let sylvester = sigma_small_sylvester(a, &p_hat, b_mat, b as f64).ok();
    let rel_diff = sylvester
        .as_ref()
        .map(|s| linalg::max_abs(&(s - &quadrature)) / linalg::max_abs(s).max(f64::MIN_POSITIVE));
    if let Some(d) = rel_diff {
        if d > SIGMA_AGREE_TOL && linalg::max_abs(&quadrature) > 0.0 {
            return Err(UrnError::numeric(format!(
                "Lyapunov and quadrature routes disagree by {:.3e} relative",
                d
            )));
        }
    }
    Ok(SigmaSmallDetail {
        sylvester,
        quadrature,
        rel_diff,
    })
}

/// Lyapunov route: restrict to an orthonormal basis `U` of the range of `P`,
/// `P e^{sA} = U e^{s A_r} V` with `V = U^T P`, `A_r = V A U`.
pub fn sigma_small_sylvester(
    a: &DMatrix<f64>,
    p_hat: &DMatrix<f64>,
    b_mat: &DMatrix<f64>,
    b: f64,
) -> Result<DMatrix<f64>> {
    let k = a.nrows();
    let svd = p_hat.clone().svd(true, false);
    let u_full = svd.u.ok_or_else(|| UrnError::numeric("SVD failed"))?;
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-8 * smax.max(1.0))
        .collect();
    if keep.is_empty() {
        return Ok(DMatrix::zeros(k, k));
    }
    let u = DMatrix::from_columns(&keep.iter().map(|&i| u_full.column(i)).collect::<Vec<_>>());
    let v = u.transpose() * p_hat;
    let r = keep.len();
    let a_r = &v * a * &u;
    let m = a_r - DMatrix::identity(r, r) * (b / 2.0);
    let c = u.transpose() * b_mat * &u;
    let z = linalg::solve_lyapunov(&m, &c)?;
    let sigma = v.transpose() * z * v * b;
    Ok((&sigma + sigma.transpose()) * 0.5)
}

/// Quadrature route. With `u = e^{-bs}` the integral is `int_0^1 ... du`,
/// whose integrand blows up like `u^{-2 Re(lambda_2)/b}` at 0. Dyadic panels
/// `[2^-(m+1), 2^-m]` in `u` are panels of width `ln 2 / b` in `s`; each is
/// integrated by adaptive Gauss-Kronrod in `s`, where the integrand
/// `b H^T B H`, `H = e^{s(A P - b/2)} P`, stays bounded.
pub fn sigma_small_quadrature(
    a: &DMatrix<f64>,
    p_hat: &DMatrix<f64>,
    b_mat: &DMatrix<f64>,
    b: f64,
) -> Result<DMatrix<f64>> {
    let k = a.nrows();
    let drift = a * p_hat - DMatrix::identity(k, k) * (b / 2.0);
    let integrand = |s: f64| -> DMatrix<f64> {
        let h = linalg::expm(&(&drift * s)) * p_hat;
        h.transpose() * b_mat * &h * b
    };
    let width = std::f64::consts::LN_2 / b;
    let mut total = DMatrix::zeros(k, k);
    let mut quiet = 0;
    for m in 0..200_000u32 {
        let lo = m as f64 * width;
        let hi = lo + width;
        // far panels sit at roundoff level relative to the total
        let floor = 1e-16 * linalg::max_abs(&total);
        let piece = adaptive_gk(&integrand, lo, hi, 1e-13, floor, 0)?;
        total += &piece;
        let tail = linalg::max_abs(&integrand(hi));
        let scale = linalg::max_abs(&total);
        if tail <= 1e-14 * scale.max(f64::MIN_POSITIVE) || scale == 0.0 && tail == 0.0 {
            quiet += 1;
            if quiet >= 3 {
                return Ok((&total + total.transpose()) * 0.5);
            }
        } else {
            quiet = 0;
        }
    }
    Err(UrnError::numeric(
        "quadrature for the small-index limit did not converge",
    ))
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn adaptive_gk<F>(f: &F, lo: f64, hi: f64, rel_tol: f64, abs_tol: f64, depth: u32) -> Result<DMatrix<f64>>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let f0 = f(center);
    let mut kron = &f0 * GK_WEIGHTS_K[7];
    let mut gauss = &f0 * GK_WEIGHTS_G[3];
    for (i, &x) in GK_NODES[..7].iter().enumerate() {
        let pair = f(center - half * x) + f(center + half * x);
        kron += &pair * GK_WEIGHTS_K[i];
        if i % 2 == 1 {
            gauss += &pair * GK_WEIGHTS_G[i / 2];
        }
    }
    kron *= half;
    gauss *= half;
    let err = linalg::max_abs(&(&kron - &gauss));
    if err <= rel_tol * linalg::max_abs(&kron) || err <= abs_tol || err < 1e-300 {
        return Ok(kron);
    }
    if depth >= 30 {
        return Err(UrnError::numeric("adaptive quadrature exceeded its subdivision depth"));
    }
    let left = adaptive_gk(f, lo, center, rel_tol, abs_tol / 2.0, depth + 1)?;
    Ok(left + adaptive_gk(f, center, hi, rel_tol, abs_tol / 2.0, depth + 1)?)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

/// Critical-index limit of `Sigma_n / (n ln^{2 nu2 + 1} n)`:
/// `b^{-2nu} / ((2nu+1)(nu!)^2) * sum (N*)^nu P* B P N^nu` over `Re(lambda) = b/2`.
pub fn sigma_critical(dec: &SpectralDecomposition, b_mat: &DMatrix<f64>, b: i64) -> Result<DMatrix<f64>> {
    require_regime(dec, Regime::Critical)?;
    let k = dec.k();
    let nu = dec.nu2;
    let bc = linalg::to_complex(b_mat);
    let mut acc = linalg::CMatrix::zeros(k, k);
    for g in dec.critical_groups(spectral::DEFAULT_TOL_HALF) {
        let mut right = g.projection.clone();
        for _ in 0..nu {
            right = &right * &g.nilpotent;
        }
        acc += right.adjoint() * &bc * &right;
    }
    let coef = 1.0 / ((b as f64).powi(2 * nu as i32) * (2 * nu + 1) as f64 * factorial(nu).powi(2));
    let value = linalg::real_part(&(acc * num_complex::Complex64::new(coef, 0.0)), 1e-10)?;
    Ok((&value + value.transpose()) * 0.5)
}

/// Growth scale `xi_n` of the covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scaling {
    /// `xi_n = n`.
    Linear,
    /// `xi_n = n ln^{2 nu + 1} n`.
    LogCritical { nu: usize },
    /// `xi_n = n^{2 index} ln^{2 nu} n`, an order-of-growth bound only.
    Power { index: f64, nu: usize },
}

impl Scaling {
    pub fn for_regime(regime: Regime, index: Option<f64>, nu: usize) -> Self {
        match regime {
            Regime::Small => Scaling::Linear,
            Regime::Critical => Scaling::LogCritical { nu },
            Regime::Large => Scaling::Power {
                index: index.unwrap_or(1.0),
                nu,
            },
        }
    }

    pub fn eval(&self, n: f64) -> f64 {
        match *self {
            Scaling::Linear => n,
            Scaling::LogCritical { nu } => n * n.ln().powi(2 * nu as i32 + 1),
            Scaling::Power { index, nu } => n.powf(2.0 * index) * n.ln().powi(2 * nu as i32),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Scaling::Linear => "n".to_string(),
            Scaling::LogCritical { nu } => format!("n ln^{}(n)", 2 * nu + 1),
            Scaling::Power { index, nu } if nu == 0 => format!("n^{:.6}", 2.0 * index),
            Scaling::Power { index, nu } => format!("n^{:.6} ln^{}(n)", 2.0 * index, 2 * nu),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitStatus {
    #[serde(rename = "computed")]
    Computed,
    #[serde(rename = "not applicable")]
    NotApplicable,
}

/// Asymptotic data for an irreducible urn.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticSummary {
    pub regime: Regime,
    pub index: Option<f64>,
    pub nu2: usize,
    pub v1: Vec<f64>,
    #[serde(rename = "Qcal", with = "serde_rows")]
    pub qcal: DMatrix<f64>,
    #[serde(rename = "B", with = "serde_rows")]
    pub b_matrix: DMatrix<f64>,
    #[serde(with = "serde_rows::option")]
    pub sigma_inf: Option<DMatrix<f64>>,
    pub limit_status: LimitStatus,
    pub xi: String,
    pub scaling: Scaling,
    pub mu_slope: Vec<f64>,
    pub notes: Vec<String>,
}

impl AsymptoticSummary {
    /// Centering `b v1 n` used by the central limit theorem.
    pub fn centering(&self, n: u64) -> RowDVector<f64> {
        RowDVector::from_iterator(self.mu_slope.len(), self.mu_slope.iter().map(|m| m * n as f64))
    }
}

pub fn clt_params(spec: &UrnSpec) -> Result<AsymptoticSummary> {
    let dec = spectral::decompose(&spec.core, spectral::DEFAULT_CLUSTER_TOL)?;
    clt_params_with(spec, &dec)
}

pub fn clt_params_with(spec: &UrnSpec, dec: &SpectralDecomposition) -> Result<AsymptoticSummary> {
    let v1 = dec.v1_row()?;
    let b_mat = b_matrix(dec, &spec.core, spec.s)?;
    let mut notes = dec.warnings.clone();
    let sigma_inf = match dec.regime {
        Regime::Small => Some(sigma_small(dec, &b_mat, spec.b)?),
        Regime::Critical => Some(sigma_critical(dec, &b_mat, spec.b)?),
        Regime::Large => {
            notes.push(
                "covariance limit not applicable: for a large index the limit may depend on the initial composition; use the exact recurrence"
                    .to_string(),
            );
            None
        }
    };
    let scaling = Scaling::for_regime(dec.regime, dec.index, dec.nu2);
    Ok(AsymptoticSummary {
        regime: dec.regime,
        index: dec.index,
        nu2: dec.nu2,
        v1: v1.iter().copied().collect(),
        qcal: qcal_limit(&v1, spec.s),
        b_matrix: b_mat,
        limit_status: if sigma_inf.is_some() {
            LimitStatus::Computed
        } else {
            LimitStatus::NotApplicable
        },
        sigma_inf,
        xi: scaling.describe(),
        scaling,
        mu_slope: v1.iter().map(|x| x * spec.b as f64).collect(),
        notes,
    })
}
