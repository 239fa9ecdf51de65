//! Spectral structure of a core: grouped eigenvalues with their projections
//! `P` and nilpotent parts `N` (so that `A P = P A = lambda P + N`), the
//! principal left eigenvector, the core index and the regime it implies.
//!
//! Projections come from a complex Schur form `A = Q T Q^H`. The diagonal of
//! `T` is reordered so that each eigenvalue cluster is contiguous, then the
//! off-diagonal coupling between clusters is removed by solving triangular
//! Sylvester equations. This avoids eigenvector matrices, which are singular
//! for defective cores.

use nalgebra::{DMatrix, DVector, RowDVector, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::linalg::{self, CMatrix};
use crate::special::ln_gamma;
use crate::urn_model::CoreMatrix;

/// Default relative clustering tolerance.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-7;
/// Default tolerance around an index of one half.
pub const DEFAULT_TOL_HALF: f64 = 1e-9;

const NILPOTENT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Small,
    Critical,
    Large,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Small => "small",
            Regime::Critical => "critical",
            Regime::Large => "large",
        })
    }
}

#[derive(Debug, Clone)]
pub struct EigenGroup {
    pub lambda: Complex64,
    pub multiplicity: usize,
    pub projection: CMatrix,
    pub nilpotent: CMatrix,
    /// Largest power with a nonzero nilpotent part; the largest Jordan block has size `nu + 1`.
    pub nu: usize,
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// The core as a real matrix.
    pub matrix: DMatrix<f64>,
    /// Sorted by decreasing real part, ties by decreasing imaginary part.
    pub groups: Vec<EigenGroup>,
    /// Principal eigenvalue, the balance factor.
    pub lambda1: f64,
    /// Principal left eigenvector summing to one; `None` for reducible cores.
    pub v1: Option<Vec<f64>>,
    /// Position of the group holding `lambda1`.
    pub principal: usize,
    pub nu2: usize,
    /// `Re(lambda_2) / lambda_1`; `None` when the spectrum is a single group.
    pub index: Option<f64>,
    pub regime: Regime,
    pub warnings: Vec<String>,
    /// `1 + ||A||_inf`, the scale all tolerances are relative to.
    pub scale: f64,
    pub cluster_tol: f64,
}

impl SpectralDecomposition {
    pub fn k(&self) -> usize {
        self.groups[0].projection.nrows()
    }

    pub fn principal_group(&self) -> &EigenGroup {
        &self.groups[self.principal]
    }

    /// Groups other than the principal one.
    pub fn non_principal(&self) -> impl Iterator<Item = &EigenGroup> {
        let p = self.principal;
        self.groups
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != p)
            .map(|(_, g)| g)
    }

    /// Groups sitting on the line `Re(lambda) = lambda1 / 2`.
    pub fn critical_groups(&self, tol_half: f64) -> Vec<&EigenGroup> {
        let tol = (tol_half * 2.0 * self.lambda1).max(1e-9 * self.lambda1);
        self.non_principal()
            .filter(|g| (2.0 * g.lambda.re - self.lambda1).abs() <= tol)
            .collect()
    }

    /// `I - P_{lambda1}`, real. For irreducible cores `P_{lambda1} = 1^T v1`
    /// exactly, which is more accurate than the Schur-based projection.
    pub fn complement_projection(&self) -> Result<DMatrix<f64>> {
        let k = self.k();
        let p1 = match &self.v1 {
            Some(v) => DMatrix::from_fn(k, k, |_, j| v[j]),
            None => linalg::real_part(&self.principal_group().projection, 1e-8)?,
        };
        Ok(DMatrix::identity(k, k) - p1)
    }

    pub fn v1_row(&self) -> Result<RowDVector<f64>> {
        self.v1
            .as_ref()
            .map(|v| RowDVector::from_row_slice(v))
            .ok_or_else(|| UrnError::model("core is reducible: no principal eigenvector"))
    }

    pub fn report(&self) -> SpectrumReport {
        SpectrumReport {
            lambda: self
                .groups
                .iter()
                .map(|g| ComplexValue {
                    re: g.lambda.re,
                    im: g.lambda.im,
                })
                .collect(),
            multiplicity: self.groups.iter().map(|g| g.multiplicity).collect(),
            nu: self.groups.iter().map(|g| g.nu).collect(),
            projections: self.groups.iter().map(|g| ComplexRows::from(&g.projection)).collect(),
            nilpotents: self.groups.iter().map(|g| ComplexRows::from(&g.nilpotent)).collect(),
            index: self.index,
            nu2: self.nu2,
            regime: self.regime,
            v1: self.v1.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

/// A complex matrix as separate real and imaginary row lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexRows {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&CMatrix> for ComplexRows {
    fn from(m: &CMatrix) -> Self {
        let part = |f: fn(&Complex64) -> f64| m.row_iter().map(|r| r.iter().map(f).collect()).collect();
        ComplexRows {
            re: part(|z| z.re),
            im: part(|z| z.im),
        }
    }
}

/// Machine-readable summary of a decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub lambda: Vec<ComplexValue>,
    pub multiplicity: Vec<usize>,
    pub nu: Vec<usize>,
    pub projections: Vec<ComplexRows>,
    pub nilpotents: Vec<ComplexRows>,
    pub index: Option<f64>,
    pub nu2: usize,
    pub regime: Regime,
    pub v1: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

fn balance_of(core: &CoreMatrix) -> Result<f64> {
    core.balance()
        .map(|b| b as f64)
        .ok_or_else(|| UrnError::model("core rows do not share a common sum"))
}

/// Spectral decomposition with relative clustering tolerance `tol`.
///
/// A set of `m` eigenvalues is merged into one group when its diameter `d`
/// satisfies `(d / scale)^m <= tol`. For `m = 1` this is the plain distance
/// rule; for larger `m` it admits the `tol^(1/m)` spread that rounding
/// produces around a defective eigenvalue.
pub fn decompose(core: &CoreMatrix, tol: f64) -> Result<SpectralDecomposition> {
    decompose_with(core, tol, DEFAULT_TOL_HALF)
}

pub fn decompose_with(core: &CoreMatrix, tol: f64, tol_half: f64) -> Result<SpectralDecomposition> {
    if !(tol > 0.0) {
        return Err(UrnError::invalid("clustering tolerance must be positive"));
    }
    let b = balance_of(core)?;
    let a = core.to_matrix();
    let k = a.nrows();
    let scale = 1.0 + linalg::norm_inf(&a);

    let schur = Schur::try_new(linalg::to_complex(&a), f64::EPSILON, 10_000)
        .ok_or_else(|| UrnError::numeric("Schur iteration did not converge"))?;
    let (mut q, mut t) = schur.unpack();
    for i in 0..k {
        for j in 0..i {
            t[(i, j)] = Complex64::new(0.0, 0.0);
        }
    }

    let eig: Vec<Complex64> = (0..k).map(|i| t[(i, i)]).collect();
    let clusters = cluster(&eig, scale, tol)?;

    // order clusters by centroid
    let centroid = |c: &Vec<usize>| c.iter().map(|&i| eig[i]).sum::<Complex64>() / c.len() as f64;
    let tie = tol * scale;
    let mut order: Vec<usize> = (0..clusters.len()).collect();
    order.sort_by(|&x, &y| {
        let (cx, cy) = (centroid(&clusters[x]), centroid(&clusters[y]));
        if (cx.re - cy.re).abs() > tie {
            cy.re.total_cmp(&cx.re)
        } else {
            cy.im.total_cmp(&cx.im)
        }
    });
    let mut rank_of_cluster = vec![0; clusters.len()];
    for (r, &c) in order.iter().enumerate() {
        rank_of_cluster[c] = r;
    }
    let mut pos_group = vec![0usize; k];
    for (c, members) in clusters.iter().enumerate() {
        for &i in members {
            pos_group[i] = rank_of_cluster[c];
        }
    }

    // bubble the Schur diagonal into cluster order
    let mut swapped = true;
    while swapped {
        swapped = false;
        for p in 0..k.saturating_sub(1) {
            if pos_group[p] > pos_group[p + 1] {
                swap_schur(&mut t, &mut q, p);
                pos_group.swap(p, p + 1);
                swapped = true;
            }
        }
    }

    let n_groups = clusters.len();
    let mut bounds = Vec::with_capacity(n_groups + 1);
    bounds.push(0);
    for p in 1..k {
        if pos_group[p] != pos_group[p - 1] {
            bounds.push(p);
        }
    }
    bounds.push(k);

    let (y, y_inv) = block_diagonalize(&mut t, &bounds)?;
    let v = &q * y;
    let w = y_inv * q.adjoint();

    let mut groups = Vec::with_capacity(n_groups);
    for g in 0..n_groups {
        let (r0, r1) = (bounds[g], bounds[g + 1]);
        let m = r1 - r0;
        let block = t.view((r0, r0), (m, m)).into_owned();
        let mut lambda = block.trace() / m as f64;
        if lambda.im.abs() <= tie {
            lambda.im = 0.0;
        }
        if (lambda.re - b).abs() <= tie && lambda.im == 0.0 {
            lambda.re = b;
        }
        let vb = v.columns(r0, m);
        let wb = w.rows(r0, m);
        let projection = &vb * &wb;
        let shifted = &block - CMatrix::identity(m, m) * lambda;
        let nilpotent = &vb * shifted * &wb;
        let nu = nilpotent_index(&nilpotent, m, scale);
        groups.push(EigenGroup {
            lambda,
            multiplicity: m,
            projection,
            nilpotent,
            nu,
        });
    }

    let principal = groups
        .iter()
        .position(|g| (g.lambda.re - b).abs() <= tie && g.lambda.im == 0.0)
        .ok_or_else(|| UrnError::numeric("balance factor not found among the eigenvalues"))?;

    let v1 = principal_pair(core).ok().map(|(_, v)| v);

    let mut dec = SpectralDecomposition {
        matrix: core.to_matrix(),
        groups,
        lambda1: b,
        v1,
        principal,
        nu2: 0,
        index: None,
        regime: Regime::Small,
        warnings: Vec::new(),
        scale,
        cluster_tol: tol,
    };
    let second = dec.non_principal().next().map(|g| g.lambda.re);
    if let Some(re2) = second {
        dec.index = Some(re2 / b);
        dec.nu2 = dec
            .non_principal()
            .filter(|g| (g.lambda.re - re2).abs() <= tie)
            .map(|g| g.nu)
            .max()
            .unwrap_or(0);
    }
    dec.regime = classify(&dec, tol_half);
    if let Some(idx) = dec.index {
        if (idx - 0.5).abs() < 1e-6 && dec.regime != Regime::Critical {
            dec.warnings.push(format!(
                "core index {:.12} is within 1e-6 of 1/2; regime call is tolerance sensitive",
                idx
            ));
        }
    }
    if dec.principal_group().multiplicity > 1 {
        dec.warnings
            .push("principal eigenvalue is not simple; asymptotic results do not apply".into());
    }
    Ok(dec)
}

fn cluster(eig: &[Complex64], scale: f64, tol: f64) -> Result<Vec<Vec<usize>>> {
    let diameter = |members: &[usize]| {
        let mut d = 0.0f64;
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                d = d.max((eig[i] - eig[j]).norm());
            }
        }
        d
    };
    let admissible = |d: f64, m: usize| (d / scale).powi(m as i32) <= tol;

    let mut clusters: Vec<Vec<usize>> = (0..eig.len()).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for x in 0..clusters.len() {
            for y in x + 1..clusters.len() {
                let union: Vec<usize> = clusters[x].iter().chain(&clusters[y]).copied().collect();
                let d = diameter(&union);
                if admissible(d, union.len()) && best.map_or(true, |(_, _, bd)| d < bd) {
                    best = Some((x, y, d));
                }
            }
        }
        match best {
            Some((x, y, _)) => {
                let moved = clusters.remove(y);
                clusters[x].extend(moved);
            }
            None => break,
        }
    }

    // a close pair split across two clusters means the grouping is ambiguous
    for x in 0..clusters.len() {
        for y in x + 1..clusters.len() {
            for &i in &clusters[x] {
                for &j in &clusters[y] {
                    if admissible((eig[i] - eig[j]).norm(), 2) {
                        return Err(UrnError::numeric(format!(
                            "eigenvalues {} and {} overlap two clusters at tolerance {:e}; try a different tolerance",
                            eig[i], eig[j], tol
                        )));
                    }
                }
            }
        }
    }
    Ok(clusters)
}

/// Swaps the adjacent diagonal entries `p`, `p+1` of the triangular `t` by a
/// unitary rotation, updating `q` so that `q t q^H` is unchanged.
fn swap_schur(t: &mut CMatrix, q: &mut CMatrix, p: usize) {
    let n = t.nrows();
    let a = t[(p, p)];
    let c = t[(p + 1, p + 1)];
    let x = [t[(p, p + 1)], c - a];
    let norm = (x[0].norm_sqr() + x[1].norm_sqr()).sqrt();
    let (g1, g2) = if norm == 0.0 {
        (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
    } else {
        (x[0] / norm, x[1] / norm)
    };
    // G = [[g1, -conj(g2)], [g2, conj(g1)]]; first column is the eigenvector for c.
    let g = [[g1, -g2.conj()], [g2, g1.conj()]];
    for j in 0..n {
        let (u, v) = (t[(p, j)], t[(p + 1, j)]);
        t[(p, j)] = g[0][0].conj() * u + g[1][0].conj() * v;
        t[(p + 1, j)] = g[0][1].conj() * u + g[1][1].conj() * v;
    }
    for i in 0..n {
        let (u, v) = (t[(i, p)], t[(i, p + 1)]);
        t[(i, p)] = u * g[0][0] + v * g[1][0];
        t[(i, p + 1)] = u * g[0][1] + v * g[1][1];
        let (u, v) = (q[(i, p)], q[(i, p + 1)]);
        q[(i, p)] = u * g[0][0] + v * g[1][0];
        q[(i, p + 1)] = u * g[0][1] + v * g[1][1];
    }
    t[(p + 1, p)] = Complex64::new(0.0, 0.0);
}

/// Solves `t11 x - x t22 = c` for upper-triangular `t11`, `t22` with disjoint spectra.
fn triangular_sylvester(t11: &CMatrix, t22: &CMatrix, c: &CMatrix) -> Result<CMatrix> {
    let (p, q) = (t11.nrows(), t22.nrows());
    let mut x = CMatrix::zeros(p, q);
    for j in 0..q {
        let mut rhs: Vec<Complex64> = (0..p).map(|i| c[(i, j)]).collect();
        for l in 0..j {
            let coupling = t22[(l, j)];
            for (i, r) in rhs.iter_mut().enumerate() {
                *r += x[(i, l)] * coupling;
            }
        }
        let shift = t22[(j, j)];
        for i in (0..p).rev() {
            let mut acc = rhs[i];
            for l in i + 1..p {
                acc -= t11[(i, l)] * x[(l, j)];
            }
            let d = t11[(i, i)] - shift;
            if d.norm() == 0.0 {
                return Err(UrnError::numeric("Sylvester decoupling hit a shared eigenvalue"));
            }
            x[(i, j)] = acc / d;
        }
    }
    Ok(x)
}

/// Removes the coupling between consecutive diagonal blocks of `t`, returning
/// the similarity `Y` and its inverse with `Y^-1 T Y` block diagonal.
fn block_diagonalize(t: &mut CMatrix, bounds: &[usize]) -> Result<(CMatrix, CMatrix)> {
    let n = t.nrows();
    let mut y = CMatrix::identity(n, n);
    let mut y_inv = CMatrix::identity(n, n);
    for g in 0..bounds.len().saturating_sub(2) {
        let (r0, r1) = (bounds[g], bounds[g + 1]);
        let (m, rest) = (r1 - r0, n - r1);
        let t11 = t.view((r0, r0), (m, m)).into_owned();
        let t22 = t.view((r1, r1), (rest, rest)).into_owned();
        let t12 = t.view((r0, r1), (m, rest)).into_owned();
        let x = triangular_sylvester(&t11, &t22, &(-t12))?;
        t.view_mut((r0, r1), (m, rest)).fill(Complex64::new(0.0, 0.0));
        let y_block = y.columns(r0, m) * &x;
        let mut cols = y.columns_mut(r1, rest);
        cols += y_block;
        let inv_block = &x * y_inv.rows(r1, rest);
        let mut rows = y_inv.rows_mut(r0, m);
        rows -= inv_block;
    }
    Ok((y, y_inv))
}

fn nilpotent_index(n: &CMatrix, multiplicity: usize, scale: f64) -> usize {
    let mut power = n.clone();
    let mut nu = 0;
    for j in 1..multiplicity {
        if linalg::max_abs_c(&power) > NILPOTENT_RANK_TOL * scale.powi(j as i32) {
            nu = j;
        } else {
            break;
        }
        power = &power * n;
    }
    nu
}

/// Perron eigenvalue (the balance factor) and left eigenvector summing to one.
pub fn principal_pair(core: &CoreMatrix) -> Result<(f64, Vec<f64>)> {
    let b = balance_of(core)?;
    let k = core.k();
    // self-loops do not affect strong connectivity, so the shift is irrelevant
    if !crate::urn_model::check_irreducible(core, 1) {
        return Err(UrnError::model("principal pair needs an irreducible core"));
    }
    let a = core.to_matrix();
    // v (A - bI) = 0 and v 1 = 1, as a column system
    let mut m = a.transpose() - DMatrix::identity(k, k) * b;
    for j in 0..k {
        m[(k - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(k);
    rhs[k - 1] = 1.0;
    let v = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| UrnError::numeric("principal eigenvector system is singular"))?;
    if v.iter().any(|&x| !(x > 0.0)) {
        return Err(UrnError::numeric(format!(
            "principal eigenvector is not positive: {:?}",
            v.as_slice()
        )));
    }
    Ok((b, v.iter().copied().collect()))
}

/// Regime from the core index: the exact test `2 Re(lambda_2) == b` (to
/// 1e-9 relative) is tried first, then the `tol_half` band.
pub fn classify(dec: &SpectralDecomposition, tol_half: f64) -> Regime {
    let Some(idx) = dec.index else {
        return Regime::Small;
    };
    let re2 = idx * dec.lambda1;
    if (2.0 * re2 - dec.lambda1).abs() <= 1e-9 * dec.lambda1 {
        return Regime::Critical;
    }
    if idx < 0.5 - tol_half {
        Regime::Small
    } else if idx > 0.5 + tol_half {
        Regime::Large
    } else {
        Regime::Critical
    }
}

/// `F_{i,j} = prod_{i <= l < j} (I + A / (b l + tau0))`.
pub fn f_product(i: u64, j: u64, core: &CoreMatrix, tau0: i64, b: i64) -> Result<DMatrix<f64>> {
    if j < i {
        return Err(UrnError::invalid(format!("f_product needs i <= j (got {i}, {j})")));
    }
    let a = core.to_matrix();
    let k = a.nrows();
    let mut f = DMatrix::identity(k, k);
    for l in i..j {
        let tau = (b * l as i64 + tau0) as f64;
        f = &f + &f * &a / tau;
    }
    Ok(f)
}

/// Scalar propagator `prod_{i <= l < j} (1 + z / (b l + tau0))` by direct product.
pub fn f_scalar(i: u64, j: u64, z: Complex64, tau0: i64, b: i64) -> Complex64 {
    (i..j).fold(Complex64::new(1.0, 0.0), |acc, l| {
        acc * (1.0 + z / (b * l as i64 + tau0) as f64)
    })
}

/// The same scalar propagator through its Gamma-function ratio.
pub fn f_scalar_gamma(i: u64, j: u64, z: Complex64, tau0: i64, b: i64) -> Complex64 {
    let (b, t0) = (b as f64, tau0 as f64);
    let shifted = |n: u64| Complex64::new(n as f64, 0.0) + (z + t0) / b;
    let plain = |n: u64| Complex64::new(n as f64 + t0 / b, 0.0);
    (ln_gamma(shifted(j)) - ln_gamma(plain(j)) + ln_gamma(plain(i)) - ln_gamma(shifted(i))).exp()
}

/// `x^{-A/b} = exp(-ln(x) A / b)`, the limit of `F_{ceil(xn), n}`.
pub fn matrix_power_x(core: &CoreMatrix, b: i64, x: f64) -> Result<DMatrix<f64>> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(UrnError::invalid(format!("x must lie in (0, 1], got {x}")));
    }
    let a = core.to_matrix();
    Ok(linalg::expm(&(a * (-x.ln() / b as f64))))
}
