//! Small dense helpers shared by the spectral and moment code.

use nalgebra::{DMatrix, RowDVector};
use num_complex::Complex64;

use crate::error::{Result, UrnError};

pub type CMatrix = DMatrix<Complex64>;

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_c(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.norm()))
}

/// Induced infinity norm (max absolute row sum).
pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Real part of a complex matrix, failing if the imaginary residue exceeds `tol`.
pub fn real_part(m: &CMatrix, tol: f64) -> Result<DMatrix<f64>> {
    let residue = m.iter().fold(0.0f64, |acc, z| acc.max(z.im.abs()));
    let scale = 1.0 + max_abs_c(m);
    if residue > tol * scale {
        return Err(UrnError::numeric(format!(
            "expected a real matrix, imaginary residue {:.3e}",
            residue
        )));
    }
    Ok(m.map(|z| z.re))
}

pub fn outer(u: &RowDVector<f64>, v: &RowDVector<f64>) -> DMatrix<f64> {
    u.transpose() * v
}

/// Matrix exponential by scaling and squaring a truncated Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = norm_inf(m);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for i in 1..40 {
        term = &term * &scaled / i as f64;
        sum += &term;
        if norm_inf(&term) <= f64::EPSILON * 1e-2 * norm_inf(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Solves `M^T Z + Z M = -C` through the Kronecker form; `M` must have no pair
/// of eigenvalues summing to zero.
pub fn solve_lyapunov(m: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mt = m.transpose();
    // column-major vec: vec(M^T Z) = (I kron M^T) vec Z, vec(Z M) = (M^T kron I) vec Z
    let op = id.kronecker(&mt) + mt.kronecker(&id);
    let rhs = nalgebra::DVector::from_iterator(n * n, c.iter().map(|x| -x));
    let lu = op.lu();
    let z = lu
        .solve(&rhs)
        .ok_or_else(|| UrnError::numeric("Lyapunov operator is singular"))?;
    Ok(DMatrix::from_column_slice(n, n, z.as_slice()))
}

/// Serializes a real matrix as a list of rows.
pub mod serde_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
        let n = rows.len();
        let c = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != c) {
            return None;
        }
        Some(DMatrix::from_fn(n, c, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, ser: S) -> Result<S::Ok, S::Error> {
        rows(m).serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<DMatrix<f64>, D::Error> {
        let r = Vec::<Vec<f64>>::deserialize(de)?;
        from_rows(&r).ok_or_else(|| D::Error::custom("ragged matrix rows"))
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, ser: S) -> Result<S::Ok, S::Error> {
            m.as_ref().map(rows).serialize(ser)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<DMatrix<f64>>, D::Error> {
            match Option::<Vec<Vec<f64>>>::deserialize(de)? {
                None => Ok(None),
                Some(r) => from_rows(&r)
                    .map(Some)
                    .ok_or_else(|| D::Error::custom("ragged matrix rows")),
            }
        }
    }
}
