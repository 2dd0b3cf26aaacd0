//! Dense complex matrix kernels shared by every estimator.
//!
//! All routines are pure functions of their inputs. Eigenvalues are reported
//! in descending order unless a caller re-sorts them.

mod eigen;
mod roots;

pub use eigen::{hermitian_eig, hermitian_inverse, hermitian_sqrt, solve_hermitian};
pub(crate) use eigen::cholesky;
pub use roots::{eval_poly, poly_roots};

use nalgebra::{DMatrix, DVector};
pub use nalgebra::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// General dense complex matrix, row/column indexed from zero.
pub type ComplexMatrix = DMatrix<C64>;

/// Dense complex vector.
pub type ComplexVector = DVector<C64>;

/// Dense Hermitian matrix.
///
/// Construction always symmetrizes `(m + m^H) / 2`, so the stored entries are
/// exactly Hermitian and the diagonal is exactly real.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    inner: ComplexMatrix,
}

impl HermitianMatrix {
    pub fn from_matrix(m: ComplexMatrix) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::InvalidInput(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(Self::symmetrized(m))
    }

    /// Builds the matrix from an entry function evaluated on the upper
    /// triangle; the lower triangle is filled with conjugates.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        let mut m = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let z = f(i, j);
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        Self::from_matrix(m)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: ComplexMatrix::identity(n, n),
        }
    }

    pub fn from_real_diagonal(values: &[f64]) -> Result<Self> {
        let d = DVector::from_iterator(values.len(), values.iter().map(|&v| C64::new(v, 0.0)));
        Self::from_matrix(ComplexMatrix::from_diagonal(&d))
    }

    fn symmetrized(m: ComplexMatrix) -> Self {
        let n = m.nrows();
        let mut out = m;
        for i in 0..n {
            out[(i, i)] = C64::new(out[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let avg = (out[(i, j)] + out[(j, i)].conj()) * 0.5;
                out[(i, j)] = avg;
                out[(j, i)] = avg.conj();
            }
        }
        Self { inner: out }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.inner
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.inner
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.inner[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.inner[(i, i)].re).sum()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.inner)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            inner: self.inner.map(|z| z * c),
        }
    }

    pub fn add_diagonal(&self, shift: f64) -> Self {
        let mut inner = self.inner.clone();
        for i in 0..self.dim() {
            inner[(i, i)].re += shift;
        }
        Self { inner }
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        check_same_dim(self.dim(), other.dim())?;
        Ok(Self::symmetrized(&self.inner - &other.inner))
    }

    /// Largest absolute eigenvalue, i.e. the spectral norm.
    pub fn spectral_norm(&self) -> Result<f64> {
        let eig = hermitian_eig(self)?;
        Ok(eig.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
    }

    /// Quadratic form `v^H M v`, real for Hermitian `M`.
    pub fn quadratic_form(&self, v: &[C64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = C64::new(0.0, 0.0);
            for j in 0..n {
                row += self.inner[(i, j)] * v[j];
            }
            acc += (v[i].conj() * row).re;
        }
        acc
    }
}

/// Real eigenvalues in descending order with the matching unitary
/// eigenvector matrix (eigenvectors are columns).
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.column(k).iter().copied().collect()
    }

    /// `U diag(values) U^H`.
    pub fn reconstruct(&self) -> Result<HermitianMatrix> {
        reconstruct_with(&self.vectors, &self.values)
    }

    pub fn min_value(&self) -> f64 {
        *self.values.last().expect("non-empty decomposition")
    }

    pub fn max_value(&self) -> f64 {
        self.values[0]
    }
}

/// `U diag(values) U^H` for an arbitrary set of real values.
pub fn reconstruct_with(vectors: &ComplexMatrix, values: &[f64]) -> Result<HermitianMatrix> {
    if vectors.ncols() != values.len() {
        return Err(Error::InvalidInput(format!(
            "{} eigenvalues for {} eigenvectors",
            values.len(),
            vectors.ncols()
        )));
    }
    let mut scaled = vectors.clone();
    for (k, &v) in values.iter().enumerate() {
        scaled.column_mut(k).scale_mut(v);
    }
    HermitianMatrix::from_matrix(&scaled * vectors.adjoint())
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub(crate) fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidInput(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}
