//! Dense small-matrix primitives.
//!
//! Everything here works on `nalgebra` dynamic matrices. Norms are Frobenius
//! unless stated otherwise, and every tolerance is relative to `1 + ‖·‖` so
//! that zero matrices are handled without special cases.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Singular values below this fraction of the largest one are treated as zero.
pub const PINV_REL_TOL: f64 = 1e-10;

/// Default relative tolerance for (semi)definiteness tests.
pub const PSD_TOL: f64 = 1e-9;

/// Frobenius norm.
pub fn norm(m: &Matrix) -> f64 {
    m.norm()
}

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

fn ensure_square(m: &Matrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// A real symmetric matrix. Symmetry is enforced at construction by
/// replacing the input with `(M + Mᵀ)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        ensure_square(&m, "symmetric matrix")?;
        ensure_finite(&m, "symmetric matrix")?;
        Ok(Self::symmetrize(m))
    }

    /// Symmetrizes without validating finiteness. Used on values produced
    /// internally (flow states, products of validated matrices).
    pub(crate) fn symmetrize(m: Matrix) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Matrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diagonal(&Vector::from_column_slice(d)))
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Self::new(Matrix::from_element(1, 1, v))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.dim() == 0 {
            return Vec::new();
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }

    /// Pseudoinverse through the symmetric eigendecomposition; eigenvalues
    /// with `|λ| <= cutoff` are dropped. The result is exactly symmetric.
    pub fn pinv_with_cutoff(&self, cutoff: f64) -> SymMatrix {
        let n = self.dim();
        if n == 0 {
            return SymMatrix::zeros(0);
        }
        let eig = SymmetricEigen::new(self.0.clone());
        let mut out = Matrix::zeros(n, n);
        for (k, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam.abs() > cutoff {
                let v = eig.eigenvectors.column(k);
                out += (v * v.transpose()) / lam;
            }
        }
        SymMatrix::symmetrize(out)
    }

    /// Pseudoinverse with the relative rank cutoff `rel_tol·|λ|_max`.
    pub fn pinv(&self, rel_tol: f64) -> SymMatrix {
        let scale = self.eigenvalues().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        self.pinv_with_cutoff(rel_tol * scale)
    }

    /// Orthonormal basis (as columns) of the eigenspace with `|λ| <= cutoff`.
    pub fn null_space_basis(&self, cutoff: f64) -> Matrix {
        let n = self.dim();
        let eig = SymmetricEigen::new(self.0.clone());
        let cols: Vec<Vector> = (0..n)
            .filter(|&k| eig.eigenvalues[k].abs() <= cutoff)
            .map(|k| eig.eigenvectors.column(k).into_owned())
            .collect();
        if cols.is_empty() {
            Matrix::zeros(n, 0)
        } else {
            Matrix::from_columns(&cols)
        }
    }
}

impl std::ops::Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl std::ops::Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl std::ops::Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        SymMatrix(&self.0 * rhs)
    }
}

/// Eigendecomposition of the symmetric embedding `[[0, M], [Mᵀ, 0]]`, whose
/// eigenvalues are `±σᵢ(M)` (plus zeros) with eigenvectors `(uᵢ, ±vᵢ)/√2`.
///
/// nalgebra's `SVD` can return inaccurate singular vectors for exactly
/// rank-deficient inputs, which the symmetric eigensolver handles reliably.
fn symmetric_embedding(m: &Matrix) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let (r, c) = m.shape();
    let mut big = Matrix::zeros(r + c, r + c);
    big.view_mut((0, r), (r, c)).copy_from(m);
    big.view_mut((r, 0), (c, r)).copy_from(&m.transpose());
    SymmetricEigen::new(big)
}

/// Moore–Penrose pseudoinverse with an absolute cutoff on the singular values.
pub fn pinv_with_cutoff(m: &Matrix, cutoff: f64) -> Matrix {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Matrix::zeros(c, r);
    }
    let eig = symmetric_embedding(m);
    let mut out = Matrix::zeros(c, r);
    for (k, &s) in eig.eigenvalues.iter().enumerate() {
        if s > cutoff {
            let col = eig.eigenvectors.column(k);
            out += (col.rows(r, c) * col.rows(0, r).transpose()) * (2.0 / s);
        }
    }
    out
}

fn largest_singular_value(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetric_embedding(m).eigenvalues.iter().fold(0.0_f64, |a, &s| a.max(s))
}

/// Moore–Penrose pseudoinverse. Singular values below `rel_tol·σ_max` are
/// zeroed. Square symmetric inputs yield an exactly symmetric result.
pub fn pinv(m: &Matrix, rel_tol: f64) -> Result<Matrix> {
    ensure_finite(m, "pinv input")?;
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidInput(format!("rel_tol must lie in (0, 1), got {rel_tol}")));
    }
    let cutoff = rel_tol * largest_singular_value(m);
    let mut out = pinv_with_cutoff(m, cutoff);
    if m.is_square() && m == &m.transpose() {
        out = SymMatrix::symmetrize(out).into_matrix();
    }
    Ok(out)
}

/// `‖N N† L − L‖`, the defect of the range inclusion `ℛ(L) ⊆ ℛ(N)`, using a
/// pseudoinverse with the given absolute singular-value cutoff.
pub fn range_defect_with_cutoff(l: &Matrix, n: &Matrix, cutoff: f64) -> f64 {
    let np = pinv_with_cutoff(n, cutoff);
    (n * np * l - l).norm()
}

/// Whether `ℛ(L) ⊆ ℛ(N)`, i.e. `‖N N† L − L‖ <= tol·(1 + ‖L‖)`.
pub fn range_contained(l: &Matrix, n: &Matrix, tol: f64) -> Result<bool> {
    if l.nrows() != n.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "range test needs equal row counts, got {} and {}",
            l.nrows(),
            n.nrows()
        )));
    }
    ensure_finite(l, "L")?;
    ensure_finite(n, "N")?;
    let cutoff = PINV_REL_TOL * largest_singular_value(n);
    Ok(range_defect_with_cutoff(l, n, cutoff) <= tol * (1.0 + l.norm()))
}

/// Returns `X = N†L + (I − N†N) Y`, a solution of `N X = L`, provided one exists.
pub fn solve_matrix_eq(n: &Matrix, l: &Matrix, y: &Matrix) -> Result<Matrix> {
    if l.nrows() != n.nrows() || y.nrows() != n.ncols() || y.ncols() != l.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "N is {}x{}, L is {}x{}, Y is {}x{}",
            n.nrows(),
            n.ncols(),
            l.nrows(),
            l.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    ensure_finite(y, "Y")?;
    let np = pinv(n, PINV_REL_TOL)?;
    let defect = (n * &np * l - l).norm();
    if defect > 1e-10 * (1.0 + l.norm()) {
        return Err(Error::NoSolution { defect });
    }
    let proj = Matrix::identity(n.ncols(), n.ncols()) - &np * n;
    Ok(&np * l + proj * y)
}

/// `λ_min(M) >= −tol·(1 + ‖M‖)`.
pub fn is_psd(m: &SymMatrix, tol: f64) -> bool {
    m.dim() == 0 || m.min_eigenvalue() >= -tol * (1.0 + m.norm())
}

/// `λ_min(M) >= tol·(1 + ‖M‖)`, a strict margin.
pub fn is_pd(m: &SymMatrix, tol: f64) -> bool {
    m.dim() == 0 || m.min_eigenvalue() >= tol * (1.0 + m.norm())
}

/// `e^{M t}` by scaling and squaring with a Padé approximant.
pub fn expm(m: &Matrix, t: f64) -> Result<Matrix> {
    ensure_square(m, "expm input")?;
    ensure_finite(m, "expm input")?;
    if !t.is_finite() {
        return Err(Error::InvalidInput("expm time must be finite".into()));
    }
    if m.nrows() == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    Ok((m * t).exp())
}

/// `(e^{M h}, ∫₀ʰ e^{M r} dr)`, read off the exponential of the block matrix
/// `[[M, I], [0, 0]]`. Works for singular `M`.
pub fn expm_with_integral(m: &Matrix, h: f64) -> Result<(Matrix, Matrix)> {
    ensure_square(m, "expm input")?;
    let n = m.nrows();
    let mut big = Matrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(m);
    big.view_mut((0, n), (n, n)).fill_with_identity();
    let e = expm(&big, h)?;
    Ok((e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, n)).into_owned()))
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    largest_singular_value(m)
}
