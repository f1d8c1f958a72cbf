//! L²-stability of `dX = AX dt + CX dW` and stabilizer checks through
//! generalized Lyapunov equations `PA + AᵀP + CᵀPC + Λ = 0`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, is_pd, Matrix, SymMatrix};

/// Strict positivity margin used when certifying stability.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// The uncontrolled system `[A, C]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemPair {
    pub a: Matrix,
    pub c: Matrix,
}

impl SystemPair {
    pub fn new(a: Matrix, c: Matrix) -> Result<Self> {
        if !a.is_square() || a.shape() != c.shape() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, C is {}x{}; both must be n x n",
                a.nrows(),
                a.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        ensure_finite(&a, "A")?;
        ensure_finite(&c, "C")?;
        Ok(Self { a, c })
    }

    pub fn scalar(a: f64, c: f64) -> Self {
        Self { a: Matrix::from_element(1, 1, a), c: Matrix::from_element(1, 1, c) }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// The controlled system `[A, C; B, D]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlledSystem {
    pub a: Matrix,
    pub c: Matrix,
    pub b: Matrix,
    pub d: Matrix,
}

impl ControlledSystem {
    pub fn new(a: Matrix, c: Matrix, b: Matrix, d: Matrix) -> Result<Self> {
        let pair = SystemPair::new(a, c)?;
        let n = pair.dim();
        if b.nrows() != n || d.shape() != b.shape() {
            return Err(Error::DimensionMismatch(format!(
                "B is {}x{}, D is {}x{}; both must be {n} x m",
                b.nrows(),
                b.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        ensure_finite(&b, "B")?;
        ensure_finite(&d, "D")?;
        Ok(Self { a: pair.a, c: pair.c, b, d })
    }

    pub fn scalar(a: f64, c: f64, b: f64, d: f64) -> Self {
        let s = |v| Matrix::from_element(1, 1, v);
        Self { a: s(a), c: s(c), b: s(b), d: s(d) }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn uncontrolled(&self) -> SystemPair {
        SystemPair { a: self.a.clone(), c: self.c.clone() }
    }

    /// `[A + BΘ, C + DΘ]`.
    pub fn closed_loop(&self, theta: &Matrix) -> Result<SystemPair> {
        if theta.shape() != (self.m(), self.n()) {
            return Err(Error::DimensionMismatch(format!(
                "feedback gain must be {}x{}, got {}x{}",
                self.m(),
                self.n(),
                theta.nrows(),
                theta.ncols()
            )));
        }
        ensure_finite(theta, "feedback gain")?;
        Ok(SystemPair { a: &self.a + &self.b * theta, c: &self.c + &self.d * theta })
    }

    pub fn has_no_control(&self) -> bool {
        self.b.iter().chain(self.d.iter()).all(|v| *v == 0.0)
    }
}

/// Applies `P ↦ PA + AᵀP + CᵀPC`.
pub fn lyapunov_operator(sys: &SystemPair, p: &Matrix) -> Matrix {
    p * &sys.a + sys.a.transpose() * p + sys.c.transpose() * p * &sys.c
}

/// `‖PA + AᵀP + CᵀPC + Λ‖`.
pub fn lyapunov_residual(sys: &SystemPair, p: &SymMatrix, lambda: &SymMatrix) -> f64 {
    (lyapunov_operator(sys, p.as_matrix()) + lambda.as_matrix()).norm()
}

// Index pairs (i, j), i <= j, enumerating the symmetric basis.
fn sym_basis(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect()
}

/// Solves `PA + AᵀP + CᵀPC + Λ = 0` over the `n(n+1)/2` symmetric
/// coordinates with a dense LU factorization.
pub fn solve_lyapunov(sys: &SystemPair, lambda: &SymMatrix) -> Result<SymMatrix> {
    let n = sys.dim();
    if lambda.dim() != n {
        return Err(Error::DimensionMismatch(format!("Λ must be {n}x{n}, got {}", lambda.dim())));
    }
    if n == 0 {
        return Ok(SymMatrix::zeros(0));
    }
    let basis = sym_basis(n);
    let k = basis.len();
    let mut op = DMatrix::<f64>::zeros(k, k);
    for (col, &(i, j)) in basis.iter().enumerate() {
        let mut e = Matrix::zeros(n, n);
        e[(i, j)] = 1.0;
        e[(j, i)] = 1.0;
        let img = lyapunov_operator(sys, &e);
        for (row, &(r, s)) in basis.iter().enumerate() {
            op[(row, col)] = img[(r, s)];
        }
    }
    let rhs = nalgebra::DVector::from_iterator(k, basis.iter().map(|&(r, s)| -lambda.as_matrix()[(r, s)]));
    let coords = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::LyapunovUnsolvable("singular Lyapunov operator".into()))?;
    let mut p = Matrix::zeros(n, n);
    for (idx, &(i, j)) in basis.iter().enumerate() {
        p[(i, j)] = coords[idx];
        p[(j, i)] = coords[idx];
    }
    if !p.iter().all(|v| v.is_finite()) {
        return Err(Error::LyapunovUnsolvable("non-finite solution".into()));
    }
    let p = SymMatrix::symmetrize(p);
    let res = lyapunov_residual(sys, &p, lambda);
    let scale = (1.0 + p.norm()) * (1.0 + sys.a.norm() + sys.c.norm().powi(2));
    if res > 1e-9 * scale {
        return Err(Error::LyapunovUnsolvable(format!("residual {res:.3e} exceeds tolerance")));
    }
    Ok(p)
}

/// The Lyapunov certificate `P` with `PA + AᵀP + CᵀPC = −I`, if it is
/// strictly positive definite.
pub fn stability_certificate(sys: &SystemPair) -> Option<SymMatrix> {
    let p = solve_lyapunov(sys, &SymMatrix::identity(sys.dim())).ok()?;
    is_pd(&p, STABILITY_MARGIN).then_some(p)
}

pub fn is_l2_stable(sys: &SystemPair) -> bool {
    stability_certificate(sys).is_some()
}

/// Whether `[A + BΘ, C + DΘ]` is L²-stable.
pub fn is_stabilizer(sys: &ControlledSystem, theta: &Matrix) -> Result<bool> {
    Ok(is_l2_stable(&sys.closed_loop(theta)?))
}

/// Second-moment time constant `λ_max(P)` of a stable pair, where `P` is its
/// Lyapunov certificate: `E[XᵀPX]` decays at least like `e^{−t/λ_max(P)}`.
pub fn second_moment_time_constant(sys: &SystemPair) -> Option<f64> {
    stability_certificate(sys).map(|p| p.max_eigenvalue())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_lyap(a: f64, c: f64, lam: f64) -> Result<SymMatrix> {
        solve_lyapunov(&SystemPair::scalar(a, c), &SymMatrix::scalar(lam).unwrap())
    }

    #[test]
    fn scalar_lyapunov_closed_form() {
        // P = −Λ / (2A + C²)
        let p = scalar_lyap(-1.0, 0.0, 1.0).unwrap();
        assert!((p.as_matrix()[(0, 0)] - 0.5).abs() < 1e-15);
        let p = scalar_lyap(-1.0, 1.0, 1.0).unwrap();
        assert!((p.as_matrix()[(0, 0)] - 1.0).abs() < 1e-15);
        let p = scalar_lyap(-1.0, 1.0, 0.0).unwrap();
        assert_eq!(p.as_matrix()[(0, 0)], 0.0);
    }

    #[test]
    fn marginal_scalar_is_unsolvable() {
        assert!(matches!(scalar_lyap(-0.5, 1.0, 1.0), Err(Error::LyapunovUnsolvable(_))));
    }

    #[test]
    fn scalar_stability() {
        assert!(is_l2_stable(&SystemPair::scalar(-1.0, 0.0)));
        assert!(!is_l2_stable(&SystemPair::scalar(0.0, 1.0)));
        assert!(!is_l2_stable(&SystemPair::scalar(-0.5, 1.0)));
    }

    #[test]
    fn stabilizer_examples() {
        let sys = ControlledSystem::scalar(0.0, 0.0, 1.0, 0.0);
        assert!(is_stabilizer(&sys, &Matrix::from_element(1, 1, -1.0)).unwrap());
        assert!(!is_stabilizer(&sys, &Matrix::zeros(1, 1)).unwrap());
        let sys = ControlledSystem::scalar(-1.0, 0.0, 0.0, 1.0);
        assert!(is_stabilizer(&sys, &Matrix::from_element(1, 1, 1.0)).unwrap());
        assert!(is_stabilizer(&sys, &Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn matrix_lyapunov_residual() {
        let sys = SystemPair::new(
            Matrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
            Matrix::from_row_slice(2, 2, &[0.3, 0.0, 0.2, 0.1]),
        )
        .unwrap();
        let lam = SymMatrix::new(Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let p = solve_lyapunov(&sys, &lam).unwrap();
        assert!(lyapunov_residual(&sys, &p, &lam) < 1e-13);
        assert!(is_pd(&p, 1e-9));
    }

    #[test]
    fn dimension_checks() {
        assert!(SystemPair::new(Matrix::zeros(2, 2), Matrix::zeros(1, 1)).is_err());
        assert!(ControlledSystem::new(Matrix::zeros(2, 2), Matrix::zeros(2, 2), Matrix::zeros(2, 1), Matrix::zeros(2, 2)).is_err());
    }
}
