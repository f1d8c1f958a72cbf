//! Riccati machinery: the differential Riccati flow, the strictly convex ARE
//! solver, the reduction to a stable uncontrolled system and the
//! ε-regularized computation of the static stabilizing GARE solution.

mod flow;
mod gare;
mod strict;
mod transform;

pub use flow::{integrate_riccati_flow, integrate_riccati_flow_for, riccati_rhs, FlowConfig, FlowStatus, RiccatiFlow};
pub use gare::{
    solve_gare, solve_gare_with_reduction, verify_static_stabilizing, EpsilonStep, GareConfig, GareDiagnostics,
    GareOutcome, GareSolution, PiSource, StaticStabilizingReport, UnsolvableReason, UnsolvableReport,
};
pub use strict::{solve_are_strict, strict_are_residual, StrictOutcome};
pub use transform::{shift_problem, transform_problem};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, Matrix, SymMatrix};
use crate::stability::ControlledSystem;

/// Quadratic cost weights `Q` (n×n), `S` (m×n), `R` (m×m).
#[derive(Clone, Debug, PartialEq)]
pub struct CostWeights {
    pub q: SymMatrix,
    pub s: Matrix,
    pub r: SymMatrix,
}

impl CostWeights {
    pub fn new(q: SymMatrix, s: Matrix, r: SymMatrix) -> Result<Self> {
        ensure_finite(&s, "S")?;
        if s.shape() != (r.dim(), q.dim()) {
            return Err(Error::DimensionMismatch(format!(
                "S must be {}x{}, got {}x{}",
                r.dim(),
                q.dim(),
                s.nrows(),
                s.ncols()
            )));
        }
        Ok(Self { q, s, r })
    }

    pub fn scalar(q: f64, s: f64, r: f64) -> Self {
        Self {
            q: SymMatrix::symmetrize(Matrix::from_element(1, 1, q)),
            s: Matrix::from_element(1, 1, s),
            r: SymMatrix::symmetrize(Matrix::from_element(1, 1, r)),
        }
    }

    /// `Q = I, S = 0, R = I`.
    pub fn standard(n: usize, m: usize) -> Self {
        Self { q: SymMatrix::identity(n), s: Matrix::zeros(m, n), r: SymMatrix::identity(m) }
    }

    pub fn check_against(&self, sys: &ControlledSystem) -> Result<()> {
        if self.q.dim() != sys.n() {
            return Err(Error::DimensionMismatch(format!("Q must be {0}x{0}", sys.n())));
        }
        if self.r.dim() != sys.m() {
            return Err(Error::DimensionMismatch(format!("R must be {0}x{0}", sys.m())));
        }
        if self.s.shape() != (sys.m(), sys.n()) {
            return Err(Error::DimensionMismatch(format!("S must be {}x{}", sys.m(), sys.n())));
        }
        Ok(())
    }

    /// The same weights with `R` replaced by `R + εI`.
    pub fn regularized(&self, eps: f64) -> Self {
        let m = self.r.dim();
        Self {
            q: self.q.clone(),
            s: self.s.clone(),
            r: SymMatrix::symmetrize(self.r.as_matrix() + Matrix::identity(m, m) * eps),
        }
    }
}

/// `𝓜(P) = PA + AᵀP + CᵀPC + Q`, `𝓛(P) = PB + CᵀPD + Sᵀ`, `𝓝(P) = R + DᵀPD`.
#[derive(Clone, Debug)]
pub struct GareMaps {
    pub m: SymMatrix,
    pub l: Matrix,
    pub n: SymMatrix,
}

impl GareMaps {
    pub fn at(sys: &ControlledSystem, w: &CostWeights, p: &SymMatrix) -> Self {
        let pm = p.as_matrix();
        let m = pm * &sys.a + sys.a.transpose() * pm + sys.c.transpose() * pm * &sys.c + w.q.as_matrix();
        let l = pm * &sys.b + sys.c.transpose() * pm * &sys.d + w.s.transpose();
        let n = w.r.as_matrix() + sys.d.transpose() * pm * &sys.d;
        Self { m: SymMatrix::symmetrize(m), l, n: SymMatrix::symmetrize(n) }
    }
}
