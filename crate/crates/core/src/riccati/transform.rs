use super::CostWeights;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix};
use crate::stability::{is_l2_stable, ControlledSystem};

/// Substitutes `u = ΣX + v`:
/// `Ã = A + BΣ`, `C̃ = C + DΣ`, `Q̃ = Q + SᵀΣ + ΣᵀS + ΣᵀRΣ`, `S̃ = S + RΣ`.
/// No stability requirement on `Σ`.
pub fn shift_problem(sys: &ControlledSystem, w: &CostWeights, sigma: &Matrix) -> Result<(ControlledSystem, CostWeights)> {
    w.check_against(sys)?;
    let shifted = sys.closed_loop(sigma)?;
    let r = w.r.as_matrix();
    let q = w.q.as_matrix() + w.s.transpose() * sigma + sigma.transpose() * &w.s + sigma.transpose() * r * sigma;
    let s = &w.s + r * sigma;
    Ok((
        ControlledSystem { a: shifted.a, c: shifted.c, b: sys.b.clone(), d: sys.d.clone() },
        CostWeights { q: SymMatrix::symmetrize(q), s, r: w.r.clone() },
    ))
}

/// The reduction to a problem whose uncontrolled part `[Ã, C̃]` is L²-stable.
/// `sigma` must be a stabilizer of `sys`.
pub fn transform_problem(
    sys: &ControlledSystem,
    w: &CostWeights,
    sigma: &Matrix,
) -> Result<(ControlledSystem, CostWeights)> {
    let (tsys, tw) = shift_problem(sys, w, sigma)?;
    if !is_l2_stable(&tsys.uncontrolled()) {
        return Err(Error::Precondition("reduction gain is not a stabilizer".into()));
    }
    Ok((tsys, tw))
}
