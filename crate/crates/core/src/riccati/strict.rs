use super::flow::{integrate_riccati_flow, riccati_rhs, FlowConfig, FlowStatus};
use super::{CostWeights, GareMaps};
use crate::error::{Error, Result};
use crate::linalg::{is_pd, SymMatrix, PSD_TOL};
use crate::stability::{is_l2_stable, solve_lyapunov, ControlledSystem};

#[derive(Clone, Debug)]
pub enum StrictOutcome {
    Solved { p: SymMatrix, residual: f64, horizon: f64, steps: usize },
    Unsolvable { status: FlowStatus, horizon: f64 },
}

impl StrictOutcome {
    pub fn solution(&self) -> Option<&SymMatrix> {
        match self {
            StrictOutcome::Solved { p, .. } => Some(p),
            StrictOutcome::Unsolvable { .. } => None,
        }
    }
}

/// `‖𝓜(P) − 𝓛(P)𝓝(P)⁻¹𝓛(P)ᵀ‖`, or `None` when `𝓝(P)` is not positive definite.
pub fn strict_are_residual(sys: &ControlledSystem, w: &CostWeights, p: &SymMatrix) -> Option<f64> {
    riccati_rhs(sys, w, p.as_matrix()).map(|r| r.norm())
}

/// Solves `𝓜(P) − 𝓛(P)𝓝(P)⁻¹𝓛(P)ᵀ = 0` with `𝓝(P) ≻ 0` for a system whose
/// uncontrolled part is L²-stable, by running the Riccati flow from the
/// Lyapunov terminal value `G` with `GA + AᵀG + CᵀGC + Q = 0`.
pub fn solve_are_strict(sys: &ControlledSystem, w: &CostWeights, cfg: &FlowConfig) -> Result<StrictOutcome> {
    w.check_against(sys)?;
    let pair = sys.uncontrolled();
    if !is_l2_stable(&pair) {
        return Err(Error::Precondition("[A, C] is not L2-stable".into()));
    }
    let g = solve_lyapunov(&pair, &w.q)?;
    if riccati_rhs(sys, w, g.as_matrix()).is_none() {
        // R + DᵀGD is not positive definite
        return Ok(StrictOutcome::Unsolvable { status: FlowStatus::LostDefiniteness, horizon: 0.0 });
    }
    let flow = integrate_riccati_flow(sys, w, &g, cfg)?;
    let horizon = flow.horizon();
    if flow.status != FlowStatus::Converged {
        return Ok(StrictOutcome::Unsolvable { status: flow.status, horizon });
    }
    let p = flow.last().clone();
    let n_p = GareMaps::at(sys, w, &p).n;
    match strict_are_residual(sys, w, &p) {
        Some(residual) if residual <= cfg.res_tol * (1.0 + p.norm()) && is_pd(&n_p, PSD_TOL * 1e-3) => {
            Ok(StrictOutcome::Solved { p, residual, horizon, steps: flow.steps() })
        }
        _ => Ok(StrictOutcome::Unsolvable { status: FlowStatus::LostDefiniteness, horizon }),
    }
}
