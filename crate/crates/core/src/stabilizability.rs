//! L²-stabilizability of `[A, C; B, D]`. A stabilizer is read off from the
//! limit of the Riccati flow with weights `Q = I, S = 0, R = I` and zero
//! terminal value, which converges exactly when the system is stabilizable.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{is_pd, is_psd, Matrix, SymMatrix, PSD_TOL};
use crate::riccati::{integrate_riccati_flow, riccati_rhs, CostWeights, FlowConfig, FlowStatus, RiccatiFlow};
use crate::stability::{is_stabilizer, stability_certificate, ControlledSystem, STABILITY_MARGIN};

#[derive(Clone, Debug, Serialize)]
pub struct StabilizerDiagnostics {
    /// `None` when there is no control and the verdict comes from `[A, C]` alone.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_status: Option<FlowStatus>,
    pub horizon: f64,
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub are_residual: Option<f64>,
}

#[derive(Clone, Debug)]
pub enum StabilizerOutcome {
    Stabilizable { gamma: Matrix, p: SymMatrix, diagnostics: StabilizerDiagnostics },
    NotStabilizable { diagnostics: StabilizerDiagnostics },
}

impl StabilizerOutcome {
    pub fn gamma(&self) -> Option<&Matrix> {
        match self {
            StabilizerOutcome::Stabilizable { gamma, .. } => Some(gamma),
            StabilizerOutcome::NotStabilizable { .. } => None,
        }
    }

    pub fn is_stabilizable(&self) -> bool {
        self.gamma().is_some()
    }

    pub fn diagnostics(&self) -> &StabilizerDiagnostics {
        match self {
            StabilizerOutcome::Stabilizable { diagnostics, .. } | StabilizerOutcome::NotStabilizable { diagnostics } => {
                diagnostics
            }
        }
    }
}

/// `Γ = −(I + DᵀPD)⁻¹(BᵀP + DᵀPC)`.
pub fn stabilizer_gain(sys: &ControlledSystem, p: &SymMatrix) -> Result<Matrix> {
    let pm = p.as_matrix();
    let m = sys.m();
    let n = Matrix::identity(m, m) + sys.d.transpose() * pm * &sys.d;
    let rhs = sys.b.transpose() * pm + sys.d.transpose() * pm * &sys.c;
    let chol = n
        .cholesky()
        .ok_or_else(|| Error::InternalInconsistency("I + DᵀPD is not positive definite".into()))?;
    Ok(-chol.solve(&rhs))
}

/// The Riccati flow with `Q = I, S = 0, R = I` from `Σ(0) = 0`.
pub fn stabilizability_flow(sys: &ControlledSystem, cfg: &FlowConfig) -> Result<RiccatiFlow> {
    let w = CostWeights::standard(sys.n(), sys.m());
    integrate_riccati_flow(sys, &w, &SymMatrix::zeros(sys.n()), cfg)
}

pub fn find_stabilizer(sys: &ControlledSystem, cfg: &FlowConfig) -> Result<StabilizerOutcome> {
    let n = sys.n();
    if sys.has_no_control() {
        let diagnostics = StabilizerDiagnostics { flow_status: None, horizon: 0.0, steps: 0, are_residual: None };
        return Ok(match stability_certificate(&sys.uncontrolled()) {
            Some(p) => StabilizerOutcome::Stabilizable { gamma: Matrix::zeros(sys.m(), n), p, diagnostics },
            None => StabilizerOutcome::NotStabilizable { diagnostics },
        });
    }
    let w = CostWeights::standard(n, sys.m());
    let flow = stabilizability_flow(sys, cfg)?;
    let p = flow.last().clone();
    let residual = riccati_rhs(sys, &w, p.as_matrix()).map(|r| r.norm());
    let diagnostics =
        StabilizerDiagnostics { flow_status: Some(flow.status), horizon: flow.horizon(), steps: flow.steps(), are_residual: residual };

    match flow.status {
        FlowStatus::Converged => {
            let res = residual.unwrap_or(f64::INFINITY);
            if res > cfg.res_tol * (1.0 + p.norm()) || !is_pd(&p, STABILITY_MARGIN) {
                return Err(Error::InternalInconsistency(format!(
                    "stationary point of the stabilizability flow fails verification (residual {res:.3e})"
                )));
            }
            let gamma = stabilizer_gain(sys, &p)?;
            if !is_stabilizer(sys, &gamma)? {
                return Err(Error::InternalInconsistency("gain from the converged flow is not a stabilizer".into()));
            }
            Ok(StabilizerOutcome::Stabilizable { gamma, p, diagnostics })
        }
        // Slow convergence near the stabilizability boundary: accept the
        // current gain only if it certifiably stabilizes.
        FlowStatus::MaxHorizon | FlowStatus::StepLimit => {
            let gamma = stabilizer_gain(sys, &p)?;
            if is_stabilizer(sys, &gamma)? {
                Ok(StabilizerOutcome::Stabilizable { gamma, p, diagnostics })
            } else {
                Ok(StabilizerOutcome::NotStabilizable { diagnostics })
            }
        }
        _ => Ok(StabilizerOutcome::NotStabilizable { diagnostics }),
    }
}

/// For `n = 1`, whether `[[2A + C², B + CD], [(B + CD)ᵀ, DᵀD]]` is positive
/// semidefinite. This holds for every non-stabilizable scalar system.
pub fn check_sa_condition(sys: &ControlledSystem) -> Result<bool> {
    if sys.n() != 1 {
        return Err(Error::UnsupportedDimension(format!("condition is defined for n = 1, got n = {}", sys.n())));
    }
    let m = sys.m();
    let (a, c) = (sys.a[(0, 0)], sys.c[(0, 0)]);
    let mut block = Matrix::zeros(1 + m, 1 + m);
    block[(0, 0)] = 2.0 * a + c * c;
    let cross = &sys.b + &sys.d * c;
    for j in 0..m {
        block[(0, 1 + j)] = cross[(0, j)];
        block[(1 + j, 0)] = cross[(0, j)];
    }
    block.view_mut((1, 1), (m, m)).copy_from(&(sys.d.transpose() * &sys.d));
    let scale = 1.0 + block.norm();
    Ok(is_psd(&SymMatrix::symmetrize(block), PSD_TOL * scale))
}
