//! Forward flow in horizon length of the differential Riccati equation:
//!
//! ```text
//! dΣ/dt = ΣA + AᵀΣ + CᵀΣC + Q − (ΣB + CᵀΣD + Sᵀ)(R + DᵀΣD)⁻¹(BᵀΣ + DᵀΣC + S),  Σ(0) = G.
//! ```
//!
//! `Σ(T)` equals `P(0; T)`, the finite-horizon Riccati solution with terminal
//! weight `G`. Integration uses the Dormand–Prince 5(4) pair with per-step
//! symmetrization.

use serde::Serialize;

use super::{CostWeights, GareMaps};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix};
use crate::stability::{solve_lyapunov, ControlledSystem};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowConfig {
    /// Stationarity threshold, relative: `‖dΣ/dt‖ < stat_tol·(1 + ‖Σ‖)`.
    pub stat_tol: f64,
    /// Residual threshold, relative to `1 + ‖P‖`, for accepting a stationary point.
    pub res_tol: f64,
    pub divergence_norm: f64,
    pub max_horizon: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Steps shorter than this signal finite escape.
    pub min_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            stat_tol: 1e-10,
            res_tol: 1e-8,
            divergence_norm: 1e8,
            max_horizon: 1e4,
            rtol: 1e-9,
            atol: 1e-9,
            min_step: 1e-12,
            max_step: 50.0,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowStatus {
    Converged,
    /// `‖Σ‖` exceeded the divergence norm.
    Diverged,
    /// `R + DᵀΣD` stopped being positive definite.
    LostDefiniteness,
    /// Step size collapsed below `min_step` (finite escape).
    StepCollapse,
    MaxHorizon,
    /// Reached the requested horizon in fixed-horizon mode.
    Completed,
    StepLimit,
}

impl FlowStatus {
    pub fn is_divergent(self) -> bool {
        matches!(self, FlowStatus::Diverged | FlowStatus::LostDefiniteness | FlowStatus::StepCollapse)
    }
}

/// Trajectory of the Riccati flow. On convergence the final value is the
/// stationary point itself, refined by Newton steps from the last integrated value.
#[derive(Clone, Debug)]
pub struct RiccatiFlow {
    pub times: Vec<f64>,
    pub values: Vec<SymMatrix>,
    pub terminal: SymMatrix,
    pub status: FlowStatus,
    /// `‖dΣ/dt‖` at the last accepted point (infinite if it could not be evaluated).
    pub derivative_norm: f64,
    pub rejected_steps: usize,
}

impl RiccatiFlow {
    pub fn last(&self) -> &SymMatrix {
        self.values.last().expect("flow always holds its initial value")
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }
}

/// Right-hand side of the flow, `None` where `R + DᵀΣD` is not positive definite.
pub fn riccati_rhs(sys: &ControlledSystem, w: &CostWeights, sigma: &Matrix) -> Option<Matrix> {
    let maps = GareMaps::at(sys, w, &SymMatrix::symmetrize(sigma.clone()));
    let chol = maps.n.as_matrix().clone().cholesky()?;
    let ninv_lt = chol.solve(&maps.l.transpose());
    let out = maps.m.as_matrix() - &maps.l * ninv_lt;
    out.iter().all(|v| v.is_finite()).then_some(out)
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Below this relative derivative norm a nearly stationary flow is finished
// with Newton steps; the explicit scheme alone stalls at its tolerance floor.
const POLISH_TOL: f64 = 1e-6;
const POLISH_STEPS: usize = 4;

/// Newton iteration on `dΣ/dt = 0` from `y`. The Jacobian of the right-hand
/// side is the closed-loop Lyapunov operator, so each step is one Lyapunov
/// solve. Returns the stationary point, or `None` if the iteration does not
/// contract.
fn newton_polish(sys: &ControlledSystem, w: &CostWeights, y: &Matrix, f: &Matrix, cfg: &FlowConfig) -> Option<(Matrix, Matrix)> {
    let (mut y, mut f) = (y.clone(), f.clone());
    for _ in 0..POLISH_STEPS {
        let maps = GareMaps::at(sys, w, &SymMatrix::symmetrize(y.clone()));
        let theta = -maps.n.as_matrix().clone().cholesky()?.solve(&maps.l.transpose());
        let pair = sys.closed_loop(&theta).ok()?;
        let delta = solve_lyapunov(&pair, &SymMatrix::symmetrize(f.clone())).ok()?;
        let y_new = SymMatrix::symmetrize(&y + delta.as_matrix()).into_matrix();
        let f_new = riccati_rhs(sys, w, &y_new)?;
        if f_new.norm() >= f.norm() {
            return None;
        }
        (y, f) = (y_new, f_new);
        if f.norm() < cfg.stat_tol * (1.0 + y.norm()) {
            return Some((y, f));
        }
    }
    None
}

// Slightly inside the intersection of the stability region with the negative real axis (about −3.3).
const STABLE_STEP: f64 = 3.0;

enum StepResult {
    Accepted { y: Matrix, f: Matrix, err: f64 },
    Rejected { err: f64 },
    Undefined,
}

fn dopri_step(sys: &ControlledSystem, w: &CostWeights, y: &Matrix, k1: &Matrix, h: f64, cfg: &FlowConfig) -> StepResult {
    let rhs = |m: Matrix| riccati_rhs(sys, w, &m);
    let Some(k2) = rhs(y + k1 * (h * A21)) else { return StepResult::Undefined };
    let Some(k3) = rhs(y + (k1 * A31 + &k2 * A32) * h) else { return StepResult::Undefined };
    let Some(k4) = rhs(y + (k1 * A41 + &k2 * A42 + &k3 * A43) * h) else { return StepResult::Undefined };
    let Some(k5) = rhs(y + (k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h) else {
        return StepResult::Undefined;
    };
    let Some(k6) = rhs(y + (k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h) else {
        return StepResult::Undefined;
    };
    let y_new = SymMatrix::symmetrize(y + (k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * h).into_matrix();
    let Some(k7) = rhs(y_new.clone()) else { return StepResult::Undefined };
    let e = (k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
    let mut err: f64 = 0.0;
    for ((ei, yi), zi) in e.iter().zip(y.iter()).zip(y_new.iter()) {
        let sc = cfg.atol + cfg.rtol * yi.abs().max(zi.abs());
        err = err.max(ei.abs() / sc);
    }
    if !err.is_finite() {
        return StepResult::Undefined;
    }
    if err <= 1.0 {
        StepResult::Accepted { y: y_new, f: k7, err }
    } else {
        StepResult::Rejected { err }
    }
}

fn check_terminal(sys: &ControlledSystem, w: &CostWeights, g: &SymMatrix) -> Result<Matrix> {
    w.check_against(sys)?;
    if g.dim() != sys.n() {
        return Err(Error::DimensionMismatch(format!("terminal value must be {0}x{0}", sys.n())));
    }
    riccati_rhs(sys, w, g.as_matrix())
        .ok_or_else(|| Error::InvalidTerminal("R + DᵀGD is not positive definite".into()))
}

fn run(
    sys: &ControlledSystem,
    w: &CostWeights,
    g: &SymMatrix,
    cfg: &FlowConfig,
    fixed_horizon: Option<f64>,
) -> Result<RiccatiFlow> {
    let mut f = check_terminal(sys, w, g)?;
    let mut y = g.as_matrix().clone();
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut values = vec![g.clone()];
    let mut rejected = 0usize;
    let stop_at = fixed_horizon.unwrap_or(cfg.max_horizon);
    let stationary = |f: &Matrix, y: &Matrix| f.norm() < cfg.stat_tol * (1.0 + y.norm());

    let finish = |times, values, status, f: &Matrix, rejected| RiccatiFlow {
        times,
        values,
        terminal: g.clone(),
        status,
        derivative_norm: f.norm(),
        rejected_steps: rejected,
    };

    if fixed_horizon.is_none() && stationary(&f, &y) {
        return Ok(finish(times, values, FlowStatus::Converged, &f, rejected));
    }
    if stop_at <= 0.0 {
        return Ok(finish(times, values, FlowStatus::Completed, &f, rejected));
    }

    let mut h = (0.01 * (1.0 + y.norm()) / (1.0 + f.norm())).clamp(cfg.min_step * 10.0, 0.1);
    let mut last_undefined;
    loop {
        if times.len() > cfg.max_steps {
            return Ok(finish(times, values, FlowStatus::StepLimit, &f, rejected));
        }
        let mut clipped = false;
        if t + h >= stop_at {
            h = stop_at - t;
            clipped = true;
        }
        match dopri_step(sys, w, &y, &f, h, cfg) {
            StepResult::Accepted { y: y_new, f: f_new, err } => {
                last_undefined = false;
                t = if clipped { stop_at } else { t + h };
                // Secant estimate of the local Jacobian norm; keeps the next
                // step inside the real stability interval of the scheme.
                let dy = (&y_new - &y).norm();
                let stiffness = if dy > 0.0 { (&f_new - &f).norm() / dy } else { 0.0 };
                y = y_new;
                f = f_new;
                times.push(t);
                values.push(SymMatrix::symmetrize(y.clone()));
                if y.norm() > cfg.divergence_norm {
                    return Ok(finish(times, values, FlowStatus::Diverged, &f, rejected));
                }
                if fixed_horizon.is_none() && stationary(&f, &y) {
                    return Ok(finish(times, values, FlowStatus::Converged, &f, rejected));
                }
                if fixed_horizon.is_none() && f.norm() < POLISH_TOL * (1.0 + y.norm()) {
                    if let Some((yp, fp)) = newton_polish(sys, w, &y, &f, cfg) {
                        *values.last_mut().expect("just pushed") = SymMatrix::symmetrize(yp);
                        return Ok(finish(times, values, FlowStatus::Converged, &fp, rejected));
                    }
                }
                if clipped {
                    let status = if fixed_horizon.is_some() { FlowStatus::Completed } else { FlowStatus::MaxHorizon };
                    return Ok(finish(times, values, status, &f, rejected));
                }
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = (h * factor).min(cfg.max_step);
                if stiffness > 0.0 && stiffness.is_finite() {
                    h = h.min(STABLE_STEP / stiffness);
                }
            }
            StepResult::Rejected { err } => {
                rejected += 1;
                last_undefined = false;
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
            StepResult::Undefined => {
                rejected += 1;
                last_undefined = true;
                h *= 0.25;
            }
        }
        if h < cfg.min_step {
            let status = if last_undefined { FlowStatus::LostDefiniteness } else { FlowStatus::StepCollapse };
            let f_inf = Matrix::from_element(1, 1, f64::INFINITY);
            return Ok(finish(times, values, status, if last_undefined { &f_inf } else { &f }, rejected));
        }
    }
}

/// Integrates until stationarity, divergence, loss of definiteness of
/// `R + DᵀΣD`, or the horizon cap.
pub fn integrate_riccati_flow(
    sys: &ControlledSystem,
    w: &CostWeights,
    g: &SymMatrix,
    cfg: &FlowConfig,
) -> Result<RiccatiFlow> {
    run(sys, w, g, cfg, None)
}

/// Integrates over exactly `[0, horizon]` without the stationarity stop.
pub fn integrate_riccati_flow_for(
    sys: &ControlledSystem,
    w: &CostWeights,
    g: &SymMatrix,
    horizon: f64,
    cfg: &FlowConfig,
) -> Result<RiccatiFlow> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!("horizon must be finite and non-negative, got {horizon}")));
    }
    run(sys, w, g, cfg, Some(horizon))
}
