//! Machine-readable reports.

use serde::Serialize;

use super::problem::{matrix_rows, ProblemFile};
use crate::inhomogeneous::AffineTerms;
use crate::linalg::{Matrix, Vector};
use crate::montecarlo::SimResult;
use crate::oracle1d::Oracle1dResult;
use crate::riccati::{EpsilonStep, GareDiagnostics, GareSolution, PiSource, UnsolvableReason, UnsolvableReport};
use crate::stabilizability::{StabilizerDiagnostics, StabilizerOutcome};

type Rows = Vec<Vec<f64>>;

fn vec_of(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub solver: SolverInfo,
    pub command: String,
    pub verdict: Verdict,
    pub problem: ProblemFile,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stabilizability: Option<StabilizabilityBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gare: Option<GareBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub affine: Option<AffineBlock>,
    #[serde(rename = "V(x0)", skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle1d: Option<OracleBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovBlock>,
    /// Why the pipeline stopped early, when it did.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverInfo {
    pub name: &'static str,
    pub version: &'static str,
}

impl Default for SolverInfo {
    fn default() -> Self {
        Self { name: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION") }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Verdict {
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stabilizable: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solvable: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_defined: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation_agrees: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_agrees: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilizabilityBlock {
    pub stabilizable: bool,
    #[serde(rename = "Gamma", skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Rows>,
    /// Limit of the flow with `Q = I, S = 0, R = I`.
    #[serde(rename = "P", skip_serializing_if = "Option::is_none")]
    pub p: Option<Rows>,
    pub diagnostics: StabilizerDiagnostics,
}

impl StabilizabilityBlock {
    pub fn new(outcome: &StabilizerOutcome) -> Self {
        match outcome {
            StabilizerOutcome::Stabilizable { gamma, p, diagnostics } => Self {
                stabilizable: true,
                gamma: Some(matrix_rows(gamma)),
                p: Some(matrix_rows(p.as_matrix())),
                diagnostics: diagnostics.clone(),
            },
            StabilizerOutcome::NotStabilizable { diagnostics } => {
                Self { stabilizable: false, gamma: None, p: None, diagnostics: diagnostics.clone() }
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EpsilonStepBlock {
    pub epsilon: f64,
    #[serde(rename = "P")]
    pub p: Rows,
    #[serde(rename = "Theta")]
    pub theta: Rows,
    pub horizon: f64,
    pub steps: usize,
}

fn epsilon_path(path: &[EpsilonStep]) -> Vec<EpsilonStepBlock> {
    path.iter()
        .map(|s| EpsilonStepBlock {
            epsilon: s.epsilon,
            p: matrix_rows(&s.p),
            theta: matrix_rows(&s.theta),
            horizon: s.horizon,
            steps: s.steps,
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GareBlock {
    pub solvable: bool,
    #[serde(rename = "P", skip_serializing_if = "Option::is_none")]
    pub p: Option<Rows>,
    #[serde(rename = "Theta", skip_serializing_if = "Option::is_none")]
    pub theta: Option<Rows>,
    #[serde(rename = "Pi", skip_serializing_if = "Option::is_none")]
    pub pi: Option<Rows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_source: Option<PiSource>,
    #[serde(rename = "Sigma")]
    pub sigma: Rows,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<GareDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<UnsolvableReason>,
    pub epsilon_path: Vec<EpsilonStepBlock>,
}

impl GareBlock {
    pub fn solved(sol: &GareSolution) -> Self {
        Self {
            solvable: true,
            p: Some(matrix_rows(sol.p.as_matrix())),
            theta: Some(matrix_rows(&sol.theta)),
            pi: Some(matrix_rows(&sol.pi)),
            pi_source: Some(sol.pi_source),
            sigma: matrix_rows(&sol.sigma),
            diagnostics: Some(sol.diagnostics.clone()),
            reason: None,
            epsilon_path: epsilon_path(&sol.epsilon_path),
        }
    }

    pub fn unsolvable(rep: &UnsolvableReport) -> Self {
        Self {
            solvable: false,
            p: None,
            theta: None,
            pi: None,
            pi_source: None,
            sigma: matrix_rows(&rep.sigma),
            diagnostics: None,
            reason: Some(rep.reason.clone()),
            epsilon_path: epsilon_path(&rep.epsilon_path),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AffineBlock {
    pub grid: Vec<f64>,
    /// `η` at the grid points.
    pub eta: Rows,
    /// `v*` at the grid points.
    #[serde(rename = "v*")]
    pub v: Rows,
    pub range_ok: bool,
    pub range_defect: f64,
    pub ode_residual: f64,
}

impl AffineBlock {
    pub fn new(terms: &AffineTerms, ode_residual: f64) -> Self {
        Self {
            grid: terms.grid.times.clone(),
            eta: terms.eta.iter().map(vec_of).collect(),
            v: terms.v.iter().map(vec_of).collect(),
            range_ok: terms.range_ok,
            range_defect: terms.range_defect,
            ode_residual,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationBlock {
    pub strategy: String,
    #[serde(rename = "Theta")]
    pub theta: Rows,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub result: SimResult,
    /// Allowed `|Ĵ − V(x0)|`: `max(3 SE, 0.02 |V| + 0.01)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agrees: Option<bool>,
}

impl SimulationBlock {
    pub fn new(strategy: &str, theta: &Matrix, cfg: &crate::montecarlo::SimConfig, result: SimResult) -> Self {
        Self {
            strategy: strategy.into(),
            theta: matrix_rows(theta),
            horizon: cfg.horizon,
            dt: cfg.dt,
            seed: cfg.seed,
            result,
            tolerance: None,
            deviation: None,
            agrees: None,
        }
    }

    /// Records agreement with the computed value.
    pub fn compare(&mut self, value: f64) -> bool {
        let tol = (3.0 * self.result.std_error).max(0.02 * value.abs() + 0.01);
        let dev = (self.result.estimate - value).abs();
        self.tolerance = Some(tol);
        self.deviation = Some(dev);
        self.agrees = Some(dev <= tol);
        dev <= tol
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Oracle1dResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement: Option<OracleAgreement>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleAgreement {
    pub verdicts_agree: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_difference: Option<f64>,
    /// `|Θ − Θ_oracle|` for a unique gain; absent for strategy sets.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_difference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_in_strategy_set: Option<bool>,
    pub agrees: bool,
}

/// Stability diagnostics of a user-supplied feedback gain.
#[derive(Clone, Debug, Serialize)]
pub struct LyapunovBlock {
    #[serde(rename = "Theta")]
    pub theta: Rows,
    pub certificate_found: bool,
    /// Smallest eigenvalue of the solution of `𝓛(P) + I = 0`, when it exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_eigenvalue: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}
