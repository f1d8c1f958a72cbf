//! Static stabilizing solution of the generalized ARE
//!
//! ```text
//! 𝓜(P) − 𝓛(P)𝓝(P)†𝓛(P)ᵀ = 0,  ℛ(𝓛(P)ᵀ) ⊆ ℛ(𝓝(P)),  𝓝(P) ⪰ 0,
//! ```
//!
//! obtained as the limit of strictly convex problems with `R + εI` after the
//! reduction to a stable uncontrolled system.

use serde::Serialize;

use super::flow::{FlowConfig, FlowStatus};
use super::strict::{solve_are_strict, StrictOutcome};
use super::transform::transform_problem;
use super::{CostWeights, GareMaps};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix};
use crate::stabilizability::{find_stabilizer, StabilizerOutcome};
use crate::stability::{is_stabilizer, ControlledSystem};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GareConfig {
    pub flow: FlowConfig,
    pub epsilon_schedule: Vec<f64>,
    /// Settling threshold on the last path increment, relative to `1 + ‖P‖`.
    pub path_tol: f64,
    /// ARE residual threshold, relative to `1 + ‖P‖`.
    pub residual_tol: f64,
    pub range_tol: f64,
    /// Allowed negativity of `λ_min(𝓝(P))`.
    pub definiteness_tol: f64,
    /// Eigenvalues of `𝓝(P)` below `rank_tol·(1 + ‖R‖ + ‖D‖²(1 + ‖P‖))` are treated as zero.
    pub rank_tol: f64,
}

impl Default for GareConfig {
    fn default() -> Self {
        Self {
            flow: FlowConfig::default(),
            epsilon_schedule: (1..=8).map(|k| 10f64.powi(-k)).collect(),
            path_tol: 1e-6,
            residual_tol: 1e-6,
            range_tol: 1e-6,
            definiteness_tol: 1e-8,
            rank_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EpsilonStep {
    pub epsilon: f64,
    pub p: Matrix,
    /// `Θ_ε` expressed for the original system.
    pub theta: Matrix,
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PiSource {
    /// `Π = 0`.
    Zero,
    /// Stabilizer of the system restricted to the null space of `𝓝(P)`.
    NullSpaceSearch,
}

#[derive(Clone, Debug, Serialize)]
pub struct GareDiagnostics {
    pub are_residual: f64,
    pub range_defect: f64,
    pub n_min_eigenvalue: f64,
    pub n_rank: usize,
    /// Last increment `‖P_{ε_k} − P_{ε_{k+1}}‖` of the ε-path.
    pub path_increment: f64,
    /// `‖𝓝(P)Θ* + 𝓛(P)ᵀ‖`.
    pub gain_identity_defect: f64,
    /// `P` was taken from the unregularized problem rather than the last `P_ε`.
    pub unregularized_limit: bool,
}

#[derive(Clone, Debug)]
pub struct GareSolution {
    pub p: SymMatrix,
    pub theta: Matrix,
    pub pi: Matrix,
    pub pi_source: PiSource,
    /// `𝓝(P)†` with the rank cutoff used during verification.
    pub n_pinv: SymMatrix,
    /// Stabilizer used for the reduction.
    pub sigma: Matrix,
    pub epsilon_path: Vec<EpsilonStep>,
    pub diagnostics: GareDiagnostics,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UnsolvableReason {
    /// The strictly convex problem at this ε has no solution reachable by the flow.
    FlowFailed { epsilon: f64, status: FlowStatus },
    /// The path moved by more than the settling tolerance at the last step.
    PathNotSettled { increment: f64 },
}

#[derive(Clone, Debug)]
pub struct UnsolvableReport {
    pub reason: UnsolvableReason,
    pub sigma: Matrix,
    pub epsilon_path: Vec<EpsilonStep>,
}

#[derive(Clone, Debug)]
pub enum GareOutcome {
    Solved(Box<GareSolution>),
    Unsolvable(UnsolvableReport),
}

impl GareOutcome {
    pub fn solution(&self) -> Option<&GareSolution> {
        match self {
            GareOutcome::Solved(s) => Some(s),
            GareOutcome::Unsolvable(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StaticStabilizingReport {
    pub are_residual: f64,
    pub n_min_eigenvalue: f64,
    pub n_rank: usize,
    pub range_defect: f64,
    /// A stabilizer in the feedback family of `P`, if one was found.
    pub theta: Option<Matrix>,
    pub pi_source: Option<PiSource>,
}

impl StaticStabilizingReport {
    pub fn passes(&self, p: &SymMatrix, cfg: &GareConfig) -> bool {
        self.are_residual <= cfg.residual_tol * (1.0 + p.norm())
            && self.range_defect <= cfg.range_tol
            && self.n_min_eigenvalue >= -cfg.definiteness_tol
            && self.theta.is_some()
    }
}

fn rank_cutoff(sys: &ControlledSystem, w: &CostWeights, p: &SymMatrix, cfg: &GareConfig) -> f64 {
    cfg.rank_tol * (1.0 + w.r.norm() + sys.d.norm().powi(2) * (1.0 + p.norm()))
}

// Θ = K₀ + ZΓ_z, where Z spans ker 𝓝(P) and Γ_z stabilizes [A + BK₀, C + DK₀; BZ, DZ].
fn null_space_stabilizer(sys: &ControlledSystem, k0: &Matrix, z: &Matrix, flow: &FlowConfig) -> Result<Option<Matrix>> {
    let base = sys.closed_loop(k0)?;
    let reduced = ControlledSystem { a: base.a, c: base.c, b: &sys.b * z, d: &sys.d * z };
    Ok(match find_stabilizer(&reduced, flow) {
        Ok(StabilizerOutcome::Stabilizable { gamma, .. }) => {
            let theta = k0 + z * gamma;
            is_stabilizer(sys, &theta)?.then_some(theta)
        }
        _ => None,
    })
}

/// Checks the three GARE conditions for `P` on the given data and searches
/// the family `−𝓝†𝓛ᵀ + (I − 𝓝†𝓝)Π` for a stabilizer.
pub fn verify_static_stabilizing(
    sys: &ControlledSystem,
    w: &CostWeights,
    p: &SymMatrix,
    cfg: &GareConfig,
) -> Result<StaticStabilizingReport> {
    w.check_against(sys)?;
    if p.dim() != sys.n() {
        return Err(Error::DimensionMismatch(format!("P must be {0}x{0}", sys.n())));
    }
    let maps = GareMaps::at(sys, w, p);
    let cutoff = rank_cutoff(sys, w, p, cfg);
    let n_pinv = maps.n.pinv_with_cutoff(cutoff);
    let lt = maps.l.transpose();
    let residual = (maps.m.as_matrix() - &maps.l * n_pinv.as_matrix() * &lt).norm();
    let range_defect = (&lt - maps.n.as_matrix() * n_pinv.as_matrix() * &lt).norm();
    let n_min = maps.n.min_eigenvalue();
    let z = maps.n.null_space_basis(cutoff);

    let k0 = -(n_pinv.as_matrix() * &lt);
    let (theta, pi_source) = if is_stabilizer(sys, &k0)? {
        (Some(k0), Some(PiSource::Zero))
    } else if z.ncols() > 0 {
        match null_space_stabilizer(sys, &k0, &z, &cfg.flow)? {
            Some(t) => (Some(t), Some(PiSource::NullSpaceSearch)),
            None => (None, None),
        }
    } else {
        (None, None)
    };
    Ok(StaticStabilizingReport {
        are_residual: residual,
        n_min_eigenvalue: n_min,
        n_rank: sys.m() - z.ncols(),
        range_defect,
        theta,
        pi_source,
    })
}

/// Computes the static stabilizing solution, using the stabilizer from
/// [`find_stabilizer`] for the reduction.
pub fn solve_gare(sys: &ControlledSystem, w: &CostWeights, cfg: &GareConfig) -> Result<GareOutcome> {
    w.check_against(sys)?;
    match find_stabilizer(sys, &cfg.flow)? {
        StabilizerOutcome::Stabilizable { gamma, .. } => solve_gare_with_reduction(sys, w, &gamma, cfg),
        StabilizerOutcome::NotStabilizable { .. } => Err(Error::NotStabilizable),
    }
}

/// As [`solve_gare`], with an explicit reduction stabilizer `sigma`.
pub fn solve_gare_with_reduction(
    sys: &ControlledSystem,
    w: &CostWeights,
    sigma: &Matrix,
    cfg: &GareConfig,
) -> Result<GareOutcome> {
    if cfg.epsilon_schedule.is_empty() || cfg.epsilon_schedule.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidInput("epsilon schedule must be a non-empty list of positive numbers".into()));
    }
    let (tsys, tw) = transform_problem(sys, w, sigma)?;
    let mut path: Vec<EpsilonStep> = Vec::with_capacity(cfg.epsilon_schedule.len());
    let mut last: Option<SymMatrix> = None;
    let mut increment = 0.0;
    for &eps in &cfg.epsilon_schedule {
        let w_eps = tw.regularized(eps);
        match solve_are_strict(&tsys, &w_eps, &cfg.flow)? {
            StrictOutcome::Solved { p, horizon, steps, .. } => {
                let maps = GareMaps::at(&tsys, &w_eps, &p);
                let gain = maps
                    .n
                    .as_matrix()
                    .clone()
                    .cholesky()
                    .map(|c| -c.solve(&maps.l.transpose()))
                    .ok_or_else(|| Error::InternalInconsistency("regularized 𝓝(P_ε) is not positive definite".into()))?;
                if let Some(prev) = &last {
                    increment = (p.as_matrix() - prev.as_matrix()).norm();
                }
                path.push(EpsilonStep { epsilon: eps, p: p.as_matrix().clone(), theta: gain + sigma, horizon, steps });
                last = Some(p);
            }
            StrictOutcome::Unsolvable { status, .. } => {
                return Ok(GareOutcome::Unsolvable(UnsolvableReport {
                    reason: UnsolvableReason::FlowFailed { epsilon: eps, status },
                    sigma: sigma.clone(),
                    epsilon_path: path,
                }));
            }
        }
    }
    let p = last.expect("schedule is non-empty");
    if increment > cfg.path_tol * (1.0 + p.norm()) {
        return Ok(GareOutcome::Unsolvable(UnsolvableReport {
            reason: UnsolvableReason::PathNotSettled { increment },
            sigma: sigma.clone(),
            epsilon_path: path,
        }));
    }

    // When the unregularized flow stays definite it lands on the limit
    // itself, without the O(ε) offset of the last path point.
    let (p, unregularized_limit) = match solve_are_strict(&tsys, &tw, &cfg.flow)? {
        StrictOutcome::Solved { p: p0, .. } if (p0.as_matrix() - p.as_matrix()).norm() <= cfg.path_tol * (1.0 + p.norm()) => {
            (p0, true)
        }
        _ => (p, false),
    };
    let report = verify_static_stabilizing(sys, w, &p, cfg)?;
    if !report.passes(&p, cfg) {
        return Err(Error::InternalInconsistency(format!(
            "limit of the ε-path fails verification: residual {:.3e}, range defect {:.3e}, λ_min(𝓝) {:.3e}, stabilizer {}",
            report.are_residual,
            report.range_defect,
            report.n_min_eigenvalue,
            if report.theta.is_some() { "found" } else { "not found" }
        )));
    }
    let theta = report.theta.clone().expect("checked by passes");
    let maps = GareMaps::at(sys, w, &p);
    let n_pinv = maps.n.pinv_with_cutoff(rank_cutoff(sys, w, &p, cfg));
    let k0 = -(n_pinv.as_matrix() * maps.l.transpose());
    let gain_identity_defect = (maps.n.as_matrix() * &theta + maps.l.transpose()).norm();
    Ok(GareOutcome::Solved(Box::new(GareSolution {
        pi: &theta - k0,
        theta,
        pi_source: report.pi_source.expect("set with theta"),
        n_pinv,
        sigma: sigma.clone(),
        epsilon_path: path,
        diagnostics: GareDiagnostics {
            are_residual: report.are_residual,
            range_defect: report.range_defect,
            n_min_eigenvalue: report.n_min_eigenvalue,
            n_rank: report.n_rank,
            path_increment: increment,
            gain_identity_defect,
            unregularized_limit,
        },
        p,
    })))
}
