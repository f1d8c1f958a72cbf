//! JSON problem files.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inhomogeneous::InhomogeneityGrid;
use crate::linalg::{Matrix, SymMatrix, Vector};
use crate::montecarlo::SimConfig;
use crate::riccati::{CostWeights, FlowConfig, GareConfig};
use crate::stability::ControlledSystem;

/// Relative asymmetry of `Q` or `R` above which a warning is emitted.
const ASYMMETRY_WARN: f64 = 1e-12;

type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "D")]
    pub d: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "S")]
    pub s: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inhomogeneity: Option<InhomogeneityFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InhomogeneityFile {
    pub grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Rows>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_schedule: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definiteness_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationFile>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowFile {
    pub stat_tol: Option<f64>,
    pub res_tol: Option<f64>,
    pub divergence_norm: Option<f64>,
    pub max_horizon: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub min_step: Option<f64>,
    pub max_step: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationFile {
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    /// Fixed horizon; when absent, `horizon_multiple` closed-loop time constants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub horizon_multiple: Option<f64>,
    pub seed: Option<u64>,
    pub budget: Option<u64>,
}

/// Simulation settings before the horizon is resolved against a closed loop.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationSettings {
    pub paths: usize,
    pub dt: f64,
    pub horizon: Option<f64>,
    pub horizon_multiple: f64,
    pub seed: u64,
    pub budget: u64,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        let d = SimConfig::default();
        Self { paths: d.paths, dt: d.dt, horizon: None, horizon_multiple: 20.0, seed: d.seed, budget: d.budget }
    }
}

impl SimulationSettings {
    /// Config for a closed loop with time constant `tau`; the horizon also
    /// covers the forcing support.
    pub fn config(&self, tau: f64, support_end: f64) -> SimConfig {
        let horizon = self.horizon.unwrap_or_else(|| {
            let h = SimConfig::horizon_for(tau, self.horizon_multiple, self.dt);
            h.max((support_end / self.dt).ceil() * self.dt)
        });
        SimConfig { horizon, dt: self.dt, paths: self.paths, seed: self.seed, budget: self.budget, report_tail: true }
    }
}

/// A validated problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub sys: ControlledSystem,
    pub weights: CostWeights,
    pub grid: Option<InhomogeneityGrid>,
    pub x0: Vector,
    pub gare: GareConfig,
    pub simulation: SimulationSettings,
    /// Warnings raised while loading (asymmetric weights).
    pub warnings: Vec<String>,
}

fn matrix(name: &str, rows: &Rows, r: usize, c: usize) -> Result<Matrix> {
    let shape_ok = rows.len() == r && rows.iter().all(|row| row.len() == c);
    if !shape_ok {
        let got_cols = rows.first().map(|row| row.len()).unwrap_or(0);
        return Err(Error::DimensionMismatch(format!("{name} must be {r}x{c}, got {}x{got_cols}", rows.len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{name} has non-finite entries")));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn symmetric(name: &str, rows: &Rows, dim: usize, warnings: &mut Vec<String>) -> Result<SymMatrix> {
    let m = matrix(name, rows, dim, dim)?;
    let asym = (&m - m.transpose()).norm();
    if asym > ASYMMETRY_WARN * (1.0 + m.norm()) {
        warnings.push(format!("{name} is not symmetric (‖{name} − {name}ᵀ‖ = {asym:.3e}); using ({name} + {name}ᵀ)/2"));
    }
    SymMatrix::new(m)
}

fn vectors(name: &str, rows: &Option<Rows>, k: usize, dim: usize) -> Result<Vec<Vector>> {
    match rows {
        None => Ok(vec![Vector::zeros(dim); k]),
        Some(rows) => {
            let m = matrix(name, rows, k, dim)?;
            Ok((0..k).map(|i| m.row(i).transpose()).collect())
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("problem file: {e}")))
    }

    pub fn to_problem(&self) -> Result<Problem> {
        let (n, m) = (self.n, self.m);
        if n == 0 || m == 0 {
            return Err(Error::InvalidInput("n and m must be at least 1".into()));
        }
        let mut warnings = Vec::new();
        let sys = ControlledSystem::new(
            matrix("A", &self.a, n, n)?,
            matrix("C", &self.c, n, n)?,
            matrix("B", &self.b, n, m)?,
            matrix("D", &self.d, n, m)?,
        )?;
        let q = symmetric("Q", &self.q, n, &mut warnings)?;
        let s = matrix("S", &self.s, m, n)?;
        let r = symmetric("R", &self.r, m, &mut warnings)?;
        let weights = CostWeights::new(q, s, r)?;

        let grid = match &self.inhomogeneity {
            None => None,
            Some(h) => {
                if h.grid.is_empty() {
                    return Err(Error::InvalidInput("inhomogeneity grid is empty".into()));
                }
                let k = h.grid.len() - 1;
                Some(InhomogeneityGrid::new(
                    h.grid.clone(),
                    vectors("inhomogeneity.b", &h.b, k, n)?,
                    vectors("inhomogeneity.sigma", &h.sigma, k, n)?,
                    vectors("inhomogeneity.q", &h.q, k, n)?,
                    vectors("inhomogeneity.rho", &h.rho, k, m)?,
                )?)
            }
        };
        let x0 = match &self.x0 {
            None => {
                let mut e = Vector::zeros(n);
                e[0] = 1.0;
                e
            }
            Some(v) if v.len() == n && v.iter().all(|x| x.is_finite()) => Vector::from_column_slice(v),
            Some(v) => return Err(Error::DimensionMismatch(format!("x0 must have length {n}, got {}", v.len()))),
        };
        let (gare, simulation) = self.solver_settings()?;
        Ok(Problem { sys, weights, grid, x0, gare, simulation, warnings })
    }

    fn solver_settings(&self) -> Result<(GareConfig, SimulationSettings)> {
        let mut gare = GareConfig::default();
        let mut sim = SimulationSettings::default();
        let Some(sf) = &self.solver else { return Ok((gare, sim)) };
        if let Some(e) = &sf.epsilon_schedule {
            gare.epsilon_schedule = e.clone();
        }
        let set = |slot: &mut f64, v: Option<f64>, name: &str| -> Result<()> {
            if let Some(v) = v {
                *slot = positive(name, v)?;
            }
            Ok(())
        };
        set(&mut gare.path_tol, sf.path_tol, "path_tol")?;
        set(&mut gare.residual_tol, sf.residual_tol, "residual_tol")?;
        set(&mut gare.range_tol, sf.range_tol, "range_tol")?;
        set(&mut gare.definiteness_tol, sf.definiteness_tol, "definiteness_tol")?;
        set(&mut gare.rank_tol, sf.rank_tol, "rank_tol")?;
        if let Some(f) = &sf.flow {
            let g = &mut gare.flow;
            set(&mut g.stat_tol, f.stat_tol, "flow.stat_tol")?;
            set(&mut g.res_tol, f.res_tol, "flow.res_tol")?;
            set(&mut g.divergence_norm, f.divergence_norm, "flow.divergence_norm")?;
            set(&mut g.max_horizon, f.max_horizon, "flow.max_horizon")?;
            set(&mut g.rtol, f.rtol, "flow.rtol")?;
            set(&mut g.atol, f.atol, "flow.atol")?;
            set(&mut g.min_step, f.min_step, "flow.min_step")?;
            set(&mut g.max_step, f.max_step, "flow.max_step")?;
            if let Some(v) = f.max_steps {
                g.max_steps = v;
            }
        }
        if let Some(s) = &sf.simulation {
            if let Some(p) = s.paths {
                sim.paths = p;
            }
            set(&mut sim.dt, s.dt, "simulation.dt")?;
            set(&mut sim.horizon_multiple, s.horizon_multiple, "simulation.horizon_multiple")?;
            if let Some(h) = s.horizon {
                sim.horizon = Some(positive("simulation.horizon", h)?);
            }
            if let Some(seed) = s.seed {
                sim.seed = seed;
            }
            if let Some(b) = s.budget {
                sim.budget = b;
            }
        }
        Ok((gare, sim))
    }
}

fn rows(m: &Matrix) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl Problem {
    /// Problem file with every setting spelled out, so that it re-solves to
    /// the same report.
    pub fn to_file(&self) -> ProblemFile {
        let (n, m) = (self.sys.n(), self.sys.m());
        let inhomogeneity = self.grid.as_ref().map(|g| {
            let stack = |vs: &[Vector]| vs.iter().map(|v| v.iter().copied().collect()).collect::<Rows>();
            InhomogeneityFile {
                grid: g.times.clone(),
                b: Some(stack(&g.b)),
                sigma: Some(stack(&g.sigma)),
                q: Some(stack(&g.q)),
                rho: Some(stack(&g.rho)),
            }
        });
        let f: &FlowConfig = &self.gare.flow;
        let sim = &self.simulation;
        ProblemFile {
            n,
            m,
            a: rows(&self.sys.a),
            c: rows(&self.sys.c),
            b: rows(&self.sys.b),
            d: rows(&self.sys.d),
            q: rows(self.weights.q.as_matrix()),
            s: rows(&self.weights.s),
            r: rows(self.weights.r.as_matrix()),
            inhomogeneity,
            x0: Some(self.x0.iter().copied().collect()),
            solver: Some(SolverFile {
                epsilon_schedule: Some(self.gare.epsilon_schedule.clone()),
                path_tol: Some(self.gare.path_tol),
                residual_tol: Some(self.gare.residual_tol),
                range_tol: Some(self.gare.range_tol),
                definiteness_tol: Some(self.gare.definiteness_tol),
                rank_tol: Some(self.gare.rank_tol),
                flow: Some(FlowFile {
                    stat_tol: Some(f.stat_tol),
                    res_tol: Some(f.res_tol),
                    divergence_norm: Some(f.divergence_norm),
                    max_horizon: Some(f.max_horizon),
                    rtol: Some(f.rtol),
                    atol: Some(f.atol),
                    min_step: Some(f.min_step),
                    max_step: Some(f.max_step),
                    max_steps: Some(f.max_steps),
                }),
                simulation: Some(SimulationFile {
                    paths: Some(sim.paths),
                    dt: Some(sim.dt),
                    horizon: sim.horizon,
                    horizon_multiple: Some(sim.horizon_multiple),
                    seed: Some(sim.seed),
                    budget: Some(sim.budget),
                }),
            }),
        }
    }
}

pub(crate) fn matrix_rows(m: &Matrix) -> Rows {
    rows(m)
}
