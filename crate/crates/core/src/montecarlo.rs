//! Euler–Maruyama simulation of the controlled state equation and Monte Carlo
//! estimation of the truncated cost.
//!
//! Each path draws its Brownian increments from its own ChaCha8 stream keyed by
//! `(seed, path index)`, and per-path results are reduced in index order, so
//! estimates are bit-reproducible whatever the thread schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inhomogeneous::{AffineTerms, InhomogeneityGrid};
use crate::linalg::{spectral_norm, Matrix, SymMatrix, Vector};
use crate::riccati::{CostWeights, GareSolution};
use crate::stability::{second_moment_time_constant, solve_lyapunov, ControlledSystem};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    /// Largest admissible `paths × steps`.
    pub budget: u64,
    /// Report the Lyapunov bound on the discarded cost tail.
    pub report_tail: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { horizon: 20.0, dt: 1e-3, paths: 10_000, seed: 0, budget: 20_000_000_000, report_tail: true }
    }
}

impl SimConfig {
    /// Horizon of `multiple` second-moment time constants, rounded up to a multiple of `dt`.
    pub fn horizon_for(tau: f64, multiple: f64, dt: f64) -> f64 {
        (multiple * tau / dt).ceil() * dt
    }

    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidInput("simulation needs dt > 0 and a finite horizon".into()));
        }
        if self.paths == 0 {
            return Err(Error::InvalidInput("simulation needs at least one path".into()));
        }
        let steps = (self.horizon / self.dt).round();
        if (steps * self.dt - self.horizon).abs() > 1e-9 * self.horizon.max(1.0) {
            return Err(Error::InvalidInput(format!("horizon {} is not a multiple of dt {}", self.horizon, self.dt)));
        }
        let total = steps as u64 * self.paths as u64;
        if total > self.budget {
            return Err(Error::Budget { requested: total, budget: self.budget });
        }
        Ok(steps as usize)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Quantiles {
    pub p05: f64,
    pub p50: f64,
    pub p95: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimResult {
    pub estimate: f64,
    pub std_error: f64,
    pub terminal_second_moment: f64,
    pub quantiles: Quantiles,
    pub paths: usize,
    pub steps: usize,
    /// `‖W‖₂·E|X(T)|²` bounding the cost after `T`, `W` the closed-loop Lyapunov solution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_bound: Option<f64>,
}

/// Deterministic control values, one per simulation step `[t_j, t_j + dt)`.
pub type ControlPath = Vec<Vector>;

// Row-major dense data for the path loop.
struct Kernel {
    n: usize,
    m: usize,
    a: Vec<f64>,
    c: Vec<f64>,
    b: Vec<f64>,
    d: Vec<f64>,
    q: Vec<f64>,
    s: Vec<f64>,
    r: Vec<f64>,
    k: Vec<f64>,
    steps: usize,
    dt: f64,
    // Per-step forcing and open-loop control, flattened.
    fb: Vec<f64>,
    fsigma: Vec<f64>,
    fq: Vec<f64>,
    frho: Vec<f64>,
    v: Vec<f64>,
}

fn row_major(m: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

// y = M x for row-major M (rows × cols).
#[inline]
fn matvec(mat: &[f64], x: &[f64], rows: usize, y: &mut [f64]) {
    let cols = x.len();
    for i in 0..rows {
        let row = &mat[i * cols..(i + 1) * cols];
        y[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct PathOutcome {
    cost: f64,
    terminal_sq: f64,
}

impl Kernel {
    fn new(
        sys: &ControlledSystem,
        w: &CostWeights,
        gain: &Matrix,
        v: &[Vector],
        g: Option<&InhomogeneityGrid>,
        cfg: &SimConfig,
    ) -> Result<Self> {
        w.check_against(sys)?;
        let steps = cfg.steps()?;
        let (n, m) = (sys.n(), sys.m());
        if gain.shape() != (m, n) {
            return Err(Error::DimensionMismatch(format!("feedback gain must be {m}x{n}")));
        }
        if v.len() != steps || v.iter().any(|x| x.len() != m) {
            return Err(Error::DimensionMismatch(format!("control path must hold {steps} vectors of length {m}")));
        }
        let mut fb = vec![0.0; n * steps];
        let mut fsigma = vec![0.0; n * steps];
        let mut fq = vec![0.0; n * steps];
        let mut frho = vec![0.0; m * steps];
        if let Some(g) = g {
            check_grid_alignment(g, cfg.dt)?;
            for j in 0..steps {
                if let Some(k) = g.interval_of((j as f64 + 0.5) * cfg.dt) {
                    fb[j * n..(j + 1) * n].copy_from_slice(g.b[k].as_slice());
                    fsigma[j * n..(j + 1) * n].copy_from_slice(g.sigma[k].as_slice());
                    fq[j * n..(j + 1) * n].copy_from_slice(g.q[k].as_slice());
                    frho[j * m..(j + 1) * m].copy_from_slice(g.rho[k].as_slice());
                }
            }
        }
        let vflat = v.iter().flat_map(|x| x.iter().copied()).collect();
        Ok(Self {
            n,
            m,
            a: row_major(&sys.a),
            c: row_major(&sys.c),
            b: row_major(&sys.b),
            d: row_major(&sys.d),
            q: row_major(w.q.as_matrix()),
            s: row_major(&w.s),
            r: row_major(w.r.as_matrix()),
            k: row_major(gain),
            steps,
            dt: cfg.dt,
            fb,
            fsigma,
            fq,
            frho,
            v: vflat,
        })
    }

    fn rng(seed: u64, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        rng
    }

    /// Runs one path. With `record`, the applied controls are appended to it;
    /// with `replay`, those controls are used instead of the feedback law.
    /// `observe` sees the state after every step.
    fn run_path(
        &self,
        x0: &[f64],
        seed: u64,
        path: usize,
        mut record: Option<&mut Vec<f64>>,
        replay: Option<&[f64]>,
        mut observe: impl FnMut(usize, &[f64]),
    ) -> PathOutcome {
        let (n, m, dt) = (self.n, self.m, self.dt);
        let sq_dt = dt.sqrt();
        let mut rng = Self::rng(seed, path);
        let mut x = x0.to_vec();
        let mut x_next = vec![0.0; n];
        let mut u = vec![0.0; m];
        let mut ax = vec![0.0; n];
        let mut cx = vec![0.0; n];
        let mut bu = vec![0.0; n];
        let mut du = vec![0.0; n];
        let mut qx = vec![0.0; n];
        let mut sx = vec![0.0; m];
        let mut ru = vec![0.0; m];
        let mut cost = 0.0;
        for j in 0..self.steps {
            match replay {
                Some(us) => u.copy_from_slice(&us[j * m..(j + 1) * m]),
                None => {
                    matvec(&self.k, &x, m, &mut u);
                    for (ui, vi) in u.iter_mut().zip(&self.v[j * m..(j + 1) * m]) {
                        *ui += vi;
                    }
                }
            }
            if let Some(rec) = record.as_deref_mut() {
                rec.extend_from_slice(&u);
            }
            matvec(&self.q, &x, n, &mut qx);
            matvec(&self.s, &x, m, &mut sx);
            matvec(&self.r, &u, m, &mut ru);
            let fq = &self.fq[j * n..(j + 1) * n];
            let frho = &self.frho[j * m..(j + 1) * m];
            cost += (dot(&qx, &x) + 2.0 * dot(&sx, &u) + dot(&ru, &u) + 2.0 * dot(fq, &x) + 2.0 * dot(frho, &u)) * dt;

            let dw: f64 = StandardNormal.sample(&mut rng);
            let dw = dw * sq_dt;
            matvec(&self.a, &x, n, &mut ax);
            matvec(&self.c, &x, n, &mut cx);
            matvec(&self.b, &u, n, &mut bu);
            matvec(&self.d, &u, n, &mut du);
            let fb = &self.fb[j * n..(j + 1) * n];
            let fs = &self.fsigma[j * n..(j + 1) * n];
            for i in 0..n {
                x_next[i] = x[i] + (ax[i] + bu[i] + fb[i]) * dt + (cx[i] + du[i] + fs[i]) * dw;
            }
            std::mem::swap(&mut x, &mut x_next);
            observe(j + 1, &x);
        }
        PathOutcome { cost, terminal_sq: dot(&x, &x) }
    }
}

fn check_grid_alignment(g: &InhomogeneityGrid, dt: f64) -> Result<()> {
    for &t in &g.times {
        let r = t / dt;
        if (r - r.round()).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("inhomogeneity breakpoint {t} is not a multiple of dt = {dt}")));
        }
    }
    Ok(())
}

fn summarize(outcomes: &[PathOutcome], steps: usize) -> SimResult {
    let n = outcomes.len() as f64;
    let mean = outcomes.iter().map(|o| o.cost).sum::<f64>() / n;
    let var = if outcomes.len() > 1 {
        outcomes.iter().map(|o| (o.cost - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut sorted: Vec<f64> = outcomes.iter().map(|o| o.cost).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| sorted[((p * (sorted.len() - 1) as f64).round()) as usize];
    SimResult {
        estimate: mean,
        std_error: (var / n).sqrt(),
        terminal_second_moment: outcomes.iter().map(|o| o.terminal_sq).sum::<f64>() / n,
        quantiles: Quantiles { p05: q(0.05), p50: q(0.5), p95: q(0.95) },
        paths: outcomes.len(),
        steps,
        tail_bound: None,
    }
}

/// Lyapunov bound weight `‖W‖₂` with `W` solving the closed-loop Lyapunov
/// equation for the running cost `Q + SᵀΘ + ΘᵀS + ΘᵀRΘ`.
fn tail_weight(sys: &ControlledSystem, w: &CostWeights, theta: &Matrix) -> Option<f64> {
    let closed = sys.closed_loop(theta).ok()?;
    let qc = w.q.as_matrix() + w.s.transpose() * theta + theta.transpose() * &w.s + theta.transpose() * w.r.as_matrix() * theta;
    let wm = solve_lyapunov(&closed, &SymMatrix::symmetrize(qc)).ok()?;
    Some(spectral_norm(wm.as_matrix()))
}

/// Estimates the truncated cost of `u = ΘX + v(t)` from `x`.
pub fn simulate_feedback(
    sys: &ControlledSystem,
    w: &CostWeights,
    theta: &Matrix,
    v: &[Vector],
    g: Option<&InhomogeneityGrid>,
    x: &Vector,
    cfg: &SimConfig,
) -> Result<SimResult> {
    if x.len() != sys.n() {
        return Err(Error::DimensionMismatch(format!("x must have length {}", sys.n())));
    }
    let kernel = Kernel::new(sys, w, theta, v, g, cfg)?;
    let outcomes: Vec<PathOutcome> = (0..cfg.paths)
        .into_par_iter()
        .map(|p| kernel.run_path(x.as_slice(), cfg.seed, p, None, None, |_, _| {}))
        .collect();
    let mut res = summarize(&outcomes, kernel.steps);
    let support_done = g.map_or(true, |g| g.final_time() <= cfg.horizon + 1e-12);
    if cfg.report_tail && support_done {
        res.tail_bound = tail_weight(sys, w, theta).map(|k| k * res.terminal_second_moment);
    }
    Ok(res)
}

/// `v*` on the simulation grid, evaluated at the left end of each step
/// within the forcing interval containing the step.
pub fn control_path(terms: &AffineTerms, cfg: &SimConfig) -> Result<ControlPath> {
    let steps = cfg.steps()?;
    check_grid_alignment(&terms.grid, cfg.dt)?;
    let m = terms.v.first().map(|v| v.len()).unwrap_or(0);
    (0..steps)
        .map(|j| {
            let t = j as f64 * cfg.dt;
            match terms.grid.interval_of((j as f64 + 0.5) * cfg.dt) {
                Some(k) => terms.v_in(k, t),
                None => Ok(Vector::zeros(m)),
            }
        })
        .collect()
}

/// Closed-loop simulation with the optimal pair `(Θ*, v*)`.
pub fn simulate_closed_loop(
    sys: &ControlledSystem,
    w: &CostWeights,
    sol: &GareSolution,
    terms: Option<&AffineTerms>,
    x: &Vector,
    cfg: &SimConfig,
) -> Result<SimResult> {
    let v = match terms {
        Some(t) => control_path(t, cfg)?,
        None => vec![Vector::zeros(sys.m()); cfg.steps()?],
    };
    simulate_feedback(sys, w, &sol.theta, &v, terms.map(|t| &t.grid), x, cfg)
}

/// Simulation under a deterministic open-loop control.
pub fn simulate_open_loop(
    sys: &ControlledSystem,
    w: &CostWeights,
    u: &[Vector],
    g: Option<&InhomogeneityGrid>,
    x: &Vector,
    cfg: &SimConfig,
) -> Result<SimResult> {
    let zero = Matrix::zeros(sys.m(), sys.n());
    let mut res = simulate_feedback(sys, w, &zero, u, g, x, cfg)?;
    if !u.iter().all(|v| v.iter().all(|e| *e == 0.0)) {
        res.tail_bound = None;
    }
    Ok(res)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParametrizationReport {
    /// `max ‖X(t) − X_Θ(t)‖` over all steps and paths.
    pub max_deviation: f64,
    pub paths: usize,
    pub steps: usize,
}

/// Simulates `X_Θ` under `u = ΘX_Θ + v`, replays the realized `u` through the
/// uncontrolled-form state equation with the same noise, and compares states.
pub fn feedback_parametrization_check(
    sys: &ControlledSystem,
    theta: &Matrix,
    v: &[Vector],
    g: Option<&InhomogeneityGrid>,
    x: &Vector,
    cfg: &SimConfig,
) -> Result<ParametrizationReport> {
    if x.len() != sys.n() {
        return Err(Error::DimensionMismatch(format!("x must have length {}", sys.n())));
    }
    let w = CostWeights::standard(sys.n(), sys.m());
    let feedback = Kernel::new(sys, &w, theta, v, g, cfg)?;
    let zero_v = vec![Vector::zeros(sys.m()); feedback.steps];
    let raw = Kernel::new(sys, &w, &Matrix::zeros(sys.m(), sys.n()), &zero_v, g, cfg)?;
    let n = sys.n();
    let deviations: Vec<f64> = (0..cfg.paths)
        .into_par_iter()
        .map(|p| {
            let mut controls = Vec::with_capacity(feedback.steps * sys.m());
            let mut states = Vec::with_capacity(feedback.steps * n);
            feedback.run_path(x.as_slice(), cfg.seed, p, Some(&mut controls), None, |_, s| states.extend_from_slice(s));
            let mut worst: f64 = 0.0;
            raw.run_path(x.as_slice(), cfg.seed, p, None, Some(&controls), |j, s| {
                let reference = &states[(j - 1) * n..j * n];
                let d = s.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                worst = worst.max(d);
            });
            worst
        })
        .collect();
    Ok(ParametrizationReport {
        max_deviation: deviations.into_iter().fold(0.0, f64::max),
        paths: cfg.paths,
        steps: feedback.steps,
    })
}

/// Second-moment time constant of `[A + BΘ, C + DΘ]`.
pub fn closed_loop_time_constant(sys: &ControlledSystem, theta: &Matrix) -> Result<f64> {
    let closed = sys.closed_loop(theta)?;
    second_moment_time_constant(&closed)
        .ok_or_else(|| Error::Precondition("feedback gain is not a stabilizer".into()))
}
