//! Affine terms of the optimal strategy under deterministic, piecewise-constant,
//! compactly supported forcing `b, σ, q, ρ`.
//!
//! With deterministic data the martingale part vanishes (`ζ ≡ 0`) and `η` is the
//! decaying solution of `dη/dt = −[(A + BΘ)ᵀη + φ(t)]`,
//! `φ = (C + DΘ)ᵀPσ + Θᵀρ + Pb + q`, i.e.
//! `η(t) = ∫_t^∞ e^{(A + BΘ)ᵀ(s − t)} φ(s) ds`.

use crate::error::{Error, Result};
use crate::linalg::{expm_with_integral, Matrix, Vector};
use crate::riccati::{CostWeights, GareMaps, GareSolution};
use crate::stability::ControlledSystem;

/// Default tolerance of the pointwise range test, relative to `1 + ‖w‖`.
pub const RANGE_TOL: f64 = 1e-6;

/// Piecewise-constant forcing on `[t_k, t_{k+1})`, zero from `t_K` on.
#[derive(Clone, Debug, PartialEq)]
pub struct InhomogeneityGrid {
    pub times: Vec<f64>,
    pub b: Vec<Vector>,
    pub sigma: Vec<Vector>,
    pub q: Vec<Vector>,
    pub rho: Vec<Vector>,
}

fn check_values(v: &[Vector], k: usize, dim: usize, name: &str) -> Result<()> {
    if v.len() != k {
        return Err(Error::DimensionMismatch(format!("{name}: expected {k} intervals, got {}", v.len())));
    }
    if let Some(bad) = v.iter().find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch(format!("{name}: expected length {dim}, got {}", bad.len())));
    }
    if v.iter().any(|x| x.iter().any(|e| !e.is_finite())) {
        return Err(Error::InvalidInput(format!("{name}: non-finite entry")));
    }
    Ok(())
}

impl InhomogeneityGrid {
    pub fn new(times: Vec<f64>, b: Vec<Vector>, sigma: Vec<Vector>, q: Vec<Vector>, rho: Vec<Vector>) -> Result<Self> {
        if times.first() != Some(&0.0) {
            return Err(Error::InvalidInput("inhomogeneity grid must start at t = 0".into()));
        }
        if times.iter().any(|t| t.is_nan()) {
            return Err(Error::InvalidInput("inhomogeneity grid contains NaN".into()));
        }
        if times.iter().any(|t| t.is_infinite()) {
            return Err(Error::UnsupportedInput("forcing must have compact support (finite final time)".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("inhomogeneity grid must be strictly increasing".into()));
        }
        let k = times.len() - 1;
        let n = b.first().map(|v| v.len()).unwrap_or(0);
        let m = rho.first().map(|v| v.len()).unwrap_or(0);
        check_values(&b, k, n, "b")?;
        check_values(&sigma, k, n, "sigma")?;
        check_values(&q, k, n, "q")?;
        check_values(&rho, k, m, "rho")?;
        Ok(Self { times, b, sigma, q, rho })
    }

    /// Zero forcing on the given grid.
    pub fn zeros(times: Vec<f64>, n: usize, m: usize) -> Result<Self> {
        let k = times.len().saturating_sub(1);
        Self::new(times, vec![Vector::zeros(n); k], vec![Vector::zeros(n); k], vec![Vector::zeros(n); k], vec![Vector::zeros(m); k])
    }

    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("grid is non-empty")
    }

    pub fn state_dim(&self) -> Option<usize> {
        self.b.first().map(|v| v.len())
    }

    pub fn control_dim(&self) -> Option<usize> {
        self.rho.first().map(|v| v.len())
    }

    /// Index `k` with `t ∈ [t_k, t_{k+1})`, `None` outside the support.
    pub fn interval_of(&self, t: f64) -> Option<usize> {
        if !(t >= 0.0) || t >= self.final_time() {
            return None;
        }
        Some(self.times.partition_point(|&s| s <= t) - 1)
    }

    pub fn is_zero(&self) -> bool {
        [&self.b, &self.sigma, &self.q, &self.rho].iter().all(|vs| vs.iter().all(|v| v.iter().all(|e| *e == 0.0)))
    }

    /// All forcing terms multiplied by `f`.
    pub fn scaled(&self, f: f64) -> Self {
        let sc = |vs: &[Vector]| vs.iter().map(|v| v * f).collect();
        Self { times: self.times.clone(), b: sc(&self.b), sigma: sc(&self.sigma), q: sc(&self.q), rho: sc(&self.rho) }
    }

    /// The same forcing delayed by `delta > 0` (zero on `[0, delta)`).
    pub fn shifted(&self, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidInput("shift must be positive and finite".into()));
        }
        let mut times = vec![0.0];
        times.extend(self.times.iter().map(|t| t + delta));
        let pre = |vs: &[Vector], dim: usize| {
            let mut out = vec![Vector::zeros(dim)];
            out.extend(vs.iter().cloned());
            out
        };
        let n = self.state_dim().unwrap_or(0);
        let m = self.control_dim().unwrap_or(0);
        Self::new(times, pre(&self.b, n), pre(&self.sigma, n), pre(&self.q, n), pre(&self.rho, m))
    }
}

/// `η`, `v*` and the value for a fixed GARE solution and forcing. `ζ ≡ 0`.
#[derive(Clone, Debug)]
pub struct AffineTerms {
    pub grid: InhomogeneityGrid,
    /// `η(t_k)`, `k = 0..=K`; `η(t_K) = 0`.
    pub eta: Vec<Vector>,
    /// `v*(t_k)` with the forcing of interval `k` (right limits); `v*(t_K) = 0`.
    pub v: Vec<Vector>,
    /// Free term `ν` of `v*` on each interval.
    pub nu: Vec<Vector>,
    pub phi: Vec<Vector>,
    /// Largest pointwise range defect over grid points and midpoints.
    pub range_defect: f64,
    pub range_ok: bool,
    closed_loop_t: Matrix,
    b: Matrix,
    d: Matrix,
    p: Matrix,
    n: Matrix,
    n_pinv: Matrix,
}

pub fn solve_eta(sys: &ControlledSystem, w: &CostWeights, sol: &GareSolution, g: &InhomogeneityGrid) -> Result<AffineTerms> {
    solve_eta_with_nu(sys, w, sol, g, None)
}

/// As [`solve_eta`] with a user-chosen `ν` (one vector per interval) in
/// `v* = −𝓝†(Bᵀη + DᵀPσ + ρ) + (I − 𝓝†𝓝)ν`.
pub fn solve_eta_with_nu(
    sys: &ControlledSystem,
    w: &CostWeights,
    sol: &GareSolution,
    g: &InhomogeneityGrid,
    nu: Option<&[Vector]>,
) -> Result<AffineTerms> {
    let (n, m) = (sys.n(), sys.m());
    let kk = g.intervals();
    if g.state_dim().is_some_and(|d| d != n) || g.control_dim().is_some_and(|d| d != m) {
        return Err(Error::DimensionMismatch(format!("inhomogeneity must have state dimension {n} and control dimension {m}")));
    }
    let nu: Vec<Vector> = match nu {
        Some(v) => {
            check_values(v, kk, m, "nu")?;
            v.to_vec()
        }
        None => vec![Vector::zeros(m); kk],
    };
    let theta = &sol.theta;
    let p = sol.p.as_matrix();
    let closed = sys.closed_loop(theta)?;
    let mt = closed.a.transpose();
    let ct = closed.c.transpose();
    let phi: Vec<Vector> =
        (0..kk).map(|k| &ct * p * &g.sigma[k] + theta.transpose() * &g.rho[k] + p * &g.b[k] + &g.q[k]).collect();

    let mut eta = vec![Vector::zeros(n); kk + 1];
    for k in (0..kk).rev() {
        let tau = g.times[k + 1] - g.times[k];
        let (e, f) = expm_with_integral(&mt, tau)?;
        eta[k] = &e * &eta[k + 1] + &f * &phi[k];
    }
    let mut terms = AffineTerms {
        grid: g.clone(),
        eta,
        v: Vec::new(),
        nu,
        phi,
        range_defect: 0.0,
        range_ok: true,
        closed_loop_t: mt,
        b: sys.b.clone(),
        d: sys.d.clone(),
        p: p.clone(),
        n: GareMaps::at(sys, w, &sol.p).n.into_matrix(),
        n_pinv: sol.n_pinv.as_matrix().clone(),
    };
    terms.v = (0..=kk).map(|k| terms.v_at(g.times[k])).collect::<Result<_>>()?;
    let (defect, ok) = terms.range_check(RANGE_TOL)?;
    terms.range_defect = defect;
    terms.range_ok = ok;
    Ok(terms)
}

impl AffineTerms {
    /// `η(t)`, exact on each interval.
    pub fn eta_at(&self, t: f64) -> Result<Vector> {
        match self.grid.interval_of(t) {
            Some(k) => self.eta_in(k, t),
            None => Ok(Vector::zeros(self.closed_loop_t.nrows())),
        }
    }

    /// `η(t)` from the representation on interval `k` (which should contain `t`).
    pub fn eta_in(&self, k: usize, t: f64) -> Result<Vector> {
        let tau = self.grid.times[k + 1] - t;
        let (e, f) = expm_with_integral(&self.closed_loop_t, tau)?;
        Ok(&e * &self.eta[k + 1] + &f * &self.phi[k])
    }

    /// `w(t) = Bᵀη(t) + DᵀPσ(t) + ρ(t)`.
    pub fn w_at(&self, t: f64) -> Result<Vector> {
        match self.grid.interval_of(t) {
            Some(k) => self.w_in(k, t),
            None => Ok(Vector::zeros(self.b.ncols())),
        }
    }

    fn w_in(&self, k: usize, t: f64) -> Result<Vector> {
        let eta = self.eta_in(k, t)?;
        Ok(self.b.transpose() * eta + self.d.transpose() * &self.p * &self.grid.sigma[k] + &self.grid.rho[k])
    }

    pub fn v_at(&self, t: f64) -> Result<Vector> {
        match self.grid.interval_of(t) {
            Some(k) => self.v_in(k, t),
            None => Ok(Vector::zeros(self.b.ncols())),
        }
    }

    /// `v*(t) = −𝓝†w(t) + (I − 𝓝†𝓝)ν_k` on interval `k`.
    pub fn v_in(&self, k: usize, t: f64) -> Result<Vector> {
        let m = self.n.nrows();
        let free = (Matrix::identity(m, m) - &self.n_pinv * &self.n) * &self.nu[k];
        Ok(-(&self.n_pinv * self.w_in(k, t)?) + free)
    }

    fn range_check(&self, tol: f64) -> Result<(f64, bool)> {
        let mut worst: f64 = 0.0;
        let mut ok = true;
        let g = &self.grid;
        for k in 0..g.intervals() {
            for t in [g.times[k], 0.5 * (g.times[k] + g.times[k + 1])] {
                let w = self.w_at(t)?;
                let defect = (&w - &self.n * &self.n_pinv * &w).norm();
                worst = worst.max(defect);
                ok &= defect <= tol * (1.0 + w.norm());
            }
        }
        Ok((worst, ok))
    }

    /// Max of `‖dη/dt + (A + BΘ)ᵀη + φ‖ / (1 + max‖η‖)` at interior points,
    /// with `dη/dt` from a five-point central difference.
    pub fn ode_residual(&self) -> Result<f64> {
        let g = &self.grid;
        let scale = 1.0 + self.eta.iter().map(|e| e.norm()).fold(0.0, f64::max);
        let mut worst: f64 = 0.0;
        for k in 0..g.intervals() {
            let (t0, t1) = (g.times[k], g.times[k + 1]);
            let h = (1e-3 * (t1 - t0)).min(1e-3);
            for frac in [0.25, 0.5, 0.75] {
                let t = t0 + frac * (t1 - t0);
                let e = |s: f64| self.eta_at(s);
                let d = (-e(t + 2.0 * h)? + e(t + h)? * 8.0 - e(t - h)? * 8.0 + e(t - 2.0 * h)?) / (12.0 * h);
                let r = d + &self.closed_loop_t * e(t)? + &self.phi[k];
                worst = worst.max(r.norm() / scale);
            }
        }
        Ok(worst)
    }

    /// `V(x) = ⟨Px, x⟩ + 2⟨η(0), x⟩ + ∫₀^∞ [⟨Pσ, σ⟩ + 2⟨η, b⟩ − ⟨𝓝†w, w⟩] dt`.
    pub fn value(&self, x: &Vector) -> Result<f64> {
        if !self.range_ok {
            return Err(Error::ValueUndefined { defect: self.range_defect });
        }
        if x.len() != self.p.nrows() {
            return Err(Error::DimensionMismatch(format!("x must have length {}", self.p.nrows())));
        }
        let quad = (x.transpose() * &self.p * x)[(0, 0)];
        Ok(quad + 2.0 * self.eta[0].dot(x) + self.constant_term()?)
    }

    /// The `x`-independent part of the value.
    pub fn constant_term(&self) -> Result<f64> {
        let g = &self.grid;
        let rate = 1.0 + self.closed_loop_t.norm();
        let mut total = 0.0;
        for k in 0..g.intervals() {
            let (t0, t1) = (g.times[k], g.times[k + 1]);
            let panels = ((t1 - t0) * rate).ceil().max(1.0) as usize;
            let width = (t1 - t0) / panels as f64;
            let sig = &g.sigma[k];
            let psig = sig.dot(&(&self.p * sig));
            for j in 0..panels {
                let a = t0 + j as f64 * width;
                for (x, wgt) in GL8 {
                    let t = a + 0.5 * width * (1.0 + x);
                    let eta = self.eta_at(t)?;
                    let w = self.w_at(t)?;
                    let f = psig + 2.0 * eta.dot(&g.b[k]) - w.dot(&(&self.n_pinv * &w));
                    total += 0.5 * width * wgt * f;
                }
            }
        }
        Ok(total)
    }
}

/// Whether `Bᵀη + DᵀPσ + ρ ∈ ℛ(𝓝(P))` at every grid point and interval
/// midpoint, with the largest defect.
pub fn check_range_ez(terms: &AffineTerms, tol: f64) -> Result<(bool, f64)> {
    let (defect, ok) = terms.range_check(tol)?;
    Ok((ok, defect))
}

pub fn assemble_value(terms: &AffineTerms, x: &Vector) -> Result<f64> {
    terms.value(x)
}

// Gauss–Legendre nodes and weights of order 8 on [−1, 1].
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];
