//! Instance generators shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stochlq::linalg::{Matrix, SymMatrix, Vector};
use stochlq::riccati::CostWeights;
use stochlq::stability::ControlledSystem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.gen_range(-scale..scale))
}

/// `r×c` with rank at most `k`.
pub fn low_rank(rng: &mut ChaCha8Rng, r: usize, c: usize, k: usize) -> Matrix {
    random_matrix(rng, r, k, 1.0) * random_matrix(rng, k, c, 1.0)
}

/// Random orthogonal matrix (Q factor of a Gaussian-like matrix).
pub fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    random_matrix(rng, n, n, 1.0).qr().q()
}

/// `r×c` with the given nonzero singular values and random singular vectors.
pub fn with_singular_values(rng: &mut ChaCha8Rng, r: usize, c: usize, s: &[f64]) -> Matrix {
    let (u, v) = (orthogonal(rng, r), orthogonal(rng, c));
    let mut sig = Matrix::zeros(r, c);
    for (k, &x) in s.iter().enumerate() {
        sig[(k, k)] = x;
    }
    u * sig * v.transpose()
}

pub fn random_sym(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> SymMatrix {
    let m = random_matrix(rng, n, n, scale);
    SymMatrix::new((&m + m.transpose()) * 0.5).unwrap()
}

pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> SymMatrix {
    let m = random_matrix(rng, n, n, 1.0);
    SymMatrix::new(&m * m.transpose() + Matrix::identity(n, n) * shift).unwrap()
}

pub fn sys(a: Matrix, c: Matrix, b: Matrix, d: Matrix) -> ControlledSystem {
    ControlledSystem::new(a, c, b, d).unwrap()
}

pub fn weights(q: Matrix, s: Matrix, r: Matrix) -> CostWeights {
    CostWeights::new(SymMatrix::new(q).unwrap(), s, SymMatrix::new(r).unwrap()).unwrap()
}

pub fn diag(v: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_column_slice(v))
}

/// Scalar instance with `𝓝(P) = 0` at the static stabilizing solution
/// `P = −R/D²`: `S` and `Q` are chosen so that `𝓛(P) = 0` and `𝓜(P) = 0`.
/// Returns `None` when `[A, C; B, D]` is not stabilizable.
pub fn degenerate_scalar(a: f64, c: f64, b: f64, d: f64, r: f64) -> Option<(ControlledSystem, CostWeights, f64)> {
    if (2.0 * a + c * c) * d * d >= (b + c * d).powi(2) || d == 0.0 {
        return None;
    }
    let p = -r / (d * d);
    let s = -(b + c * d) * p;
    let q = -(2.0 * a + c * c) * p;
    Some((ControlledSystem::scalar(a, c, b, d), CostWeights::scalar(q, s, r), p))
}

/// The decoupled two-dimensional problem whose diagonal blocks are the given
/// scalar problems.
pub fn decoupled(blocks: &[(ControlledSystem, CostWeights)]) -> (ControlledSystem, CostWeights) {
    let pick = |f: &dyn Fn(&(ControlledSystem, CostWeights)) -> f64| diag(&blocks.iter().map(f).collect::<Vec<_>>());
    let s = sys(
        pick(&|b| b.0.a[(0, 0)]),
        pick(&|b| b.0.c[(0, 0)]),
        pick(&|b| b.0.b[(0, 0)]),
        pick(&|b| b.0.d[(0, 0)]),
    );
    let w = weights(
        pick(&|b| b.1.q.as_matrix()[(0, 0)]),
        pick(&|b| b.1.s[(0, 0)]),
        pick(&|b| b.1.r.as_matrix()[(0, 0)]),
    );
    (s, w)
}

/// Stabilizable random system of the given size: `B` has full column
/// rank generically and `A` is shifted to keep the drift moderate.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize) -> ControlledSystem {
    let a = random_matrix(rng, n, n, 1.0) - Matrix::identity(n, n) * uniform(rng, -0.5, 1.0);
    let c = random_matrix(rng, n, n, 0.5);
    let b = random_matrix(rng, n, m, 1.0) + Matrix::identity(n, m);
    let d = random_matrix(rng, n, m, 0.5);
    sys(a, c, b, d)
}

/// Homogeneous instances with moderate closed-loop time constants used by the
/// Monte Carlo checks: ten scalar, five two-dimensional, each with its `x0`.
pub fn damped_instances() -> Vec<(ControlledSystem, CostWeights, Vector)> {
    let s1 = |a, c, b, d, q, s, r| (ControlledSystem::scalar(a, c, b, d), CostWeights::scalar(q, s, r), Vector::from_element(1, 1.0));
    let mut out = vec![
        s1(-1.0, 0.3, 1.0, 0.5, 1.0, 0.0, 1.0),
        s1(0.5, 0.4, 1.0, 0.0, 1.0, 0.2, 0.5),
        s1(0.2, 0.5, 1.5, 0.3, 2.0, -0.3, 1.0),
        s1(-0.5, 0.0, 1.0, 0.8, 0.5, 0.1, 0.3),
        s1(0.0, 0.6, -1.0, 0.4, 1.0, 0.0, 2.0),
        s1(-2.0, 1.0, 0.5, 0.3, 3.0, 0.5, 1.0),
        s1(0.3, 0.2, 2.0, -0.5, 1.0, -0.4, 0.8),
        // indefinite: Q < 0 offset by a strong R
        s1(-1.5, 0.2, 1.0, 0.6, -0.3, 0.0, 1.0),
        // indefinite: R < 0 made positive by the noise channel
        s1(-1.0, 0.5, 0.5, 1.0, 2.0, 0.0, -0.2),
        s1(-0.2, 0.7, 0.8, 0.6, 1.5, 0.3, 0.4),
    ];
    let two = |a: [f64; 4], c: [f64; 4], b: [f64; 2], d: [f64; 2], q: [f64; 4], s: [f64; 2], r: f64, x: [f64; 2]| {
        (
            sys(
                Matrix::from_row_slice(2, 2, &a),
                Matrix::from_row_slice(2, 2, &c),
                Matrix::from_row_slice(2, 1, &b),
                Matrix::from_row_slice(2, 1, &d),
            ),
            weights(Matrix::from_row_slice(2, 2, &q), Matrix::from_row_slice(1, 2, &s), Matrix::from_element(1, 1, r)),
            Vector::from_column_slice(&x),
        )
    };
    out.push(two([-1.0, 0.5, 0.0, -0.5], [0.3, 0.0, 0.0, 0.2], [0.0, 1.0], [0.2, 0.0], [1.0, 0.0, 0.0, 1.0], [0.0, 0.0], 1.0, [1.0, -0.5]));
    out.push(two([0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.2, 0.0], [0.0, 1.0], [0.0, 0.3], [1.0, 0.0, 0.0, 0.5], [0.1, 0.0], 1.0, [1.0, 0.0]));
    out.push(two([-0.5, 0.2, -0.3, -1.0], [0.4, 0.1, 0.0, 0.3], [1.0, 0.5], [0.3, -0.2], [2.0, 0.3, 0.3, 1.0], [0.2, -0.1], 0.5, [0.5, 1.0]));
    out.push(two([0.2, 0.0, 0.5, -0.8], [0.2, 0.0, 0.0, 0.2], [1.0, 0.0], [0.0, 0.5], [1.0, -0.2, -0.2, 1.0], [0.0, 0.0], 0.7, [1.0, 1.0]));
    out.push(two([-1.0, 0.0, 0.0, -1.0], [0.5, 0.0, 0.0, 0.5], [1.0, 1.0], [0.5, -0.5], [1.0, 0.0, 0.0, -0.2], [0.0, 0.0], 1.0, [1.0, -1.0]));
    out
}
