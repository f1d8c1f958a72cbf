//! Closed-form solution of the scalar problem (`n = m = 1`).
//!
//! The control is rescaled so that `B = 1` when `D = 0` and `D = 1`
//! otherwise; results are mapped back to the original control scale.

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative tolerance for the exact equalities of the degenerate cases.
pub const EQ_REL_TOL: f64 = 1e-12;

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= EQ_REL_TOL * 1f64.max(a.abs()).max(b.abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Case1d {
    #[serde(rename = "D0-R-negative")]
    D0RNegative,
    #[serde(rename = "D0-R-zero")]
    D0RZero,
    #[serde(rename = "D0-R-positive")]
    D0RPositive,
    #[serde(rename = "D1-degenerate")]
    D1Degenerate,
    #[serde(rename = "D1-case-ii")]
    D1CaseII,
    #[serde(rename = "D1-case-iii")]
    D1CaseIII,
    #[serde(rename = "D1-case-iv")]
    D1CaseIV,
    #[serde(rename = "unsolvable")]
    Unsolvable,
    #[serde(rename = "not-stabilizable")]
    NotStabilizable,
}

/// Closed-loop optimal gains, in the original control scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StrategySet {
    Unique { theta: f64 },
    /// `{Θ : |Θ − center| < radius}`, any `v`.
    Ball { center: f64, radius: f64 },
    /// `{Θ : Θ < bound}` (or `Θ > bound` when `below` is false), any `v`.
    HalfLine { bound: f64, below: bool },
}

impl StrategySet {
    pub fn contains(&self, theta: f64, tol: f64) -> bool {
        match *self {
            StrategySet::Unique { theta: t } => (theta - t).abs() <= tol,
            StrategySet::Ball { center, radius } => (theta - center).abs() < radius,
            StrategySet::HalfLine { bound, below } => {
                if below {
                    theta < bound
                } else {
                    theta > bound
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Aux1d {
    /// `2A + C²`.
    pub k: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// `R(2A + C²)² − 4S(2A + C²) + 4Q` in the `D = 0` normalization.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Discriminant of the quadratic the solution is a root of.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Both candidate roots `y = R + P` for `D ≠ 0`, smaller first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roots: Option<(f64, f64)>,
    /// Gains induced by the two roots, original scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root_gains: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Oracle1dResult {
    pub case: Case1d,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// The unique gain, or the canonical element of the strategy set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategies: Option<StrategySet>,
    pub aux: Aux1d,
}

impl Oracle1dResult {
    pub fn is_solvable(&self) -> bool {
        self.p.is_some()
    }

    fn unsolvable(case: Case1d, aux: Aux1d) -> Self {
        Self { case, p: None, theta: None, strategies: None, aux }
    }
}

/// `(2A + C²)D² < (B + CD)²`.
pub fn is_stabilizable_1d(a: f64, c: f64, b: f64, d: f64) -> bool {
    (2.0 * a + c * c) * d * d < (b + c * d).powi(2)
}

fn validate(vals: &[f64]) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("scalar coefficients must be finite".into()))
    }
}

pub fn solve_1d(a: f64, c: f64, b: f64, d: f64, q: f64, s: f64, r: f64) -> Result<Oracle1dResult> {
    validate(&[a, c, b, d, q, s, r])?;
    if b == 0.0 && d == 0.0 {
        return Err(Error::UnsupportedInput("B = D = 0: no control authority; use the stability check".into()));
    }
    let k = 2.0 * a + c * c;
    if !is_stabilizable_1d(a, c, b, d) {
        return Ok(Oracle1dResult::unsolvable(Case1d::NotStabilizable, Aux1d { k, ..Aux1d::default() }));
    }
    if d == 0.0 {
        Ok(solve_d0(k, q, s / b, r / (b * b), b))
    } else {
        Ok(solve_d1(a, c, b, d, q, s, r))
    }
}

// D = 0, B normalized to 1; gains scale back by 1/b.
fn solve_d0(k: f64, q: f64, s: f64, r: f64, b: f64) -> Oracle1dResult {
    let mut aux = Aux1d { k, ..Aux1d::default() };
    let half_line = StrategySet::HalfLine { bound: -k / (2.0 * b), below: b > 0.0 };
    if approx_eq(r, 0.0) {
        if !approx_eq(q, s * k) {
            return Oracle1dResult::unsolvable(Case1d::D0RZero, aux);
        }
        return Oracle1dResult {
            case: Case1d::D0RZero,
            p: Some(-s),
            theta: Some((-k / 2.0 - 1.0) / b),
            strategies: Some(half_line),
            aux,
        };
    }
    if r < 0.0 {
        return Oracle1dResult::unsolvable(Case1d::D0RNegative, aux);
    }
    let sigma = r * k * k - 4.0 * s * k + 4.0 * q;
    let delta = r * sigma;
    aux.sigma = Some(sigma);
    aux.delta = Some(delta);
    if sigma <= 0.0 {
        return Oracle1dResult::unsolvable(Case1d::D0RPositive, aux);
    }
    let p = (k * r - 2.0 * s + delta.sqrt()) / 2.0;
    let theta = -(k + (sigma / r).sqrt()) / 2.0 / b;
    Oracle1dResult {
        case: Case1d::D0RPositive,
        p: Some(p),
        theta: Some(theta),
        strategies: Some(StrategySet::Unique { theta }),
        aux,
    }
}

/// Quantities of the `D = 1` normalization: `α, β, γ` and `s = B + C`.
#[derive(Clone, Copy, Debug)]
struct D1Data {
    k: f64,
    s: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl D1Data {
    fn new(a: f64, c: f64, b: f64, q: f64, s_w: f64, r: f64) -> Self {
        let k = 2.0 * a + c * c;
        let s = b + c;
        Self { k, s, alpha: s * s - k, beta: q - k * r + 2.0 * s * (s * r - s_w), gamma: (s * r - s_w).powi(2) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdCheck {
    /// Whether the sign condition selecting this case holds.
    pub applies: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// `applies` and `R` strictly above the threshold.
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseExplanation {
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub degenerate: bool,
    pub case_ii: ThresholdCheck,
    pub case_iii: ThresholdCheck,
    pub case_iv: ThresholdCheck,
    /// The equivalent reformulation `β > 0` and `β² − 4αγ > 0`.
    pub beta_delta_positive: bool,
    pub case: Case1d,
}

fn explain_normalized(a: f64, c: f64, b: f64, q: f64, s_w: f64, r: f64) -> CaseExplanation {
    let dd = D1Data::new(a, c, b, q, s_w, r);
    let (k, s) = (dd.k, dd.s);
    let sa = dd.alpha.sqrt();
    let delta = dd.beta * dd.beta - 4.0 * dd.alpha * dd.gamma;
    let degenerate = approx_eq(q, k * r) && approx_eq(s_w, s * r);
    let k_zero = approx_eq(k, 0.0);
    let threshold = |root: f64| (2.0 * root * s_w - q) / (root * root);
    let check = |applies: bool, th: f64| ThresholdCheck { applies, threshold: Some(th), holds: applies && r > th };
    let case_ii = check(!k_zero && k * s_w >= s * q, threshold(s - sa));
    let case_iii = check(!k_zero && k * s_w < s * q, threshold(s + sa));
    let th_iv = (4.0 * s * s_w - q) / (4.0 * s * s);
    let case_iv = ThresholdCheck { applies: k_zero && q > 0.0, threshold: Some(th_iv), holds: k_zero && q > 0.0 && r > th_iv };
    let case = if degenerate {
        Case1d::D1Degenerate
    } else if case_ii.holds {
        Case1d::D1CaseII
    } else if case_iii.holds {
        Case1d::D1CaseIII
    } else if case_iv.holds {
        Case1d::D1CaseIV
    } else {
        Case1d::Unsolvable
    };
    CaseExplanation {
        k,
        alpha: dd.alpha,
        beta: dd.beta,
        gamma: dd.gamma,
        delta,
        degenerate,
        case_ii,
        case_iii,
        case_iv,
        beta_delta_positive: dd.beta > 0.0 && delta > 0.0,
        case,
    }
}

/// Evaluates each case condition of the `D ≠ 0` classification.
pub fn classify_1d_cases(a: f64, c: f64, b: f64, d: f64, q: f64, s: f64, r: f64) -> Result<CaseExplanation> {
    validate(&[a, c, b, d, q, s, r])?;
    if d == 0.0 {
        return Err(Error::Precondition("the case classification needs D ≠ 0".into()));
    }
    let ex = explain_normalized(a, c, b / d, q, s / d, r / (d * d));
    if ex.alpha <= 0.0 {
        return Err(Error::NotStabilizable);
    }
    Ok(ex)
}

// D normalized to 1; gains scale back by 1/d.
/// Larger root of `αP² − βP + γ = 0` (`α > 0`), free of cancellation.
fn larger_root(alpha: f64, beta: f64, gamma: f64) -> Option<(f64, f64)> {
    let disc = beta * beta - 4.0 * alpha * gamma;
    // a double root may round to a slightly negative discriminant
    if disc < -EQ_REL_TOL * (beta * beta + (4.0 * alpha * gamma).abs()) {
        return None;
    }
    let sq = disc.max(0.0).sqrt();
    let (hi, lo) = if beta >= 0.0 {
        let hi = (beta + sq) / (2.0 * alpha);
        (hi, if hi != 0.0 { gamma / (alpha * hi) } else { 0.0 })
    } else {
        let lo = (beta - sq) / (2.0 * alpha);
        (if lo != 0.0 { gamma / (alpha * lo) } else { 0.0 }, lo)
    };
    Some((lo, hi))
}

// The case split uses the `D = 1` normalization; `P` and `Θ` come from the
// Riccati quadratic in the original scale, which stays accurate for small `|D|`.
fn solve_d1(a: f64, c: f64, b: f64, d: f64, q: f64, s_w: f64, r: f64) -> Oracle1dResult {
    let (bn, sn, rn) = (b / d, s_w / d, r / (d * d));
    let ex = explain_normalized(a, c, bn, q, sn, rn);
    let dd = D1Data::new(a, c, bn, q, sn, rn);
    let k = dd.k;
    let bc = b + c * d;
    // (bc² − kd²)P² − (kR + qd² − 2 bc S)P + S² − qR = 0
    let quad = larger_root(bc * bc - k * d * d, k * r + q * d * d - 2.0 * bc * s_w, s_w * s_w - q * r);
    let gain = |p: f64| -(bc * p + s_w) / (r + d * d * p);
    let mut aux = Aux1d {
        k,
        alpha: Some(dd.alpha),
        beta: Some(dd.beta),
        gamma: Some(dd.gamma),
        delta: Some(ex.delta),
        ..Aux1d::default()
    };
    if let Some((p1, p2)) = quad {
        aux.roots = Some((p1 + rn, p2 + rn));
        aux.root_gains = Some((gain(p1), gain(p2)));
    }
    match (ex.case, quad) {
        (Case1d::D1Degenerate, _) => Oracle1dResult {
            case: ex.case,
            p: Some(-rn),
            theta: Some(-dd.s / d),
            strategies: Some(StrategySet::Ball { center: -dd.s / d, radius: dd.alpha.sqrt() / d.abs() }),
            aux,
        },
        (Case1d::D1CaseII | Case1d::D1CaseIII | Case1d::D1CaseIV, Some((_, p))) => {
            let theta = gain(p);
            Oracle1dResult { case: ex.case, p: Some(p), theta: Some(theta), strategies: Some(StrategySet::Unique { theta }), aux }
        }
        _ => Oracle1dResult::unsolvable(Case1d::Unsolvable, aux),
    }
}
