//! Density dependent population models and their deterministic skeleton.
//!
//! A model is a finite list of jumps `j` with rate functions `λ_j`; the
//! process at level `n` moves `i -> i + j` at rate `n λ_j(i/n)`. Everything
//! the approximation needs from the deterministic side (the attracting
//! root `c`, `F'(c)`, `σ²(c)`, `v_c`, the `U` and `δ'₁` constants) lives in
//! [`Skeleton`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Step used for central differences when a rate has no analytic derivative.
pub const DIFF_STEP: f64 = 1e-6;
/// Bracket width at which bisection stops.
pub const ROOT_WIDTH: f64 = 1e-12;
/// Grid resolution for the sup/inf estimates stored in the skeleton.
const SKELETON_GRID: usize = 2001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("jump size 0 is not allowed")]
    ZeroJump,
    #[error("jump {0} listed twice")]
    DuplicateJump(i64),
    #[error("the unit jump +1 must be present")]
    MissingUnitJump,
    #[error("alpha must lie in (0, 1], got {0}")]
    BadAlpha(f64),
    #[error("delta must be positive, got {0}")]
    BadDelta(f64),
    #[error("bracket ({0}, {1}) is empty")]
    BadBracket(f64, f64),
    #[error("envelope constant for jump {0} is negative")]
    NegativeEnvelope(i64),
    #[error("drift has no sign change on ({lo}, {hi}): F(lo)={f_lo}, F(hi)={f_hi}")]
    NoRoot {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error("equilibrium {c} is not attracting: F'(c) = {f_prime}")]
    NonAttracting { c: f64, f_prime: f64 },
    #[error("variance rate at equilibrium {c} is not positive: {sigma2}")]
    DegenerateVariance { c: f64, sigma2: f64 },
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("unknown rate kind '{0}'")]
    UnknownRate(String),
    #[error("model '{model}' is missing parameter '{param}'")]
    MissingParam { model: String, param: String },
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A single rate function `λ_j`. Evaluation always clamps at zero.
#[derive(Clone)]
pub enum RateFn {
    /// `Σ_k coeffs[k] z^k`.
    Poly(Vec<f64>),
    /// `scale / (1 + slope·max(z, 0))`, a bounded rate that decreases in `z`.
    Hyperbolic { scale: f64, slope: f64 },
    /// User supplied function, optionally with its derivative.
    Custom { f: ScalarFn, df: Option<ScalarFn> },
}

impl fmt::Debug for RateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateFn::Poly(c) => f.debug_tuple("Poly").field(c).finish(),
            RateFn::Hyperbolic { scale, slope } => f
                .debug_struct("Hyperbolic")
                .field("scale", scale)
                .field("slope", slope)
                .finish(),
            RateFn::Custom { df, .. } => f
                .debug_struct("Custom")
                .field("has_derivative", &df.is_some())
                .finish(),
        }
    }
}

impl RateFn {
    pub fn constant(value: f64) -> Self {
        RateFn::Poly(vec![value])
    }

    pub fn linear(intercept: f64, slope: f64) -> Self {
        RateFn::Poly(vec![intercept, slope])
    }

    /// `β z (1 − z)`.
    pub fn logistic(beta: f64) -> Self {
        RateFn::Poly(vec![0.0, beta, -beta])
    }

    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        RateFn::Custom {
            f: Arc::new(f),
            df: None,
        }
    }

    pub fn custom_with_derivative<F, D>(f: F, df: D) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        RateFn::Custom {
            f: Arc::new(f),
            df: Some(Arc::new(df)),
        }
    }

    fn raw(&self, z: f64) -> f64 {
        match self {
            RateFn::Poly(c) => c.iter().rev().fold(0.0, |acc, &a| acc * z + a),
            RateFn::Hyperbolic { scale, slope } => scale / (1.0 + slope * z.max(0.0)),
            RateFn::Custom { f, .. } => f(z),
        }
    }

    /// Clamped rate `max(0, λ(z))`.
    pub fn eval(&self, z: f64) -> f64 {
        let v = self.raw(z);
        if v > 0.0 {
            v
        } else {
            0.0
        }
    }

    /// Analytic derivative of the clamped rate, when one is available.
    pub fn derivative(&self, z: f64) -> Option<f64> {
        if self.raw(z) < 0.0 {
            return Some(0.0);
        }
        match self {
            RateFn::Poly(c) => Some(
                c.iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (k, &a)| acc * z + k as f64 * a),
            ),
            RateFn::Hyperbolic { scale, slope } => {
                if z <= 0.0 {
                    Some(0.0)
                } else {
                    let d = 1.0 + slope * z;
                    Some(-scale * slope / (d * d))
                }
            }
            RateFn::Custom { df, .. } => df.as_ref().map(|d| d(z)),
        }
    }

    /// Analytic second derivative of the clamped rate, when available.
    pub fn second_derivative(&self, z: f64) -> Option<f64> {
        if self.raw(z) < 0.0 {
            return Some(0.0);
        }
        match self {
            RateFn::Poly(c) => Some(
                c.iter()
                    .enumerate()
                    .skip(2)
                    .rev()
                    .fold(0.0, |acc, (k, &a)| acc * z + (k * (k - 1)) as f64 * a),
            ),
            RateFn::Hyperbolic { scale, slope } => {
                if z <= 0.0 {
                    Some(0.0)
                } else {
                    let d = 1.0 + slope * z;
                    Some(2.0 * scale * slope * slope / (d * d * d))
                }
            }
            RateFn::Custom { .. } => None,
        }
    }

    /// First derivative, analytic if possible, else a central difference.
    pub fn slope_at(&self, z: f64) -> f64 {
        self.derivative(z).unwrap_or_else(|| {
            (self.eval(z + DIFF_STEP) - self.eval(z - DIFF_STEP)) / (2.0 * DIFF_STEP)
        })
    }

    /// Second derivative, analytic if possible, else a central difference.
    pub fn curvature_at(&self, z: f64) -> f64 {
        self.second_derivative(z).unwrap_or_else(|| {
            let h = 1e-4;
            (self.eval(z + h) - 2.0 * self.eval(z) + self.eval(z - h)) / (h * h)
        })
    }

    /// True when the rate is the same at every `z`.
    pub fn is_constant(&self) -> bool {
        match self {
            RateFn::Poly(c) => c.iter().skip(1).all(|&a| a == 0.0),
            RateFn::Hyperbolic { scale, slope } => *scale == 0.0 || *slope == 0.0,
            RateFn::Custom { .. } => false,
        }
    }
}

/// Serializable description of a registered rate kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RateSpec {
    Const { value: f64 },
    Linear { intercept: f64, slope: f64 },
    Logistic { beta: f64 },
    Poly { coeffs: Vec<f64> },
    Hyperbolic { scale: f64, slope: f64 },
}

impl From<&RateSpec> for RateFn {
    fn from(spec: &RateSpec) -> Self {
        match spec {
            RateSpec::Const { value } => RateFn::constant(*value),
            RateSpec::Linear { intercept, slope } => RateFn::linear(*intercept, *slope),
            RateSpec::Logistic { beta } => RateFn::logistic(*beta),
            RateSpec::Poly { coeffs } => RateFn::Poly(coeffs.clone()),
            RateSpec::Hyperbolic { scale, slope } => RateFn::Hyperbolic {
                scale: *scale,
                slope: *slope,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Jump {
    pub j: i64,
    pub rate: RateFn,
    /// Envelope constant `c_j` with `λ_j(z) ≤ c_j (1 + |z − c|)`.
    pub envelope: f64,
}

impl Jump {
    pub fn new(j: i64, rate: RateFn, envelope: f64) -> Self {
        Jump { j, rate, envelope }
    }
}

/// A density dependent Markov population process.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    jumps: Vec<Jump>,
    pub alpha: f64,
    pub bracket: (f64, f64),
    pub delta: f64,
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        jumps: Vec<Jump>,
        alpha: f64,
        bracket: (f64, f64),
        delta: f64,
    ) -> Result<Self, ModelError> {
        let mut seen = std::collections::BTreeSet::new();
        for jump in &jumps {
            if jump.j == 0 {
                return Err(ModelError::ZeroJump);
            }
            if !seen.insert(jump.j) {
                return Err(ModelError::DuplicateJump(jump.j));
            }
            if !(jump.envelope >= 0.0) {
                return Err(ModelError::NegativeEnvelope(jump.j));
            }
        }
        if !jumps.is_empty() && !seen.contains(&1) {
            return Err(ModelError::MissingUnitJump);
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(ModelError::BadAlpha(alpha));
        }
        if !(delta > 0.0) {
            return Err(ModelError::BadDelta(delta));
        }
        if !(bracket.0 < bracket.1) {
            return Err(ModelError::BadBracket(bracket.0, bracket.1));
        }
        let mut jumps = jumps;
        jumps.sort_by_key(|jump| jump.j);
        Ok(ModelSpec {
            name: name.into(),
            jumps,
            alpha,
            bracket,
            delta,
        })
    }

    /// Jumps sorted by jump size.
    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn jump(&self, j: i64) -> Option<&Jump> {
        self.jumps.iter().find(|jump| jump.j == j)
    }

    /// Clamped `λ_j(z)`, zero for jumps not in the model.
    pub fn rate(&self, j: i64, z: f64) -> f64 {
        self.jump(j).map_or(0.0, |jump| jump.rate.eval(z))
    }

    pub fn max_jump(&self) -> i64 {
        self.jumps
            .iter()
            .map(|jump| jump.j.abs())
            .max()
            .unwrap_or(0)
    }

    /// Average growth rate `F(z) = Σ j λ_j(z)`.
    pub fn drift(&self, z: f64) -> f64 {
        self.jumps
            .iter()
            .map(|jump| jump.j as f64 * jump.rate.eval(z))
            .sum()
    }

    /// Quadratic variation rate `σ²(z) = Σ j² λ_j(z)`.
    pub fn variance_rate(&self, z: f64) -> f64 {
        self.jumps
            .iter()
            .map(|jump| (jump.j * jump.j) as f64 * jump.rate.eval(z))
            .sum()
    }

    /// Overall jump rate `Λ(z) = Σ λ_j(z)`.
    pub fn total_rate(&self, z: f64) -> f64 {
        self.jumps.iter().map(|jump| jump.rate.eval(z)).sum()
    }

    /// `F'(z)`, analytic when every rate supplies a derivative.
    pub fn drift_slope(&self, z: f64) -> f64 {
        let analytic: Option<f64> = self
            .jumps
            .iter()
            .map(|jump| jump.rate.derivative(z).map(|d| jump.j as f64 * d))
            .sum();
        analytic.unwrap_or_else(|| {
            (self.drift(z + DIFF_STEP) - self.drift(z - DIFF_STEP)) / (2.0 * DIFF_STEP)
        })
    }

    /// `s_α = Σ |j|^{2+α} c_j`.
    pub fn s_alpha(&self) -> f64 {
        self.jumps
            .iter()
            .map(|jump| (jump.j.abs() as f64).powf(2.0 + self.alpha) * jump.envelope)
            .sum()
    }

    /// Look up a built-in model by registered name.
    pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<Self, ModelError> {
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        match name {
            "immigration-death" | "immigration_death" => {
                builtin::immigration_death(get("a", 1.0), get("b", 1.0))
            }
            "sis" | "logistic" => builtin::sis(get("beta", 2.0), get("gamma", 1.0)),
            "three-jump" | "three_jump" => {
                builtin::three_jump(get("a", 1.0), get("b", 1.0), get("kappa", 0.25))
            }
            "decreasing" => builtin::decreasing(get("up", 3.0), get("down", 2.0)),
            other => Err(ModelError::UnknownModel(other.to_string())),
        }
    }
}

/// Models shipped with the library; each has closed-form skeleton values.
pub mod builtin {
    use super::*;

    /// `λ₁ = a`, `λ₋₁(z) = b z`; equilibrium `Po(n a / b)`.
    pub fn immigration_death(a: f64, b: f64) -> Result<ModelSpec, ModelError> {
        let c = a / b;
        ModelSpec::new(
            "immigration-death",
            vec![
                Jump::new(1, RateFn::constant(a), a),
                Jump::new(-1, RateFn::linear(0.0, b), (b * c).max(b)),
            ],
            1.0,
            (0.0, 4.0 * c + 1.0),
            (c / 2.0).min(1.0),
        )
    }

    /// `λ₁(z) = β z (1 − z)`, `λ₋₁(z) = γ z`; `c = 1 − γ/β`.
    pub fn sis(beta: f64, gamma: f64) -> Result<ModelSpec, ModelError> {
        let c = 1.0 - gamma / beta;
        ModelSpec::new(
            "sis",
            vec![
                Jump::new(1, RateFn::logistic(beta), beta / 4.0),
                Jump::new(-1, RateFn::linear(0.0, gamma), (gamma * c).max(gamma)),
            ],
            1.0,
            (c / 2.0, (1.0 + c) / 2.0),
            (c.min(1.0 - c) / 2.0).min(1.0),
        )
    }

    /// Immigration–death plus a double immigration `λ₂ = κ`.
    pub fn three_jump(a: f64, b: f64, kappa: f64) -> Result<ModelSpec, ModelError> {
        let c = (a + 2.0 * kappa) / b;
        ModelSpec::new(
            "three-jump",
            vec![
                Jump::new(1, RateFn::constant(a), a),
                Jump::new(2, RateFn::constant(kappa), kappa),
                Jump::new(-1, RateFn::linear(0.0, b), (b * c).max(b)),
            ],
            1.0,
            (0.0, 4.0 * c + 1.0),
            (c / 2.0).min(0.5),
        )
    }

    /// `λ₁(z) = up/(1 + 2z⁺)`, `λ₋₁(z) = down/(1 + z⁺)`: both rates decrease
    /// in `z`, so `Λ` is decreasing near `c`. With the defaults `c = 1`.
    pub fn decreasing(up: f64, down: f64) -> Result<ModelSpec, ModelError> {
        ModelSpec::new(
            "decreasing",
            vec![
                Jump::new(
                    1,
                    RateFn::Hyperbolic {
                        scale: up,
                        slope: 2.0,
                    },
                    up,
                ),
                Jump::new(
                    -1,
                    RateFn::Hyperbolic {
                        scale: down,
                        slope: 1.0,
                    },
                    down,
                ),
            ],
            1.0,
            (0.0, 10.0),
            0.5,
        )
    }

    /// Rates that do not depend on `z`. There is no attracting root, so
    /// skeletons for this model have to be assembled by hand.
    pub fn constant_rates(rates: &[(i64, f64)]) -> Result<ModelSpec, ModelError> {
        ModelSpec::new(
            "constant",
            rates
                .iter()
                .map(|&(j, r)| Jump::new(j, RateFn::constant(r), r))
                .collect(),
            1.0,
            (-1.0, 1.0),
            0.5,
        )
    }
}

/// Deterministic quantities derived from the model near its equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub c: f64,
    pub f_prime_c: f64,
    pub sigma2_c: f64,
    pub v_c: f64,
    /// `Λ* = sup_{|z−c|≤δ/2} Λ(z)`.
    pub lambda_star: f64,
    /// `sup_{|z−c|≤δ} |F'(z)|`.
    pub f_prime_sup: f64,
    pub u: f64,
    pub delta1_prime: f64,
    pub delta: f64,
}

impl Skeleton {
    /// Assemble a skeleton from given `c`, `F'(c)` and `σ²(c)`; used for
    /// models (such as constant rates) without an attracting root.
    pub fn from_parts(model: &ModelSpec, c: f64, f_prime_c: f64, sigma2_c: f64) -> Self {
        let delta = model.delta;
        let lambda_star = grid_max(c - delta / 2.0, c + delta / 2.0, SKELETON_GRID, |z| {
            model.total_rate(z)
        });
        let f_prime_sup = grid_max(c - delta, c + delta, SKELETON_GRID, |z| {
            model.drift_slope(z).abs()
        });
        let u = (1.0f64).max(1.0 / (2.0 * lambda_star));
        Skeleton {
            c,
            f_prime_c,
            sigma2_c,
            v_c: sigma2_c / (-2.0 * f_prime_c),
            lambda_star,
            f_prime_sup,
            u,
            delta1_prime: delta * (-u * f_prime_sup).exp() / 4.0,
            delta,
        }
    }

    /// `⌊n c⌋`.
    pub fn centre(&self, n: u64) -> i64 {
        (n as f64 * self.c).floor() as i64
    }

    /// `m(n) = ⌈2 n Λ* U⌉`.
    pub fn jump_budget(&self, n: u64) -> u64 {
        (2.0 * n as f64 * self.lambda_star * self.u).ceil() as u64
    }
}

fn grid_max(lo: f64, hi: f64, points: usize, f: impl Fn(f64) -> f64) -> f64 {
    grid(lo, hi, points)
        .map(f)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn grid(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let points = points.max(2);
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(move |k| {
        if k + 1 == points {
            hi
        } else {
            lo + step * k as f64
        }
    })
}

/// Locate `c`, evaluate `F'(c)`, `σ²(c)`, `v_c` and the constants `U`, `δ'₁`.
pub fn build_skeleton(model: &ModelSpec) -> Result<Skeleton, ModelError> {
    let (mut lo, mut hi) = model.bracket;
    let (f_lo, f_hi) = (model.drift(lo), model.drift(hi));
    if f_lo == 0.0 || f_hi == 0.0 || f_lo.signum() == f_hi.signum() {
        if f_lo == 0.0 && f_hi != 0.0 {
            hi = lo;
        } else if f_hi == 0.0 && f_lo != 0.0 {
            lo = hi;
        } else {
            return Err(ModelError::NoRoot { lo, hi, f_lo, f_hi });
        }
    }
    let lo_sign = model.drift(lo).signum();
    while hi - lo > ROOT_WIDTH {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = model.drift(mid);
        if fm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if fm.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut c = 0.5 * (lo + hi);
    // One Newton polish, kept only if it improves the residual.
    let slope = model.drift_slope(c);
    if slope != 0.0 && slope.is_finite() {
        let candidate = c - model.drift(c) / slope;
        if (candidate - c).abs() <= ROOT_WIDTH
            && model.drift(candidate).abs() < model.drift(c).abs()
        {
            c = candidate;
        }
    }
    let f_prime_c = model.drift_slope(c);
    if !(f_prime_c < 0.0) {
        return Err(ModelError::NonAttracting {
            c,
            f_prime: f_prime_c,
        });
    }
    let sigma2_c = model.variance_rate(c);
    if !(sigma2_c > 0.0) {
        return Err(ModelError::DegenerateVariance {
            c,
            sigma2: sigma2_c,
        });
    }
    Ok(Skeleton::from_parts(model, c, f_prime_c, sigma2_c))
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeCheck {
    pub j: i64,
    pub envelope: f64,
    /// Largest `λ_j(z) / (c_j (1 + |z − c|))` seen on the grid.
    pub worst_ratio: f64,
    pub worst_z: f64,
    pub holds: bool,
}

/// Grid diagnostics for the standing assumptions on the rates.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    /// `(η, inf_{|z−c|≥η} |F(z)|)` over the bracket.
    pub mu_eta: Vec<(f64, f64)>,
    pub envelope: Vec<EnvelopeCheck>,
    /// Window `[c − w, c + w]` used for the envelope check.
    pub envelope_window: f64,
    pub epsilon: f64,
    pub l1: f64,
    pub l2: f64,
    pub s_alpha: f64,
    pub violations: Vec<String>,
}

impl AssumptionReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluate the standing assumptions on grids of `grid_size` points.
/// Violations are collected in the report rather than returned as errors.
pub fn check_assumptions(
    model: &ModelSpec,
    skeleton: &Skeleton,
    grid_size: usize,
) -> AssumptionReport {
    let c = skeleton.c;
    let delta = model.delta;
    let mut violations = Vec::new();

    let (blo, bhi) = model.bracket;
    let mut mu_eta = Vec::new();
    for eta in [delta / 4.0, delta / 2.0, delta] {
        let inf = grid(blo, bhi, grid_size)
            .filter(|z| (z - c).abs() >= eta)
            .map(|z| model.drift(z).abs())
            .fold(f64::INFINITY, f64::min);
        if inf <= 0.0 {
            violations.push(format!("A1: drift vanishes at distance >= {eta} from c"));
        }
        mu_eta.push((eta, inf));
    }
    if skeleton.f_prime_c >= 0.0 {
        violations.push("A1: F'(c) is not negative".to_string());
    }

    let envelope_window = 10.0 * c.abs().max(1.0);
    let envelope: Vec<EnvelopeCheck> = model
        .jumps()
        .iter()
        .map(|jump| {
            let mut worst_ratio = 0.0;
            let mut worst_z = c;
            for z in grid(c - envelope_window, c + envelope_window, grid_size) {
                let bound = jump.envelope * (1.0 + (z - c).abs());
                let rate = jump.rate.eval(z);
                let ratio = if bound > 0.0 {
                    rate / bound
                } else if rate > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                };
                if ratio > worst_ratio {
                    worst_ratio = ratio;
                    worst_z = z;
                }
            }
            let holds = worst_ratio <= 1.0 + 1e-12;
            if !holds {
                violations.push(format!(
                    "A2: envelope for jump {} exceeded by factor {worst_ratio:.3} at z = {worst_z:.3}",
                    jump.j
                ));
            }
            EnvelopeCheck {
                j: jump.j,
                envelope: jump.envelope,
                worst_ratio,
                worst_z,
                holds,
            }
        })
        .collect();

    let band: Vec<f64> = grid(c - delta, c + delta, grid_size).collect();
    let mut epsilon = f64::INFINITY;
    let mut l1: f64 = 0.0;
    let mut l2: f64 = 0.0;
    for jump in model.jumps() {
        let at_c = jump.rate.eval(c);
        if at_c > 0.0 {
            for &z in &band {
                epsilon = epsilon.min(jump.rate.eval(z) / at_c);
                l1 = l1.max(jump.rate.slope_at(z).abs() / at_c);
                l2 = l2.max(jump.rate.curvature_at(z).abs() / (jump.j.abs() as f64 * at_c));
            }
        } else if band.iter().any(|&z| jump.rate.eval(z) > 0.0) {
            violations.push(format!(
                "A3: jump {} has λ_j(c) = 0 but is active within δ of c",
                jump.j
            ));
        }
    }
    if model.rate(1, c) <= 0.0 {
        violations.push("A3: the unit jump is inactive at c".to_string());
    }
    if !(epsilon > 0.0) {
        violations.push("A3: rates vanish within δ of c".to_string());
    }
    if !epsilon.is_finite() {
        epsilon = 0.0;
    }
    if !(l1.is_finite() && l2.is_finite()) {
        violations.push("A4: rate derivatives are unbounded near c".to_string());
    }

    AssumptionReport {
        mu_eta,
        envelope,
        envelope_window,
        epsilon,
        l1,
        l2,
        s_alpha: model.s_alpha(),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn immigration_death_closed_forms() {
        let m = builtin::immigration_death(1.0, 1.0).unwrap();
        assert_eq!(m.drift(1.0), 0.0);
        assert_eq!(m.drift(0.0), 1.0);
        assert_eq!(m.variance_rate(1.0), 2.0);
        assert_eq!(m.total_rate(1.0), 2.0);
        assert_eq!(m.total_rate(0.0), 1.0);
        let s = build_skeleton(&m).unwrap();
        assert!(close(s.c, 1.0, 1e-12));
        assert!(close(s.f_prime_c, -1.0, 1e-12));
        assert!(close(s.sigma2_c, 2.0, 1e-12));
        assert!(close(s.v_c, 1.0, 1e-12));

        let m2 = builtin::immigration_death(2.0, 1.0).unwrap();
        let s2 = build_skeleton(&m2).unwrap();
        assert!(close(s2.c, 2.0, 1e-12));
        assert!(close(s2.v_c, 2.0, 1e-12));
    }

    #[test]
    fn sis_closed_forms() {
        let m = builtin::sis(2.0, 1.0).unwrap();
        let s = build_skeleton(&m).unwrap();
        assert!(close(s.c, 0.5, 1e-12));
        assert!(close(m.variance_rate(0.5), 1.0, 1e-15));
        assert!(close(s.v_c, 0.5, 1e-12));
        assert!(m.drift(s.c).abs() < 1e-12);
    }

    #[test]
    fn three_jump_closed_forms() {
        let m = builtin::three_jump(1.0, 1.0, 0.25).unwrap();
        let s = build_skeleton(&m).unwrap();
        assert!(close(s.c, 1.5, 1e-12));
        // σ²(c) = 2a + 6κ, v_c = (a + 3κ)/b
        assert!(close(s.sigma2_c, 3.5, 1e-12));
        assert!(close(s.v_c, 1.75, 1e-12));
    }

    #[test]
    fn decreasing_model_has_decreasing_total_rate() {
        let m = builtin::decreasing(3.0, 2.0).unwrap();
        let s = build_skeleton(&m).unwrap();
        assert!(close(s.c, 1.0, 1e-12));
        assert!(close(s.f_prime_c, -1.0 / 6.0, 1e-12));
        assert!(m.total_rate(1.01) < m.total_rate(1.0));
    }

    #[test]
    fn single_unit_jump_variance() {
        let m = builtin::constant_rates(&[(1, 1.0)]).unwrap();
        for z in [-3.0, 0.0, 0.7, 12.0] {
            assert_eq!(m.variance_rate(z), 1.0);
        }
    }

    #[test]
    fn empty_model_has_zero_total_rate() {
        let m = ModelSpec::new("empty", vec![], 1.0, (0.0, 1.0), 0.5).unwrap();
        assert_eq!(m.total_rate(0.3), 0.0);
    }

    #[test]
    fn rates_are_clamped() {
        let m = builtin::sis(2.0, 1.0).unwrap();
        assert_eq!(m.rate(1, -0.5), 0.0);
        assert_eq!(m.rate(1, 1.5), 0.0);
        assert_eq!(m.rate(-1, -0.5), 0.0);
    }

    #[test]
    fn construction_errors() {
        let r = || RateFn::constant(1.0);
        assert_eq!(
            ModelSpec::new("x", vec![Jump::new(0, r(), 1.0)], 1.0, (0.0, 1.0), 0.5).unwrap_err(),
            ModelError::ZeroJump
        );
        assert_eq!(
            ModelSpec::new(
                "x",
                vec![Jump::new(1, r(), 1.0), Jump::new(1, r(), 1.0)],
                1.0,
                (0.0, 1.0),
                0.5
            )
            .unwrap_err(),
            ModelError::DuplicateJump(1)
        );
        assert_eq!(
            ModelSpec::new("x", vec![Jump::new(-1, r(), 1.0)], 1.0, (0.0, 1.0), 0.5).unwrap_err(),
            ModelError::MissingUnitJump
        );
        assert!(matches!(
            ModelSpec::new("x", vec![Jump::new(1, r(), 1.0)], 0.0, (0.0, 1.0), 0.5),
            Err(ModelError::BadAlpha(_))
        ));
    }

    #[test]
    fn skeleton_errors() {
        // F ≡ 1: no sign change.
        let m = builtin::constant_rates(&[(1, 1.0)]).unwrap();
        assert!(matches!(build_skeleton(&m), Err(ModelError::NoRoot { .. })));
        // F(z) = z: root at 0 but repelling.
        let m = ModelSpec::new(
            "repel",
            vec![Jump::new(1, RateFn::linear(0.0, 1.0), 1.0)],
            1.0,
            (-1.0, 1.0),
            0.5,
        )
        .unwrap();
        assert!(matches!(
            build_skeleton(&m),
            Err(ModelError::NonAttracting { .. })
        ));
    }

    #[test]
    fn derivative_falls_back_to_central_difference() {
        let m = ModelSpec::new(
            "custom",
            vec![
                Jump::new(1, RateFn::custom(|_| 1.0), 1.0),
                Jump::new(-1, RateFn::custom(|z| z), 1.0),
            ],
            1.0,
            (0.0, 3.0),
            0.5,
        )
        .unwrap();
        let s = build_skeleton(&m).unwrap();
        assert!(close(s.c, 1.0, 1e-10));
        assert!(close(s.f_prime_c, -1.0, 1e-8));
    }

    #[test]
    fn skeleton_constants() {
        let m = builtin::immigration_death(1.0, 1.0).unwrap();
        let s = build_skeleton(&m).unwrap();
        // Λ(z) = 1 + z on [0.75, 1.25].
        assert!(close(s.lambda_star, 2.25, 1e-12));
        assert_eq!(s.u, 1.0);
        assert!(close(s.f_prime_sup, 1.0, 1e-12));
        assert!(close(s.delta1_prime, 0.5 * (-1.0f64).exp() / 4.0, 1e-15));
        assert_eq!(s.jump_budget(100), 450);
    }

    #[test]
    fn envelope_for_immigration_death_holds() {
        let m = builtin::immigration_death(1.0, 1.0).unwrap();
        let s = build_skeleton(&m).unwrap();
        let report = check_assumptions(&m, &s, 4001);
        assert!(report.envelope.iter().all(|e| e.holds), "{report:?}");
        assert!(report.holds(), "{:?}", report.violations);
        assert!(close(report.epsilon, 0.5, 1e-12));
        assert!(close(report.l1, 1.0, 1e-12));
    }

    #[test]
    fn quadratic_rate_breaks_envelope() {
        let m = ModelSpec::new(
            "quadratic",
            vec![
                Jump::new(1, RateFn::Poly(vec![1.0, 0.0, 1.0]), 2.0),
                Jump::new(-1, RateFn::linear(0.0, 3.0), 3.0),
            ],
            1.0,
            (0.0, 1.0),
            0.5,
        )
        .unwrap();
        let s = build_skeleton(&m).unwrap();
        assert!(close(s.c, (3.0 - 5f64.sqrt()) / 2.0, 1e-12));
        let report = check_assumptions(&m, &s, 2001);
        let up = report.envelope.iter().find(|e| e.j == 1).unwrap();
        assert!(!up.holds);
        assert!(up.worst_z.abs() > 5.0);
        assert!(!report.holds());
    }

    #[test]
    fn sis_lipschitz_constant_is_finite() {
        let m = builtin::sis(2.0, 1.0).unwrap();
        let s = build_skeleton(&m).unwrap();
        let report = check_assumptions(&m, &s, 2001);
        assert!(report.l1.is_finite() && report.l1 > 0.0);
        assert!(report.epsilon > 0.0 && report.epsilon <= 1.0);
        assert!(report.envelope.iter().all(|e| e.holds));
    }
}
