//! The generator of `Z_n` on a finite window: construction, the direct
//! and decomposed forms of `A_n h`, and exact stationary and transient laws.
//!
//! Jumps that would leave the window are dropped (their rate is removed
//! from the diagonal too), so every row of the truncated generator sums to
//! zero. The window is also trimmed to the states that can reach `⌊nc⌋`,
//! which turns absorbing boundaries (extinction in the SIS model) into
//! reflecting ones.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::banded::BandMatrix;
pub use crate::lattice::LatticeDistribution;
use crate::model::{ModelSpec, Skeleton};

/// Residual tolerance used when callers do not pass their own.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Stationary mass allowed in the outermost states of an AUTO window.
pub const BOUNDARY_MASS: f64 = 1e-12;
const MAX_WIDENINGS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error("n must be at least 1")]
    BadN,
    #[error("halfwidth {halfwidth} is smaller than the largest jump {max_jump}")]
    WindowTooSmall { halfwidth: u64, max_jump: i64 },
    #[error("stationary system is singular (pivot {pivot:e} at state {state})")]
    SingularSystem { state: i64, pivot: f64 },
    #[error("stationary solve did not converge: residual {residual:e} > {tol:e}")]
    NotConverged { residual: f64, tol: f64 },
    #[error("initial state {state} lies outside the window [{lo}, {hi}]")]
    InitOutsideWindow { state: i64, lo: i64, hi: i64 },
    #[error("time must be finite and nonnegative, got {0}")]
    BadTime(f64),
}

/// Window half-width selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Halfwidth {
    /// `⌈12 √(n v_c log max(n, 3))⌉`, widened by 1.5 until the boundary
    /// carries less than [`BOUNDARY_MASS`] of stationary probability.
    #[default]
    Auto,
    Fixed(u64),
}

/// Generator of `Z_n` restricted to `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct TruncatedGenerator {
    pub n: u64,
    lo: i64,
    hi: i64,
    centre: i64,
    jumps: Vec<i64>,
    /// `rates[s * jumps.len() + k]` is the rate of jump `jumps[k]` from
    /// state `lo + s`, zero when the target is outside the window.
    rates: Vec<f64>,
    diag: Vec<f64>,
    trimmed_lo: bool,
    trimmed_hi: bool,
}

impl TruncatedGenerator {
    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    /// Number of states in the window.
    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `⌊nc⌋`, always inside the window.
    pub fn centre(&self) -> i64 {
        self.centre
    }

    pub fn jumps(&self) -> &[i64] {
        &self.jumps
    }

    fn max_jump(&self) -> i64 {
        self.jumps.iter().map(|j| j.abs()).max().unwrap_or(0)
    }

    /// True if the lower end was cut back to keep the chain irreducible.
    pub fn trimmed_lo(&self) -> bool {
        self.trimmed_lo
    }

    pub fn trimmed_hi(&self) -> bool {
        self.trimmed_hi
    }

    pub fn contains(&self, state: i64) -> bool {
        state >= self.lo && state <= self.hi
    }

    /// Off-diagonal rate `q(i → i + j)`; zero if either end is outside.
    pub fn rate(&self, state: i64, j: i64) -> f64 {
        if !self.contains(state) {
            return 0.0;
        }
        match self.jumps.iter().position(|&x| x == j) {
            Some(k) => self.rates[(state - self.lo) as usize * self.jumps.len() + k],
            None => 0.0,
        }
    }

    /// Diagonal entry `q(i, i)`.
    pub fn diag(&self, state: i64) -> f64 {
        self.diag[(state - self.lo) as usize]
    }

    pub fn row_sum(&self, state: i64) -> f64 {
        let s = (state - self.lo) as usize;
        let width = self.jumps.len();
        self.diag[s] + self.rates[s * width..(s + 1) * width].iter().sum::<f64>()
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, d| m.max(-d))
    }

    fn out_rates(&self, s: usize) -> impl Iterator<Item = (i64, f64)> + '_ {
        let width = self.jumps.len();
        self.jumps
            .iter()
            .copied()
            .zip(self.rates[s * width..(s + 1) * width].iter().copied())
    }

    /// `(Q h)(i)` for every state in the window.
    pub fn apply(&self, h: impl Fn(i64) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|s| {
                let state = self.lo + s as i64;
                let hs = h(state);
                self.out_rates(s)
                    .filter(|&(_, r)| r != 0.0)
                    .map(|(j, r)| r * (h(state + j) - hs))
                    .sum()
            })
            .collect()
    }

    /// `p Q` for a probability vector indexed like the window.
    pub fn left_apply(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (s, &mass) in p.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            out[s] += mass * self.diag[s];
            for (j, r) in self.out_rates(s) {
                if r != 0.0 {
                    out[(s as i64 + j) as usize] += mass * r;
                }
            }
        }
        out
    }

    /// Embed a distribution into the window's index space.
    fn to_window(&self, d: &LatticeDistribution) -> Vec<f64> {
        (self.lo..=self.hi).map(|k| d.get(k)).collect()
    }

    fn from_window(&self, v: Vec<f64>) -> LatticeDistribution {
        LatticeDistribution::new(self.lo, v)
    }
}

fn fill(model: &ModelSpec, n: u64, lo: i64, hi: i64) -> (Vec<i64>, Vec<f64>, Vec<f64>) {
    let jumps: Vec<i64> = model.jumps().iter().map(|j| j.j).collect();
    let len = (hi - lo + 1) as usize;
    let nf = n as f64;
    let mut rates = vec![0.0; len * jumps.len()];
    let mut diag = vec![0.0; len];
    for s in 0..len {
        let state = lo + s as i64;
        let z = state as f64 / nf;
        let mut out = 0.0;
        for (k, jump) in model.jumps().iter().enumerate() {
            let target = state + jump.j;
            if target < lo || target > hi {
                continue;
            }
            let r = nf * jump.rate.eval(z);
            rates[s * jumps.len() + k] = r;
            out += r;
        }
        diag[s] = -out;
    }
    (jumps, rates, diag)
}

/// States of `[lo, hi]` from which `centre` is reachable.
fn reaches_centre(jumps: &[i64], rates: &[f64], lo: i64, hi: i64, centre: i64) -> Vec<bool> {
    let len = (hi - lo + 1) as usize;
    let width = jumps.len();
    let mut seen = vec![false; len];
    let c = (centre - lo) as usize;
    seen[c] = true;
    let mut queue = VecDeque::from([c]);
    while let Some(t) = queue.pop_front() {
        for (k, &j) in jumps.iter().enumerate() {
            let from = t as i64 - j;
            if from < 0 || from >= len as i64 {
                continue;
            }
            let from = from as usize;
            if !seen[from] && rates[from * width + k] > 0.0 {
                seen[from] = true;
                queue.push_back(from);
            }
        }
    }
    seen
}

fn build_fixed(
    model: &ModelSpec,
    skeleton: &Skeleton,
    n: u64,
    halfwidth: u64,
) -> Result<TruncatedGenerator, GeneratorError> {
    if n == 0 {
        return Err(GeneratorError::BadN);
    }
    let max_jump = model.max_jump();
    if (halfwidth as i64) < max_jump {
        return Err(GeneratorError::WindowTooSmall {
            halfwidth,
            max_jump,
        });
    }
    let centre = skeleton.centre(n);
    let (mut lo, mut hi) = (centre - halfwidth as i64, centre + halfwidth as i64);
    let (mut trimmed_lo, mut trimmed_hi) = (false, false);
    loop {
        let (jumps, rates, diag) = fill(model, n, lo, hi);
        let ok = reaches_centre(&jumps, &rates, lo, hi, centre);
        let c = (centre - lo) as usize;
        let mut new_lo = c;
        while new_lo > 0 && ok[new_lo - 1] {
            new_lo -= 1;
        }
        let mut new_hi = c;
        while new_hi + 1 < ok.len() && ok[new_hi + 1] {
            new_hi += 1;
        }
        if new_lo == 0 && new_hi + 1 == ok.len() {
            return Ok(TruncatedGenerator {
                n,
                lo,
                hi,
                centre,
                jumps,
                rates,
                diag,
                trimmed_lo,
                trimmed_hi,
            });
        }
        trimmed_lo |= new_lo > 0;
        trimmed_hi |= new_hi + 1 < ok.len();
        hi = lo + new_hi as i64;
        lo += new_lo as i64;
    }
}

/// The AUTO starting half-width `⌈12 √(n v_c log max(n, 3))⌉`.
pub fn auto_halfwidth(skeleton: &Skeleton, n: u64) -> u64 {
    let nf = n as f64;
    (12.0 * (nf * skeleton.v_c * nf.max(3.0).ln()).sqrt()).ceil() as u64
}

/// Truncated generator of `Z_n` on `[⌊nc⌋ − w, ⌊nc⌋ + w]`, trimmed to the
/// states that communicate with `⌊nc⌋`.
pub fn build_generator(
    model: &ModelSpec,
    skeleton: &Skeleton,
    n: u64,
    halfwidth: Halfwidth,
) -> Result<TruncatedGenerator, GeneratorError> {
    match halfwidth {
        Halfwidth::Fixed(w) => build_fixed(model, skeleton, n, w),
        Halfwidth::Auto => {
            let mut w = auto_halfwidth(skeleton, n).max(model.max_jump() as u64);
            for _ in 0..MAX_WIDENINGS {
                let gen = build_fixed(model, skeleton, n, w)?;
                let pi = stationary_distribution(&gen, DEFAULT_TOL)?;
                if boundary_mass(&gen, &pi) < BOUNDARY_MASS {
                    return Ok(gen);
                }
                w = (w as f64 * 1.5).ceil() as u64;
            }
            build_fixed(model, skeleton, n, w)
        }
    }
}

/// Stationary mass on the outermost `max|j|` states at each end that was
/// not trimmed.
pub fn boundary_mass(gen: &TruncatedGenerator, pi: &LatticeDistribution) -> f64 {
    let m = gen.max_jump().max(1);
    let mut mass = 0.0;
    if !gen.trimmed_lo {
        mass += (gen.lo..gen.lo + m).map(|k| pi.get(k)).sum::<f64>();
    }
    if !gen.trimmed_hi {
        mass += (gen.hi - m + 1..=gen.hi).map(|k| pi.get(k)).sum::<f64>();
    }
    mass
}

fn residual_inf(gen: &TruncatedGenerator, p: &[f64]) -> f64 {
    gen.left_apply(p).iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Solve `π Q = 0`, `Σ π = 1` on the window.
///
/// The balance equation of `⌊nc⌋` is replaced by `π(⌊nc⌋) = 1` and the
/// banded system is solved directly; power iteration on the uniformized
/// kernel takes over if that system is singular or the residual misses
/// `tol`.
pub fn stationary_distribution(
    gen: &TruncatedGenerator,
    tol: f64,
) -> Result<LatticeDistribution, GeneratorError> {
    let len = gen.len();
    if len == 1 {
        return Ok(LatticeDistribution::point_mass(gen.lo));
    }
    let band = gen.max_jump().max(1) as usize;
    let mut a = BandMatrix::zeros(len, band, band);
    for s in 0..len {
        a.add(s, s, gen.diag[s]);
        for (j, r) in gen.out_rates(s) {
            if r != 0.0 {
                // Equation for the target state collects inflow from s.
                a.add((s as i64 + j) as usize, s, r);
            }
        }
    }
    let reference = (gen.centre - gen.lo) as usize;
    a.clear_row(reference);
    a.set(reference, reference, 1.0);
    let mut x = vec![0.0; len];
    x[reference] = 1.0;

    let direct = match a.solve(&mut x, 1e-14) {
        Ok(()) => clean(x),
        Err(singular) => {
            let state = gen.lo + singular.row as i64;
            return power_iteration(gen, tol).map_err(|err| match err {
                GeneratorError::NotConverged { .. } => GeneratorError::SingularSystem {
                    state,
                    pivot: singular.pivot,
                },
                other => other,
            });
        }
    };
    match direct {
        Some(p) if residual_inf(gen, &p) <= tol => Ok(gen.from_window(p)),
        _ => power_iteration(gen, tol),
    }
}

/// Clip round-off negatives and normalize; `None` if the solution has
/// genuinely negative or non-finite entries.
fn clean(mut x: Vec<f64>) -> Option<Vec<f64>> {
    let max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !max.is_finite() || max == 0.0 {
        return None;
    }
    for v in x.iter_mut() {
        if *v < -1e-9 * max {
            return None;
        }
        // Also maps -0.0 to 0.0 so written output is clean.
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    Some(x)
}

fn power_iteration(
    gen: &TruncatedGenerator,
    tol: f64,
) -> Result<LatticeDistribution, GeneratorError> {
    let q = gen.max_exit_rate() * 1.05;
    let len = gen.len();
    let mut p = vec![0.0; len];
    p[(gen.centre - gen.lo) as usize] = 1.0;
    if q == 0.0 {
        return Ok(gen.from_window(p));
    }
    let max_iter = 200 * len * len + 100_000;
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let flow = gen.left_apply(&p);
        if it % 64 == 0 {
            residual = flow.iter().fold(0.0, |m, v| m.max(v.abs()));
            if residual <= tol {
                let total: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= total);
                return Ok(gen.from_window(p));
            }
        }
        for (pi, f) in p.iter_mut().zip(flow) {
            *pi += f / q;
        }
    }
    Err(GeneratorError::NotConverged { residual, tol })
}

/// Poisson(λ) weights on `[left, left + len)` carrying all but a negligible
/// fraction of the mass, computed outward from the mode and normalized.
fn poisson_weights(lambda: f64, cutoff: f64) -> (usize, Vec<f64>) {
    let mode = lambda.floor() as usize;
    let mut up = vec![1.0];
    let mut k = mode;
    loop {
        let next = up[up.len() - 1] * lambda / (k + 1) as f64;
        if next < cutoff {
            break;
        }
        up.push(next);
        k += 1;
    }
    let mut down = Vec::new();
    let mut w = 1.0;
    let mut k = mode;
    while k > 0 {
        w *= k as f64 / lambda;
        if w < cutoff {
            break;
        }
        down.push(w);
        k -= 1;
    }
    let left = mode - down.len();
    let mut weights: Vec<f64> = down.into_iter().rev().collect();
    weights.extend(up);
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    (left, weights)
}

/// Law of `Z_n(t)` for the truncated chain started at `init`.
pub fn transient_distribution(
    gen: &TruncatedGenerator,
    init: i64,
    t: f64,
    tol: f64,
) -> Result<LatticeDistribution, GeneratorError> {
    if !gen.contains(init) {
        return Err(GeneratorError::InitOutsideWindow {
            state: init,
            lo: gen.lo,
            hi: gen.hi,
        });
    }
    transient_from(gen, &LatticeDistribution::point_mass(init), t, tol)
}

/// Law at time `t` of the truncated chain started from `init`, by
/// uniformization. The neglected Poisson tail is far below `tol`.
pub fn transient_from(
    gen: &TruncatedGenerator,
    init: &LatticeDistribution,
    t: f64,
    tol: f64,
) -> Result<LatticeDistribution, GeneratorError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(GeneratorError::BadTime(t));
    }
    let mut v = gen.to_window(init);
    let q = gen.max_exit_rate();
    if t == 0.0 || q == 0.0 {
        return Ok(gen.from_window(v));
    }
    let cutoff = (tol * 1e-6).min(1e-20);
    let (left, weights) = poisson_weights(q * t, cutoff);
    let mut out = vec![0.0; v.len()];
    for k in 0..left + weights.len() {
        if k >= left {
            let w = weights[k - left];
            for (o, x) in out.iter_mut().zip(&v) {
                *o += w * x;
            }
        }
        let flow = gen.left_apply(&v);
        for (x, f) in v.iter_mut().zip(flow) {
            *x += f / q;
        }
    }
    Ok(gen.from_window(out))
}

/// `|Σ_i π(i) (Q h)(i)|` for the truncated generator.
pub fn dynkin_residual(
    gen: &TruncatedGenerator,
    pi: &LatticeDistribution,
    h: impl Fn(i64) -> f64,
) -> f64 {
    gen.apply(h)
        .iter()
        .enumerate()
        .map(|(s, qh)| pi.get(gen.lo + s as i64) * qh)
        .sum::<f64>()
        .abs()
}

/// `(A_n h)(i) = Σ_j n λ_j(i/n) [h(i + j) − h(i)]` on the full lattice.
pub fn apply_generator(model: &ModelSpec, n: u64, h: impl Fn(i64) -> f64, i: i64) -> f64 {
    let nf = n as f64;
    let z = i as f64 / nf;
    let hi = h(i);
    model
        .jumps()
        .iter()
        .map(|jump| nf * jump.rate.eval(z) * (h(i + jump.j) - hi))
        .sum()
}

/// Which of the two equivalent expressions for `a_j` / `b_j` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoeffForm {
    /// `∓C(j,2) ∇g(i) ± Σ_{k=1}^{j−1} k ∇g(i ± (j − k))`.
    Telescoped,
    /// `Σ_{k=2}^{j} C(k,2) ∇²g(·)`.
    Binomial,
}

pub(crate) fn choose2(k: i64) -> f64 {
    (k * (k - 1) / 2) as f64
}

/// `∇f(i) = f(i) − f(i − 1)`.
pub fn back_diff(f: &impl Fn(i64) -> f64, i: i64) -> f64 {
    f(i) - f(i - 1)
}

/// `∇²f(i) = f(i) − 2 f(i − 1) + f(i − 2)`.
pub fn back_diff2(f: &impl Fn(i64) -> f64, i: i64) -> f64 {
    f(i) - 2.0 * f(i - 1) + f(i - 2)
}

/// Coefficient `a_j(g, i)` multiplying `n λ_j(i/n)` for an upward jump `j ≥ 2`.
pub fn a_coeff(g: &impl Fn(i64) -> f64, i: i64, j: i64, form: CoeffForm) -> f64 {
    match form {
        CoeffForm::Telescoped => {
            -choose2(j) * back_diff(g, i)
                + (1..j)
                    .map(|k| k as f64 * back_diff(g, i + j - k))
                    .sum::<f64>()
        }
        CoeffForm::Binomial => (2..=j)
            .map(|k| choose2(k) * back_diff2(g, i + j - k + 1))
            .sum(),
    }
}

/// Coefficient `b_j(g, i)` multiplying `−n λ_{−j}(i/n)` for a downward jump.
pub fn b_coeff(g: &impl Fn(i64) -> f64, i: i64, j: i64, form: CoeffForm) -> f64 {
    match form {
        CoeffForm::Telescoped => {
            choose2(j) * back_diff(g, i)
                - (1..j)
                    .map(|k| k as f64 * back_diff(g, i - j + k))
                    .sum::<f64>()
        }
        CoeffForm::Binomial => (2..=j).map(|k| choose2(k) * back_diff2(g, i - j + k)).sum(),
    }
}

/// Remainder `E_n(g, i)` of the generator expansion.
pub fn expansion_remainder(
    model: &ModelSpec,
    n: u64,
    g: &impl Fn(i64) -> f64,
    i: i64,
    form: CoeffForm,
) -> f64 {
    let nf = n as f64;
    let z = i as f64 / nf;
    let mut total = -0.5 * nf * model.drift(z) * back_diff(g, i);
    for jump in model.jumps() {
        let rate = nf * jump.rate.eval(z);
        if jump.j >= 2 {
            total += a_coeff(g, i, jump.j, form) * rate;
        } else if jump.j <= -2 {
            total -= b_coeff(g, i, -jump.j, form) * rate;
        }
    }
    total
}

/// `(A_n h)(i)` through `(n/2) σ²(i/n) ∇g(i) + n F(i/n) g(i) + E_n(g, i)`
/// with `g(i) = h(i + 1) − h(i)`.
pub fn apply_generator_decomposed(
    model: &ModelSpec,
    n: u64,
    h: impl Fn(i64) -> f64,
    i: i64,
) -> f64 {
    let nf = n as f64;
    let z = i as f64 / nf;
    let g = |k: i64| h(k + 1) - h(k);
    0.5 * nf * model.variance_rate(z) * back_diff(&g, i)
        + nf * model.drift(z) * g(i)
        + expansion_remainder(model, n, &g, i, CoeffForm::Binomial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_skeleton, builtin};

    fn imm_death(n: u64, w: u64) -> TruncatedGenerator {
        let m = builtin::immigration_death(1.0, 1.0).unwrap();
        let s = build_skeleton(&m).unwrap();
        build_generator(&m, &s, n, Halfwidth::Fixed(w)).unwrap()
    }

    #[test]
    fn hand_computed_rates() {
        let gen = imm_death(10, 5);
        assert_eq!(gen.lo(), 5);
        assert_eq!(gen.hi(), 15);
        assert_eq!(gen.rate(10, 1), 10.0);
        assert!((gen.rate(10, -1) - 10.0).abs() < 1e-12);
        assert_eq!(gen.rate(15, 1), 0.0);
        assert_eq!(gen.rate(5, -1), 0.0);
        for k in gen.lo()..=gen.hi() {
            assert_eq!(gen.row_sum(k), 0.0);
        }
    }

    #[test]
    fn window_too_small() {
        let m = builtin::three_jump(1.0, 1.0, 0.25).unwrap();
        let s = build_skeleton(&m).unwrap();
        assert_eq!(
            build_generator(&m, &s, 10, Halfwidth::Fixed(1)).unwrap_err(),
            GeneratorError::WindowTooSmall {
                halfwidth: 1,
                max_jump: 2
            }
        );
    }

    #[test]
    fn sis_window_is_trimmed_above_extinction() {
        let m = builtin::sis(2.0, 1.0).unwrap();
        let s = build_skeleton(&m).unwrap();
        let gen = build_generator(&m, &s, 50, Halfwidth::Auto).unwrap();
        assert_eq!(gen.lo(), 1);
        assert!(gen.trimmed_lo());
        assert_eq!(gen.rate(1, -1), 0.0);
        let pi = stationary_distribution(&gen, DEFAULT_TOL).unwrap();
        assert!((pi.total_mass() - 1.0).abs() < 1e-12);
        // States above n are transient.
        assert_eq!(pi.get(51), 0.0);
    }

    #[test]
    fn two_state_chain() {
        // Window {0, 1} with up-rate u and down-rate d.
        let (u, d) = (3.0, 5.0);
        let m = crate::model::ModelSpec::new(
            "two",
            vec![
                crate::model::Jump::new(1, crate::model::RateFn::constant(u), u),
                crate::model::Jump::new(-1, crate::model::RateFn::constant(d), d),
            ],
            1.0,
            (-1.0, 1.0),
            0.5,
        )
        .unwrap();
        let s = Skeleton::from_parts(&m, 0.0, -1.0, u + d);
        let mut gen = build_generator(&m, &s, 1, Halfwidth::Fixed(1)).unwrap();
        // Restrict to {0, 1} by hand.
        gen = TruncatedGenerator {
            lo: 0,
            hi: 1,
            centre: 0,
            rates: vec![0.0, u, d, 0.0],
            diag: vec![-u, -d],
            ..gen
        };
        let pi = stationary_distribution(&gen, 1e-14).unwrap();
        assert!((pi.get(0) - d / (u + d)).abs() < 1e-15);
        assert!((pi.get(1) - u / (u + d)).abs() < 1e-15);
    }

    #[test]
    fn symmetric_constant_rates_give_uniform() {
        let m = builtin::constant_rates(&[(1, 2.0), (-1, 2.0)]).unwrap();
        let s = Skeleton::from_parts(&m, 0.0, -1.0, 4.0);
        let gen = build_generator(&m, &s, 10, Halfwidth::Fixed(6)).unwrap();
        let pi = stationary_distribution(&gen, 1e-12).unwrap();
        for (_, p) in pi.iter() {
            assert!((p - 1.0 / 13.0).abs() < 1e-14);
        }
    }

    #[test]
    fn transient_at_zero_is_point_mass() {
        let gen = imm_death(20, 10);
        let d = transient_distribution(&gen, 22, 0.0, 1e-12).unwrap();
        assert_eq!(d.get(22), 1.0);
        assert_eq!(d.total_mass(), 1.0);
    }

    #[test]
    fn transient_rejects_outside_init() {
        let gen = imm_death(20, 10);
        assert!(matches!(
            transient_distribution(&gen, 100, 1.0, 1e-12),
            Err(GeneratorError::InitOutsideWindow { .. })
        ));
    }

    #[test]
    fn poisson_weights_sum_to_one() {
        for lambda in [0.3, 5.0, 400.0, 22_500.0] {
            let (left, w) = poisson_weights(lambda, 1e-20);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            assert!(left as f64 <= lambda);
        }
    }

    #[test]
    fn generator_examples() {
        let m = builtin::immigration_death(1.0, 1.0).unwrap();
        assert_eq!(apply_generator(&m, 30, |_| 4.0, 17), 0.0);
        let n = 30;
        let i = 30;
        let direct = apply_generator(&m, n, |k| k as f64, i);
        assert!((direct - n as f64 * m.drift(i as f64 / n as f64)).abs() < 1e-12);

        let up = builtin::constant_rates(&[(1, 1.0)]).unwrap();
        let v = apply_generator(&up, 7, |k| (k * k) as f64, 5);
        assert_eq!(v, 7.0 * 11.0);
    }

    #[test]
    fn coefficient_forms_agree_small_j() {
        let g = |k: i64| ((k * 7919) % 13) as f64 - 6.0;
        for j in 2..=8 {
            for i in -5..5 {
                let a1 = a_coeff(&g, i, j, CoeffForm::Telescoped);
                let a2 = a_coeff(&g, i, j, CoeffForm::Binomial);
                assert!((a1 - a2).abs() < 1e-12, "a_{j}({i}): {a1} vs {a2}");
                let b1 = b_coeff(&g, i, j, CoeffForm::Telescoped);
                let b2 = b_coeff(&g, i, j, CoeffForm::Binomial);
                assert!((b1 - b2).abs() < 1e-12, "b_{j}({i}): {b1} vs {b2}");
            }
        }
        let i = 3;
        assert_eq!(
            a_coeff(&g, i, 2, CoeffForm::Binomial),
            g(i + 1) - 2.0 * g(i) + g(i - 1)
        );
    }

    #[test]
    fn dynkin_constant_is_exactly_zero() {
        let gen = imm_death(50, 40);
        let pi = stationary_distribution(&gen, 1e-10).unwrap();
        assert_eq!(dynkin_residual(&gen, &pi, |_| 1.0), 0.0);
    }
}
