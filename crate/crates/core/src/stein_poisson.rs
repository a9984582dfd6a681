//! Centred Poisson laws, the Stein–Chen solution for point sets, and the
//! exact residual decomposition of the local error.
//!
//! For `μ > 0` and `s ≥ 0` the solution `g = g_{μ,{s}}` of
//! `μ g(j+1) − j g(j) = 1{j = s} − Po(μ){s}` with `g(0) = 0` is
//!
//! ```text
//! g(m) = −Po(μ){s} · P(X ≤ m−1) / (μ Po(μ){m−1})    1 ≤ m ≤ s
//! g(m) =  Po(μ){s} · P(X ≥ m)   / (μ Po(μ){m−1})    m > s
//! ```
//!
//! Both ratios are propagated by recursions whose relative errors
//! contract, with an explicit binary exponent so that neither overflows
//! when `s` is far from `μ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::generator::{a_coeff, b_coeff, back_diff, back_diff2, CoeffForm};
use crate::lattice::LatticeDistribution;
use crate::model::{ModelSpec, Skeleton};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteinError {
    #[error("Poisson mean must be positive and finite, got {0}")]
    BadMean(f64),
    #[error("j_max = {j_max} must be at least s + 2 = {}", s + 2)]
    RangeTooShort { s: i64, j_max: i64 },
    #[error("point set {{{0}}} must be nonnegative")]
    NegativePoint(i64),
    #[error("r = {r} lies below the support of the centred law (floor mu = {floor_mu})")]
    BelowSupport { r: i64, floor_mu: i64 },
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln Γ(k+1) − (k + ½) ln k + k − ½ ln 2π`.
fn stirlerr(k: f64) -> f64 {
    if k <= 15.0 {
        return ln_gamma(k + 1.0) - (k + 0.5) * k.ln() + k - HALF_LN_2PI;
    }
    let k2 = k * k;
    (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * k2)) / k2) / k2) / k
}

/// `x ln(x/m) + m − x`, accurate when `x ≈ m`.
fn bd0(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let next = s + ej / (2 * j + 1) as f64;
            if next == s {
                return s;
            }
            s = next;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// `ln Po(μ){k}`, with the saddle-point form so that large `k` and `μ`
/// keep near full relative accuracy.
pub fn ln_poisson_pmf(k: i64, mu: f64) -> f64 {
    if k < 0 {
        return f64::NEG_INFINITY;
    }
    if k == 0 {
        return -mu;
    }
    let x = k as f64;
    -stirlerr(x) - bd0(x, mu) - HALF_LN_2PI - 0.5 * x.ln()
}

/// `Pô(μ) = Po(μ) * δ_{−⌊μ⌋}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentredPoisson {
    pub mu: f64,
    pub floor_mu: i64,
    pub frac_mu: f64,
}

impl CentredPoisson {
    pub fn new(mu: f64) -> Result<Self, SteinError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(SteinError::BadMean(mu));
        }
        let floor_mu = mu.floor();
        Ok(CentredPoisson {
            mu,
            floor_mu: floor_mu as i64,
            frac_mu: mu - floor_mu,
        })
    }

    pub fn pmf(&self, k: i64) -> f64 {
        ln_poisson_pmf(k + self.floor_mu, self.mu).exp()
    }

    /// The law on the window where the pmf exceeds `1e-40`.
    pub fn distribution(&self) -> LatticeDistribution {
        const FLOOR: f64 = 1e-40;
        let mut lo = 0;
        while lo > -self.floor_mu && self.pmf(lo - 1) > FLOOR {
            lo -= 1;
        }
        let mut hi = 0;
        while self.pmf(hi + 1) > FLOOR {
            hi += 1;
        }
        LatticeDistribution::new(lo, (lo..=hi).map(|k| self.pmf(k)).collect())
    }
}

pub fn centred_pmf(cp: &CentredPoisson, k: i64) -> f64 {
    cp.pmf(k)
}

/// Norms of `g` extended by zero to the negative integers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteinNorms {
    pub sup_g: f64,
    pub sup_dg: f64,
    pub l1_dg: f64,
    pub l1_d2g: f64,
}

/// `g_{μ,{s}}` on `0..=j_max` with lazy evaluation beyond.
#[derive(Debug, Clone)]
pub struct SteinSolution {
    pub mu: f64,
    pub s: i64,
    pub j_max: i64,
    ln_ps: f64,
    /// `g(0..=stored)`; `stored ≥ j_max` reaches far enough into the tail
    /// for the norms.
    values: Vec<f64>,
    pub norms: SteinNorms,
}

const SCALE_BITS: i32 = 512;

/// A positive number `mant · 2^exp`, so the recursions below can run in
/// linear arithmetic without overflow. Rescaling by powers of two is exact.
#[derive(Clone, Copy)]
struct Scaled {
    mant: f64,
    exp: i32,
}

impl Scaled {
    fn renormalize(&mut self) {
        while self.mant > 2f64.powi(SCALE_BITS) {
            self.mant *= 2f64.powi(-SCALE_BITS);
            self.exp += SCALE_BITS;
        }
    }

    /// `2^{−exp}`, the constant 1 in the current scale.
    fn one(&self) -> f64 {
        2f64.powi(-self.exp)
    }

    /// `Po(μ){s} · mant · 2^exp`.
    fn times_point_prob(&self, ln_ps: f64) -> f64 {
        (ln_ps + self.exp as f64 * std::f64::consts::LN_2).exp() * self.mant
    }
}

/// `Po(μ){s} · P(X > k)/Po(μ){k}` for `k` in `lo..=hi`, by the backward
/// recursion `t(k) = μ/(k+1) · (1 + t(k+1))` from a start far in the tail.
fn upper_ratios(mu: f64, ln_ps: f64, lo: i64, hi: i64) -> Vec<f64> {
    let start = hi.max((2.0 * mu).ceil() as i64) + 64;
    let mut sum = 0.0;
    let mut term = 1.0;
    let mut l = 1;
    loop {
        term *= mu / (start + l) as f64;
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
        l += 1;
    }
    let mut t = Scaled { mant: sum, exp: 0 };
    let mut out = vec![0.0; (hi - lo + 1) as usize];
    for k in (lo..start).rev() {
        t.mant = mu / (k + 1) as f64 * (t.one() + t.mant);
        t.renormalize();
        if k <= hi {
            out[(k - lo) as usize] = t.times_point_prob(ln_ps);
        }
    }
    out
}

impl SteinSolution {
    fn eval_range(mu: f64, s: i64, ln_ps: f64, last: i64) -> Vec<f64> {
        let mut values = vec![0.0; (last + 1) as usize];
        // Lower branch: r(k) = P(X ≤ k)/Po{k}, r(k) = 1 + r(k−1) k/μ.
        let mut r = Scaled { mant: 1.0, exp: 0 };
        for m in 1..=s.min(last) {
            if m > 1 {
                r.mant = r.one() + r.mant * (m - 1) as f64 / mu;
                r.renormalize();
            }
            values[m as usize] = -r.times_point_prob(ln_ps) / mu;
        }
        if last > s {
            let v = upper_ratios(mu, ln_ps, s, last - 1);
            for m in s + 1..=last {
                values[m as usize] = v[(m - 1 - s) as usize] / mu;
            }
        }
        values
    }

    /// `Po(μ){s}`.
    pub fn point_prob(&self) -> f64 {
        self.ln_ps.exp()
    }

    /// `g(j)`, zero for `j ≤ 0`.
    pub fn g(&self, j: i64) -> f64 {
        if j <= 0 {
            return 0.0;
        }
        if let Some(v) = self.values.get(j as usize) {
            return *v;
        }
        upper_ratios(self.mu, self.ln_ps, j - 1, j - 1)[0] / self.mu
    }

    /// `Δg(j) = g(j+1) − g(j)`.
    pub fn dg(&self, j: i64) -> f64 {
        self.g(j + 1) - self.g(j)
    }

    /// `Δ²g(j) = g(j+2) − 2g(j+1) + g(j)`.
    pub fn d2g(&self, j: i64) -> f64 {
        self.g(j + 2) - 2.0 * self.g(j + 1) + self.g(j)
    }

    /// `g(0..=j_max)`.
    pub fn values(&self) -> &[f64] {
        &self.values[..=self.j_max as usize]
    }

    /// Last index held in memory; beyond it `g` is evaluated on demand.
    pub fn stored(&self) -> i64 {
        self.values.len() as i64 - 1
    }

    /// `|μ g(j+1) − j g(j) − 1{j=s} + Po(μ){s}|`.
    pub fn plugback_residual(&self, j: i64) -> f64 {
        let ind = if j == self.s { 1.0 } else { 0.0 };
        (self.mu * self.g(j + 1) - j as f64 * self.g(j) - ind + self.point_prob()).abs()
    }

    pub fn max_plugback_residual(&self) -> f64 {
        (0..self.stored())
            .map(|j| self.plugback_residual(j))
            .fold(0.0, f64::max)
    }
}

/// Solve the Stein–Chen equation for `A = {s}` on `0..=j_max`.
pub fn stein_solution(mu: f64, s: i64, j_max: i64) -> Result<SteinSolution, SteinError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(SteinError::BadMean(mu));
    }
    if s < 0 {
        return Err(SteinError::NegativePoint(s));
    }
    if j_max < s + 2 {
        return Err(SteinError::RangeTooShort { s, j_max });
    }
    let ln_ps = ln_poisson_pmf(s, mu);
    let tail_reach = (mu + 40.0 * mu.sqrt()).ceil() as i64 + 50;
    let last = j_max.max(s + 50).max(tail_reach);
    let values = SteinSolution::eval_range(mu, s, ln_ps, last);

    // g vanishes at and below 0; for large j it decreases to 0 and Δg
    // increases to 0, so the l1 tails are |g(J)| and |Δg(J−1)|.
    let dg: Vec<f64> = (0..last as usize)
        .map(|j| values[j + 1] - values[j])
        .collect();
    let sup_g = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sup_dg = dg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let l1_dg = dg.iter().map(|v| v.abs()).sum::<f64>() + values[last as usize].abs();
    let l1_d2g = dg[0].abs()
        + dg.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
        + dg[dg.len() - 1].abs();
    Ok(SteinSolution {
        mu,
        s,
        j_max,
        ln_ps,
        values,
        norms: SteinNorms {
            sup_g,
            sup_dg,
            l1_dg,
            l1_d2g,
        },
    })
}

/// `g̃_{μ,r}(l) = g_{μ,{r+⌊μ⌋}}(l + ⌊μ⌋)`, and `0` for `l < −⌊μ⌋`.
#[derive(Debug, Clone)]
pub struct ShiftedStein {
    pub cp: CentredPoisson,
    pub r: i64,
    pub solution: SteinSolution,
}

impl ShiftedStein {
    pub fn eval(&self, l: i64) -> f64 {
        if l < -self.cp.floor_mu {
            0.0
        } else {
            self.solution.g(l + self.cp.floor_mu)
        }
    }
}

/// The shifted solution with values held for `l ≤ l_max`.
pub fn shifted_stein_to(
    cp: &CentredPoisson,
    r: i64,
    l_max: i64,
) -> Result<ShiftedStein, SteinError> {
    if r < -cp.floor_mu {
        return Err(SteinError::BelowSupport {
            r,
            floor_mu: cp.floor_mu,
        });
    }
    let s = r + cp.floor_mu;
    let solution = stein_solution(cp.mu, s, (l_max + cp.floor_mu).max(s + 2))?;
    Ok(ShiftedStein {
        cp: *cp,
        r,
        solution,
    })
}

pub fn shifted_stein(cp: &CentredPoisson, r: i64) -> Result<ShiftedStein, SteinError> {
    shifted_stein_to(cp, r, r + 2)
}

/// One measured quantity against its bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub holds: bool,
}

impl BoundCheck {
    fn new(name: &str, measured: f64, bound: f64) -> Self {
        BoundCheck {
            name: name.to_string(),
            measured,
            bound,
            holds: measured <= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub mu: f64,
    pub s: i64,
    pub checks: Vec<BoundCheck>,
    pub max_plugback_residual: f64,
    /// `g < 0` and decreasing on `1..=s`, `g > 0` and decreasing after `s`.
    pub sign_pattern: bool,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.checks.iter().all(|c| c.holds) && self.sign_pattern
    }
}

fn sign_pattern(sol: &SteinSolution) -> bool {
    // Strictness is only checkable where the values have not underflowed.
    let tiny = f64::MIN_POSITIVE;
    let last = sol.stored();
    let below = (1..=sol.s.min(last)).all(|m| {
        let g = sol.g(m);
        let next_ok = m == sol.s || sol.g(m + 1) < g || (g.abs() < tiny && sol.g(m + 1) <= g);
        (g < 0.0 || g.abs() < tiny) && next_ok
    });
    let above = (sol.s + 1..last).all(|m| {
        let g = sol.g(m);
        (g > 0.0 && sol.g(m + 1) < g) || (g >= 0.0 && g < tiny && sol.g(m + 1) <= g)
    });
    below && above
}

/// Measure every norm bound for `g_{μ,{s}}`, with
/// `h(j) = μ|Δg(j)| + 1{j = s}`:
///
/// 1. `‖g‖∞ ≤ ‖Δg‖∞ ≤ 1/μ`
/// 2. `‖Δg‖₁ ≤ 2/μ`
/// 3. `‖Δ²g‖₁ ≤ 4/μ`
/// 4. `|(j − μ) g(j)| ≤ h(j) + Po(μ){s}`, and `‖h‖₁ ≤ 3`
/// 5. `|(j − μ) Δg(j)| ≤ h(j+1) + h(j) + 1/μ`
///
/// Parts 4 and 5 report the largest excess over the bound, so the check
/// is `excess ≤ 0`. In centred coordinates `j − μ = i − ⟨μ⟩`.
pub fn norm_bounds_check(sol: &SteinSolution) -> BoundReport {
    let mu = sol.mu;
    let n = &sol.norms;
    let ps = sol.point_prob();
    let h = |j: i64| mu * sol.dg(j).abs() + if j == sol.s { 1.0 } else { 0.0 };
    let last = sol.stored();
    let mut excess4 = f64::NEG_INFINITY;
    let mut excess5 = f64::NEG_INFINITY;
    for j in 0..last - 1 {
        let x = j as f64 - mu;
        excess4 = excess4.max((x * sol.g(j)).abs() - h(j) - ps);
        excess5 = excess5.max((x * sol.dg(j)).abs() - h(j + 1) - h(j) - 1.0 / mu);
    }
    let h_l1 = mu * n.l1_dg + 1.0;
    // Round-off allowance relative to the size of the compared terms.
    let slack = 1e-12;
    BoundReport {
        mu,
        s: sol.s,
        checks: vec![
            BoundCheck::new("sup_g_le_sup_dg", n.sup_g, n.sup_dg * (1.0 + slack)),
            BoundCheck::new("sup_dg", n.sup_dg, (1.0 + slack) / mu),
            BoundCheck::new("l1_dg", n.l1_dg, (2.0 + slack) / mu),
            BoundCheck::new("l1_d2g", n.l1_d2g, (4.0 + slack) / mu),
            BoundCheck::new("h_l1", h_l1, 3.0 + slack),
            BoundCheck::new("centred_g_excess", excess4, slack),
            BoundCheck::new("centred_dg_excess", excess5, slack),
        ],
        max_plugback_residual: sol.max_plugback_residual(),
        sign_pattern: sign_pattern(sol),
    }
}

/// Expectations under `Π̂_n` of the pieces of the residual.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualTerms {
    #[serde(rename = "R_sigma")]
    pub r_sigma: f64,
    #[serde(rename = "R_Ftaylor")]
    pub r_ftaylor: f64,
    #[serde(rename = "R_frac")]
    pub r_frac: f64,
    #[serde(rename = "En1")]
    pub en1: f64,
    #[serde(rename = "En2")]
    pub en2: f64,
    #[serde(rename = "En3")]
    pub en3: f64,
    #[serde(rename = "En4")]
    pub en4: f64,
    #[serde(rename = "En5")]
    pub en5: f64,
    #[serde(rename = "En6")]
    pub en6: f64,
    #[serde(rename = "En7")]
    pub en7: f64,
    /// `|E R| / (−F'(c))`.
    #[serde(rename = "Rn1")]
    pub rn1: f64,
    /// `n v_c |E ∇²g̃(Y + 1)|` for this `r`.
    #[serde(rename = "Rn2")]
    pub rn2: f64,
    /// `Pô{r} · P(Y < −⌊n v_c⌋)`.
    #[serde(rename = "Rn3")]
    pub rn3: f64,
}

impl ResidualTerms {
    /// `E R`, the sum of the σ², Taylor, fractional and remainder terms.
    pub fn total(&self) -> f64 {
        self.r_sigma
            + self.r_ftaylor
            + self.r_frac
            + self.en1
            + self.en2
            + self.en3
            + self.en4
            + self.en5
            + self.en6
            + self.en7
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBreakdown {
    pub n: u64,
    pub r: i64,
    pub terms: ResidualTerms,
    /// `Rn1 + Rn2 + Rn3`.
    pub reconstructed_bound: f64,
    /// `|Π̂_n(r) − Pô(n v_c){r}|`.
    pub direct_error: f64,
    /// Difference between the signed local error and
    /// `−E R/(−F'(c)) + n v_c E∇²g̃(Y+1) − Rn3`, which agree up to
    /// round-off and mass outside the window.
    pub identity_gap: f64,
}

/// Evaluate every residual term for the point `r` as exact sums over the
/// window of `pi_hat`, the law of `Y_n = Z_n − ⌊nc⌋`.
pub fn stein_residual_terms(
    model: &ModelSpec,
    skeleton: &Skeleton,
    n: u64,
    r: i64,
    pi_hat: &LatticeDistribution,
) -> Result<ResidualBreakdown, SteinError> {
    let nf = n as f64;
    let cp = CentredPoisson::new(nf * skeleton.v_c)?;
    let reach = model.max_jump() + 2;
    let gt = shifted_stein_to(&cp, r, pi_hat.hi() + reach)?;
    let g = |l: i64| gt.eval(l);
    let centre = skeleton.centre(n);
    let c = skeleton.c;
    let fp = skeleton.f_prime_c;
    let f_c = model.drift(c);
    let sigma2_c = model.variance_rate(c);
    let split = (nf.sqrt().floor() as i64).max(1);

    let mut t = ResidualTerms::default();
    let mut second_diff = 0.0;
    for (y, p) in pi_hat.iter() {
        if p == 0.0 {
            continue;
        }
        let z = (y + centre) as f64 / nf;
        let f_z = model.drift(z);
        let nabla = back_diff(&g, y);
        let gy = g(y);
        t.r_sigma += p * 0.5 * nf * (model.variance_rate(z) - sigma2_c) * nabla;
        t.r_ftaylor += p * nf * (f_z - f_c - y as f64 / nf * fp) * gy;
        t.r_frac += p * fp * cp.frac_mu * gy;
        t.en1 += p * -0.5 * nf * (f_z - f_c) * nabla;
        for jump in model.jumps() {
            let k = jump.j.abs();
            if k < 2 {
                continue;
            }
            let (rate_z, rate_c) = (jump.rate.eval(z), jump.rate.eval(c));
            if jump.j > 0 {
                if k <= split {
                    t.en2 += p * a_coeff(&g, y, k, CoeffForm::Binomial) * nf * rate_c;
                    t.en3 += p * a_coeff(&g, y, k, CoeffForm::Telescoped) * nf * (rate_z - rate_c);
                } else {
                    t.en4 += p * a_coeff(&g, y, k, CoeffForm::Telescoped) * nf * rate_z;
                }
            } else if k <= split {
                t.en5 -= p * b_coeff(&g, y, k, CoeffForm::Binomial) * nf * rate_c;
                t.en6 -= p * b_coeff(&g, y, k, CoeffForm::Telescoped) * nf * (rate_z - rate_c);
            } else {
                t.en7 -= p * b_coeff(&g, y, k, CoeffForm::Telescoped) * nf * rate_z;
            }
        }
        second_diff += p * back_diff2(&g, y + 1);
    }
    let below = pi_hat.mass_below(-cp.floor_mu);
    let total = t.total();
    t.rn1 = total.abs() / -fp;
    t.rn2 = cp.mu * second_diff.abs();
    t.rn3 = cp.pmf(r) * below;
    let signed = pi_hat.get(r) - cp.pmf(r);
    let predicted = -total / -fp + cp.mu * second_diff - t.rn3;
    Ok(ResidualBreakdown {
        n,
        r,
        terms: t,
        reconstructed_bound: t.rn1 + t.rn2 + t.rn3,
        direct_error: signed.abs(),
        identity_gap: (signed - predicted).abs(),
    })
}

/// Residual breakdowns over a range of `r`, with the bound assembled from
/// `sup_r Rn2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSweep {
    pub n: u64,
    pub rows: Vec<ResidualBreakdown>,
    pub sup_direct: f64,
    pub sup_rn2: f64,
    pub max_identity_gap: f64,
    /// Rows where `direct_error > reconstructed_bound + slack`.
    pub violations: Vec<i64>,
}

pub fn residual_sweep(
    model: &ModelSpec,
    skeleton: &Skeleton,
    n: u64,
    pi_hat: &LatticeDistribution,
    rs: impl IntoIterator<Item = i64>,
    slack: f64,
) -> Result<ResidualSweep, SteinError> {
    let rs: Vec<i64> = rs.into_iter().collect();
    let rows = rs
        .par_iter()
        .map(|&r| stein_residual_terms(model, skeleton, n, r, pi_hat))
        .collect::<Result<Vec<_>, _>>()?;
    let sup_rn2 = rows.iter().map(|b| b.terms.rn2).fold(0.0, f64::max);
    Ok(ResidualSweep {
        n,
        sup_direct: rows.iter().map(|b| b.direct_error).fold(0.0, f64::max),
        sup_rn2,
        max_identity_gap: rows.iter().map(|b| b.identity_gap).fold(0.0, f64::max),
        violations: rows
            .iter()
            .filter(|b| b.direct_error > b.reconstructed_bound + slack)
            .map(|b| b.r)
            .collect(),
        rows,
    })
}
