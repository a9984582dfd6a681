//! Gillespie simulation and the likelihood-ratio coupling of chains started
//! one apart.
//!
//! Replicate `k` of an experiment with master seed `seed` draws from
//! ChaCha8 seeded with `seed` on stream `k`, so results do not depend on
//! how replicates are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::LatticeDistribution;
use crate::model::{check_assumptions, ModelSpec, Skeleton};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("at least one replicate is required")]
    NoReplicates,
    #[error("horizon must be finite and nonnegative, got {0}")]
    BadHorizon(f64),
    #[error("start {start} is farther than {limit} from n c = {nc}")]
    StartTooFar { start: i64, nc: f64, limit: f64 },
    #[error("assumption constants unusable: epsilon = {epsilon}, L1 = {l1}")]
    BadConstants { epsilon: f64, l1: f64 },
}

/// RNG for replicate `rep` of an experiment seeded with `seed`.
pub fn replicate_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// One trajectory: `states[l]` is occupied on `[times[l], times[l+1])`,
/// and `marks[l]` is the jump that ended that stay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub states: Vec<i64>,
    pub marks: Vec<i64>,
    pub seed: u64,
    pub horizon: f64,
    /// The path reached a state with zero total rate and stayed there.
    pub absorbed: bool,
}

impl PathSample {
    /// `Z(t)` for `0 ≤ t ≤ horizon`.
    pub fn state_at(&self, t: f64) -> i64 {
        let idx = self.times.partition_point(|&s| s <= t);
        self.states[idx.saturating_sub(1)]
    }

    /// `∫_0^T f(Z(t)) dt / T` over the horizon.
    pub fn time_average(&self, f: impl Fn(i64) -> f64) -> f64 {
        if self.horizon == 0.0 {
            return f(self.states[0]);
        }
        let mut total = 0.0;
        for (l, &state) in self.states.iter().enumerate() {
            let end = self.times.get(l + 1).copied().unwrap_or(self.horizon);
            total += f(state) * (end - self.times[l]);
        }
        total / self.horizon
    }

    /// `E_l = n Λ(Z_{l−1}/n)(τ_l − τ_{l−1})` for `l = 1..`.
    pub fn exposures(&self, model: &ModelSpec, n: u64) -> Vec<f64> {
        let nf = n as f64;
        self.times
            .windows(2)
            .zip(&self.states)
            .map(|(w, &z)| nf * model.total_rate(z as f64 / nf) * (w[1] - w[0]))
            .collect()
    }
}

/// One SSA step from `state`: holding time and jump, or `None` if every
/// rate vanishes.
fn ssa_step<R: Rng>(model: &ModelSpec, n: u64, state: i64, rng: &mut R) -> Option<(f64, i64)> {
    let nf = n as f64;
    let z = state as f64 / nf;
    let total = model.total_rate(z);
    if !(total > 0.0) {
        return None;
    }
    let hold: f64 = rng.sample::<f64, _>(Exp1) / (nf * total);
    let mut u = rng.random::<f64>() * total;
    let jumps = model.jumps();
    let mut chosen = jumps[jumps.len() - 1].j;
    for jump in jumps {
        let r = jump.rate.eval(z);
        if r > 0.0 {
            chosen = jump.j;
            if u < r {
                break;
            }
            u -= r;
        }
    }
    Some((hold, chosen))
}

fn simulate_with<R: Rng>(
    model: &ModelSpec,
    n: u64,
    init: i64,
    horizon: f64,
    seed: u64,
    rng: &mut R,
) -> PathSample {
    let mut path = PathSample {
        times: vec![0.0],
        states: vec![init],
        marks: Vec::new(),
        seed,
        horizon,
        absorbed: false,
    };
    let mut t = 0.0;
    let mut state = init;
    loop {
        match ssa_step(model, n, state, rng) {
            None => {
                path.absorbed = true;
                return path;
            }
            Some((hold, j)) => {
                t += hold;
                if t > horizon {
                    return path;
                }
                state += j;
                path.times.push(t);
                path.states.push(state);
                path.marks.push(j);
            }
        }
    }
}

/// Exact-in-law path of `Z_n` on `[0, horizon]`.
pub fn simulate_path(model: &ModelSpec, n: u64, init: i64, horizon: f64, seed: u64) -> PathSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with(model, n, init, horizon, seed, &mut rng)
}

/// `Z_n(t)` without storing the path.
fn state_at_time<R: Rng>(model: &ModelSpec, n: u64, init: i64, t_end: f64, rng: &mut R) -> i64 {
    let mut t = 0.0;
    let mut state = init;
    while let Some((hold, j)) = ssa_step(model, n, state, rng) {
        t += hold;
        if t > t_end {
            break;
        }
        state += j;
    }
    state
}

/// Empirical law of `Z_n(U)` with binomial standard errors per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPmf {
    pub dist: LatticeDistribution,
    pub stderr: Vec<f64>,
    pub reps: u64,
    pub seed: u64,
}

pub fn empirical_transient_pmf(
    model: &ModelSpec,
    n: u64,
    init: i64,
    u: f64,
    reps: u64,
    seed: u64,
) -> Result<EmpiricalPmf, McError> {
    if reps == 0 {
        return Err(McError::NoReplicates);
    }
    if !(u >= 0.0 && u.is_finite()) {
        return Err(McError::BadHorizon(u));
    }
    let ends: Vec<i64> = (0..reps)
        .into_par_iter()
        .map(|rep| state_at_time(model, n, init, u, &mut replicate_rng(seed, rep)))
        .collect();
    let lo = *ends.iter().min().expect("reps > 0");
    let hi = *ends.iter().max().expect("reps > 0");
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for e in ends {
        counts[(e - lo) as usize] += 1;
    }
    let r = reps as f64;
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / r).collect();
    let stderr = probs.iter().map(|p| (p * (1.0 - p) / r).sqrt()).collect();
    Ok(EmpiricalPmf {
        dist: LatticeDistribution::new(lo, probs),
        stderr,
        reps,
        seed,
    })
}

/// How often each stopping rule fired in a likelihood-ratio experiment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopCounts {
    pub sigma1: u64,
    pub sigma2: u64,
    pub sigma3: u64,
    /// Paths with `M_n(U) > m(n)`.
    pub beyond_budget: u64,
    /// Paths where the `e / V` replacement was applied at `σ₁`.
    pub modified: u64,
    pub discarded: u64,
}

/// Serialized form of a Monte Carlo estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub ci95: (f64, f64),
    pub reps: u64,
    pub seed: u64,
    pub stop_counts: Option<StopCounts>,
}

const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for a binomial proportion.
fn wilson(successes: u64, reps: u64) -> (f64, f64) {
    let r = reps as f64;
    let p = successes as f64 / r;
    let z2 = Z95 * Z95;
    let centre = (p + z2 / (2.0 * r)) / (1.0 + z2 / r);
    let half = Z95 / (1.0 + z2 / r) * (p * (1.0 - p) / r + z2 / (4.0 * r * r)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn mean_estimate(values: &[f64], seed: u64, stop_counts: Option<StopCounts>) -> McEstimate {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0)
    } else {
        0.0
    };
    let stderr = (var / r).sqrt();
    McEstimate {
        estimate: mean,
        stderr,
        ci95: (mean - Z95 * stderr, mean + Z95 * stderr),
        reps: values.len() as u64,
        seed,
        stop_counts,
    }
}

/// Probability that `sup_{t ≤ U} |Z_n(t) − nc| > nη`.
#[allow(clippy::too_many_arguments)]
pub fn exit_probability(
    model: &ModelSpec,
    skeleton: &Skeleton,
    n: u64,
    init: i64,
    u: f64,
    eta: f64,
    reps: u64,
    seed: u64,
) -> Result<McEstimate, McError> {
    if reps == 0 {
        return Err(McError::NoReplicates);
    }
    if !(u >= 0.0 && u.is_finite()) {
        return Err(McError::BadHorizon(u));
    }
    let nf = n as f64;
    let nc = nf * skeleton.c;
    let limit = 0.5 * nf * eta * (-skeleton.f_prime_sup * u).exp();
    if (init as f64 - nc).abs() > limit {
        return Err(McError::StartTooFar {
            start: init,
            nc,
            limit,
        });
    }
    let band = nf * eta;
    let exits: u64 = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep);
            let (mut t, mut state) = (0.0, init);
            if (state as f64 - nc).abs() > band {
                return 1;
            }
            while let Some((hold, j)) = ssa_step(model, n, state, &mut rng) {
                t += hold;
                if t > u {
                    break;
                }
                state += j;
                if (state as f64 - nc).abs() > band {
                    return 1;
                }
            }
            0
        })
        .sum();
    let p = exits as f64 / reps as f64;
    Ok(McEstimate {
        estimate: p,
        stderr: (p * (1.0 - p) / reps as f64).sqrt(),
        ci95: wilson(exits, reps),
        reps,
        seed,
        stop_counts: None,
    })
}

/// Constants the likelihood-ratio experiment needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSetup {
    pub n: u64,
    pub start: i64,
    pub horizon: f64,
    /// `m(n) = ⌈2 n Λ* U⌉`.
    pub budget: u64,
    pub epsilon: f64,
    pub l1: f64,
    /// `928 L₁ √(m log m) / (n ε)`.
    pub threshold: f64,
}

impl LrSetup {
    pub fn new(model: &ModelSpec, skeleton: &Skeleton, n: u64, i: i64) -> Result<Self, McError> {
        let nf = n as f64;
        let nc = nf * skeleton.c;
        let limit = nf * skeleton.delta1_prime;
        if (i as f64 - nc).abs() > limit {
            return Err(McError::StartTooFar {
                start: i,
                nc,
                limit,
            });
        }
        let report = check_assumptions(model, skeleton, 2001);
        let (epsilon, l1) = (report.epsilon, report.l1);
        if !(epsilon > 0.0 && l1.is_finite()) {
            return Err(McError::BadConstants { epsilon, l1 });
        }
        let budget = skeleton.jump_budget(n);
        let m = budget as f64;
        Ok(LrSetup {
            n,
            start: i - 1,
            horizon: skeleton.u,
            budget,
            epsilon,
            l1,
            threshold: 928.0 * l1 * (m * m.ln()).sqrt() / (nf * epsilon),
        })
    }

    /// Right side of the per-step increment bound for exposure `e`.
    pub fn increment_bound(&self, e: f64) -> f64 {
        2.0 * self.l1 / (self.n as f64 * self.epsilon) * (3.0 + 2.0 * e)
    }
}

/// The factor `V_l` and whether step `l → l+1` triggers `σ₁`.
///
/// `z` is `Z_l / n`, `j` the jump taken after holding for `hold`.
pub fn lr_factor(model: &ModelSpec, n: u64, z: f64, j: i64, hold: f64) -> (f64, bool, bool) {
    let nf = n as f64;
    let up = z + 1.0 / nf;
    let d_lambda = model.total_rate(up) - model.total_rate(z);
    let ratio = model.rate(j, up) / model.rate(j, z);
    let v = ratio * (-nf * d_lambda * hold).exp();
    let sigma1 = nf * d_lambda.abs() * hold > 1.0;
    (v, sigma1, d_lambda < 0.0)
}

/// State of `S` and the stopped, modified `S̃` along one path.
#[derive(Debug, Clone, Copy)]
pub struct LrTracker {
    pub s: f64,
    pub s_tilde: f64,
    pub steps: u64,
    pub sigma1: Option<u64>,
    pub sigma2: Option<u64>,
    pub sigma3: Option<u64>,
    pub modified: bool,
}

impl LrTracker {
    pub fn new(start_outside: bool) -> Self {
        LrTracker {
            s: 1.0,
            s_tilde: 1.0,
            steps: 0,
            sigma1: None,
            sigma2: None,
            sigma3: if start_outside { Some(0) } else { None },
            modified: false,
        }
    }

    pub fn stopped(&self) -> bool {
        self.sigma1.is_some() || self.sigma2.is_some() || self.sigma3.is_some()
    }

    /// Advance by one jump: `v = V_l`, `sigma1` and `decreasing` from
    /// [`lr_factor`], `outside` whether `|Z_{l+1}/n − c| > δ/2`. Returns
    /// `|S̃_{l+1} − S̃_l|`.
    pub fn step(&mut self, v: f64, sigma1: bool, decreasing: bool, outside: bool) -> f64 {
        let l = self.steps + 1;
        let was_stopped = self.stopped();
        let before = self.s;
        self.s *= v;
        self.steps = l;
        if sigma1 && self.sigma1.is_none() {
            self.sigma1 = Some(l);
        }
        if self.s > 2.0 && self.sigma2.is_none() {
            self.sigma2 = Some(l);
        }
        if outside && self.sigma3.is_none() {
            self.sigma3 = Some(l);
        }
        if was_stopped {
            return 0.0;
        }
        let previous = self.s_tilde;
        // σ₁ = l ≤ min(σ₂, σ₃) holds here because neither fired earlier.
        if self.sigma1 == Some(l) && decreasing {
            self.s_tilde = before * std::f64::consts::E;
            self.modified = true;
        } else {
            self.s_tilde = self.s;
        }
        (self.s_tilde - previous).abs()
    }
}

/// Outcome of one coupled path started at `i − 1`.
#[derive(Debug, Clone, Copy)]
struct LrPath {
    s_tilde: f64,
    /// `S_{M_n(U)}`.
    s_at_exit: f64,
    state_at_u: i64,
    tracker: LrTracker,
    beyond_budget: bool,
    discarded: bool,
    max_increment_ratio: f64,
    increment_violations: u64,
}

fn lr_path<R: Rng>(model: &ModelSpec, skeleton: &Skeleton, setup: &LrSetup, rng: &mut R) -> LrPath {
    let n = setup.n;
    let nf = n as f64;
    let outside = |state: i64| (state as f64 / nf - skeleton.c).abs() > skeleton.delta / 2.0;
    let mut tracker = LrTracker::new(outside(setup.start));
    let mut state = setup.start;
    let mut t = 0.0;
    let mut s_tilde_at_budget = None;
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0;
    loop {
        let z = state as f64 / nf;
        let Some((hold, j)) = ssa_step(model, n, state, rng) else {
            return LrPath {
                s_tilde: tracker.s_tilde,
                s_at_exit: tracker.s,
                state_at_u: state,
                tracker,
                beyond_budget: false,
                discarded: true,
                max_increment_ratio: max_ratio,
                increment_violations: violations,
            };
        };
        let exposure = nf * model.total_rate(z) * hold;
        let (v, s1, decreasing) = lr_factor(model, n, z, j, hold);
        t += hold;
        let crossed = t > setup.horizon;
        let next = state + j;
        if tracker.steps < setup.budget && s_tilde_at_budget.is_none() {
            let inc = tracker.step(v, s1, decreasing, outside(next));
            let bound = setup.increment_bound(exposure);
            max_ratio = max_ratio.max(inc / bound);
            if inc > bound {
                violations += 1;
            }
        } else {
            tracker.s *= v;
            tracker.steps += 1;
        }
        if tracker.steps == setup.budget && s_tilde_at_budget.is_none() {
            s_tilde_at_budget = Some(tracker.s_tilde);
        }
        if crossed {
            // This was jump M_n(U); S̃ is read at min(M_n(U), m(n)).
            return LrPath {
                s_tilde: s_tilde_at_budget.unwrap_or(tracker.s_tilde),
                s_at_exit: tracker.s,
                state_at_u: state,
                tracker,
                beyond_budget: tracker.steps > setup.budget,
                discarded: false,
                max_increment_ratio: max_ratio,
                increment_violations: violations,
            };
        }
        state = next;
    }
}

/// Summary of the likelihood-ratio experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodStats {
    pub setup: LrSetup,
    pub reps: u64,
    pub seed: u64,
    /// Mean of `S̃` at `min(M_n(U), m(n))` over non-discarded paths.
    pub mean_s: f64,
    pub sd_s: f64,
    pub stderr: f64,
    /// Fraction of paths with `|S̃ − 1|` above the threshold.
    pub exceed_prob: f64,
    pub stop_counts: StopCounts,
    /// Largest `|S̃_{m+1} − S̃_m|` relative to its bound over all steps.
    pub max_increment_ratio: f64,
    pub increment_violations: u64,
}

impl LikelihoodStats {
    pub fn estimate(&self) -> McEstimate {
        McEstimate {
            estimate: self.mean_s,
            stderr: self.stderr,
            ci95: (
                self.mean_s - Z95 * self.stderr,
                self.mean_s + Z95 * self.stderr,
            ),
            reps: self.reps,
            seed: self.seed,
            stop_counts: Some(self.stop_counts),
        }
    }
}

fn run_lr_paths(
    model: &ModelSpec,
    skeleton: &Skeleton,
    setup: &LrSetup,
    reps: u64,
    seed: u64,
) -> Vec<LrPath> {
    (0..reps)
        .into_par_iter()
        .map(|rep| lr_path(model, skeleton, setup, &mut replicate_rng(seed, rep)))
        .collect()
}

fn count_stops(paths: &[LrPath]) -> StopCounts {
    let mut c = StopCounts::default();
    for p in paths {
        if p.discarded {
            c.discarded += 1;
            continue;
        }
        c.sigma1 += p.tracker.sigma1.is_some() as u64;
        c.sigma2 += p.tracker.sigma2.is_some() as u64;
        c.sigma3 += p.tracker.sigma3.is_some() as u64;
        c.beyond_budget += p.beyond_budget as u64;
        c.modified += p.tracker.modified as u64;
    }
    c
}

/// Simulate from `i − 1` up to `M_n(U)` and track `S` and `S̃`.
pub fn likelihood_ratio_experiment(
    model: &ModelSpec,
    skeleton: &Skeleton,
    n: u64,
    i: i64,
    reps: u64,
    seed: u64,
) -> Result<LikelihoodStats, McError> {
    if reps == 0 {
        return Err(McError::NoReplicates);
    }
    let setup = LrSetup::new(model, skeleton, n, i)?;
    let paths = run_lr_paths(model, skeleton, &setup, reps, seed);
    let kept: Vec<&LrPath> = paths.iter().filter(|p| !p.discarded).collect();
    let values: Vec<f64> = kept.iter().map(|p| p.s_tilde).collect();
    let summary = mean_estimate(&values, seed, None);
    let exceed = kept
        .iter()
        .filter(|p| (p.s_tilde - 1.0).abs() > setup.threshold)
        .count();
    Ok(LikelihoodStats {
        setup,
        reps,
        seed,
        mean_s: summary.estimate,
        sd_s: summary.stderr * (values.len() as f64).sqrt(),
        stderr: summary.stderr,
        exceed_prob: exceed as f64 / kept.len().max(1) as f64,
        stop_counts: count_stops(&paths),
        max_increment_ratio: kept
            .iter()
            .map(|p| p.max_increment_ratio)
            .fold(0.0, f64::max),
        increment_violations: kept.iter().map(|p| p.increment_violations).sum(),
    })
}

/// Estimate of `P_i[Z_n(U) = k+1] − P_{i−1}[Z_n(U) = k]` as
/// `E_{i−1}[(S_{M_n(U)} − 1) 1{Z_n(U) = k}]`.
pub fn coupled_point_difference(
    model: &ModelSpec,
    skeleton: &Skeleton,
    n: u64,
    i: i64,
    k: i64,
    reps: u64,
    seed: u64,
) -> Result<McEstimate, McError> {
    if reps == 0 {
        return Err(McError::NoReplicates);
    }
    let setup = LrSetup::new(model, skeleton, n, i)?;
    let paths = run_lr_paths(model, skeleton, &setup, reps, seed);
    let values: Vec<f64> = paths
        .iter()
        .filter(|p| !p.discarded)
        .map(|p| {
            if p.state_at_u == k {
                p.s_at_exit - 1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(mean_estimate(&values, seed, Some(count_stops(&paths))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_skeleton, builtin, Jump, RateFn};

    #[test]
    fn zero_rates_stay_put() {
        let m = ModelSpec::new(
            "frozen",
            vec![
                Jump::new(1, RateFn::constant(0.0), 0.0),
                Jump::new(-1, RateFn::constant(0.0), 0.0),
            ],
            1.0,
            (-1.0, 1.0),
            0.5,
        )
        .unwrap();
        let p = simulate_path(&m, 10, 7, 100.0, 3);
        assert_eq!(p.states, vec![7]);
        assert!(p.absorbed);
        assert_eq!(p.state_at(50.0), 7);
    }

    #[test]
    fn same_seed_same_path() {
        let m = builtin::sis(2.0, 1.0).unwrap();
        let a = simulate_path(&m, 50, 25, 5.0, 11);
        let b = simulate_path(&m, 50, 25, 5.0, 11);
        assert_eq!(a, b);
        let c = simulate_path(&m, 50, 25, 5.0, 12);
        assert_ne!(a, c);
        for (l, w) in a.states.windows(2).enumerate() {
            assert_eq!(w[1] - w[0], a.marks[l]);
        }
        assert!(a.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn ergodic_average_near_equilibrium() {
        let m = builtin::immigration_death(1.0, 1.0).unwrap();
        let p = simulate_path(&m, 100, 100, 50.0, 2024);
        let avg = p.time_average(|z| z as f64 / 100.0);
        // Var(Z/n) = 1/n and the correlation time is 1, so the time average
        // over 50 units has standard error about √(2/(50 n)) = 0.02.
        assert!((avg - 1.0).abs() < 3.0 * 0.02, "{avg}");
    }

    #[test]
    fn zero_horizon_pmf_is_point_mass() {
        let m = builtin::immigration_death(1.0, 1.0).unwrap();
        let e = empirical_transient_pmf(&m, 100, 93, 0.0, 50, 1).unwrap();
        assert_eq!(e.dist, LatticeDistribution::point_mass(93));
    }

    #[test]
    fn exit_probability_extremes() {
        let m = builtin::immigration_death(1.0, 1.0).unwrap();
        let s = build_skeleton(&m).unwrap();
        let none = exit_probability(&m, &s, 400, 400, 1.0, 1e6, 200, 5).unwrap();
        assert_eq!(none.estimate, 0.0);
        let all = exit_probability(&m, &s, 400, 400, 1.0, 0.0, 200, 5).unwrap();
        assert_eq!(all.estimate, 1.0);
        assert!(all.ci95.0 > 0.9);
    }

    #[test]
    fn constant_rates_give_unit_ratio() {
        let m = builtin::constant_rates(&[(1, 1.0), (-1, 1.0)]).unwrap();
        let s = Skeleton::from_parts(&m, 0.0, -1.0, 2.0);
        let stats = likelihood_ratio_experiment(&m, &s, 50, 0, 200, 9).unwrap();
        assert_eq!(stats.mean_s, 1.0);
        assert_eq!(stats.sd_s, 0.0);
        let d = coupled_point_difference(&m, &s, 50, 0, -1, 200, 9).unwrap();
        assert_eq!(d.estimate, 0.0);
    }

    #[test]
    fn forced_sigma1_on_decreasing_rate_uses_e() {
        let m = builtin::decreasing(3.0, 2.0).unwrap();
        let n = 4;
        let z = 1.0;
        // A holding time long enough that n |ΔΛ| Δt > 1.
        let (v, s1, decreasing) = lr_factor(&m, n, z, 1, 50.0);
        assert!(s1 && decreasing);
        let mut tr = LrTracker::new(false);
        let inc = tr.step(v, s1, decreasing, false);
        assert!(tr.modified);
        assert_eq!(tr.sigma1, Some(1));
        assert!((tr.s_tilde - std::f64::consts::E).abs() < 1e-15);
        assert!((inc - (std::f64::consts::E - 1.0)).abs() < 1e-15);
        // Frozen afterwards.
        assert_eq!(tr.step(1.3, false, false, false), 0.0);
        assert_eq!(tr.s_tilde, std::f64::consts::E);
    }

    #[test]
    fn sigma1_on_increasing_rate_keeps_v() {
        let m = builtin::immigration_death(1.0, 1.0).unwrap();
        let (v, s1, decreasing) = lr_factor(&m, 2, 1.0, 1, 10.0);
        assert!(s1 && !decreasing);
        let mut tr = LrTracker::new(false);
        tr.step(v, s1, decreasing, false);
        assert!(!tr.modified);
        assert_eq!(tr.s_tilde, v);
    }

    #[test]
    fn start_precondition() {
        let m = builtin::immigration_death(1.0, 1.0).unwrap();
        let s = build_skeleton(&m).unwrap();
        assert!(matches!(
            likelihood_ratio_experiment(&m, &s, 100, 300, 10, 1),
            Err(McError::StartTooFar { .. })
        ));
    }
}
