//! Distances between lattice laws and the local limit error of `Π_n`.

use serde::{Deserialize, Serialize};

use crate::generator::{
    build_generator, stationary_distribution, GeneratorError, Halfwidth, DEFAULT_TOL,
};
use crate::lattice::LatticeDistribution;
use crate::model::{ModelSpec, Skeleton};
use crate::stein_poisson::CentredPoisson;

/// Union of the two windows.
fn union(p: &LatticeDistribution, q: &LatticeDistribution) -> std::ops::RangeInclusive<i64> {
    p.lo().min(q.lo())..=p.hi().max(q.hi())
}

pub fn total_variation(p: &LatticeDistribution, q: &LatticeDistribution) -> f64 {
    0.5 * union(p, q)
        .map(|k| (p.get(k) - q.get(k)).abs())
        .sum::<f64>()
}

pub fn sup_point_distance(p: &LatticeDistribution, q: &LatticeDistribution) -> f64 {
    union(p, q)
        .map(|k| (p.get(k) - q.get(k)).abs())
        .fold(0.0, f64::max)
}

/// `d_TV(L(X), L(X + 1)) = ½ Σ_k |p(k) − p(k−1)|`.
pub fn translate_tv(p: &LatticeDistribution) -> f64 {
    0.5 * (p.lo()..=p.hi() + 1)
        .map(|k| (p.get(k) - p.get(k - 1)).abs())
        .sum::<f64>()
}

/// `sup_k |p(k) − p(k+1)|`, including the steps off either end.
pub fn max_adjacent_diff(p: &LatticeDistribution) -> f64 {
    (p.lo() - 1..=p.hi())
        .map(|k| (p.get(k) - p.get(k + 1)).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub n: u64,
    /// `d_TV(Π̂_n, Pô(n v_c))`.
    pub tv: f64,
    /// `sup_k |Π̂_n(k) − Pô(n v_c){k}|`.
    pub sup_point: f64,
    /// `d_TV(Π_n, Π_n * δ₁)`.
    pub translate_tv: f64,
    /// `sup_k |Π_n(k) − Π_n(k+1)|`.
    pub max_adjacent_diff: f64,
}

/// CSV columns: the raw distances followed by their normalizations.
pub const CSV_HEADER: [&str; 9] = [
    "n",
    "tv",
    "sup_point",
    "translate_tv",
    "max_adjacent_diff",
    "tv_scaled",
    "sup_point_scaled",
    "translate_tv_scaled",
    "max_adjacent_diff_scaled",
];

/// The four distances multiplied by the reciprocal of their expected rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledDistances {
    /// `tv · n^{α/2}`.
    pub tv: f64,
    /// `sup_point · n^{(α+1)/2} / √ln n`.
    pub sup_point: f64,
    /// `translate_tv · √n`.
    pub translate_tv: f64,
    /// `max_adjacent_diff · n / √ln n`.
    pub max_adjacent_diff: f64,
}

impl DistanceReport {
    pub fn scaled(&self, alpha: f64) -> ScaledDistances {
        let n = self.n as f64;
        let sqrt_log = n.ln().sqrt();
        ScaledDistances {
            tv: self.tv * n.powf(alpha / 2.0),
            sup_point: self.sup_point * n.powf((alpha + 1.0) / 2.0) / sqrt_log,
            translate_tv: self.translate_tv * n.sqrt(),
            max_adjacent_diff: self.max_adjacent_diff * n / sqrt_log,
        }
    }

    pub fn csv_row(&self, alpha: f64) -> [String; 9] {
        let s = self.scaled(alpha);
        [
            self.n.to_string(),
            self.tv.to_string(),
            self.sup_point.to_string(),
            self.translate_tv.to_string(),
            self.max_adjacent_diff.to_string(),
            s.tv.to_string(),
            s.sup_point.to_string(),
            s.translate_tv.to_string(),
            s.max_adjacent_diff.to_string(),
        ]
    }
}

/// `Π_n`, its centred version and the approximating law for one `n`.
#[derive(Debug, Clone)]
pub struct LocalLimit {
    pub report: DistanceReport,
    pub pi: LatticeDistribution,
    pub pi_hat: LatticeDistribution,
    pub approx: LatticeDistribution,
}

pub fn solve_local_limit(
    model: &ModelSpec,
    skeleton: &Skeleton,
    n: u64,
    halfwidth: Halfwidth,
    tol: f64,
) -> Result<LocalLimit, GeneratorError> {
    let gen = build_generator(model, skeleton, n, halfwidth)?;
    let pi = stationary_distribution(&gen, tol)?;
    let pi_hat = pi.shifted(-skeleton.centre(n));
    let approx = CentredPoisson::new(n as f64 * skeleton.v_c)
        .expect("v_c > 0 by construction of the skeleton")
        .distribution();
    let report = DistanceReport {
        n,
        tv: total_variation(&pi_hat, &approx),
        sup_point: sup_point_distance(&pi_hat, &approx),
        translate_tv: translate_tv(&pi),
        max_adjacent_diff: max_adjacent_diff(&pi),
    };
    Ok(LocalLimit {
        report,
        pi,
        pi_hat,
        approx,
    })
}

/// Distances between `Π̂_n` and `Pô(n v_c)` with an AUTO window.
pub fn local_limit_error(
    model: &ModelSpec,
    skeleton: &Skeleton,
    n: u64,
) -> Result<DistanceReport, GeneratorError> {
    solve_local_limit(model, skeleton, n, Halfwidth::Auto, DEFAULT_TOL).map(|l| l.report)
}

/// `E|Z/n − c| 1{|Z/n − c| > δ}` and `E(Z/n − c)² 1{|Z/n − c| ≤ δ}` for
/// `Z ~ pi` on absolute states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailMoments {
    pub m_out: f64,
    pub m2_in: f64,
}

pub fn tail_moments(pi: &LatticeDistribution, c: f64, delta: f64, n: u64) -> TailMoments {
    let nf = n as f64;
    let mut m_out = 0.0;
    let mut m2_in = 0.0;
    for (k, p) in pi.iter() {
        let d = k as f64 / nf - c;
        if d.abs() > delta {
            m_out += p * d.abs();
        } else {
            m2_in += p * d * d;
        }
    }
    TailMoments { m_out, m2_in }
}
