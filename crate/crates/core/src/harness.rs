//! Sweeps over `n`, rate fits and report output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{check_grid, ConfigError, ModelConfig};
use crate::generator::{GeneratorError, Halfwidth, DEFAULT_TOL};
use crate::metrics::{solve_local_limit, tail_moments, DistanceReport, CSV_HEADER};
use crate::model::{build_skeleton, ModelError};

pub const DEFAULT_GRID: [u64; 7] = [50, 100, 200, 400, 800, 1600, 3200];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("solve failed at n = {n}: {source}")]
    Solve { n: u64, source: GeneratorError },
    #[error("cannot write {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("a rate fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("log-log fit needs positive values, got ({x}, {y})")]
    NonpositiveValue { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least squares fit of `ln y = intercept + slope · ln x`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<Fit, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    if let Some(&(x, y)) = points.iter().find(|&&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(FitError::NonpositiveValue { x, y });
    }
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(Fit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub model: ModelConfig,
    pub n_grid: Vec<u64>,
    pub tol: f64,
    pub halfwidth: Halfwidth,
}

impl SweepConfig {
    pub fn new(model: ModelConfig, n_grid: Vec<u64>) -> Self {
        SweepConfig {
            model,
            n_grid,
            tol: DEFAULT_TOL,
            halfwidth: Halfwidth::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub n: u64,
    pub m_out: f64,
    pub m2_in: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub model: String,
    pub alpha: f64,
    pub rows: Vec<DistanceReport>,
    pub tails: Vec<TailRow>,
    /// Log-log fits of each distance against `n`.
    pub fits: BTreeMap<String, Fit>,
    /// Metrics whose fit could not be formed, with the reason.
    pub fit_errors: BTreeMap<String, String>,
    /// Maxima of the normalized columns.
    pub empirical_constants: BTreeMap<String, f64>,
    /// `max / min` of each normalized column and of `n m_out`, `n m2_in`,
    /// recorded when the minimum is positive.
    pub spread: BTreeMap<String, f64>,
}

fn spread(values: &[f64]) -> Option<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    (min > 0.0 && max.is_finite()).then(|| max / min)
}

pub fn run_sweep(config: &SweepConfig) -> Result<ConvergenceReport, HarnessError> {
    check_grid(&config.n_grid)?;
    let model = config.model.build()?;
    let skeleton = build_skeleton(&model)?;
    let solved: Vec<(DistanceReport, TailRow)> = config
        .n_grid
        .par_iter()
        .map(|&n| {
            let ll = solve_local_limit(&model, &skeleton, n, config.halfwidth, config.tol)
                .map_err(|source| HarnessError::Solve { n, source })?;
            let t = tail_moments(&ll.pi, skeleton.c, model.delta, n);
            Ok((
                ll.report,
                TailRow {
                    n,
                    m_out: t.m_out,
                    m2_in: t.m2_in,
                },
            ))
        })
        .collect::<Result<_, HarnessError>>()?;
    let (rows, tails): (Vec<_>, Vec<_>) = solved.into_iter().unzip();

    let alpha = model.alpha;
    let mut fits = BTreeMap::new();
    let mut fit_errors = BTreeMap::new();
    let mut empirical_constants = BTreeMap::new();
    let mut spreads = BTreeMap::new();
    let columns: [(&str, fn(&DistanceReport) -> f64); 4] = [
        ("tv", |r| r.tv),
        ("sup_point", |r| r.sup_point),
        ("translate_tv", |r| r.translate_tv),
        ("max_adjacent_diff", |r| r.max_adjacent_diff),
    ];
    let scaled: Vec<_> = rows.iter().map(|r| r.scaled(alpha)).collect();
    let scaled_columns: [(&str, Vec<f64>); 4] = [
        ("tv_scaled", scaled.iter().map(|s| s.tv).collect()),
        (
            "sup_point_scaled",
            scaled.iter().map(|s| s.sup_point).collect(),
        ),
        (
            "translate_tv_scaled",
            scaled.iter().map(|s| s.translate_tv).collect(),
        ),
        (
            "max_adjacent_diff_scaled",
            scaled.iter().map(|s| s.max_adjacent_diff).collect(),
        ),
    ];
    if rows.len() >= 3 {
        for (name, get) in columns {
            let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, get(r))).collect();
            match fit_rate(&points) {
                Ok(fit) => {
                    fits.insert(name.to_string(), fit);
                }
                Err(e) => {
                    fit_errors.insert(name.to_string(), e.to_string());
                }
            }
        }
    }
    for (name, values) in &scaled_columns {
        if !values.is_empty() {
            empirical_constants.insert(
                name.to_string(),
                values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            );
        }
        if let Some(s) = spread(values) {
            spreads.insert(name.to_string(), s);
        }
    }
    let n_out: Vec<f64> = tails.iter().map(|t| t.n as f64 * t.m_out).collect();
    let n_in: Vec<f64> = tails.iter().map(|t| t.n as f64 * t.m2_in).collect();
    for (name, values) in [("n_m_out", n_out), ("n_m2_in", n_in)] {
        if let Some(s) = spread(&values) {
            spreads.insert(name.to_string(), s);
        }
    }
    Ok(ConvergenceReport {
        model: model.name.clone(),
        alpha,
        rows,
        tails,
        fits,
        fit_errors,
        empirical_constants,
        spread: spreads,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

/// The report as CSV (one row per `n`) or pretty JSON.
pub fn render_report(report: &ConvergenceReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report is serializable");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER).expect("in-memory write");
            for row in &report.rows {
                w.write_record(row.csv_row(report.alpha))
                    .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
        }
    }
}

pub fn emit_report(
    report: &ConvergenceReport,
    format: ReportFormat,
    path: &Path,
) -> Result<(), HarnessError> {
    std::fs::write(path, render_report(report, format)).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x| (x, 1.0 / x)).collect();
        let f = fit_rate(&pts).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);

        let pts: Vec<(f64, f64)> = [3.0, 10.0, 50.0]
            .iter()
            .map(|&x: &f64| (x, 5.0 * x.powf(-1.5)))
            .collect();
        let f = fit_rate(&pts).unwrap();
        assert!((f.slope + 1.5).abs() < 1e-13);
        assert!((f.intercept - 5f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn fit_errors() {
        assert_eq!(
            fit_rate(&[(1.0, 1.0), (2.0, 0.5)]),
            Err(FitError::TooFewPoints(2))
        );
        assert!(matches!(
            fit_rate(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]),
            Err(FitError::NonpositiveValue { .. })
        ));
    }

    #[test]
    fn empty_report_csv_is_header_only() {
        let report = ConvergenceReport {
            model: "m".into(),
            alpha: 1.0,
            rows: vec![],
            tails: vec![],
            fits: BTreeMap::new(),
            fit_errors: BTreeMap::new(),
            empirical_constants: BTreeMap::new(),
            spread: BTreeMap::new(),
        };
        let csv = render_report(&report, ReportFormat::Csv);
        assert_eq!(csv.lines().count(), 1);
        assert_eq!(csv.trim_end().split(',').count(), 9);
    }

    #[test]
    fn two_point_grid_has_rows_but_no_fits() {
        let cfg = SweepConfig::new(ModelConfig::named("sis"), vec![50, 100]);
        let report = run_sweep(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.fits.is_empty());
    }

    #[test]
    fn bad_grid_is_a_config_error() {
        let cfg = SweepConfig::new(ModelConfig::named("sis"), vec![100, 50]);
        assert!(matches!(run_sweep(&cfg), Err(HarnessError::Config(_))));
    }

    #[test]
    fn format_parsing() {
        assert_eq!("CSV".parse::<ReportFormat>(), Ok(ReportFormat::Csv));
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
