use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use poplim::config::{check_grid, load_config, parse_param, ConfigError, FileConfig, ModelConfig};
use poplim::generator::{
    build_generator, stationary_distribution, GeneratorError, Halfwidth, DEFAULT_TOL,
};
use poplim::harness::{
    render_report, run_sweep, HarnessError, ReportFormat, SweepConfig, DEFAULT_GRID,
};
use poplim::metrics::{solve_local_limit, tail_moments};
use poplim::model::{build_skeleton, check_assumptions, ModelSpec, Skeleton};
use poplim::montecarlo::{likelihood_ratio_experiment, simulate_path, McError};
use poplim::stein_poisson::{norm_bounds_check, residual_sweep, stein_solution, SteinError};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "poplim",
    version,
    about = "Translated Poisson local limits for population processes"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with [model] and [run] tables; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Registered model name (immigration-death, sis, three-jump, decreasing).
    #[arg(long, global = true)]
    model: Option<String>,
    /// Model parameter as key=value; repeatable.
    #[arg(long = "param", global = true)]
    params: Vec<String>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    reps: Option<u64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary law of Z_n on its window.
    Stationary {
        #[arg(long)]
        n: Option<u64>,
        /// Fixed window half-width instead of the adaptive choice.
        #[arg(long)]
        halfwidth: Option<u64>,
    },
    /// Local limit error against the centred Poisson law for one n.
    Approx {
        #[arg(long)]
        n: Option<u64>,
    },
    /// Local limit errors over a grid of n, with rate fits.
    Sweep {
        /// Comma separated, strictly increasing.
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<u64>>,
    },
    /// One Gillespie path.
    Simulate {
        #[arg(long)]
        n: Option<u64>,
        /// Initial state; defaults to floor(n c).
        #[arg(long)]
        init: Option<i64>,
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
    },
    /// Likelihood-ratio martingale for chains started one apart.
    LrExperiment {
        #[arg(long)]
        n: Option<u64>,
        /// Start of the upper chain; defaults to floor(n c).
        #[arg(long)]
        i: Option<i64>,
    },
    /// Stein solution bounds for (mu, s), or the residual decomposition
    /// for the model at n when --n is given.
    SteinCheck {
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        s: Option<i64>,
        #[arg(long)]
        n: Option<u64>,
    },
}

enum Failure {
    Config(String),
    Solver(String),
    Invariant(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<poplim::model::ModelError> for Failure {
    fn from(e: poplim::model::ModelError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<GeneratorError> for Failure {
    fn from(e: GeneratorError) -> Self {
        Failure::Solver(e.to_string())
    }
}

impl From<SteinError> for Failure {
    fn from(e: SteinError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<McError> for Failure {
    fn from(e: McError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Solve { .. } => Failure::Solver(e.to_string()),
            HarnessError::Io { .. } => Failure::Solver(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

struct Context {
    file: FileConfig,
    model_cfg: ModelConfig,
    tol: f64,
    reps: u64,
    seed: u64,
    out: Option<PathBuf>,
    format: ReportFormat,
}

impl Context {
    fn new(common: &Common) -> Result<Self, Failure> {
        let file = match &common.config {
            Some(path) => load_config(path)?,
            None => FileConfig {
                model: None,
                run: Default::default(),
            },
        };
        let mut model_cfg = match (&common.model, &file.model) {
            (Some(name), Some(m)) if &m.name == name => m.clone(),
            (Some(name), _) => ModelConfig::named(name),
            (None, Some(m)) => m.clone(),
            (None, None) => ModelConfig::named("sis"),
        };
        for p in &common.params {
            let (k, v) = parse_param(p)?;
            model_cfg.params.insert(k, v);
        }
        let format = common
            .format
            .clone()
            .or_else(|| file.run.format.clone())
            .unwrap_or_else(|| "json".to_string())
            .parse()
            .map_err(Failure::Config)?;
        Ok(Context {
            tol: common.tol.or(file.run.tol).unwrap_or(DEFAULT_TOL),
            reps: common.reps.or(file.run.reps).unwrap_or(1000),
            seed: common.seed.or(file.run.seed).unwrap_or(1),
            out: common.out.clone().or_else(|| file.run.out.clone()),
            format,
            model_cfg,
            file,
        })
    }

    fn n(&self, flag: Option<u64>) -> Result<u64, Failure> {
        flag.or(self.file.run.n)
            .ok_or_else(|| Failure::Config("--n is required".to_string()))
    }

    fn model(&self) -> Result<(ModelSpec, Skeleton), Failure> {
        let model = self.model_cfg.build()?;
        let skeleton = build_skeleton(&model)?;
        Ok((model, skeleton))
    }

    fn write(&self, text: &str) -> Result<(), Failure> {
        match &self.out {
            Some(path) => std::fs::write(path, text)
                .map_err(|e| Failure::Solver(format!("cannot write {}: {e}", path.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn write_json<T: Serialize>(&self, value: &T) -> Result<(), Failure> {
        let mut s = serde_json::to_string_pretty(value).expect("serializable output");
        s.push('\n');
        self.write(&s)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let ctx = Context::new(&cli.common)?;
    match cli.command {
        Command::Stationary { n, halfwidth } => {
            let n = ctx.n(n)?;
            let (model, skeleton) = ctx.model()?;
            let hw = halfwidth
                .or(ctx.file.run.halfwidth)
                .map_or(Halfwidth::Auto, Halfwidth::Fixed);
            let gen = build_generator(&model, &skeleton, n, hw)?;
            let pi = stationary_distribution(&gen, ctx.tol)?;
            match ctx.format {
                ReportFormat::Json => ctx.write_json(&pi.to_record(n, &model.name)),
                ReportFormat::Csv => {
                    let mut buf = Vec::new();
                    pi.write_csv(&mut buf)
                        .map_err(|e| Failure::Solver(e.to_string()))?;
                    ctx.write(&String::from_utf8_lossy(&buf))
                }
            }
        }
        Command::Approx { n } => {
            let n = ctx.n(n)?;
            let (model, skeleton) = ctx.model()?;
            let ll = solve_local_limit(&model, &skeleton, n, Halfwidth::Auto, ctx.tol)?;
            let r = ll.report;
            if r.sup_point > r.tv + 1e-15 || r.max_adjacent_diff > 2.0 * r.translate_tv + 1e-15 {
                return Err(Failure::Invariant(format!(
                    "distance ordering violated: {r:?}"
                )));
            }
            #[derive(Serialize)]
            struct Out {
                model: String,
                skeleton: Skeleton,
                report: poplim::metrics::DistanceReport,
                scaled: poplim::metrics::ScaledDistances,
                tails: poplim::metrics::TailMoments,
            }
            ctx.write_json(&Out {
                model: model.name.clone(),
                skeleton,
                report: r,
                scaled: r.scaled(model.alpha),
                tails: tail_moments(&ll.pi, skeleton.c, model.delta, n),
            })
        }
        Command::Sweep { n_grid } => {
            let grid = n_grid
                .or_else(|| ctx.file.run.n_grid.clone())
                .unwrap_or_else(|| DEFAULT_GRID.to_vec());
            check_grid(&grid)?;
            let mut cfg = SweepConfig::new(ctx.model_cfg.clone(), grid);
            cfg.tol = ctx.tol;
            let report = run_sweep(&cfg)?;
            ctx.write(&render_report(&report, ctx.format))
        }
        Command::Simulate { n, init, horizon } => {
            let n = ctx.n(n)?;
            let (model, skeleton) = ctx.model()?;
            let init = init.unwrap_or_else(|| skeleton.centre(n));
            let path = simulate_path(&model, n, init, horizon, ctx.seed);
            match ctx.format {
                ReportFormat::Json => ctx.write_json(&path),
                ReportFormat::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["time", "state", "jump"])
                        .map_err(|e| Failure::Solver(e.to_string()))?;
                    for (l, (t, z)) in path.times.iter().zip(&path.states).enumerate() {
                        let mark = if l == 0 {
                            String::new()
                        } else {
                            path.marks[l - 1].to_string()
                        };
                        w.write_record([t.to_string(), z.to_string(), mark])
                            .map_err(|e| Failure::Solver(e.to_string()))?;
                    }
                    let bytes = w.into_inner().map_err(|e| Failure::Solver(e.to_string()))?;
                    ctx.write(&String::from_utf8_lossy(&bytes))
                }
            }
        }
        Command::LrExperiment { n, i } => {
            let n = ctx.n(n)?;
            let (model, skeleton) = ctx.model()?;
            let i = i.unwrap_or_else(|| skeleton.centre(n));
            let stats = likelihood_ratio_experiment(&model, &skeleton, n, i, ctx.reps, ctx.seed)?;
            #[derive(Serialize)]
            struct Out {
                #[serde(flatten)]
                estimate: poplim::montecarlo::McEstimate,
                details: poplim::montecarlo::LikelihoodStats,
            }
            let violations = stats.increment_violations;
            ctx.write_json(&Out {
                estimate: stats.estimate(),
                details: stats,
            })?;
            if violations > 0 {
                return Err(Failure::Invariant(format!(
                    "{violations} increments exceeded their bound"
                )));
            }
            Ok(())
        }
        Command::SteinCheck { mu, s, n } => {
            if let Some(n) = n {
                let (model, skeleton) = ctx.model()?;
                let ll = solve_local_limit(&model, &skeleton, n, Halfwidth::Auto, ctx.tol)?;
                let floor_mu = (n as f64 * skeleton.v_c).floor() as i64;
                let lo = ll.pi_hat.lo().max(-floor_mu);
                let sweep =
                    residual_sweep(&model, &skeleton, n, &ll.pi_hat, lo..=ll.pi_hat.hi(), 1e-9)?;
                let assumptions = check_assumptions(&model, &skeleton, 2001);
                #[derive(Serialize)]
                struct Out {
                    assumptions: poplim::model::AssumptionReport,
                    residuals: poplim::stein_poisson::ResidualSweep,
                }
                let bad = sweep.violations.len();
                ctx.write_json(&Out {
                    assumptions,
                    residuals: sweep,
                })?;
                if bad > 0 {
                    return Err(Failure::Invariant(format!(
                        "residual bound violated at {bad} points"
                    )));
                }
                return Ok(());
            }
            let mu = mu.ok_or_else(|| Failure::Config("--mu or --n is required".into()))?;
            let s = s.unwrap_or(mu.floor() as i64);
            let sol = stein_solution(mu, s, s + 2)?;
            let report = norm_bounds_check(&sol);
            let mut out = BTreeMap::new();
            out.insert(
                "report",
                serde_json::to_value(&report).expect("serializable"),
            );
            out.insert(
                "norms",
                serde_json::to_value(sol.norms).expect("serializable"),
            );
            ctx.write_json(&out)?;
            if !report.holds() || report.max_plugback_residual > 1e-12 {
                return Err(Failure::Invariant("Stein solution bound violated".into()));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Config(m) => (EXIT_CONFIG, m),
                Failure::Solver(m) => (EXIT_SOLVER, m),
                Failure::Invariant(m) => (EXIT_INVARIANT, m),
            };
            eprintln!("poplim: {msg}");
            ExitCode::from(code)
        }
    }
}
