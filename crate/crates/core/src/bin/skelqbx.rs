use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use skelqbx::config::ExperimentConfig;
use skelqbx::experiments::{
    cmd_ablate_weight, cmd_bvp, cmd_estimate_q, cmd_forward_error, cmd_scaling, cmd_solve_error, cmd_sweep_proxy,
    predicted_error, Report,
};
use skelqbx::solver::{write_stats_csv, FastSolver};
use skelqbx::{Error, Result};
use serde::Serialize;

/// Thread count override for the worker pool.
const THREADS_VAR: &str = "SKELQBX_THREADS";

#[derive(Parser)]
#[command(name = "skelqbx", version, about = "Fast direct solver experiments for QBX boundary integral equations")]
struct Cli {
    /// TOML experiment file; defaults apply to anything left out.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override the output directory.
    #[arg(short, long, global = true)]
    output_dir: Option<PathBuf>,
    /// Override the random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compressed vs. dense forward error per ID tolerance.
    ForwardError,
    /// Forward error with and without proxy weighting.
    AblateWeight,
    /// Error against proxy order for several proxy factors.
    SweepProxy,
    /// Doubling-search proxy count against the error-model estimate.
    EstimateQ,
    /// Error of the recovered density per ID tolerance.
    SolveError,
    /// Wall time against problem size.
    Scaling,
    /// Interior Dirichlet problem with a known harmonic solution.
    Bvp,
    /// Per-level factor statistics for the first tolerance.
    Stats,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn save<R: Serialize>(rep: &Report<R>, cfg: &ExperimentConfig) -> Result<()> {
    let path = rep.save(&cfg.output_dir)?;
    println!("wrote {}", path.display());
    for (k, v) in &rep.summary {
        println!("  {k} = {v:.4e}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = cli.output_dir {
        cfg.output_dir = d;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    match cli.command {
        Command::ForwardError => save(&cmd_forward_error(&cfg)?, &cfg),
        Command::AblateWeight => save(&cmd_ablate_weight(&cfg)?, &cfg),
        Command::SweepProxy => save(&cmd_sweep_proxy(&cfg)?, &cfg),
        Command::EstimateQ => {
            let out = cmd_estimate_q(&cfg)?;
            save(&out.report, &cfg)?;
            #[derive(Serialize)]
            struct FitRow {
                eps_id: f64,
                q: usize,
                measured: f64,
                predicted: f64,
            }
            let mut fit = Report { name: "estimate_q_fit".into(), meta: out.report.meta.clone(), summary: Vec::new(), rows: Vec::new() };
            for p in &out.sweep {
                fit.rows.push(FitRow { eps_id: p.eps_id, q: p.q, measured: p.measured, predicted: predicted_error(p, &out.constants)? });
            }
            save(&fit, &cfg)
        }
        Command::SolveError => save(&cmd_solve_error(&cfg)?, &cfg),
        Command::Scaling => save(&cmd_scaling(&cfg)?, &cfg),
        Command::Bvp => save(&cmd_bvp(&cfg)?, &cfg),
        Command::Stats => {
            let tol = *cfg.tolerances.first().ok_or_else(|| Error::Config("no tolerances given".into()))?;
            let spec = cfg.operator_spec();
            let disc = cfg.discretization()?;
            let params = skelqbx::experiments::resolve_params(&cfg, &spec, &disc, tol)?;
            let solver = FastSolver::new(&spec, &disc, cfg.solver.leaf_panels, &params, cfg.levels())?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join("stats.csv");
            write_stats_csv(std::fs::File::create(&path)?, &solver.factor.stats())?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::ShowConfig => {
            print!("{}", cfg.to_toml_string()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_VAR) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error code=11 kind=config message=\"{e}\"");
                    return ExitCode::from(11);
                }
            }
            _ => {
                eprintln!("error code=11 kind=config message=\"{THREADS_VAR} must be a positive integer, got {v:?}\"");
                return ExitCode::from(11);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('"', "'");
            eprintln!("error code={} kind={} message=\"{msg}\"", e.code(), e.kind());
            ExitCode::from(e.code().clamp(1, 255) as u8)
        }
    }
}
