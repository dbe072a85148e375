//! `emtl` command-line harness.
//!
//! Exit codes: 0 success, 1 configuration error, 2 run failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use emtl_core::harness::{render_loss_svg, summarize, theorem1_diagnostic, RunSummary, Theorem1Config};
use emtl_core::problems::{ProblemSpec, SynthRegConfig, QUAD2, SYNTHREG};
use emtl_core::{run, run_grid, EmtlConfig, GridConfig, RunConfig, RunResult, Strategy};

#[derive(Debug, Parser)]
#[command(name = "emtl", version, about = "Multi-task optimization benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one method on one problem and write its trajectory.
    Run(RunArgs),
    /// Run every configuration of a JSON grid file.
    Grid {
        #[arg(long)]
        config: PathBuf,
        /// Override the grid's thread count.
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Sweep rho on synthreg and report train/held-out relative-rate gaps.
    #[command(name = "diag-theorem1")]
    DiagTheorem1 {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long, default_value = QUAD2)]
    problem: String,
    #[arg(long, default_value = "emtl")]
    method: String,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long = "eta-p", default_value_t = 0.5)]
    eta_p: f64,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-task loss scales, comma separated.
    #[arg(long, value_delimiter = ',')]
    scale: Vec<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Init point index; runs every init point when omitted.
    #[arg(long)]
    init: Option<usize>,
    #[arg(long = "record-every", default_value_t = 1)]
    record_every: usize,
    /// Halve the step size at 40% and 80% of the budget.
    #[arg(long = "lr-decay")]
    lr_decay: bool,
    /// BanditMTL: divide losses by their running mean.
    #[arg(long = "normalize-losses")]
    normalize_losses: bool,
}

enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl Failure {
    fn exit(self) -> ExitCode {
        match self {
            Failure::Config(e) => {
                eprintln!("config error: {e:#}");
                ExitCode::from(1)
            }
            Failure::Run(e) => {
                eprintln!("run failed: {e:#}");
                ExitCode::from(2)
            }
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn config_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn run_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Run(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Grid { config, parallelism } => cmd_grid(&config, parallelism),
        Command::DiagTheorem1 { config } => cmd_diag(&config),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.exit(),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config_err)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(config_err)
}

/// Checks everything that can be checked before the first step.
fn precheck(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate().map_err(config_err)?;
    let spec = cfg.problem.complete(cfg.seed).map_err(config_err)?;
    if cfg.init_index >= spec.init_points.len() {
        return Err(config_err(anyhow!(
            "init_index {} out of range ({} init points)",
            cfg.init_index,
            spec.init_points.len()
        )));
    }
    Ok(())
}

fn write_outputs(
    dir: &Path,
    configs: &[RunConfig],
    results: &[emtl_core::Result<RunResult>],
) -> CliResult<Vec<RunSummary>> {
    let summaries: Vec<RunSummary> = configs.iter().zip(results).map(|(c, r)| summarize(c, r)).collect();
    fs::create_dir_all(dir).map_err(run_err)?;
    let json = serde_json::to_string_pretty(&summaries).map_err(run_err)?;
    fs::write(dir.join("summary.json"), json).map_err(run_err)?;

    let plotted: Vec<(String, &RunResult)> = configs
        .iter()
        .zip(results)
        .filter(|(c, _)| c.problem.name == QUAD2)
        .filter_map(|(c, r)| r.as_ref().ok().map(|r| (c.method.to_string(), r)))
        .collect();
    if !plotted.is_empty() {
        fs::write(dir.join("loss_plane.svg"), render_loss_svg(&plotted)).map_err(run_err)?;
    }
    Ok(summaries)
}

fn report(summaries: &[RunSummary]) -> CliResult<()> {
    let mut failed = 0;
    for s in summaries {
        match (&s.error, s.final_avg_loss) {
            (Some(e), _) => {
                failed += 1;
                println!("{:<40} FAILED  {e}", s.name);
            }
            (None, avg) => println!(
                "{:<40} avg_loss={:<14} dist_ref={:<12} converged={}",
                s.name,
                avg.map_or("inf".to_string(), |v| format!("{v:.6e}")),
                s.distance_to_reference.map_or("-".to_string(), |v| format!("{v:.4e}")),
                s.converged.unwrap_or(false)
            ),
        }
    }
    if failed > 0 {
        return Err(run_err(anyhow!("{failed} of {} runs failed", summaries.len())));
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let method: Strategy = args.method.parse().map_err(config_err)?;
    let problem = match args.problem.as_str() {
        QUAD2 => {
            let mut spec = ProblemSpec::quad2(emtl_core::problems::QUAD2_DEFAULT_SCALES);
            if !args.scale.is_empty() {
                spec = ProblemSpec {
                    scale_factors: args.scale.clone(),
                    pareto_reference: None,
                    ..spec
                };
            }
            spec
        }
        SYNTHREG => {
            let scales = if args.scale.is_empty() {
                vec![1.0, 10.0, 0.1]
            } else {
                args.scale.clone()
            };
            ProblemSpec::synthreg(scales, SynthRegConfig::default())
        }
        other => return Err(config_err(emtl_core::MtlError::UnknownProblem(other.to_string()))),
    };
    let emtl = EmtlConfig {
        rho: args.rho,
        eta_p: args.eta_p,
        epsilon: args.epsilon,
        lr: args.lr,
        steps: args.steps,
        normalize_losses: args.normalize_losses,
        ..EmtlConfig::default()
    };
    let base = RunConfig {
        seed: args.seed,
        record_every: args.record_every,
        output_path: args.out.display().to_string(),
        lr_decay: args.lr_decay,
        ..RunConfig::new(problem, method, emtl)
    };
    precheck(&base)?;
    let n_inits = base.problem.complete(base.seed).map_err(config_err)?.init_points.len();
    let inits: Vec<usize> = match args.init {
        Some(i) => vec![i],
        None => (0..n_inits).collect(),
    };
    let configs: Vec<RunConfig> = inits
        .into_iter()
        .map(|init_index| RunConfig {
            init_index,
            ..base.clone()
        })
        .collect();
    for c in &configs {
        precheck(c)?;
    }
    let results: Vec<_> = configs.iter().map(run).collect();
    let summaries = write_outputs(&args.out, &configs, &results)?;
    report(&summaries)
}

fn cmd_grid(path: &Path, parallelism: Option<usize>) -> CliResult<()> {
    let grid: GridConfig = read_json(path)?;
    let configs = grid.expand();
    if configs.is_empty() {
        return Err(config_err(anyhow!("grid has no runs")));
    }
    for c in &configs {
        precheck(c)?;
    }
    let threads = parallelism.unwrap_or(grid.parallelism);
    let results = run_grid(&configs, threads).map_err(config_err)?;
    let dir = configs
        .iter()
        .find(|c| !c.output_path.is_empty())
        .map(|c| PathBuf::from(&c.output_path))
        .unwrap_or_else(|| PathBuf::from("."));
    let summaries = write_outputs(&dir, &configs, &results)?;
    report(&summaries)
}

fn cmd_diag(path: &Path) -> CliResult<()> {
    let cfg: Theorem1Config = read_json(path)?;
    cfg.run.validate().map_err(config_err)?;
    if cfg.run.problem.name != SYNTHREG {
        return Err(config_err(anyhow!("diag-theorem1 needs problem synthreg")));
    }
    let synth = cfg.run.problem.synth.clone().unwrap_or_default();
    if synth.n_val == 0 && !synth.same_holdout {
        return Err(config_err(anyhow!("diag-theorem1 needs a held-out split")));
    }
    let report = theorem1_diagnostic(&cfg).map_err(run_err)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(run_err)?);
    if !report.failures.is_empty() {
        return Err(run_err(anyhow!("{} diagnostic runs failed", report.failures.len())));
    }
    Ok(())
}
