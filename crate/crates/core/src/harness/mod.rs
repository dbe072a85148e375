//! Training loop, trajectory recording and the experiment grid.

mod diag;
mod svg;
mod trajectory;

pub use diag::{spearman, theorem1_diagnostic, RhoSummary, Theorem1Config, Theorem1Entry, Theorem1Report};
pub use svg::render_loss_svg;
pub use trajectory::{read_trajectory_csv, trajectory_header, write_trajectory_csv, TrajectoryRow};

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MtlError, Result};
use crate::problems::{build_problem, ProblemSpec};
use crate::rates::rate_spread;
use crate::types::{EmtlConfig, ParamVector, TrajectoryRecord};
use crate::weighting::{Strategy, Weighter};

/// A step direction shorter than this counts as converged.
pub const CONVERGENCE_TOL: f64 = 1e-8;

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub method: Strategy,
    #[serde(default)]
    pub emtl: EmtlConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Directory receiving the trajectory CSV; empty disables output.
    #[serde(default)]
    pub output_path: String,
    /// Which of the problem's init points to start from.
    #[serde(default)]
    pub init_index: usize,
    /// Halve the step size at 40% and 80% of the budget.
    #[serde(default)]
    pub lr_decay: bool,
}

impl RunConfig {
    pub fn new(problem: ProblemSpec, method: Strategy, emtl: EmtlConfig) -> Self {
        RunConfig {
            problem,
            method,
            emtl,
            seed: 0,
            record_every: 1,
            output_path: String::new(),
            init_index: 0,
            lr_decay: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.emtl.validate()?;
        if self.record_every == 0 {
            return Err(MtlError::invalid("record_every must be positive"));
        }
        Ok(())
    }

    pub fn run_name(&self) -> String {
        format!(
            "{}_{}_init{}_seed{}",
            self.problem.name, self.method, self.init_index, self.seed
        )
    }

    pub fn trajectory_file(&self) -> Option<PathBuf> {
        if self.output_path.is_empty() {
            None
        } else {
            Some(PathBuf::from(&self.output_path).join(format!("{}.csv", self.run_name())))
        }
    }

    fn lr_at(&self, step: usize) -> f64 {
        if !self.lr_decay {
            return self.emtl.lr;
        }
        let steps = self.emtl.steps as f64;
        let halvings = [0.4, 0.8]
            .iter()
            .filter(|f| step as f64 >= (*f * steps).floor())
            .count();
        self.emtl.lr / f64::powi(2.0, halvings as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub trajectory: Vec<TrajectoryRecord>,
    pub final_theta: ParamVector,
    pub final_losses: Vec<f64>,
    pub final_avg_loss: f64,
    /// Distance from the final parameters to the problem's reference point.
    pub distance_to_reference: f64,
    pub converged: bool,
    /// Snapshot with the lowest selection loss (the one the run returns).
    pub best_step: usize,
    pub best_theta: ParamVector,
    pub best_selection_loss: f64,
    pub final_direction_norm: f64,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Runs one configuration: evaluate, weight, step, record.
///
/// `steps + 1` states are visited (the initial one included); the full budget
/// always executes and the best snapshot is reported alongside the final one.
pub fn run(config: &RunConfig) -> Result<RunResult> {
    config.validate()?;
    let problem = build_problem(&config.problem, config.seed)?;
    let spec = problem.spec();
    let mut theta = spec.init_points.get(config.init_index).cloned().ok_or_else(|| {
        MtlError::invalid(format!(
            "init_index {} out of range ({} init points)",
            config.init_index,
            spec.init_points.len()
        ))
    })?;
    let reference = spec.pareto_reference.clone();
    let num_tasks = problem.num_tasks();
    let mut weighter = Weighter::new(config.method, config.emtl.clone(), num_tasks)?;
    let steps = config.emtl.steps;

    let mut trajectory = Vec::with_capacity(steps / config.record_every + 2);
    let mut converged = false;
    let mut best = (f64::INFINITY, 0usize, theta.clone());
    let mut last_losses = Vec::new();
    let mut last_direction_norm = 0.0;

    for step in 0..=steps {
        let evals = problem.evaluate(&theta, step).map_err(|e| e.at_step(step))?;
        let out = weighter.step(&evals).map_err(|e| e.at_step(step))?;
        let direction = evals.combine(&out.effective_weights);
        let direction_norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();

        let selection = problem.selection_loss(&theta).map_err(|e| e.at_step(step))?;
        if selection < best.0 {
            best = (selection, step, theta.clone());
        }

        let losses = evals.losses();
        if step % config.record_every == 0 || step == steps {
            let avg = losses.iter().sum::<f64>() / num_tasks as f64;
            trajectory.push(TrajectoryRecord {
                step,
                theta: theta.clone(),
                losses: losses.clone(),
                objective_diagnostic: avg + config.emtl.rho * rate_spread(&out.rates.raw),
                alpha: out.alpha,
                p: out.p,
                effective_weights: out.effective_weights,
                relative_rates: out.rates,
            });
        }
        last_losses = losses;
        last_direction_norm = direction_norm;

        if step < steps {
            if direction_norm < CONVERGENCE_TOL {
                converged = true;
            }
            let lr = config.lr_at(step);
            let next: Vec<f64> = theta
                .as_slice()
                .iter()
                .zip(&direction)
                .map(|(t, d)| t - lr * d)
                .collect();
            theta = ParamVector::new(next).map_err(|e| e.at_step(step))?;
        }
    }

    if let Some(path) = config.trajectory_file() {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        write_trajectory_csv(&path, &trajectory)?;
    }

    let final_avg_loss = last_losses.iter().sum::<f64>() / num_tasks as f64;
    let distance_to_reference = reference
        .map(|r| distance(theta.as_slice(), r.as_slice()))
        .unwrap_or(f64::NAN);
    Ok(RunResult {
        trajectory,
        final_theta: theta,
        final_losses: last_losses,
        final_avg_loss,
        distance_to_reference,
        converged,
        best_step: best.1,
        best_theta: best.2,
        best_selection_loss: best.0,
        final_direction_norm: last_direction_norm,
    })
}

/// Runs independent configurations on a pool of `parallelism` threads.
/// Results keep input order; a failed run occupies its slot as an error.
pub fn run_grid(configs: &[RunConfig], parallelism: usize) -> Result<Vec<Result<RunResult>>> {
    if configs.is_empty() {
        return Err(MtlError::invalid("grid has no runs"));
    }
    if parallelism == 0 {
        return Err(MtlError::invalid("parallelism must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| MtlError::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(|| configs.par_iter().map(run).collect()))
}

fn default_parallelism() -> usize {
    1
}

/// Grid file: base runs, optionally crossed with methods, init points and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub runs: Vec<RunConfig>,
    #[serde(default)]
    pub methods: Vec<Strategy>,
    #[serde(default)]
    pub init_indices: Vec<usize>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl GridConfig {
    /// Cartesian product of every base run with the listed axes; an empty
    /// axis keeps the base run's value.
    pub fn expand(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for base in &self.runs {
            let methods = if self.methods.is_empty() {
                vec![base.method]
            } else {
                self.methods.clone()
            };
            let inits = if self.init_indices.is_empty() {
                vec![base.init_index]
            } else {
                self.init_indices.clone()
            };
            let seeds = if self.seeds.is_empty() {
                vec![base.seed]
            } else {
                self.seeds.clone()
            };
            for &method in &methods {
                for &init_index in &inits {
                    for &seed in &seeds {
                        out.push(RunConfig {
                            method,
                            init_index,
                            seed,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

/// One line of a grid summary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub problem: String,
    pub method: Strategy,
    pub init_index: usize,
    pub seed: u64,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_losses: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_avg_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_to_reference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_selection_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory_file: Option<String>,
}

pub fn summarize(config: &RunConfig, result: &Result<RunResult>) -> RunSummary {
    let finite = |v: f64| v.is_finite().then_some(v);
    let mut s = RunSummary {
        name: config.run_name(),
        problem: config.problem.name.clone(),
        method: config.method,
        init_index: config.init_index,
        seed: config.seed,
        ok: result.is_ok(),
        error: None,
        final_losses: None,
        final_avg_loss: None,
        distance_to_reference: None,
        converged: None,
        best_step: None,
        best_selection_loss: None,
        trajectory_file: config.trajectory_file().map(|p| p.display().to_string()),
    };
    match result {
        Ok(r) => {
            s.final_losses = Some(r.final_losses.clone());
            s.final_avg_loss = finite(r.final_avg_loss);
            s.distance_to_reference = finite(r.distance_to_reference);
            s.converged = Some(r.converged);
            s.best_step = Some(r.best_step);
            s.best_selection_loss = finite(r.best_selection_loss);
        }
        Err(e) => s.error = Some(e.to_string()),
    }
    s
}
