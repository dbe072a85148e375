//! Generalization diagnostic on `synthreg`: sweep the KL budget, and at each
//! returned parameter compare training and held-out relative rates.

use serde::{Deserialize, Serialize};

use crate::error::{MtlError, Result};
use crate::harness::{run_grid, RunConfig};
use crate::problems::{ProblemSpec, SynthRegression, SYNTHREG};
use crate::rates::rate_spread;
use crate::types::{GradientSet, ParamVector};

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Config {
    /// Template run; `emtl.rho` and `seed` are overridden by the sweep.
    pub run: RunConfig,
    pub rhos: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Where to write the JSON report; empty disables output.
    #[serde(default)]
    pub output_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Entry {
    pub rho: f64,
    pub seed: u64,
    pub best_step: usize,
    /// Spread of the raw training relative rates at the returned parameters.
    pub train_variance: f64,
    pub heldout_variance: f64,
    /// `(1/T) Σ_t (held-out rate_t - training rate_t)`.
    pub gap: f64,
    pub train_avg_loss: f64,
    pub heldout_avg_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoSummary {
    pub rho: f64,
    pub mean_train_variance: f64,
    pub mean_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub entries: Vec<Theorem1Entry>,
    pub per_rho: Vec<RhoSummary>,
    /// Spearman correlation between `rho` and the gap over all entries.
    pub rank_correlation_rho_gap: Option<f64>,
    /// Spearman correlation between training variance and the gap.
    pub rank_correlation_variance_gap: Option<f64>,
    /// `Some(true)` when more regularization goes with a smaller gap.
    pub regularization_shrinks_gap: Option<bool>,
    /// Failed runs as `(rho, seed, message)`.
    pub failures: Vec<(f64, u64, String)>,
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; `None` when either
/// side is constant or the lengths differ.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

fn raw_rates(gs: &GradientSet, floor: f64) -> Vec<f64> {
    gs.tasks()
        .iter()
        .map(|e| e.loss / e.gradient.norm().max(floor))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn measure(spec: &ProblemSpec, seed: u64, theta: &ParamVector, floor: f64) -> Result<(Vec<f64>, Vec<f64>, f64, f64)> {
    let problem = SynthRegression::generate(&spec.complete(seed)?, seed)?;
    let heldout = problem
        .heldout
        .as_ref()
        .ok_or_else(|| MtlError::invalid("diagnostic needs a held-out split (n_val > 0 or same_holdout)"))?;
    let train = crate::problems::synth_regression_eval(theta, &problem, problem.train.all())?;
    let held = crate::problems::synth_regression_eval(theta, &problem, heldout.all())?;
    Ok((
        raw_rates(&train, floor),
        raw_rates(&held, floor),
        mean(&train.losses()),
        mean(&held.losses()),
    ))
}

pub fn theorem1_diagnostic(cfg: &Theorem1Config) -> Result<Theorem1Report> {
    let spec = &cfg.run.problem;
    if spec.name != SYNTHREG {
        return Err(MtlError::invalid(format!(
            "diagnostic runs on synthreg, not `{}`",
            spec.name
        )));
    }
    let synth = spec.synth.clone().unwrap_or_default();
    if synth.n_val == 0 && !synth.same_holdout {
        return Err(MtlError::invalid(
            "diagnostic needs a held-out split (n_val > 0 or same_holdout)",
        ));
    }
    if cfg.rhos.is_empty() || cfg.seeds.is_empty() {
        return Err(MtlError::invalid("diagnostic needs at least one rho and one seed"));
    }

    let mut configs = Vec::new();
    for &rho in &cfg.rhos {
        for &seed in &cfg.seeds {
            let mut run = cfg.run.clone();
            run.emtl.rho = rho;
            run.seed = seed;
            run.output_path.clear();
            configs.push(run);
        }
    }
    let results = run_grid(&configs, cfg.parallelism)?;

    let floor = cfg.run.emtl.grad_norm_floor;
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (run, result) in configs.iter().zip(results) {
        let outcome = result.and_then(|r| {
            let (tr, ho, tl, hl) = measure(spec, run.seed, &r.best_theta, floor)?;
            let gap = ho.iter().zip(&tr).map(|(h, t)| h - t).sum::<f64>() / tr.len() as f64;
            Ok(Theorem1Entry {
                rho: run.emtl.rho,
                seed: run.seed,
                best_step: r.best_step,
                train_variance: rate_spread(&tr),
                heldout_variance: rate_spread(&ho),
                gap,
                train_avg_loss: tl,
                heldout_avg_loss: hl,
            })
        });
        match outcome {
            Ok(e) => entries.push(e),
            Err(e) => failures.push((run.emtl.rho, run.seed, e.to_string())),
        }
    }

    let per_rho = cfg
        .rhos
        .iter()
        .filter_map(|&rho| {
            let sel: Vec<&Theorem1Entry> = entries.iter().filter(|e| e.rho == rho).collect();
            (!sel.is_empty()).then(|| RhoSummary {
                rho,
                mean_train_variance: sel.iter().map(|e| e.train_variance).sum::<f64>() / sel.len() as f64,
                mean_gap: sel.iter().map(|e| e.gap).sum::<f64>() / sel.len() as f64,
            })
        })
        .collect();

    let rhos: Vec<f64> = entries.iter().map(|e| e.rho).collect();
    let gaps: Vec<f64> = entries.iter().map(|e| e.gap).collect();
    let vars: Vec<f64> = entries.iter().map(|e| e.train_variance).collect();
    let rank_correlation_rho_gap = spearman(&rhos, &gaps);
    let report = Theorem1Report {
        entries,
        per_rho,
        rank_correlation_rho_gap,
        rank_correlation_variance_gap: spearman(&vars, &gaps),
        regularization_shrinks_gap: rank_correlation_rho_gap.map(|c| c < 0.0),
        failures,
    };

    if !cfg.output_path.is_empty() {
        let path = std::path::Path::new(&cfg.output_path);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let json = serde_json::to_string_pretty(&report).map_err(|e| MtlError::Io(e.to_string()))?;
        std::fs::write(path, json)?;
    }
    Ok(report)
}
