//! Per-step task weighting strategies: EMTL and the comparison baselines.
//!
//! Every strategy maps a [`GradientSet`] (plus, for the bandit-style
//! methods, the player state) to nonnegative coefficients `w_t`; the
//! parameter update is `θ ← θ - lr Σ_t w_t g_t`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MtlError, Result};
use crate::minnorm::minnorm_fw;
use crate::mirror::{player_init, player_step, PlayerState};
use crate::rates::{effective_weights, gradient_norm, relative_rates};
use crate::types::{dot, EmtlConfig, GradientSet, RelativeRates, WeightVector};

/// Weights below zero but above this are clamped to zero in IMTL-G.
pub const IMTL_NEGATIVE_CLAMP: f64 = -1e-10;
const IMTL_PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "ls")]
    LinearScalarization,
    #[serde(rename = "mgda")]
    Mgda,
    #[serde(rename = "imtl-g")]
    ImtlG,
    #[serde(rename = "banditmtl")]
    BanditMtl,
    #[serde(rename = "emtl")]
    Emtl,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::LinearScalarization,
        Strategy::Mgda,
        Strategy::ImtlG,
        Strategy::BanditMtl,
        Strategy::Emtl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::LinearScalarization => "ls",
            Strategy::Mgda => "mgda",
            Strategy::ImtlG => "imtl-g",
            Strategy::BanditMtl => "banditmtl",
            Strategy::Emtl => "emtl",
        }
    }

    /// Whether the strategy carries a mirror-ascent player between steps.
    pub fn uses_player(self) -> bool {
        matches!(self, Strategy::BanditMtl | Strategy::Emtl)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = MtlError;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| MtlError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyOutput {
    /// Balancer weights; uniform for methods without a balancer.
    pub alpha: WeightVector,
    /// Player weights; uniform for methods without a player.
    pub p: WeightVector,
    pub effective_weights: Vec<f64>,
    pub rates: RelativeRates,
    pub diagnostics: BTreeMap<String, f64>,
}

/// A gradient balancing method: turns per-task gradients into simplex weights.
pub trait GradientBalancer {
    fn balance(&self, evals: &GradientSet) -> Result<(WeightVector, BTreeMap<String, f64>)>;
}

/// Min-norm point of the gradient hull.
#[derive(Debug, Clone, Copy)]
pub struct MgdaBalancer {
    pub max_iter: usize,
    pub tol: f64,
}

impl MgdaBalancer {
    pub fn from_config(cfg: &EmtlConfig) -> Self {
        MgdaBalancer {
            max_iter: cfg.minnorm_max_iter,
            tol: cfg.minnorm_tol,
        }
    }
}

impl GradientBalancer for MgdaBalancer {
    fn balance(&self, evals: &GradientSet) -> Result<(WeightVector, BTreeMap<String, f64>)> {
        let grads: Vec<&[f64]> = evals.tasks().iter().map(|e| e.gradient.as_slice()).collect();
        let sol = minnorm_fw(&grads, self.max_iter, self.tol)?;
        let mut diag = BTreeMap::new();
        diag.insert("minnorm_sq_norm".to_string(), sol.squared_norm);
        diag.insert("minnorm_gap".to_string(), sol.gap);
        diag.insert("minnorm_iters".to_string(), sol.iterations_used as f64);
        Ok((sol.alpha, diag))
    }
}

/// EMTL with the min-norm balancer.
pub fn emtl_step(evals: &GradientSet, player: &PlayerState, cfg: &EmtlConfig) -> Result<(StrategyOutput, PlayerState)> {
    emtl_step_with(&MgdaBalancer::from_config(cfg), evals, player, cfg)
}

/// EMTL with an arbitrary balancer: balance, compute weighted relative
/// rates, advance the player on them, then merge.
pub fn emtl_step_with<B: GradientBalancer + ?Sized>(
    balancer: &B,
    evals: &GradientSet,
    player: &PlayerState,
    cfg: &EmtlConfig,
) -> Result<(StrategyOutput, PlayerState)> {
    let (alpha, mut diagnostics) = balancer.balance(evals)?;
    let rates = relative_rates(evals, &alpha, cfg.grad_norm_floor)?;
    let next = player_step(player, &rates.weighted, cfg.eta_p, cfg.rho)?;
    let effective = effective_weights(&alpha, &next.p, &rates, cfg.epsilon, cfg.grad_norm_floor)?;
    diagnostics.insert("variance".to_string(), rates.variance);
    diagnostics.insert("lambda".to_string(), next.lambda_last);
    diagnostics.insert("kl".to_string(), next.kl_to_uniform);
    Ok((
        StrategyOutput {
            alpha,
            p: next.p.clone(),
            effective_weights: effective,
            rates,
            diagnostics,
        },
        next,
    ))
}

pub fn linear_scalarization(evals: &GradientSet) -> Result<StrategyOutput> {
    let t = evals.num_tasks();
    let uniform = WeightVector::uniform(t);
    let rates = relative_rates(evals, &uniform, crate::types::DEFAULT_GRAD_NORM_FLOOR)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("variance".to_string(), rates.variance);
    Ok(StrategyOutput {
        effective_weights: uniform.as_slice().to_vec(),
        alpha: uniform.clone(),
        p: uniform,
        rates,
        diagnostics,
    })
}

/// Min-norm weights, scaled by `1/T` so the step matches EMTL at `epsilon = 1`.
pub fn mgda_step(evals: &GradientSet, cfg: &EmtlConfig) -> Result<StrategyOutput> {
    let (alpha, mut diagnostics) = MgdaBalancer::from_config(cfg).balance(evals)?;
    let t = evals.num_tasks();
    let rates = relative_rates(evals, &alpha, cfg.grad_norm_floor)?;
    diagnostics.insert("variance".to_string(), rates.variance);
    let inv_t = 1.0 / t as f64;
    let effective_weights = alpha.as_slice().iter().map(|a| inv_t * a).collect();
    Ok(StrategyOutput {
        alpha,
        p: WeightVector::uniform(t),
        effective_weights,
        rates,
        diagnostics,
    })
}

/// Solves `A x = b` in place by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `tol` times the largest entry.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, tol: f64) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= tol * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// IMTL-G: weights summing to one whose aggregate has the same projection
/// on every unit task gradient.
pub fn imtl_g_step(evals: &GradientSet, floor: f64) -> Result<StrategyOutput> {
    let t = evals.num_tasks();
    let grads: Vec<&[f64]> = evals.tasks().iter().map(|e| e.gradient.as_slice()).collect();
    let norms = grads.iter().map(|g| gradient_norm(g)).collect::<Result<Vec<_>>>()?;
    if let Some((i, n)) = norms.iter().enumerate().find(|(_, n)| **n <= floor) {
        return Err(MtlError::invalid(format!(
            "IMTL-G needs nonzero gradients; task {i} has norm {n}"
        )));
    }
    let units: Vec<Vec<f64>> = grads
        .iter()
        .zip(&norms)
        .map(|(g, n)| g.iter().map(|v| v / n).collect())
        .collect();

    // Unknowns w_2..w_T with w_1 = 1 - Σ w_s:
    //   Σ_s w_s (g_s - g_1)·(u_1 - u_t) = -g_1·(u_1 - u_t),  t = 2..T
    let m = t - 1;
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for row in 0..m {
        let ti = row + 1;
        let du: Vec<f64> = units[0].iter().zip(&units[ti]).map(|(x, y)| x - y).collect();
        b[row] = -dot(grads[0], &du);
        for col in 0..m {
            let si = col + 1;
            let dg: Vec<f64> = grads[si].iter().zip(grads[0]).map(|(x, y)| x - y).collect();
            a[row][col] = dot(&dg, &du);
        }
    }

    let mut diagnostics = BTreeMap::new();
    let weights = match solve_dense(a, b, IMTL_PIVOT_TOL) {
        Some(rest) => {
            let mut w = Vec::with_capacity(t);
            w.push(1.0 - rest.iter().sum::<f64>());
            w.extend(rest);
            for (task, v) in w.iter_mut().enumerate() {
                if *v < IMTL_NEGATIVE_CLAMP {
                    return Err(MtlError::NegativeWeight { task, weight: *v });
                }
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            diagnostics.insert("imtl_fallback".to_string(), 0.0);
            WeightVector::normalized(w)?
        }
        None => {
            diagnostics.insert("imtl_fallback".to_string(), 1.0);
            WeightVector::uniform(t)
        }
    };

    let d = evals.combine(weights.as_slice());
    let proj: Vec<f64> = units.iter().map(|u| dot(&d, u)).collect();
    let spread =
        proj.iter().copied().fold(f64::NEG_INFINITY, f64::max) - proj.iter().copied().fold(f64::INFINITY, f64::min);
    diagnostics.insert("projection_spread".to_string(), spread);

    let rates = relative_rates(evals, &weights, floor)?;
    diagnostics.insert("variance".to_string(), rates.variance);
    Ok(StrategyOutput {
        effective_weights: weights.as_slice().to_vec(),
        alpha: weights,
        p: WeightVector::uniform(t),
        rates,
        diagnostics,
    })
}

/// BanditMTL: the player reads raw losses, and `w_t = (eps + (1 - eps) p_t) / T`.
pub fn banditmtl_step(
    evals: &GradientSet,
    player: &PlayerState,
    cfg: &EmtlConfig,
) -> Result<(StrategyOutput, PlayerState)> {
    bandit_step_on(evals, &evals.losses(), player, cfg)
}

fn bandit_step_on(
    evals: &GradientSet,
    player_input: &[f64],
    player: &PlayerState,
    cfg: &EmtlConfig,
) -> Result<(StrategyOutput, PlayerState)> {
    let t = evals.num_tasks();
    let uniform = WeightVector::uniform(t);
    let next = player_step(player, player_input, cfg.eta_p, cfg.rho)?;
    let inv_t = 1.0 / t as f64;
    let effective_weights = next
        .p
        .as_slice()
        .iter()
        .map(|p| inv_t * (cfg.epsilon + (1.0 - cfg.epsilon) * p))
        .collect();
    let rates = relative_rates(evals, &uniform, cfg.grad_norm_floor)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("variance".to_string(), rates.variance);
    diagnostics.insert("lambda".to_string(), next.lambda_last);
    diagnostics.insert("kl".to_string(), next.kl_to_uniform);
    Ok((
        StrategyOutput {
            alpha: uniform,
            p: next.p.clone(),
            effective_weights,
            rates,
            diagnostics,
        },
        next,
    ))
}

/// Per-run weighting state: the strategy, its config and the player it carries.
#[derive(Debug, Clone)]
pub struct Weighter {
    strategy: Strategy,
    cfg: EmtlConfig,
    player: PlayerState,
    loss_sums: Vec<f64>,
    seen: usize,
}

impl Weighter {
    pub fn new(strategy: Strategy, cfg: EmtlConfig, num_tasks: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Weighter {
            strategy,
            cfg,
            player: player_init(num_tasks)?,
            loss_sums: vec![0.0; num_tasks],
            seen: 0,
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn player(&self) -> &PlayerState {
        &self.player
    }

    pub fn step(&mut self, evals: &GradientSet) -> Result<StrategyOutput> {
        if evals.num_tasks() != self.player.p.len() {
            return Err(MtlError::DimensionMismatch {
                expected: self.player.p.len(),
                got: evals.num_tasks(),
            });
        }
        match self.strategy {
            Strategy::LinearScalarization => linear_scalarization(evals),
            Strategy::Mgda => mgda_step(evals, &self.cfg),
            Strategy::ImtlG => imtl_g_step(evals, self.cfg.grad_norm_floor),
            Strategy::Emtl => {
                let (out, next) = emtl_step(evals, &self.player, &self.cfg)?;
                self.player = next;
                Ok(out)
            }
            Strategy::BanditMtl => {
                let losses = evals.losses();
                let input = if self.cfg.normalize_losses {
                    self.seen += 1;
                    let n = self.seen as f64;
                    self.loss_sums.iter_mut().zip(&losses).for_each(|(s, l)| *s += l);
                    losses
                        .iter()
                        .zip(&self.loss_sums)
                        .map(|(l, s)| {
                            let mean = s / n;
                            if mean.abs() > 0.0 {
                                l / mean
                            } else {
                                1.0
                            }
                        })
                        .collect()
                } else {
                    losses
                };
                let (out, next) = bandit_step_on(evals, &input, &self.player, &self.cfg)?;
                self.player = next;
                Ok(out)
            }
        }
    }
}
