//! Exponentiated-gradient ascent for the task-weighting player, kept inside
//! the KL ball `Σ p_t log(T p_t) <= sqrt(rho)` around uniform weights.
//!
//! The update is `p'_t ∝ exp((log p_t + eta * r_t) / (1 + λ))`. `λ = 0` is
//! used whenever that point is already feasible; otherwise `λ` is the
//! smallest damping that brings the KL divergence back onto the budget,
//! found by bracketing and bisection.

use serde::{Deserialize, Serialize};

use crate::error::{MtlError, Result};
use crate::types::WeightVector;

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;
/// Bisection stops once the KL value is within this of the budget.
pub const KL_GAP_TOL: f64 = 1e-10;
const MAX_BRACKET_DOUBLINGS: usize = 1100;
const MAX_BISECTIONS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerState {
    pub p: WeightVector,
    pub lambda_last: f64,
    pub kl_to_uniform: f64,
}

/// `Σ p_t log(T p_t)`, with `0 log 0 = 0`.
pub fn kl_to_uniform(p: &[f64]) -> f64 {
    let t = p.len() as f64;
    p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * (t * v).ln())
        .sum::<f64>()
        .max(0.0)
}

pub fn player_init(num_tasks: usize) -> Result<PlayerState> {
    if num_tasks < 2 {
        return Err(MtlError::invalid(format!(
            "player needs at least 2 tasks, got {num_tasks}"
        )));
    }
    Ok(PlayerState {
        p: WeightVector::uniform(num_tasks),
        lambda_last: 0.0,
        kl_to_uniform: 0.0,
    })
}

/// Softmax of `logits / (1 + lambda)` with max-subtraction.
pub fn damped_update(logits: &[f64], lambda: f64) -> Vec<f64> {
    let scale = 1.0 / (1.0 + lambda);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| ((z - max) * scale).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// Unnormalized log-weights `log max(p_t, floor) + eta * r_t`.
pub fn update_logits(p: &WeightVector, rates: &[f64], eta_p: f64) -> Vec<f64> {
    p.as_slice()
        .iter()
        .zip(rates)
        .map(|(pt, r)| pt.max(PROB_FLOOR).ln() + eta_p * r)
        .collect()
}

pub fn player_step(state: &PlayerState, rates: &[f64], eta_p: f64, rho: f64) -> Result<PlayerState> {
    if rates.len() != state.p.len() {
        return Err(MtlError::DimensionMismatch {
            expected: state.p.len(),
            got: rates.len(),
        });
    }
    if rates.iter().any(|r| !r.is_finite()) {
        return Err(MtlError::NonFinite("player rates"));
    }
    if !(eta_p >= 0.0) || !eta_p.is_finite() {
        return Err(MtlError::invalid("eta_p must be >= 0"));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(MtlError::invalid("rho must be > 0"));
    }
    let budget = rho.sqrt();
    let logits = update_logits(&state.p, rates, eta_p);
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(MtlError::NonFinite("player logits"));
    }

    let free = damped_update(&logits, 0.0);
    let free_kl = kl_to_uniform(&free);
    if free_kl <= budget {
        return finish(free, 0.0);
    }

    // KL(λ) is non-increasing in λ and tends to 0; bracket then bisect.
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut hi_p = damped_update(&logits, hi);
    let mut doublings = 0;
    while kl_to_uniform(&hi_p) > budget {
        lo = hi;
        hi *= 2.0;
        hi_p = damped_update(&logits, hi);
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS || !hi.is_finite() {
            // Only reachable if the budget is below rounding noise; uniform is always feasible.
            return finish(vec![1.0 / logits.len() as f64; logits.len()], hi);
        }
    }
    for _ in 0..MAX_BISECTIONS {
        if budget - kl_to_uniform(&hi_p) <= KL_GAP_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let mid_p = damped_update(&logits, mid);
        if kl_to_uniform(&mid_p) > budget {
            lo = mid;
        } else {
            hi = mid;
            hi_p = mid_p;
        }
    }
    finish(hi_p, hi)
}

fn finish(p: Vec<f64>, lambda: f64) -> Result<PlayerState> {
    let p = WeightVector::normalized(p)?;
    let kl = kl_to_uniform(p.as_slice());
    Ok(PlayerState {
        p,
        lambda_last: lambda,
        kl_to_uniform: kl,
    })
}
