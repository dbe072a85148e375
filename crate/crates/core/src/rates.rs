//! Relative rates of loss to gradient norm, their spread, and the merged
//! per-task weights used in the parameter update.

use crate::error::{MtlError, Result};
use crate::types::{GradientSet, RelativeRates, WeightVector};

/// Euclidean norm of a gradient.
pub fn gradient_norm(g: &[f64]) -> Result<f64> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(MtlError::NonFinite("gradient"));
    }
    Ok(g.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Population standard deviation: `sqrt(mean((x - mean(x))^2))`.
pub fn rate_spread(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    ss.max(0.0).sqrt()
}

/// `raw[t] = L_t / max(||g_t||, floor)` and `weighted[t] = alpha[t] * raw[t]`.
pub fn relative_rates(evals: &GradientSet, alpha: &WeightVector, floor: f64) -> Result<RelativeRates> {
    let t = evals.num_tasks();
    if alpha.len() != t {
        return Err(MtlError::DimensionMismatch {
            expected: t,
            got: alpha.len(),
        });
    }
    if !(floor > 0.0) {
        return Err(MtlError::invalid("gradient norm floor must be > 0"));
    }
    let grad_norms = evals
        .tasks()
        .iter()
        .map(|e| gradient_norm(e.gradient.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let raw: Vec<f64> = evals
        .tasks()
        .iter()
        .zip(&grad_norms)
        .map(|(e, n)| e.loss / n.max(floor))
        .collect();
    let weighted: Vec<f64> = raw.iter().zip(alpha.as_slice()).map(|(r, a)| a * r).collect();
    let variance = rate_spread(&weighted);
    Ok(RelativeRates {
        raw,
        weighted,
        variance,
        grad_norms,
    })
}

/// Merged coefficients of the parameter update:
/// `w_t = (eps * a_t + (1 - eps) * p_t * a_t / max(||g_t||, floor)) / T`.
///
/// All inputs are constants of the step; the update direction is `Σ w_t g_t`.
pub fn effective_weights(
    alpha: &WeightVector,
    p: &WeightVector,
    rates: &RelativeRates,
    epsilon: f64,
    floor: f64,
) -> Result<Vec<f64>> {
    let t = alpha.len();
    if p.len() != t || rates.grad_norms.len() != t {
        return Err(MtlError::DimensionMismatch {
            expected: t,
            got: if p.len() != t { p.len() } else { rates.grad_norms.len() },
        });
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(MtlError::invalid(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let inv_t = 1.0 / t as f64;
    Ok((0..t)
        .map(|i| {
            let a = alpha[i];
            let scaled = p[i] * a / rates.grad_norms[i].max(floor);
            inv_t * (epsilon * a + (1.0 - epsilon) * scaled)
        })
        .collect())
}
