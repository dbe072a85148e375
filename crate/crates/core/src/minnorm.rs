//! Minimum-norm point in the convex hull of task gradients (the MGDA
//! subproblem), solved with Frank-Wolfe on the simplex of task weights.
//!
//! All inner products are taken once through the Gram matrix, so an
//! iteration costs `O(T^2)` regardless of the parameter dimension.

use crate::error::{MtlError, Result};
use crate::types::{dot, ParamVector, WeightVector};

pub const DEFAULT_MAX_ITER: usize = 250;
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MinNormSolution {
    pub alpha: WeightVector,
    /// `Σ α_t g_t`.
    pub combined: ParamVector,
    pub squared_norm: f64,
    pub iterations_used: usize,
    /// Frank-Wolfe duality gap `||d||^2 - min_t g_t·d` at the returned point.
    pub gap: f64,
}

/// Weight on the first point of the segment `[a, b]` that minimizes the norm,
/// from `a·a`, `a·b` and `b·b`.
fn segment_weight(aa: f64, ab: f64, bb: f64) -> f64 {
    let denom = aa - 2.0 * ab + bb;
    if denom <= 0.0 {
        return 0.5;
    }
    ((bb - ab) / denom).clamp(0.0, 1.0)
}

fn check_inputs(gradients: &[&[f64]]) -> Result<usize> {
    if gradients.len() < 2 {
        return Err(MtlError::invalid(format!(
            "min-norm needs at least 2 gradients, got {}",
            gradients.len()
        )));
    }
    let dim = gradients[0].len();
    for g in gradients {
        if g.len() != dim {
            return Err(MtlError::DimensionMismatch {
                expected: dim,
                got: g.len(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(MtlError::NonFinite("gradient"));
        }
    }
    Ok(dim)
}

fn assemble(gradients: &[&[f64]], alpha: Vec<f64>, iterations_used: usize, gap: f64) -> Result<MinNormSolution> {
    let dim = gradients[0].len();
    let mut combined = vec![0.0; dim];
    for (a, g) in alpha.iter().zip(gradients) {
        for (c, v) in combined.iter_mut().zip(g.iter()) {
            *c += a * v;
        }
    }
    let squared_norm = dot(&combined, &combined);
    Ok(MinNormSolution {
        alpha: WeightVector::new(alpha)?,
        combined: ParamVector::new(combined)?,
        squared_norm,
        iterations_used,
        gap,
    })
}

/// Closed-form min-norm point on the segment between two gradients.
pub fn minnorm_2(g1: &[f64], g2: &[f64]) -> Result<MinNormSolution> {
    check_inputs(&[g1, g2])?;
    let gamma = segment_weight(dot(g1, g1), dot(g1, g2), dot(g2, g2));
    let alpha = vec![gamma, 1.0 - gamma];
    let s = assemble(&[g1, g2], alpha, 0, 0.0)?;
    let c = s.combined.as_slice();
    let gap = s.squared_norm - dot(g1, c).min(dot(g2, c));
    Ok(MinNormSolution { gap, ..s })
}

/// Frank-Wolfe over the task simplex, starting from uniform weights.
///
/// Each iteration takes the better of a toward step (line search between
/// `d` and the vertex minimizing `g_t·d`, via the two-point formula) and an
/// away step (moving mass off the active vertex maximizing `g_t·d`). Away
/// steps remove the zig-zagging of plain Frank-Wolfe when the min-norm point
/// lies on a face, and set dropped weights to exactly zero.
///
/// Stops once `||d||^2 - min_t g_t·d <= tol` or after `max_iter` iterations;
/// running out of iterations is not an error. Ties in the vertex choice go
/// to the lowest task index.
pub fn minnorm_fw(gradients: &[&[f64]], max_iter: usize, tol: f64) -> Result<MinNormSolution> {
    check_inputs(gradients)?;
    if max_iter == 0 || !(tol > 0.0) {
        return Err(MtlError::invalid("max_iter must be positive and tol > 0"));
    }
    let t = gradients.len();
    let gram: Vec<Vec<f64>> = (0..t)
        .map(|i| (0..t).map(|j| dot(gradients[i], gradients[j])).collect())
        .collect();

    let mut alpha = vec![1.0 / t as f64; t];
    let mut iterations = max_iter;
    let mut gap = f64::INFINITY;
    for it in 0..=max_iter {
        // proj[i] = g_i·d
        let proj: Vec<f64> = gram.iter().map(|row| dot(row, &alpha)).collect();
        let dd = dot(&alpha, &proj);
        let (toward, toward_proj) = proj
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
        gap = dd - toward_proj;
        if gap <= tol {
            iterations = it;
            break;
        }
        if it == max_iter {
            break;
        }
        let (away, away_proj) = proj.iter().copied().enumerate().filter(|&(i, _)| alpha[i] > 0.0).fold(
            (toward, f64::NEG_INFINITY),
            |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
        );
        let away_gap = away_proj - dd;

        if gap >= away_gap || alpha[away] >= 1.0 {
            let keep = segment_weight(dd, toward_proj, gram[toward][toward]);
            for a in alpha.iter_mut() {
                *a *= keep;
            }
            alpha[toward] += 1.0 - keep;
        } else {
            // x(γ) = d + γ (d - g_away), γ in [0, α_away / (1 - α_away)]
            let max_step = alpha[away] / (1.0 - alpha[away]);
            let denom = dd - 2.0 * away_proj + gram[away][away];
            let step = if denom > 0.0 {
                ((away_proj - dd) / denom).clamp(0.0, max_step)
            } else {
                max_step
            };
            for a in alpha.iter_mut() {
                *a *= 1.0 + step;
            }
            if step >= max_step {
                alpha[away] = 0.0;
            } else {
                alpha[away] = (alpha[away] - step).max(0.0);
            }
        }
        let sum: f64 = alpha.iter().sum();
        alpha.iter_mut().for_each(|a| *a /= sum);
    }
    assemble(gradients, alpha, iterations, gap)
}
