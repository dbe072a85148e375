//! Value types shared by the solvers and the harness.

use serde::{Deserialize, Serialize};

use crate::error::{MtlError, Result};

/// Absolute tolerance on the simplex sum of a [`WeightVector`].
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Default floor applied to gradient norms before dividing by them.
pub const DEFAULT_GRAD_NORM_FLOOR: f64 = 1e-12;

/// Dense vector of shared parameters. Entries are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(MtlError::invalid("parameter vector must have dimension >= 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MtlError::NonFinite("parameter vector"));
        }
        Ok(ParamVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = MtlError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ParamVector::new(values)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Self {
        p.0
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loss and gradient of one task at the current parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskEvaluation {
    pub loss: f64,
    pub gradient: ParamVector,
}

impl TaskEvaluation {
    pub fn new(loss: f64, gradient: ParamVector) -> Result<Self> {
        if !loss.is_finite() {
            return Err(MtlError::NonFinite("task loss"));
        }
        Ok(TaskEvaluation { loss, gradient })
    }
}

/// Per-task losses and gradients for one optimization step.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    per_task: Vec<TaskEvaluation>,
    pub step_index: usize,
}

impl GradientSet {
    pub fn new(per_task: Vec<TaskEvaluation>, step_index: usize) -> Result<Self> {
        if per_task.len() < 2 {
            return Err(MtlError::invalid(format!(
                "multi-task step needs at least 2 tasks, got {}",
                per_task.len()
            )));
        }
        let dim = per_task[0].gradient.dim();
        if let Some(bad) = per_task.iter().find(|e| e.gradient.dim() != dim) {
            return Err(MtlError::DimensionMismatch {
                expected: dim,
                got: bad.gradient.dim(),
            });
        }
        Ok(GradientSet { per_task, step_index })
    }

    /// Builds a set from parallel slices of losses and gradient vectors.
    pub fn from_parts(losses: &[f64], gradients: &[Vec<f64>]) -> Result<Self> {
        if losses.len() != gradients.len() {
            return Err(MtlError::DimensionMismatch {
                expected: losses.len(),
                got: gradients.len(),
            });
        }
        let per_task = losses
            .iter()
            .zip(gradients)
            .map(|(&l, g)| TaskEvaluation::new(l, ParamVector::new(g.clone())?))
            .collect::<Result<Vec<_>>>()?;
        GradientSet::new(per_task, 0)
    }

    pub fn num_tasks(&self) -> usize {
        self.per_task.len()
    }

    pub fn dim(&self) -> usize {
        self.per_task[0].gradient.dim()
    }

    pub fn tasks(&self) -> &[TaskEvaluation] {
        &self.per_task
    }

    pub fn losses(&self) -> Vec<f64> {
        self.per_task.iter().map(|e| e.loss).collect()
    }

    pub fn gradients(&self) -> Vec<&ParamVector> {
        self.per_task.iter().map(|e| &e.gradient).collect()
    }

    /// `Σ_t w_t g_t`.
    pub fn combine(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (w, e) in weights.iter().zip(&self.per_task) {
            for (o, g) in out.iter_mut().zip(e.gradient.as_slice()) {
                *o += w * g;
            }
        }
        out
    }
}

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(MtlError::invalid("empty weight vector"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(MtlError::NonFinite("weight vector"));
        }
        if let Some(w) = weights.iter().find(|&&w| w < 0.0) {
            return Err(MtlError::invalid(format!("negative weight {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(MtlError::invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(WeightVector(weights))
    }

    pub fn uniform(n: usize) -> Self {
        let n = n.max(1);
        WeightVector(vec![1.0 / n as f64; n])
    }

    /// Divides nonnegative masses by their sum.
    pub fn normalized(masses: Vec<f64>) -> Result<Self> {
        let sum: f64 = masses.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(MtlError::invalid(format!("cannot normalize masses with sum {sum}")));
        }
        WeightVector::new(masses.into_iter().map(|m| m / sum).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = MtlError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        WeightVector::new(values)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Per-task relative rates `L_t / ||g_t||`, their α-weighted form and
/// the spread of the weighted entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeRates {
    pub raw: Vec<f64>,
    pub weighted: Vec<f64>,
    /// Population standard deviation of `weighted`.
    pub variance: f64,
    /// Unfloored gradient norms the rates were computed from.
    pub grad_norms: Vec<f64>,
}

fn default_floor() -> f64 {
    DEFAULT_GRAD_NORM_FLOOR
}

fn default_fw_max_iter() -> usize {
    crate::minnorm::DEFAULT_MAX_ITER
}

fn default_fw_tol() -> f64 {
    crate::minnorm::DEFAULT_TOL
}

/// Hyperparameters of the EMTL update (and of the training loop driving it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmtlConfig {
    /// KL budget parameter; the constraint radius is `sqrt(rho)`.
    pub rho: f64,
    /// Player step size.
    pub eta_p: f64,
    /// Merge coefficient between the balancer weights and the player term.
    pub epsilon: f64,
    /// Parameter step size.
    pub lr: f64,
    pub steps: usize,
    #[serde(default = "default_floor")]
    pub grad_norm_floor: f64,
    #[serde(default = "default_fw_max_iter")]
    pub minnorm_max_iter: usize,
    #[serde(default = "default_fw_tol")]
    pub minnorm_tol: f64,
    /// BanditMTL only: divide losses by their running mean before the player sees them.
    #[serde(default)]
    pub normalize_losses: bool,
}

impl Default for EmtlConfig {
    fn default() -> Self {
        EmtlConfig {
            rho: 0.5,
            eta_p: 0.5,
            epsilon: 0.0,
            lr: 1e-2,
            steps: 2000,
            grad_norm_floor: DEFAULT_GRAD_NORM_FLOOR,
            minnorm_max_iter: crate::minnorm::DEFAULT_MAX_ITER,
            minnorm_tol: crate::minnorm::DEFAULT_TOL,
            normalize_losses: false,
        }
    }
}

impl EmtlConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(MtlError::invalid(what.to_string()))
            }
        };
        check(self.rho > 0.0 && self.rho.is_finite(), "rho must be > 0")?;
        check(self.eta_p >= 0.0 && self.eta_p.is_finite(), "eta_p must be >= 0")?;
        check((0.0..=1.0).contains(&self.epsilon), "epsilon must lie in [0, 1]")?;
        check(self.lr > 0.0 && self.lr.is_finite(), "lr must be > 0")?;
        check(self.grad_norm_floor > 0.0, "grad_norm_floor must be > 0")?;
        check(self.minnorm_max_iter > 0, "minnorm_max_iter must be > 0")?;
        check(self.minnorm_tol > 0.0, "minnorm_tol must be > 0")?;
        // `steps` may be zero: a run then records only its initial state.
        Ok(())
    }
}

/// Snapshot of one optimization step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub theta: ParamVector,
    pub losses: Vec<f64>,
    pub alpha: WeightVector,
    pub p: WeightVector,
    pub effective_weights: Vec<f64>,
    pub relative_rates: RelativeRates,
    /// Average loss plus `rho` times the raw-rate spread.
    pub objective_diagnostic: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_vector_rejects_nan_and_empty() {
        assert!(ParamVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ParamVector::new(vec![f64::INFINITY]).is_err());
        assert!(ParamVector::new(vec![]).is_err());
    }

    #[test]
    fn weight_vector_checks_simplex() {
        assert!(WeightVector::new(vec![0.5, 0.5]).is_ok());
        assert!(WeightVector::new(vec![0.6, 0.5]).is_err());
        assert!(WeightVector::new(vec![1.5, -0.5]).is_err());
        let w = WeightVector::normalized(vec![1.0, 3.0]).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.75]);
    }

    #[test]
    fn gradient_set_requires_two_tasks_and_equal_dims() {
        assert!(GradientSet::from_parts(&[1.0], &[vec![1.0]]).is_err());
        let err = GradientSet::from_parts(&[1.0, 1.0], &[vec![1.0], vec![1.0, 2.0]]).unwrap_err();
        assert_eq!(err, MtlError::DimensionMismatch { expected: 1, got: 2 });
        let gs = GradientSet::from_parts(&[1.0, 2.0], &[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(gs.combine(&[2.0, 0.5]), vec![2.0, 1.0]);
    }

    #[test]
    fn config_validation() {
        assert!(EmtlConfig::default().validate().is_ok());
        let bad = EmtlConfig {
            epsilon: 1.5,
            ..EmtlConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = EmtlConfig {
            rho: 0.0,
            ..EmtlConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn weight_vector_deserialize_validates() {
        let ok: WeightVector = serde_json::from_str("[0.25, 0.75]").unwrap();
        assert_eq!(ok.len(), 2);
        assert!(serde_json::from_str::<WeightVector>("[0.25, 0.25]").is_err());
    }
}
