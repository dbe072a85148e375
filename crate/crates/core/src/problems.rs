//! Synthetic multi-task problems with analytic gradients.
//!
//! * `quad2`: two anisotropic quadratics in the plane with a per-task scale
//!   knob, used for trajectory comparisons under loss-scale imbalance.
//! * `synthreg`: linear multi-task regression through a shared low-rank map,
//!   with a seeded train / held-out split.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MtlError, Result};
use crate::types::{GradientSet, ParamVector, TaskEvaluation};

pub const QUAD2: &str = "quad2";
pub const SYNTHREG: &str = "synthreg";

pub const QUAD2_DEFAULT_SCALES: [f64; 2] = [1.0, 100.0];
/// Task minimizers of `quad2`.
pub const QUAD2_CENTERS: [[f64; 2]; 2] = [[-2.0, 0.0], [2.0, 0.0]];
/// Diagonals of the `quad2` curvature matrices.
pub const QUAD2_CURVATURES: [[f64; 2]; 2] = [[1.0, 4.0], [4.0, 1.0]];
pub const QUAD2_INITS: [[f64; 2]; 5] = [[3.0, 3.0], [3.0, -3.0], [-3.0, 3.0], [-3.0, -3.0], [0.0, 3.0]];

const SYNTH_INIT_POINTS: usize = 5;
const SYNTH_INIT_SCALE: f64 = 0.5;

fn default_d_in() -> usize {
    6
}
fn default_hidden() -> usize {
    2
}
fn default_n() -> usize {
    200
}
fn default_noise() -> f64 {
    0.3
}

/// Shape of the `synthreg` problem. Data are regenerated from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRegConfig {
    #[serde(default = "default_d_in")]
    pub d_in: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_n")]
    pub n_train: usize,
    #[serde(default = "default_n")]
    pub n_val: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Use the training sample as the held-out sample.
    #[serde(default)]
    pub same_holdout: bool,
}

impl Default for SynthRegConfig {
    fn default() -> Self {
        SynthRegConfig {
            d_in: default_d_in(),
            hidden: default_hidden(),
            n_train: default_n(),
            n_val: default_n(),
            noise: default_noise(),
            same_holdout: false,
        }
    }
}

/// Problem description. Fields left empty in a config file are filled in by
/// [`ProblemSpec::complete`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    #[serde(default)]
    pub dim: usize,
    #[serde(default)]
    pub num_tasks: usize,
    #[serde(default)]
    pub scale_factors: Vec<f64>,
    #[serde(default)]
    pub init_points: Vec<ParamVector>,
    /// Minimizer of the uniform average loss (`quad2`) or the generating
    /// parameters (`synthreg`).
    #[serde(default)]
    pub pareto_reference: Option<ParamVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthRegConfig>,
}

impl ProblemSpec {
    pub fn quad2(scales: [f64; 2]) -> Self {
        ProblemSpec {
            name: QUAD2.to_string(),
            dim: 0,
            num_tasks: 0,
            scale_factors: scales.to_vec(),
            init_points: Vec::new(),
            pareto_reference: None,
            synth: None,
        }
        .complete(0)
        .expect("quad2 defaults are valid")
    }

    /// Partial `synthreg` spec; call [`ProblemSpec::complete`] with the run seed.
    pub fn synthreg(scale_factors: Vec<f64>, cfg: SynthRegConfig) -> Self {
        ProblemSpec {
            name: SYNTHREG.to_string(),
            dim: 0,
            num_tasks: scale_factors.len(),
            scale_factors,
            init_points: Vec::new(),
            pareto_reference: None,
            synth: Some(cfg),
        }
    }

    /// Fills derived fields and checks the result.
    pub fn complete(&self, seed: u64) -> Result<ProblemSpec> {
        let mut spec = self.clone();
        match spec.name.as_str() {
            QUAD2 => {
                if spec.scale_factors.is_empty() {
                    spec.scale_factors = QUAD2_DEFAULT_SCALES.to_vec();
                }
                if spec.scale_factors.len() != 2 {
                    return Err(MtlError::invalid("quad2 takes exactly 2 scale factors"));
                }
                spec.dim = 2;
                spec.num_tasks = 2;
                if spec.init_points.is_empty() {
                    spec.init_points = QUAD2_INITS
                        .iter()
                        .map(|p| ParamVector::new(p.to_vec()))
                        .collect::<Result<_>>()?;
                }
                if spec.pareto_reference.is_none() {
                    let s = [spec.scale_factors[0], spec.scale_factors[1]];
                    spec.pareto_reference = Some(ParamVector::new(quad2_average_minimizer(s).to_vec())?);
                }
            }
            SYNTHREG => {
                let cfg = spec.synth.get_or_insert_with(SynthRegConfig::default).clone();
                if spec.scale_factors.is_empty() {
                    let t = spec.num_tasks.max(3);
                    spec.scale_factors = vec![1.0; t];
                }
                spec.num_tasks = spec.scale_factors.len();
                spec.dim = cfg.hidden * cfg.d_in;
                if spec.init_points.is_empty() || spec.pareto_reference.is_none() {
                    let data = SynthRegression::generate(&spec, seed)?;
                    if spec.init_points.is_empty() {
                        spec.init_points = data.init_points.clone();
                    }
                    if spec.pareto_reference.is_none() {
                        spec.pareto_reference = Some(data.generating_theta());
                    }
                }
            }
            other => return Err(MtlError::UnknownProblem(other.to_string())),
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_tasks < 2 {
            return Err(MtlError::invalid("problem needs at least 2 tasks"));
        }
        if self.scale_factors.len() != self.num_tasks {
            return Err(MtlError::invalid(format!(
                "{} scale factors for {} tasks",
                self.scale_factors.len(),
                self.num_tasks
            )));
        }
        if self.scale_factors.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(MtlError::invalid("scale factors must be positive"));
        }
        if self.init_points.is_empty() {
            return Err(MtlError::invalid("problem has no init points"));
        }
        if let Some(p) = self.init_points.iter().find(|p| p.dim() != self.dim) {
            return Err(MtlError::DimensionMismatch {
                expected: self.dim,
                got: p.dim(),
            });
        }
        Ok(())
    }
}

/// A problem the harness can optimize.
pub trait Problem: Send + Sync {
    fn spec(&self) -> &ProblemSpec;

    fn num_tasks(&self) -> usize {
        self.spec().num_tasks
    }

    fn dim(&self) -> usize {
        self.spec().dim
    }

    /// Loss of one task on the training data.
    fn task_loss(&self, theta: &[f64], task: usize) -> f64;

    /// Losses and analytic gradients of all tasks on the training data.
    fn evaluate(&self, theta: &ParamVector, step: usize) -> Result<GradientSet>;

    /// Metric used to pick the returned snapshot; lower is better.
    fn selection_loss(&self, theta: &ParamVector) -> Result<f64> {
        let gs = self.evaluate(theta, 0)?;
        Ok(gs.losses().iter().sum::<f64>() / gs.num_tasks() as f64)
    }
}

pub fn build_problem(spec: &ProblemSpec, seed: u64) -> Result<Box<dyn Problem>> {
    let spec = spec.complete(seed)?;
    match spec.name.as_str() {
        QUAD2 => Ok(Box::new(Quad2 { spec })),
        SYNTHREG => Ok(Box::new(SynthRegression::generate(&spec, seed)?)),
        other => Err(MtlError::UnknownProblem(other.to_string())),
    }
}

/// Closed-form minimizer of `(L_1 + L_2) / 2` for `quad2`:
/// `(s1 A1 + s2 A2) θ = s1 A1 a1 + s2 A2 a2`, solved per coordinate.
pub fn quad2_average_minimizer(scales: [f64; 2]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (i, o) in out.iter_mut().enumerate() {
        let h1 = scales[0] * QUAD2_CURVATURES[0][i];
        let h2 = scales[1] * QUAD2_CURVATURES[1][i];
        *o = (h1 * QUAD2_CENTERS[0][i] + h2 * QUAD2_CENTERS[1][i]) / (h1 + h2);
    }
    out
}

fn quad2_task(theta: &[f64], task: usize, scale: f64) -> (f64, Vec<f64>) {
    let c = QUAD2_CENTERS[task];
    let a = QUAD2_CURVATURES[task];
    let mut loss = 0.0;
    let mut grad = vec![0.0; 2];
    for i in 0..2 {
        let r = theta[i] - c[i];
        loss += a[i] * r * r;
        grad[i] = scale * a[i] * r;
    }
    (0.5 * scale * loss, grad)
}

/// Losses `½ s_t (θ - a_t)ᵀ A_t (θ - a_t)` and gradients `s_t A_t (θ - a_t)`.
pub fn quad2_eval(theta: &ParamVector, spec: &ProblemSpec) -> Result<GradientSet> {
    if spec.name != QUAD2 || spec.num_tasks != 2 || spec.scale_factors.len() != 2 {
        return Err(MtlError::invalid(format!("`{}` is not a quad2 spec", spec.name)));
    }
    if theta.dim() != 2 {
        return Err(MtlError::DimensionMismatch {
            expected: 2,
            got: theta.dim(),
        });
    }
    let per_task = (0..2)
        .map(|t| {
            let (loss, grad) = quad2_task(theta.as_slice(), t, spec.scale_factors[t]);
            TaskEvaluation::new(loss, ParamVector::new(grad)?)
        })
        .collect::<Result<Vec<_>>>()?;
    GradientSet::new(per_task, 0)
}

#[derive(Debug, Clone)]
pub struct Quad2 {
    spec: ProblemSpec,
}

impl Quad2 {
    pub fn new(spec: &ProblemSpec) -> Result<Self> {
        let spec = spec.complete(0)?;
        if spec.name != QUAD2 {
            return Err(MtlError::invalid(format!("`{}` is not a quad2 spec", spec.name)));
        }
        Ok(Quad2 { spec })
    }
}

impl Problem for Quad2 {
    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn task_loss(&self, theta: &[f64], task: usize) -> f64 {
        quad2_task(theta, task, self.spec.scale_factors[task]).0
    }

    fn evaluate(&self, theta: &ParamVector, step: usize) -> Result<GradientSet> {
        let mut gs = quad2_eval(theta, &self.spec)?;
        gs.step_index = step;
        Ok(gs)
    }
}

/// Row-major samples: `inputs[i]` has `d_in` entries, `targets[i]` has `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> DatasetSlice<'_> {
        DatasetSlice {
            inputs: &self.inputs[range.clone()],
            targets: &self.targets[range],
        }
    }

    pub fn all(&self) -> DatasetSlice<'_> {
        self.slice(0..self.len())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DatasetSlice<'a> {
    pub inputs: &'a [Vec<f64>],
    pub targets: &'a [Vec<f64>],
}

/// Multi-task regression `ŷ_t = c_t r_tᵀ W x` with a shared map `W`
/// (`hidden × d_in`, flattened row-major into θ) and fixed readouts `r_t`.
/// Targets are `y_t = c_t (r_tᵀ W* x + noise)`.
#[derive(Debug, Clone)]
pub struct SynthRegression {
    spec: ProblemSpec,
    cfg: SynthRegConfig,
    readouts: Vec<Vec<f64>>,
    generating: Vec<f64>,
    pub train: Dataset,
    /// `None` when `n_val == 0` and the training set is not reused.
    pub heldout: Option<Dataset>,
    init_points: Vec<ParamVector>,
}

impl SynthRegression {
    pub fn generate(spec: &ProblemSpec, seed: u64) -> Result<Self> {
        if spec.name != SYNTHREG {
            return Err(MtlError::invalid(format!("`{}` is not a synthreg spec", spec.name)));
        }
        let cfg = spec.synth.clone().unwrap_or_default();
        if cfg.d_in == 0 || cfg.hidden == 0 {
            return Err(MtlError::invalid("synthreg dimensions must be positive"));
        }
        if cfg.n_train == 0 {
            return Err(MtlError::invalid("synthreg needs a non-empty training set"));
        }
        if !(cfg.noise >= 0.0) {
            return Err(MtlError::invalid("noise must be >= 0"));
        }
        let scales = &spec.scale_factors;
        let t = scales.len();
        if t < 2 {
            return Err(MtlError::invalid("synthreg needs at least 2 tasks"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

        let w_scale = 1.0 / (cfg.d_in as f64).sqrt();
        let generating: Vec<f64> = (0..cfg.hidden * cfg.d_in).map(|_| w_scale * normal()).collect();
        let readouts: Vec<Vec<f64>> = (0..t).map(|_| (0..cfg.hidden).map(|_| normal()).collect()).collect();

        let mut sample = |n: usize| -> Dataset {
            let mut inputs = Vec::with_capacity(n);
            let mut targets = Vec::with_capacity(n);
            for _ in 0..n {
                let x: Vec<f64> = (0..cfg.d_in).map(|_| normal()).collect();
                let h = shared_map(&generating, cfg.hidden, &x);
                let y = (0..t)
                    .map(|task| scales[task] * (dot_slice(&readouts[task], &h) + cfg.noise * normal()))
                    .collect();
                inputs.push(x);
                targets.push(y);
            }
            Dataset { inputs, targets }
        };
        let train = sample(cfg.n_train);
        let heldout = if cfg.same_holdout {
            Some(train.clone())
        } else if cfg.n_val > 0 {
            Some(sample(cfg.n_val))
        } else {
            None
        };
        let init_points = (0..SYNTH_INIT_POINTS)
            .map(|_| ParamVector::new((0..generating.len()).map(|_| SYNTH_INIT_SCALE * normal()).collect()))
            .collect::<Result<Vec<_>>>()?;

        let mut spec = spec.clone();
        spec.dim = generating.len();
        spec.num_tasks = t;
        spec.synth = Some(cfg.clone());
        if spec.init_points.is_empty() {
            spec.init_points = init_points.clone();
        }
        if spec.pareto_reference.is_none() {
            spec.pareto_reference = Some(ParamVector::new(generating.clone())?);
        }
        Ok(SynthRegression {
            spec,
            cfg,
            readouts,
            generating,
            train,
            heldout,
            init_points,
        })
    }

    pub fn generating_theta(&self) -> ParamVector {
        ParamVector::new(self.generating.clone()).expect("generated parameters are finite")
    }

    fn batch_task_loss(&self, theta: &[f64], batch: DatasetSlice<'_>, task: usize) -> f64 {
        let c = self.spec.scale_factors[task];
        let n = batch.inputs.len() as f64;
        batch
            .inputs
            .iter()
            .zip(batch.targets)
            .map(|(x, y)| {
                let e = c * dot_slice(&self.readouts[task], &shared_map(theta, self.cfg.hidden, x)) - y[task];
                e * e
            })
            .sum::<f64>()
            / n
    }
}

fn dot_slice(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn shared_map(w: &[f64], hidden: usize, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    (0..hidden).map(|j| dot_slice(&w[j * d..(j + 1) * d], x)).collect()
}

/// Mean squared error per task on `batch` and its gradient with respect to
/// the shared map.
pub fn synth_regression_eval(
    theta: &ParamVector,
    problem: &SynthRegression,
    batch: DatasetSlice<'_>,
) -> Result<GradientSet> {
    if batch.inputs.is_empty() {
        return Err(MtlError::invalid("empty batch"));
    }
    if theta.dim() != problem.generating.len() {
        return Err(MtlError::DimensionMismatch {
            expected: problem.generating.len(),
            got: theta.dim(),
        });
    }
    let t = problem.spec.num_tasks;
    let hidden = problem.cfg.hidden;
    let d = problem.cfg.d_in;
    let n = batch.inputs.len() as f64;
    let w = theta.as_slice();
    let mut losses = vec![0.0; t];
    let mut grads = vec![vec![0.0; hidden * d]; t];
    for (x, y) in batch.inputs.iter().zip(batch.targets) {
        let h = shared_map(w, hidden, x);
        for task in 0..t {
            let c = problem.spec.scale_factors[task];
            let r = &problem.readouts[task];
            let e = c * dot_slice(r, &h) - y[task];
            losses[task] += e * e / n;
            let coef = 2.0 * e * c / n;
            let g = &mut grads[task];
            for j in 0..hidden {
                let cj = coef * r[j];
                for k in 0..d {
                    g[j * d + k] += cj * x[k];
                }
            }
        }
    }
    GradientSet::from_parts(&losses, &grads)
}

impl Problem for SynthRegression {
    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn task_loss(&self, theta: &[f64], task: usize) -> f64 {
        self.batch_task_loss(theta, self.train.all(), task)
    }

    fn evaluate(&self, theta: &ParamVector, step: usize) -> Result<GradientSet> {
        let mut gs = synth_regression_eval(theta, self, self.train.all())?;
        gs.step_index = step;
        Ok(gs)
    }

    /// Held-out average loss when a held-out sample exists.
    fn selection_loss(&self, theta: &ParamVector) -> Result<f64> {
        let data = self.heldout.as_ref().unwrap_or(&self.train);
        let gs = synth_regression_eval(theta, self, data.all())?;
        Ok(gs.losses().iter().sum::<f64>() / gs.num_tasks() as f64)
    }
}

/// Central differences `(L(θ + h e_i) - L(θ - h e_i)) / 2h` of one task loss.
pub fn fd_gradient(problem: &dyn Problem, theta: &ParamVector, task: usize, h: f64) -> Result<ParamVector> {
    fd_gradient_fn(|x| problem.task_loss(x, task), theta.as_slice(), h)
}

/// Central differences of an arbitrary scalar function.
pub fn fd_gradient_fn<F: Fn(&[f64]) -> f64>(f: F, theta: &[f64], h: f64) -> Result<ParamVector> {
    if !(h > 0.0) {
        return Err(MtlError::invalid("finite-difference step must be > 0"));
    }
    let mut x = theta.to_vec();
    let grad = (0..theta.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect();
    ParamVector::new(grad)
}
