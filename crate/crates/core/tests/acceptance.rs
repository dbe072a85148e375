//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test -p emtl-core --test acceptance` (add `--release` for
//! representative timings).

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use emtl_core::harness::{theorem1_diagnostic, Theorem1Config};
use emtl_core::mirror::kl_to_uniform;
use emtl_core::problems::{QUAD2_CENTERS, QUAD2_CURVATURES, QUAD2_DEFAULT_SCALES};
use emtl_core::{
    build_problem, minnorm_fw, player_init, player_step, relative_rates, run, EmtlConfig, GradientSet, ParamVector,
    PlayerState, Problem, ProblemSpec, RunConfig, RunResult, Strategy, SynthRegConfig, WeightVector,
};

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    check: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "gradient oracle",
            budget: Duration::from_secs(5),
            check: gradient_oracle,
        },
        Criterion {
            name: "min-norm certificate",
            budget: Duration::from_secs(30),
            check: minnorm_certificate,
        },
        Criterion {
            name: "mirror-ascent feasibility",
            budget: Duration::from_secs(5),
            check: mirror_feasibility,
        },
        Criterion {
            name: "epsilon=1 degenerates to MGDA",
            budget: Duration::from_secs(30),
            check: epsilon_one,
        },
        Criterion {
            name: "relative-rate scale invariance",
            budget: Duration::from_secs(5),
            check: scale_invariance,
        },
        Criterion {
            name: "quad2 (a) EMTL reaches average-loss minimum",
            budget: Duration::from_secs(60),
            check: quad2_a,
        },
        Criterion {
            name: "quad2 (b) LS dragged by the large-scale task",
            budget: Duration::from_secs(60),
            check: quad2_b,
        },
        Criterion {
            name: "quad2 (c) MGDA Pareto stationary",
            budget: Duration::from_secs(60),
            check: quad2_c,
        },
        Criterion {
            name: "synthreg rho-sweep generalization report",
            budget: Duration::from_secs(120),
            check: rho_sweep,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.check)();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; over budget {:?}", c.budget)),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {:<48} {:>8.2}s  {detail}", c.name, elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:<48} {:>8.2}s  {detail}", c.name, elapsed.as_secs_f64());
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn quad2() -> ProblemSpec {
    ProblemSpec::quad2(QUAD2_DEFAULT_SCALES)
}

fn synthreg() -> ProblemSpec {
    ProblemSpec::synthreg(vec![1.0, 10.0, 0.1], SynthRegConfig::default())
}

// ---------------------------------------------------------------- gradients

fn central_difference(problem: &dyn Problem, theta: &[f64], task: usize) -> Vec<f64> {
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let h = 1e-5 * theta[i].abs().max(1.0);
            x[i] = theta[i] + h;
            let up = problem.task_loss(&x, task);
            x[i] = theta[i] - h;
            let down = problem.task_loss(&x, task);
            x[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn gradient_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for spec in [quad2(), synthreg()] {
        let problem = build_problem(&spec, 11).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for point in 0..20 {
            let theta: Vec<f64> = (0..problem.dim()).map(|_| 2.0 * normal(&mut rng)).collect();
            let evals = problem
                .evaluate(&ParamVector::new(theta.clone()).map_err(|e| e.to_string())?, 0)
                .map_err(|e| e.to_string())?;
            for (task, eval) in evals.tasks().iter().enumerate() {
                let fd = central_difference(problem.as_ref(), &theta, task);
                let analytic = eval.gradient.as_slice();
                let diff: Vec<f64> = analytic.iter().zip(&fd).map(|(a, b)| a - b).collect();
                let rel = norm(&diff) / norm(analytic).max(1e-8);
                worst = worst.max(rel);
                checked += 1;
                ensure(rel < 1e-5, || {
                    format!("{} point {point} task {task}: relative error {rel:.3e}", spec.name)
                })?;
            }
        }
    }
    Ok(format!("{checked} gradients, worst relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- min-norm

fn gram(grads: &[Vec<f64>]) -> Vec<Vec<f64>> {
    grads
        .iter()
        .map(|a| grads.iter().map(|b| dot(a, b)).collect())
        .collect()
}

fn quad_form(g: &[Vec<f64>], a: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            s += a[i] * a[j] * g[i][j];
        }
    }
    s
}

/// Exhaustive search over the simplex lattice with step 1e-3.
fn grid_minnorm(grads: &[Vec<f64>]) -> Vec<f64> {
    const N: usize = 1000;
    let g = gram(grads);
    let mut best = (f64::INFINITY, Vec::new());
    match grads.len() {
        2 => {
            for i in 0..=N {
                let a = [i as f64 / N as f64, (N - i) as f64 / N as f64];
                let v = quad_form(&g, &a);
                if v < best.0 {
                    best = (v, a.to_vec());
                }
            }
        }
        3 => {
            for i in 0..=N {
                for j in 0..=(N - i) {
                    let a = [i as f64 / N as f64, j as f64 / N as f64, (N - i - j) as f64 / N as f64];
                    let v = quad_form(&g, &a);
                    if v < best.0 {
                        best = (v, a.to_vec());
                    }
                }
            }
        }
        t => unreachable!("grid oracle only for T <= 3, got {t}"),
    }
    best.1
}

/// Iteration budget for the certificate check. The training default (250)
/// stops short on a few ill-conditioned sets (nearly antiparallel vertices in
/// D = 2); the certificate is a statement about the converged solver.
const CERT_MAX_ITER: usize = 10_000;

fn minnorm_certificate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let shapes = [(2usize, 2usize), (2, 50), (3, 2), (3, 50), (5, 2), (5, 50)];
    let mut worst_cert: f64 = f64::INFINITY;
    let mut worst_alpha: f64 = 0.0;
    let mut most_iters = 0;
    let mut mismatches = Vec::new();
    for k in 0..200 {
        let (t, d) = shapes[k % shapes.len()];
        let grads: Vec<Vec<f64>> = (0..t).map(|_| (0..d).map(|_| normal(&mut rng)).collect()).collect();
        let refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        let sol = minnorm_fw(&refs, CERT_MAX_ITER, 1e-9).map_err(|e| e.to_string())?;

        most_iters = most_iters.max(sol.iterations_used);
        let dvec = sol.combined.as_slice();
        let dd = dot(dvec, dvec);
        let min_proj = grads.iter().map(|g| dot(g, dvec)).fold(f64::INFINITY, f64::min);
        let slack = min_proj - (dd - 1e-6);
        worst_cert = worst_cert.min(slack);
        ensure(slack >= 0.0, || {
            format!(
                "set {k} (T={t}, D={d}): min g.d = {min_proj:.3e} < |d|^2 - 1e-6 = {:.3e}",
                dd - 1e-6
            )
        })?;

        if t <= 3 {
            let reference = grid_minnorm(&grads);
            let dev = sol
                .alpha
                .as_slice()
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst_alpha = worst_alpha.max(dev);
            if dev > 2e-3 {
                let g = gram(&grads);
                let solver_value = quad_form(&g, sol.alpha.as_slice());
                let grid_value = quad_form(&g, &reference);
                mismatches.push(format!(
                    "set {k} (T={t}, D={d}) alpha dev {dev:.1e}, |d|^2 solver {solver_value:.1e} vs grid {grid_value:.1e}"
                ));
            }
        }
    }
    if !mismatches.is_empty() {
        return Err(format!(
            "certificate held on all 200 (worst slack {worst_cert:.2e}); {} grid mismatch(es) beyond 2e-3: {}",
            mismatches.len(),
            mismatches.join("; ")
        ));
    }
    Ok(format!(
        "200 sets, worst certificate slack {worst_cert:.2e}, worst grid deviation {worst_alpha:.2e}, most iterations {most_iters}"
    ))
}

// ---------------------------------------------------------------- mirror ascent

/// Unconstrained update `p_t exp(eta r_t)` normalized, in log space.
fn unconstrained(p: &[f64], rates: &[f64], eta: f64) -> Vec<f64> {
    let logits: Vec<f64> = p
        .iter()
        .zip(rates)
        .map(|(pi, r)| pi.max(1e-300).ln() + eta * r)
        .collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| (z - lse).exp()).collect()
}

fn kl_uniform(p: &[f64]) -> f64 {
    let t = p.len() as f64;
    p.iter().filter(|&&v| v > 0.0).map(|&v| v * (t * v).ln()).sum()
}

fn mirror_feasibility() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let rhos: [f64; 3] = [1e-4, 0.1, 1.2];
    let mut states: Vec<Option<PlayerState>> = vec![None; rhos.len()];
    let (mut shortcut, mut projected) = (0, 0);
    let mut worst_sum: f64 = 0.0;
    for step in 0..1000 {
        let which = step % rhos.len();
        let rho = rhos[which];
        // Restart with a fresh task count every 50 steps per radius.
        if step % 150 < rhos.len() || states[which].is_none() {
            let t = rng.random_range(2..=6);
            states[which] = Some(player_init(t).map_err(|e| e.to_string())?);
        }
        let state = states[which].take().unwrap();
        let t = state.p.len();
        let spread = [0.1, 1.0, 10.0][rng.random_range(0..3)];
        let rates: Vec<f64> = (0..t).map(|_| (spread * normal(&mut rng)).exp()).collect();
        let eta = rng.random_range(0.01..3.0);

        let free = unconstrained(state.p.as_slice(), &rates, eta);
        let free_feasible = kl_uniform(&free) <= rho.sqrt();

        let next = player_step(&state, &rates, eta, rho).map_err(|e| e.to_string())?;
        let p = next.p.as_slice();
        let sum: f64 = p.iter().sum();
        worst_sum = worst_sum.max((sum - 1.0).abs());
        ensure(p.iter().all(|&v| v >= 0.0) && (sum - 1.0).abs() <= 1e-12, || {
            format!("step {step}: p = {p:?} off the simplex (sum - 1 = {:.2e})", sum - 1.0)
        })?;
        let kl = kl_uniform(p);
        ensure(kl <= rho.sqrt() + 1e-9, || {
            format!("step {step}: KL {kl:.6e} > sqrt(rho) = {:.6e}", rho.sqrt())
        })?;
        ensure((next.lambda_last == 0.0) == free_feasible, || {
            format!(
                "step {step}: lambda = {} but unconstrained KL {:.6e} vs budget {:.6e}",
                next.lambda_last,
                kl_uniform(&free),
                rho.sqrt()
            )
        })?;
        ensure((next.kl_to_uniform - kl_to_uniform(p)).abs() <= 1e-15, || {
            format!("step {step}: stale KL")
        })?;
        if free_feasible {
            shortcut += 1;
        } else {
            projected += 1;
        }
        states[which] = Some(next);
    }
    ensure(shortcut > 0 && projected > 0, || {
        format!("degenerate coverage: {shortcut} free, {projected} projected")
    })?;
    Ok(format!(
        "1000 steps ({shortcut} unconstrained, {projected} projected), worst |sum-1| {worst_sum:.1e}"
    ))
}

// ---------------------------------------------------------------- epsilon = 1

fn epsilon_one() -> Outcome {
    let mut compared = 0;
    for init in 0..5 {
        let emtl = EmtlConfig {
            epsilon: 1.0,
            steps: 500,
            ..EmtlConfig::default()
        };
        let mk = |method| RunConfig {
            init_index: init,
            seed: 3,
            ..RunConfig::new(quad2(), method, emtl.clone())
        };
        let a = run(&mk(Strategy::Emtl)).map_err(|e| e.to_string())?;
        let b = run(&mk(Strategy::Mgda)).map_err(|e| e.to_string())?;
        ensure(a.trajectory.len() == 501 && b.trajectory.len() == 501, || {
            "expected 501 records".into()
        })?;
        for (ra, rb) in a.trajectory.iter().zip(&b.trajectory) {
            let same = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(u, v)| u.to_bits() == v.to_bits());
            ensure(same(ra.theta.as_slice(), rb.theta.as_slice()), || {
                format!(
                    "init {init} step {}: {:?} vs {:?}",
                    ra.step,
                    ra.theta.as_slice(),
                    rb.theta.as_slice()
                )
            })?;
            ensure(same(&ra.losses, &rb.losses), || {
                format!("init {init} step {}: losses differ", ra.step)
            })?;
            compared += 1;
        }
    }
    Ok(format!("{compared} states bit-identical across 5 inits"))
}

// ---------------------------------------------------------------- scale invariance

fn scale_invariance() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for spec in [quad2(), synthreg()] {
        let problem = build_problem(&spec, 1).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let theta: Vec<f64> = (0..problem.dim()).map(|_| 2.0 * normal(&mut rng)).collect();
            let evals = problem
                .evaluate(&ParamVector::new(theta).map_err(|e| e.to_string())?, 0)
                .map_err(|e| e.to_string())?;
            let t = evals.num_tasks();
            let uniform = WeightVector::uniform(t);
            let base = relative_rates(&evals, &uniform, 1e-12).map_err(|e| e.to_string())?;
            let losses = evals.losses();
            let grads: Vec<Vec<f64>> = evals.gradients().iter().map(|g| g.as_slice().to_vec()).collect();
            for task in 0..t {
                for c in [1e-3, 1.0, 1e3] {
                    let mut l = losses.clone();
                    let mut g = grads.clone();
                    l[task] *= c;
                    g[task].iter_mut().for_each(|v| *v *= c);
                    let scaled = GradientSet::from_parts(&l, &g).map_err(|e| e.to_string())?;
                    let rates = relative_rates(&scaled, &uniform, 1e-12).map_err(|e| e.to_string())?;
                    for k in 0..t {
                        let rel = (rates.raw[k] - base.raw[k]).abs() / base.raw[k].abs().max(f64::MIN_POSITIVE);
                        worst = worst.max(rel);
                        ensure(rel < 1e-12, || {
                            format!("{} task {task} c={c}: rate {k} moved by {rel:.2e}", spec.name)
                        })?;
                    }
                }
            }
        }
    }
    Ok(format!("worst relative change {worst:.2e}"))
}

// ---------------------------------------------------------------- quad2

/// Closed-form minimizer and value of the scaled average loss.
fn average_optimum(scales: [f64; 2]) -> ([f64; 2], f64) {
    let mut x = [0.0; 2];
    for (i, xi) in x.iter_mut().enumerate() {
        let w: Vec<f64> = (0..2).map(|t| scales[t] * QUAD2_CURVATURES[t][i]).collect();
        *xi = (w[0] * QUAD2_CENTERS[0][i] + w[1] * QUAD2_CENTERS[1][i]) / (w[0] + w[1]);
    }
    (x, average_loss(&x, scales))
}

fn average_loss(theta: &[f64], scales: [f64; 2]) -> f64 {
    (0..2)
        .map(|t| {
            let q: f64 = (0..2)
                .map(|i| QUAD2_CURVATURES[t][i] * (theta[i] - QUAD2_CENTERS[t][i]).powi(2))
                .sum();
            0.5 * scales[t] * q
        })
        .sum::<f64>()
        / 2.0
}

fn quad2_run(method: Strategy, init: usize) -> Result<RunResult, String> {
    let cfg = RunConfig {
        init_index: init,
        record_every: 100,
        ..RunConfig::new(
            quad2(),
            method,
            EmtlConfig {
                rho: 0.5,
                eta_p: 0.5,
                epsilon: 0.0,
                lr: 1e-2,
                steps: 2000,
                ..EmtlConfig::default()
            },
        )
    };
    run(&cfg).map_err(|e| format!("{method} init {init}: {e}"))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn quad2_a() -> Outcome {
    let (opt, min) = average_optimum(QUAD2_DEFAULT_SCALES);
    let mut report = Vec::new();
    let mut ok = true;
    for init in 0..5 {
        let r = quad2_run(Strategy::Emtl, init)?;
        let avg = average_loss(r.final_theta.as_slice(), QUAD2_DEFAULT_SCALES);
        let rel = (avg - min) / min;
        ok &= rel.abs() <= 0.05;
        report.push(format!("init{init} {:+.1}%", 100.0 * rel));
    }
    let detail = format!(
        "optimum ({:.4}, {:.4}) avg {min:.4}; EMTL final excess: {}",
        opt[0],
        opt[1],
        report.join(", ")
    );
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn quad2_b() -> Outcome {
    let (opt, _) = average_optimum(QUAD2_DEFAULT_SCALES);
    let mut wins = 0;
    let mut report = Vec::new();
    for init in 0..5 {
        let ls = dist(
            quad2_run(Strategy::LinearScalarization, init)?.final_theta.as_slice(),
            &opt,
        );
        let emtl = dist(quad2_run(Strategy::Emtl, init)?.final_theta.as_slice(), &opt);
        if ls.is_finite() && ls >= 2.0 * emtl {
            wins += 1;
        }
        report.push(format!("init{init} LS {ls:.3e} / EMTL {emtl:.3e}"));
    }
    let detail = format!("{wins}/5 inits with LS >= 2x EMTL deviation ({})", report.join("; "));
    if wins >= 3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn quad2_c() -> Outcome {
    let problem = build_problem(&quad2(), 0).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for init in 0..5 {
        let r = quad2_run(Strategy::Mgda, init)?;
        let evals = problem.evaluate(&r.final_theta, 0).map_err(|e| e.to_string())?;
        let g: Vec<&[f64]> = evals.gradients().iter().map(|g| g.as_slice()).collect();
        // Closed-form two-point min-norm, independent of the solver under test.
        let diff: Vec<f64> = g[0].iter().zip(g[1]).map(|(a, b)| a - b).collect();
        let dd = dot(&diff, &diff);
        let a = if dd > 0.0 {
            (dot(g[1], g[1]) - dot(g[0], g[1])) / dd
        } else {
            0.5
        }
        .clamp(0.0, 1.0);
        let d: Vec<f64> = g[0].iter().zip(g[1]).map(|(x, y)| a * x + (1.0 - a) * y).collect();
        let n = norm(&d);
        worst = worst.max(n);
        ensure(n < 1e-4, || {
            format!(
                "init {init}: min-norm combination {n:.3e} at {:?}",
                r.final_theta.as_slice()
            )
        })?;
    }
    Ok(format!("worst min-norm combination {worst:.2e}"))
}

// ---------------------------------------------------------------- synthreg sweep

fn rho_sweep() -> Outcome {
    let base = RunConfig {
        record_every: 50,
        ..RunConfig::new(
            synthreg(),
            Strategy::Emtl,
            EmtlConfig {
                steps: 1000,
                ..EmtlConfig::default()
            },
        )
    };
    let cfg = Theorem1Config {
        run: base,
        rhos: vec![1e-4, 1e-2, 0.1, 0.5, 1.2],
        seeds: (0..5).collect(),
        parallelism: 4,
        output_path: String::new(),
    };
    let report = theorem1_diagnostic(&cfg).map_err(|e| e.to_string())?;
    ensure(report.failures.is_empty(), || {
        format!("failed runs: {:?}", report.failures)
    })?;
    ensure(report.entries.len() == 25, || {
        format!("{} entries, expected 25", report.entries.len())
    })?;
    for e in &report.entries {
        ensure(
            e.train_variance.is_finite()
                && e.train_variance >= 0.0
                && e.heldout_variance.is_finite()
                && e.heldout_variance >= 0.0,
            || {
                format!(
                    "rho {} seed {}: variances {} / {}",
                    e.rho, e.seed, e.train_variance, e.heldout_variance
                )
            },
        )?;
    }
    let rank = report
        .rank_correlation_rho_gap
        .filter(|r| r.is_finite())
        .ok_or_else(|| "rank correlation not computed".to_string())?;
    Ok(format!(
        "25 runs, spearman(rho, gap) = {rank:+.3}, spearman(variance, gap) = {}",
        report
            .rank_correlation_variance_gap
            .map_or("n/a".to_string(), |v| format!("{v:+.3}"))
    ))
}
