//! Prints final losses of every method from every quad2 init point.
//!
//! cargo run --release -p emtl-core --example quad2_methods -- [epsilon] [rho] [scale2]

use emtl_core::problems::{quad2_average_minimizer, quad2_eval};
use emtl_core::{run_grid, EmtlConfig, ProblemSpec, RunConfig, Strategy};

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let epsilon = args.first().copied().unwrap_or(0.0);
    let rho = args.get(1).copied().unwrap_or(0.5);
    let scale2 = args.get(2).copied().unwrap_or(100.0);
    let scales = [1.0, scale2];
    let spec = ProblemSpec::quad2(scales);
    let emtl = EmtlConfig {
        epsilon,
        rho,
        steps: 2000,
        lr: 1e-2,
        ..EmtlConfig::default()
    };
    let mut configs = Vec::new();
    for method in Strategy::ALL {
        for init in 0..spec.init_points.len() {
            let mut c = RunConfig::new(spec.clone(), method, emtl.clone());
            c.init_index = init;
            configs.push(c);
        }
    }
    let results = run_grid(&configs, 4).expect("grid");
    let opt = quad2_average_minimizer(scales);
    let opt_gs = quad2_eval(&emtl_core::ParamVector::new(opt.to_vec()).unwrap(), &spec).unwrap();
    let opt_avg = opt_gs.losses().iter().sum::<f64>() / 2.0;
    println!("average-loss minimizer {opt:?}, minimum {opt_avg:.6}");
    println!(
        "{:<10} {:>4} {:>24} {:>14} {:>12} {:>12}",
        "method", "init", "theta", "avg loss", "dist", "|d|"
    );
    for (c, r) in configs.iter().zip(results) {
        match r {
            Ok(r) => println!(
                "{:<10} {:>4} {:>24} {:>14.6e} {:>12.4e} {:>12.3e}",
                c.method.name(),
                c.init_index,
                format!(
                    "({:.4}, {:.4})",
                    r.final_theta.as_slice()[0],
                    r.final_theta.as_slice()[1]
                ),
                r.final_avg_loss,
                r.distance_to_reference,
                r.final_direction_norm
            ),
            Err(e) => println!("{:<10} {:>4} error: {e}", c.method.name(), c.init_index),
        }
    }
}
