//! Seeded fixtures shared by the criterion benches.

use emtl_core::{GradientSet, PlayerState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// `tasks` Gaussian gradients of dimension `dim`.
pub fn random_gradients(tasks: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..tasks)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

/// Gradient set with log-uniform loss magnitudes in `[1e-2, 1e2]`.
pub fn random_gradient_set(tasks: usize, dim: usize, seed: u64) -> GradientSet {
    let grads = random_gradients(tasks, dim, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let losses: Vec<f64> = (0..tasks)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            10f64.powf((2.0 * z).clamp(-2.0, 2.0))
        })
        .collect();
    GradientSet::from_parts(&losses, &grads).expect("finite fixture")
}

/// Rates with a controlled spread, for player-step benches.
pub fn random_rates(tasks: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..tasks)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z.exp()
        })
        .collect()
}

pub fn uniform_player(tasks: usize) -> PlayerState {
    emtl_core::player_init(tasks).expect("tasks >= 2")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_deterministic() {
        assert_eq!(random_gradients(3, 4, 7), random_gradients(3, 4, 7));
        assert_ne!(random_gradients(3, 4, 7), random_gradients(3, 4, 8));
        let set = random_gradient_set(5, 10, 1);
        assert_eq!(set.num_tasks(), 5);
        assert_eq!(set.dim(), 10);
        assert!(random_rates(4, 2).iter().all(|r| *r > 0.0));
    }
}
