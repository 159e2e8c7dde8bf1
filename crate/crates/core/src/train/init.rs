use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::models::{ParamRole, ParamTable};
use crate::tensor::Scalar;

/// Draws every weight from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) in table order
/// and resets biases, batch-norm affine terms and running statistics.
pub fn init_uniform<F: Scalar>(table: &mut ParamTable<F>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for e in table.entries_mut() {
        match e.role {
            ParamRole::Weight { fan_in } => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let dist = Uniform::new(-bound, bound);
                for v in &mut e.data {
                    *v = F::from_f64(dist.sample(&mut rng));
                }
            }
            ParamRole::Gamma | ParamRole::RunningVar => e.data.fill(F::one()),
            ParamRole::Bias | ParamRole::Beta | ParamRole::RunningMean => e.data.fill(F::zero()),
        }
    }
}
