use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sample::SequenceSample;
use crate::error::{Error, Result};

/// Seeded shuffle followed by a cut at `round(n * train_fraction)`.
pub fn split(
    samples: &[SequenceSample],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<SequenceSample>, Vec<SequenceSample>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = (samples.len() as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train == samples.len() {
        return Err(Error::EmptyDataset(format!(
            "splitting {} samples at {train_fraction} leaves one side empty",
            samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}
