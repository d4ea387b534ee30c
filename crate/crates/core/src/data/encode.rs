//! Rate encoding of static images and desired output counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lif::steps_to_train;
use crate::spike::{SpikeTrain, TimeGrid};

pub const DEFAULT_POISSON_SCALE: f64 = 0.5;

/// Per-pixel spike steps: each step fires with probability
/// `scale * intensity / 255`, drawn from a stream seeded by `seed`.
pub fn poisson_steps(pixels: &[u8], grid: &TimeGrid, scale: f64, seed: u64) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_steps();
    pixels
        .iter()
        .map(|&px| {
            if px == 0 {
                return Vec::new();
            }
            let p = (scale * px as f64 / 255.0).clamp(0.0, 1.0);
            (0..n as u32).filter(|_| rng.gen::<f64>() < p).collect()
        })
        .collect()
}

pub fn poisson_encode(pixels: &[u8], grid: &TimeGrid, scale: f64, seed: u64) -> Vec<SpikeTrain> {
    poisson_steps(pixels, grid, scale, seed)
        .iter()
        .map(|s| steps_to_train(s, grid))
        .collect()
}

/// Encoding seed of one sample.
pub fn sample_seed(global_seed: u64, sample_index: usize) -> u64 {
    global_seed ^ sample_index as u64
}

/// Desired counts: `hi` for the label, `lo` elsewhere.
pub fn make_targets(label: usize, n_classes: usize, hi: f64, lo: f64) -> Result<Vec<f64>> {
    if label >= n_classes {
        return Err(Error::data(format!("label {label} outside {n_classes} classes")));
    }
    if !(hi > lo && lo >= 0.0) {
        return Err(Error::config(format!("targets need hi > lo >= 0 (hi={hi}, lo={lo})")));
    }
    let mut y = vec![lo; n_classes];
    y[label] = hi;
    Ok(y)
}

/// Index of the largest count; ties go to the lowest index.
pub fn predict(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}
