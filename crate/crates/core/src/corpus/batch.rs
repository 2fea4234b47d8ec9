use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{PspError, Result};

/// Shuffles `items` under `seed` and cuts them into batches of
/// `batch_size`; the last batch may be smaller.
pub fn make_batches<T>(items: &[T], batch_size: usize, seed: u64) -> Result<Vec<Vec<&T>>> {
    if batch_size == 0 {
        return Err(PspError::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order
        .chunks(batch_size)
        .map(|chunk| chunk.iter().map(|&i| &items[i]).collect())
        .collect())
}
