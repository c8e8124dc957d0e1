use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{invalid, Result};

/// Uniform Xavier/Glorot initialization in `±sqrt(6 / (fan_in + fan_out))`.
///
/// Fans come from the last two dimensions (rows = fan-out, columns =
/// fan-in); a vector uses its length as fan-in and a fan-out of zero.
pub fn xavier_init(shape: &[usize], seed: u64) -> Result<Tensor> {
    if shape.is_empty() {
        return Err(invalid("xavier_init needs at least one dimension"));
    }
    let (fan_in, fan_out) = match shape {
        [n] => (*n, 0),
        [.., rows, cols] => (*cols, *rows),
        [] => unreachable!(),
    };
    let total = fan_in + fan_out;
    if total == 0 {
        return Ok(Tensor::zeros(shape));
    }
    let bound = (6.0 / total as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data)
}
