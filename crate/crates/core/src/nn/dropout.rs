use rand::Rng;

use super::tensor::Tensor;
use crate::{Error, Result};

/// Inverted dropout. Returns the output and the per-element multiplier mask
/// (`0` for dropped elements, `1 / (1 - rate)` for survivors).
pub fn dropout_forward<R: Rng + ?Sized>(
    input: &Tensor,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor, Vec<f64>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::usage(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), vec![1.0; input.len()]));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mut out = input.clone();
    for (v, m) in out.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok((out, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(n: usize) -> Tensor {
        Tensor::new(vec![1, n], (0..n).map(|i| 1.0 + (i % 7) as f64).collect()).unwrap()
    }

    #[test]
    fn zero_rate_and_inference_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = ramp(100);
        assert_eq!(dropout_forward(&x, 0.0, &mut rng, true).unwrap().0, x);
        assert_eq!(dropout_forward(&x, 0.9, &mut rng, false).unwrap().0, x);
    }

    #[test]
    fn quarter_rate_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let x = ramp(100_000);
        let (y, mask) = dropout_forward(&x, 0.25, &mut rng, true).unwrap();
        let zeroed = mask.iter().filter(|&&m| m == 0.0).count() as f64 / 1e5;
        assert!((0.24..=0.26).contains(&zeroed), "{zeroed}");
        let mean_in: f64 = x.data().iter().sum::<f64>() / 1e5;
        let mean_out: f64 = y.data().iter().sum::<f64>() / 1e5;
        assert!(((mean_out - mean_in) / mean_in).abs() < 0.02);
    }

    #[test]
    fn rate_one_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(dropout_forward(&ramp(3), 1.0, &mut rng, true).is_err());
    }
}
