use super::tensor::Tensor;
use crate::Result;

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before taking logs.
pub const CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean over all elements of `-(t ln p + (1 - t) ln(1 - p))`.
    BinaryCrossEntropy,
    /// Mean over rows of `-Σ t ln p`.
    CategoricalCrossEntropy,
}

/// Returns the loss and `dL/dpredicted`.
pub fn loss_and_grad(kind: LossKind, predicted: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    predicted.ensure_same_shape(target, "loss")?;
    let mut grad = Tensor::zeros(predicted.shape());
    let mut loss = 0.0;
    match kind {
        LossKind::BinaryCrossEntropy => {
            let n = predicted.len() as f64;
            for ((g, &p), &t) in grad.data_mut().iter_mut().zip(predicted.data()).zip(target.data()) {
                let p = p.clamp(CLAMP, 1.0 - CLAMP);
                loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
                *g = (p - t) / (p * (1.0 - p)) / n;
            }
            loss /= n;
        }
        LossKind::CategoricalCrossEntropy => {
            let rows = predicted.rows() as f64;
            for ((g, &p), &t) in grad.data_mut().iter_mut().zip(predicted.data()).zip(target.data()) {
                if t == 0.0 {
                    continue;
                }
                let p = p.clamp(CLAMP, 1.0 - CLAMP);
                loss -= t * p.ln();
                *g = -t / p / rows;
            }
            loss /= rows;
        }
    }
    Ok((loss.max(0.0), grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn bce_perfect_prediction_is_near_zero() {
        let (l, _) = loss_and_grad(
            LossKind::BinaryCrossEntropy,
            &t(&[1, 1], &[1.0 - 1e-7]),
            &t(&[1, 1], &[1.0]),
        )
        .unwrap();
        assert!((l - 1e-7).abs() < 1e-12, "{l}");
    }

    #[test]
    fn bce_half_is_ln2() {
        let (l, g) = loss_and_grad(
            LossKind::BinaryCrossEntropy,
            &t(&[1, 1], &[0.5]),
            &t(&[1, 1], &[1.0]),
        )
        .unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g.data()[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn cce_matching_one_hot_is_zero() {
        let p = t(&[2, 3], &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let (l, g) = loss_and_grad(LossKind::CategoricalCrossEntropy, &p, &p).unwrap();
        assert!(l < 1e-6);
        assert_eq!(g.shape(), p.shape());
    }

    #[test]
    fn saturated_inputs_stay_finite() {
        let (l, g) = loss_and_grad(
            LossKind::BinaryCrossEntropy,
            &t(&[1, 2], &[0.0, 1.0]),
            &t(&[1, 2], &[1.0, 0.0]),
        )
        .unwrap();
        assert!(l.is_finite() && g.is_finite());
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        assert!(loss_and_grad(
            LossKind::BinaryCrossEntropy,
            &Tensor::zeros(&[1, 2]),
            &Tensor::zeros(&[2, 1])
        )
        .is_err());
    }
}
