//! Training losses.

use crate::nn::layers::Tensor;

const CLAMP: f64 = 1e-7;

/// Binary cross-entropy, averaged over all elements, with predictions
/// clamped to `[1e-7, 1 - 1e-7]` for numerical stability.
///
/// Returns the loss and its gradient with respect to the predictions.
pub fn bce(pred: &Tensor, target: &Tensor) -> (f64, Tensor) {
    assert_eq!(pred.dim(), target.dim(), "bce shapes");
    let count = pred.len() as f64;
    let mut loss = 0.0;
    let grad = ndarray::Zip::from(pred).and(target).map_collect(|&p, &t| {
        let pc = p.clamp(CLAMP, 1.0 - CLAMP);
        loss -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
        if p < CLAMP || p > 1.0 - CLAMP {
            0.0
        } else {
            (pc - t) / (pc * (1.0 - pc)) / count
        }
    });
    (loss / count, grad)
}

/// Categorical cross-entropy against one-hot targets, averaged over the
/// batch. Expects `(n, c, 1, 1)` probability activations.
pub fn categorical_cross_entropy(pred: &Tensor, target: &Tensor) -> (f64, Tensor) {
    assert_eq!(pred.dim(), target.dim(), "cce shapes");
    let n = pred.dim().0 as f64;
    let mut loss = 0.0;
    let grad = ndarray::Zip::from(pred).and(target).map_collect(|&p, &t| {
        if t > 0.0 {
            let pc = p.clamp(CLAMP, 1.0 - CLAMP);
            loss -= t * pc.ln();
            if p < CLAMP || p > 1.0 - CLAMP {
                0.0
            } else {
                -t / pc / n
            }
        } else {
            0.0
        }
    });
    (loss / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array4;

    #[test]
    fn bce_matches_hand_computed_value() {
        // -(ln 0.8 + ln 0.7) / 2 computed independently.
        let pred = Array4::from_shape_vec((2, 1, 1, 1), vec![0.8, 0.3]).unwrap();
        let target = Array4::from_shape_vec((2, 1, 1, 1), vec![1.0, 0.0]).unwrap();
        let (loss, _) = bce(&pred, &target);
        assert_abs_diff_eq!(loss, 0.2899092476264711, epsilon = 1e-12);
    }

    #[test]
    fn bce_gradient_matches_finite_difference() {
        let pred = Array4::from_shape_vec((1, 3, 1, 1), vec![0.2, 0.5, 0.9]).unwrap();
        let target = Array4::from_shape_vec((1, 3, 1, 1), vec![0.0, 1.0, 1.0]).unwrap();
        let (_, grad) = bce(&pred, &target);
        let h = 1e-6;
        for idx in 0..3 {
            let mut plus = pred.clone();
            plus[[0, idx, 0, 0]] += h;
            let mut minus = pred.clone();
            minus[[0, idx, 0, 0]] -= h;
            let fd = (bce(&plus, &target).0 - bce(&minus, &target).0) / (2.0 * h);
            assert_abs_diff_eq!(grad[[0, idx, 0, 0]], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn bce_is_finite_at_saturated_predictions() {
        let pred = Array4::from_shape_vec((1, 2, 1, 1), vec![0.0, 1.0]).unwrap();
        let target = Array4::from_shape_vec((1, 2, 1, 1), vec![1.0, 0.0]).unwrap();
        let (loss, grad) = bce(&pred, &target);
        assert!(loss.is_finite());
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn cce_penalizes_only_the_true_class() {
        let pred = Array4::from_shape_vec((1, 3, 1, 1), vec![0.2, 0.5, 0.3]).unwrap();
        let target = Array4::from_shape_vec((1, 3, 1, 1), vec![0.0, 1.0, 0.0]).unwrap();
        let (loss, grad) = categorical_cross_entropy(&pred, &target);
        assert_abs_diff_eq!(loss, -(0.5f64.ln()), epsilon = 1e-12);
        assert_eq!(grad[[0, 0, 0, 0]], 0.0);
        assert!(grad[[0, 1, 0, 0]] < 0.0);
    }
}
