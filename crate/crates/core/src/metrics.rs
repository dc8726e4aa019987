//! Entropy, overlap metrics, and thresholding.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::types::{BinaryMask, ProbabilityVector};

/// Predictive entropy in nats: `-sum_i p_i ln p_i`, with `0 ln 0 = 0`.
pub fn entropy(p: &ProbabilityVector) -> f64 {
    let mut acc = 0.0;
    for &pi in p.values() {
        if pi > 0.0 {
            acc -= pi * pi.ln();
        }
    }
    acc
}

/// Analytic entropy bounds for an `n`-class distribution: `(0, ln n)`.
pub fn entropy_bounds(n_classes: usize) -> (f64, f64) {
    (0.0, (n_classes as f64).ln())
}

/// Min-max normalizes an entropy value into `[0, 1]`.
///
/// Values outside the bounds (possible with empirical bounds) are clamped.
pub fn normalize_uncertainty(phi: f64, bounds: (f64, f64)) -> Result<f64> {
    let (lo, hi) = bounds;
    if !(hi - lo).is_finite() || hi - lo < 1e-12 {
        return Err(Error::Config(format!("degenerate entropy bounds ({lo}, {hi})")));
    }
    Ok(((phi - lo) / (hi - lo)).clamp(0.0, 1.0))
}

/// Dice index `2|A and B| / (|A| + |B|)`.
///
/// Both masks empty yields 1; exactly one empty yields 0.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (inter, na, nb) = overlap_counts(a, b)?;
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Jaccard index `|A and B| / |A or B|`, with the same empty-mask convention as [`dice`].
pub fn jaccard(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (inter, na, nb) = overlap_counts(a, b)?;
    let union = na + nb - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

fn overlap_counts(a: &BinaryMask, b: &BinaryMask) -> Result<(usize, usize, usize)> {
    if a.data().dim() != b.data().dim() {
        return Err(Error::Shape(format!(
            "mask shapes differ: {:?} vs {:?}",
            a.data().dim(),
            b.data().dim()
        )));
    }
    let mut inter = 0;
    for (&x, &y) in a.data().iter().zip(b.data().iter()) {
        if x && y {
            inter += 1;
        }
    }
    Ok((inter, a.count(), b.count()))
}

/// Thresholds a probability map; `p >= threshold` marks lesion.
pub fn binarize(prob_map: &Array2<f64>, threshold: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold {threshold} outside [0, 1]")));
    }
    for &p in prob_map.iter() {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::Shape(format!("probability map value {p} outside [0, 1]")));
        }
    }
    Ok(BinaryMask::new(prob_map.mapv(|p| p >= threshold)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr2, Array2};
    use proptest::prelude::*;

    fn mask_from(rows: &[&[u8]]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        let mut m = Array2::from_elem((h, w), false);
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                m[[i, j]] = v != 0;
            }
        }
        BinaryMask::new(m)
    }

    #[test]
    fn entropy_uniform_is_ln_n() {
        let p = ProbabilityVector::uniform(7).unwrap();
        assert_abs_diff_eq!(entropy(&p), 1.945910149055313, epsilon = 1e-12);
        let p2 = ProbabilityVector::uniform(2).unwrap();
        assert_abs_diff_eq!(entropy(&p2), 0.693147180559945, epsilon = 1e-12);
    }

    #[test]
    fn entropy_one_hot_is_zero() {
        let p = ProbabilityVector::new(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(entropy(&p), 0.0);
    }

    #[test]
    fn entropy_mixed_matches_hand_computed_value() {
        // -sum p ln p for (0.7, 0.1, 0.1, 0.05, 0.05), evaluated independently.
        let p = ProbabilityVector::new(vec![0.7, 0.1, 0.1, 0.05, 0.05]).unwrap();
        assert_abs_diff_eq!(entropy(&p), 1.009762706711321, epsilon = 1e-12);
    }

    #[test]
    fn normalize_midpoint_of_analytic_bounds() {
        let bounds = entropy_bounds(7);
        let phi = bounds.1 / 2.0;
        assert_abs_diff_eq!(normalize_uncertainty(phi, bounds).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn normalize_clamps_out_of_range_values() {
        assert_eq!(normalize_uncertainty(-0.3, (0.0, 1.0)).unwrap(), 0.0);
        assert_eq!(normalize_uncertainty(1.7, (0.0, 1.0)).unwrap(), 1.0);
    }

    #[test]
    fn normalize_rejects_degenerate_bounds() {
        assert!(normalize_uncertainty(0.5, (0.3, 0.3)).is_err());
    }

    #[test]
    fn dice_and_jaccard_on_hand_counted_grid() {
        // |A| = 4, |B| = 4, |A and B| = 2: DI = 4/8, JI = 2/6.
        let a = mask_from(&[
            &[1, 1, 0, 0],
            &[1, 1, 0, 0],
            &[0, 0, 0, 0],
            &[0, 0, 0, 0],
        ]);
        let b = mask_from(&[
            &[0, 1, 1, 0],
            &[0, 1, 1, 0],
            &[0, 0, 0, 0],
            &[0, 0, 0, 0],
        ]);
        assert_abs_diff_eq!(dice(&a, &b).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(jaccard(&a, &b).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_mask_conventions() {
        let e = BinaryMask::zeros(3, 3);
        let f = mask_from(&[&[1, 0, 0], &[0, 0, 0], &[0, 0, 0]]);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
        assert_eq!(jaccard(&e, &e).unwrap(), 1.0);
        assert_eq!(dice(&e, &f).unwrap(), 0.0);
        assert_eq!(jaccard(&f, &e).unwrap(), 0.0);
    }

    #[test]
    fn dice_rejects_shape_mismatch() {
        let a = BinaryMask::zeros(3, 3);
        let b = BinaryMask::zeros(3, 4);
        assert!(dice(&a, &b).is_err());
    }

    #[test]
    fn binarize_threshold_is_inclusive() {
        let p = arr2(&[[0.24, 0.25], [0.26, 0.0]]);
        let m = binarize(&p, 0.25).unwrap();
        assert!(!m.data()[[0, 0]]);
        assert!(m.data()[[0, 1]]);
        assert!(m.data()[[1, 0]]);
        assert!(!m.data()[[1, 1]]);
    }

    #[test]
    fn binarize_rejects_bad_inputs() {
        let p = arr2(&[[1.2]]);
        assert!(binarize(&p, 0.5).is_err());
        let q = arr2(&[[0.5]]);
        assert!(binarize(&q, 1.5).is_err());
    }

    fn arb_probs(n: usize) -> impl Strategy<Value = ProbabilityVector> {
        prop::collection::vec(1e-9..1.0f64, n).prop_map(|raw| {
            let s: f64 = raw.iter().sum();
            let mut p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let total: f64 = p.iter().sum();
            let last = p.len() - 1;
            p[last] += 1.0 - total;
            ProbabilityVector::new(p).unwrap()
        })
    }

    fn arb_mask() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (1usize..6, 1usize..6).prop_flat_map(|(h, w)| {
            let cells = prop::collection::vec(prop::bool::ANY, h * w);
            (cells.clone(), cells).prop_map(move |(ca, cb)| {
                let a = Array2::from_shape_vec((h, w), ca).unwrap();
                let b = Array2::from_shape_vec((h, w), cb).unwrap();
                (BinaryMask::new(a), BinaryMask::new(b))
            })
        })
    }

    proptest! {
        #[test]
        fn entropy_within_analytic_bounds(p in arb_probs(7)) {
            let phi = entropy(&p);
            let (lo, hi) = entropy_bounds(p.len());
            prop_assert!(phi >= lo - 1e-12);
            prop_assert!(phi <= hi + 1e-12);
        }

        #[test]
        fn jaccard_matches_dice_identity(pair in arb_mask()) {
            // JI = DI / (2 - DI) holds for every pair, including the empty conventions.
            let (a, b) = pair;
            let di = dice(&a, &b).unwrap();
            let ji = jaccard(&a, &b).unwrap();
            prop_assert!((ji - di / (2.0 - di)).abs() < 1e-9);
        }

        #[test]
        fn overlap_metrics_are_symmetric(pair in arb_mask()) {
            let (a, b) = pair;
            prop_assert_eq!(dice(&a, &b).unwrap(), dice(&b, &a).unwrap());
            prop_assert_eq!(jaccard(&a, &b).unwrap(), jaccard(&b, &a).unwrap());
        }
    }
}
