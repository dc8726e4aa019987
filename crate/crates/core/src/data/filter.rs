//! Separable Gaussian filtering with replicated borders.

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::types::Image;

/// Normalized 1-D Gaussian taps truncated at three standard deviations.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|t| (-(t as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Gaussian-blurs every channel. `sigma = 0` is the identity.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::Config(format!("gaussian sigma {sigma} must be finite and >= 0")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let taps = gaussian_kernel(sigma);
    let radius = (taps.len() / 2) as i64;
    let (h, w, c) = img.data().dim();
    let src = img.data();
    // Horizontal pass, then vertical; borders replicate the edge pixel.
    let mut mid = Array3::zeros((h, w, c));
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (t, &k) in taps.iter().enumerate() {
                    let jj = (j as i64 + t as i64 - radius).clamp(0, w as i64 - 1) as usize;
                    acc += k * src[[i, jj, ch]];
                }
                mid[[i, j, ch]] = acc;
            }
        }
    }
    let mut out = Array3::zeros((h, w, c));
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (t, &k) in taps.iter().enumerate() {
                    let ii = (i as i64 + t as i64 - radius).clamp(0, h as i64 - 1) as usize;
                    acc += k * mid[[ii, j, ch]];
                }
                out[[i, j, ch]] = acc.clamp(0.0, 1.0);
            }
        }
    }
    Image::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let taps = gaussian_kernel(1.5);
        assert_eq!(taps.len(), 11);
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in taps.iter().zip(taps.iter().rev()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_sigma_is_the_identity() {
        let img = Image::new(Array3::from_shape_fn((5, 4, 3), |(i, j, c)| {
            ((i * 4 + j + c) % 7) as f64 / 6.0
        }))
        .unwrap();
        let out = gaussian_blur(&img, 0.0).unwrap();
        assert_eq!(out.data(), img.data());
        assert!(gaussian_blur(&img, -1.0).is_err());
    }

    #[test]
    fn constant_image_is_a_fixed_point() {
        let img = Image::new(Array3::from_elem((6, 6, 1), 0.42)).unwrap();
        let out = gaussian_blur(&img, 2.0).unwrap();
        for &v in out.data() {
            assert!((v - 0.42).abs() < 1e-12);
        }
    }

    #[test]
    fn blurring_shrinks_a_step_edge() {
        let img = Image::new(Array3::from_shape_fn(
            (8, 8, 1),
            |(_, j, _)| if j < 4 { 0.0 } else { 1.0 },
        ))
        .unwrap();
        let out = gaussian_blur(&img, 1.0).unwrap();
        let jump_before = img.data()[[4, 4, 0]] - img.data()[[4, 3, 0]];
        let jump_after = out.data()[[4, 4, 0]] - out.data()[[4, 3, 0]];
        assert!(jump_after < jump_before);
        assert!(jump_after > 0.0);
    }
}
