//! Image resampling: separable bicubic for images, nearest for masks.

use ndarray::{Array2, Array3};

use crate::error::Result;
use crate::types::{BinaryMask, Image};

/// Keys cubic convolution kernel with a = -0.5 (Catmull-Rom).
fn cubic(s: f64) -> f64 {
    const A: f64 = -0.5;
    let s = s.abs();
    if s <= 1.0 {
        (A + 2.0) * s * s * s - (A + 3.0) * s * s + 1.0
    } else if s < 2.0 {
        A * s * s * s - 5.0 * A * s * s + 8.0 * A * s - 4.0 * A
    } else {
        0.0
    }
}

/// Maps a destination index to its source-space center.
fn src_coord(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    (dst as f64 + 0.5) * (src_len as f64 / dst_len as f64) - 0.5
}

fn resample_axis(values: &[f64], src_len: usize, dst_len: usize, out: &mut [f64]) {
    for (d, slot) in out.iter_mut().enumerate() {
        let x = src_coord(d, src_len, dst_len);
        let base = x.floor() as isize;
        let t = x - base as f64;
        let mut acc = 0.0;
        for k in -1..=2isize {
            let idx = (base + k).clamp(0, src_len as isize - 1) as usize;
            acc += values[idx] * cubic(t - k as f64);
        }
        *slot = acc;
    }
}

/// Bicubic resize with edge replication; output values are clamped back to
/// `[0, 1]` since cubic interpolation can overshoot.
///
/// Resizing to the source size is an exact identity.
pub fn resize_bicubic(img: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let src = img.data();
    // Pass 1: columns are resampled along the row axis.
    let mut mid = Array3::zeros((out_h, w, c));
    let mut line = vec![0.0; h];
    let mut out_line = vec![0.0; out_h];
    for j in 0..w {
        for ch in 0..c {
            for i in 0..h {
                line[i] = src[[i, j, ch]];
            }
            resample_axis(&line, h, out_h, &mut out_line);
            for i in 0..out_h {
                mid[[i, j, ch]] = out_line[i];
            }
        }
    }
    // Pass 2: rows are resampled along the column axis.
    let mut out = Array3::zeros((out_h, out_w, c));
    let mut line = vec![0.0; w];
    let mut out_line = vec![0.0; out_w];
    for i in 0..out_h {
        for ch in 0..c {
            for j in 0..w {
                line[j] = mid[[i, j, ch]];
            }
            resample_axis(&line, w, out_w, &mut out_line);
            for j in 0..out_w {
                out[[i, j, ch]] = out_line[j].clamp(0.0, 1.0);
            }
        }
    }
    Image::new(out)
}

/// Nearest-neighbor resize for binary masks.
pub fn resize_mask_nearest(mask: &BinaryMask, out_h: usize, out_w: usize) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    let mut out = Array2::from_elem((out_h, out_w), false);
    for i in 0..out_h {
        let si = src_coord(i, h, out_h).round().clamp(0.0, h as f64 - 1.0) as usize;
        for j in 0..out_w {
            let sj = src_coord(j, w, out_w).round().clamp(0.0, w as f64 - 1.0) as usize;
            out[[i, j]] = mask.data()[[si, sj]];
        }
    }
    BinaryMask::new(out)
}

/// Bilinear resize for 2-D float maps (used to upsample saliency fields).
pub fn resize_bilinear_map(map: &Array2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (h, w) = map.dim();
    let mut out = Array2::zeros((out_h, out_w));
    for i in 0..out_h {
        let y = src_coord(i, h, out_h).clamp(0.0, h as f64 - 1.0);
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = y - y0 as f64;
        for j in 0..out_w {
            let x = src_coord(j, w, out_w).clamp(0.0, w as f64 - 1.0);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = x - x0 as f64;
            let top = map[[y0, x0]] * (1.0 - tx) + map[[y0, x1]] * tx;
            let bot = map[[y1, x0]] * (1.0 - tx) + map[[y1, x1]] * tx;
            out[[i, j]] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array3;

    fn ramp_image(h: usize, w: usize) -> Image {
        let mut a = Array3::zeros((h, w, 1));
        for i in 0..h {
            for j in 0..w {
                a[[i, j, 0]] = (i as f64 * 0.05 + j as f64 * 0.03).min(1.0);
            }
        }
        Image::new(a).unwrap()
    }

    #[test]
    fn same_size_resize_is_exact_identity() {
        let img = ramp_image(7, 9);
        let out = resize_bicubic(&img, 7, 9).unwrap();
        for (a, b) in out.data().iter().zip(img.data().iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Image::constant(5, 5, 3, 0.42).unwrap();
        let out = resize_bicubic(&img, 13, 8).unwrap();
        for &v in out.data().iter() {
            assert_abs_diff_eq!(v, 0.42, epsilon = 1e-12);
        }
    }

    #[test]
    fn catmull_rom_reproduces_linear_ramps_in_the_interior() {
        // Cubic convolution with a = -0.5 interpolates linear functions
        // exactly away from the clamped borders.
        let img = ramp_image(16, 16);
        let out = resize_bicubic(&img, 32, 32).unwrap();
        for &(i, j) in &[(10usize, 10usize), (16, 12), (20, 21), (12, 17), (18, 9)] {
            let y = src_coord(i, 16, 32);
            let x = src_coord(j, 16, 32);
            let expect = y * 0.05 + x * 0.03;
            assert_abs_diff_eq!(out.data()[[i, j, 0]], expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn bicubic_matches_direct_4x4_tap_evaluation() {
        // Independent oracle: direct 2-D cubic convolution, no separable pass.
        let img = ramp_image(9, 11);
        let mut noisy = img.into_data();
        for (k, v) in noisy.iter_mut().enumerate() {
            *v = (*v + ((k * 2654435761) % 97) as f64 / 970.0).min(1.0);
        }
        let img = Image::new(noisy).unwrap();
        let (oh, ow) = (14, 6);
        let out = resize_bicubic(&img, oh, ow).unwrap();
        for &(i, j) in &[(0usize, 0usize), (3, 2), (7, 3), (13, 5), (6, 4)] {
            let y = src_coord(i, 9, oh);
            let x = src_coord(j, 11, ow);
            let (by, bx) = (y.floor() as isize, x.floor() as isize);
            let mut acc = 0.0;
            for ki in -1..=2isize {
                for kj in -1..=2isize {
                    let si = (by + ki).clamp(0, 8) as usize;
                    let sj = (bx + kj).clamp(0, 10) as usize;
                    acc += img.data()[[si, sj, 0]]
                        * cubic(y - (by + ki) as f64)
                        * cubic(x - (bx + kj) as f64);
                }
            }
            assert_abs_diff_eq!(out.data()[[i, j, 0]], acc.clamp(0.0, 1.0), epsilon = 1e-9);
        }
    }

    #[test]
    fn nearest_mask_resize_preserves_blocks() {
        let mut m = ndarray::Array2::from_elem((4, 4), false);
        for i in 0..2 {
            for j in 0..2 {
                m[[i, j]] = true;
            }
        }
        let mask = BinaryMask::new(m);
        let up = resize_mask_nearest(&mask, 8, 8);
        assert_eq!(up.count(), 16);
        assert!(up.data()[[0, 0]]);
        assert!(!up.data()[[0, 4]]);
        let down = resize_mask_nearest(&up, 4, 4);
        assert_eq!(down, mask);
    }

    #[test]
    fn bilinear_map_resize_interpolates_midpoints() {
        let m = ndarray::arr2(&[[0.0, 1.0]]);
        let out = resize_bilinear_map(&m, 1, 4);
        // Centers at src x = -0.25, 0.25, 0.75, 1.25; clamped ends.
        assert_abs_diff_eq!(out[[0, 0]], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[[0, 1]], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(out[[0, 2]], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(out[[0, 3]], 1.0, epsilon = 1e-12);
    }
}
