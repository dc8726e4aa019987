//! Geometric augmentation: flips and free rotation, with invertible draws.
//!
//! A draw applies, in order: horizontal flip, vertical flip, rotation.
//! Rotation resamples bilinearly; pixels that fall outside the source frame
//! are filled with the per-channel image mean. When a probability map is
//! pulled back through a draw, out-of-frame pixels instead carry a coverage
//! weight of zero so averaged maps can ignore them.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{BinaryMask, Image};
use crate::util::substream;

/// The augmentation family: optional flips plus a rotation drawn uniformly
/// from a closed degree interval.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AugmentationSpec {
    pub allow_hflip: bool,
    pub allow_vflip: bool,
    /// Closed interval of rotation angles in degrees, within [-180, 180].
    pub rotation_range: (f64, f64),
    /// Root seed for training-time draws.
    pub seed: u64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            allow_hflip: true,
            allow_vflip: true,
            rotation_range: (-65.0, 65.0),
            seed: 0,
        }
    }
}

impl AugmentationSpec {
    /// A spec with every transform disabled; augmenting with it is the
    /// identity.
    pub fn disabled() -> Self {
        AugmentationSpec {
            allow_hflip: false,
            allow_vflip: false,
            rotation_range: (0.0, 0.0),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.rotation_range;
        if !(lo.is_finite() && hi.is_finite()) || lo > hi || lo < -180.0 || hi > 180.0 {
            return Err(Error::Config(format!(
                "rotation range [{lo}, {hi}] must be a closed interval within [-180, 180]"
            )));
        }
        Ok(())
    }
}

/// One sampled geometric transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub flip_h: bool,
    pub flip_v: bool,
    pub rot_deg: f64,
}

impl AugmentDraw {
    pub const IDENTITY: AugmentDraw = AugmentDraw { flip_h: false, flip_v: false, rot_deg: 0.0 };

    pub fn is_identity(&self) -> bool {
        *self == AugmentDraw::IDENTITY
    }
}

/// Samples one draw from the spec.
pub fn sample_draw(spec: &AugmentationSpec, rng: &mut ChaCha8Rng) -> AugmentDraw {
    let flip_h = spec.allow_hflip && rng.gen::<bool>();
    let flip_v = spec.allow_vflip && rng.gen::<bool>();
    let (lo, hi) = spec.rotation_range;
    let rot_deg = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
    AugmentDraw { flip_h, flip_v, rot_deg }
}

/// Applies one sampled augmentation, consuming randomness from `rng`.
pub fn augment(img: &Image, spec: &AugmentationSpec, rng: &mut ChaCha8Rng) -> Result<Image> {
    spec.validate()?;
    apply_draw(img, &sample_draw(spec, rng))
}

/// The draws behind a test-time augmentation family of size `v`: index 0 is
/// the identity, the rest come from distinct `"tta"` substreams.
pub fn tta_draws(spec: &AugmentationSpec, v: usize, root_seed: u64) -> Result<Vec<AugmentDraw>> {
    if v < 1 {
        return Err(Error::Config(format!("tta family size must be >= 1, got {v}")));
    }
    spec.validate()?;
    let mut out = Vec::with_capacity(v);
    out.push(AugmentDraw::IDENTITY);
    for i in 1..v {
        let mut rng = substream(root_seed, "tta", i as u64);
        out.push(sample_draw(spec, &mut rng));
    }
    Ok(out)
}

/// Materializes the test-time augmentation family: `v` images whose first
/// element is the untransformed input.
pub fn tta_family(
    img: &Image,
    spec: &AugmentationSpec,
    v: usize,
    root_seed: u64,
) -> Result<Vec<Image>> {
    tta_draws(spec, v, root_seed)?
        .iter()
        .map(|d| apply_draw(img, d))
        .collect()
}

fn flip_h3(a: &Array3<f64>) -> Array3<f64> {
    let (h, w, c) = a.dim();
    Array3::from_shape_fn((h, w, c), |(i, j, ch)| a[[i, w - 1 - j, ch]])
}

fn flip_v3(a: &Array3<f64>) -> Array3<f64> {
    let (h, w, c) = a.dim();
    Array3::from_shape_fn((h, w, c), |(i, j, ch)| a[[h - 1 - i, j, ch]])
}

/// Rotation by `deg` counter-clockwise about the image center with bilinear
/// resampling. `fill` supplies one value per channel for out-of-frame
/// pixels; the returned coverage map is 1 where the source was in frame.
fn rotate3(a: &Array3<f64>, deg: f64, fill: &[f64]) -> (Array3<f64>, Array2<f64>) {
    let (h, w, c) = a.dim();
    let theta = deg.to_radians();
    let (sin, cos) = (theta.sin(), theta.cos());
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut out = Array3::zeros((h, w, c));
    let mut cov = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            // Inverse-rotate the destination pixel into source space.
            let dy = i as f64 - cy;
            let dx = j as f64 - cx;
            let sy = cos * dy + sin * dx + cy;
            let sx = -sin * dy + cos * dx + cx;
            if sy < 0.0 || sy > h as f64 - 1.0 || sx < 0.0 || sx > w as f64 - 1.0 {
                for ch in 0..c {
                    out[[i, j, ch]] = fill[ch];
                }
                continue;
            }
            cov[[i, j]] = 1.0;
            let y0 = sy.floor() as usize;
            let x0 = sx.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let x1 = (x0 + 1).min(w - 1);
            let ty = sy - y0 as f64;
            let tx = sx - x0 as f64;
            for ch in 0..c {
                let top = a[[y0, x0, ch]] * (1.0 - tx) + a[[y0, x1, ch]] * tx;
                let bot = a[[y1, x0, ch]] * (1.0 - tx) + a[[y1, x1, ch]] * tx;
                out[[i, j, ch]] = (top * (1.0 - ty) + bot * ty).clamp(0.0, 1.0);
            }
        }
    }
    (out, cov)
}

/// Applies a draw to an image (flips, then rotation with mean fill).
pub fn apply_draw(img: &Image, d: &AugmentDraw) -> Result<Image> {
    let mut a = img.data().clone();
    if d.flip_h {
        a = flip_h3(&a);
    }
    if d.flip_v {
        a = flip_v3(&a);
    }
    if d.rot_deg != 0.0 {
        let fill: Vec<f64> = (0..img.channels()).map(|c| img.channel_mean(c)).collect();
        a = rotate3(&a, d.rot_deg, &fill).0;
    }
    Image::new(a)
}

/// Applies a draw to a ground-truth mask; rotation resamples the indicator
/// bilinearly and re-thresholds at 0.5, with background fill.
pub fn apply_draw_to_mask(mask: &BinaryMask, d: &AugmentDraw) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    let mut a = Array3::from_shape_fn((h, w, 1), |(i, j, _)| {
        if mask.data()[[i, j]] {
            1.0
        } else {
            0.0
        }
    });
    if d.flip_h {
        a = flip_h3(&a);
    }
    if d.flip_v {
        a = flip_v3(&a);
    }
    if d.rot_deg != 0.0 {
        a = rotate3(&a, d.rot_deg, &[0.0]).0;
    }
    BinaryMask::new(Array2::from_shape_fn((h, w), |(i, j)| a[[i, j, 0]] >= 0.5))
}

/// Pulls a probability map predicted on the augmented frame back to the
/// original frame by undoing the draw's transforms in reverse order.
///
/// Returns the realigned map and per-pixel coverage weights; pixels the
/// augmented frame never observed get weight 0.
pub fn invert_draw_map(map: &Array2<f64>, d: &AugmentDraw) -> (Array2<f64>, Array2<f64>) {
    let (h, w) = map.dim();
    let mut a = Array3::from_shape_fn((h, w, 1), |(i, j, _)| map[[i, j]]);
    let mut cov;
    if d.rot_deg != 0.0 {
        let (r, c) = rotate3(&a, -d.rot_deg, &[0.0]);
        a = r;
        cov = Array3::from_shape_fn((h, w, 1), |(i, j, _)| c[[i, j]]);
    } else {
        cov = Array3::from_elem((h, w, 1), 1.0);
    }
    if d.flip_v {
        a = flip_v3(&a);
        cov = flip_v3(&cov);
    }
    if d.flip_h {
        a = flip_h3(&a);
        cov = flip_h3(&cov);
    }
    (
        Array2::from_shape_fn((h, w), |(i, j)| a[[i, j, 0]]),
        Array2::from_shape_fn((h, w), |(i, j)| cov[[i, j, 0]]),
    )
}
