//! Synthetic desk-scale datasets.
//!
//! Two generators back the fixtures used across tests, benches, and demo
//! runs: elliptical "lesions" on skin-toned noise for segmentation, and
//! glyph-coded classes for classification. The five glyphs all use exactly
//! the same number of ink pixels, so global color statistics carry no class
//! signal; only local structure separates the classes.

use std::path::Path;

use ndarray::Array3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{save_image_png, save_mask_png};
use crate::error::{Error, Result};
use crate::types::{BinaryMask, Image, CLASS_LABELS};
use crate::util::substream;

/// Renders one lesion image and its ground-truth mask.
pub fn lesion_image(size: usize, rng: &mut ChaCha8Rng) -> (Image, BinaryMask) {
    let s = size as f64;
    let cx = s / 2.0 + rng.gen_range(-s / 8.0..s / 8.0);
    let cy = s / 2.0 + rng.gen_range(-s / 8.0..s / 8.0);
    let a = rng.gen_range(s / 5.0..s / 3.2);
    let b = rng.gen_range(s / 5.0..s / 3.2);
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let (sin_t, cos_t) = theta.sin_cos();
    let skin = [0.85, 0.72, 0.62];
    let lesion = [0.42, 0.26, 0.18];
    let mut data = Array3::zeros((size, size, 3));
    let mut mask = BinaryMask::zeros(size, size);
    for i in 0..size {
        for j in 0..size {
            let dy = i as f64 + 0.5 - cy;
            let dx = j as f64 + 0.5 - cx;
            let u = dx * cos_t + dy * sin_t;
            let v = -dx * sin_t + dy * cos_t;
            let inside = (u / a).powi(2) + (v / b).powi(2) <= 1.0;
            let base = if inside { lesion } else { skin };
            for c in 0..3 {
                let noise = rng.gen_range(-0.04..0.04f64);
                data[[i, j, c]] = (base[c] + noise).clamp(0.0, 1.0);
            }
            if inside {
                mask.data_mut()[[i, j]] = true;
            }
        }
    }
    (Image::new(data).expect("values clamped to [0,1]"), mask)
}

/// Writes `n` lesion images under `root/images` with masks under `root/masks`.
pub fn write_seg_dataset(root: &Path, n: usize, size: usize, seed: u64) -> Result<()> {
    let images = root.join("images");
    let masks = root.join("masks");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    std::fs::create_dir_all(&masks).map_err(|e| Error::io(&masks, e))?;
    for i in 0..n {
        let mut rng = substream(seed, "seg", i as u64);
        let (img, mask) = lesion_image(size, &mut rng);
        save_image_png(&images.join(format!("s{i:03}.png")), &img)?;
        save_mask_png(&masks.join(format!("s{i:03}.png")), &mask)?;
    }
    Ok(())
}

/// Number of glyph classes the generator can draw.
pub const GLYPH_CLASSES: usize = 5;

const GLYPH: usize = 12;
const INK: f64 = 0.15;
const PAPER: f64 = 0.88;

/// Plots one of five glyphs, each exactly 44 ink pixels in a 12x12 box.
fn glyph_cells(class: usize) -> Vec<(usize, usize)> {
    let g = GLYPH;
    let mut cells = Vec::new();
    match class {
        // Plus: two 2-wide full-length bars sharing a 2x2 center.
        0 => {
            for i in 0..g {
                for j in [5, 6] {
                    cells.push((i, j));
                    cells.push((j, i));
                }
            }
            cells.sort_unstable();
            cells.dedup();
        }
        // Frame: 1-pixel outline.
        1 => {
            for i in 0..g {
                for j in 0..g {
                    if i == 0 || i == g - 1 || j == 0 || j == g - 1 {
                        cells.push((i, j));
                    }
                }
            }
        }
        // X: both diagonals doubled, minus the doubled center overlap.
        2 => {
            for i in 0..g {
                cells.push((i, i));
                cells.push((i, g - 1 - i));
                if i + 1 < g {
                    cells.push((i + 1, i));
                    cells.push((i + 1, g - 1 - i));
                }
            }
            cells.sort_unstable();
            cells.dedup();
            cells.truncate(44);
        }
        // Horizontal bars: two 2-row bands of width 11.
        3 => {
            for i in [2, 3, 8, 9] {
                for j in 0..11 {
                    cells.push((i, j));
                }
            }
        }
        // Vertical bars: two 2-col bands of height 11.
        4 => {
            for j in [2, 3, 8, 9] {
                for i in 0..11 {
                    cells.push((i, j));
                }
            }
        }
        _ => unreachable!("validated by caller"),
    }
    cells
}

/// Renders one glyph image for `class` at a jittered position.
pub fn glyph_image(size: usize, class: usize, rng: &mut ChaCha8Rng) -> Image {
    assert!(class < GLYPH_CLASSES, "glyph class out of range");
    assert!(size >= GLYPH + 4, "canvas too small for glyph");
    let mut data = Array3::zeros((size, size, 3));
    for v in data.iter_mut() {
        *v = (PAPER + rng.gen_range(-0.02..0.02f64)).clamp(0.0, 1.0);
    }
    let max_off = size - GLYPH - 2;
    let r0 = rng.gen_range(2..=max_off);
    let c0 = rng.gen_range(2..=max_off);
    for (i, j) in glyph_cells(class) {
        for c in 0..3 {
            data[[r0 + i, c0 + j, c]] = (INK + rng.gen_range(-0.02..0.02f64)).clamp(0.0, 1.0);
        }
    }
    Image::new(data).expect("values clamped to [0,1]")
}

/// Writes a classification dataset: `per_class` images for each of
/// `n_classes` glyph classes, labeled with the leading canonical labels.
pub fn write_clf_dataset(
    root: &Path,
    per_class: usize,
    n_classes: usize,
    size: usize,
    seed: u64,
) -> Result<()> {
    if n_classes == 0 || n_classes > GLYPH_CLASSES {
        return Err(Error::Config(format!(
            "glyph generator supports 1..={GLYPH_CLASSES} classes, asked for {n_classes}"
        )));
    }
    let images = root.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut csv = String::from("image,label\n");
    for k in 0..n_classes {
        for i in 0..per_class {
            let mut rng = substream(seed, "clf", (k * per_class + i) as u64);
            let img = glyph_image(size, k, &mut rng);
            let name = format!("c{k}_{i:03}.png");
            save_image_png(&images.join(&name), &img)?;
            csv.push_str(&format!("{name},{}\n", CLASS_LABELS[k]));
        }
    }
    let csv_path = root.join("labels.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_dataset, DatasetKind};

    #[test]
    fn all_glyphs_use_exactly_44_ink_pixels() {
        for class in 0..GLYPH_CLASSES {
            let cells = glyph_cells(class);
            let mut unique = cells.clone();
            unique.sort_unstable();
            unique.dedup();
            assert_eq!(unique.len(), 44, "class {class}");
            assert_eq!(cells.len(), unique.len(), "class {class} has duplicate cells");
            for (i, j) in unique {
                assert!(i < GLYPH && j < GLYPH);
            }
        }
    }

    #[test]
    fn lesion_mask_matches_dark_region() {
        let mut rng = substream(9, "t", 0);
        let (img, mask) = lesion_image(32, &mut rng);
        assert!(mask.count() > 0 && mask.count() < 32 * 32);
        // Lesion pixels are darker on average than skin pixels.
        let (mut din, mut nin, mut dout, mut nout) = (0.0, 0, 0.0, 0);
        for i in 0..32 {
            for j in 0..32 {
                let v = img.data()[[i, j, 0]];
                if mask.data()[[i, j]] {
                    din += v;
                    nin += 1;
                } else {
                    dout += v;
                    nout += 1;
                }
            }
        }
        assert!(din / nin as f64 + 0.2 < dout / nout as f64);
    }

    #[test]
    fn generated_datasets_load_back_through_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let seg_root = dir.path().join("seg");
        write_seg_dataset(&seg_root, 4, 32, 1).unwrap();
        let seg = load_dataset(&seg_root, DatasetKind::Segmentation).unwrap();
        assert_eq!(seg.len(), 4);
        assert!(seg.entries.iter().all(|e| e.mask.is_some()));

        let clf_root = dir.path().join("clf");
        write_clf_dataset(&clf_root, 3, 5, 32, 2).unwrap();
        let clf = load_dataset(&clf_root, DatasetKind::Classification).unwrap();
        assert_eq!(clf.len(), 15);
        assert_eq!(clf.class_counts.len(), 5);
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let mut a = substream(5, "t", 1);
        let mut b = substream(5, "t", 1);
        let (ia, ma) = lesion_image(24, &mut a);
        let (ib, mb) = lesion_image(24, &mut b);
        assert_eq!(ia.data(), ib.data());
        assert_eq!(ma.count(), mb.count());
    }
}
