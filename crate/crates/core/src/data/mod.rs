//! Dataset ingestion, preprocessing, augmentation, and splits.

pub mod augment;
pub mod filter;
pub mod resize;

pub use augment::{
    apply_draw, apply_draw_to_mask, augment, invert_draw_map, sample_draw, tta_draws, tta_family,
    AugmentDraw, AugmentationSpec,
};
pub use filter::{gaussian_blur, gaussian_kernel};
pub use resize::{resize_bicubic, resize_bilinear_map, resize_mask_nearest};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, Array4};

use crate::error::{Error, Result};
use crate::types::{BinaryMask, Image, CLASS_LABELS};
use crate::util::substream;

/// Default preprocessing target resolution.
pub const PREPROCESS_SIZE: usize = 224;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Segmentation,
    Classification,
}

/// One dataset entry: an image path plus its label or mask path.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// File stem, the dataset-wide identifier.
    pub name: String,
    pub image: PathBuf,
    /// Class label (classification manifests).
    pub label: Option<String>,
    /// Ground-truth mask path (segmentation manifests).
    pub mask: Option<PathBuf>,
}

/// A validated listing of a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub kind: DatasetKind,
    /// Entries in lexicographic name order.
    pub entries: Vec<ManifestEntry>,
    /// Per-class counts; empty for segmentation manifests.
    pub class_counts: BTreeMap<String, usize>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sub-manifest selecting entries by index (class counts recomputed).
    pub fn with_entries(&self, idx: &[usize]) -> DatasetManifest {
        let entries = idx.iter().map(|&i| self.entries[i].clone()).collect::<Vec<_>>();
        let mut class_counts = BTreeMap::new();
        for e in &entries {
            if let Some(l) = &e.label {
                *class_counts.entry(l.clone()).or_insert(0) += 1;
            }
        }
        DatasetManifest { root: self.root.clone(), kind: self.kind, entries, class_counts }
    }
}

const IMAGE_EXTS: [&str; 3] = ["png", "jpg", "jpeg"];

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Dataset(format!("missing directory {}", dir.display())));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|r| r.ok().map(|d| d.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    files.sort();
    Ok(files)
}

fn stem_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Enumerates and validates a dataset directory.
///
/// Classification roots hold `images/` plus `labels.csv`; segmentation
/// roots hold `images/` plus `masks/` with identical stems. Entries come
/// back in lexicographic order.
pub fn load_dataset(root: &Path, kind: DatasetKind) -> Result<DatasetManifest> {
    match kind {
        DatasetKind::Classification => load_classification(root),
        DatasetKind::Segmentation => load_segmentation(root),
    }
}

fn load_classification(root: &Path) -> Result<DatasetManifest> {
    let images = list_images(&root.join("images"))?;
    let by_stem: BTreeMap<String, &PathBuf> =
        images.iter().map(|p| (stem_of(p), p)).collect();
    let by_name: BTreeMap<String, &PathBuf> = images
        .iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), p))
        .collect();

    let labels_path = root.join("labels.csv");
    let mut rdr = csv::Reader::from_path(&labels_path)
        .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", labels_path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Dataset(format!("bad header in {}: {e}", labels_path.display())))?
        .clone();
    if headers.len() < 2 || &headers[0] != "image" || &headers[1] != "label" {
        return Err(Error::Dataset(format!(
            "{} must start with header image,label",
            labels_path.display()
        )));
    }

    let mut entries = Vec::new();
    let mut seen = BTreeMap::new();
    for rec in rdr.records() {
        let rec =
            rec.map_err(|e| Error::Dataset(format!("bad row in {}: {e}", labels_path.display())))?;
        let image_name = rec.get(0).unwrap_or("").to_string();
        let label = rec.get(1).unwrap_or("").to_string();
        if !CLASS_LABELS.contains(&label.as_str()) {
            return Err(Error::Dataset(format!(
                "unknown label {label} for image {image_name} in {}",
                labels_path.display()
            )));
        }
        let path = by_name
            .get(&image_name)
            .or_else(|| by_stem.get(&image_name))
            .ok_or_else(|| {
                Error::Dataset(format!(
                    "labels.csv references missing image {}",
                    root.join("images").join(&image_name).display()
                ))
            })?;
        let name = stem_of(path);
        if seen.insert(name.clone(), ()).is_some() {
            return Err(Error::Dataset(format!("duplicate labels.csv entry for {name}")));
        }
        entries.push(ManifestEntry {
            name,
            image: (*path).clone(),
            label: Some(label),
            mask: None,
        });
    }
    entries.sort_by(|a, b| a.name.cmp(&b.name));
    let mut class_counts = BTreeMap::new();
    for e in &entries {
        *class_counts.entry(e.label.clone().unwrap()).or_insert(0) += 1;
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        kind: DatasetKind::Classification,
        entries,
        class_counts,
    })
}

fn load_segmentation(root: &Path) -> Result<DatasetManifest> {
    let images = list_images(&root.join("images"))?;
    let masks = list_images(&root.join("masks"))?;
    let mask_by_stem: BTreeMap<String, &PathBuf> =
        masks.iter().map(|p| (stem_of(p), p)).collect();

    let mut entries = Vec::new();
    for img in &images {
        let name = stem_of(img);
        let mask = mask_by_stem.get(&name).ok_or_else(|| {
            Error::Dataset(format!("no mask paired with image {}", img.display()))
        })?;
        entries.push(ManifestEntry {
            name,
            image: img.clone(),
            label: None,
            mask: Some((*mask).clone()),
        });
    }
    let image_stems: BTreeMap<String, ()> =
        images.iter().map(|p| (stem_of(p), ())).collect();
    for m in &masks {
        if !image_stems.contains_key(&stem_of(m)) {
            return Err(Error::Dataset(format!("no image paired with mask {}", m.display())));
        }
    }
    entries.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        kind: DatasetKind::Segmentation,
        entries,
        class_counts: BTreeMap::new(),
    })
}

/// Decodes an image file to float RGB (or grayscale) in `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Image> {
    let decoded = image::open(path)
        .map_err(|e| Error::Image(format!("cannot decode {}: {e}", path.display())))?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    let mut a = Array3::zeros((h as usize, w as usize, 3));
    for (x, y, px) in rgb.enumerate_pixels() {
        for c in 0..3 {
            a[[y as usize, x as usize, c]] = px.0[c] as f64 / 255.0;
        }
    }
    Image::new(a)
}

/// Decodes a mask raster; luma values above 127 mark lesion pixels.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let decoded = image::open(path)
        .map_err(|e| Error::Image(format!("cannot decode {}: {e}", path.display())))?;
    let luma = decoded.to_luma8();
    let (w, h) = luma.dimensions();
    let mut m = Array2::from_elem((h as usize, w as usize), false);
    for (x, y, px) in luma.enumerate_pixels() {
        m[[y as usize, x as usize]] = px.0[0] > 127;
    }
    Ok(BinaryMask::new(m))
}

/// Writes an image as PNG (values scaled to 8-bit).
pub fn save_image_png(path: &Path, img: &Image) -> Result<()> {
    let rgb = img.to_rgb();
    let (h, w) = (rgb.height(), rgb.width());
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            let px = [
                (rgb.data()[[i, j, 0]] * 255.0).round() as u8,
                (rgb.data()[[i, j, 1]] * 255.0).round() as u8,
                (rgb.data()[[i, j, 2]] * 255.0).round() as u8,
            ];
            buf.put_pixel(j as u32, i as u32, image::Rgb(px));
        }
    }
    write_png_atomic(path, image::DynamicImage::ImageRgb8(buf))
}

/// Writes a mask as an 8-bit PNG (lesion = 255).
pub fn save_mask_png(path: &Path, mask: &BinaryMask) -> Result<()> {
    let (h, w) = (mask.height(), mask.width());
    let mut buf = image::GrayImage::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            let v = if mask.data()[[i, j]] { 255 } else { 0 };
            buf.put_pixel(j as u32, i as u32, image::Luma([v]));
        }
    }
    write_png_atomic(path, image::DynamicImage::ImageLuma8(buf))
}

fn write_png_atomic(path: &Path, buf: image::DynamicImage) -> Result<()> {
    let mut bytes = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut bytes, image::ImageOutputFormat::Png)
        .map_err(|e| Error::Image(format!("cannot encode {}: {e}", path.display())))?;
    crate::util::atomic_write(path, &bytes.into_inner())
}

/// Resizes to `target x target` with bicubic interpolation.
pub fn preprocess(raw: &Image, target: usize) -> Result<Image> {
    resize_bicubic(raw, target, target)
}

/// Half-open pixel bounding box: rows `[row0, row1)`, cols `[col0, col1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

/// Rasterizes a bounding box into a mask of the given shape.
pub fn bbox_to_mask(bbox: &BBox, h: usize, w: usize) -> Result<BinaryMask> {
    if bbox.row0 >= bbox.row1 || bbox.col0 >= bbox.col1 || bbox.row1 > h || bbox.col1 > w {
        return Err(Error::Config(format!(
            "box rows [{}, {}) cols [{}, {}) invalid for {h}x{w}",
            bbox.row0, bbox.row1, bbox.col0, bbox.col1
        )));
    }
    let mut m = Array2::from_elem((h, w), false);
    for i in bbox.row0..bbox.row1 {
        for j in bbox.col0..bbox.col1 {
            m[[i, j]] = true;
        }
    }
    Ok(BinaryMask::new(m))
}

/// Reads a `boxes.csv` annotation file (header `image,row0,col0,row1,col1`).
pub fn load_boxes(path: &Path) -> Result<Vec<(String, BBox)>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Dataset(format!("bad header in {}: {e}", path.display())))?;
    let expect = ["image", "row0", "col0", "row1", "col1"];
    if headers.len() != 5 || headers.iter().zip(expect).any(|(a, b)| a != b) {
        return Err(Error::Dataset(format!(
            "{} must have header image,row0,col0,row1,col1",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Dataset(format!("bad row in {}: {e}", path.display())))?;
        let num = |i: usize| -> Result<usize> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Dataset(format!("non-numeric box field in {}", path.display())))
        };
        out.push((
            rec.get(0).unwrap_or("").to_string(),
            BBox { row0: num(1)?, col0: num(2)?, row1: num(3)?, col1: num(4)? },
        ));
    }
    Ok(out)
}

/// Deterministic stratified split into train/val/test manifests.
///
/// Classification manifests stratify per class with largest-remainder
/// rounding (ties favor train, then val); segmentation manifests split the
/// whole entry list the same way.
pub fn split(
    manifest: &DatasetManifest,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest, DatasetManifest)> {
    let (ft, fv, fs) = fractions;
    if ft < 0.0 || fv < 0.0 || fs < 0.0 || (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions ({ft}, {fv}, {fs}) must be non-negative and sum to 1"
        )));
    }
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        groups.entry(e.label.clone().unwrap_or_default()).or_default().push(i);
    }
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (gi, (_, mut idx)) in groups.into_iter().enumerate() {
        let mut rng = substream(seed, "split", gi as u64);
        shuffle(&mut idx, &mut rng);
        let quotas = largest_remainder(idx.len(), &[ft, fv, fs]);
        let (a, b) = (quotas[0], quotas[0] + quotas[1]);
        train.extend_from_slice(&idx[..a]);
        val.extend_from_slice(&idx[a..b]);
        test.extend_from_slice(&idx[b..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok((
        manifest.with_entries(&train),
        manifest.with_entries(&val),
        manifest.with_entries(&test),
    ))
}

fn shuffle(idx: &mut [usize], rng: &mut rand_chacha::ChaCha8Rng) {
    use rand::Rng;
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
}

/// Largest-remainder apportionment of `n` into buckets; ties break toward
/// earlier buckets.
fn largest_remainder(n: usize, fracs: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = fracs.iter().map(|f| f * n as f64).collect();
    let mut quotas: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..fracs.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for k in 0..(n - assigned) {
        quotas[order[k % order.len()]] += 1;
    }
    quotas
}

/// Stacks images (all the same shape) into an NCHW batch tensor.
pub fn batch_images(images: &[&Image]) -> Result<Array4<f64>> {
    let first = images.first().ok_or_else(|| Error::Shape("empty batch".into()))?;
    let (h, w, c) = (first.height(), first.width(), first.channels());
    let mut t = Array4::zeros((images.len(), c, h, w));
    for (n, img) in images.iter().enumerate() {
        if (img.height(), img.width(), img.channels()) != (h, w, c) {
            return Err(Error::Shape("batch images must share one shape".into()));
        }
        for i in 0..h {
            for j in 0..w {
                for ch in 0..c {
                    t[[n, ch, i, j]] = img.data()[[i, j, ch]];
                }
            }
        }
    }
    Ok(t)
}

/// Converts one image to a singleton NCHW tensor.
pub fn image_to_tensor(img: &Image) -> Array4<f64> {
    batch_images(&[img]).expect("single image batch")
}

/// Converts an image to a network input of the given `(h, w, c)` shape,
/// averaging color channels when the net expects a single plane.
pub fn image_to_net_input(img: &Image, shape: (usize, usize, usize)) -> Result<Array4<f64>> {
    let (h, w, c) = shape;
    if img.height() != h || img.width() != w {
        return Err(Error::Shape(format!(
            "image {}x{} does not match network input {h}x{w}",
            img.height(),
            img.width()
        )));
    }
    if c != img.channels() && c != 1 {
        return Err(Error::Shape(format!(
            "cannot feed {}-channel image to {c}-channel network",
            img.channels()
        )));
    }
    let mut x = Array4::zeros((1, c, h, w));
    for i in 0..h {
        for j in 0..w {
            if c == img.channels() {
                for ch in 0..c {
                    x[[0, ch, i, j]] = img.data()[[i, j, ch]];
                }
            } else {
                let mut acc = 0.0;
                for ch in 0..img.channels() {
                    acc += img.data()[[i, j, ch]];
                }
                x[[0, 0, i, j]] = acc / img.channels() as f64;
            }
        }
    }
    Ok(x)
}

/// Extracts sample `n`'s single-channel plane as an HW map.
pub fn tensor_plane_to_map(t: &Array4<f64>, n: usize) -> Array2<f64> {
    let (_, c, h, w) = t.dim();
    assert_eq!(c, 1, "expected a single-channel tensor");
    Array2::from_shape_fn((h, w), |(i, j)| t[[n, 0, i, j]])
}

/// One-hot targets as an `(n, classes, 1, 1)` tensor.
pub fn one_hot(class_idx: &[usize], n_classes: usize) -> Array4<f64> {
    let mut t = Array4::zeros((class_idx.len(), n_classes, 1, 1));
    for (n, &c) in class_idx.iter().enumerate() {
        t[[n, c, 0, 0]] = 1.0;
    }
    t
}
