//! Optional derived-data cache, enabled by the `SKINET_CACHE` env var.
//!
//! Caches the expensive load-and-resize step of single-image commands,
//! keyed by the source file's digest and the target resolution. Entries
//! store raw f64 samples, so a hit is bit-identical to a recompute; cached
//! and uncached runs produce the same artifacts.

use std::path::{Path, PathBuf};

use skinet_core::data::{load_image, preprocess};
use skinet_core::util::{atomic_write, decode_blobs, encode_blobs, sha256_file, TensorBlob};
use skinet_core::{Error, Image, Result};

pub const CACHE_ENV: &str = "SKINET_CACHE";

pub fn cache_root() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).map(PathBuf::from)
}

/// Loads `path` at `target`x`target`, memoized when the cache is enabled.
/// An image already at the target size passes through untouched, matching
/// the pipeline's own preprocessing rule.
pub fn load_preprocessed(path: &Path, target: usize) -> Result<Image> {
    let Some(root) = cache_root() else {
        return resized(path, target);
    };
    let entry = root
        .join("preprocessed")
        .join(format!("{}_{target}.bin", sha256_file(path)?));
    if entry.is_file() {
        let bytes = std::fs::read(&entry).map_err(|e| Error::io(&entry, e))?;
        return image_from_blobs(&decode_blobs(&bytes)?, &entry);
    }
    let img = resized(path, target)?;
    atomic_write(&entry, &encode_blobs(&[image_to_blob(&img)])?)?;
    Ok(img)
}

fn resized(path: &Path, target: usize) -> Result<Image> {
    let raw = load_image(path)?;
    if (raw.height(), raw.width()) == (target, target) {
        Ok(raw)
    } else {
        preprocess(&raw, target)
    }
}

fn image_to_blob(img: &Image) -> TensorBlob {
    TensorBlob {
        name: "image".into(),
        shape: vec![img.height(), img.width(), img.channels()],
        data: img.data().iter().copied().collect(),
    }
}

fn image_from_blobs(blobs: &[TensorBlob], entry: &Path) -> Result<Image> {
    let blob = match blobs {
        [b] if b.name == "image" && b.shape.len() == 3 => b,
        _ => {
            return Err(Error::Config(format!(
                "cache entry {} is not a preprocessed image",
                entry.display()
            )))
        }
    };
    let arr = ndarray::Array3::from_shape_vec(
        (blob.shape[0], blob.shape[1], blob.shape[2]),
        blob.data.clone(),
    )
    .map_err(|e| Error::Shape(format!("cache entry {}: {e}", entry.display())))?;
    Image::new(arr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_round_trip_is_exact() {
        let mut rng = skinet_core::util::substream(33, "cache", 0);
        let (img, _) = skinet_core::synth::lesion_image(17, &mut rng);
        let blobs = decode_blobs(&encode_blobs(&[image_to_blob(&img)]).unwrap()).unwrap();
        let back = image_from_blobs(&blobs, Path::new("x.bin")).unwrap();
        assert_eq!(back, img);
    }
}
