//! Shared value types: images, masks, probability vectors, triage records.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical diagnosis classes, in fixed order.
pub const CLASS_LABELS: [&str; 7] = ["MEL", "NV", "BCC", "AKIEC", "BKL", "DF", "VASC"];

/// Index of a canonical class label, if it is one.
pub fn class_index(label: &str) -> Option<usize> {
    CLASS_LABELS.iter().position(|l| *l == label)
}

/// An image in HWC layout with float channels in `[0, 1]`.
///
/// Channel count is 1 (grayscale) or 3 (RGB).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    data: Array3<f64>,
}

impl Image {
    /// Wraps an HWC array, validating range and channel count.
    pub fn new(data: Array3<f64>) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::Shape(format!("image must be non-empty, got {h}x{w}")));
        }
        if c != 1 && c != 3 {
            return Err(Error::Shape(format!("image must have 1 or 3 channels, got {c}")));
        }
        for &v in data.iter() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Shape(format!("image values must lie in [0, 1], got {v}")));
            }
        }
        Ok(Image { data })
    }

    /// A constant-valued image.
    pub fn constant(h: usize, w: usize, c: usize, value: f64) -> Result<Self> {
        Image::new(Array3::from_elem((h, w, c), value))
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    /// Consumes the image, returning the raw array.
    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    /// Mean over all pixels of one channel.
    pub fn channel_mean(&self, c: usize) -> f64 {
        let n = (self.height() * self.width()) as f64;
        self.data.index_axis(ndarray::Axis(2), c).sum() / n
    }

    /// Converts grayscale to RGB by channel replication; RGB passes through.
    pub fn to_rgb(&self) -> Image {
        if self.channels() == 3 {
            return self.clone();
        }
        let (h, w, _) = self.data.dim();
        let mut out = Array3::zeros((h, w, 3));
        for i in 0..h {
            for j in 0..w {
                let v = self.data[[i, j, 0]];
                for c in 0..3 {
                    out[[i, j, c]] = v;
                }
            }
        }
        Image { data: out }
    }
}

/// A binary segmentation mask in HW layout; `true` marks lesion pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BinaryMask {
    data: Array2<bool>,
}

impl BinaryMask {
    pub fn new(data: Array2<bool>) -> Self {
        BinaryMask { data }
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        BinaryMask { data: Array2::from_elem((h, w), false) }
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn data(&self) -> &Array2<bool> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<bool> {
        &mut self.data
    }

    /// Number of lesion pixels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Fraction of pixels marked lesion.
    pub fn lesion_fraction(&self) -> f64 {
        self.count() as f64 / (self.height() * self.width()) as f64
    }

    /// Tight bounding box of lesion pixels as (row0, col0, row1, col1),
    /// end-exclusive, or `None` if the mask is empty.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let (h, w) = self.data.dim();
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for i in 0..h {
            for j in 0..w {
                if self.data[[i, j]] {
                    let (r0, c0, r1, c1) = bb.unwrap_or((i, j, i + 1, j + 1));
                    bb = Some((r0.min(i), c0.min(j), r1.max(i + 1), c1.max(j + 1)));
                }
            }
        }
        bb
    }
}

/// A discrete probability distribution over the class labels.
///
/// Entries are in `[0, 1]` and sum to 1 within 1e-6.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Shape(format!(
                "probability vector needs at least 2 classes, got {}",
                probs.len()
            )));
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::Shape(format!("probability {p} outside [0, 1]")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Shape(format!("probabilities sum to {sum}, expected 1")));
        }
        Ok(ProbabilityVector(probs))
    }

    /// Uniform distribution over `n` classes.
    pub fn uniform(n: usize) -> Result<Self> {
        ProbabilityVector::new(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Index of the most probable class (lowest index wins ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }
}

/// Uncertainty summary attached to one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyRecord {
    /// Predictive entropy of the mean, in nats.
    pub phi: f64,
    /// Entropy normalized to `[0, 1]` by the bounds below.
    pub phi_norm: f64,
    /// Lower normalization bound, in nats.
    pub phi_min: f64,
    /// Upper normalization bound, in nats.
    pub phi_max: f64,
    /// Certainty threshold on `phi_norm`.
    pub threshold: f64,
    /// Whether `phi_norm < threshold`.
    pub is_certain: bool,
}

impl UncertaintyRecord {
    /// Builds the record, deriving `phi_norm` and `is_certain`.
    pub fn new(phi: f64, phi_min: f64, phi_max: f64, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!("threshold {threshold} outside [0, 1]")));
        }
        let phi_norm = crate::metrics::normalize_uncertainty(phi, (phi_min, phi_max))?;
        Ok(UncertaintyRecord {
            phi,
            phi_norm,
            phi_min,
            phi_max,
            threshold,
            is_certain: phi_norm < threshold,
        })
    }

    /// The same measurement judged against a different threshold.
    pub fn with_threshold(&self, threshold: f64) -> Result<Self> {
        UncertaintyRecord::new(self.phi, self.phi_min, self.phi_max, threshold)
    }
}

/// Counts of the four triage outcomes over an evaluation set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageCounts {
    /// Correct and certain.
    pub cc: u64,
    /// Correct but uncertain.
    pub cu: u64,
    /// Incorrect but certain.
    pub ic: u64,
    /// Incorrect and uncertain.
    pub iu: u64,
}

impl TriageCounts {
    pub fn total(&self) -> u64 {
        self.cc + self.cu + self.ic + self.iu
    }
}
