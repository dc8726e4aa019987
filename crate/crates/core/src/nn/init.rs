//! Weight initialization.

use ndarray::{Array1, Array2, Array4};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::nn::layers::{Conv2d, ConvTranspose2d, Dense};

fn he_normal(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("he std is finite");
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// He-normal conv layer with zero bias.
pub fn conv2d(
    rng: &mut ChaCha8Rng,
    cout: usize,
    cin: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Conv2d {
    let fan_in = cin * k * k;
    let data = he_normal(rng, fan_in, cout * cin * k * k);
    Conv2d {
        w: Array4::from_shape_vec((cout, cin, k, k), data).expect("shape matches count"),
        b: Array1::zeros(cout),
        stride,
        pad,
    }
}

/// He-normal transposed conv layer with zero bias.
pub fn conv_transpose2d(
    rng: &mut ChaCha8Rng,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
) -> ConvTranspose2d {
    let fan_in = cin * k * k;
    let data = he_normal(rng, fan_in, cin * cout * k * k);
    ConvTranspose2d {
        w: Array4::from_shape_vec((cin, cout, k, k), data).expect("shape matches count"),
        b: Array1::zeros(cout),
        stride,
    }
}

/// He-normal dense layer with zero bias.
pub fn dense(rng: &mut ChaCha8Rng, out_features: usize, in_features: usize) -> Dense {
    let data = he_normal(rng, in_features, out_features * in_features);
    Dense {
        w: Array2::from_shape_vec((out_features, in_features), data).expect("shape matches count"),
        b: Array1::zeros(out_features),
    }
}
