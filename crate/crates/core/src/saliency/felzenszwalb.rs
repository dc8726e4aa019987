//! Felzenszwalb-Huttenlocher graph-based segmentation.
//!
//! Pixels are nodes of an 8-connected grid graph weighted by Euclidean
//! color distance. Edges are processed in nondecreasing order; two
//! components merge when the connecting edge is no heavier than either
//! component's internal difference plus its adaptive slack `scale / |C|`.
//! A final pass absorbs components smaller than `min_size`.

use ndarray::Array2;

use crate::data::gaussian_blur;
use crate::error::{Error, Result};
use crate::types::Image;

/// A complete labeling of the frame into contiguous region ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMap {
    /// Region id per pixel; ids are contiguous from 0 in raster order of
    /// first appearance.
    pub labels: Array2<usize>,
    pub region_count: usize,
}

struct Dsu {
    parent: Vec<usize>,
    size: Vec<usize>,
    /// Largest merged edge weight inside the component so far.
    internal: Vec<f64>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect(), size: vec![1; n], internal: vec![0.0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize, weight: f64) {
        let (big, small) = if self.size[a] >= self.size[b] { (a, b) } else { (b, a) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.internal[big] = self.internal[big].max(self.internal[small]).max(weight);
    }
}

fn color_distance(img: &Image, a: (usize, usize), b: (usize, usize)) -> f64 {
    let mut acc = 0.0;
    for c in 0..img.channels() {
        let d = img.data()[[a.0, a.1, c]] - img.data()[[b.0, b.1, c]];
        acc += d * d;
    }
    acc.sqrt()
}

/// Segments an image with the cited graph-based algorithm.
pub fn felzenszwalb_segments(
    img: &Image,
    scale: f64,
    sigma: f64,
    min_size: usize,
) -> Result<SegmentMap> {
    if min_size < 1 {
        return Err(Error::Config(format!("felzenszwalb min_size {min_size} must be >= 1")));
    }
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::Config(format!("felzenszwalb scale {scale} must be positive")));
    }
    let smoothed = gaussian_blur(img, sigma)?;
    let (h, w) = (smoothed.height(), smoothed.width());
    let flat = |i: usize, j: usize| i * w + j;

    // 8-connectivity: each pixel connects right, down, down-right, down-left.
    let mut edges: Vec<(f64, u32, u32)> = Vec::with_capacity(4 * h * w);
    for i in 0..h {
        for j in 0..w {
            let mut push = |di: usize, dj: isize| {
                let ni = i + di;
                let nj = j as isize + dj;
                if ni < h && nj >= 0 && (nj as usize) < w {
                    let nj = nj as usize;
                    edges.push((
                        color_distance(&smoothed, (i, j), (ni, nj)),
                        flat(i, j) as u32,
                        flat(ni, nj) as u32,
                    ));
                }
            };
            push(0, 1);
            push(1, 0);
            push(1, 1);
            push(1, -1);
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut dsu = Dsu::new(h * w);
    for &(weight, a, b) in &edges {
        let ra = dsu.find(a as usize);
        let rb = dsu.find(b as usize);
        if ra == rb {
            continue;
        }
        let slack_a = dsu.internal[ra] + scale / dsu.size[ra] as f64;
        let slack_b = dsu.internal[rb] + scale / dsu.size[rb] as f64;
        if weight <= slack_a.min(slack_b) {
            dsu.union(ra, rb, weight);
        }
    }
    // Absorb undersized components along the same edge order.
    for &(weight, a, b) in &edges {
        let ra = dsu.find(a as usize);
        let rb = dsu.find(b as usize);
        if ra != rb && (dsu.size[ra] < min_size || dsu.size[rb] < min_size) {
            dsu.union(ra, rb, weight);
        }
    }

    let mut labels = Array2::zeros((h, w));
    let mut remap = vec![usize::MAX; h * w];
    let mut next = 0usize;
    for i in 0..h {
        for j in 0..w {
            let root = dsu.find(flat(i, j));
            if remap[root] == usize::MAX {
                remap[root] = next;
                next += 1;
            }
            labels[[i, j]] = remap[root];
        }
    }
    Ok(SegmentMap { labels, region_count: next })
}

impl SegmentMap {
    /// Pixel flat indices (`i * w + j`) of each region, in raster order.
    pub fn region_pixels(&self) -> Vec<Vec<usize>> {
        let (_, w) = self.labels.dim();
        let mut regions = vec![Vec::new(); self.region_count];
        for ((i, j), &r) in self.labels.indexed_iter() {
            regions[r].push(i * w + j);
        }
        regions
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::Rng;

    fn const_image(h: usize, w: usize, v: f64) -> Image {
        Image::new(Array3::from_elem((h, w, 3), v)).unwrap()
    }

    #[test]
    fn constant_image_is_one_region() {
        let seg = felzenszwalb_segments(&const_image(6, 5, 0.3), 100.0, 0.8, 1).unwrap();
        assert_eq!(seg.region_count, 1);
        assert!(seg.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn two_constant_halves_split_exactly_in_two() {
        let img = Image::new(Array3::from_shape_fn((8, 8, 3), |(_, j, _)| {
            if j < 4 {
                0.9
            } else {
                0.1
            }
        }))
        .unwrap();
        let seg = felzenszwalb_segments(&img, 1.0, 0.0, 1).unwrap();
        assert_eq!(seg.region_count, 2);
        for ((_, j), &l) in seg.labels.indexed_iter() {
            assert_eq!(l, usize::from(j >= 4));
        }
    }

    #[test]
    fn region_count_is_non_increasing_in_scale() {
        let mut rng = crate::util::substream(5, "felz", 0);
        let img = Image::new(Array3::from_shape_fn((12, 12, 3), |(i, j, _)| {
            (((i / 3 + j / 3) % 2) as f64 * 0.6 + rng.gen_range(0.0..0.2)).clamp(0.0, 1.0)
        }))
        .unwrap();
        let counts: Vec<usize> = [0.5, 5.0, 50.0, 500.0]
            .iter()
            .map(|&s| felzenszwalb_segments(&img, s, 0.5, 1).unwrap().region_count)
            .collect();
        for pair in counts.windows(2) {
            assert!(pair[1] <= pair[0], "counts {counts:?} not monotone");
        }
        assert!(counts[0] > 1);
    }

    #[test]
    fn min_size_is_enforced_after_merging() {
        let mut rng = crate::util::substream(6, "felz", 1);
        let img = Image::new(Array3::from_shape_fn((10, 10, 3), |_| rng.gen_range(0.0..1.0)))
            .unwrap();
        let seg = felzenszwalb_segments(&img, 0.01, 0.0, 5).unwrap();
        let mut sizes = vec![0usize; seg.region_count];
        for &l in &seg.labels {
            sizes[l] += 1;
        }
        assert!(sizes.iter().all(|&s| s >= 5), "sizes {sizes:?}");
        assert!(felzenszwalb_segments(&img, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn labels_are_contiguous_from_zero_and_cover_every_pixel() {
        let img = Image::new(Array3::from_shape_fn((9, 7, 3), |(i, j, c)| {
            ((i * 7 + j + c) % 13) as f64 / 12.0
        }))
        .unwrap();
        let seg = felzenszwalb_segments(&img, 10.0, 0.8, 2).unwrap();
        let mut seen = vec![false; seg.region_count];
        for &l in &seg.labels {
            assert!(l < seg.region_count);
            seen[l] = true;
        }
        assert!(seen.iter().all(|&s| s));
        let pixels: usize = seg.region_pixels().iter().map(Vec::len).sum();
        assert_eq!(pixels, 63);
    }
}
