//! Superpixel over-segmentation, region adjacency and region appearance features.

pub mod histogram;
pub mod lab;
pub mod slic;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DiscError, Result};
use crate::grid::Grid;

pub use histogram::{
    histogram_distance, region_histogram, region_histograms, HistogramBins, PixelFeatures,
    RegionHistogram,
};
pub use lab::{rgb_to_lab, srgb_to_lab};
pub use slic::segment;

/// Per-pixel region labels in `[0, n_regions)` plus per-region pixel lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    labels: Grid<usize>,
    region_pixels: Vec<Vec<usize>>,
}

impl Segmentation {
    /// Builds the region lists; every label in `0..max+1` must occur.
    pub fn from_labels(labels: Grid<usize>) -> Result<Self> {
        let n = labels.data().iter().max().map_or(0, |m| m + 1);
        let mut region_pixels = vec![Vec::new(); n];
        for (i, &l) in labels.data().iter().enumerate() {
            region_pixels[l].push(i);
        }
        if let Some(r) = region_pixels.iter().position(Vec::is_empty) {
            return Err(DiscError::InvalidArgument(format!("region {r} has no pixels")));
        }
        Ok(Segmentation {
            labels,
            region_pixels,
        })
    }

    pub fn labels(&self) -> &Grid<usize> {
        &self.labels
    }

    pub fn n_regions(&self) -> usize {
        self.region_pixels.len()
    }

    pub fn region_pixels(&self) -> &[Vec<usize>] {
        &self.region_pixels
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        self.region_pixels.iter().map(Vec::len).collect()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.labels.dims()
    }

    /// Writes a false-color label PNG plus a `{n_regions, sizes}` JSON sidecar.
    pub fn export_debug(&self, png_path: &Path) -> Result<()> {
        let (h, w) = self.dims();
        let mut buf = image::RgbImage::new(w as u32, h as u32);
        for (i, &l) in self.labels.data().iter().enumerate() {
            // Knuth multiplicative hash spreads neighbouring ids across the palette
            let c = (l as u32).wrapping_mul(2_654_435_761);
            buf.put_pixel(
                (i % w) as u32,
                (i / w) as u32,
                image::Rgb([(c >> 24) as u8, (c >> 16) as u8, (c >> 8) as u8]),
            );
        }
        buf.save(png_path).map_err(|e| DiscError::image(png_path, e))?;
        let sidecar = serde_json::json!({
            "n_regions": self.n_regions(),
            "sizes": self.region_sizes(),
        });
        let json_path = png_path.with_extension("json");
        std::fs::write(&json_path, serde_json::to_vec_pretty(&sidecar)?)
            .map_err(|e| DiscError::io(&json_path, e))
    }
}

/// Region adjacency under 4-connectivity of the label grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    pub neighbors: Vec<BTreeSet<usize>>,
}

pub fn build_adjacency(seg: &Segmentation) -> Adjacency {
    let (h, w) = seg.dims();
    let labels = seg.labels().data();
    let mut neighbors = vec![BTreeSet::new(); seg.n_regions()];
    for y in 0..h {
        for x in 0..w {
            let a = labels[y * w + x];
            let mut link = |b: usize| {
                if a != b {
                    neighbors[a].insert(b);
                    neighbors[b].insert(a);
                }
            };
            if x + 1 < w {
                link(labels[y * w + x + 1]);
            }
            if y + 1 < h {
                link(labels[(y + 1) * w + x]);
            }
        }
    }
    Adjacency { neighbors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RgbImage;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn single_region_has_no_neighbors() {
        let seg = Segmentation::from_labels(Grid::filled(3, 3, 0)).unwrap();
        assert!(build_adjacency(&seg).neighbors[0].is_empty());
    }

    #[test]
    fn two_pixel_grid() {
        let seg = Segmentation::from_labels(Grid::new(2, 1, vec![0, 1]).unwrap()).unwrap();
        let adj = build_adjacency(&seg);
        assert_eq!(adj.neighbors[0], BTreeSet::from([1]));
        assert_eq!(adj.neighbors[1], BTreeSet::from([0]));
    }

    #[test]
    fn missing_label_is_rejected() {
        assert!(Segmentation::from_labels(Grid::new(1, 2, vec![0, 2]).unwrap()).is_err());
    }

    #[test]
    fn segmentation_is_deterministic_and_partitions() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let img: RgbImage = Grid::from_fn(24, 24, |y, x| {
            let base = if (y as i32 - 12).pow(2) + (x as i32 - 10).pow(2) < 40 { 0.8 } else { 0.2 };
            [base + rng.random_range(-0.05..0.05), base, 1.0 - base]
        });
        let a = segment(&img, 20, 10.0).unwrap();
        let b = segment(&img, 20, 10.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.region_sizes().iter().sum::<usize>(), 24 * 24);
        assert!((10..=40).contains(&a.n_regions()), "{}", a.n_regions());
    }

    #[test]
    fn export_writes_png_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let seg = Segmentation::from_labels(Grid::from_fn(4, 4, |y, _| y / 2)).unwrap();
        let path = dir.path().join("seg.png");
        seg.export_debug(&path).unwrap();
        let side: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("seg.json")).unwrap()).unwrap();
        assert_eq!(side["n_regions"], 2);
        assert_eq!(side["sizes"], serde_json::json!([8, 8]));
        assert!(path.exists());
    }

    fn brute_force_adjacency(labels: &[usize], h: usize, w: usize, n: usize) -> Vec<BTreeSet<usize>> {
        let mut out = vec![BTreeSet::new(); n];
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let touching = (0..h * w).any(|i| {
                    labels[i] == a
                        && (0..h * w).any(|j| {
                            labels[j] == b && (i / w).abs_diff(j / w) + (i % w).abs_diff(j % w) == 1
                        })
                });
                if touching {
                    out[a].insert(b);
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn adjacency_matches_boundary_scan(raw in prop::collection::vec(0usize..5, 30)) {
            // compact the labels so every id occurs
            let mut ids: Vec<usize> = raw.clone();
            ids.sort();
            ids.dedup();
            let labels: Vec<usize> = raw.iter().map(|l| ids.binary_search(l).unwrap()).collect();
            let seg = Segmentation::from_labels(Grid::new(5, 6, labels.clone()).unwrap()).unwrap();
            let adj = build_adjacency(&seg);
            prop_assert_eq!(&adj.neighbors, &brute_force_adjacency(&labels, 5, 6, ids.len()));
            for (a, set) in adj.neighbors.iter().enumerate() {
                prop_assert!(!set.contains(&a));
                for &b in set {
                    prop_assert!(adj.neighbors[b].contains(&a));
                }
            }
        }
    }
}
