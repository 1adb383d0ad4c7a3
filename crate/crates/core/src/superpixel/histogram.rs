//! Per-region appearance histograms (LAB color + gradient orientation).

use serde::{Deserialize, Serialize};

use crate::error::{DiscError, Result};
use crate::grid::{Grid, RgbImage};
use crate::superpixel::lab::rgb_to_lab;
use crate::superpixel::Segmentation;

const LAB_RANGES: [(f64, f64); 3] = [(0.0, 100.0), (-110.0, 110.0), (-110.0, 110.0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBins {
    /// Bins per LAB channel.
    pub color: usize,
    /// Orientation bins over [0, π).
    pub gradient: usize,
}

impl Default for HistogramBins {
    fn default() -> Self {
        HistogramBins {
            color: 8,
            gradient: 8,
        }
    }
}

/// Concatenated color (3·B_c) and gradient (B_g) parts, each summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionHistogram {
    pub values: Vec<f64>,
    pub bins: HistogramBins,
}

impl RegionHistogram {
    pub fn color_part(&self) -> &[f64] {
        &self.values[..3 * self.bins.color]
    }

    pub fn gradient_part(&self) -> &[f64] {
        &self.values[3 * self.bins.color..]
    }
}

fn bin_of(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let t = (v.clamp(lo, hi) - lo) / (hi - lo);
    ((t * bins as f64) as usize).min(bins - 1)
}

/// Per-pixel quantities shared by all regions of one image.
pub struct PixelFeatures {
    lab: Grid<[f64; 3]>,
    orientation_bin: Vec<usize>,
    magnitude: Vec<f64>,
    bins: HistogramBins,
}

impl PixelFeatures {
    pub fn new(image: &RgbImage, bins: HistogramBins) -> Result<Self> {
        if bins.color == 0 || bins.gradient == 0 {
            return Err(DiscError::InvalidArgument("histogram bin counts must be positive".into()));
        }
        let lab = rgb_to_lab(image);
        let (h, w) = lab.dims();
        let l = |y: usize, x: usize| lab.get(y, x)[0];
        let mut orientation_bin = Vec::with_capacity(h * w);
        let mut magnitude = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                // central differences with replicated borders
                let gx = (l(y, (x + 1).min(w - 1)) - l(y, x.saturating_sub(1))) / 2.0;
                let gy = (l((y + 1).min(h - 1), x) - l(y.saturating_sub(1), x)) / 2.0;
                let mut theta = gy.atan2(gx);
                if theta < 0.0 {
                    theta += std::f64::consts::PI;
                }
                orientation_bin.push(bin_of(theta, 0.0, std::f64::consts::PI, bins.gradient));
                magnitude.push(gx.hypot(gy));
            }
        }
        Ok(PixelFeatures {
            lab,
            orientation_bin,
            magnitude,
            bins,
        })
    }

    pub fn histogram(&self, pixels: &[usize]) -> RegionHistogram {
        let b = self.bins;
        let mut values = vec![0.0; 3 * b.color + b.gradient];
        for &i in pixels {
            let p = self.lab.data()[i];
            for (c, &(lo, hi)) in LAB_RANGES.iter().enumerate() {
                values[c * b.color + bin_of(p[c], lo, hi, b.color)] += 1.0;
            }
            values[3 * b.color + self.orientation_bin[i]] += self.magnitude[i];
        }
        let (color, grad) = values.split_at_mut(3 * b.color);
        let total: f64 = color.iter().sum();
        color.iter_mut().for_each(|v| *v /= total);
        let total: f64 = grad.iter().sum();
        if total > 1e-12 {
            grad.iter_mut().for_each(|v| *v /= total);
        } else {
            grad.fill(1.0 / b.gradient as f64);
        }
        RegionHistogram { values, bins: b }
    }
}

/// Appearance histogram of one region.
pub fn region_histogram(
    image: &RgbImage,
    seg: &Segmentation,
    region: usize,
    bins: HistogramBins,
) -> Result<RegionHistogram> {
    image.same_dims(seg.labels())?;
    if region >= seg.n_regions() {
        return Err(DiscError::InvalidArgument(format!(
            "region {region} out of range ({} regions)",
            seg.n_regions()
        )));
    }
    Ok(PixelFeatures::new(image, bins)?.histogram(&seg.region_pixels()[region]))
}

/// Histograms of every region, in region order.
pub fn region_histograms(
    image: &RgbImage,
    seg: &Segmentation,
    bins: HistogramBins,
) -> Result<Vec<RegionHistogram>> {
    image.same_dims(seg.labels())?;
    let features = PixelFeatures::new(image, bins)?;
    Ok(seg.region_pixels().iter().map(|px| features.histogram(px)).collect())
}

/// Euclidean distance between two histograms.
pub fn histogram_distance(a: &RegionHistogram, b: &RegionHistogram) -> Result<f64> {
    if a.values.len() != b.values.len() {
        return Err(DiscError::Shape(format!(
            "histogram lengths differ: {} vs {}",
            a.values.len(),
            b.values.len()
        )));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt())
}
