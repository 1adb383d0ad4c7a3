//! Superpixel pooling layers: intra-superpixel smoothing (ISS) and
//! inter-superpixel voting (ISV), with exact backward passes.

use serde::{Deserialize, Serialize};

use crate::error::{DiscError, Result};
use crate::grid::{RgbImage, ScoreMap};
use crate::superpixel::{
    build_adjacency, histogram_distance, region_histograms, segment, Adjacency, HistogramBins,
    RegionHistogram, Segmentation,
};

/// Largest deviation from the region mean tolerated at the ISV input.
pub const REGION_CONSTANT_TOLERANCE: f64 = 1e-6;

/// Normalized voting weights over each region's neighbours, plus the blend factor λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsvWeights {
    /// `rows[s]` lists `(neighbour, weight)`; empty for isolated regions.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub lambda: f64,
}

/// Softmax of negative histogram distances over each region's neighbour set.
pub fn compute_isv_weights(
    histograms: &[RegionHistogram],
    adj: &Adjacency,
    lambda: f64,
) -> Result<IsvWeights> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(DiscError::InvalidArgument(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    if histograms.len() != adj.neighbors.len() {
        return Err(DiscError::Shape(format!(
            "{} histograms for {} regions",
            histograms.len(),
            adj.neighbors.len()
        )));
    }
    let mut rows = Vec::with_capacity(histograms.len());
    for (s, nbrs) in adj.neighbors.iter().enumerate() {
        let d = nbrs
            .iter()
            .map(|&t| histogram_distance(&histograms[s], &histograms[t]))
            .collect::<Result<Vec<_>>>()?;
        // shift by the smallest distance for a stable softmax
        let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
        let e: Vec<f64> = d.iter().map(|&x| (-(x - dmin)).exp()).collect();
        let z: f64 = e.iter().sum();
        rows.push(nbrs.iter().zip(e).map(|(&t, v)| (t, v / z)).collect());
    }
    Ok(IsvWeights { rows, lambda })
}

fn check_dims(map: &ScoreMap, seg: &Segmentation) -> Result<()> {
    if map.dims() != seg.dims() {
        return Err(DiscError::Shape(format!(
            "map is {:?} but segmentation is {:?}",
            map.dims(),
            seg.dims()
        )));
    }
    Ok(())
}

/// Mean of `map` over each region.
pub fn region_means(map: &ScoreMap, seg: &Segmentation) -> Result<Vec<f64>> {
    check_dims(map, seg)?;
    Ok(seg
        .region_pixels()
        .iter()
        .map(|px| px.iter().map(|&i| map.data()[i]).sum::<f64>() / px.len() as f64)
        .collect())
}

/// Writes one value per region back to every pixel of that region.
pub fn broadcast_regions(values: &[f64], seg: &Segmentation) -> ScoreMap {
    let labels = seg.labels();
    labels.map(|&l| values[l])
}

/// Replaces every score by the mean score of its superpixel.
pub fn iss_forward(map: &ScoreMap, seg: &Segmentation) -> Result<ScoreMap> {
    Ok(broadcast_regions(&region_means(map, seg)?, seg))
}

/// The averaging projection is symmetric, so its adjoint is itself.
pub fn iss_backward(output_grad: &ScoreMap, seg: &Segmentation) -> Result<ScoreMap> {
    iss_forward(output_grad, seg)
}

/// Region-level voting: `(1−λ)·c_s + λ·Σ w·c_{s'}`; isolated regions pass through.
pub fn isv_regions_forward(scores: &[f64], weights: &IsvWeights) -> Vec<f64> {
    let lambda = weights.lambda;
    weights
        .rows
        .iter()
        .zip(scores)
        .map(|(row, &c)| {
            if row.is_empty() {
                c
            } else {
                (1.0 - lambda) * c + lambda * row.iter().map(|&(t, w)| w * scores[t]).sum::<f64>()
            }
        })
        .collect()
}

/// Transpose of [`isv_regions_forward`].
pub fn isv_regions_backward(grads: &[f64], weights: &IsvWeights) -> Vec<f64> {
    let lambda = weights.lambda;
    let mut out: Vec<f64> = weights
        .rows
        .iter()
        .zip(grads)
        .map(|(row, &g)| if row.is_empty() { g } else { (1.0 - lambda) * g })
        .collect();
    for (s, row) in weights.rows.iter().enumerate() {
        for &(t, w) in row {
            out[t] += lambda * w * grads[s];
        }
    }
    out
}

/// Inter-superpixel voting on a region-constant map.
pub fn isv_forward(map: &ScoreMap, seg: &Segmentation, weights: &IsvWeights) -> Result<ScoreMap> {
    if weights.rows.len() != seg.n_regions() {
        return Err(DiscError::Shape(format!(
            "{} weight rows for {} regions",
            weights.rows.len(),
            seg.n_regions()
        )));
    }
    let means = region_means(map, seg)?;
    let deviation = seg
        .region_pixels()
        .iter()
        .zip(&means)
        .flat_map(|(px, &m)| px.iter().map(move |&i| (map.data()[i] - m).abs()))
        .fold(0.0, f64::max);
    if deviation > REGION_CONSTANT_TOLERANCE {
        return Err(DiscError::NotRegionConstant(deviation));
    }
    Ok(broadcast_regions(&isv_regions_forward(&means, weights), seg))
}

/// Pixel gradient of [`isv_forward`], with the region score read as the region mean.
pub fn isv_backward(output_grad: &ScoreMap, seg: &Segmentation, weights: &IsvWeights) -> Result<ScoreMap> {
    check_dims(output_grad, seg)?;
    let mut region_grads = vec![0.0; seg.n_regions()];
    for (&l, &g) in seg.labels().data().iter().zip(output_grad.data()) {
        region_grads[l] += g;
    }
    let back = isv_regions_backward(&region_grads, weights);
    let per_pixel: Vec<f64> = back
        .iter()
        .zip(seg.region_pixels())
        .map(|(g, px)| g / px.len() as f64)
        .collect();
    Ok(broadcast_regions(&per_pixel, seg))
}

/// Settings for building the superpixel context of an image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlciConfig {
    pub n_target: usize,
    pub compactness: f64,
    pub lambda: f64,
    pub bins: HistogramBins,
}

impl Default for SlciConfig {
    fn default() -> Self {
        SlciConfig {
            n_target: 200,
            compactness: 10.0,
            lambda: 0.5,
            bins: HistogramBins::default(),
        }
    }
}

/// Segmentation and voting weights of one image; depends only on the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlciContext {
    pub segmentation: Segmentation,
    pub weights: IsvWeights,
}

impl SlciContext {
    /// `image` must already be at the coarse-map resolution.
    pub fn build(image: &RgbImage, config: &SlciConfig) -> Result<Self> {
        let n_target = config.n_target.min(image.len());
        let segmentation = segment(image, n_target, config.compactness)?;
        let hist = region_histograms(image, &segmentation, config.bins)?;
        let weights = compute_isv_weights(&hist, &build_adjacency(&segmentation), config.lambda)?;
        Ok(SlciContext {
            segmentation,
            weights,
        })
    }

    /// ISS followed by ISV.
    pub fn forward(&self, map: &ScoreMap) -> Result<ScoreMap> {
        let smoothed = iss_forward(map, &self.segmentation)?;
        isv_forward(&smoothed, &self.segmentation, &self.weights)
    }

    pub fn backward(&self, output_grad: &ScoreMap) -> Result<ScoreMap> {
        let g = isv_backward(output_grad, &self.segmentation, &self.weights)?;
        iss_backward(&g, &self.segmentation)
    }
}
