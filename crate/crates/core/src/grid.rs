//! Row-major 2-D grids: images, masks and saliency maps.

use serde::{Deserialize, Serialize};

use crate::error::{DiscError, Result};
use crate::nn::{bilinear_plane, nearest_plane};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// RGB image with channel values in [0, 1].
pub type RgbImage = Grid<[f64; 3]>;
/// Binary ground-truth mask.
pub type Mask = Grid<bool>;
/// Unbounded classifier scores.
pub type ScoreMap = Grid<f64>;
/// Saliency normalized to 0–255.
pub type SaliencyMap = Grid<u8>;

impl<T: Clone> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Grid {
            height,
            width,
            data: vec![value; height * width],
        }
    }
}

impl<T> Grid<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(DiscError::Shape(format!(
                "{height}×{width} grid cannot hold {} values",
                data.len()
            )));
        }
        Ok(Grid { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Grid { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize) -> &T {
        &self.data[y * self.width + x]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(DiscError::Shape(format!(
                "grid {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }
}

impl<T: Copy> Grid<T> {
    pub fn resize_nearest(&self, height: usize, width: usize) -> Grid<T> {
        Grid {
            height,
            width,
            data: nearest_plane(&self.data, self.height, self.width, height, width),
        }
    }
}

impl Grid<f64> {
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Grid<f64> {
        Grid {
            height,
            width,
            data: bilinear_plane(&self.data, self.height, self.width, height, width),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

impl RgbImage {
    /// Split into three planes R, G, B.
    pub fn planes(&self) -> [Vec<f64>; 3] {
        std::array::from_fn(|c| self.data.iter().map(|p| p[c]).collect())
    }

    pub fn resize_bilinear(&self, height: usize, width: usize) -> RgbImage {
        let planes = self
            .planes()
            .map(|p| bilinear_plane(&p, self.height, self.width, height, width));
        Grid {
            height,
            width,
            data: (0..height * width)
                .map(|i| [planes[0][i], planes[1][i], planes[2][i]])
                .collect(),
        }
    }
}

impl Mask {
    pub fn to_f64(&self) -> Grid<f64> {
        self.map(|&b| if b { 1.0 } else { 0.0 })
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(Grid::new(2, 2, vec![0u8; 3]).is_err());
        assert!(Grid::<u8>::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn rgb_resize_of_constant() {
        let img = RgbImage::filled(5, 7, [0.1, 0.5, 0.9]);
        let r = img.resize_bilinear(3, 2);
        assert!(r.data().iter().all(|p| (p[0] - 0.1).abs() < 1e-15 && (p[2] - 0.9).abs() < 1e-15));
    }
}
