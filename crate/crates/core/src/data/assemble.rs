//! Network input tensors. Channel order is part of the checkpoint contract:
//! coarse `[R, G, B, SR]`, fine `[R, G, B, SR, guidance]`; SR is dropped when disabled.

use crate::error::{DiscError, Result};
use crate::grid::{Grid, RgbImage};
use crate::model::SrMap;
use crate::tensor::Tensor;

/// Allowed excursion outside `[0, 1]` for fine-network input channels.
pub const CHANNEL_RANGE_TOLERANCE: f64 = 1e-6;

fn push_plane(out: &mut Vec<f64>, plane: &Grid<f64>, side: usize) {
    if plane.dims() == (side, side) {
        out.extend_from_slice(plane.data());
    } else {
        out.extend_from_slice(plane.resize_bilinear(side, side).data());
    }
}

fn image_planes(image: &RgbImage, side: usize) -> Vec<f64> {
    let resized;
    let img = if image.dims() == (side, side) {
        image
    } else {
        resized = image.resize_bilinear(side, side);
        &resized
    };
    img.planes().concat()
}

pub fn assemble_coarse_input(image: &RgbImage, sr: Option<&SrMap>, side: usize) -> Result<Tensor> {
    let mut data = image_planes(image, side);
    if let Some(sr) = sr {
        push_plane(&mut data, sr.grid(), side);
    }
    let c = data.len() / (side * side);
    Tensor::new(vec![c, side, side], data)
}

/// `guidance` must already be scaled to `[0, 1]`; it is resized to `side` if needed.
pub fn assemble_fine_input(
    image: &RgbImage,
    sr: Option<&SrMap>,
    guidance: &Grid<f64>,
    side: usize,
) -> Result<Tensor> {
    let mut data = image_planes(image, side);
    if let Some(sr) = sr {
        push_plane(&mut data, sr.grid(), side);
    }
    push_plane(&mut data, guidance, side);
    let tol = CHANNEL_RANGE_TOLERANCE;
    if let Some(v) = data.iter().find(|v| !(-tol..=1.0 + tol).contains(*v)) {
        return Err(DiscError::InvalidArgument(format!("fine input value {v} outside [0, 1]")));
    }
    let c = data.len() / (side * side);
    Tensor::new(vec![c, side, side], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sr(side: usize, v: f64) -> SrMap {
        SrMap::new(Grid::filled(side, side, v)).unwrap()
    }

    #[test]
    fn channel_counts() {
        let img = RgbImage::filled(20, 20, [0.1, 0.2, 0.3]);
        assert_eq!(assemble_coarse_input(&img, None, 8).unwrap().shape(), &[3, 8, 8]);
        let s = sr(8, 0.4);
        assert_eq!(assemble_coarse_input(&img, Some(&s), 8).unwrap().shape(), &[4, 8, 8]);
        let g = Grid::filled(4, 4, 0.5);
        assert_eq!(assemble_fine_input(&img, Some(&s), &g, 8).unwrap().shape(), &[5, 8, 8]);
        assert_eq!(assemble_fine_input(&img, None, &g, 8).unwrap().shape(), &[4, 8, 8]);
    }

    #[test]
    fn constant_image_gives_constant_channels() {
        let img = RgbImage::filled(13, 17, [0.1, 0.2, 0.3]);
        let t = assemble_fine_input(&img, Some(&sr(5, 0.4)), &Grid::filled(3, 3, 0.9), 8).unwrap();
        for (c, want) in [0.1, 0.2, 0.3, 0.4, 0.9].iter().enumerate() {
            assert!(t.channel(c).iter().all(|v| (v - want).abs() < 1e-12));
        }
    }

    #[test]
    fn channel_order_is_rgb_then_sr() {
        let img = RgbImage::filled(4, 4, [0.1, 0.2, 0.3]);
        let swapped = RgbImage::filled(4, 4, [0.3, 0.2, 0.1]);
        let s = sr(4, 0.7);
        let a = assemble_coarse_input(&img, Some(&s), 4).unwrap();
        assert_eq!(a.channel(0)[0], 0.1);
        assert_eq!(a.channel(3)[0], 0.7);
        assert_ne!(a, assemble_coarse_input(&swapped, Some(&s), 4).unwrap());
    }

    #[test]
    fn range_violation_is_rejected() {
        let img = RgbImage::filled(4, 4, [0.1, 0.2, 0.3]);
        let err = assemble_fine_input(&img, None, &Grid::filled(4, 4, 1.5), 4);
        assert!(err.is_err());
        assert!(assemble_fine_input(&img, None, &Grid::filled(4, 4, 1.0 + 5e-7), 4).is_ok());
    }
}
