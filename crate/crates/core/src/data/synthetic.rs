//! Seeded synthetic saliency datasets.
//!
//! Each image is a noisy flat background holding a brighter shape. Shape and background
//! brightness ranges overlap across images, so only contrast within an image separates them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Sample, Split};
use crate::error::{DiscError, Result};
use crate::grid::{Mask, RgbImage};

const NOISE: f64 = 0.04;

#[derive(Debug, Clone, Copy)]
enum Shape {
    Circle { cx: f64, cy: f64, r: f64 },
    Rect { cx: f64, cy: f64, hw: f64, hh: f64 },
    Triangle { cx: f64, cy: f64, half_base: f64, half_height: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Circle { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Rect { cx, cy, hw, hh } => (x - cx).abs() <= hw && (y - cy).abs() <= hh,
            Shape::Triangle {
                cx,
                cy,
                half_base,
                half_height,
            } => {
                // apex up; width shrinks linearly from the base
                let t = (y - (cy - half_height)) / (2.0 * half_height);
                (0.0..=1.0).contains(&t) && (x - cx).abs() <= half_base * t
            }
        }
    }
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn background(rng: &mut impl Rng) -> [f64; 3] {
    std::array::from_fn(|_| rng.random_range(0.05..0.6))
}

/// A colour brighter than `bg` by a random margin, with a random tint.
fn foreground(rng: &mut impl Rng, bg: [f64; 3]) -> [f64; 3] {
    let boost = rng.random_range(0.25..0.4);
    bg.map(|c| (c + boost + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0))
}

/// Centre coordinate biased toward the middle, keeping `half` extent inside `side`.
fn centre(rng: &mut impl Rng, side: f64, half: f64) -> f64 {
    let n = Normal::new(side / 2.0, side * 0.15).expect("positive std");
    n.sample(rng).clamp(half, side - half)
}

fn render(
    rng: &mut impl Rng,
    side: usize,
    bg: [f64; 3],
    shapes: &[(Shape, [f64; 3])],
) -> (RgbImage, Vec<Mask>) {
    let noise = Normal::new(0.0, NOISE).expect("positive std");
    let masks: Vec<Mask> = shapes
        .iter()
        .map(|(s, _)| Mask::from_fn(side, side, |y, x| s.contains(x as f64 + 0.5, y as f64 + 0.5)))
        .collect();
    let image = RgbImage::from_fn(side, side, |y, x| {
        let base = shapes
            .iter()
            .zip(&masks)
            .find(|(_, m)| *m.get(y, x))
            .map_or(bg, |((_, c), _)| *c);
        base.map(|c| (c + noise.sample(rng)).clamp(0.0, 1.0))
    });
    (image, masks)
}

fn random_shape(rng: &mut impl Rng, side: usize) -> Shape {
    let s = side as f64;
    let size = rng.random_range(0.2..0.6) * s;
    match rng.random_range(0..3) {
        0 => {
            let r = size / 2.0;
            Shape::Circle {
                cx: centre(rng, s, r),
                cy: centre(rng, s, r),
                r,
            }
        }
        1 => {
            let hw = size / 2.0;
            let hh = hw * rng.random_range(0.6..1.0);
            Shape::Rect {
                cx: centre(rng, s, hw),
                cy: centre(rng, s, hh),
                hw,
                hh,
            }
        }
        _ => {
            let h = size / 2.0;
            Shape::Triangle {
                cx: centre(rng, s, h),
                cy: centre(rng, s, h),
                half_base: h,
                half_height: h,
            }
        }
    }
}

fn check_args(count: usize, side: usize) -> Result<()> {
    if count == 0 || side < 32 {
        return Err(DiscError::InvalidArgument(format!(
            "synthetic data needs count >= 1 and side >= 32, got {count} and {side}"
        )));
    }
    Ok(())
}

/// `count` single-shape samples; sample `i` depends only on `(seed, i, side)`.
pub fn generate_synthetic(seed: u64, count: usize, side: usize) -> Result<Dataset> {
    check_args(count, side)?;
    let samples = (0..count)
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let bg = background(&mut rng);
            let fg = foreground(&mut rng, bg);
            let shape = random_shape(&mut rng, side);
            let (image, mut masks) = render(&mut rng, side, bg, &[(shape, fg)]);
            Sample {
                id: format!("syn_{i:05}"),
                image,
                mask: masks.pop().expect("one shape"),
            }
        })
        .collect();
    Dataset::new(samples, Split::Train)
}

/// Image with one circle and one square in opposite halves.
#[derive(Debug, Clone)]
pub struct TwoShapeSample {
    /// Mask marks both shapes.
    pub generic: Sample,
    /// Mask marks the circle only.
    pub task: Sample,
    pub circle: Mask,
    pub square: Mask,
}

/// Two-object task data: both shapes are equally conspicuous; only circles are targets.
pub fn generate_two_shape(seed: u64, count: usize, side: usize) -> Result<Vec<TwoShapeSample>> {
    check_args(count, side)?;
    let s = side as f64;
    Ok((0..count)
        .map(|i| {
            let mut rng = sample_rng(seed ^ 0x7477_6f73_6861_7065, i);
            let bg = background(&mut rng);
            let half = |rng: &mut ChaCha8Rng| rng.random_range(0.13..0.2) * s;
            let (rc, rs) = (half(&mut rng), half(&mut rng));
            let circle_left = rng.random_bool(0.5);
            let mut place = |r: f64, left: bool| {
                let lo = if left { r } else { s / 2.0 + r };
                let cx = rng.random_range(lo..lo + s / 2.0 - 2.0 * r + 1e-9);
                let cy = rng.random_range(r..s - r);
                (cx, cy)
            };
            let (ccx, ccy) = place(rc, circle_left);
            let (scx, scy) = place(rs, !circle_left);
            let circle = Shape::Circle { cx: ccx, cy: ccy, r: rc };
            let square = Shape::Rect {
                cx: scx,
                cy: scy,
                hw: rs,
                hh: rs,
            };
            let (fc, fs) = (foreground(&mut rng, bg), foreground(&mut rng, bg));
            let (image, masks) = render(&mut rng, side, bg, &[(circle, fc), (square, fs)]);
            let [circle, square]: [Mask; 2] = masks.try_into().expect("two shapes");
            let both = Mask::from_fn(side, side, |y, x| *circle.get(y, x) || *square.get(y, x));
            let id = format!("two_{i:05}");
            TwoShapeSample {
                generic: Sample {
                    id: id.clone(),
                    image: image.clone(),
                    mask: both,
                },
                task: Sample {
                    id,
                    image,
                    mask: circle.clone(),
                },
                circle,
                square,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_sr_map;

    #[test]
    fn deterministic_and_prefix_stable() {
        let a = generate_synthetic(11, 6, 40).unwrap();
        let b = generate_synthetic(11, 6, 40).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(11, 3, 40).unwrap();
        assert_eq!(&a.samples()[..3], c.samples());
        assert_ne!(a, generate_synthetic(12, 6, 40).unwrap());
    }

    #[test]
    fn masks_are_proper() {
        for s in generate_synthetic(5, 60, 32).unwrap().samples() {
            let n = s.mask.count();
            assert!(n > 0 && n < 32 * 32, "{}: {n}", s.id);
        }
    }

    #[test]
    fn sr_peak_is_central() {
        let ds = generate_synthetic(0, 500, 32).unwrap();
        let sr = build_sr_map(ds.masks(), 32).unwrap();
        let g = sr.grid();
        let (mut best, mut at) = (f64::MIN, (0, 0));
        for y in 0..32 {
            for x in 0..32 {
                if *g.get(y, x) > best {
                    best = *g.get(y, x);
                    at = (y, x);
                }
            }
        }
        assert!((8..24).contains(&at.0) && (8..24).contains(&at.1), "{at:?}");
    }

    #[test]
    fn shape_is_brighter_than_its_background() {
        for s in generate_synthetic(2, 20, 48).unwrap().samples() {
            let lum = |p: &[f64; 3]| p.iter().sum::<f64>();
            let (mut fg, mut bg, mut nf) = (0.0, 0.0, 0);
            for (p, &m) in s.image.data().iter().zip(s.mask.data()) {
                if m {
                    fg += lum(p);
                    nf += 1;
                } else {
                    bg += lum(p);
                }
            }
            assert!(fg / nf as f64 > bg / (48 * 48 - nf) as f64);
        }
    }

    #[test]
    fn two_shape_masks() {
        for t in generate_two_shape(4, 30, 64).unwrap() {
            assert!(t.circle.count() > 0 && t.square.count() > 0);
            let overlap = t.circle.data().iter().zip(t.square.data()).filter(|(a, b)| **a && **b).count();
            assert_eq!(overlap, 0);
            assert_eq!(t.generic.mask.count(), t.circle.count() + t.square.count());
            assert_eq!(t.task.mask, t.circle);
        }
    }

    #[test]
    fn rejects_bad_args() {
        assert!(generate_synthetic(0, 0, 64).is_err());
        assert!(generate_synthetic(0, 1, 16).is_err());
    }
}
