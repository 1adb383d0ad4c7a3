//! Image/mask datasets: PNG ingestion, synthetic generation and network input assembly.

mod assemble;
mod synthetic;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DiscError, Result};
use crate::grid::{Mask, RgbImage};

pub use assemble::{assemble_coarse_input, assemble_fine_input, CHANNEL_RANGE_TOLERANCE};
pub use synthetic::{generate_synthetic, generate_two_shape, TwoShapeSample};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: RgbImage,
    pub mask: Mask,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: RgbImage, mask: Mask) -> Result<Self> {
        image.same_dims(&mask)?;
        Ok(Sample {
            id: id.into(),
            image,
            mask,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    pub split: Split,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, split: Split) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(DiscError::InvalidArgument(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(Dataset { samples, split })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn masks(&self) -> impl Iterator<Item = &Mask> {
        self.samples.iter().map(|s| &s.mask)
    }

    /// Splits into the first `n` samples and the rest, tagged train and test.
    pub fn split_at(self, n: usize) -> Result<(Dataset, Dataset)> {
        let mut train = self.samples;
        let test = train.split_off(n.min(train.len()));
        Ok((Dataset::new(train, Split::Train)?, Dataset::new(test, Split::Test)?))
    }

    /// Writes `<root>/images/<id>.png` and `<root>/masks/<id>.png`.
    pub fn save(&self, root: &Path) -> Result<()> {
        let (img_dir, mask_dir) = (root.join("images"), root.join("masks"));
        for d in [&img_dir, &mask_dir] {
            fs::create_dir_all(d).map_err(|e| DiscError::io(d, e))?;
        }
        for s in &self.samples {
            save_rgb(&s.image, &img_dir.join(format!("{}.png", s.id)))?;
            save_mask(&s.mask, &mask_dir.join(format!("{}.png", s.id)))?;
        }
        Ok(())
    }
}

/// Result of pairing an image directory with a mask directory.
#[derive(Debug)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    /// Files with no partner in the other directory.
    pub orphans: Vec<PathBuf>,
}

fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| DiscError::io(dir, e))? {
        let path = entry.map_err(|e| DiscError::io(dir, e))?.path();
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if let (true, Some(stem)) = (is_png, path.file_stem().and_then(|s| s.to_str())) {
            out.insert(stem.to_string(), path.clone());
        }
    }
    Ok(out)
}

/// Pairs PNGs by file stem. Unpaired files are logged and returned as orphans.
pub fn load_dataset(images_dir: &Path, masks_dir: &Path, split: Split) -> Result<LoadedDataset> {
    let images = png_stems(images_dir)?;
    let mut masks = png_stems(masks_dir)?;
    let mut samples = Vec::new();
    let mut orphans = Vec::new();
    for (stem, img_path) in images {
        match masks.remove(&stem) {
            Some(mask_path) => {
                let image = load_rgb(&img_path)?;
                let mask = load_mask(&mask_path)?;
                if image.dims() != mask.dims() {
                    return Err(DiscError::Shape(format!(
                        "{stem}: image {:?} vs mask {:?}",
                        image.dims(),
                        mask.dims()
                    )));
                }
                samples.push(Sample { id: stem, image, mask });
            }
            None => orphans.push(img_path),
        }
    }
    orphans.extend(masks.into_values());
    if samples.is_empty() {
        return Err(DiscError::NoPairedSamples(images_dir.to_path_buf()));
    }
    for o in &orphans {
        log::warn!("skipping unpaired file {}", o.display());
    }
    Ok(LoadedDataset {
        dataset: Dataset::new(samples, split)?,
        orphans,
    })
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| DiscError::image(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img
        .pixels()
        .map(|p| p.0.map(|v| f64::from(v) / 255.0))
        .collect();
    RgbImage::new(h as usize, w as usize, data)
}

/// Decodes a grayscale mask; a pixel is set when `value / 255 >= 0.5`.
pub fn load_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path).map_err(|e| DiscError::image(path, e))?.to_luma8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| f64::from(p.0[0]) / 255.0 >= 0.5).collect();
    Mask::new(h as usize, w as usize, data)
}

pub fn load_gray(path: &Path) -> Result<crate::grid::SaliencyMap> {
    let img = image::open(path).map_err(|e| DiscError::image(path, e))?.to_luma8();
    let (w, h) = img.dimensions();
    crate::grid::SaliencyMap::new(h as usize, w as usize, img.into_raw())
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_rgb(image: &RgbImage, path: &Path) -> Result<()> {
    let raw = image.data().iter().flat_map(|p| p.map(to_byte)).collect();
    let buf = image::RgbImage::from_raw(image.width() as u32, image.height() as u32, raw)
        .expect("buffer sized from grid");
    buf.save(path).map_err(|e| DiscError::image(path, e))
}

pub fn save_gray(map: &crate::grid::SaliencyMap, path: &Path) -> Result<()> {
    let buf = image::GrayImage::from_raw(map.width() as u32, map.height() as u32, map.data().to_vec())
        .expect("buffer sized from grid");
    buf.save(path).map_err(|e| DiscError::image(path, e))
}

pub fn save_mask(mask: &Mask, path: &Path) -> Result<()> {
    save_gray(&mask.map(|&b| if b { 255 } else { 0 }), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, v: f64) -> Sample {
        let image = RgbImage::from_fn(6, 5, |y, x| [v, (x as f64) / 4.0, (y as f64) / 5.0]);
        let mask = Mask::from_fn(6, 5, |y, x| x > y);
        Sample::new(id, image, mask).unwrap()
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(Dataset::new(vec![sample("a", 0.0), sample("a", 1.0)], Split::Train).is_err());
    }

    #[test]
    fn empty_dirs_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("images")).unwrap();
        fs::create_dir_all(dir.path().join("masks")).unwrap();
        let err = load_dataset(&dir.path().join("images"), &dir.path().join("masks"), Split::Train).unwrap_err();
        assert!(err.to_string().contains("no paired samples"));
    }

    #[test]
    fn orphan_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::new(vec![sample("a", 0.2), sample("b", 0.4), sample("c", 0.6)], Split::Train).unwrap();
        ds.save(dir.path()).unwrap();
        fs::remove_file(dir.path().join("masks/b.png")).unwrap();
        let loaded = load_dataset(&dir.path().join("images"), &dir.path().join("masks"), Split::Train).unwrap();
        assert_eq!(loaded.dataset.len(), 2);
        assert_eq!(loaded.orphans, vec![dir.path().join("images/b.png")]);
    }

    #[test]
    fn gray_mask_binarization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        save_gray(&crate::grid::SaliencyMap::new(1, 3, vec![0, 127, 255]).unwrap(), &p).unwrap();
        assert_eq!(load_mask(&p).unwrap().data(), &[false, false, true]);
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::new(vec![sample("x", 0.5), sample("y", 1.0)], Split::Test).unwrap();
        ds.save(dir.path()).unwrap();
        let a = load_dataset(&dir.path().join("images"), &dir.path().join("masks"), Split::Test).unwrap().dataset;
        for (s, t) in ds.samples().iter().zip(a.samples()) {
            assert_eq!(s.mask, t.mask);
            for (p, q) in s.image.data().iter().zip(t.image.data()) {
                for c in 0..3 {
                    assert!((p[c] - q[c]).abs() <= 0.5 / 255.0 + 1e-12);
                }
            }
        }
        let dir2 = tempfile::tempdir().unwrap();
        a.save(dir2.path()).unwrap();
        let b = load_dataset(&dir2.path().join("images"), &dir2.path().join("masks"), Split::Test).unwrap().dataset;
        assert_eq!(a, b);
    }
}
