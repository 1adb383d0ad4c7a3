//! The two-network inference path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Init, Network};
use super::profile::Profile;
use super::sr::SrMap;
use crate::data::{assemble_coarse_input, assemble_fine_input};
use crate::error::{DiscError, Result};
use crate::grid::{Grid, Mask, RgbImage, SaliencyMap, ScoreMap};
use crate::losses::{LabelMap, LossConfig};
use crate::slci::{SlciConfig, SlciContext};
use crate::tensor::Tensor;

/// Random sub-stream for parameter initialization.
pub const STREAM_INIT: u64 = 1;
/// Random sub-stream for training sample order.
pub const STREAM_ORDER: u64 = 2;

/// Seeded generator for one named sub-stream of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Switches for the ablation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub use_slci: bool,
    pub use_sr: bool,
    pub use_guidance: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Flags {
            use_slci: true,
            use_sr: true,
            use_guidance: true,
        }
    }
}

impl Flags {
    pub fn coarse_channels(self) -> usize {
        3 + usize::from(self.use_sr)
    }

    /// The guidance slot is always present; it holds 0.5 when guidance is off.
    pub fn fine_channels(self) -> usize {
        4 + usize::from(self.use_sr)
    }
}

/// Clamp to `[-1, 1]`, then `round(255 (s + 1) / 2)` with halves rounded up.
pub fn normalize_output(scores: &ScoreMap) -> SaliencyMap {
    scores.map(|&s| {
        let s = if s.is_nan() { 0.0 } else { s.clamp(-1.0, 1.0) };
        (255.0 * (s + 1.0) / 2.0 + 0.5).floor() as u8
    })
}

/// ±1 labels at `side × side`: +1 where the bilinear-resized mask is at least 0.5.
pub fn make_labels(mask: &Mask, side: usize) -> LabelMap {
    let g = mask
        .to_f64()
        .resize_bilinear(side, side)
        .map(|&v| if v >= 0.5 { 1.0 } else { -1.0 });
    LabelMap::new(g).expect("values are ±1")
}

/// Raw and SLCI-refined coarse maps.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseOutput {
    pub raw: ScoreMap,
    pub refined: ScoreMap,
}

/// Runs the coarse stack; `slci` refines the map when given.
pub fn coarse_forward(net: &Network, input: &Tensor, slci: Option<&SlciContext>) -> Result<CoarseOutput> {
    let side = coarse_side(net)?;
    let out = net.forward(input)?;
    let raw = Grid::new(side, side, out.into_data())?;
    let refined = match slci {
        Some(ctx) => ctx.forward(&raw)?,
        None => raw.clone(),
    };
    Ok(CoarseOutput { raw, refined })
}

pub(crate) fn coarse_side(net: &Network) -> Result<usize> {
    let n = net.spec().output_shape()?.iter().product::<usize>();
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n {
        return Err(DiscError::Shape(format!("coarse output {n} is not a square map")));
    }
    Ok(side)
}

/// Runs the fine stack, returning its single-channel score map.
pub fn fine_forward(net: &Network, input: &Tensor) -> Result<ScoreMap> {
    let out = net.forward(input)?;
    let (c, h, w) = out.dims3()?;
    if c != 1 {
        return Err(DiscError::Shape(format!("fine output has {c} channels")));
    }
    Grid::new(h, w, out.into_data())
}

/// Inputs derived from one image that do not depend on network parameters.
#[derive(Debug, Clone)]
pub struct PreparedImage {
    /// Image resized to the network input side.
    pub image: RgbImage,
    pub coarse_input: Tensor,
    pub slci: Option<SlciContext>,
}

/// Both networks plus everything inference needs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscModel {
    pub profile: Profile,
    pub flags: Flags,
    pub slci: SlciConfig,
    pub loss: LossConfig,
    pub sr_map: SrMap,
    pub(crate) coarse: Network,
    pub(crate) fine: Network,
}

/// Outputs of a full forward pass.
#[derive(Debug, Clone)]
pub struct Inference {
    pub coarse: CoarseOutput,
    pub fine: ScoreMap,
    pub saliency: SaliencyMap,
}

impl DiscModel {
    /// Fresh model; weights drawn from the init sub-stream of `seed`.
    pub fn new(
        profile: Profile,
        flags: Flags,
        slci: SlciConfig,
        loss: LossConfig,
        sr_map: SrMap,
        init: Init,
        seed: u64,
    ) -> Result<Self> {
        profile.validate(flags.coarse_channels(), flags.fine_channels())?;
        let mut rng = stream_rng(seed, STREAM_INIT);
        let coarse = Network::init(profile.coarse_spec(flags.coarse_channels()), init, &mut rng)?;
        let fine = Network::init(profile.fine_spec(flags.fine_channels()), init, &mut rng)?;
        Self::from_parts(profile, flags, slci, loss, sr_map, coarse, fine)
    }

    pub fn from_parts(
        profile: Profile,
        flags: Flags,
        slci: SlciConfig,
        loss: LossConfig,
        sr_map: SrMap,
        coarse: Network,
        fine: Network,
    ) -> Result<Self> {
        profile.validate(flags.coarse_channels(), flags.fine_channels())?;
        if *coarse.spec() != profile.coarse_spec(flags.coarse_channels())
            || *fine.spec() != profile.fine_spec(flags.fine_channels())
        {
            return Err(DiscError::Shape("network layout does not match profile and flags".into()));
        }
        if sr_map.side() != profile.input_side() {
            return Err(DiscError::Shape(format!(
                "SR map side {} differs from input side {}",
                sr_map.side(),
                profile.input_side()
            )));
        }
        Ok(DiscModel {
            profile,
            flags,
            slci,
            loss,
            sr_map,
            coarse,
            fine,
        })
    }

    pub fn coarse(&self) -> &Network {
        &self.coarse
    }

    pub fn fine(&self) -> &Network {
        &self.fine
    }

    pub fn coarse_mut(&mut self) -> &mut Network {
        &mut self.coarse
    }

    pub fn fine_mut(&mut self) -> &mut Network {
        &mut self.fine
    }

    fn sr(&self) -> Option<&SrMap> {
        self.flags.use_sr.then_some(&self.sr_map)
    }

    pub fn prepare(&self, image: &RgbImage) -> Result<PreparedImage> {
        let side = self.profile.input_side();
        let image = image.resize_bilinear(side, side);
        let coarse_input = assemble_coarse_input(&image, self.sr(), side)?;
        let slci = if self.flags.use_slci {
            let cs = self.profile.coarse_side();
            Some(SlciContext::build(&image.resize_bilinear(cs, cs), &self.slci)?)
        } else {
            None
        };
        Ok(PreparedImage {
            image,
            coarse_input,
            slci,
        })
    }

    pub fn coarse_output(&self, prepared: &PreparedImage) -> Result<CoarseOutput> {
        coarse_forward(&self.coarse, &prepared.coarse_input, prepared.slci.as_ref())
    }

    /// Guidance channel in `[0, 1]` at coarse resolution, or constant 0.5 when disabled.
    pub fn guidance(&self, refined: &ScoreMap) -> Grid<f64> {
        if self.flags.use_guidance {
            refined.map(|&s| (self.loss.signed_score(s).clamp(-1.0, 1.0) + 1.0) / 2.0)
        } else {
            Grid::filled(refined.height(), refined.width(), 0.5)
        }
    }

    pub fn fine_input(&self, prepared: &PreparedImage, refined: &ScoreMap) -> Result<Tensor> {
        let side = self.profile.input_side();
        assemble_fine_input(&prepared.image, self.sr(), &self.guidance(refined), side)
    }

    /// Signed scores mapped to 0–255.
    pub fn normalize(&self, scores: &ScoreMap) -> SaliencyMap {
        normalize_output(&scores.map(|&s| self.loss.signed_score(s)))
    }

    pub fn infer_full(&self, image: &RgbImage) -> Result<Inference> {
        let prepared = self.prepare(image)?;
        let coarse = self.coarse_output(&prepared)?;
        let fine = fine_forward(&self.fine, &self.fine_input(&prepared, &coarse.refined)?)?;
        let saliency = self.normalize(&fine);
        Ok(Inference {
            coarse,
            fine,
            saliency,
        })
    }
}

/// Normalized fine saliency map of `image`.
pub fn disc_infer(model: &DiscModel, image: &RgbImage) -> Result<SaliencyMap> {
    Ok(model.infer_full(image)?.saliency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossVariant;
    use crate::model::network::LayerSpec;
    use crate::nn::{conv2d_forward, fully_connected_forward, lrn_forward, maxpool_forward, relu_forward};
    use crate::superpixel::{segment, Segmentation};
    use proptest::prelude::*;

    fn desk_model(flags: Flags, seed: u64) -> DiscModel {
        let p = Profile::Desk;
        let sr = SrMap::new(Grid::from_fn(64, 64, |y, x| ((x + y) as f64 / 126.0).min(1.0))).unwrap();
        let slci = SlciConfig {
            n_target: p.default_superpixels(),
            ..SlciConfig::default()
        };
        DiscModel::new(p, flags, slci, LossConfig::default(), sr, Init::FanIn, seed).unwrap()
    }

    fn test_image(side: usize) -> RgbImage {
        RgbImage::from_fn(side, side, |y, x| {
            let inside = (x as f64 - 30.0).powi(2) + (y as f64 - 28.0).powi(2) < 200.0;
            if inside {
                [0.9, 0.7, 0.3]
            } else {
                [0.2 + 0.002 * x as f64, 0.3, 0.25]
            }
        })
    }

    /// Layer-by-layer evaluation through the public primitives.
    fn serial_reference(net: &Network, input: &Tensor) -> Tensor {
        let mut x = input.clone();
        let mut p = net.params().iter();
        for layer in &net.spec().layers {
            x = match *layer {
                LayerSpec::Conv { stride, pad, .. } => {
                    let (w, b) = (p.next().unwrap(), p.next().unwrap());
                    conv2d_forward(&x, &w.tensor, &b.tensor, stride, pad).unwrap()
                }
                LayerSpec::Relu => relu_forward(&x),
                LayerSpec::MaxPool { kernel, stride, pad } => maxpool_forward(&x, kernel, stride, pad).unwrap().0,
                LayerSpec::Lrn(params) => lrn_forward(&x, &params).unwrap(),
                LayerSpec::FullyConnected { .. } => {
                    let (w, b) = (p.next().unwrap(), p.next().unwrap());
                    fully_connected_forward(&x, &w.tensor, &b.tensor).unwrap()
                }
            };
        }
        x
    }

    #[test]
    fn normalize_endpoints() {
        let m = Grid::new(1, 5, vec![-1.0, 1.0, 0.0, -5.0, 7.0]).unwrap();
        assert_eq!(normalize_output(&m).data(), &[0, 255, 128, 0, 255]);
    }

    proptest! {
        #[test]
        fn normalize_is_monotone(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let m = normalize_output(&Grid::new(1, 2, vec![lo, hi]).unwrap());
            prop_assert!(m.data()[0] <= m.data()[1]);
        }
    }

    #[test]
    fn labels_follow_tie_rule() {
        assert!(make_labels(&Mask::filled(8, 8, true), 4).values().iter().all(|&v| v == 1.0));
        assert!(make_labels(&Mask::filled(8, 8, false), 4).values().iter().all(|&v| v == -1.0));
        let checker = Mask::from_fn(8, 8, |y, x| (x + y) % 2 == 0);
        assert!(make_labels(&checker, 4).values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn coarse_without_slci_is_raw_reshape() {
        let m = desk_model(Flags { use_slci: false, ..Flags::default() }, 3);
        let prep = m.prepare(&test_image(80)).unwrap();
        assert!(prep.slci.is_none());
        let out = m.coarse_output(&prep).unwrap();
        let flat = m.coarse.forward(&prep.coarse_input).unwrap();
        assert_eq!(out.raw.data(), flat.data());
        assert_eq!(out.refined, out.raw);
        assert_eq!(out.raw.dims(), (16, 16));
    }

    #[test]
    fn coarse_with_slci_is_region_constant() {
        let m = desk_model(Flags::default(), 3);
        let prep = m.prepare(&test_image(64)).unwrap();
        let out = m.coarse_output(&prep).unwrap();
        let seg: &Segmentation = &prep.slci.as_ref().unwrap().segmentation;
        for region in seg.region_pixels() {
            let v0 = out.refined.data()[region[0]];
            assert!(region.iter().all(|&i| (out.refined.data()[i] - v0).abs() < 1e-12));
        }
        let direct = segment(&test_image(64).resize_bilinear(16, 16), 20, 10.0).unwrap();
        assert_eq!(&direct, seg);
    }

    #[test]
    fn forward_matches_serial_reference() {
        let m = desk_model(Flags::default(), 9);
        let prep = m.prepare(&test_image(64)).unwrap();
        let a = m.coarse.forward(&prep.coarse_input).unwrap();
        let b = serial_reference(&m.coarse, &prep.coarse_input);
        assert!(a.max_abs_diff(&b) < 1e-6);
        let out = m.coarse_output(&prep).unwrap();
        let fi = m.fine_input(&prep, &out.refined).unwrap();
        let f = fine_forward(&m.fine, &fi).unwrap();
        let r = serial_reference(&m.fine, &fi);
        assert!(r.data().iter().zip(f.data()).all(|(x, y)| (x - y).abs() < 1e-6));
    }

    #[test]
    fn fine_output_is_half_input() {
        let m = desk_model(Flags::default(), 1);
        let s = disc_infer(&m, &test_image(64)).unwrap();
        assert_eq!(s.dims(), (32, 32));
    }

    #[test]
    fn constant_inputs_give_constant_interior() {
        let m = desk_model(Flags::default(), 5);
        let x = Tensor::full(&[5, 64, 64], 0.4);
        let f = fine_forward(&m.fine, &x).unwrap();
        // receptive field stays clear of padding beyond 10 output pixels from the edge
        let v = *f.get(16, 16);
        for y in 10..22 {
            for xx in 10..22 {
                assert!((f.get(y, xx) - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn inference_is_deterministic_and_guidance_matters() {
        let m = desk_model(Flags::default(), 2);
        let img = test_image(64);
        assert_eq!(disc_infer(&m, &img).unwrap(), disc_infer(&m, &img).unwrap());
        let mut unguided = m.clone();
        unguided.flags.use_guidance = false;
        let prep = m.prepare(&img).unwrap();
        let out = m.coarse_output(&prep).unwrap();
        let g = unguided.guidance(&out.refined);
        assert!(g.data().iter().all(|&v| v == 0.5));
        assert_ne!(m.infer_full(&img).unwrap().fine, unguided.infer_full(&img).unwrap().fine);
    }

    #[test]
    fn every_flag_combination_runs() {
        for bits in 0..8u8 {
            let flags = Flags {
                use_slci: bits & 1 != 0,
                use_sr: bits & 2 != 0,
                use_guidance: bits & 4 != 0,
            };
            let mut m = desk_model(flags, u64::from(bits));
            m.loss.variant = if bits % 2 == 0 { LossVariant::SquaredHinge } else { LossVariant::CrossEntropy };
            let s = disc_infer(&m, &test_image(70)).unwrap();
            assert_eq!(s.len(), 32 * 32);
        }
    }

    #[test]
    fn layout_mismatch_rejected() {
        let m = desk_model(Flags::default(), 0);
        let flags = Flags { use_sr: false, ..Flags::default() };
        let r = DiscModel::from_parts(m.profile, flags, m.slci, m.loss, m.sr_map.clone(), m.coarse.clone(), m.fine.clone());
        assert!(r.is_err());
    }
}
