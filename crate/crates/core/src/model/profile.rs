//! Architecture presets for the two stacked networks.

use serde::{Deserialize, Serialize};

use super::network::{LayerSpec, NetworkSpec};
use crate::error::{DiscError, Result};
use crate::nn::LrnParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 256-pixel input, 64×64 coarse map, 128×128 fine map.
    Full,
    /// 64-pixel input, 16×16 coarse map, 32×32 fine map, a quarter of the channels.
    Desk,
}

impl Profile {
    pub fn input_side(self) -> usize {
        match self {
            Profile::Full => 256,
            Profile::Desk => 64,
        }
    }

    pub fn coarse_side(self) -> usize {
        self.input_side() / 4
    }

    pub fn fine_side(self) -> usize {
        self.input_side() / 2
    }

    /// Superpixel count that keeps regions a few coarse pixels wide.
    pub fn default_superpixels(self) -> usize {
        match self {
            Profile::Full => 200,
            Profile::Desk => 20,
        }
    }

    pub fn coarse_spec(self, in_channels: usize) -> NetworkSpec {
        let lrn = LayerSpec::Lrn(LrnParams::default());
        let side = self.input_side();
        let (c1, c2, c3, c4, c5) = match self {
            Profile::Full => (96, 256, 384, 384, 256),
            Profile::Desk => (24, 64, 96, 96, 64),
        };
        let first = match self {
            Profile::Full => LayerSpec::conv(c1, 11, 4, 2),
            Profile::Desk => LayerSpec::conv(c1, 5, 2, 2),
        };
        let out = self.coarse_side() * self.coarse_side();
        NetworkSpec {
            name: "coarse".into(),
            input: [in_channels, side, side],
            layers: vec![
                first,
                LayerSpec::Relu,
                LayerSpec::pool(3, 2, 0),
                lrn.clone(),
                LayerSpec::conv(c2, 5, 1, 2),
                LayerSpec::Relu,
                LayerSpec::pool(3, 2, 0),
                lrn,
                LayerSpec::conv(c3, 3, 1, 1),
                LayerSpec::Relu,
                LayerSpec::conv(c4, 3, 1, 1),
                LayerSpec::Relu,
                LayerSpec::conv(c5, 3, 1, 1),
                LayerSpec::Relu,
                LayerSpec::pool(3, 2, 0),
                LayerSpec::FullyConnected { outputs: out },
            ],
        }
    }

    pub fn fine_spec(self, in_channels: usize) -> NetworkSpec {
        let lrn = LayerSpec::Lrn(LrnParams::default());
        let side = self.input_side();
        // desk keeps the receptive field a similar fraction of the input as the full layout
        let (c1, c, k) = match self {
            Profile::Full => (96, 64, 3),
            Profile::Desk => (24, 16, 1),
        };
        let mut layers = vec![
            LayerSpec::conv(c1, 5, 2, 2),
            LayerSpec::Relu,
            LayerSpec::pool(3, 1, 1),
            lrn.clone(),
            LayerSpec::conv(c, 3, 1, 1),
            LayerSpec::Relu,
            LayerSpec::pool(3, 1, 1),
            lrn,
        ];
        for _ in 0..5 {
            layers.push(LayerSpec::conv(c, k, 1, k / 2));
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::conv(1, 1, 1, 0));
        NetworkSpec {
            name: "fine".into(),
            input: [in_channels, side, side],
            layers,
        }
    }

    /// Checks that both stacks produce the advertised map sizes.
    pub fn validate(self, coarse_channels: usize, fine_channels: usize) -> Result<()> {
        let coarse = self.coarse_spec(coarse_channels).output_shape()?;
        let want = vec![self.coarse_side() * self.coarse_side()];
        if coarse != want {
            return Err(DiscError::Shape(format!("coarse stack ends at {coarse:?}, want {want:?}")));
        }
        let fine = self.fine_spec(fine_channels).output_shape()?;
        let want = vec![1, self.fine_side(), self.fine_side()];
        if fine != want {
            return Err(DiscError::Shape(format!("fine stack ends at {fine:?}, want {want:?}")));
        }
        Ok(())
    }
}
