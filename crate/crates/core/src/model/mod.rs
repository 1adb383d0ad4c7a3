//! The stacked coarse and fine networks: layouts, inference, training and persistence.

mod checkpoint;
mod network;
mod pipeline;
mod profile;
mod sr;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT};
pub use network::{ForwardTrace, Init, LayerSpec, NamedTensor, Network, NetworkSpec};
pub use pipeline::{
    coarse_forward, disc_infer, fine_forward, make_labels, normalize_output, stream_rng, CoarseOutput, DiscModel,
    Flags, Inference, PreparedImage, STREAM_INIT, STREAM_ORDER,
};
pub use profile::Profile;
pub use sr::{build_sr_map, SrMap};
pub use train::{
    fine_tune, split_coarse_epochs, train_coarse, train_fine, EpochLog, FineTuneConfig, SgdConfig, TrainContext,
    STAGE_COARSE_PLAIN, STAGE_COARSE_SLCI, STAGE_FINE, STAGE_TUNE_COARSE, STAGE_TUNE_FINE,
};
