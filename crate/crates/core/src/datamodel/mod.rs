//! Target alphabet, montage, trial and dataset types.

pub mod codebook;
pub mod dataset;
pub mod figshare;
pub mod montage;

pub use codebook::{
    build_codebook, enumerate_fixation_combinations, luminance_at_frame, Fixation, GridOrder,
    StimulusCodebook, TargetLabel,
};
pub use dataset::{
    apply_montage, load_dataset, write_dataset, Block, Dataset, RecordedTrial, TrialEpoch,
};
pub use figshare::import_release;
pub use montage::{Channel, Montage};
