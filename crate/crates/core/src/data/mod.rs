//! Dataset ingestion, preprocessing, splits, sub-sequence sampling, batching
//! and the procedural synthetic dataset.
//!
//! A preprocessed video is a `(c, T, H, W)` tensor in `[-1, 1]`; a batch of
//! clips is `(B, c, 16, H, W)`.

mod batch;
mod io;
mod preprocess;
mod split;
mod synthetic;

pub use batch::{Batch, BatchIterator};
pub use io::{load_dataset, read_video, save_dataset, save_synthetic_dataset, write_video, DatasetManifest, VideoSidecar, VIDEO_MAGIC};
pub use preprocess::{area_resample_weights, preprocess, RawVideo};
pub use split::{split_bair, split_kth, split_synthetic, split_ucf101, DatasetKind, Splits, UCF101_VAL_SEED};
pub use synthetic::{synthesize_dataset, Rect, SyntheticClip, SyntheticParams, SYNTHETIC_SIZE};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Clip length used throughout.
pub const CLIP_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Train,
    Eval,
}

/// A preprocessed video and its metadata.
#[derive(Clone, Debug)]
pub struct Video {
    /// `(c, T, H, W)` in `[-1, 1]`.
    pub frames: Tensor<f32>,
    pub sidecar: VideoSidecar,
}

impl Video {
    pub fn len(&self) -> usize {
        self.frames.dim(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.frames.dim(0)
    }
}

/// A ground-truth clip with its key frames. The key frames are views of the
/// clip's first and last frames, so they always agree with it.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTriple {
    /// `(c, 16, H, W)`.
    pub clip: Tensor<f32>,
}

impl SampleTriple {
    pub fn new(clip: Tensor<f32>) -> Result<Self> {
        if clip.ndim() != 4 || clip.dim(1) != CLIP_LEN {
            return Err(Error::Shape(format!(
                "a sample clip must be (c, {CLIP_LEN}, H, W), got {:?}",
                clip.shape()
            )));
        }
        Ok(SampleTriple { clip })
    }

    /// `(c, 1, H, W)`.
    pub fn x_s(&self) -> Tensor<f32> {
        self.clip.narrow(1, 0, 1)
    }

    pub fn x_e(&self) -> Tensor<f32> {
        self.clip.narrow(1, CLIP_LEN - 1, 1)
    }
}

/// Start offset of the 16-frame window: uniform in training, centred in evaluation.
pub fn subsequence_offset(len: usize, mode: SampleMode, rng: &mut impl Rng) -> Result<usize> {
    if len < CLIP_LEN {
        return Err(Error::Dataset(format!(
            "video has {len} frames, need at least {CLIP_LEN}"
        )));
    }
    Ok(match mode {
        SampleMode::Train => rng.random_range(0..=len - CLIP_LEN),
        SampleMode::Eval => (len - CLIP_LEN) / 2,
    })
}

pub fn sample_subsequence(video: &Video, mode: SampleMode, rng: &mut impl Rng) -> Result<SampleTriple> {
    let off = subsequence_offset(video.len(), mode, rng)?;
    SampleTriple::new(video.frames.narrow(1, off, CLIP_LEN))
}

/// A set of preprocessed videos with their split assignment.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub videos: Vec<Video>,
    pub splits: Splits,
}

impl Dataset {
    pub fn channels(&self) -> usize {
        self.manifest.channels
    }

    pub fn split_indices(&self, mode: Split) -> &[usize] {
        match mode {
            Split::Train => &self.splits.train,
            Split::Val => &self.splits.val,
            Split::Test => &self.splits.test,
        }
    }

    /// Centre sub-sequences of every video in a split, in index order.
    pub fn eval_samples(&self, split: Split) -> Result<Vec<SampleTriple>> {
        // Evaluation offsets are deterministic; the generator is never consulted.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        self.split_indices(split)
            .iter()
            .map(|&i| sample_subsequence(&self.videos[i], SampleMode::Eval, &mut rng))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}
