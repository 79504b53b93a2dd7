use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sample_subsequence, Dataset, SampleMode, SampleTriple, CLIP_LEN};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A stack of ground-truth clips, `(B, c, 16, H, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub clips: Tensor<f32>,
    /// Dataset index of each clip.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn from_samples(samples: &[SampleTriple], indices: Vec<usize>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Dataset("empty batch".into()));
        }
        let parts: Vec<Tensor<f32>> = samples
            .iter()
            .map(|s| {
                let mut shape = vec![1];
                shape.extend_from_slice(s.clip.shape());
                s.clip.reshape(&shape)
            })
            .collect();
        let refs: Vec<&Tensor<f32>> = parts.iter().collect();
        Ok(Batch {
            clips: Tensor::concat(&refs, 0),
            indices,
        })
    }

    pub fn len(&self) -> usize {
        self.clips.dim(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Start frames `(B, c, 1, H, W)`.
    pub fn x_s(&self) -> Tensor<f32> {
        self.clips.narrow(2, 0, 1)
    }

    pub fn x_e(&self) -> Tensor<f32> {
        self.clips.narrow(2, CLIP_LEN - 1, 1)
    }
}

/// Batches over one split. Training mode reshuffles every epoch and lets a
/// batch run across the epoch boundary, so every epoch visits each video
/// exactly once; evaluation mode walks the split in order and stops.
/// The whole state is serializable for checkpointing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchIterator {
    indices: Vec<usize>,
    batch_size: usize,
    mode: SampleMode,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    rng: ChaCha8Rng,
}

impl BatchIterator {
    pub fn new(indices: &[usize], batch_size: usize, mode: SampleMode, rng: ChaCha8Rng) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Dataset("cannot iterate over an empty split".into()));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let mut it = BatchIterator {
            indices: indices.to_vec(),
            batch_size,
            mode,
            order: Vec::new(),
            cursor: 0,
            epoch: 0,
            rng,
        };
        it.start_epoch();
        Ok(it)
    }

    fn start_epoch(&mut self) {
        self.order = self.indices.clone();
        if self.mode == SampleMode::Train {
            self.order.shuffle(&mut self.rng);
        }
        self.cursor = 0;
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Next batch of dataset indices, or `None` at the end of an evaluation pass.
    pub fn next_indices(&mut self) -> Option<Vec<usize>> {
        let mut out = Vec::with_capacity(self.batch_size);
        while out.len() < self.batch_size {
            if self.cursor == self.order.len() {
                if self.mode == SampleMode::Eval {
                    break;
                }
                self.epoch += 1;
                self.start_epoch();
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        (!out.is_empty()).then_some(out)
    }

    pub fn next_batch(&mut self, dataset: &Dataset) -> Result<Option<Batch>> {
        let Some(idx) = self.next_indices() else {
            return Ok(None);
        };
        let samples = idx
            .iter()
            .map(|&i| sample_subsequence(&dataset.videos[i], self.mode, &mut self.rng))
            .collect::<Result<Vec<_>>>()?;
        Batch::from_samples(&samples, idx).map(Some)
    }

    /// Rewinds an evaluation pass.
    pub fn reset(&mut self) {
        self.epoch = 0;
        self.start_epoch();
    }
}
