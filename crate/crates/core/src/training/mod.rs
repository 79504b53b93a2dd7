//! Adversarial training: losses, the alternating update, checkpoints and
//! checkpoint selection.

mod adam;
mod checkpoint;
mod losses;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    config_hash, read_checkpoint_manifest, Checkpoint, CheckpointManifest, DType, RngStreams, TensorEntry,
    CHECKPOINT_FORMAT_VERSION, CHECKPOINT_MAGIC,
};
pub use losses::{
    discriminator_loss, discriminator_loss_from_scores, generator_loss, generator_loss_from_scores, gradient_penalty,
    neg_log, penalized_logits, sample_frame_indices, select_frames, LOG_CLAMP,
};

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{backward, Var};
use crate::data::{Batch, BatchIterator, Dataset, SampleMode, Split};
use crate::error::{Error, Result};
use crate::eval::{frechet_on_samples, RandomConvEmbedder};
use crate::model::{Model, ModelConfig, Variant};
use crate::nn::{apply_buffer_updates, Ctx, Mode};
use crate::tensor::Tensor;

/// Optimizer and schedule settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub checkpoint_every: u64,
    pub penalty_coeff: f64,
    pub seed: u64,
    /// Validation pairs used for the checkpoint metric (at least 2).
    pub val_pairs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            variant: Variant::Full,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            batch_size: 32,
            total_steps: 20_000,
            checkpoint_every: 5_000,
            penalty_coeff: 0.1,
            seed: 0,
            val_pairs: 32,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie in (0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if !(self.penalty_coeff > 0.0 && self.penalty_coeff.is_finite()) {
            return bad("penalty_coeff must be positive");
        }
        if self.batch_size == 0 || self.total_steps == 0 || self.checkpoint_every == 0 {
            return bad("batch_size, total_steps and checkpoint_every must be positive");
        }
        if self.total_steps % self.checkpoint_every != 0 {
            return Err(Error::Config(format!(
                "checkpoint_every ({}) must divide total_steps ({})",
                self.checkpoint_every, self.total_steps
            )));
        }
        if self.val_pairs < 2 {
            return bad("val_pairs must be at least 2");
        }
        Ok(())
    }

    pub fn num_checkpoints(&self) -> u64 {
        self.total_steps / self.checkpoint_every
    }
}

/// Scalars logged for one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub loss_dv: f64,
    pub loss_di: f64,
    pub loss_g: f64,
    pub penalty_dv: f64,
    pub penalty_di: f64,
}

impl StepLog {
    fn check(&self) -> Result<()> {
        let vals = [
            ("L(D_V)", self.loss_dv),
            ("L(D_I)", self.loss_di),
            ("L(G)", self.loss_g),
            ("video penalty", self.penalty_dv),
            ("image penalty", self.penalty_di),
        ];
        for (name, v) in vals {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{name} at step {}", self.step)));
            }
        }
        Ok(())
    }
}

/// A saved checkpoint and its validation score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub step: u64,
    pub path: PathBuf,
    /// Validation Fréchet distance under the random-feature embedder.
    pub metric: f64,
    /// Mean generator loss over the steps since the previous checkpoint.
    pub loss_g: f64,
}

/// Argmin of the stored metric; ties go to the earliest step.
pub fn select_checkpoint(records: &[CheckpointRecord]) -> Result<&CheckpointRecord> {
    let mut best: Option<&CheckpointRecord> = None;
    for r in records {
        best = match best {
            Some(b) if b.metric < r.metric || (b.metric == r.metric && b.step <= r.step) => Some(b),
            _ => Some(r),
        };
    }
    best.ok_or_else(|| Error::Checkpoint("no checkpoint records to select from".into()))
}

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_FRAME: u64 = 3;
const VALIDATION_SEED_OFFSET: u64 = 0x5EED_0F0A;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Owns every piece of mutable training state.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model<f32>,
    pub gen_opt: Adam,
    pub disc_opt: Adam,
    pub rng: RngStreams,
    pub iterator: BatchIterator,
    /// Number of completed steps.
    pub step: u64,
    /// Copied into every checkpoint.
    pub provenance: Option<serde_json::Value>,
}

impl Trainer {
    pub fn new(model_config: &ModelConfig, config: TrainConfig, dataset: &Dataset) -> Result<Self> {
        config.validate()?;
        model_config.validate()?;
        if model_config.variant != config.variant {
            return Err(Error::Config(format!(
                "model variant {} differs from training variant {}",
                model_config.variant, config.variant
            )));
        }
        check_dataset(model_config, dataset)?;
        if dataset.split_indices(Split::Val).len() < 2 {
            return Err(Error::Dataset("validation split needs at least 2 videos".into()));
        }
        let model = Model::new(model_config, &mut stream(config.seed, STREAM_INIT))?;
        let iterator = BatchIterator::new(
            dataset.split_indices(Split::Train),
            config.batch_size,
            SampleMode::Train,
            stream(config.seed, STREAM_SHUFFLE),
        )?;
        Ok(Trainer {
            gen_opt: Adam::new(config.adam()),
            disc_opt: Adam::new(config.adam()),
            rng: RngStreams {
                noise: stream(config.seed, STREAM_NOISE),
                frame: stream(config.seed, STREAM_FRAME),
            },
            model,
            iterator,
            config,
            step: 0,
            provenance: None,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Self {
        Trainer {
            config: ckpt.train_config,
            model: ckpt.model,
            gen_opt: ckpt.gen_opt,
            disc_opt: ckpt.disc_opt,
            rng: ckpt.rng,
            iterator: ckpt.iterator,
            step: ckpt.step,
            provenance: ckpt.provenance,
        }
    }

    pub fn checkpoint(&self, metric: Option<f64>) -> Checkpoint {
        Checkpoint {
            step: self.step,
            metric,
            train_config: self.config.clone(),
            model: self.model.clone(),
            gen_opt: self.gen_opt.clone(),
            disc_opt: self.disc_opt.clone(),
            rng: self.rng.clone(),
            iterator: self.iterator.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Draws the next training batch and runs one step on it.
    pub fn step_on(&mut self, dataset: &Dataset) -> Result<StepLog> {
        let batch = self
            .iterator
            .next_batch(dataset)?
            .ok_or_else(|| Error::Dataset("training iterator ran dry".into()))?;
        self.train_step(&batch)
    }

    /// One discriminator update on detached fakes, then one generator update
    /// against the updated discriminators. Nothing is modified if any loss or
    /// gradient is non-finite.
    pub fn train_step(&mut self, batch: &Batch) -> Result<StepLog> {
        let n = batch.len();
        let cfg = self.model.config().clone();
        let coeff = self.config.penalty_coeff;
        let real = Var::constant(batch.clips.clone());
        let xs = Var::constant(batch.x_s());
        let xe = Var::constant(batch.x_e());
        let mut noise_rng = self.rng.noise.clone();
        let mut frame_rng = self.rng.frame.clone();
        let u = Var::constant(Tensor::randn(&[n, cfg.noise_dim], 1.0, &mut noise_rng));

        let gctx = Ctx::new(Mode::Train, true);
        let fake = self.model.generator.generate(&gctx, &xs, &xe, &u, false)?.clip;

        // Discriminator step.
        let mut disc = self.model.discriminators.clone();
        let dctx = Ctx::new(Mode::Train, true);
        let fake_d = fake.detach();
        let idx = sample_frame_indices(n, cfg.frames, &mut frame_rng);
        let real_f = select_frames(&real, &idx)?;
        let fake_f = select_frames(&fake_d, &idx)?;
        let (rv, prv) = penalized_logits(|x| disc.video.logits(&dctx, x), &real, coeff)?;
        let (fv, pfv) = penalized_logits(|x| disc.video.logits(&dctx, x), &fake_d, coeff)?;
        let (ri, pri) = penalized_logits(|x| disc.image.logits(&dctx, x), &real_f, coeff)?;
        let (fi, pfi) = penalized_logits(|x| disc.image.logits(&dctx, x), &fake_f, coeff)?;
        let loss_dv = discriminator_loss(&rv, &fv);
        let loss_di = discriminator_loss(&ri, &fi);
        let pen_dv = prv.add(&pfv);
        let pen_di = pri.add(&pfi);
        let total_d = loss_dv.add(&loss_di).add(&pen_dv).add(&pen_di);
        let dgrads = dctx.param_grads(&backward(&total_d, false));
        let mut disc_opt = self.disc_opt.clone();
        disc_opt.update(&mut disc, &dgrads)?;

        // Generator step against the updated discriminators.
        let frozen = Ctx::new(Mode::Train, false);
        let idx = sample_frame_indices(n, cfg.frames, &mut frame_rng);
        let gv = disc.video.logits(&frozen, &fake)?;
        let gi = disc.image.logits(&frozen, &select_frames(&fake, &idx)?)?;
        let loss_g = generator_loss(&gv, &gi);

        let log = StepLog {
            step: self.step,
            loss_dv: loss_dv.value().item() as f64,
            loss_di: loss_di.value().item() as f64,
            loss_g: loss_g.value().item() as f64,
            penalty_dv: pen_dv.value().item() as f64,
            penalty_di: pen_di.value().item() as f64,
        };
        log.check()?;

        let ggrads = gctx.param_grads(&backward(&loss_g, false));
        let mut generator = self.model.generator.clone();
        let mut gen_opt = self.gen_opt.clone();
        gen_opt.update(&mut generator, &ggrads)?;
        apply_buffer_updates(&mut generator, gctx.take_buffer_updates());

        self.model.generator = generator;
        self.model.discriminators = disc;
        self.gen_opt = gen_opt;
        self.disc_opt = disc_opt;
        self.rng = RngStreams {
            noise: noise_rng,
            frame: frame_rng,
        };
        self.step += 1;
        Ok(log)
    }
}

fn check_dataset(cfg: &ModelConfig, dataset: &Dataset) -> Result<()> {
    if dataset.channels() != cfg.channels {
        return Err(Error::Config(format!(
            "dataset has {} channels but the model expects {}",
            dataset.channels(),
            cfg.channels
        )));
    }
    if let Some(v) = dataset.videos.first() {
        let s = v.frames.shape();
        if s[2] != cfg.height || s[3] != cfg.width {
            return Err(Error::Config(format!(
                "dataset frames are {}x{} but the model expects {}x{}",
                s[2], s[3], cfg.height, cfg.width
            )));
        }
    }
    Ok(())
}

/// Validation Fréchet distance of the current generator: one clip per
/// validation pair, random-feature embedder, fixed noise seed.
pub fn validation_metric(trainer: &Trainer, dataset: &Dataset) -> Result<f64> {
    let mut samples = dataset.eval_samples(Split::Val)?;
    samples.truncate(trainer.config.val_pairs);
    if samples.len() < 2 {
        return Err(Error::Dataset("validation split needs at least 2 videos".into()));
    }
    frechet_on_samples(
        &trainer.model.generator,
        &samples,
        &RandomConvEmbedder::default(),
        trainer.config.seed ^ VALIDATION_SEED_OFFSET,
    )
}

pub fn checkpoint_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join("checkpoints").join(format!("step_{step:07}.ckpt"))
}

pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const RECORDS_FILE: &str = "checkpoints.json";

pub fn read_records(out_dir: &Path) -> Result<Vec<CheckpointRecord>> {
    let path = out_dir.join(RECORDS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Runs the trainer up to `total_steps`, appending one JSON line per step to
/// `train_log.jsonl`, and at every checkpoint boundary saving the full state
/// and its validation metric. Resumed trainers keep the records written so
/// far. `on_step` sees each log as it is produced.
pub fn train(
    trainer: &mut Trainer,
    dataset: &Dataset,
    out_dir: &Path,
    mut on_step: impl FnMut(&StepLog),
) -> Result<Vec<CheckpointRecord>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut records: Vec<CheckpointRecord> = read_records(out_dir)?
        .into_iter()
        .filter(|r| r.step <= trainer.step)
        .collect();
    let log_path = out_dir.join(TRAIN_LOG_FILE);
    let mut log_file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let mut window = Vec::new();
    while trainer.step < trainer.config.total_steps {
        let log = trainer.step_on(dataset)?;
        writeln!(log_file, "{}", serde_json::to_string(&log)?).map_err(|e| Error::io(&log_path, e))?;
        on_step(&log);
        window.push(log.loss_g);
        if trainer.step % trainer.config.checkpoint_every == 0 {
            let metric = validation_metric(trainer, dataset)?;
            let path = checkpoint_path(out_dir, trainer.step);
            trainer.checkpoint(Some(metric)).save(&path)?;
            records.push(CheckpointRecord {
                step: trainer.step,
                path,
                metric,
                loss_g: window.iter().sum::<f64>() / window.len() as f64,
            });
            window.clear();
            let rec_path = out_dir.join(RECORDS_FILE);
            std::fs::write(&rec_path, serde_json::to_string_pretty(&records)?).map_err(|e| Error::io(&rec_path, e))?;
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{save_dataset, split_synthetic, synthesize_dataset, DatasetManifest, DatasetKind, VideoSidecar};
    use crate::nn::Module;

    pub(crate) fn tiny_dataset(dir: &Path, count: usize) -> Dataset {
        let clips = synthesize_dataset(3, count, 20);
        let videos: Vec<_> = clips.into_iter().map(|c| (c.raw, VideoSidecar::default())).collect();
        let manifest = DatasetManifest {
            format_version: 1,
            name: "tiny".into(),
            kind: DatasetKind::Synthetic,
            channels: 3,
            frame_size: 64,
            count,
            seed: Some(3),
        };
        save_dataset(dir, &manifest, &videos, &split_synthetic(count)).unwrap();
        crate::data::load_dataset(dir).unwrap()
    }

    fn tiny_config(variant: Variant) -> (ModelConfig, TrainConfig) {
        let mut m = ModelConfig::scaled(variant, 3, 32);
        m.noise_dim = 4;
        let t = TrainConfig {
            variant,
            batch_size: 2,
            total_steps: 2,
            checkpoint_every: 1,
            val_pairs: 2,
            seed: 9,
            ..TrainConfig::default()
        };
        (m, t)
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig {
            checkpoint_every: 3000,
            ..TrainConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let reference = TrainConfig {
            total_steps: 500_000,
            checkpoint_every: 5000,
            ..TrainConfig::default()
        };
        assert_eq!(reference.num_checkpoints(), 100);
        let desk = TrainConfig {
            checkpoint_every: 1000,
            ..TrainConfig::default()
        };
        assert_eq!(desk.num_checkpoints(), 20);
    }

    fn record(step: u64, metric: f64) -> CheckpointRecord {
        CheckpointRecord {
            step,
            path: PathBuf::new(),
            metric,
            loss_g: 0.0,
        }
    }

    #[test]
    fn selection_rules() {
        let r = [record(1, 300.0), record(2, 150.0), record(3, 200.0)];
        assert_eq!(select_checkpoint(&r).unwrap().step, 2);
        let r = [record(1, 5.0), record(2, 5.0), record(3, 5.0)];
        assert_eq!(select_checkpoint(&r).unwrap().step, 1);
        assert_eq!(select_checkpoint(&r[2..]).unwrap().step, 3);
        assert!(select_checkpoint(&[]).is_err());
    }

    #[test]
    fn step_updates_both_partitions() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(dir.path(), 16);
        let (m, t) = tiny_config(Variant::Full);
        let mut tr = Trainer::new(&m, t, &ds).unwrap();
        let before = tr.model.clone();
        let log = tr.step_on(&ds).unwrap();
        assert_eq!(log.step, 0);
        assert!(log.loss_dv > 0.0 && log.loss_di > 0.0 && log.loss_g > 0.0);
        assert!(log.penalty_dv >= 0.0 && log.penalty_di >= 0.0);
        let changed = |a: &dyn Module<f32>, b: &dyn Module<f32>| {
            a.named_tensors().iter().zip(b.named_tensors()).any(|(x, y)| x.1 != y.1)
        };
        assert!(changed(&before.generator, &tr.model.generator));
        assert!(changed(&before.discriminators, &tr.model.discriminators));
        assert_eq!(tr.gen_opt.step, 1);
        assert_eq!(tr.disc_opt.step, 1);
        let gen_names: Vec<String> = tr.gen_opt.m.keys().cloned().collect();
        assert!(gen_names.iter().all(|n| !n.starts_with("dv.") && !n.starts_with("di.")));
        assert!(tr.disc_opt.m.keys().all(|n| n.starts_with("dv.") || n.starts_with("di.")));
    }

    #[test]
    fn mismatched_variant_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(dir.path(), 16);
        let (m, mut t) = tiny_config(Variant::Full);
        t.variant = Variant::Naive;
        assert!(matches!(Trainer::new(&m, t, &ds), Err(Error::Config(_))));
    }

    #[test]
    fn checkpoint_round_trip_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(&dir.path().join("data"), 16);
        let (m, t) = tiny_config(Variant::NoFusion);
        let mut straight = Trainer::new(&m, t.clone(), &ds).unwrap();
        let out = dir.path().join("run");
        let recs = train(&mut straight, &ds, &out, |_| {}).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.metric.is_finite() && r.path.exists()));
        let lines = std::fs::read_to_string(out.join(TRAIN_LOG_FILE)).unwrap();
        assert_eq!(lines.lines().count(), 2);

        let first = Checkpoint::load(&recs[0].path).unwrap();
        let bytes = std::fs::read(&recs[0].path).unwrap();
        assert_eq!(first.to_bytes().unwrap(), bytes);
        assert_eq!(first.step, 1);
        let mut resumed = Trainer::from_checkpoint(first);
        resumed.step_on(&ds).unwrap();
        assert_eq!(resumed.model.named_tensors(), straight.model.named_tensors());
        assert_eq!(resumed.gen_opt, straight.gen_opt);
        assert_eq!(resumed.rng, straight.rng);

        let manifest = read_checkpoint_manifest(&recs[1].path).unwrap();
        assert_eq!(manifest.config_hash, config_hash(&m, &t));
        let mut corrupted = bytes.clone();
        corrupted[3] ^= 1;
        assert!(Checkpoint::from_bytes(&corrupted).is_err());
    }
}
