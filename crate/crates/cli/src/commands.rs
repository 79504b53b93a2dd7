use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use inbetween::data::{load_dataset, save_synthetic_dataset, Dataset, SampleTriple};
use inbetween::eval::{
    evaluate_generator, probe_layer, protocol_noise, stochastic_protocol, EvalSettings, KeyFrames, MetricKind,
    RandomConvEmbedder,
};
use inbetween::render::{frame_strip, stack_rows, RgbImage};
use inbetween::tensor::Tensor;
use inbetween::training::{select_checkpoint, train, Checkpoint, Trainer};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{parse_layers, resolve_out, sha256_hex, write_json, Conflict, RunConfig};
use crate::error::{io_err, CliError, CliResult};

/// A resolved configuration plus what is needed to describe the run.
pub struct Invocation {
    pub command: &'static str,
    pub config: RunConfig,
    pub conflicts: Vec<Conflict>,
}

impl Invocation {
    pub fn provenance(&self) -> Value {
        json!({
            "command": self.command,
            "run_config": self.config,
            "run_config_hash": self.config.hash(),
            "conflicts": self.conflicts,
        })
    }

    fn out_dir(&self) -> CliResult<PathBuf> {
        let out = resolve_out(self.config.out.as_deref(), self.command);
        std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
        Ok(out)
    }
}

pub fn write_png(path: &Path, img: &RgbImage) -> CliResult<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let to_err = |e: png::EncodingError| CliError::runtime(format!("{}: {e}", path.display()));
    let mut w = enc.write_header().map_err(to_err)?;
    w.write_image_data(&img.data).map_err(to_err)?;
    w.finish().map_err(to_err)
}

fn tensor_bytes(t: &Tensor<f32>) -> Vec<u8> {
    t.data().iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn make_synthetic(inv: &Invocation) -> CliResult<()> {
    let cfg = &inv.config;
    let out = inv.out_dir()?;
    let manifest = save_synthetic_dataset(&out, cfg.seed, cfg.synthetic.count, cfg.synthetic.length)?;
    eprintln!("wrote {} synthetic videos to {}", manifest.count, out.display());
    Ok(())
}

pub fn train_cmd(inv: &Invocation) -> CliResult<()> {
    let cfg = &inv.config;
    let dataset = load_dataset(cfg.require_dataset()?)?;
    let out = inv.out_dir()?;
    let mut trainer = match &cfg.checkpoint {
        Some(path) => {
            let t = Trainer::from_checkpoint(Checkpoint::load(path)?);
            eprintln!("resuming from step {} of {}", t.step, path.display());
            t
        }
        None => {
            let model = cfg.model_config(dataset.channels(), dataset.manifest.frame_size)?;
            Trainer::new(&model, cfg.train_config(), &dataset)?
        }
    };
    trainer.provenance = Some(inv.provenance());
    write_json(&out.join("run_config.json"), &inv.provenance())?;
    let total = trainer.config.total_steps;
    let every = (total / 100).max(1);
    let records = train(&mut trainer, &dataset, &out, |log| {
        if log.step % every == 0 || log.step + 1 == total {
            eprintln!(
                "step {:>7}/{total}  L(D_V) {:.4}  L(D_I) {:.4}  L(G) {:.4}  pen {:.4}/{:.4}",
                log.step, log.loss_dv, log.loss_di, log.loss_g, log.penalty_dv, log.penalty_di
            );
        }
    })?;
    let best = select_checkpoint(&records)?;
    write_json(&out.join("selected.json"), best)?;
    println!("selected checkpoint: {} (validation frechet {:.4})", best.path.display(), best.metric);
    Ok(())
}

struct Loaded {
    checkpoint: Checkpoint,
    checkpoint_id: String,
    dataset: Dataset,
}

fn load_inputs(cfg: &RunConfig) -> CliResult<Loaded> {
    let path = cfg.require_checkpoint()?;
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let checkpoint = Checkpoint::from_bytes(&bytes)?;
    let dataset = load_dataset(cfg.require_dataset()?)?;
    let m = checkpoint.model.config();
    if dataset.channels() != m.channels || dataset.manifest.frame_size != m.height {
        return Err(CliError::validation(format!(
            "dataset frames ({} channels, {} px) do not match the checkpoint model ({} channels, {} px)",
            dataset.channels(),
            dataset.manifest.frame_size,
            m.channels,
            m.height
        )));
    }
    Ok(Loaded {
        checkpoint,
        checkpoint_id: sha256_hex(&bytes)[..16].to_string(),
        dataset,
    })
}

fn eval_pairs(cfg: &RunConfig, dataset: &Dataset, limit: usize) -> CliResult<Vec<SampleTriple>> {
    let mut samples = dataset.eval_samples(cfg.split()?)?;
    if limit > 0 {
        samples.truncate(limit);
    }
    if samples.is_empty() {
        return Err(CliError::validation(format!("split `{}` has no videos", cfg.eval.split)));
    }
    Ok(samples)
}

#[derive(Serialize)]
struct PairRecord {
    pair: usize,
    dataset_index: usize,
    u_hash: String,
    noise_shape: [usize; 2],
    tensor_file: String,
    tensor_shape: Vec<usize>,
    tensor_sha256: String,
    strips: Vec<String>,
}

pub fn generate(inv: &Invocation) -> CliResult<()> {
    let cfg = &inv.config;
    if cfg.eval.n_samples == 0 {
        return Err(CliError::validation("eval.n_samples must be positive"));
    }
    let loaded = load_inputs(cfg)?;
    let out = inv.out_dir()?;
    let split = cfg.split()?;
    let samples = eval_pairs(cfg, &loaded.dataset, cfg.generate.pairs)?;
    let keys: Vec<KeyFrames> = samples.iter().map(KeyFrames::from).collect();
    let gen = &loaded.checkpoint.model.generator;
    let results = stochastic_protocol(gen, &keys, cfg.eval.n_samples, cfg.seed)?;
    let frames = gen.config.frames;
    let mut pairs = Vec::new();
    for (p, (res, truth)) in results.iter().zip(&samples).enumerate() {
        let dir = out.join(format!("pair_{p:03}"));
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let truth_row = frame_strip(&truth.clip, 0..frames)?;
        let mut strips = Vec::new();
        for (k, clip) in res.clips.iter().enumerate() {
            let img = stack_rows(&[frame_strip(clip, 0..frames)?, truth_row.clone()])?;
            let name = format!("sample_{k:03}.png");
            write_png(&dir.join(&name), &img)?;
            strips.push(format!("pair_{p:03}/{name}"));
        }
        let stacked = inbetween::eval::stack_clips(&res.clips);
        let bytes = tensor_bytes(&stacked);
        let tensor_file = format!("pair_{p:03}/samples.f32");
        std::fs::write(out.join(&tensor_file), &bytes).map_err(|e| io_err(&out.join(&tensor_file), e))?;
        pairs.push(PairRecord {
            pair: p,
            dataset_index: loaded.dataset.split_indices(split)[p],
            u_hash: sha256_hex(&tensor_bytes(&res.noise)),
            noise_shape: [res.noise.dim(0), res.noise.dim(1)],
            tensor_file,
            tensor_shape: stacked.shape().to_vec(),
            tensor_sha256: sha256_hex(&bytes),
            strips,
        });
    }
    let meta = json!({
        "seed": cfg.seed,
        "checkpoint": cfg.checkpoint,
        "checkpoint_id": loaded.checkpoint_id,
        "checkpoint_step": loaded.checkpoint.step,
        "split": cfg.eval.split,
        "n_samples": cfg.eval.n_samples,
        "tensor_format": "little-endian f32, (n_samples, c, T, H, W), values in [-1, 1]",
        "strip_layout": "generated frames 0..T left to right above the ground-truth row",
        "pairs": pairs,
        "provenance": inv.provenance(),
    });
    write_json(&out.join("metadata.json"), &meta)?;
    println!("wrote {} clips for {} pairs to {}", cfg.eval.n_samples * pairs.len(), pairs.len(), out.display());
    Ok(())
}

pub fn evaluate(inv: &Invocation) -> CliResult<()> {
    let cfg = &inv.config;
    let metrics = MetricKind::parse_list(&cfg.eval.metrics.join(","))?;
    if metrics.contains(&MetricKind::Diversity) && cfg.eval.n_samples < 2 {
        return Err(CliError::validation("diversity needs eval.n_samples >= 2"));
    }
    let loaded = load_inputs(cfg)?;
    let out = inv.out_dir()?;
    let samples = eval_pairs(cfg, &loaded.dataset, cfg.eval.pairs)?;
    let settings = EvalSettings {
        n_samples: cfg.eval.n_samples,
        seed: cfg.seed,
        bootstrap_resamples: cfg.eval.bootstrap_resamples,
        ci_level: cfg.eval.ci_level,
    };
    let reports = evaluate_generator(
        &loaded.checkpoint.model.generator,
        &samples,
        &metrics,
        &settings,
        &RandomConvEmbedder::default(),
    )?;
    for mut r in reports {
        r.protocol.insert("split".into(), json!(cfg.eval.split));
        r.protocol.insert("checkpoint_id".into(), json!(loaded.checkpoint_id));
        r.protocol.insert("checkpoint_step".into(), json!(loaded.checkpoint.step));
        r.protocol.insert("run_config_hash".into(), json!(cfg.config_hash_short()));
        r.protocol.insert("run_config".into(), serde_json::to_value(cfg)?);
        write_json(&out.join(format!("{}.json", r.metric)), &r)?;
        match r.ci {
            Some([lo, hi]) => println!("{}: {:.6} [{lo:.6}, {hi:.6}]", r.metric, r.value),
            None => println!("{}: {:.6}", r.metric, r.value),
        }
    }
    Ok(())
}

pub fn probe(inv: &Invocation) -> CliResult<()> {
    let cfg = &inv.config;
    let layers = parse_layers(&cfg.probe.layers)?;
    let loaded = load_inputs(cfg)?;
    let out = inv.out_dir()?;
    let samples = eval_pairs(cfg, &loaded.dataset, 0)?;
    let pair = cfg.probe.pair;
    let sample = samples.get(pair).ok_or_else(|| {
        CliError::validation(format!("probe.pair {pair} is outside the split ({} pairs)", samples.len()))
    })?;
    let gen = &loaded.checkpoint.model.generator;
    let keys = KeyFrames::from(sample);
    // Same noise as the first generated sample for this pair.
    let u = protocol_noise(cfg.seed, pair, 1, gen.config.noise_dim);
    let frames = gen.config.frames;
    let mut rows = Vec::new();
    for &l in &layers {
        let clip = probe_layer(gen, &keys, &u, l)?;
        rows.push(frame_strip(&clip, 1..frames - 1)?);
    }
    let grid = stack_rows(&rows)?;
    write_png(&out.join("probe.png"), &grid)?;
    let meta = json!({
        "layers": layers,
        "pair": pair,
        "seed": cfg.seed,
        "u_hash": sha256_hex(&tensor_bytes(&u)),
        "checkpoint_id": loaded.checkpoint_id,
        "grid": {"rows": layers.len(), "frames_per_row": frames - 2, "width": grid.width, "height": grid.height},
        "provenance": inv.provenance(),
    });
    write_json(&out.join("probe.json"), &meta)?;
    println!("wrote {}x{} probe grid to {}", grid.width, grid.height, out.join("probe.png").display());
    Ok(())
}

impl RunConfig {
    fn config_hash_short(&self) -> String {
        self.hash()[..16].to_string()
    }
}
