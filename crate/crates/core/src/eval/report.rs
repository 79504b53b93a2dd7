use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::data::SampleTriple;
use crate::error::{Error, Result};
use crate::model::Generator;

use super::embed::Embedder;
use super::metrics::{best_of_n_ssim, bootstrap_ci, diversity, frechet_distance, mean};
use super::protocol::{stack_clips, stochastic_protocol, KeyFrames, MetricReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    Frechet,
    SsimBestOfN,
    Diversity,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Frechet, MetricKind::SsimBestOfN, MetricKind::Diversity];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Frechet => "frechet",
            MetricKind::SsimBestOfN => "ssim_best_of_n",
            MetricKind::Diversity => "diversity",
        }
    }

    /// Parses a comma-separated list.
    pub fn parse_list(s: &str) -> Result<Vec<MetricKind>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let k: MetricKind = part.parse()?;
            if !out.contains(&k) {
                out.push(k);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no metrics requested".into()));
        }
        Ok(out)
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric '{s}' (expected frechet, ssim_best_of_n or diversity)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub n_samples: usize,
    pub seed: u64,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            n_samples: 100,
            seed: 0,
            bootstrap_resamples: 1000,
            ci_level: 0.95,
        }
    }
}

/// Runs the stochastic protocol once over `samples` and scores every requested
/// metric on the shared generations. The Fréchet score uses the first sample
/// of each pair and carries no interval; the per-pair metrics carry a
/// percentile bootstrap interval over pairs.
pub fn evaluate_generator(
    gen: &Generator<f32>,
    samples: &[SampleTriple],
    metrics: &[MetricKind],
    settings: &EvalSettings,
    embedder: &dyn Embedder,
) -> Result<Vec<MetricReport>> {
    if samples.is_empty() {
        return Err(Error::Dataset("no evaluation pairs".into()));
    }
    let pairs: Vec<KeyFrames> = samples.iter().map(KeyFrames::from).collect();
    let generated = stochastic_protocol(gen, &pairs, settings.n_samples, settings.seed)?;
    let mut boot_rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let base = |extra: Value| -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("n_samples".into(), json!(settings.n_samples));
        m.insert("pairs".into(), json!(samples.len()));
        m.insert("generation_seed".into(), json!(settings.seed));
        if let Value::Object(e) = extra {
            m.extend(e);
        }
        m
    };
    let mut ci = |values: &[f64]| -> Result<Option<[f64; 2]>> {
        if values.len() < 2 {
            return Ok(None);
        }
        let (lo, hi) = bootstrap_ci(values, settings.bootstrap_resamples, settings.ci_level, &mut boot_rng)?;
        Ok(Some([lo, hi]))
    };

    let mut reports = Vec::new();
    for &kind in metrics {
        let report = match kind {
            MetricKind::Frechet => {
                let first: Vec<_> = generated.iter().map(|p| p.clips[0].clone()).collect();
                let real: Vec<_> = samples.iter().map(|s| s.clip.clone()).collect();
                let v = frechet_distance(&embedder.embed(&stack_clips(&first))?, &embedder.embed(&stack_clips(&real))?)?;
                MetricReport::new(
                    kind.name(),
                    v,
                    None,
                    base(json!({"samples_per_pair_used": 1, "ci_method": "none"})),
                    Some(embedder.id()),
                    settings.seed,
                )?
            }
            MetricKind::SsimBestOfN => {
                let per_pair = generated
                    .iter()
                    .zip(samples)
                    .map(|(p, s)| best_of_n_ssim(&p.clips, &s.clip))
                    .collect::<Result<Vec<f64>>>()?;
                MetricReport::new(
                    kind.name(),
                    mean(&per_pair),
                    ci(&per_pair)?,
                    base(json!({
                        "frames": "intermediate",
                        "ci_method": "percentile_bootstrap",
                        "bootstrap_resamples": settings.bootstrap_resamples,
                        "ci_level": settings.ci_level,
                    })),
                    None,
                    settings.seed,
                )?
            }
            MetricKind::Diversity => {
                let per_pair = generated
                    .iter()
                    .map(|p| diversity(&embedder.embed(&stack_clips(&p.clips))?))
                    .collect::<Result<Vec<f64>>>()?;
                MetricReport::new(
                    kind.name(),
                    mean(&per_pair),
                    ci(&per_pair)?,
                    base(json!({
                        "distance": "cosine",
                        "ci_method": "percentile_bootstrap",
                        "bootstrap_resamples": settings.bootstrap_resamples,
                        "ci_level": settings.ci_level,
                    })),
                    Some(embedder.id()),
                    settings.seed,
                )?
            }
        };
        reports.push(report);
    }
    Ok(reports)
}
