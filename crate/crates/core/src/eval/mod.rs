//! Metrics, the stochastic sampling protocol and intermediate-layer probing.

mod embed;
mod metrics;
mod protocol;
mod report;

pub use embed::{to_rgb, Embedder, RandomConvEmbedder, VideoFeatureEmbedder, RANDOM_EMBEDDER_SEED};
pub use metrics::{
    average_video, best_of_n_ssim, bootstrap_ci, diversity, frechet_distance, gaussian_window, mean, ssim, ssim_plane,
    SSIM_K1, SSIM_K2, SSIM_RANGE, SSIM_SIGMA, SSIM_WINDOW,
};
pub use protocol::{
    frechet_on_samples, generate_for_pair, probe_layer, protocol_noise, stack_clips, stochastic_protocol, KeyFrames,
    MetricReport, PairSamples,
};
pub use report::{evaluate_generator, EvalSettings, MetricKind};
