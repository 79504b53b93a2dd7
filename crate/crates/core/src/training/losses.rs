//! Adversarial objectives on pre-sigmoid logits, with `log` arguments clamped
//! at [`LOG_CLAMP`], and the input-gradient penalty.

use rand::Rng;

use crate::autograd::{grad, Var};
use crate::error::{shape_err, Error, Result};
use crate::tensor::Float;

pub const LOG_CLAMP: f64 = 1e-12;

/// `−log(max(p, LOG_CLAMP))`, elementwise.
pub fn neg_log<F: Float>(p: &Var<F>) -> Var<F> {
    p.clamp_min(LOG_CLAMP).ln().neg()
}

/// Batch mean of `−log D(real) − log(1 − D(fake))`, where `D = σ(logit)`.
/// `1 − σ(l)` is evaluated as `σ(−l)`.
pub fn discriminator_loss<F: Float>(real_logits: &Var<F>, fake_logits: &Var<F>) -> Var<F> {
    neg_log(&real_logits.sigmoid())
        .mean_all()
        .add(&neg_log(&fake_logits.neg().sigmoid()).mean_all())
}

/// Batch mean of `−log D_V(fake) − log D_I(fake frame)`.
pub fn generator_loss<F: Float>(video_logits: &Var<F>, image_logits: &Var<F>) -> Var<F> {
    neg_log(&video_logits.sigmoid())
        .mean_all()
        .add(&neg_log(&image_logits.sigmoid()).mean_all())
}

/// Scalar forms on probabilities, used to check the arithmetic directly.
pub fn discriminator_loss_from_scores(p_real: f64, p_fake: f64) -> f64 {
    -p_real.max(LOG_CLAMP).ln() - (1.0 - p_fake).max(LOG_CLAMP).ln()
}

pub fn generator_loss_from_scores(p_video: f64, p_image: f64) -> f64 {
    -p_video.max(LOG_CLAMP).ln() - p_image.max(LOG_CLAMP).ln()
}

/// Uniform frame index in `1..=T-2`, one per sample.
pub fn sample_frame_indices(n: usize, frames: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(1..=frames - 2)).collect()
}

/// Picks frame `indices[i]` from sample `i` of `clips: (N, c, T, H, W)`,
/// giving `(N, c, 1, H, W)`.
pub fn select_frames<F: Float>(clips: &Var<F>, indices: &[usize]) -> Result<Var<F>> {
    let s = clips.shape();
    if s.len() != 5 || s[0] != indices.len() || indices.iter().any(|&i| i >= s[2]) {
        return shape_err(format!("cannot select frames {indices:?} from clips {s:?}"));
    }
    let parts: Vec<Var<F>> = indices
        .iter()
        .enumerate()
        .map(|(n, &t)| clips.narrow(0, n, 1).narrow(2, t, 1))
        .collect();
    Ok(Var::concat(&parts, 0))
}

/// Logits of `input` together with `coeff · mean_i ‖∂ logit_i / ∂ x_i‖²`, for a
/// discriminator whose logit for sample `i` depends only on `x_i`. Both are
/// differentiable with respect to the discriminator parameters.
pub fn penalized_logits<F: Float>(
    logits_of: impl FnOnce(&Var<F>) -> Result<Var<F>>,
    input: &Var<F>,
    coeff: f64,
) -> Result<(Var<F>, Var<F>)> {
    let x = Var::leaf(input.value().clone(), true);
    let logits = logits_of(&x)?;
    let g = grad(&logits.sum_all(), &[&x], true).remove(0);
    if !g.value().all_finite() {
        return Err(Error::NonFinite("discriminator input gradient".into()));
    }
    let n = x.shape()[0];
    let per_sample = g.square().reshape(&[n, x.value().numel() / n]).sum_axes(&[1]);
    Ok((logits, per_sample.mean_all().scale(coeff)))
}

pub fn gradient_penalty<F: Float>(
    logits_of: impl FnOnce(&Var<F>) -> Result<Var<F>>,
    input: &Var<F>,
    coeff: f64,
) -> Result<Var<F>> {
    penalized_logits(logits_of, input, coeff).map(|(_, p)| p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    fn scalar(v: f64) -> Var<f64> {
        Var::constant(Tensor::from_vec(&[1, 1], vec![v]))
    }

    #[test]
    fn scalar_cases() {
        let ln2 = std::f64::consts::LN_2;
        assert!((discriminator_loss_from_scores(0.5, 0.5) - 2.0 * ln2).abs() < 1e-15);
        assert!((discriminator_loss_from_scores(0.9, 0.1) - 0.210_721_031_315_652_6).abs() < 1e-12);
        assert!((generator_loss_from_scores(0.25, 0.5) - 2.079_441_541_679_836).abs() < 1e-12);
        assert!(discriminator_loss_from_scores(1.0, 0.0).abs() < 1e-15);
        assert!(discriminator_loss_from_scores(0.0, 1.0).is_finite());
    }

    #[test]
    fn logit_forms_agree_with_scores() {
        for (pr, pf) in [(0.5, 0.5), (0.9, 0.1), (0.3, 0.8)] {
            let l = discriminator_loss(&scalar(logit(pr)), &scalar(logit(pf))).value().item();
            assert!((l - discriminator_loss_from_scores(pr, pf)).abs() < 1e-12);
        }
        let g = generator_loss(&scalar(logit(0.25)), &scalar(logit(0.5))).value().item();
        assert!((g - generator_loss_from_scores(0.25, 0.5)).abs() < 1e-12);
        // Saturated scores stay finite through the clamp.
        let l = discriminator_loss(&scalar(-1e4), &scalar(1e4)).value().item();
        assert!(l.is_finite() && l > 50.0);
    }

    #[test]
    fn penalty_of_linear_logit() {
        let w = Tensor::from_vec(&[1, 4], vec![0.5, -1.0, 2.0, 0.25]);
        let x = Var::constant(Tensor::from_vec(&[3, 4], (0..12).map(|i| i as f64).collect()));
        let wv = Var::constant(w.clone());
        let p = gradient_penalty(|x| Ok(x.matmul(&wv.t()).add_scalar(7.0)), &x, 0.1).unwrap();
        let expected = 0.1 * w.data().iter().map(|v| v * v).sum::<f64>();
        assert!((p.value().item() - expected).abs() < 1e-12);
        let zero = gradient_penalty(|x| Ok(x.sum_axes(&[1]).scale(0.0)), &x, 0.1).unwrap();
        assert_eq!(zero.value().item(), 0.0);
    }

    #[test]
    fn frame_indices_stay_inside() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let idx = sample_frame_indices(10_000, 16, &mut rng);
        assert!(idx.iter().all(|&i| (1..=14).contains(&i)));
        assert!(idx.contains(&1) && idx.contains(&14));
    }
}
