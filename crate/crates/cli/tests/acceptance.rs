//! Acceptance criteria 1 to 9, one PASS/FAIL line each.
//!
//! Criterion 7 is the pinned desk-scale training run. It only executes when
//! `INBETWEEN_DESK_TRAINING=1`; otherwise it is reported as not run and does
//! not count as a pass.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use inbetween::autograd::{no_grad, Var};
use inbetween::conv::ConvGeom;
use inbetween::data::{load_dataset, save_synthetic_dataset, Dataset, SampleTriple, Split};
use inbetween::eval::{
    diversity, evaluate_generator, frechet_distance, generate_for_pair, probe_layer, protocol_noise, ssim,
    EvalSettings, KeyFrames, MetricKind, RandomConvEmbedder,
};
use inbetween::model::{
    fuse, Decoder, Generator, ImageDiscriminator, LatentBlock, Model, ModelConfig, NaiveLatent, Variant,
    VideoDiscriminator,
};
use inbetween::nn::{BatchNorm, Conv, ConvTranspose, Ctx, LayerNorm, Linear, Mode, Module};
use inbetween::numerics::{check_gradients, relative_error, TOLERANCES};
use inbetween::tensor::Tensor;
use inbetween::training::{
    discriminator_loss, discriminator_loss_from_scores, generator_loss, generator_loss_from_scores,
    gradient_penalty, sample_frame_indices, select_checkpoint, select_frames, train, Checkpoint, TrainConfig,
    Trainer,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const SLOPE: f64 = 0.2;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn bits_equal(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

// ---------------------------------------------------------------- criterion 1

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for c in [1, 3] {
        let cfg = ModelConfig::reference(Variant::Full, c);
        let gen = Generator::<f32>::new(&cfg, &mut rng).map_err(err)?;
        let ctx = Ctx::eval();
        let frame = |rng: &mut ChaCha8Rng| Var::constant(Tensor::uniform(&[1, c, 1, 64, 64], -1.0, 1.0, rng));
        let (xs, xe) = (frame(&mut rng), frame(&mut rng));
        let u = Var::constant(Tensor::randn(&[1, cfg.noise_dim], 1.0, &mut rng));
        let (enc_s, enc_e) = no_grad(|| gen.encode_pair(&ctx, &xs, &xe)).map_err(err)?;
        ensure(enc_s.shape() == [1, 64, 1, 8, 8], || format!("encoding {:?}", enc_s.shape()))?;
        let latent = gen.latent_generator().ok_or("full variant has latent blocks")?;
        let z = no_grad(|| latent.generate(&ctx, &enc_s, &enc_e, &u, false)).map_err(err)?.output;
        ensure(z.shape() == [1, 64, 16, 8, 8], || format!("latent {:?}", z.shape()))?;
        let video = no_grad(|| gen.decoder.decode(&ctx, &z)).map_err(err)?;
        ensure(video.shape() == [1, c, 16, 64, 64], || format!("decoded {:?}", video.shape()))?;
        let dv = VideoDiscriminator::<f32>::new(&cfg, &mut rng);
        let temporal: Vec<usize> = std::iter::once(16).chain(dv.layer_shapes().iter().map(|s| s[1])).collect();
        ensure(temporal == [16, 13, 10, 7, 4], || format!("D_V temporal sizes {temporal:?}"))?;
        let logits = no_grad(|| dv.logits(&ctx, &video)).map_err(err)?;
        ensure(logits.shape() == [1, 1], || format!("D_V logits {:?}", logits.shape()))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "64x64x{{1,3}} -> 8x8x64 -> (16,8,8,64) -> (16,64,64,c); D_V time 16/13/10/7/4 ({secs:.1}s, reference widths)"
    ))
}

// ---------------------------------------------------------------- criterion 2

#[derive(Clone, Copy, Debug)]
enum GateCase {
    Saturated,
    Identity,
    Mixed,
    Random,
}

fn fuse_oracle(
    dims: [usize; 5],
    z: &[f64],
    gs: &[f64],
    ge: &[f64],
    n: &[f64],
    es: &[f64],
    ee: &[f64],
) -> Vec<f64> {
    let [nb, c, t, h, w] = dims;
    let mut out = vec![0.0; z.len()];
    for b in 0..nb {
        for ch in 0..c {
            for ti in 0..t {
                let seq = (b * c + ch) * t + ti;
                let keep = (1.0 - gs[seq] - ge[seq]).max(0.0);
                for y in 0..h {
                    for x in 0..w {
                        let i = (seq * h + y) * w + x;
                        let e = ((b * c + ch) * h + y) * w + x;
                        out[i] = gs[seq] * es[e] + ge[seq] * ee[e] + keep * z[i] + n[seq];
                    }
                }
            }
        }
    }
    out
}

fn fuse_case(dims: [usize; 5], case: GateCase, seed: u64) -> Result<(), TestCaseError> {
    let [nb, c, t, h, w] = dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seq = [nb, c, t, 1, 1];
    let enc = [nb, c, 1, h, w];
    let z = Tensor::<f64>::randn(&dims, 1.0, &mut rng);
    let es = Tensor::<f64>::randn(&enc, 1.0, &mut rng);
    let ee = Tensor::<f64>::randn(&enc, 1.0, &mut rng);
    let fill = |v: f64| Tensor::<f64>::from_vec(&seq, vec![v; nb * c * t]);
    let (gs, ge, n) = match case {
        GateCase::Saturated => (fill(1.0), fill(0.0), fill(0.0)),
        GateCase::Identity => (fill(0.0), fill(0.0), fill(0.0)),
        GateCase::Mixed => (fill(0.6), fill(0.7), Tensor::randn(&seq, 1.0, &mut rng)),
        GateCase::Random => (
            Tensor::uniform(&seq, 0.0, 1.0, &mut rng),
            Tensor::uniform(&seq, 0.0, 1.0, &mut rng),
            Tensor::randn(&seq, 1.0, &mut rng),
        ),
    };
    let v = |t: &Tensor<f64>| Var::constant(t.clone());
    let got = fuse(&v(&z), &v(&gs), &v(&ge), &v(&n), &v(&es), &v(&ee))
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let want = fuse_oracle(dims, z.data(), gs.data(), ge.data(), n.data(), es.data(), ee.data());
    let rel = relative_error(got.value().data(), &want);
    prop_assert!(rel <= TOLERANCES.oracle_rel_err, "{case:?} {dims:?}: relative error {rel}");
    match case {
        GateCase::Identity => prop_assert!(got.value().data() == z.data(), "identity case changed z_prev"),
        GateCase::Saturated => {
            for (i, &g) in got.value().data().iter().enumerate() {
                let (b, rest) = (i / (c * t * h * w), i % (c * t * h * w));
                let (ch, hw) = (rest / (t * h * w), rest % (h * w));
                prop_assert!(g == es.data()[(b * c + ch) * h * w + hw], "saturated case is not enc_s");
            }
        }
        _ => {}
    }
    Ok(())
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let config = Config {
        cases: 1200,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, proptest::test_runner::TestRng::deterministic_rng(
        proptest::test_runner::RngAlgorithm::ChaCha,
    ));
    let case = prop_oneof![
        Just(GateCase::Saturated),
        Just(GateCase::Identity),
        Just(GateCase::Mixed),
        Just(GateCase::Random)
    ];
    let strategy = ([1usize..=2, 1..=3, 1..=4, 1..=3, 1..=3], case, any::<u64>());
    let count = std::cell::Cell::new(0usize);
    runner
        .run(&strategy, |(dims, case, seed)| {
            count.set(count.get() + 1);
            fuse_case(dims, case, seed)
        })
        .map_err(err)?;
    Ok(format!(
        "{} randomized cases (saturated, identity, 0.6/0.7, random gates) within {:e} of the loop oracle ({:.1}s)",
        count.get(),
        TOLERANCES.oracle_rel_err,
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- criterion 3

fn randomize(m: &mut dyn Module<f64>, rng: &mut ChaCha8Rng) {
    m.visit_mut(&mut |p| {
        let shape = p.value.shape().to_vec();
        p.value = if p.name.ends_with("running_var") {
            Tensor::uniform(&shape, 0.5, 1.5, rng)
        } else if p.name.ends_with("running_mean") {
            Tensor::uniform(&shape, -0.5, 0.5, rng)
        } else {
            Tensor::uniform(&shape, -0.8, 0.8, rng)
        };
    });
}

fn trainable(m: &dyn Module<f64>, filter: &dyn Fn(&str) -> bool) -> Vec<(String, Tensor<f64>)> {
    let mut out = Vec::new();
    m.visit(&mut |p| {
        if p.trainable && filter(&p.name) {
            out.push((p.name.clone(), p.value.clone()));
        }
    });
    out
}

/// Worst relative error of `sum(R ⊙ forward(inputs))` over the inputs and the
/// bound parameters, with normalization in running-statistics mode.
fn grad_check(
    params: Vec<(String, Tensor<f64>)>,
    inputs: Vec<Tensor<f64>>,
    forward: impl Fn(&Ctx<f64>, &[Var<f64>]) -> Var<f64>,
) -> Result<f64, String> {
    let k = inputs.len();
    let probe: Vec<Var<f64>> = inputs.iter().cloned().map(Var::constant).collect();
    let shape = forward(&Ctx::new(Mode::Eval, false), &probe).shape().to_vec();
    let weights = Tensor::<f64>::uniform(&shape, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(99));
    let mut all = inputs;
    all.extend(params.iter().map(|(_, t)| t.clone()));
    let check = check_gradients(
        |vars| {
            let ctx = Ctx::new(Mode::Eval, false);
            for (i, (name, _)) in params.iter().enumerate() {
                ctx.bind(name, vars[k + i].clone());
            }
            forward(&ctx, &vars[..k]).mul_const(&weights).sum_all()
        },
        &all,
        1e-6,
    )
    .map_err(err)?;
    Ok(check.worst())
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (c, t, d) = (2, 4, 3);
    let mut block = LatentBlock::<f64>::new("b", t, c, d, true, &mut rng);
    randomize(&mut block, &mut rng);
    let z = Tensor::<f64>::randn(&[1, c, t, 3, 3], 1.0, &mut rng);
    let es = Tensor::<f64>::randn(&[1, c, 1, 3, 3], 1.0, &mut rng);
    let ee = Tensor::<f64>::randn(&[1, c, 1, 3, 3], 1.0, &mut rng);
    let u = Tensor::<f64>::randn(&[1, d], 1.0, &mut rng);
    let u_l = Tensor::<f64>::randn(&[1, c, t, 1, 1], 1.0, &mut rng);
    let seq = |rng: &mut ChaCha8Rng| Tensor::<f64>::uniform(&[1, c, t, 1, 1], 0.05, 0.6, rng);

    let mut results: Vec<(&str, f64)> = Vec::new();
    let b = &block;
    results.push((
        "block",
        grad_check(trainable(b, &|_| true), vec![z.clone(), es.clone(), ee.clone(), u.clone()], |ctx, v| {
            b.apply(ctx, &v[0], &v[1], &v[2], &v[3]).expect("block shapes")
        })?,
    ));
    results.push((
        "noise projection",
        grad_check(trainable(b, &|n| n.contains(".proj")), vec![u.clone()], |ctx, v| {
            b.project_noise(ctx, &v[0]).expect("noise shape")
        })?,
    ));
    results.push((
        "gates",
        grad_check(trainable(b, &|n| n.contains(".gate_")), vec![u_l.clone()], |ctx, v| {
            let (gs, ge) = b.gates(ctx, &v[0]).expect("fusion block");
            Var::concat(&[gs, ge], 1)
        })?,
    ));
    results.push((
        "noise component",
        grad_check(trainable(b, &|n| n.contains(".noise")), vec![u_l.clone()], |ctx, v| {
            b.noise_component(ctx, &v[0])
        })?,
    ));
    let (gs, ge) = (seq(&mut rng), seq(&mut rng));
    results.push((
        "fusion",
        grad_check(
            Vec::new(),
            vec![z.clone(), gs, ge, u_l.clone(), es.clone(), ee.clone()],
            |_, v| fuse(&v[0], &v[1], &v[2], &v[3], &v[4], &v[5]).expect("fuse shapes"),
        )?,
    ));
    let z_in = Tensor::<f64>::randn(&[1, c, t, 3, 3], 1.0, &mut rng);
    results.push((
        "residual unit",
        grad_check(
            trainable(b, &|n| n.contains(".conv") || n.contains(".bn")),
            vec![z.clone(), z_in],
            |ctx, v| b.residual(ctx, &v[0], &v[1]),
        )?,
    ));

    let mut up = ConvTranspose::<f64>::new("dec.conv", 3, 2, ConvGeom::new([3, 4, 4], [1, 2, 2], [1, 1, 1]), &mut rng);
    let mut bn = BatchNorm::<f64>::new("dec.bn", 2);
    randomize(&mut up, &mut rng);
    randomize(&mut bn, &mut rng);
    let mut params = trainable(&up, &|_| true);
    params.extend(trainable(&bn, &|_| true));
    results.push((
        "decoder layer",
        grad_check(params, vec![Tensor::randn(&[1, 3, 2, 3, 3], 1.0, &mut rng)], |ctx, v| {
            bn.forward(ctx, &up.forward(ctx, &v[0])).leaky_relu(SLOPE)
        })?,
    ));

    let mut dv = Conv::<f64>::new("dv.conv", 2, 3, ConvGeom::new([4, 4, 4], [1, 2, 2], [0, 1, 1]), &mut rng);
    let mut dv_ln = LayerNorm::<f64>::new("dv.ln", 3);
    randomize(&mut dv, &mut rng);
    randomize(&mut dv_ln, &mut rng);
    let mut params = trainable(&dv, &|_| true);
    params.extend(trainable(&dv_ln, &|_| true));
    results.push((
        "D_V first layer",
        grad_check(params, vec![Tensor::randn(&[2, 2, 5, 4, 4], 1.0, &mut rng)], |ctx, v| {
            dv_ln.forward(ctx, &dv.forward(ctx, &v[0])).leaky_relu(SLOPE)
        })?,
    ));

    let mut di = Conv::<f64>::new("di.conv", 2, 2, ConvGeom::plane(3, 1, 1), &mut rng);
    let mut di_ln = LayerNorm::<f64>::new("di.ln", 2);
    let mut fc = Linear::<f64>::new("di.fc", 2 * 4 * 4, 1, &mut rng);
    randomize(&mut di, &mut rng);
    randomize(&mut di_ln, &mut rng);
    randomize(&mut fc, &mut rng);
    let mut params = trainable(&di, &|_| true);
    params.extend(trainable(&di_ln, &|_| true));
    let frames = Tensor::<f64>::randn(&[2, 2, 1, 4, 4], 1.0, &mut rng);
    results.push((
        "D_I first layer",
        grad_check(params.clone(), vec![frames.clone()], |ctx, v| {
            di_ln.forward(ctx, &di.forward(ctx, &v[0])).leaky_relu(SLOPE)
        })?,
    ));
    params.extend(trainable(&fc, &|_| true));
    results.push((
        "gradient penalty",
        // The penalty treats its input as data, so only parameters are checked.
        grad_check(params, Vec::new(), |ctx, _| {
            let logits = |x: &Var<f64>| -> inbetween::Result<Var<f64>> {
                let h = di_ln.forward(ctx, &di.forward(ctx, x)).leaky_relu(SLOPE);
                Ok(fc.forward(ctx, &h.reshape(&[2, 2 * 4 * 4])))
            };
            gradient_penalty(logits, &Var::constant(frames.clone()), 0.1).expect("finite penalty")
        })?,
    ));

    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let detail: Vec<String> = results.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    ensure(worst <= TOLERANCES.gradient_check_rel_err, || detail.join(", "))?;
    ensure(secs < 600.0, || format!("took {secs:.1}s"))?;
    Ok(format!("f64, frozen statistics, worst {worst:.1e} ({}) ({secs:.1}s)", detail.join(", ")))
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> Outcome {
    let tol = TOLERANCES.oracle_rel_err;
    let close = |got: f64, want: f64, what: &str| {
        ensure((got - want).abs() <= tol * want.abs().max(1.0), || format!("{what}: {got} vs {want}"))
    };
    let two_ln2 = 2.0 * 2f64.ln();
    close(discriminator_loss_from_scores(0.5, 0.5), two_ln2, "D at 0.5")?;
    close(generator_loss_from_scores(0.5, 0.5), two_ln2, "G at 0.5")?;
    close(discriminator_loss_from_scores(1.0, 0.0), 0.0, "perfect D")?;
    close(generator_loss_from_scores(1.0, 1.0), 0.0, "fooled D")?;
    close(discriminator_loss_from_scores(0.9, 0.1), -2.0 * 0.9f64.ln(), "D at 0.9/0.1")?;
    close(discriminator_loss_from_scores(0.9, 0.1), 0.210721, "D at 0.9/0.1 (4 d.p.)").or_else(|_| {
        ensure((discriminator_loss_from_scores(0.9, 0.1) - 0.2107).abs() < 5e-5, || "0.2107 case".into())
    })?;
    close(generator_loss_from_scores(0.25, 0.5), -(0.25f64.ln()) - 0.5f64.ln(), "G at 0.25/0.5")?;
    ensure((generator_loss_from_scores(0.25, 0.5) - 2.0794).abs() < 5e-5, || "2.0794 case".into())?;

    let logit = |v: f64| Var::<f64>::constant(Tensor::from_vec(&[1, 1], vec![v]));
    close(discriminator_loss(&logit(0.0), &logit(0.0)).value().item(), two_ln2, "logit D at 0")?;
    close(generator_loss(&logit(0.0), &logit(0.0)).value().item(), two_ln2, "logit G at 0")?;
    close(discriminator_loss(&logit(40.0), &logit(-40.0)).value().item(), 0.0, "logit D limit")?;
    close(generator_loss(&logit(40.0), &logit(40.0)).value().item(), 0.0, "logit G limit")?;

    // Linear logit w·x + b: the input gradient is w for every sample.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w = Tensor::<f64>::randn(&[6, 1], 1.0, &mut rng);
    let x = Var::constant(Tensor::<f64>::randn(&[3, 1, 1, 2, 3], 1.0, &mut rng));
    let wv = Var::constant(w.clone());
    let pen = gradient_penalty(|x| Ok(x.reshape(&[3, 6]).matmul(&wv).add_scalar(0.7)), &x, 0.1)
        .map_err(err)?
        .value()
        .item();
    let want = 0.1 * w.data().iter().map(|v| v * v).sum::<f64>();
    ensure((pen - want).abs() <= 1e-5 * want, || format!("penalty {pen} vs {want}"))?;

    // Single sampled frame against the full 14-frame average.
    let cfg = ModelConfig::scaled(Variant::Full, 1, 16);
    let di = ImageDiscriminator::<f32>::new(&cfg, &mut rng);
    let real = Var::constant(Tensor::<f32>::uniform(&[1, 1, 16, 64, 64], -1.0, 1.0, &mut rng));
    let fake = Var::constant(Tensor::<f32>::uniform(&[1, 1, 16, 64, 64], -0.5, 0.5, &mut rng));
    let ctx = Ctx::eval();
    let per_frame: Vec<(f64, f64)> = (1..=14)
        .map(|i| -> inbetween::Result<(f64, f64)> {
            let r = di.logits(&ctx, &select_frames(&real, &[i])?)?;
            let f = di.logits(&ctx, &select_frames(&fake, &[i])?)?;
            Ok((
                discriminator_loss(&r, &f).value().item() as f64,
                generator_loss(&Var::constant(Tensor::from_vec(&[1, 1], vec![40.0f32])), &f).value().item() as f64,
            ))
        })
        .collect::<inbetween::Result<_>>()
        .map_err(err)?;
    let draws = 20_000;
    let idx = sample_frame_indices(draws, 16, &mut rng);
    ensure(idx.iter().all(|&i| (1..=14).contains(&i)), || "frame index outside 1..=14".into())?;
    let mut worst_z: f64 = 0.0;
    for (k, name) in [(0usize, "D_I"), (1, "G image term")] {
        let value = |i: usize| if k == 0 { per_frame[i - 1].0 } else { per_frame[i - 1].1 };
        let full = (1..=14).map(value).sum::<f64>() / 14.0;
        let samples: Vec<f64> = idx.iter().map(|&i| value(i)).collect();
        let mean = samples.iter().sum::<f64>() / draws as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        let z = (mean - full).abs() / se.max(1e-300);
        ensure(z <= 3.0, || format!("{name}: sampled {mean} vs full {full}, {z:.2} SE"))?;
        worst_z = worst_z.max(z);
    }
    Ok(format!(
        "scalar cases, limits, 0.1*|w|^2 penalty; single-frame estimator within {worst_z:.2} SE over {draws} draws"
    ))
}

// ---------------------------------------------------------------- criterion 5

fn ssim_direct(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let gs: f64 = g.iter().sum();
    let (c1, c2) = ((0.01f64 * 2.0).powi(2), (0.03f64 * 2.0).powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let wt = |i: usize, j: usize| g[i] * g[j] / (gs * gs);
            let at = |p: &[f64], i: usize, j: usize| p[(y + i) * w + x + j];
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    ma += wt(i, j) * at(a, i, j);
                    mb += wt(i, j) * at(b, i, j);
                }
            }
            let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let (da, db) = (at(a, i, j) - ma, at(b, i, j) - mb);
                    va += wt(i, j) * da * da;
                    vb += wt(i, j) * db * db;
                    cab += wt(i, j) * da * db;
                }
            }
            total += (2.0 * ma * mb + c1) * (2.0 * cab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let set = |rng: &mut ChaCha8Rng, n: usize, d: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| Tensor::<f64>::randn(&[d], 1.0, rng).data().to_vec()).collect()
    };
    let a = set(&mut rng, 60, 8);
    let self_d = frechet_distance(&a, &a).map_err(err)?;
    ensure(self_d.abs() <= TOLERANCES.metric_self_distance, || format!("frechet(A,A) = {self_d}"))?;
    let (ma, mb) = (set(&mut rng, 1, 8).remove(0), set(&mut rng, 1, 8).remove(0));
    let point = frechet_distance(&vec![ma.clone(); 10], &vec![mb.clone(); 12]).map_err(err)?;
    let want: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y).powi(2)).sum();
    ensure((point - want).abs() <= 1e-6, || format!("point mass {point} vs {want}"))?;

    let (c, t, h, w) = (3, 4, 16, 18);
    let x = Tensor::<f32>::uniform(&[c, t, h, w], -1.0, 1.0, &mut rng);
    let noise = Tensor::<f32>::uniform(&[c, t, h, w], -0.3, 0.3, &mut rng);
    let y = Tensor::from_vec(&[c, t, h, w], x.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect());
    let one = ssim(&x, &x).map_err(err)?;
    ensure((one - 1.0).abs() <= 1e-12, || format!("self SSIM {one}"))?;
    let got = ssim(&x, &y).map_err(err)?;
    let plane = |z: &Tensor<f32>, ch: usize, f: usize| -> Vec<f64> {
        let o = (ch * t + f) * h * w;
        z.data()[o..o + h * w].iter().map(|&v| v as f64).collect()
    };
    let mut oracle = 0.0;
    for ch in 0..c {
        for f in 1..t - 1 {
            oracle += ssim_direct(&plane(&x, ch, f), &plane(&y, ch, f), h, w);
        }
    }
    oracle /= (c * (t - 2)) as f64;
    ensure((got - oracle).abs() <= 1e-6, || format!("SSIM {got} vs direct {oracle}"))?;

    let dup = vec![vec![0.3, -1.2, 2.0]; 4];
    let d0 = diversity(&dup).map_err(err)?;
    ensure(d0 == 0.0, || format!("duplicates {d0}"))?;
    let d1 = diversity(&[vec![1.0, 0.0], vec![0.0, 2.0]]).map_err(err)?;
    ensure((d1 - 1.0).abs() <= 1e-12, || format!("orthogonal {d1}"))?;
    let hundred = set(&mut rng, 100, 16);
    let mut acc = 0.0;
    let mut pairs = 0;
    for i in 0..100 {
        for j in 0..100 {
            if i < j {
                let dot: f64 = hundred[i].iter().zip(&hundred[j]).map(|(p, q)| p * q).sum();
                let ni = hundred[i].iter().map(|p| p * p).sum::<f64>().sqrt();
                let nj = hundred[j].iter().map(|p| p * p).sum::<f64>().sqrt();
                acc += 1.0 - dot / (ni * nj);
                pairs += 1;
            }
        }
    }
    let d100 = diversity(&hundred).map_err(err)?;
    let oracle_d = acc / pairs as f64;
    ensure((d100 - oracle_d).abs() <= 1e-8, || format!("diversity {d100} vs pair loop {oracle_d}"))?;
    Ok(format!(
        "frechet(A,A)={self_d:.1e}, point mass exact, SSIM self 1 and direct-formula gap {:.1e}, diversity 0/1/pair-loop gap {:.1e}",
        (got - oracle).abs(),
        (d100 - oracle_d).abs()
    ))
}

// ---------------------------------------------------------------- criterion 6

fn endpoint_clips(gen: &Generator<f32>, batches: usize, batch: usize, rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let c = gen.config.channels;
    let t = gen.config.frames;
    let frame = [batch, c, 1, 64, 64];
    for _ in 0..batches {
        let xs = Tensor::<f32>::uniform(&frame, -1.0, 1.0, rng);
        let xe = Tensor::<f32>::uniform(&frame, -1.0, 1.0, rng);
        let u = Tensor::<f32>::randn(&[batch, gen.config.noise_dim], 1.0, rng);
        let out = no_grad(|| {
            gen.generate(
                &Ctx::eval(),
                &Var::constant(xs.clone()),
                &Var::constant(xe.clone()),
                &Var::constant(u),
                false,
            )
        })
        .map_err(err)?;
        let clip = out.clip.value();
        ensure(bits_equal(clip.narrow(2, 0, 1).data(), xs.data()), || "frame 0 differs from x_s".into())?;
        ensure(bits_equal(clip.narrow(2, t - 1, 1).data(), xe.data()), || "frame 15 differs from x_e".into())?;
    }
    Ok(batches * batch)
}

fn criterion_6(fx: &common::Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut total = 0;
    for (variant, c) in [(Variant::Full, 3), (Variant::Full, 1), (Variant::Naive, 3)] {
        let mut cfg = ModelConfig::scaled(variant, c, 32);
        cfg.noise_dim = 8;
        let gen = Generator::<f32>::new(&cfg, &mut rng).map_err(err)?;
        total += endpoint_clips(&gen, 3, 100, &mut rng)?;
    }
    let random = total;
    let trained = Checkpoint::load(&fx.checkpoint).map_err(err)?;
    total += endpoint_clips(&trained.model.generator, 6, 100, &mut rng)?;
    Ok(format!(
        "{total} clips ({random} random weights, {} trained at step {}): frames 0 and 15 bit-equal the key frames",
        total - random,
        trained.step
    ))
}

// ---------------------------------------------------------------- criterion 7

fn desk_ssim(gen: &Generator<f32>, samples: &[SampleTriple]) -> Result<f64, String> {
    let settings = EvalSettings {
        n_samples: 10,
        ..EvalSettings::default()
    };
    let r = evaluate_generator(gen, samples, &[MetricKind::SsimBestOfN], &settings, &RandomConvEmbedder::default())
        .map_err(err)?;
    Ok(r[0].value)
}

struct DeskRun {
    first_loss_g: f64,
    selected_loss_g: f64,
    ssim: Vec<f64>,
    selected: PathBuf,
}

fn desk_train(dataset: &Dataset, out: &Path, variant: Variant, eval: &[SampleTriple]) -> Result<DeskRun, String> {
    let model = ModelConfig::scaled(variant, 3, 16);
    let config = TrainConfig {
        variant,
        batch_size: 32,
        total_steps: 20_000,
        checkpoint_every: 5_000,
        ..TrainConfig::default()
    };
    let initial = Trainer::new(&model, config.clone(), dataset).map_err(err)?;
    let baseline = desk_ssim(&initial.model.generator, eval)?;
    let records_path = out.join("checkpoints.json");
    let mut trainer = match inbetween::training::read_records(out).map_err(err)?.last() {
        Some(last) if records_path.is_file() => Trainer::from_checkpoint(Checkpoint::load(&last.path).map_err(err)?),
        _ => initial,
    };
    let total = trainer.config.total_steps;
    let records = train(&mut trainer, dataset, out, |log| {
        if log.step % 100 == 0 {
            eprintln!("  [{variant:?}] step {}/{total} L(G) {:.4}", log.step, log.loss_g);
        }
    })
    .map_err(err)?;
    let first = std::fs::read_to_string(out.join("train_log.jsonl")).map_err(err)?;
    let first: serde_json::Value =
        serde_json::from_str(first.lines().next().ok_or("empty training log")?).map_err(err)?;
    let selected = select_checkpoint(&records).map_err(err)?;
    let mut ssim = vec![baseline];
    for r in &records {
        ssim.push(desk_ssim(&Checkpoint::load(&r.path).map_err(err)?.model.generator, eval)?);
    }
    Ok(DeskRun {
        first_loss_g: first["loss_g"].as_f64().ok_or("loss_g missing")?,
        selected_loss_g: selected.loss_g,
        ssim,
        selected: selected.path.clone(),
    })
}

fn criterion_7() -> Option<Outcome> {
    if std::env::var("INBETWEEN_DESK_TRAINING").as_deref() != Ok("1") {
        return None;
    }
    let run = || -> Outcome {
        let root = std::env::var_os("INBETWEEN_OUT_ROOT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join("desk_training");
        let data = root.join("data");
        if !data.join("dataset.json").is_file() {
            save_synthetic_dataset(&data, 0, 256, 32).map_err(err)?;
        }
        let dataset = load_dataset(&data).map_err(err)?;
        let test = dataset.eval_samples(Split::Test).map_err(err)?;
        let full = desk_train(&dataset, &root.join("full"), Variant::Full, &test)?;
        let naive = desk_train(&dataset, &root.join("naive"), Variant::Naive, &test)?;
        ensure(full.selected_loss_g < full.first_loss_g, || {
            format!("(b) selected L(G) {} not below step-0 {}", full.selected_loss_g, full.first_loss_g)
        })?;
        let rises = full.ssim.windows(2).filter(|w| w[1] > w[0]).count();
        ensure(rises >= 3, || format!("(c) best-of-10 SSIM {:?} rises {rises} of 4 times", full.ssim))?;
        let settings = EvalSettings::default();
        let emb = RandomConvEmbedder::default();
        let score = |p: &Path, m: MetricKind| -> Result<f64, String> {
            let g = Checkpoint::load(p).map_err(err)?.model.generator;
            Ok(evaluate_generator(&g, &test, &[m], &settings, &emb).map_err(err)?[0].value)
        };
        let div = score(&full.selected, MetricKind::Diversity)?;
        let (f_full, f_naive) = (score(&full.selected, MetricKind::Frechet)?, score(&naive.selected, MetricKind::Frechet)?);
        ensure(div > 0.0, || format!("(d) diversity {div}"))?;
        ensure(f_naive > f_full, || format!("(d) naive frechet {f_naive} not above full {f_full}"))?;
        Ok(format!(
            "finite losses, L(G) {:.4} -> {:.4}, SSIM {:?}, diversity {div:.4}, frechet naive {f_naive:.3} > full {f_full:.3}",
            full.first_loss_g, full.selected_loss_g, full.ssim
        ))
    };
    Some(run())
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Outcome {
    let fx = common::fixture("no_fusion");
    let ev = fx.dir.path().join("ev");
    let out = common::run(&[
        "evaluate",
        "--config",
        common::s(&fx.config),
        "--dataset",
        common::s(&fx.data),
        "--checkpoint",
        common::s(&fx.checkpoint),
        "--out",
        common::s(&ev),
    ]);
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    for m in ["frechet", "ssim_best_of_n", "diversity"] {
        let v = common::read_json(&ev.join(format!("{m}.json")))["value"].as_f64();
        ensure(v.is_some_and(f64::is_finite), || format!("{m} report missing or non-finite"))?;
    }
    let ckpt = Checkpoint::load(&fx.checkpoint).map_err(err)?;
    ensure(ckpt.model.config().variant == Variant::NoFusion, || "checkpoint is not no_fusion".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let count = |v: Variant, rng: &mut ChaCha8Rng| -> Result<usize, String> {
        Ok(Model::<f32>::new(&ModelConfig::reference(v, 3), rng).map_err(err)?.num_parameters())
    };
    let (full, no_fusion) = (count(Variant::Full, &mut rng)?, count(Variant::NoFusion, &mut rng)?);
    ensure(no_fusion < full, || format!("no_fusion {no_fusion} not below full {full}"))?;

    let mut cfg = ModelConfig::scaled(Variant::Naive, 3, 32);
    cfg.noise_dim = 8;
    let naive = NaiveLatent::<f32>::new(&cfg, &mut rng);
    let dec = Decoder::<f32>::naive(&cfg, &mut rng);
    let ctx = Ctx::eval();
    let enc = |rng: &mut ChaCha8Rng| Var::constant(Tensor::randn(&[2, cfg.latent_channels, 1, 8, 8], 1.0, rng));
    let u = Var::constant(Tensor::randn(&[2, 8], 1.0, &mut rng));
    let z = naive.generate(&ctx, &enc(&mut rng), &enc(&mut rng), &u).map_err(err)?;
    ensure(z.shape() == [2, cfg.latent_channels, 2, 8, 8], || format!("naive latent {:?}", z.shape()))?;
    let video = dec.decode(&ctx, &z).map_err(err)?;
    ensure(video.shape() == [2, 3, 16, 64, 64], || format!("naive decode {:?}", video.shape()))?;
    Ok(format!(
        "no_fusion trained and scored by the CLI; parameters {no_fusion} < {full}; naive decodes length 2 -> 16 frames"
    ))
}

// ---------------------------------------------------------------- criterion 9

fn criterion_9(fx: &common::Fixture) -> Outcome {
    let gen_dir = |name: &str| fx.dir.path().join(name);
    for name in ["gen_a", "gen_b"] {
        let out = common::run(&[
            "generate",
            "--config",
            common::s(&fx.config),
            "--dataset",
            common::s(&fx.data),
            "--checkpoint",
            common::s(&fx.checkpoint),
            "--out",
            common::s(&gen_dir(name)),
            "--n-samples",
            "4",
            "--pairs",
            "2",
            "--seed",
            "11",
        ]);
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    }
    for p in ["pair_000", "pair_001"] {
        for f in ["samples.f32", "sample_000.png", "sample_003.png"] {
            let a = std::fs::read(gen_dir("gen_a").join(p).join(f)).map_err(err)?;
            let b = std::fs::read(gen_dir("gen_b").join(p).join(f)).map_err(err)?;
            ensure(a == b, || format!("{p}/{f} differs between runs"))?;
        }
    }
    let (ma, mb) = (
        common::read_json(&gen_dir("gen_a").join("metadata.json")),
        common::read_json(&gen_dir("gen_b").join("metadata.json")),
    );
    ensure(ma["pairs"] == mb["pairs"], || "metadata pair records differ".into())?;

    let bytes = std::fs::read(&fx.checkpoint).map_err(err)?;
    let a = Checkpoint::from_bytes(&bytes).map_err(err)?;
    let again = a.to_bytes().map_err(err)?;
    ensure(again == bytes, || "re-serialized checkpoint differs".into())?;
    let b = Checkpoint::from_bytes(&again).map_err(err)?;
    let dataset = load_dataset(&fx.data).map_err(err)?;
    let keys = KeyFrames::from(&dataset.eval_samples(Split::Test).map_err(err)?[0]);
    let noise = protocol_noise(7, 0, 3, a.model.config().noise_dim);
    let ca = generate_for_pair(&a.model.generator, &keys, &noise).map_err(err)?;
    let cb = generate_for_pair(&b.model.generator, &keys, &noise).map_err(err)?;
    ensure(ca.iter().zip(&cb).all(|(x, y)| bits_equal(x.data(), y.data())), || {
        "round-tripped checkpoint changes eval outputs".into()
    })?;

    let u = noise.narrow(0, 0, 1);
    let probed = probe_layer(&a.model.generator, &keys, &u, a.model.config().blocks).map_err(err)?;
    ensure(bits_equal(probed.data(), ca[0].data()), || "probe_layer(24) differs from generation".into())?;
    Ok("CLI generate repeated bit-identically; checkpoint bytes and eval outputs survive a round trip; probe_layer(24) equals generation".into())
}

// ---------------------------------------------------------------- driver

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    // `cargo test` forwards harness flags; only a listing request needs an answer.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let fixture = common::fixture("full");
    let mut failed = 0;
    let mut report = |n: usize, outcome: Outcome| match outcome {
        Ok(msg) => println!("PASS criterion {n}: {msg}"),
        Err(msg) => {
            failed += 1;
            println!("FAIL criterion {n}: {msg}");
        }
    };
    report(1, guarded(criterion_1));
    report(2, guarded(criterion_2));
    report(3, guarded(criterion_3));
    report(4, guarded(criterion_4));
    report(5, guarded(criterion_5));
    report(6, guarded(|| criterion_6(&fixture)));
    let desk = guarded(|| criterion_7().unwrap_or(Err(String::new())));
    let desk_ran = std::env::var("INBETWEEN_DESK_TRAINING").as_deref() == Ok("1");
    if desk_ran {
        report(7, desk);
    } else {
        println!(
            "FAIL criterion 7: not run. The pinned 20000-step, batch-32 run of two variants needs roughly 100 hours \
             on this single-core machine; set INBETWEEN_DESK_TRAINING=1 to execute it"
        );
    }
    report(8, guarded(criterion_8));
    report(9, guarded(|| criterion_9(&fixture)));
    let not_run = usize::from(!desk_ran);
    println!("acceptance: {} passed, {failed} failed, {not_run} not run", 9 - failed - not_run);
    if failed > 0 {
        std::process::exit(1);
    }
}
