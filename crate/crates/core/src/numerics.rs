//! Numerical conventions shared by the test suites: tolerances, a central
//! finite-difference gradient, and direct-summation convolution oracles.
//!
//! The oracles are deliberately naive loops over the textbook definitions and
//! share no code with the im2col kernels in [`crate::conv`].

use crate::autograd::{grad, Var};
use crate::conv::ConvGeom;
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToleranceSpec {
    /// Analytic vs. central-difference gradients, 64-bit, relative L2 error.
    pub gradient_check_rel_err: f64,
    /// Production kernels vs. direct-formula oracles.
    pub oracle_rel_err: f64,
    /// Fréchet distance of a set with itself.
    pub metric_self_distance: f64,
}

pub const TOLERANCES: ToleranceSpec = ToleranceSpec {
    gradient_check_rel_err: 1e-4,
    oracle_rel_err: 1e-6,
    metric_self_distance: 1e-6,
};

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for each coordinate.
pub fn finite_difference_gradient(
    mut f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {h}")));
    }
    let mut x = point.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(&x);
        x[i] = orig - h;
        let fm = f(&x);
        x[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("function value near coordinate {i}")));
        }
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, or the absolute error when both are ~0.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Per-input relative errors of analytic against numeric gradients.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub rel_errors: Vec<f64>,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares autograd gradients of the scalar `f(inputs)` with central
/// differences, one relative error per input tensor.
pub fn check_gradients(
    f: impl Fn(&[Var<f64>]) -> Var<f64>,
    inputs: &[Tensor<f64>],
    h: f64,
) -> Result<GradCheck> {
    let vars: Vec<Var<f64>> = inputs.iter().map(|t| Var::leaf(t.clone(), true)).collect();
    let out = f(&vars);
    if out.value().numel() != 1 {
        return shape_err("gradient check needs a scalar function");
    }
    let refs: Vec<&Var<f64>> = vars.iter().collect();
    let analytic = grad(&out, &refs, false);
    let mut rel_errors = Vec::with_capacity(inputs.len());
    for (k, t) in inputs.iter().enumerate() {
        let numeric = finite_difference_gradient(
            |x| {
                let vs: Vec<Var<f64>> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, tj)| {
                        if j == k {
                            Var::constant(Tensor::from_vec(t.shape(), x.to_vec()))
                        } else {
                            Var::constant(tj.clone())
                        }
                    })
                    .collect();
                f(&vs).value().item()
            },
            t.data(),
            h,
        )?;
        rel_errors.push(relative_error(analytic[k].value().data(), &numeric));
    }
    Ok(GradCheck { rel_errors })
}

const ORACLE_MAX_EXTENT: usize = 6;

fn oracle_dims(t: &Tensor<f64>, what: &str) -> Result<[usize; 5]> {
    let s = t.shape();
    if s.len() != 5 {
        return shape_err(format!("{what} must be 5-D, got {s:?}"));
    }
    if s.iter().any(|&d| d > ORACLE_MAX_EXTENT) {
        return shape_err(format!("oracle limited to extents <= {ORACLE_MAX_EXTENT}, got {s:?}"));
    }
    Ok([s[0], s[1], s[2], s[3], s[4]])
}

/// Direct-summation convolution:
/// `y[n,o,z] = Σ_{c,k} w[o,c,k] · x[n, c, z·s + k − p]` with zero padding.
pub fn tensor_oracle_conv(input: &Tensor<f64>, kernel: &Tensor<f64>, geom: &ConvGeom) -> Result<Tensor<f64>> {
    let [n, ci, d, h, w] = oracle_dims(input, "input")?;
    let [co, kci, kd, kh, kw] = oracle_dims(kernel, "kernel")?;
    if kci != ci || [kd, kh, kw] != geom.kernel {
        return shape_err("kernel does not match input channels or geometry");
    }
    let Some([od, oh, ow]) = geom.conv_out([d, h, w]) else {
        return shape_err("kernel larger than padded input");
    };
    let mut out = vec![0.0; n * co * od * oh * ow];
    let mut idx = 0;
    for b in 0..n {
        for o in 0..co {
            for z in 0..od {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = 0.0;
                        for c in 0..ci {
                            for a in 0..kd {
                                for e in 0..kh {
                                    for f in 0..kw {
                                        let iz = (z * geom.stride[0] + a) as isize - geom.padding[0] as isize;
                                        let iy = (y * geom.stride[1] + e) as isize - geom.padding[1] as isize;
                                        let ix = (x * geom.stride[2] + f) as isize - geom.padding[2] as isize;
                                        if iz < 0 || iy < 0 || ix < 0 {
                                            continue;
                                        }
                                        let (iz, iy, ix) = (iz as usize, iy as usize, ix as usize);
                                        if iz >= d || iy >= h || ix >= w {
                                            continue;
                                        }
                                        acc += kernel.at(&[o, c, a, e, f]) * input.at(&[b, c, iz, iy, ix]);
                                    }
                                }
                            }
                        }
                        out[idx] = acc;
                        idx += 1;
                    }
                }
            }
        }
    }
    Ok(Tensor::from_vec(&[n, co, od, oh, ow], out))
}

/// Direct-scatter transposed convolution with kernel `(C_in, C_out, k)`:
/// every input voxel `i` adds `x[i] · w` at output offset `i·s − p`.
pub fn tensor_oracle_conv_transpose(
    input: &Tensor<f64>,
    kernel: &Tensor<f64>,
    geom: &ConvGeom,
) -> Result<Tensor<f64>> {
    let [n, ci, d, h, w] = oracle_dims(input, "input")?;
    let [kci, co, kd, kh, kw] = oracle_dims(kernel, "kernel")?;
    if kci != ci || [kd, kh, kw] != geom.kernel {
        return shape_err("kernel does not match input channels or geometry");
    }
    let Some([od, oh, ow]) = geom.transpose_out([d, h, w]) else {
        return shape_err("empty transposed output");
    };
    let mut out = Tensor::<f64>::zeros(&[n, co, od, oh, ow]).into_vec();
    for b in 0..n {
        for c in 0..ci {
            for z in 0..d {
                for y in 0..h {
                    for x in 0..w {
                        let v = input.at(&[b, c, z, y, x]);
                        for o in 0..co {
                            for a in 0..kd {
                                for e in 0..kh {
                                    for f in 0..kw {
                                        let tz = (z * geom.stride[0] + a) as isize - geom.padding[0] as isize;
                                        let ty = (y * geom.stride[1] + e) as isize - geom.padding[1] as isize;
                                        let tx = (x * geom.stride[2] + f) as isize - geom.padding[2] as isize;
                                        if tz < 0 || ty < 0 || tx < 0 {
                                            continue;
                                        }
                                        let (tz, ty, tx) = (tz as usize, ty as usize, tx as usize);
                                        if tz >= od || ty >= oh || tx >= ow {
                                            continue;
                                        }
                                        let off = (((b * co + o) * od + tz) * oh + ty) * ow + tx;
                                        out[off] += v * kernel.at(&[c, o, a, e, f]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_vec(&[n, co, od, oh, ow], out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_of_square_at_three() {
        let g = finite_difference_gradient(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn fd_of_constant_is_zero() {
        let g = finite_difference_gradient(|_| 4.2, &[1.0, -2.0, 3.0], 1e-3).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fd_rejects_non_finite() {
        let r = finite_difference_gradient(|x| 1.0 / x[0], &[0.0], 1e-3);
        assert!(r.is_ok());
        let r = finite_difference_gradient(|x| (x[0] - 1.0).ln(), &[1.0], 1e-3);
        assert!(matches!(r, Err(Error::NonFinite(_))));
        assert!(finite_difference_gradient(|x| x[0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn oracle_delta_kernel_is_identity() {
        let x = Tensor::from_vec(&[1, 1, 1, 2, 3], vec![1., 2., 3., 4., 5., 6.]);
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let k = Tensor::from_vec(&[1, 1, 1, 3, 3], k);
        let y = tensor_oracle_conv(&x, &k, &ConvGeom::plane(3, 1, 1)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn oracle_three_tap_boundary() {
        // Impulse at t=0 with same padding: y[t] = Σ_j k[j] x[t + j − 1], so
        // y[0] = k[1], y[1] = k[0] and the remaining taps are zero. The output
        // reads the kernel backwards from the impulse.
        let x = Tensor::from_vec(&[1, 1, 5, 1, 1], vec![1., 0., 0., 0., 0.]);
        let k = Tensor::from_vec(&[1, 1, 3, 1, 1], vec![2., 3., 5.]);
        let y = tensor_oracle_conv(&x, &k, &ConvGeom::temporal(3, 1, 1)).unwrap();
        assert_eq!(y.data(), &[3., 2., 0., 0., 0.]);
    }

    #[test]
    fn oracle_is_linear() {
        let a = Tensor::from_vec(&[1, 1, 1, 2, 2], vec![1., -2., 3., 0.5]);
        let b = Tensor::from_vec(&[1, 1, 1, 2, 2], vec![0.25, 4., -1., 2.]);
        let k = Tensor::from_vec(&[1, 1, 1, 2, 2], vec![1., 2., -3., 4.]);
        let g = ConvGeom::plane(2, 1, 1);
        let lhs = tensor_oracle_conv(&a.add(&b), &k, &g).unwrap();
        let rhs = tensor_oracle_conv(&a, &k, &g).unwrap().add(&tensor_oracle_conv(&b, &k, &g).unwrap());
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn oracle_rejects_large_shapes() {
        let x = Tensor::zeros(&[1, 1, 1, 8, 8]);
        let k = Tensor::zeros(&[1, 1, 1, 3, 3]);
        assert!(tensor_oracle_conv(&x, &k, &ConvGeom::plane(3, 1, 1)).is_err());
    }
}
