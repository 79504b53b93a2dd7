//! Volumetric convolution kernels on `(N, C, D, H, W)` tensors.
//!
//! Three mutually-adjoint primitives cover every convolution the model needs:
//! [`conv`], its input adjoint [`conv_transpose`] and its weight adjoint
//! [`conv_weight_grad`]. 2-D and 1-D convolutions are the same kernels with
//! unit extents. All three go through im2col + GEMM, one sample at a time.

use crate::tensor::{gemm, Float, MatRef, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvGeom {
    pub fn new(kernel: [usize; 3], stride: [usize; 3], padding: [usize; 3]) -> Self {
        assert!(kernel.iter().all(|&k| k > 0) && stride.iter().all(|&s| s > 0));
        ConvGeom {
            kernel,
            stride,
            padding,
        }
    }

    /// Spatial-only 2-D geometry (unit temporal extent).
    pub fn plane(k: usize, s: usize, p: usize) -> Self {
        Self::new([1, k, k], [1, s, s], [0, p, p])
    }

    /// Temporal-only 1-D geometry.
    pub fn temporal(k: usize, s: usize, p: usize) -> Self {
        Self::new([k, 1, 1], [s, 1, 1], [p, 0, 0])
    }

    pub fn kvol(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Output extent of a forward convolution, or `None` if the kernel does not fit.
    pub fn conv_out(&self, input: [usize; 3]) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for i in 0..3 {
            let padded = input[i] + 2 * self.padding[i];
            if padded < self.kernel[i] {
                return None;
            }
            out[i] = (padded - self.kernel[i]) / self.stride[i] + 1;
        }
        Some(out)
    }

    /// Output extent of a transposed convolution: `(in - 1) * s - 2p + k`.
    pub fn transpose_out(&self, input: [usize; 3]) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for i in 0..3 {
            if input[i] == 0 {
                return None;
            }
            let full = (input[i] - 1) * self.stride[i] + self.kernel[i];
            if full < 2 * self.padding[i] + 1 {
                return None;
            }
            out[i] = full - 2 * self.padding[i];
        }
        Some(out)
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == [1, 1, 1] && self.stride == [1, 1, 1] && self.padding == [0, 0, 0]
    }
}

fn dims5(t: &[usize]) -> (usize, usize, [usize; 3]) {
    assert_eq!(t.len(), 5, "expected a 5-D (N, C, D, H, W) tensor, got {t:?}");
    (t[0], t[1], [t[2], t[3], t[4]])
}

#[inline]
fn in_range(i: isize, n: usize) -> bool {
    i >= 0 && (i as usize) < n
}

/// Output positions `lo..hi` along one axis whose input index
/// `o * stride + tap - pad` falls inside `0..n_in`.
#[inline]
fn valid_range(n_out: usize, n_in: usize, stride: usize, tap: usize, pad: isize) -> (usize, usize) {
    let first = pad - tap as isize;
    let lo = if first <= 0 {
        0
    } else {
        (first as usize).div_ceil(stride)
    };
    let last = n_in as isize - 1 + pad - tap as isize;
    let hi = if last < 0 { 0 } else { (last as usize / stride + 1).min(n_out) };
    (lo.min(hi), hi)
}

fn vol2col<F: Float>(
    x: &[F],
    channels: usize,
    din: [usize; 3],
    g: &ConvGeom,
    dout: [usize; 3],
    col: &mut [F],
) {
    let [kd, kh, kw] = g.kernel;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.padding.map(|p| p as isize);
    let plane = dout[1] * dout[2];
    let p = dout[0] * plane;
    let vin = din[0] * din[1] * din[2];
    let mut row = 0;
    for c in 0..channels {
        let xc = &x[c * vin..(c + 1) * vin];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let dst = &mut col[row * p..(row + 1) * p];
                    let mut o = 0;
                    for od in 0..dout[0] {
                        let id = (od * sd + a) as isize - pd;
                        if !in_range(id, din[0]) {
                            dst[o..o + plane].fill(F::zero());
                            o += plane;
                            continue;
                        }
                        for oh in 0..dout[1] {
                            let ih = (oh * sh + b) as isize - ph;
                            if !in_range(ih, din[1]) {
                                dst[o..o + dout[2]].fill(F::zero());
                                o += dout[2];
                                continue;
                            }
                            let base = (id as usize * din[1] + ih as usize) * din[2];
                            let xrow = &xc[base..base + din[2]];
                            let out = &mut dst[o..o + dout[2]];
                            let (lo, hi) = valid_range(dout[2], din[2], sw, e, pw);
                            out[..lo].fill(F::zero());
                            out[hi..].fill(F::zero());
                            if lo < hi {
                                let start = (lo * sw + e) as isize - pw;
                                let start = start as usize;
                                if sw == 1 {
                                    out[lo..hi].copy_from_slice(&xrow[start..start + hi - lo]);
                                } else {
                                    for (k, v) in out[lo..hi].iter_mut().enumerate() {
                                        *v = xrow[start + k * sw];
                                    }
                                }
                            }
                            o += dout[2];
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn col2vol<F: Float>(
    col: &[F],
    channels: usize,
    din: [usize; 3],
    g: &ConvGeom,
    dout: [usize; 3],
    x: &mut [F],
) {
    let [kd, kh, kw] = g.kernel;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.padding.map(|p| p as isize);
    let plane = dout[1] * dout[2];
    let p = dout[0] * plane;
    let vin = din[0] * din[1] * din[2];
    let mut row = 0;
    for c in 0..channels {
        let xc = &mut x[c * vin..(c + 1) * vin];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let src = &col[row * p..(row + 1) * p];
                    let mut o = 0;
                    for od in 0..dout[0] {
                        let id = (od * sd + a) as isize - pd;
                        if !in_range(id, din[0]) {
                            o += plane;
                            continue;
                        }
                        for oh in 0..dout[1] {
                            let ih = (oh * sh + b) as isize - ph;
                            if !in_range(ih, din[1]) {
                                o += dout[2];
                                continue;
                            }
                            let base = (id as usize * din[1] + ih as usize) * din[2];
                            let (lo, hi) = valid_range(dout[2], din[2], sw, e, pw);
                            if lo < hi {
                                let start = ((lo * sw + e) as isize - pw) as usize;
                                let xrow = &mut xc[base..base + din[2]];
                                for (k, &v) in src[o + lo..o + hi].iter().enumerate() {
                                    xrow[start + k * sw] += v;
                                }
                            }
                            o += dout[2];
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Cross-correlation of `x: (N, Ci, D, H, W)` with `w: (Co, Ci, kd, kh, kw)`.
pub fn conv<F: Float>(x: &Tensor<F>, w: &Tensor<F>, g: &ConvGeom) -> Tensor<F> {
    let (n, ci, din) = dims5(x.shape());
    let (co, wci, wk) = dims5(w.shape());
    assert_eq!(ci, wci, "conv input channels {ci} vs weight {wci}");
    assert_eq!(wk, g.kernel, "weight extent does not match geometry");
    let dout = g
        .conv_out(din)
        .unwrap_or_else(|| panic!("kernel {:?} larger than padded input {din:?}", g.kernel));
    let p: usize = dout.iter().product();
    let vin: usize = din.iter().product();
    let rows = ci * g.kvol();
    let mut out = vec![F::zero(); n * co * p];
    let mut col = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![F::zero(); rows * p]
    };
    let wm = MatRef::row_major(w.data(), co, rows);
    for s in 0..n {
        let xs = &x.data()[s * ci * vin..(s + 1) * ci * vin];
        let colm = if g.is_pointwise() {
            MatRef::row_major(xs, rows, p)
        } else {
            vol2col(xs, ci, din, g, dout, &mut col);
            MatRef::row_major(&col, rows, p)
        };
        gemm(F::one(), wm, colm, F::zero(), &mut out[s * co * p..(s + 1) * co * p]);
    }
    Tensor::from_vec(&[n, co, dout[0], dout[1], dout[2]], out)
}

/// Adjoint of [`conv`] with respect to its input: maps `y: (N, Co, ...)` back to
/// an `(N, Ci, din)` volume. This is also the forward pass of a transposed
/// convolution layer whose weight is stored as `(C_in_layer, C_out_layer, k)`.
pub fn conv_transpose<F: Float>(
    y: &Tensor<F>,
    w: &Tensor<F>,
    g: &ConvGeom,
    din: [usize; 3],
) -> Tensor<F> {
    let (n, co, dout) = dims5(y.shape());
    let (wco, ci, wk) = dims5(w.shape());
    assert_eq!(co, wco, "conv_transpose channels {co} vs weight {wco}");
    assert_eq!(wk, g.kernel, "weight extent does not match geometry");
    assert_eq!(
        g.conv_out(din),
        Some(dout),
        "transposed output {din:?} inconsistent with input {dout:?}"
    );
    let p: usize = dout.iter().product();
    let vin: usize = din.iter().product();
    let rows = ci * g.kvol();
    let mut out = vec![F::zero(); n * ci * vin];
    let mut col = vec![F::zero(); rows * p];
    let wt = MatRef::row_major(w.data(), co, rows).t();
    for s in 0..n {
        let ys = MatRef::row_major(&y.data()[s * co * p..(s + 1) * co * p], co, p);
        let xs = &mut out[s * ci * vin..(s + 1) * ci * vin];
        if g.is_pointwise() {
            gemm(F::one(), wt, ys, F::zero(), xs);
        } else {
            gemm(F::one(), wt, ys, F::zero(), &mut col);
            col2vol(&col, ci, din, g, dout, xs);
        }
    }
    Tensor::from_vec(&[n, ci, din[0], din[1], din[2]], out)
}

/// Adjoint of [`conv`] with respect to its weight: `Σ_n gy_n · col(x_n)ᵀ`.
pub fn conv_weight_grad<F: Float>(x: &Tensor<F>, gy: &Tensor<F>, g: &ConvGeom) -> Tensor<F> {
    let (n, ci, din) = dims5(x.shape());
    let (gn, co, dout) = dims5(gy.shape());
    assert_eq!(n, gn, "batch mismatch");
    assert_eq!(g.conv_out(din), Some(dout), "gradient extent mismatch");
    let p: usize = dout.iter().product();
    let vin: usize = din.iter().product();
    let rows = ci * g.kvol();
    let mut out = vec![F::zero(); co * rows];
    let mut col = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![F::zero(); rows * p]
    };
    for s in 0..n {
        let xs = &x.data()[s * ci * vin..(s + 1) * ci * vin];
        let colm = if g.is_pointwise() {
            MatRef::row_major(xs, rows, p)
        } else {
            vol2col(xs, ci, din, g, dout, &mut col);
            MatRef::row_major(&col, rows, p)
        };
        let gys = MatRef::row_major(&gy.data()[s * co * p..(s + 1) * co * p], co, p);
        gemm(F::one(), gys, colm.t(), F::one(), &mut out);
    }
    let [kd, kh, kw] = g.kernel;
    Tensor::from_vec(&[co, ci, kd, kh, kw], out)
}
