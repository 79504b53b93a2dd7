//! Dense row-major n-dimensional arrays and the raw kernels the autograd layer
//! is built from.
//!
//! Storage is shared (`Arc`), so cloning a tensor is cheap and tensors captured
//! by the autograd graph stay valid after parameters are replaced.

use std::fmt;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_err, Result};

/// Scalar element type. Implemented for `f32` (training) and `f64` (oracles
/// and gradient checks).
pub trait Float:
    num_traits::Float
    + num_traits::FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + fmt::Debug
    + fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    const DTYPE: &'static str;
    const BYTES: usize;

    /// # Safety
    /// Same contract as `matrixmultiply::sgemm`: every addressed element of
    /// `a`, `b` and `c` must be in bounds, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Float for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Float for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

#[inline]
pub fn cast<F: Float>(v: f64) -> F {
    F::from_f64(v).expect("value representable in target float type")
}

/// A read-only strided view of a matrix inside a slice.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a, F> {
    pub data: &'a [F],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, F> MatRef<'a, F> {
    pub fn row_major(data: &'a [F], rows: usize, cols: usize) -> Self {
        MatRef {
            data,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        MatRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn in_bounds(&self) -> bool {
        self.rows == 0
            || self.cols == 0
            || (self.rows - 1) * self.rs + (self.cols - 1) * self.cs < self.data.len()
    }
}

/// `c = alpha * a * b + beta * c` with `c` row-major contiguous.
pub(crate) fn gemm<F: Float>(alpha: F, a: MatRef<F>, b: MatRef<F>, beta: F, c: &mut [F]) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    assert!(a.in_bounds() && b.in_bounds(), "gemm operand out of bounds");
    assert_eq!(c.len(), a.rows * b.cols, "gemm output size");
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    // SAFETY: operand extents were checked above; `c` is an exclusive borrow.
    unsafe {
        F::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            b.cols as isize,
            1,
        )
    }
}

pub fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for (s, &d) in strides.iter_mut().zip(shape).rev() {
        *s = acc;
        acc *= d;
    }
    strides
}

/// Numpy-style broadcast of two shapes (right-aligned, size-1 dims stretch).
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides that read `src` as if it were broadcast to `target`.
fn broadcast_strides(src: &[usize], target: &[usize]) -> Option<Vec<usize>> {
    if src.len() > target.len() {
        return None;
    }
    let off = target.len() - src.len();
    let cs = contiguous_strides(src);
    let mut strides = vec![0; target.len()];
    for (i, &t) in target.iter().enumerate().skip(off) {
        let s = src[i - off];
        if s == t {
            strides[i] = if s == 1 { 0 } else { cs[i - off] };
        } else if s == 1 {
            strides[i] = 0;
        } else {
            return None;
        }
    }
    Some(strides)
}

/// Visits every element of `shape` in row-major order with its strided offset.
fn for_each_offset(shape: &[usize], strides: &[usize], mut f: impl FnMut(usize, usize)) {
    let nd = shape.len();
    if nd == 0 {
        f(0, 0);
        return;
    }
    if shape.iter().any(|&d| d == 0) {
        return;
    }
    let inner = shape[nd - 1];
    let s_in = strides[nd - 1];
    let mut idx = vec![0usize; nd - 1];
    let mut base = 0usize;
    let mut out = 0usize;
    loop {
        let mut off = base;
        for _ in 0..inner {
            f(out, off);
            out += 1;
            off += s_in;
        }
        let mut d = nd - 1;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            base += strides[d];
            if idx[d] < shape[d] {
                break;
            }
            base -= strides[d] * shape[d];
            idx[d] = 0;
        }
    }
}

fn for_each_offset2(
    shape: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let nd = shape.len();
    if nd == 0 {
        f(0, 0, 0);
        return;
    }
    if shape.iter().any(|&d| d == 0) {
        return;
    }
    let inner = shape[nd - 1];
    let (ia, ib) = (sa[nd - 1], sb[nd - 1]);
    let mut idx = vec![0usize; nd - 1];
    let (mut base_a, mut base_b) = (0usize, 0usize);
    let mut out = 0usize;
    loop {
        let (mut oa, mut ob) = (base_a, base_b);
        for _ in 0..inner {
            f(out, oa, ob);
            out += 1;
            oa += ia;
            ob += ib;
        }
        let mut d = nd - 1;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            base_a += sa[d];
            base_b += sb[d];
            if idx[d] < shape[d] {
                break;
            }
            base_a -= sa[d] * shape[d];
            base_b -= sb[d] * shape[d];
            idx[d] = 0;
        }
    }
}

#[derive(Clone)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Arc<Vec<F>>,
}

impl<F: Float> PartialEq for Tensor<F> {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data
    }
}

impl<F: Float> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.numel() <= 16 {
            write!(f, " {:?}", &self.data[..])?;
        }
        Ok(())
    }
}

impl<F: Float> Tensor<F> {
    /// Panics if `data.len()` does not match the shape; use [`Tensor::try_from_vec`]
    /// for untrusted input.
    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "data length does not match shape {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(data),
        }
    }

    pub fn try_from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return shape_err(format!(
                "{} values cannot fill shape {shape:?}",
                data.len()
            ));
        }
        Ok(Self::from_vec(shape, data))
    }

    pub fn full(shape: &[usize], v: F) -> Self {
        Self::from_vec(shape, vec![v; shape.iter().product()])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, F::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, F::one())
    }

    pub fn scalar(v: F) -> Self {
        Self::from_vec(&[], vec![v])
    }

    pub fn randn(shape: &[usize], std: f64, rng: &mut impl Rng) -> Self {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| cast::<F>(rng.sample::<f64, _>(StandardNormal) * std))
            .collect();
        Self::from_vec(shape, data)
    }

    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| cast::<F>(rng.random_range(lo..hi)))
            .collect();
        Self::from_vec(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<F> {
        self.data.to_vec()
    }

    pub fn into_vec(self) -> Vec<F> {
        Arc::try_unwrap(self.data).unwrap_or_else(|d| (*d).clone())
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> F {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn at(&self, idx: &[usize]) -> F {
        assert_eq!(idx.len(), self.ndim());
        let off: usize = idx
            .iter()
            .zip(contiguous_strides(&self.shape))
            .map(|(i, s)| i * s)
            .sum();
        self.data[off]
    }

    pub fn cast<G: Float>(&self) -> Tensor<G> {
        Tensor::from_vec(
            &self.shape,
            self.data
                .iter()
                .map(|v| G::from_f64(v.to_f64().unwrap()).unwrap())
                .collect(),
        )
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(&self, shape: &[usize]) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.numel(),
            "cannot reshape {:?} to {shape:?}",
            self.shape
        );
        Tensor {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        }
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self::from_vec(&self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise binary op with broadcasting.
    pub fn zip_map(&self, other: &Self, f: impl Fn(F, F) -> F) -> Self {
        if self.shape == other.shape {
            let data = self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect();
            return Self::from_vec(&self.shape, data);
        }
        let shape = broadcast_shape(&self.shape, &other.shape).unwrap_or_else(|| {
            panic!("shapes {:?} and {:?} do not broadcast", self.shape, other.shape)
        });
        let sa = broadcast_strides(&self.shape, &shape).unwrap();
        let sb = broadcast_strides(&other.shape, &shape).unwrap();
        let mut out = vec![F::zero(); shape.iter().product()];
        let (a, b) = (&self.data, &other.data);
        for_each_offset2(&shape, &sa, &sb, |i, oa, ob| out[i] = f(a[oa], b[ob]));
        Self::from_vec(&shape, out)
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip_map(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip_map(o, |a, b| a - b)
    }

    pub fn mul(&self, o: &Self) -> Self {
        self.zip_map(o, |a, b| a * b)
    }

    pub fn div(&self, o: &Self) -> Self {
        self.zip_map(o, |a, b| a / b)
    }

    pub fn scale(&self, s: F) -> Self {
        self.map(|v| v * s)
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Self {
        if self.shape == shape {
            return self.clone();
        }
        let strides = broadcast_strides(&self.shape, shape).unwrap_or_else(|| {
            panic!("cannot broadcast {:?} to {shape:?}", self.shape)
        });
        let mut out = vec![F::zero(); shape.iter().product()];
        let src = &self.data;
        for_each_offset(shape, &strides, |i, off| out[i] = src[off]);
        Self::from_vec(shape, out)
    }

    /// Sums over broadcast dimensions so the result has `shape`; the adjoint of
    /// [`Tensor::broadcast_to`].
    pub fn sum_to(&self, shape: &[usize]) -> Self {
        if self.shape == shape {
            return self.clone();
        }
        let strides = broadcast_strides(shape, &self.shape).unwrap_or_else(|| {
            panic!("cannot reduce {:?} to {shape:?}", self.shape)
        });
        let mut out = vec![F::zero(); shape.iter().product()];
        let src = &self.data;
        for_each_offset(&self.shape, &strides, |i, off| out[off] += src[i]);
        Self::from_vec(shape, out)
    }

    pub fn sum_axes_keepdim(&self, axes: &[usize]) -> Self {
        let mut target = self.shape.clone();
        for &a in axes {
            target[a] = 1;
        }
        self.sum_to(&target)
    }

    pub fn sum(&self) -> F {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> F {
        self.sum() / cast(self.numel() as f64)
    }

    pub fn max_abs(&self) -> F {
        self.data.iter().fold(F::zero(), |m, v| m.max(v.abs()))
    }

    pub fn norm(&self) -> F {
        self.data.iter().map(|&v| v * v).sum::<F>().sqrt()
    }

    pub fn permute(&self, axes: &[usize]) -> Self {
        assert_eq!(axes.len(), self.ndim(), "permute rank");
        let cs = contiguous_strides(&self.shape);
        let shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let strides: Vec<usize> = axes.iter().map(|&a| cs[a]).collect();
        let mut out = vec![F::zero(); self.numel()];
        let src = &self.data;
        for_each_offset(&shape, &strides, |i, off| out[i] = src[off]);
        Self::from_vec(&shape, out)
    }

    fn split_at_axis(&self, axis: usize) -> (usize, usize, usize) {
        let outer = self.shape[..axis].iter().product();
        let inner = self.shape[axis + 1..].iter().product();
        (outer, self.shape[axis], inner)
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Self {
        let (outer, n, inner) = self.split_at_axis(axis);
        assert!(start + len <= n, "narrow {start}+{len} beyond {n}");
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            out.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Self::from_vec(&shape, out)
    }

    /// Embeds `self` at `start` along `axis` in a zero tensor of extent `full`.
    pub fn pad_axis(&self, axis: usize, start: usize, full: usize) -> Self {
        let (outer, n, inner) = self.split_at_axis(axis);
        assert!(start + n <= full);
        let mut out = vec![F::zero(); outer * full * inner];
        for o in 0..outer {
            let dst = (o * full + start) * inner;
            out[dst..dst + n * inner]
                .copy_from_slice(&self.data[o * n * inner..(o + 1) * n * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = full;
        Self::from_vec(&shape, out)
    }

    pub fn concat(parts: &[&Self], axis: usize) -> Self {
        assert!(!parts.is_empty());
        let first = parts[0];
        for p in parts {
            assert_eq!(p.ndim(), first.ndim());
            for d in 0..first.ndim() {
                if d != axis {
                    assert_eq!(p.shape[d], first.shape[d], "concat shape mismatch");
                }
            }
        }
        let outer: usize = first.shape[..axis].iter().product();
        let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let blk = p.shape[axis] * inner;
                out.extend_from_slice(&p.data[o * blk..(o + 1) * blk]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total;
        Self::from_vec(&shape, out)
    }

    /// 2-D matrix product.
    pub fn matmul(&self, other: &Self) -> Self {
        assert!(self.ndim() == 2 && other.ndim() == 2, "matmul expects matrices");
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        assert_eq!(k, k2, "matmul inner dimension");
        let mut out = vec![F::zero(); m * n];
        gemm(
            F::one(),
            MatRef::row_major(&self.data, m, k),
            MatRef::row_major(&other.data, k, n),
            F::zero(),
            &mut out,
        );
        Self::from_vec(&[m, n], out)
    }

    pub fn max_abs_diff(&self, other: &Self) -> F {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(other.data.iter())
            .fold(F::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}
