use super::{Backward, Var};
use crate::conv::{self as kernels, ConvGeom};
use crate::tensor::{broadcast_shape, cast, Float, Tensor};

macro_rules! op {
    ($name:ident { $($field:ident : $ty:ty),* $(,)? } => |$s:ident, $inputs:ident, $out:ident, $g:ident| $body:expr) => {
        struct $name<F: Float> {
            $($field: $ty,)*
            _f: std::marker::PhantomData<F>,
        }

        impl<F: Float> Backward<F> for $name<F> {
            #[allow(unused_variables)]
            fn backward(&self, $inputs: &[Var<F>], $out: &Var<F>, $g: &Var<F>) -> Vec<Option<Var<F>>> {
                let $s = self;
                $body
            }
        }
    };
}

op!(AddOp {} => |s, i, o, g| vec![
    Some(g.sum_to(i[0].shape())),
    Some(g.sum_to(i[1].shape())),
]);

op!(SubOp {} => |s, i, o, g| vec![
    Some(g.sum_to(i[0].shape())),
    Some(g.neg().sum_to(i[1].shape())),
]);

op!(MulOp {} => |s, i, o, g| vec![
    Some(g.mul(&i[1]).sum_to(i[0].shape())),
    Some(g.mul(&i[0]).sum_to(i[1].shape())),
]);

op!(DivOp {} => |s, i, o, g| vec![
    Some(g.div(&i[1]).sum_to(i[0].shape())),
    Some(g.mul(o).div(&i[1]).neg().sum_to(i[1].shape())),
]);

op!(ScaleOp { c: F } => |s, i, o, g| vec![Some(g.scale_f(s.c))]);

op!(IdentityOp {} => |s, i, o, g| vec![Some(g.clone())]);

op!(ExpOp {} => |s, i, o, g| vec![Some(g.mul(o))]);

op!(LnOp {} => |s, i, o, g| vec![Some(g.div(&i[0]))]);

op!(SqrtOp {} => |s, i, o, g| vec![Some(g.div(o).scale(0.5))]);

op!(SquareOp {} => |s, i, o, g| vec![Some(g.mul(&i[0]).scale(2.0))]);

op!(SigmoidOp {} => |s, i, o, g| vec![Some(g.mul(&o.mul(&o.neg().add_scalar(1.0))))]);

op!(TanhOp {} => |s, i, o, g| vec![Some(g.mul(&o.square().neg().add_scalar(1.0)))]);

// Piecewise-linear ops: derivative is a constant mask.
op!(MaskOp { mask: Tensor<F> } => |s, i, o, g| vec![Some(g.mul_const(&s.mask))]);

op!(BroadcastOp {} => |s, i, o, g| vec![Some(g.sum_to(i[0].shape()))]);

op!(SumToOp {} => |s, i, o, g| vec![Some(g.broadcast_to(i[0].shape()))]);

op!(ReshapeOp {} => |s, i, o, g| vec![Some(g.reshape(i[0].shape()))]);

op!(PermuteOp { inverse: Vec<usize> } => |s, i, o, g| vec![Some(g.permute(&s.inverse))]);

op!(NarrowOp { axis: usize, start: usize } => |s, i, o, g| vec![
    Some(g.pad_axis(s.axis, s.start, i[0].shape()[s.axis]))
]);

op!(PadOp { axis: usize, start: usize } => |s, i, o, g| vec![
    Some(g.narrow(s.axis, s.start, i[0].shape()[s.axis]))
]);

op!(ConcatOp { axis: usize } => |s, i, o, g| {
    let mut start = 0;
    i.iter()
        .map(|inp| {
            let len = inp.shape()[s.axis];
            let part = g.narrow(s.axis, start, len);
            start += len;
            Some(part)
        })
        .collect()
});

op!(MatmulOp {} => |s, i, o, g| vec![
    Some(g.matmul(&i[1].t())),
    Some(i[0].t().matmul(g)),
]);

op!(ConvOp { geom: ConvGeom } => |s, i, o, g| {
    let x = &i[0];
    let din = [x.shape()[2], x.shape()[3], x.shape()[4]];
    vec![
        Some(conv_transpose(g, &i[1], &s.geom, din)),
        Some(conv_weight_grad(x, g, &s.geom)),
    ]
});

op!(ConvTransposeOp { geom: ConvGeom } => |s, i, o, g| vec![
    Some(conv(g, &i[1], &s.geom)),
    Some(conv_weight_grad(g, &i[0], &s.geom)),
]);

op!(WeightGradOp { geom: ConvGeom } => |s, i, o, g| {
    let x = &i[0];
    let din = [x.shape()[2], x.shape()[3], x.shape()[4]];
    vec![
        Some(conv_transpose(&i[1], g, &s.geom, din)),
        Some(conv(x, g, &s.geom)),
    ]
});

fn unary<F: Float>(x: &Var<F>, value: Tensor<F>, op: impl Backward<F> + 'static) -> Var<F> {
    Var::from_op(value, vec![x.clone()], op)
}

macro_rules! mk {
    ($name:ident) => {
        $name { _f: std::marker::PhantomData }
    };
    ($name:ident { $($field:ident : $val:expr),* }) => {
        $name { $($field: $val,)* _f: std::marker::PhantomData }
    };
}

impl<F: Float> Var<F> {
    pub fn add(&self, o: &Var<F>) -> Var<F> {
        let v = self.value().add(o.value());
        Var::from_op(v, vec![self.clone(), o.clone()], mk!(AddOp))
    }

    pub fn sub(&self, o: &Var<F>) -> Var<F> {
        let v = self.value().sub(o.value());
        Var::from_op(v, vec![self.clone(), o.clone()], mk!(SubOp))
    }

    pub fn mul(&self, o: &Var<F>) -> Var<F> {
        let v = self.value().mul(o.value());
        Var::from_op(v, vec![self.clone(), o.clone()], mk!(MulOp))
    }

    pub fn div(&self, o: &Var<F>) -> Var<F> {
        let v = self.value().div(o.value());
        Var::from_op(v, vec![self.clone(), o.clone()], mk!(DivOp))
    }

    pub fn neg(&self) -> Var<F> {
        self.scale_f(-F::one())
    }

    pub fn scale(&self, c: f64) -> Var<F> {
        self.scale_f(cast(c))
    }

    pub fn scale_f(&self, c: F) -> Var<F> {
        unary(self, self.value().scale(c), mk!(ScaleOp { c: c }))
    }

    pub fn add_scalar(&self, c: f64) -> Var<F> {
        let c: F = cast(c);
        unary(self, self.value().map(|v| v + c), mk!(IdentityOp))
    }

    pub fn exp(&self) -> Var<F> {
        unary(self, self.value().map(|v| v.exp()), mk!(ExpOp))
    }

    pub fn ln(&self) -> Var<F> {
        unary(self, self.value().map(|v| v.ln()), mk!(LnOp))
    }

    pub fn sqrt(&self) -> Var<F> {
        unary(self, self.value().map(|v| v.sqrt()), mk!(SqrtOp))
    }

    pub fn square(&self) -> Var<F> {
        unary(self, self.value().map(|v| v * v), mk!(SquareOp))
    }

    pub fn sigmoid(&self) -> Var<F> {
        let one = F::one();
        let v = self.value().map(|x| {
            if x >= F::zero() {
                one / (one + (-x).exp())
            } else {
                let e = x.exp();
                e / (one + e)
            }
        });
        unary(self, v, mk!(SigmoidOp))
    }

    pub fn tanh(&self) -> Var<F> {
        unary(self, self.value().map(|v| v.tanh()), mk!(TanhOp))
    }

    pub fn leaky_relu(&self, alpha: f64) -> Var<F> {
        let a: F = cast(alpha);
        let x = self.value();
        let mask = x.map(|v| if v > F::zero() { F::one() } else { a });
        unary(self, x.mul(&mask), mk!(MaskOp { mask: mask }))
    }

    /// `max(0, x)`.
    pub fn relu(&self) -> Var<F> {
        self.clamp_min(0.0)
    }

    /// `max(m, x)`; the gradient passes only where `x > m`.
    pub fn clamp_min(&self, m: f64) -> Var<F> {
        let m: F = cast(m);
        let x = self.value();
        let mask = x.map(|v| if v > m { F::one() } else { F::zero() });
        let v = x.map(|v| if v > m { v } else { m });
        unary(self, v, mk!(MaskOp { mask: mask }))
    }

    /// Product with a constant tensor of the same shape (no gradient to `c`).
    pub fn mul_const(&self, c: &Tensor<F>) -> Var<F> {
        assert_eq!(self.shape(), c.shape(), "mul_const shape");
        unary(self, self.value().mul(c), mk!(MaskOp { mask: c.clone() }))
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Var<F> {
        if self.shape() == shape {
            return self.clone();
        }
        unary(self, self.value().broadcast_to(shape), mk!(BroadcastOp))
    }

    pub fn sum_to(&self, shape: &[usize]) -> Var<F> {
        if self.shape() == shape {
            return self.clone();
        }
        unary(self, self.value().sum_to(shape), mk!(SumToOp))
    }

    pub fn sum_axes(&self, axes: &[usize]) -> Var<F> {
        let mut target = self.shape().to_vec();
        for &a in axes {
            target[a] = 1;
        }
        self.sum_to(&target)
    }

    pub fn mean_axes(&self, axes: &[usize]) -> Var<F> {
        let count: usize = axes.iter().map(|&a| self.shape()[a]).product();
        self.sum_axes(axes).scale(1.0 / count as f64)
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum_all(&self) -> Var<F> {
        self.sum_to(&[])
    }

    pub fn mean_all(&self) -> Var<F> {
        let n = self.value().numel();
        self.sum_all().scale(1.0 / n as f64)
    }

    pub fn reshape(&self, shape: &[usize]) -> Var<F> {
        if self.shape() == shape {
            return self.clone();
        }
        unary(self, self.value().reshape(shape), mk!(ReshapeOp))
    }

    pub fn permute(&self, axes: &[usize]) -> Var<F> {
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        unary(self, self.value().permute(axes), mk!(PermuteOp { inverse: inverse }))
    }

    /// Transpose of a matrix.
    pub fn t(&self) -> Var<F> {
        self.permute(&[1, 0])
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Var<F> {
        if start == 0 && len == self.shape()[axis] {
            return self.clone();
        }
        unary(
            self,
            self.value().narrow(axis, start, len),
            mk!(NarrowOp { axis: axis, start: start }),
        )
    }

    pub fn pad_axis(&self, axis: usize, start: usize, full: usize) -> Var<F> {
        unary(
            self,
            self.value().pad_axis(axis, start, full),
            mk!(PadOp { axis: axis, start: start }),
        )
    }

    pub fn concat(parts: &[Var<F>], axis: usize) -> Var<F> {
        if parts.len() == 1 {
            return parts[0].clone();
        }
        let tensors: Vec<&Tensor<F>> = parts.iter().map(|p| p.value()).collect();
        Var::from_op(Tensor::concat(&tensors, axis), parts.to_vec(), mk!(ConcatOp { axis: axis }))
    }

    pub fn matmul(&self, o: &Var<F>) -> Var<F> {
        let v = self.value().matmul(o.value());
        Var::from_op(v, vec![self.clone(), o.clone()], mk!(MatmulOp))
    }

    /// Elementwise op result shape for two operands.
    pub fn broadcast_shape_with(&self, o: &Var<F>) -> Option<Vec<usize>> {
        broadcast_shape(self.shape(), o.shape())
    }
}

pub fn conv<F: Float>(x: &Var<F>, w: &Var<F>, geom: &ConvGeom) -> Var<F> {
    let v = kernels::conv(x.value(), w.value(), geom);
    Var::from_op(v, vec![x.clone(), w.clone()], mk!(ConvOp { geom: *geom }))
}

pub fn conv_transpose<F: Float>(y: &Var<F>, w: &Var<F>, geom: &ConvGeom, din: [usize; 3]) -> Var<F> {
    let v = kernels::conv_transpose(y.value(), w.value(), geom, din);
    Var::from_op(v, vec![y.clone(), w.clone()], mk!(ConvTransposeOp { geom: *geom }))
}

pub fn conv_weight_grad<F: Float>(x: &Var<F>, gy: &Var<F>, geom: &ConvGeom) -> Var<F> {
    let v = kernels::conv_weight_grad(x.value(), gy.value(), geom);
    Var::from_op(v, vec![x.clone(), gy.clone()], mk!(WeightGradOp { geom: *geom }))
}
