use ndarray::{concatenate, Axis, Slice as NdSlice};
use ndarray::{ArrayD, Ix2, Ix3, IxDyn};

use crate::conv::{col2im_array, im2col_array, ConvSpec};
use crate::tape::{Op, Var};

impl Var {
    fn unary(&self, op: Op, value: ArrayD<f64>) -> Var {
        self.tape.push(value, op)
    }

    pub fn add(&self, rhs: &Var) -> Var {
        self.assert_same_tape(rhs);
        let v = self.with_value(|a| rhs.with_value(|b| {
            assert_eq!(a.shape(), b.shape(), "add: shape mismatch {:?} vs {:?}", a.shape(), b.shape());
            a + b
        }));
        self.tape.push(v, Op::Add(self.idx, rhs.idx))
    }

    pub fn sub(&self, rhs: &Var) -> Var {
        self.assert_same_tape(rhs);
        let v = self.with_value(|a| rhs.with_value(|b| {
            assert_eq!(a.shape(), b.shape(), "sub: shape mismatch {:?} vs {:?}", a.shape(), b.shape());
            a - b
        }));
        self.tape.push(v, Op::Sub(self.idx, rhs.idx))
    }

    pub fn mul(&self, rhs: &Var) -> Var {
        self.assert_same_tape(rhs);
        let v = self.with_value(|a| rhs.with_value(|b| {
            assert_eq!(a.shape(), b.shape(), "mul: shape mismatch {:?} vs {:?}", a.shape(), b.shape());
            a * b
        }));
        self.tape.push(v, Op::Mul(self.idx, rhs.idx))
    }

    pub fn div(&self, rhs: &Var) -> Var {
        self.assert_same_tape(rhs);
        let v = self.with_value(|a| rhs.with_value(|b| {
            assert_eq!(a.shape(), b.shape(), "div: shape mismatch {:?} vs {:?}", a.shape(), b.shape());
            a / b
        }));
        self.tape.push(v, Op::Div(self.idx, rhs.idx))
    }

    pub fn neg(&self) -> Var {
        let v = self.with_value(|a| a.mapv(|x| -x));
        self.unary(Op::Neg(self.idx), v)
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        let v = self.with_value(|a| a.mapv(|x| x + c));
        self.unary(Op::AddScalar(self.idx, c), v)
    }

    pub fn mul_scalar(&self, c: f64) -> Var {
        let v = self.with_value(|a| a.mapv(|x| x * c));
        self.unary(Op::MulScalar(self.idx, c), v)
    }

    pub fn square(&self) -> Var {
        let v = self.with_value(|a| a.mapv(|x| x * x));
        self.unary(Op::Square(self.idx), v)
    }

    pub fn sqrt(&self) -> Var {
        let v = self.with_value(|a| a.mapv(f64::sqrt));
        self.unary(Op::Sqrt(self.idx), v)
    }

    pub fn exp(&self) -> Var {
        let v = self.with_value(|a| a.mapv(f64::exp));
        self.unary(Op::Exp(self.idx), v)
    }

    pub fn ln(&self) -> Var {
        let v = self.with_value(|a| a.mapv(f64::ln));
        self.unary(Op::Ln(self.idx), v)
    }

    pub fn abs(&self) -> Var {
        let v = self.with_value(|a| a.mapv(f64::abs));
        self.unary(Op::Abs(self.idx), v)
    }

    pub fn relu(&self) -> Var {
        let v = self.with_value(|a| a.mapv(|x| x.max(0.0)));
        self.unary(Op::Relu(self.idx), v)
    }

    pub fn leaky_relu(&self, slope: f64) -> Var {
        let v = self.with_value(|a| a.mapv(|x| if x > 0.0 { x } else { slope * x }));
        self.unary(Op::LeakyRelu(self.idx, slope), v)
    }

    pub fn sigmoid(&self) -> Var {
        let v = self.with_value(|a| a.mapv(sigmoid_stable));
        self.unary(Op::Sigmoid(self.idx), v)
    }

    pub fn tanh(&self) -> Var {
        let v = self.with_value(|a| a.mapv(f64::tanh));
        self.unary(Op::Tanh(self.idx), v)
    }

    /// ln(1 + e^x), evaluated without overflow.
    pub fn softplus(&self) -> Var {
        let v = self.with_value(|a| a.mapv(softplus_stable));
        self.unary(Op::Softplus(self.idx), v)
    }

    /// x^p for x >= 0. p == 0 yields a constant 1 with zero gradient.
    pub fn powf(&self, p: f64) -> Var {
        if p == 0.0 {
            let ones = self.with_value(|a| ArrayD::from_elem(a.raw_dim(), 1.0));
            return self.tape.constant(ones);
        }
        let v = self.with_value(|a| a.mapv(|x| x.powf(p)));
        self.unary(Op::Powf(self.idx, p), v)
    }

    /// Clamp to [lo, hi]; gradient passes through the interior only.
    pub fn clamp(&self, lo: f64, hi: f64) -> Var {
        assert!(lo < hi, "clamp: lo must be < hi");
        let v = self.with_value(|a| a.mapv(|x| x.clamp(lo, hi)));
        self.unary(Op::Clamp(self.idx, lo, hi), v)
    }

    /// Sum of all elements, as a 0-d tensor.
    pub fn sum_all(&self) -> Var {
        let v = self.with_value(|a| ArrayD::from_elem(IxDyn(&[]), a.sum()));
        self.unary(Op::SumAll(self.idx), v)
    }

    pub fn mean_all(&self) -> Var {
        let n = self.numel();
        assert!(n > 0, "mean of empty tensor");
        self.sum_all().mul_scalar(1.0 / n as f64)
    }

    /// Sum over one axis (rank decreases by one).
    pub fn sum_axis(&self, ax: usize) -> Var {
        let v = self.with_value(|a| {
            assert!(ax < a.ndim(), "sum_axis: axis {} out of range for {:?}", ax, a.shape());
            a.sum_axis(Axis(ax)).into_dyn()
        });
        self.unary(Op::SumAxis(self.idx, ax), v)
    }

    /// Sum over several axes (descending order internally).
    pub fn sum_axes(&self, axes: &[usize]) -> Var {
        let mut sorted: Vec<usize> = axes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut out = self.clone();
        for ax in sorted.into_iter().rev() {
            out = out.sum_axis(ax);
        }
        out
    }

    pub fn reshape(&self, shape: &[usize]) -> Var {
        let v = self.with_value(|a| {
            let n: usize = shape.iter().product();
            assert_eq!(a.len(), n, "reshape: cannot view {:?} as {:?}", a.shape(), shape);
            a.to_shape(IxDyn(shape)).unwrap().into_owned()
        });
        self.unary(Op::Reshape(self.idx), v)
    }

    pub fn permute(&self, axes: &[usize]) -> Var {
        let v = self.with_value(|a| {
            assert_eq!(axes.len(), a.ndim(), "permute: axes {:?} vs rank {}", axes, a.ndim());
            a.clone().permuted_axes(IxDyn(axes)).as_standard_layout().into_owned()
        });
        self.unary(Op::Permute(self.idx, axes.to_vec()), v)
    }

    /// Broadcast a 0-d tensor or a same-rank tensor with 1-sized axes.
    pub fn broadcast_to(&self, shape: &[usize]) -> Var {
        let v = self.with_value(|a| {
            assert!(
                a.ndim() == 0 || a.ndim() == shape.len(),
                "broadcast_to: rank {} incompatible with {:?}",
                a.ndim(),
                shape
            );
            a.broadcast(IxDyn(shape))
                .unwrap_or_else(|| panic!("broadcast_to: {:?} -> {:?}", a.shape(), shape))
                .as_standard_layout()
                .into_owned()
        });
        self.unary(Op::BroadcastTo(self.idx), v)
    }

    pub fn concat(&self, rhs: &Var, axis: usize) -> Var {
        self.assert_same_tape(rhs);
        let v = self.with_value(|a| rhs.with_value(|b| {
            concatenate(Axis(axis), &[a.view(), b.view()])
                .unwrap_or_else(|e| panic!("concat along {}: {}", axis, e))
        }));
        let v = if v.is_standard_layout() { v } else { v.as_standard_layout().into_owned() };
        self.tape.push(v, Op::Concat(self.idx, rhs.idx, axis))
    }

    pub fn slice_axis(&self, axis: usize, start: usize, len: usize) -> Var {
        let v = self.with_value(|a| {
            assert!(start + len <= a.shape()[axis], "slice_axis out of bounds");
            a.slice_axis(Axis(axis), NdSlice::from(start..start + len))
                .as_standard_layout()
                .into_owned()
        });
        self.unary(Op::Slice(self.idx, axis, start, len), v)
    }

    /// w[m,k] x[n,k,l] -> y[n,m,l]; shared left operand across the batch.
    pub fn matmul_bc(&self, x: &Var) -> Var {
        self.assert_same_tape(x);
        let v = self.with_value(|w| x.with_value(|xv| {
            let w2 = w.view().into_dimensionality::<Ix2>().expect("matmul_bc: left must be 2-d");
            let x3 = xv.view().into_dimensionality::<Ix3>().expect("matmul_bc: right must be 3-d");
            let (m, k) = w2.dim();
            let (n, k2, l) = x3.dim();
            assert_eq!(k, k2, "matmul_bc: inner dims {} vs {}", k, k2);
            let mut out = ndarray::Array3::<f64>::zeros((n, m, l));
            for ni in 0..n {
                let mut o = out.index_axis_mut(Axis(0), ni);
                ndarray::linalg::general_mat_mul(1.0, &w2, &x3.index_axis(Axis(0), ni), 0.0, &mut o);
            }
            out.into_dyn()
        }));
        self.tape.push(v, Op::MatmulBc(self.idx, x.idx))
    }

    /// a[n,m,l] b[n,k,l] -> sum_n a_n b_n^T, shape [m,k].
    pub fn contract(&self, b: &Var) -> Var {
        self.assert_same_tape(b);
        let v = self.with_value(|av| b.with_value(|bv| {
            let a3 = av.view().into_dimensionality::<Ix3>().expect("contract: left must be 3-d");
            let b3 = bv.view().into_dimensionality::<Ix3>().expect("contract: right must be 3-d");
            let (n, m, l) = a3.dim();
            let (n2, k, l2) = b3.dim();
            assert_eq!(n, n2, "contract: batch dims {} vs {}", n, n2);
            assert_eq!(l, l2, "contract: trailing dims {} vs {}", l, l2);
            let mut out = ndarray::Array2::<f64>::zeros((m, k));
            for ni in 0..n {
                let an = a3.index_axis(Axis(0), ni);
                let bn = b3.index_axis(Axis(0), ni);
                ndarray::linalg::general_mat_mul(1.0, &an, &bn.t(), 1.0, &mut out);
            }
            out.into_dyn()
        }));
        self.tape.push(v, Op::Contract(self.idx, b.idx))
    }

    /// Plain 2-d matmul a[m,k] b[k,n] -> [m,n], built on matmul_bc.
    pub fn matmul(&self, b: &Var) -> Var {
        let bs = b.shape();
        assert_eq!(bs.len(), 2, "matmul: right must be 2-d");
        let b3 = b.reshape(&[1, bs[0], bs[1]]);
        let y = self.matmul_bc(&b3);
        let ys = y.shape();
        y.reshape(&[ys[1], ys[2]])
    }

    pub fn im2col(&self, spec: ConvSpec) -> Var {
        let v = self.with_value(|a| im2col_array(a, spec));
        self.unary(Op::Im2col(self.idx, spec), v)
    }

    pub fn col2im(&self, spec: ConvSpec, h: usize, w: usize) -> Var {
        let v = self.with_value(|a| col2im_array(a, spec, h, w));
        self.unary(Op::Col2im(self.idx, spec, h, w), v)
    }

    /// Mask with 1.0 where the predicate holds, as a constant node.
    pub fn mask_where(&self, pred: impl Fn(f64) -> bool) -> Var {
        let m = self.with_value(|a| a.mapv(|x| if pred(x) { 1.0 } else { 0.0 }));
        self.tape.constant(m)
    }
}

pub(crate) fn sigmoid_stable(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus_stable(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
