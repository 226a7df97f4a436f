//! Parameterized layers over the autodiff tape.

use mcr_autodiff::{conv2d, conv_transpose2d, ConvSpec, Var};
use ndarray::{ArrayD, IxDyn};
use rand_chacha::ChaCha12Rng;

use crate::seeds;
use super::varstore::{Ctx, Section, VarStore};

/// Builder that registers freshly initialized tensors under a name prefix.
pub struct NetBuilder<'a> {
    pub vs: &'a mut VarStore,
    pub rng: ChaCha12Rng,
}

impl<'a> NetBuilder<'a> {
    pub fn new(vs: &'a mut VarStore, seed: u64) -> Self {
        NetBuilder {
            vs,
            rng: seeds::rng_from(seed, &["init"]),
        }
    }

    fn normal(&mut self, shape: &[usize], std: f64) -> ArrayD<f64> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| seeds::randn(&mut self.rng) * std).collect();
        ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
    }

    fn zeros(&self, shape: &[usize]) -> ArrayD<f64> {
        ArrayD::zeros(IxDyn(shape))
    }

    fn ones(&self, shape: &[usize]) -> ArrayD<f64> {
        ArrayD::from_elem(IxDyn(shape), 1.0)
    }
}

/// Weight std shared by every conv/linear layer (DCGAN-style init).
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: String,
    pub b: Option<String>,
    pub spec: ConvSpec,
    pub in_c: usize,
    pub out_c: usize,
}

impl Conv2d {
    pub fn new(
        nb: &mut NetBuilder,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Self {
        let w = format!("{name}.w");
        let init = nb.normal(&[out_c, in_c * k * k], INIT_STD);
        nb.vs.add(&w, Section::Param, init);
        let b = bias.then(|| {
            let b = format!("{name}.b");
            let z = nb.zeros(&[out_c]);
            nb.vs.add(&b, Section::Param, z);
            b
        });
        Conv2d {
            w,
            b,
            spec: ConvSpec::square(k, stride, pad),
            in_c,
            out_c,
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Var {
        let w = ctx.param(&self.w);
        let b = self.b.as_ref().map(|n| ctx.param(n));
        conv2d(x, &w, b.as_ref(), self.spec)
    }
}

#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub w: String,
    pub b: Option<String>,
    pub spec: ConvSpec,
    pub in_c: usize,
    pub out_c: usize,
}

impl ConvTranspose2d {
    pub fn new(
        nb: &mut NetBuilder,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Self {
        let w = format!("{name}.w");
        let init = nb.normal(&[in_c, out_c * k * k], INIT_STD);
        nb.vs.add(&w, Section::Param, init);
        let b = bias.then(|| {
            let b = format!("{name}.b");
            let z = nb.zeros(&[out_c]);
            nb.vs.add(&b, Section::Param, z);
            b
        });
        ConvTranspose2d {
            w,
            b,
            spec: ConvSpec::square(k, stride, pad),
            in_c,
            out_c,
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Var {
        let w = ctx.param(&self.w);
        let b = self.b.as_ref().map(|n| ctx.param(n));
        conv_transpose2d(x, &w, b.as_ref(), self.spec)
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: String,
    pub b: String,
    pub in_f: usize,
    pub out_f: usize,
}

impl Linear {
    pub fn new(nb: &mut NetBuilder, name: &str, in_f: usize, out_f: usize) -> Self {
        let w = format!("{name}.w");
        let b = format!("{name}.b");
        let init = nb.normal(&[out_f, in_f], INIT_STD);
        nb.vs.add(&w, Section::Param, init);
        let z = nb.zeros(&[out_f]);
        nb.vs.add(&b, Section::Param, z);
        Linear { w, b, in_f, out_f }
    }

    /// x: [n, in_f] -> [n, out_f]
    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Var {
        let n = x.shape()[0];
        let w = ctx.param(&self.w);
        let xt = x.permute(&[1, 0]).reshape(&[1, self.in_f, n]);
        let y = w.matmul_bc(&xt).reshape(&[self.out_f, n]).permute(&[1, 0]);
        let b = ctx
            .param(&self.b)
            .reshape(&[1, self.out_f])
            .broadcast_to(&[n, self.out_f]);
        y.add(&b)
    }
}

/// Per-sample, per-channel normalization with affine weights.
#[derive(Debug, Clone)]
pub struct InstanceNorm2d {
    pub gamma: String,
    pub beta: String,
    pub channels: usize,
    pub eps: f64,
}

impl InstanceNorm2d {
    pub fn new(nb: &mut NetBuilder, name: &str, channels: usize) -> Self {
        let gamma = format!("{name}.gamma");
        let beta = format!("{name}.beta");
        let o = nb.ones(&[channels]);
        nb.vs.add(&gamma, Section::Param, o);
        let z = nb.zeros(&[channels]);
        nb.vs.add(&beta, Section::Param, z);
        InstanceNorm2d {
            gamma,
            beta,
            channels,
            eps: 1e-5,
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Var {
        let sh = x.shape();
        let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
        assert_eq!(c, self.channels, "instance norm channel mismatch");
        let hw = (h * w) as f64;
        let mean = x
            .reshape(&[n, c, h * w])
            .sum_axis(2)
            .mul_scalar(1.0 / hw)
            .reshape(&[n, c, 1, 1])
            .broadcast_to(&sh);
        let centered = x.sub(&mean);
        let var = centered
            .square()
            .reshape(&[n, c, h * w])
            .sum_axis(2)
            .mul_scalar(1.0 / hw)
            .reshape(&[n, c, 1, 1]);
        let denom = var.add_scalar(self.eps).sqrt().broadcast_to(&sh);
        let normed = centered.div(&denom);
        let g = ctx.param(&self.gamma).reshape(&[1, c, 1, 1]).broadcast_to(&sh);
        let b = ctx.param(&self.beta).reshape(&[1, c, 1, 1]).broadcast_to(&sh);
        normed.mul(&g).add(&b)
    }
}

/// Batch normalization with running statistics kept as buffers; the
/// forward pass queues the updated running stats on the Ctx.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: String,
    pub beta: String,
    pub running_mean: String,
    pub running_var: String,
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm2d {
    pub fn new(nb: &mut NetBuilder, name: &str, channels: usize) -> Self {
        let gamma = format!("{name}.gamma");
        let beta = format!("{name}.beta");
        let rm = format!("{name}.running_mean");
        let rv = format!("{name}.running_var");
        let o = nb.ones(&[channels]);
        nb.vs.add(&gamma, Section::Param, o);
        let z = nb.zeros(&[channels]);
        nb.vs.add(&beta, Section::Param, z);
        let zm = nb.zeros(&[channels]);
        nb.vs.add(&rm, Section::Buffer, zm);
        let ov = nb.ones(&[channels]);
        nb.vs.add(&rv, Section::Buffer, ov);
        BatchNorm2d {
            gamma,
            beta,
            running_mean: rm,
            running_var: rv,
            channels,
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Var {
        let sh = x.shape();
        let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
        assert_eq!(c, self.channels, "batch norm channel mismatch");
        let (mean, var) = if ctx.training {
            let m = (n * h * w) as f64;
            // [n,c,h,w] -> [c, n*h*w]
            let xc = x.permute(&[1, 0, 2, 3]).reshape(&[c, n * h * w]);
            let mean = xc.sum_axis(1).mul_scalar(1.0 / m);
            let centered = xc.sub(&mean.reshape(&[c, 1]).broadcast_to(&[c, n * h * w]));
            let var = centered.square().sum_axis(1).mul_scalar(1.0 / m);
            // queue running-stat update (unbiased variance, torch convention)
            let mom = self.momentum;
            let mv = mean.value();
            let unbiased = var.value().mapv(|v| v * m / (m - 1.0).max(1.0));
            let old_m = ctx.buffer_value(&self.running_mean);
            let old_v = ctx.buffer_value(&self.running_var);
            ctx.queue_buffer_update(
                &self.running_mean,
                (&old_m * (1.0 - mom)) + (&mv * mom),
            );
            ctx.queue_buffer_update(
                &self.running_var,
                (&old_v * (1.0 - mom)) + (&unbiased * mom),
            );
            (mean, var)
        } else {
            (ctx.buffer(&self.running_mean), ctx.buffer(&self.running_var))
        };
        let bshape = [1, c, 1, 1];
        let mean = mean.reshape(&bshape).broadcast_to(&sh);
        let denom = var.add_scalar(self.eps).sqrt().reshape(&bshape).broadcast_to(&sh);
        let normed = x.sub(&mean).div(&denom);
        let g = ctx.param(&self.gamma).reshape(&bshape).broadcast_to(&sh);
        let b = ctx.param(&self.beta).reshape(&bshape).broadcast_to(&sh);
        normed.mul(&g).add(&b)
    }
}

/// 2x2 max pooling, stride 2. The argmax mask is a constant, so gradients
/// route to the selected positions only.
pub fn max_pool2(x: &Var) -> Var {
    let sh = x.shape();
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    assert!(h % 2 == 0 && w % 2 == 0, "max_pool2 needs even spatial dims, got {h}x{w}");
    let mask = x.with_value(|a| {
        let mut m = ArrayD::zeros(a.raw_dim());
        for ni in 0..n {
            for ci in 0..c {
                for oy in 0..h / 2 {
                    for ox in 0..w / 2 {
                        let (y0, x0) = (2 * oy, 2 * ox);
                        let mut best = (y0, x0);
                        let mut bv = a[[ni, ci, y0, x0]];
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let v = a[[ni, ci, y0 + dy, x0 + dx]];
                            if v > bv {
                                bv = v;
                                best = (y0 + dy, x0 + dx);
                            }
                        }
                        m[[ni, ci, best.0, best.1]] = 1.0;
                    }
                }
            }
        }
        m
    });
    let selected = x.mul(&x.tape().constant(mask));
    selected
        .reshape(&[n, c, h / 2, 2, w / 2, 2])
        .sum_axis(5)
        .sum_axis(3)
}

/// 2x2 average pooling, stride 2.
pub fn avg_pool2(x: &Var) -> Var {
    let sh = x.shape();
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even spatial dims");
    x.reshape(&[n, c, h / 2, 2, w / 2, 2])
        .sum_axis(5)
        .sum_axis(3)
        .mul_scalar(0.25)
}

/// Global average pool [n,c,h,w] -> [n,c].
pub fn global_avg_pool(x: &Var) -> Var {
    let sh = x.shape();
    let hw = (sh[2] * sh[3]) as f64;
    x.reshape(&[sh[0], sh[1], sh[2] * sh[3]])
        .sum_axis(2)
        .mul_scalar(1.0 / hw)
}

/// Global max pool [n,c,h,w] -> [n,c] (argmax mask as constant).
pub fn global_max_pool(x: &Var) -> Var {
    let sh = x.shape();
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    let mask = x.with_value(|a| {
        let mut m = ArrayD::zeros(a.raw_dim());
        for ni in 0..n {
            for ci in 0..c {
                let mut best = (0usize, 0usize);
                let mut bv = f64::NEG_INFINITY;
                for y in 0..h {
                    for x_ in 0..w {
                        let v = a[[ni, ci, y, x_]];
                        if v > bv {
                            bv = v;
                            best = (y, x_);
                        }
                    }
                }
                m[[ni, ci, best.0, best.1]] = 1.0;
            }
        }
        m
    });
    x.mul(&x.tape().constant(mask))
        .reshape(&[n, c, h * w])
        .sum_axis(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcr_autodiff::Tape;
    use ndarray::IxDyn;

    #[test]
    fn max_pool_selects_maxima_and_routes_gradient() {
        let tape = Tape::new();
        let data = ArrayD::from_shape_vec(
            IxDyn(&[1, 1, 2, 4]),
            vec![1.0, 5.0, 2.0, 0.0, 3.0, -1.0, 4.0, 4.0],
        )
        .unwrap();
        let x = tape.leaf(data);
        let y = max_pool2(&x);
        assert_eq!(y.shape(), vec![1, 1, 1, 2]);
        let v = y.value();
        assert_eq!(v[[0, 0, 0, 0]], 5.0);
        assert_eq!(v[[0, 0, 0, 1]], 4.0);
        let g = tape.backward(&y.sum_all()).wrt(&x).unwrap().value();
        assert_eq!(g[[0, 0, 0, 1]], 1.0); // the 5.0
        assert_eq!(g[[0, 0, 1, 2]], 1.0); // first 4.0 in row-major scan
        assert_eq!(g[[0, 0, 1, 3]], 0.0); // tie broken to the first
        assert_eq!(g.sum(), 2.0);
    }

    #[test]
    fn instance_norm_normalizes_each_channel() {
        let mut vs = VarStore::new();
        let mut nb = NetBuilder::new(&mut vs, 0);
        let norm = InstanceNorm2d::new(&mut nb, "in", 2);
        let tape = Tape::new();
        let ctx = Ctx::new(tape.clone(), &vs, false);
        let x = tape.constant(ArrayD::from_shape_fn(IxDyn(&[1, 2, 3, 3]), |ix| {
            (ix[1] * 10 + ix[2] * 3 + ix[3]) as f64
        }));
        let y = norm.forward(&ctx, &x).value();
        for c in 0..2 {
            let ch: Vec<f64> = (0..9).map(|i| y[[0, c, i / 3, i % 3]]).collect();
            let mean: f64 = ch.iter().sum::<f64>() / 9.0;
            let var: f64 = ch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn linear_matches_manual() {
        let mut vs = VarStore::new();
        let mut nb = NetBuilder::new(&mut vs, 1);
        let lin = Linear::new(&mut nb, "fc", 3, 2);
        let tape = Tape::new();
        let ctx = Ctx::new(tape.clone(), &vs, false);
        let x = tape.constant(ArrayD::from_shape_vec(IxDyn(&[2, 3]), vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let y = lin.forward(&ctx, &x).value();
        let w = vs.get("fc.w");
        for n in 0..2 {
            for o in 0..2 {
                let expect: f64 = (0..3).map(|i| w[[o, i]] * ((n * 3 + i) as f64 + 1.0)).sum();
                assert!((y[[n, o]] - expect).abs() < 1e-12);
            }
        }
    }
}
