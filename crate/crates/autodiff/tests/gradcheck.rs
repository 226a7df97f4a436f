//! Finite-difference verification of every tape operation.

use mcr_autodiff::check::{finite_diff_grads, max_rel_err};
use mcr_autodiff::{conv2d, conv_transpose2d, ConvSpec, Tape, Var};
use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn randn(rng: &mut ChaCha12Rng, shape: &[usize]) -> ArrayD<f64> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|_| {
            // Box-Muller, keeps values in a tame range for stable FD
            let u1: f64 = rng.gen_range(1e-6..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos() * 0.5
        })
        .collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
}

/// Check tape gradients of a scalar-valued graph against central differences.
fn gradcheck(
    build: impl Fn(&Tape, &[Var]) -> Var,
    inputs: &[ArrayD<f64>],
    tol: f64,
) {
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = build(&tape, &vars);
    assert_eq!(out.numel(), 1, "gradcheck target must be scalar");
    let grads = tape.backward(&out);
    let analytic: Vec<ArrayD<f64>> = vars.iter().map(|v| grads.value_or_zero(v)).collect();

    let f = |xs: &[ArrayD<f64>]| -> f64 {
        let t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.leaf(x.clone())).collect();
        build(&t, &vs).scalar_value()
    };
    let numeric = finite_diff_grads(&f, inputs, 1e-5);
    let err = max_rel_err(&analytic, &numeric);
    assert!(err < tol, "gradient mismatch: rel err {err:.3e} >= {tol:.1e}");
}

#[test]
fn elementwise_binary_ops() {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let a = randn(&mut rng, &[3, 4]);
    let b = randn(&mut rng, &[3, 4]).mapv(|x| x + 3.0); // keep away from 0 for div
    gradcheck(|_, v| v[0].add(&v[1]).sum_all(), &[a.clone(), b.clone()], 1e-7);
    gradcheck(|_, v| v[0].sub(&v[1]).square().sum_all(), &[a.clone(), b.clone()], 1e-7);
    gradcheck(|_, v| v[0].mul(&v[1]).sum_all(), &[a.clone(), b.clone()], 1e-7);
    gradcheck(|_, v| v[0].div(&v[1]).sum_all(), &[a, b], 1e-7);
}

#[test]
fn elementwise_unary_ops() {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let a = randn(&mut rng, &[4, 5]);
    let pos = a.mapv(|x| x.abs() + 0.5);
    gradcheck(|_, v| v[0].neg().mul_scalar(1.3).add_scalar(0.2).sum_all(), &[a.clone()], 1e-7);
    gradcheck(|_, v| v[0].square().sum_all(), &[a.clone()], 1e-7);
    gradcheck(|_, v| v[0].sqrt().sum_all(), &[pos.clone()], 1e-6);
    gradcheck(|_, v| v[0].exp().sum_all(), &[a.clone()], 1e-7);
    gradcheck(|_, v| v[0].ln().sum_all(), &[pos.clone()], 1e-7);
    gradcheck(|_, v| v[0].sigmoid().sum_all(), &[a.clone()], 1e-7);
    gradcheck(|_, v| v[0].tanh().sum_all(), &[a.clone()], 1e-7);
    gradcheck(|_, v| v[0].softplus().sum_all(), &[a.clone()], 1e-7);
    gradcheck(|_, v| v[0].powf(2.5).sum_all(), &[pos], 1e-6);
}

#[test]
fn piecewise_ops_away_from_kinks() {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    // shift away from 0 so FD does not straddle the kink
    let a = randn(&mut rng, &[6, 6]).mapv(|x| if x.abs() < 0.05 { x + 0.2 } else { x });
    gradcheck(|_, v| v[0].relu().sum_all(), &[a.clone()], 1e-7);
    gradcheck(|_, v| v[0].leaky_relu(0.2).square().sum_all(), &[a.clone()], 1e-7);
    gradcheck(|_, v| v[0].abs().sum_all(), &[a.clone()], 1e-7);
    gradcheck(|_, v| v[0].clamp(-0.8, 0.8).square().sum_all(), &[a], 1e-6);
}

#[test]
fn shape_ops() {
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let a = randn(&mut rng, &[2, 3, 4]);
    let b = randn(&mut rng, &[2, 5, 4]);
    gradcheck(|_, v| v[0].reshape(&[6, 4]).square().sum_all(), &[a.clone()], 1e-7);
    gradcheck(|_, v| v[0].permute(&[2, 0, 1]).square().sum_all(), &[a.clone()], 1e-7);
    gradcheck(|_, v| v[0].sum_axis(1).square().sum_all(), &[a.clone()], 1e-7);
    gradcheck(|_, v| v[0].sum_axes(&[0, 2]).square().sum_all(), &[a.clone()], 1e-7);
    gradcheck(
        |_, v| v[0].concat(&v[1], 1).square().sum_all(),
        &[a.clone(), b.clone()],
        1e-7,
    );
    gradcheck(|_, v| v[0].slice_axis(1, 1, 2).square().sum_all(), &[a.clone()], 1e-7);
    let c = randn(&mut rng, &[1, 3, 1]);
    gradcheck(
        |_, v| v[0].broadcast_to(&[2, 3, 4]).mul(&v[1]).sum_all(),
        &[c, a],
        1e-7,
    );
}

#[test]
fn matmul_ops() {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let w = randn(&mut rng, &[3, 4]);
    let x = randn(&mut rng, &[2, 4, 5]);
    gradcheck(
        |_, v| v[0].matmul_bc(&v[1]).square().sum_all(),
        &[w.clone(), x.clone()],
        1e-6,
    );
    let a = randn(&mut rng, &[2, 3, 5]);
    gradcheck(|_, v| v[0].contract(&v[1]).square().sum_all(), &[a, x], 1e-6);
    let m = randn(&mut rng, &[3, 4]);
    let n = randn(&mut rng, &[4, 2]);
    gradcheck(|_, v| v[0].matmul(&v[1]).square().sum_all(), &[m, n], 1e-6);
}

#[test]
fn conv_ops() {
    let mut rng = ChaCha12Rng::seed_from_u64(6);
    let x = randn(&mut rng, &[2, 3, 8, 7]);
    let spec = ConvSpec::square(3, 2, 1);
    gradcheck(|_, v| v[0].im2col(spec).square().sum_all(), &[x.clone()], 1e-6);

    let w = randn(&mut rng, &[4, 3 * 9]);
    let b = randn(&mut rng, &[4]);
    gradcheck(
        |_, v| conv2d(&v[0], &v[1], Some(&v[2]), spec).square().sum_all(),
        &[x.clone(), w, b],
        1e-6,
    );

    let wt = randn(&mut rng, &[3, 2 * 16]);
    let bt = randn(&mut rng, &[2]);
    let tspec = ConvSpec::square(4, 2, 1);
    gradcheck(
        |_, v| conv_transpose2d(&v[0], &v[1], Some(&v[2]), tspec).square().sum_all(),
        &[x, wt, bt],
        1e-6,
    );
}

#[test]
fn conv2d_matches_direct_convolution() {
    // cross-check the im2col+matmul path against a naive loop
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let x = randn(&mut rng, &[1, 2, 6, 5]);
    let w = randn(&mut rng, &[3, 2 * 9]);
    let spec = ConvSpec::square(3, 1, 1);
    let tape = Tape::new();
    let y = conv2d(&tape.constant(x.clone()), &tape.constant(w.clone()), None, spec).value();

    let (oh, ow) = (6, 5);
    for co in 0..3 {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for ci in 0..2 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = oy as isize + ky as isize - 1;
                            let ix = ox as isize + kx as isize - 1;
                            if iy < 0 || iy >= 6 || ix < 0 || ix >= 5 {
                                continue;
                            }
                            acc += x[[0, ci, iy as usize, ix as usize]]
                                * w[[co, (ci * 3 + ky) * 3 + kx]];
                        }
                    }
                }
                let got = y[[0, co, oy, ox]];
                assert!((acc - got).abs() < 1e-12, "conv mismatch at ({co},{oy},{ox})");
            }
        }
    }
}

#[test]
fn conv_transpose_is_adjoint_of_conv() {
    // <conv(x), y> == <x, conv_transpose(y)> with tied weights
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let spec = ConvSpec::square(4, 2, 1);
    let x = randn(&mut rng, &[2, 3, 8, 8]);
    let w = randn(&mut rng, &[5, 3 * 16]); // [c_out, c_in*k*k]
    let tape = Tape::new();
    let cx = conv2d(&tape.constant(x.clone()), &tape.constant(w.clone()), None, spec);
    let y = randn(&mut rng, cx.shape().as_slice());
    let lhs = (&cx.value() * &y).sum();
    // transpose weight layout [c_out, c_in*k*k] -> treat as conv_transpose weight [c_out -> c_in]
    let ty = conv_transpose2d(&tape.constant(y), &tape.constant(w), None, spec);
    let rhs = (&x * &ty.value()).sum();
    assert!((lhs - rhs).abs() < 1e-9, "adjoint mismatch: {lhs} vs {rhs}");
}

#[test]
fn double_backward_matches_analytic() {
    // f(x) = sum((x^2)^2) = sum(x^4); g = df/dx = 4x^3
    // penalty P = sum(g^2) = 16 sum(x^6); dP/dx = 96 x^5
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let x = randn(&mut rng, &[3, 3]);
    let tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let f = xv.square().square().sum_all();
    let g = tape.backward(&f).wrt(&xv).unwrap();
    let p = g.square().sum_all();
    let dp = tape.backward(&p).wrt(&xv).unwrap().value();
    let expect = x.mapv(|v| 96.0 * v.powi(5));
    let err = mcr_autodiff::check::rel_err(&dp, &expect);
    assert!(err < 1e-10, "double backward rel err {err:.3e}");
}

#[test]
fn double_backward_through_conv() {
    // P(theta) = || d/dx sum(conv(x, w)) ||^2 ; check dP/dw by finite differences
    let mut rng = ChaCha12Rng::seed_from_u64(10);
    let x = randn(&mut rng, &[1, 2, 5, 5]);
    let w0 = randn(&mut rng, &[2, 2 * 9]);
    let spec = ConvSpec::square(3, 1, 1);

    let penalty = |w: &ArrayD<f64>| -> (f64, Option<ArrayD<f64>>) {
        let tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let wv = tape.leaf(w.clone());
        let y = conv2d(&xv, &wv, None, spec);
        // nonlinearity so the input-gradient depends on w nontrivially
        let s = y.tanh().sum_all();
        let gx = tape.backward(&s).wrt(&xv).unwrap();
        let p = gx.square().sum_all();
        let grads = tape.backward(&p);
        (p.scalar_value(), grads.wrt(&wv).map(|g| g.value()))
    };

    let (_, dw) = penalty(&w0);
    let dw = dw.expect("weight gradient through double backward");
    let f = |ws: &[ArrayD<f64>]| penalty(&ws[0]).0;
    let numeric = finite_diff_grads(&f, &[w0], 1e-5);
    let err = mcr_autodiff::check::rel_err(&dw, &numeric[0]);
    assert!(err < 1e-6, "second-order conv gradient rel err {err:.3e}");
}

#[test]
fn detach_blocks_gradient() {
    let tape = Tape::new();
    let x = tape.leaf(ArrayD::from_elem(IxDyn(&[2, 2]), 1.5));
    let y = x.detach().mul(&x).sum_all();
    let g = tape.backward(&y).wrt(&x).unwrap().value();
    // d/dx sum(c * x) = c = 1.5 (detached copy is a constant)
    assert!(g.iter().all(|&v| (v - 1.5).abs() < 1e-12));
}
