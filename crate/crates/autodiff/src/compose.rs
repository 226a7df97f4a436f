use crate::conv::ConvSpec;
use crate::tape::Var;

/// Output spatial size of a forward convolution.
pub fn conv_out_size(h: usize, w: usize, spec: ConvSpec) -> (usize, usize) {
    spec.out_size(h, w)
}

/// Output spatial size of a transposed convolution.
pub fn conv_transpose_out_size(h: usize, w: usize, spec: ConvSpec) -> (usize, usize) {
    (
        (h - 1) * spec.stride + spec.kh - 2 * spec.pad,
        (w - 1) * spec.stride + spec.kw - 2 * spec.pad,
    )
}

/// 2-d convolution. `x` is [n, c_in, h, w], `weight` is [c_out, c_in*kh*kw]
/// (kernel flattened row-major), `bias` is [c_out].
pub fn conv2d(x: &Var, weight: &Var, bias: Option<&Var>, spec: ConvSpec) -> Var {
    let xs = x.shape();
    assert_eq!(xs.len(), 4, "conv2d: input must be 4-d, got {:?}", xs);
    let ws = weight.shape();
    assert_eq!(ws.len(), 2, "conv2d: weight must be [c_out, c_in*kh*kw]");
    assert_eq!(
        ws[1],
        xs[1] * spec.kh * spec.kw,
        "conv2d: weight expects {} input channels x {}x{} kernel, input has {} channels",
        ws[1] / (spec.kh * spec.kw),
        spec.kh,
        spec.kw,
        xs[1]
    );
    let (n, c_out) = (xs[0], ws[0]);
    let (oh, ow) = spec.out_size(xs[2], xs[3]);
    let cols = x.im2col(spec);
    let y = weight.matmul_bc(&cols).reshape(&[n, c_out, oh, ow]);
    match bias {
        Some(b) => {
            assert_eq!(b.shape(), vec![c_out], "conv2d: bias shape");
            let bb = b.reshape(&[1, c_out, 1, 1]).broadcast_to(&[n, c_out, oh, ow]);
            y.add(&bb)
        }
        None => y,
    }
}

/// Transposed 2-d convolution (adjoint of `conv2d` in the spatial map).
/// `x` is [n, c_in, h, w], `weight` is [c_in, c_out*kh*kw], `bias` is [c_out].
pub fn conv_transpose2d(x: &Var, weight: &Var, bias: Option<&Var>, spec: ConvSpec) -> Var {
    let xs = x.shape();
    assert_eq!(xs.len(), 4, "conv_transpose2d: input must be 4-d, got {:?}", xs);
    let ws = weight.shape();
    assert_eq!(ws.len(), 2, "conv_transpose2d: weight must be [c_in, c_out*kh*kw]");
    assert_eq!(ws[0], xs[1], "conv_transpose2d: weight expects {} input channels", ws[0]);
    let c_out = ws[1] / (spec.kh * spec.kw);
    assert_eq!(c_out * spec.kh * spec.kw, ws[1], "conv_transpose2d: weight columns");
    let (n, h, w) = (xs[0], xs[2], xs[3]);
    let (oh, ow) = conv_transpose_out_size(h, w, spec);
    // Consistency of the adjoint pairing: conv(oh, ow) must give back (h, w).
    debug_assert_eq!(spec.out_size(oh, ow), (h, w));
    let xr = x.reshape(&[n, xs[1], h * w]);
    let cols = weight.permute(&[1, 0]).matmul_bc(&xr);
    let y = cols.col2im(spec, oh, ow);
    match bias {
        Some(b) => {
            assert_eq!(b.shape(), vec![c_out], "conv_transpose2d: bias shape");
            let bb = b.reshape(&[1, c_out, 1, 1]).broadcast_to(&[n, c_out, oh, ow]);
            y.add(&bb)
        }
        None => y,
    }
}
