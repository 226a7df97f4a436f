use ndarray::{ArrayD, IxDyn};

/// Kernel geometry shared by `im2col`/`col2im` and the convolution composites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn square(k: usize, stride: usize, pad: usize) -> Self {
        ConvSpec { kh: k, kw: k, stride, pad }
    }

    /// Spatial output size of a forward convolution over an (h, w) input.
    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = (h + 2 * self.pad).checked_sub(self.kh).expect("kernel larger than padded input") / self.stride + 1;
        let ow = (w + 2 * self.pad).checked_sub(self.kw).expect("kernel larger than padded input") / self.stride + 1;
        (oh, ow)
    }
}

/// Unfold x[n,c,h,w] into cols[n, c*kh*kw, oh*ow] with zero padding.
pub(crate) fn im2col_array(x: &ArrayD<f64>, spec: ConvSpec) -> ArrayD<f64> {
    let sh = x.shape();
    assert_eq!(sh.len(), 4, "im2col expects a 4-d tensor, got {:?}", sh);
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    let (oh, ow) = spec.out_size(h, w);
    let l = oh * ow;
    let rows = c * spec.kh * spec.kw;
    let xs = x.as_slice().expect("standard layout");
    let mut out = vec![0.0f64; n * rows * l];
    for ni in 0..n {
        let x_base = ni * c * h * w;
        let o_base = ni * rows * l;
        for ci in 0..c {
            for ki in 0..spec.kh {
                for kj in 0..spec.kw {
                    let row = (ci * spec.kh + ki) * spec.kw + kj;
                    let o_row = o_base + row * l;
                    for oi in 0..oh {
                        let iy = (oi * spec.stride + ki) as isize - spec.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let x_row = x_base + ci * h * w + iy as usize * w;
                        let o_off = o_row + oi * ow;
                        for oj in 0..ow {
                            let ix = (oj * spec.stride + kj) as isize - spec.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            out[o_off + oj] = xs[x_row + ix as usize];
                        }
                    }
                }
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[n, rows, l]), out).unwrap()
}

/// Adjoint of `im2col_array`: scatter-add cols back onto an (h, w) image grid.
pub(crate) fn col2im_array(cols: &ArrayD<f64>, spec: ConvSpec, h: usize, w: usize) -> ArrayD<f64> {
    let sh = cols.shape();
    assert_eq!(sh.len(), 3, "col2im expects a 3-d tensor, got {:?}", sh);
    let (n, rows, l) = (sh[0], sh[1], sh[2]);
    let (oh, ow) = spec.out_size(h, w);
    assert_eq!(l, oh * ow, "col2im: column count {} does not match {}x{} output", l, oh, ow);
    assert_eq!(rows % (spec.kh * spec.kw), 0, "col2im: row count not divisible by kernel area");
    let c = rows / (spec.kh * spec.kw);
    let cs = cols.as_slice().expect("standard layout");
    let mut out = vec![0.0f64; n * c * h * w];
    for ni in 0..n {
        let c_base = ni * rows * l;
        let o_base = ni * c * h * w;
        for ci in 0..c {
            for ki in 0..spec.kh {
                for kj in 0..spec.kw {
                    let row = (ci * spec.kh + ki) * spec.kw + kj;
                    let c_row = c_base + row * l;
                    for oi in 0..oh {
                        let iy = (oi * spec.stride + ki) as isize - spec.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let o_row = o_base + ci * h * w + iy as usize * w;
                        let c_off = c_row + oi * ow;
                        for oj in 0..ow {
                            let ix = (oj * spec.stride + kj) as isize - spec.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            out[o_row + ix as usize] += cs[c_off + oj];
                        }
                    }
                }
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[n, c, h, w]), out).unwrap()
}
