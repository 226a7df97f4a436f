use std::collections::HashMap;

use ndarray::ArrayD;

use crate::tape::{Op, Tape, Var};

/// Gradients of one backward pass, held as tape nodes so they can be
/// differentiated again (e.g. gradient penalties).
pub struct Gradients {
    grads: HashMap<usize, Var>,
}

impl Gradients {
    /// Gradient of the backward root with respect to `v`, if `v` influenced it.
    pub fn wrt(&self, v: &Var) -> Option<Var> {
        self.grads.get(&v.index()).cloned()
    }

    /// Gradient value, or zeros when `v` did not influence the root.
    pub fn value_or_zero(&self, v: &Var) -> ArrayD<f64> {
        match self.wrt(v) {
            Some(g) => g.value(),
            None => v.with_value(|a| ArrayD::zeros(a.raw_dim())),
        }
    }
}

impl Tape {
    /// Reverse-mode sweep from a single-element `root`. The returned
    /// gradients are new tape nodes, so higher-order derivatives work by
    /// calling `backward` again on any scalar built from them.
    pub fn backward(&self, root: &Var) -> Gradients {
        assert!(
            self.same_tape(&root.tape()),
            "backward root belongs to a different tape"
        );
        assert_eq!(root.numel(), 1, "backward root must be a single element");

        let root_idx = root.index();
        let (ops, reachable) = {
            let inner = self.inner.borrow();
            let n = root_idx + 1;
            let ops: Vec<Op> = inner.nodes[..n].iter().map(|nd| nd.op.clone()).collect();
            let mut reachable = vec![false; n];
            let mut stack = vec![root_idx];
            while let Some(i) = stack.pop() {
                if reachable[i] {
                    continue;
                }
                reachable[i] = true;
                for p in ops[i].parents() {
                    stack.push(p);
                }
            }
            (ops, reachable)
        };

        let var = |i: usize| Var { tape: self.clone(), idx: i };
        let mut grads: Vec<Option<Var>> = vec![None; root_idx + 1];
        let ones = root.with_value(|a| ArrayD::from_elem(a.raw_dim(), 1.0));
        grads[root_idx] = Some(self.constant(ones));

        for i in (0..=root_idx).rev() {
            if !reachable[i] {
                continue;
            }
            let g = match grads[i].clone() {
                Some(g) => g,
                None => continue,
            };
            let contributions = vjp(self, &ops[i], i, &g, &var);
            for (parent, contrib) in contributions {
                grads[parent] = Some(match grads[parent].take() {
                    Some(acc) => acc.add(&contrib),
                    None => contrib,
                });
            }
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .filter_map(|(i, g)| g.map(|g| (i, g)))
            .collect();
        Gradients { grads }
    }
}

/// Build the vector-Jacobian product of node `idx` as tape operations.
fn vjp(
    tape: &Tape,
    op: &Op,
    idx: usize,
    g: &Var,
    var: &dyn Fn(usize) -> Var,
) -> Vec<(usize, Var)> {
    use Op::*;
    let out = var(idx);
    match op {
        Leaf | Constant => vec![],
        Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Sub(a, b) => vec![(*a, g.clone()), (*b, g.neg())],
        Mul(a, b) => vec![(*a, g.mul(&var(*b))), (*b, g.mul(&var(*a)))],
        Div(a, b) => {
            let vb = var(*b);
            vec![(*a, g.div(&vb)), (*b, g.mul(&out.div(&vb)).neg())]
        }
        Neg(a) => vec![(*a, g.neg())],
        AddScalar(a, _) => vec![(*a, g.clone())],
        MulScalar(a, c) => vec![(*a, g.mul_scalar(*c))],
        Square(a) => vec![(*a, g.mul(&var(*a)).mul_scalar(2.0))],
        Sqrt(a) => vec![(*a, g.mul_scalar(0.5).div(&out))],
        Exp(a) => vec![(*a, g.mul(&out))],
        Ln(a) => vec![(*a, g.div(&var(*a)))],
        Abs(a) => {
            let sign = var(*a).with_value(|v| v.mapv(f64::signum));
            vec![(*a, g.mul(&tape.constant(sign)))]
        }
        Relu(a) => {
            let mask = var(*a).mask_where(|x| x > 0.0);
            vec![(*a, g.mul(&mask))]
        }
        LeakyRelu(a, slope) => {
            let s = *slope;
            let mask = var(*a).with_value(|v| v.mapv(|x| if x > 0.0 { 1.0 } else { s }));
            vec![(*a, g.mul(&tape.constant(mask)))]
        }
        Sigmoid(a) => {
            let one_minus = out.neg().add_scalar(1.0);
            vec![(*a, g.mul(&out).mul(&one_minus))]
        }
        Tanh(a) => {
            let d = out.square().neg().add_scalar(1.0);
            vec![(*a, g.mul(&d))]
        }
        Softplus(a) => vec![(*a, g.mul(&var(*a).sigmoid()))],
        Powf(a, p) => vec![(*a, g.mul(&var(*a).powf(p - 1.0)).mul_scalar(*p))],
        Clamp(a, lo, hi) => {
            let (lo, hi) = (*lo, *hi);
            let mask = var(*a).mask_where(move |x| x >= lo && x <= hi);
            vec![(*a, g.mul(&mask))]
        }
        SumAll(a) => {
            let sh = var(*a).shape();
            vec![(*a, g.broadcast_to(&sh))]
        }
        SumAxis(a, ax) => {
            let sh = var(*a).shape();
            let mut keep = sh.clone();
            keep[*ax] = 1;
            vec![(*a, g.reshape(&keep).broadcast_to(&sh))]
        }
        Reshape(a) => vec![(*a, g.reshape(&var(*a).shape()))],
        Permute(a, axes) => {
            let mut inv = vec![0usize; axes.len()];
            for (to, &from) in axes.iter().enumerate() {
                inv[from] = to;
            }
            vec![(*a, g.permute(&inv))]
        }
        BroadcastTo(a) => {
            let va = var(*a);
            let sh = va.shape();
            if sh.is_empty() {
                vec![(*a, g.sum_all())]
            } else {
                let axes: Vec<usize> = sh
                    .iter()
                    .enumerate()
                    .filter_map(|(i, &d)| if d == 1 && g.shape()[i] != 1 { Some(i) } else { None })
                    .collect();
                let reduced = if axes.is_empty() { g.clone() } else { g.sum_axes(&axes) };
                vec![(*a, reduced.reshape(&sh))]
            }
        }
        Concat(a, b, axis) => {
            let la = var(*a).shape()[*axis];
            let lb = var(*b).shape()[*axis];
            vec![
                (*a, g.slice_axis(*axis, 0, la)),
                (*b, g.slice_axis(*axis, la, lb)),
            ]
        }
        Slice(a, axis, start, len) => {
            let sh = var(*a).shape();
            let total = sh[*axis];
            let mut padded = g.clone();
            if *start > 0 {
                let mut zsh = sh.clone();
                zsh[*axis] = *start;
                let zeros = tape.constant(ArrayD::zeros(ndarray::IxDyn(&zsh)));
                padded = zeros.concat(&padded, *axis);
            }
            let after = total - start - len;
            if after > 0 {
                let mut zsh = sh.clone();
                zsh[*axis] = after;
                let zeros = tape.constant(ArrayD::zeros(ndarray::IxDyn(&zsh)));
                padded = padded.concat(&zeros, *axis);
            }
            vec![(*a, padded)]
        }
        MatmulBc(w, x) => {
            let gw = g.contract(&var(*x));
            let gx = var(*w).permute(&[1, 0]).matmul_bc(g);
            vec![(*w, gw), (*x, gx)]
        }
        Contract(a, b) => {
            let ga = g.matmul_bc(&var(*b));
            let gb = g.permute(&[1, 0]).matmul_bc(&var(*a));
            vec![(*a, ga), (*b, gb)]
        }
        Im2col(a, spec) => {
            let sh = var(*a).shape();
            vec![(*a, g.col2im(*spec, sh[2], sh[3]))]
        }
        Col2im(a, spec, _, _) => vec![(*a, g.im2col(*spec))],
    }
}
