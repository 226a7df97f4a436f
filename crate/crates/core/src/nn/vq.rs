//! Vector-quantization codebook with exponential-moving-average updates.

use mcr_autodiff::Var;
use ndarray::{Array1, Array2, ArrayView2};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::seeds;

/// K x D embedding table plus EMA accumulators. The embeddings are state,
/// not gradient-trained parameters: every update recomputes
/// `embeddings = ema_embed_sum / laplace_smoothed(ema_cluster_size)`.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub embeddings: Array2<f64>,
    pub ema_cluster_size: Array1<f64>,
    pub ema_embed_sum: Array2<f64>,
    pub decay: f64,
    pub epsilon: f64,
}

impl Codebook {
    pub const DEFAULT_DECAY: f64 = 0.99;
    pub const DEFAULT_EPSILON: f64 = 1e-5;

    /// Fresh codebook. Cluster sizes start at one with the embed sums equal
    /// to the embeddings, so the ratio invariant holds from step zero and
    /// codes that are never hit keep their value instead of blowing up.
    pub fn new(k: usize, d: usize, rng: &mut ChaCha12Rng) -> Self {
        let mut embeddings = Array2::<f64>::zeros((k, d));
        for v in embeddings.iter_mut() {
            *v = seeds::randn(rng) * 0.1;
        }
        Codebook {
            ema_embed_sum: embeddings.clone(),
            ema_cluster_size: Array1::ones(k),
            embeddings,
            decay: Self::DEFAULT_DECAY,
            epsilon: Self::DEFAULT_EPSILON,
        }
    }

    pub fn k(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn d(&self) -> usize {
        self.embeddings.ncols()
    }

    /// Nearest-neighbor assignment. Squared distances accumulate in a fixed
    /// order and ties break to the lowest index, so results are exact and
    /// deterministic. Quantized rows are bitwise copies of codebook rows.
    pub fn lookup(&self, z: ArrayView2<f64>) -> Result<(Array2<f64>, Vec<usize>)> {
        let (n, d) = z.dim();
        if d != self.d() {
            return Err(Error::Shape(format!(
                "vq lookup: vectors have dim {}, codebook dim {}",
                d,
                self.d()
            )));
        }
        let mut indices = Vec::with_capacity(n);
        let mut zq = Array2::<f64>::zeros((n, d));
        for i in 0..n {
            let zi = z.row(i);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for k in 0..self.k() {
                let ek = self.embeddings.row(k);
                let mut dist = 0.0;
                for j in 0..d {
                    let diff = zi[j] - ek[j];
                    dist += diff * diff;
                }
                if dist < best_d {
                    best_d = dist;
                    best = k;
                }
            }
            indices.push(best);
            zq.row_mut(i).assign(&self.embeddings.row(best));
        }
        Ok((zq, indices))
    }

    /// One EMA step given the encoder vectors and their assignments.
    pub fn ema_update(&mut self, z: ArrayView2<f64>, indices: &[usize]) -> Result<()> {
        let (n, d) = z.dim();
        if d != self.d() {
            return Err(Error::Shape(format!(
                "vq ema: vectors have dim {}, codebook dim {}",
                d,
                self.d()
            )));
        }
        if indices.len() != n {
            return Err(Error::Shape(format!(
                "vq ema: {} indices for {} vectors",
                indices.len(),
                n
            )));
        }
        let k = self.k();
        let mut counts = Array1::<f64>::zeros(k);
        let mut sums = Array2::<f64>::zeros((k, d));
        for (i, &idx) in indices.iter().enumerate() {
            if idx >= k {
                return Err(Error::Range(format!("vq ema: index {idx} out of range {k}")));
            }
            counts[idx] += 1.0;
            let mut row = sums.row_mut(idx);
            row += &z.row(i);
        }
        let decay = self.decay;
        self.ema_cluster_size = &self.ema_cluster_size * decay + &counts * (1.0 - decay);
        self.ema_embed_sum = &self.ema_embed_sum * decay + &sums * (1.0 - decay);

        let total: f64 = self.ema_cluster_size.sum();
        let denom = total + k as f64 * self.epsilon;
        for ki in 0..k {
            let smoothed = (self.ema_cluster_size[ki] + self.epsilon) / denom * total;
            let scale = 1.0 / smoothed;
            let mut row = self.embeddings.row_mut(ki);
            row.assign(&self.ema_embed_sum.row(ki));
            row *= scale;
        }
        Ok(())
    }

    /// exp(entropy) of the batch assignment histogram, in [1, K].
    pub fn perplexity(&self, indices: &[usize]) -> f64 {
        if indices.is_empty() {
            return 1.0;
        }
        let mut hist = vec![0.0f64; self.k()];
        for &i in indices {
            hist[i] += 1.0;
        }
        let n = indices.len() as f64;
        let entropy: f64 = hist
            .iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| {
                let p = c / n;
                -p * p.ln()
            })
            .sum();
        entropy.exp()
    }
}

/// Straight-through estimator: the value is exactly `z_q`, the gradient of
/// anything downstream passes through to `z` unchanged. Written as
/// `z_q + (z - stop_grad(z))` so the forward value is bitwise `z_q`.
pub fn straight_through(z: &Var, z_q: &Var) -> Result<Var> {
    if z.shape() != z_q.shape() {
        return Err(Error::Shape(format!(
            "straight-through: shapes {:?} vs {:?}",
            z.shape(),
            z_q.shape()
        )));
    }
    let zero_with_grad = z.sub(&z.detach());
    Ok(z_q.detach().add(&zero_with_grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcr_autodiff::Tape;
    use ndarray::{ArrayD, IxDyn};
    use rand::SeedableRng;

    fn rng() -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(11)
    }

    #[test]
    fn exact_match_and_tie_break() {
        let mut cb = Codebook::new(8, 2, &mut rng());
        cb.embeddings.fill(100.0); // park unused codes far away
        for (i, row) in [(2usize, [1.0, 0.0]), (5, [0.0, -1.0]), (7, [0.25, 0.5])] {
            cb.embeddings.row_mut(i).assign(&ndarray::arr1(&row));
        }
        // exact codebook row -> that row, zero error
        let z = ndarray::arr2(&[[0.25, 0.5]]);
        let (zq, idx) = cb.lookup(z.view()).unwrap();
        assert_eq!(idx, vec![7]);
        assert_eq!(zq.row(0).to_vec(), vec![0.25, 0.5]);
        // equidistant from rows 2 and 5 -> lower index wins
        let z = ndarray::arr2(&[[0.5, -0.5]]);
        let (_, idx) = cb.lookup(z.view()).unwrap();
        assert_eq!(idx, vec![2]);
    }

    #[test]
    fn quantized_rows_are_bit_exact_members() {
        let cb = Codebook::new(16, 4, &mut rng());
        let mut r = rng();
        let z = Array2::from_shape_fn((32, 4), |_| seeds::randn(&mut r));
        let (zq, idx) = cb.lookup(z.view()).unwrap();
        for (i, &k) in idx.iter().enumerate() {
            let row = zq.row(i);
            let code = cb.embeddings.row(k);
            assert!(row.iter().zip(code.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn ema_total_mass_recurrence() {
        let mut cb = Codebook::new(4, 2, &mut rng());
        let before: f64 = cb.ema_cluster_size.sum();
        let z = ndarray::arr2(&[[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]]);
        let (_, idx) = cb.lookup(z.view()).unwrap();
        cb.ema_update(z.view(), &idx).unwrap();
        let after: f64 = cb.ema_cluster_size.sum();
        let expect = cb.decay * before + (1.0 - cb.decay) * 3.0;
        assert!((after - expect).abs() < 1e-12);
    }

    #[test]
    fn decay_zero_gives_batch_centroid() {
        let mut cb = Codebook::new(4, 2, &mut rng());
        cb.decay = 0.0;
        let z = ndarray::arr2(&[[1.0, 2.0], [3.0, 4.0]]);
        let idx = vec![1usize, 1];
        cb.ema_update(z.view(), &idx).unwrap();
        let e = cb.embeddings.row(1);
        // centroid (2, 3), up to Laplace smoothing
        assert!((e[0] - 2.0).abs() < 1e-3);
        assert!((e[1] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn straight_through_value_and_gradient() {
        let tape = Tape::new();
        let z = tape.leaf(ArrayD::from_shape_vec(IxDyn(&[2, 2]), vec![0.1, 0.2, 0.3, 0.4]).unwrap());
        let zq = tape.constant(ArrayD::from_shape_vec(IxDyn(&[2, 2]), vec![0.3, 0.3, 0.3, 0.3]).unwrap());
        let st = straight_through(&z, &zq).unwrap();
        let v = st.value();
        let q = zq.value();
        assert!(v.iter().zip(q.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let g = tape.backward(&st.sum_all()).wrt(&z).unwrap().value();
        assert!(g.iter().all(|&x| x == 1.0));
    }
}
