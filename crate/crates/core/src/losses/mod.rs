//! Objective functions: non-saturating adversarial terms, L1 reconstruction,
//! perceptual feature matching, VQ commitment, the weighted generator total,
//! the R1 gradient penalty and focal loss.

pub mod perceptual;

pub use perceptual::{FeatureExtractor, PerceptualBackend};

use mcr_autodiff::{Tape, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loss weighting, with published defaults.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_adv: f64,
    pub lambda_rec: f64,
    pub lambda_perc: f64,
    pub lambda_vq: f64,
    pub r1_gamma: f64,
    pub commitment_beta: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_adv: 1.0,
            lambda_rec: 10.0,
            lambda_perc: 10.0,
            lambda_vq: 5.0,
            r1_gamma: 10.0,
            commitment_beta: 0.25,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_adv,
            self.lambda_rec,
            self.lambda_perc,
            self.lambda_vq,
            self.r1_gamma,
            self.commitment_beta,
            self.focal_alpha,
            self.focal_gamma,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("loss weights must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Generator adversarial term: mean over patches of -log sigmoid(logit),
/// evaluated as softplus(-x) for stability.
pub fn adv_loss_g(patch_logits_fake: &Var) -> Var {
    patch_logits_fake.neg().softplus().mean_all()
}

/// Mean absolute error.
pub fn rec_loss(y: &Var, y_hat: &Var) -> Result<Var> {
    if y.shape() != y_hat.shape() {
        return Err(Error::Shape(format!(
            "reconstruction loss shapes {:?} vs {:?}",
            y.shape(),
            y_hat.shape()
        )));
    }
    Ok(y.sub(y_hat).abs().mean_all())
}

/// Sum over feature layers of spatially averaged squared distances: each
/// layer contributes mean_batch( sum_{c,h,w} d^2 / (H*W) ).
pub fn perceptual_loss(y: &Var, y_hat: &Var, extractor: &FeatureExtractor) -> Result<Var> {
    if y.shape() != y_hat.shape() {
        return Err(Error::Shape(format!(
            "perceptual loss shapes {:?} vs {:?}",
            y.shape(),
            y_hat.shape()
        )));
    }
    let fy = extractor.features(y)?;
    let fyh = extractor.features(y_hat)?;
    let tape = y.tape();
    let mut total = tape.scalar(0.0);
    for (a, b) in fy.iter().zip(fyh.iter()) {
        let sh = a.shape();
        let (n, hw) = (sh[0], sh[2] * sh[3]);
        let d = a.sub(b).square();
        let per_sample = d
            .reshape(&[n, sh[1] * hw])
            .sum_axis(1)
            .mul_scalar(1.0 / hw as f64);
        total = total.add(&per_sample.mean_all());
    }
    Ok(total)
}

/// Commitment term of the quantization objective under EMA codebook
/// learning: beta * mean over latent vectors of ||sg[z_q] - E(x)||^2.
/// (The codebook-side term is handled by the EMA update itself.)
pub fn vq_loss(encoder_out: &Var, z_q: &Var, commitment_beta: f64) -> Result<Var> {
    if encoder_out.shape() != z_q.shape() {
        return Err(Error::Shape(format!(
            "vq loss shapes {:?} vs {:?}",
            encoder_out.shape(),
            z_q.shape()
        )));
    }
    if commitment_beta == 0.0 {
        return Ok(encoder_out.tape().scalar(0.0));
    }
    let d = encoder_out.sub(&z_q.detach()).square();
    Ok(d.sum_axis(1).mean_all().mul_scalar(commitment_beta))
}

/// Weighted sum of the four generator components.
pub fn generator_total(adv: &Var, rec: &Var, perc: &Var, vq: &Var, w: &LossWeights) -> Var {
    adv.mul_scalar(w.lambda_adv)
        .add(&rec.mul_scalar(w.lambda_rec))
        .add(&perc.mul_scalar(w.lambda_perc))
        .add(&vq.mul_scalar(w.lambda_vq))
}

/// Discriminator BCE with one-sided label smoothing: real targets come in
/// [0.9, 1.0], fake targets are hard zeros. Each term is its patch mean;
/// the two means add.
pub fn disc_loss(logits_real: &Var, logits_fake: &Var, real_targets: &Var) -> Result<Var> {
    if logits_real.shape() != real_targets.shape() {
        return Err(Error::Shape(format!(
            "disc loss: logits {:?} vs targets {:?}",
            logits_real.shape(),
            real_targets.shape()
        )));
    }
    // BCE with logits and soft target t: softplus(x) - t*x
    let real_term = logits_real
        .softplus()
        .sub(&real_targets.detach().mul(logits_real))
        .mean_all();
    let fake_term = logits_fake.softplus().mean_all();
    Ok(real_term.add(&fake_term))
}

/// R1 penalty: (gamma/2) * mean over the batch of the squared gradient norm
/// of the summed discriminator output with respect to the real image.
/// `pet_real` must be a leaf that influenced `logits_real`.
pub fn r1_penalty(tape: &Tape, logits_real: &Var, pet_real: &Var, gamma: f64) -> Result<Var> {
    let s = logits_real.sum_all();
    let grads = tape.backward(&s);
    let g = grads.wrt(pet_real).ok_or_else(|| {
        Error::Shape("r1 penalty: real image does not influence the discriminator output".into())
    })?;
    let sh = g.shape();
    let n = sh[0];
    let rest: usize = sh[1..].iter().product();
    let per_sample = g.square().reshape(&[n, rest]).sum_axis(1);
    Ok(per_sample.mean_all().mul_scalar(gamma / 2.0))
}

/// Focal loss for binary labels; probabilities are clamped to
/// [eps, 1 - eps] with eps = 1e-7 before the log.
pub const FOCAL_EPS: f64 = 1e-7;

pub fn focal_loss(p: &Var, labels: &Var, alpha: f64, gamma: f64) -> Result<Var> {
    if p.shape() != labels.shape() {
        return Err(Error::Shape(format!(
            "focal loss shapes {:?} vs {:?}",
            p.shape(),
            labels.shape()
        )));
    }
    let l = labels.detach();
    let one_minus_l = l.neg().add_scalar(1.0);
    // p_t = p where label = 1, (1 - p) where label = 0
    let pt = l
        .mul(p)
        .add(&one_minus_l.mul(&p.neg().add_scalar(1.0)))
        .clamp(FOCAL_EPS, 1.0 - FOCAL_EPS);
    let focus = pt.neg().add_scalar(1.0).powf(gamma);
    Ok(focus.mul(&pt.ln()).mean_all().mul_scalar(-alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcr_autodiff::check::{finite_diff_grads, rel_err};
    use ndarray::{ArrayD, IxDyn};

    fn filled(shape: &[usize], f: impl Fn(usize) -> f64) -> ArrayD<f64> {
        let n: usize = shape.iter().product();
        ArrayD::from_shape_vec(IxDyn(shape), (0..n).map(f).collect()).unwrap()
    }

    #[test]
    fn adv_loss_at_zero_logits_is_ln2() {
        let tape = Tape::new();
        let logits = tape.constant(ArrayD::zeros(IxDyn(&[1, 1, 3, 3])));
        let v = adv_loss_g(&logits).scalar_value();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn adv_loss_monotone_decreasing_in_logits() {
        let tape = Tape::new();
        let mut prev = f64::INFINITY;
        for x in [-2.0, -0.5, 0.0, 0.7, 3.0, 20.0] {
            let v = adv_loss_g(&tape.constant(ArrayD::from_elem(IxDyn(&[4]), x))).scalar_value();
            assert!(v < prev);
            prev = v;
        }
        // perfect fooling limit
        let v = adv_loss_g(&tape.constant(ArrayD::from_elem(IxDyn(&[4]), 1e3))).scalar_value();
        assert!(v < 1e-12);
    }

    #[test]
    fn rec_loss_values_and_symmetry() {
        let tape = Tape::new();
        let y = tape.constant(filled(&[2, 8], |i| (i as f64 * 0.1).sin()));
        let y2 = tape.constant(y.value());
        assert_eq!(rec_loss(&y, &y2).unwrap().scalar_value(), 0.0);
        let shifted = tape.constant(y.value().mapv(|v| v + 0.5));
        let a = rec_loss(&y, &shifted).unwrap().scalar_value();
        assert!((a - 0.5).abs() < 1e-12);
        let b = rec_loss(&shifted, &y).unwrap().scalar_value();
        assert_eq!(a, b);
    }

    #[test]
    fn vq_loss_zero_cases_and_gradient() {
        let tape = Tape::new();
        let z = tape.leaf(filled(&[5, 3], |i| i as f64 * 0.2 - 0.7));
        let zq = tape.constant(filled(&[5, 3], |i| i as f64 * 0.15));
        let same = tape.constant(z.value());
        assert_eq!(vq_loss(&z, &same, 0.25).unwrap().scalar_value(), 0.0);
        assert_eq!(vq_loss(&z, &zq, 0.0).unwrap().scalar_value(), 0.0);

        let beta = 0.25;
        let loss = vq_loss(&z, &zq, beta).unwrap();
        let g = tape.backward(&loss).wrt(&z).unwrap().value();
        // analytic: 2*beta*(z - z_q)/N over vectors
        let expect = (z.value() - zq.value()).mapv(|d| 2.0 * beta * d / 5.0);
        assert!(rel_err(&g, &expect) < 1e-12);
    }

    #[test]
    fn generator_total_weighted_sum_and_linearity() {
        let tape = Tape::new();
        let w = LossWeights::default();
        let c = |v: f64| tape.scalar(v);
        let total = generator_total(&c(0.1), &c(0.1), &c(0.1), &c(0.1), &w).scalar_value();
        assert!((total - 2.6).abs() < 1e-12);
        let zero = generator_total(&c(0.0), &c(0.0), &c(0.0), &c(0.0), &w).scalar_value();
        assert_eq!(zero, 0.0);
        // superposition in each component
        let base = generator_total(&c(0.3), &c(0.5), &c(0.7), &c(0.9), &w).scalar_value();
        let scaled = generator_total(&c(0.6), &c(0.5), &c(0.7), &c(0.9), &w).scalar_value();
        assert!((scaled - base - w.lambda_adv * 0.3).abs() < 1e-12);
    }

    #[test]
    fn disc_loss_analytic_values() {
        let tape = Tape::new();
        let zeros = tape.constant(ArrayD::zeros(IxDyn(&[2, 2])));
        let ones_t = tape.constant(ArrayD::from_elem(IxDyn(&[2, 2]), 1.0));
        let v = disc_loss(&zeros, &zeros, &ones_t).unwrap().scalar_value();
        assert!((v - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);

        // smoothed targets at zero logits still give ln 2 for the real term
        let t95 = tape.constant(ArrayD::from_elem(IxDyn(&[2, 2]), 0.95));
        let strong_fake = tape.constant(ArrayD::from_elem(IxDyn(&[2, 2]), -1e3));
        let v = disc_loss(&zeros, &strong_fake, &t95).unwrap().scalar_value();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-9);

        // perfect discriminator limit
        let big = tape.constant(ArrayD::from_elem(IxDyn(&[2, 2]), 1e3));
        let v = disc_loss(&big, &strong_fake, &ones_t).unwrap().scalar_value();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn disc_loss_directional_monotonicity() {
        let tape = Tape::new();
        let t = tape.constant(ArrayD::from_elem(IxDyn(&[3]), 1.0));
        let at = |r: f64, f: f64| {
            disc_loss(
                &tape.constant(ArrayD::from_elem(IxDyn(&[3]), r)),
                &tape.constant(ArrayD::from_elem(IxDyn(&[3]), f)),
                &t,
            )
            .unwrap()
            .scalar_value()
        };
        assert!(at(1.0, 0.0) < at(0.0, 0.0), "raising real logits lowers the loss");
        assert!(at(0.0, 1.0) > at(0.0, 0.0), "raising fake logits raises the loss");
    }

    #[test]
    fn r1_penalty_linear_discriminator() {
        // D(y) = w . y with w = (3, 4): ||grad||^2 = 25, gamma = 10 -> 125
        let tape = Tape::new();
        let y = tape.leaf(ArrayD::from_shape_vec(IxDyn(&[1, 2]), vec![0.3, -0.8]).unwrap());
        let w = tape.constant(ArrayD::from_shape_vec(IxDyn(&[1, 2]), vec![3.0, 4.0]).unwrap());
        let logits = w.mul(&y).sum_all();
        let p = r1_penalty(&tape, &logits, &y, 10.0).unwrap().scalar_value();
        assert!((p - 125.0).abs() < 1e-10);

        // constant discriminator -> zero penalty... constant has no gradient
        // path, so use a zero-weight linear map instead
        let wz = tape.constant(ArrayD::zeros(IxDyn(&[1, 2])));
        let logits = wz.mul(&y).sum_all();
        let p = r1_penalty(&tape, &logits, &y, 10.0).unwrap().scalar_value();
        assert_eq!(p, 0.0);

        // linear in gamma
        let logits = w.mul(&y).sum_all();
        let p1 = r1_penalty(&tape, &logits, &y, 1.0).unwrap().scalar_value();
        let p7 = r1_penalty(&tape, &logits, &y, 7.0).unwrap().scalar_value();
        assert!((p7 - 7.0 * p1).abs() < 1e-10);
    }

    #[test]
    fn focal_loss_reference_values() {
        let tape = Tape::new();
        // p_t = 0.9 as a positive-label prediction
        let p = tape.constant(ArrayD::from_elem(IxDyn(&[1]), 0.9));
        let l1 = tape.constant(ArrayD::from_elem(IxDyn(&[1]), 1.0));
        let v = focal_loss(&p, &l1, 0.25, 2.0).unwrap().scalar_value();
        let expect = 0.25 * 0.01 * -(0.9f64.ln());
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 2.634e-4).abs() < 1e-6);

        // confident and correct -> loss tends to 0
        let p = tape.constant(ArrayD::from_elem(IxDyn(&[1]), 1.0 - 1e-9));
        let v = focal_loss(&p, &l1, 0.25, 2.0).unwrap().scalar_value();
        assert!(v < 1e-12);

        // gamma = 0, alpha = 1 reduces to cross-entropy
        let p = tape.constant(ArrayD::from_elem(IxDyn(&[1]), 0.3));
        let l0 = tape.constant(ArrayD::from_elem(IxDyn(&[1]), 0.0));
        let v = focal_loss(&p, &l0, 1.0, 0.0).unwrap().scalar_value();
        assert!((v - -(0.7f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn focal_equals_bce_on_many_random_pairs() {
        use rand::Rng;
        let mut rng = crate::seeds::rng_from(3, &["focal-test"]);
        let tape = Tape::new();
        for _ in 0..1000 {
            let pv: f64 = rng.gen_range(1e-6..1.0 - 1e-6);
            let lv: f64 = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
            let p = tape.constant(ArrayD::from_elem(IxDyn(&[1]), pv));
            let l = tape.constant(ArrayD::from_elem(IxDyn(&[1]), lv));
            let focal = focal_loss(&p, &l, 1.0, 0.0).unwrap().scalar_value();
            let pt = if lv > 0.5 { pv } else { 1.0 - pv };
            let bce = -pt.ln();
            assert!((focal - bce).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let rebuild = |xs: &[ArrayD<f64>]| -> (Tape, Vec<Var>) {
            let tape = Tape::new();
            let vars = xs.iter().map(|x| tape.leaf(x.clone())).collect();
            (tape, vars)
        };

        // disc_loss grads wrt both logit maps
        let lr = filled(&[2, 3], |i| (i as f64 * 0.37).sin());
        let lf = filled(&[2, 3], |i| (i as f64 * 0.53).cos());
        let t = ArrayD::from_elem(IxDyn(&[2, 3]), 0.93);
        let f = |xs: &[ArrayD<f64>]| {
            let (tape, v) = rebuild(xs);
            let tt = tape.constant(t.clone());
            disc_loss(&v[0], &v[1], &tt).unwrap().scalar_value()
        };
        let numeric = finite_diff_grads(&f, &[lr.clone(), lf.clone()], 1e-5);
        let (tape, v) = rebuild(&[lr, lf]);
        let tt = tape.constant(t.clone());
        let loss = disc_loss(&v[0], &v[1], &tt).unwrap();
        let grads = tape.backward(&loss);
        for (i, vx) in v.iter().enumerate() {
            let a = grads.value_or_zero(vx);
            assert!(rel_err(&a, &numeric[i]) < 1e-7);
        }

        // focal grads wrt probabilities
        let p = filled(&[6], |i| 0.1 + 0.13 * i as f64);
        let lab = filled(&[6], |i| (i % 2) as f64);
        let f = |xs: &[ArrayD<f64>]| {
            let (tape, v) = rebuild(xs);
            let l = tape.constant(lab.clone());
            focal_loss(&v[0], &l, 0.25, 2.0).unwrap().scalar_value()
        };
        let numeric = finite_diff_grads(&f, &[p.clone()], 1e-6);
        let (tape, v) = rebuild(&[p]);
        let l = tape.constant(lab);
        let loss = focal_loss(&v[0], &l, 0.25, 2.0).unwrap();
        let a = tape.backward(&loss).value_or_zero(&v[0]);
        assert!(rel_err(&a, &numeric[0]) < 1e-7);
    }
}
