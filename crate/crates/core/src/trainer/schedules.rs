//! Learning-rate schedules and the GAN stabilizers.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// Cosine annealing to zero: lr(e) = lr_init * (1 + cos(pi * e / total)) / 2.
pub fn cosine_lr(epoch: u64, total_epochs: u64, lr_init: f64) -> Result<f64> {
    if epoch > total_epochs {
        return Err(Error::Range(format!(
            "epoch {epoch} outside schedule range 0..={total_epochs}"
        )));
    }
    let t = epoch as f64 / total_epochs as f64;
    Ok((lr_init * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0).max(0.0))
}

/// Exponential decay: lr(e) = lr_init * gamma^e.
pub fn exp_lr(epoch: u64, lr_init: f64, gamma: f64) -> f64 {
    lr_init * gamma.powi(epoch as i32)
}

/// Variance of the instance noise added to generated images before the
/// discriminator: sigma^2(e) = sigma0 * (1 - e / total), annealed to zero.
pub fn noise_sigma_sq(epoch: u64, total_epochs: u64, sigma0: f64) -> Result<f64> {
    if epoch > total_epochs {
        return Err(Error::Range(format!(
            "epoch {epoch} outside noise schedule 0..={total_epochs}"
        )));
    }
    Ok(sigma0 * (1.0 - epoch as f64 / total_epochs as f64))
}

/// One-sided label smoothing: real targets drawn i.i.d. uniform in [lo, hi].
pub fn smooth_real_labels(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha12Rng) -> ArrayD<f64> {
    ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.gen_range(lo..=hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    #[test]
    fn cosine_reference_points() {
        assert_eq!(cosine_lr(0, 500, 2e-4).unwrap(), 2e-4);
        assert!((cosine_lr(250, 500, 2e-4).unwrap() - 1e-4).abs() < 1e-19);
        assert!(cosine_lr(500, 500, 2e-4).unwrap().abs() < 1e-19);
        assert!(matches!(cosine_lr(501, 500, 2e-4), Err(Error::Range(_))));
    }

    #[test]
    fn cosine_is_monotone_nonincreasing() {
        let mut prev = f64::INFINITY;
        for e in 0..=500 {
            let lr = cosine_lr(e, 500, 2e-4).unwrap();
            assert!(lr <= prev + 1e-18);
            assert!((0.0..=2e-4).contains(&lr));
            prev = lr;
        }
    }

    #[test]
    fn exponential_reference_points() {
        assert_eq!(exp_lr(0, 2e-4, 0.98), 2e-4);
        assert!((exp_lr(1, 2e-4, 0.98) - 1.96e-4).abs() < 1e-19);
        let late = exp_lr(200, 2e-4, 0.98);
        assert!((late - 2e-4 * 0.98f64.powi(200)).abs() < 1e-22);
        assert!((late - 3.52e-6).abs() < 5e-8);
        // strictly decreasing
        for e in 0..100 {
            assert!(exp_lr(e + 1, 2e-4, 0.98) < exp_lr(e, 2e-4, 0.98));
        }
    }

    #[test]
    fn noise_schedule_linear_anneal() {
        assert_eq!(noise_sigma_sq(0, 500, 0.1).unwrap(), 0.1);
        assert!((noise_sigma_sq(250, 500, 0.1).unwrap() - 0.05).abs() < 1e-18);
        assert_eq!(noise_sigma_sq(500, 500, 0.1).unwrap(), 0.0);
        assert!(matches!(noise_sigma_sq(501, 500, 0.1), Err(Error::Range(_))));
    }

    #[test]
    fn smoothed_labels_range_determinism_and_mean() {
        let mut rng = seeds::rng_from(1, &["labels"]);
        let a = smooth_real_labels(&[100_000], 0.9, 1.0, &mut rng);
        assert!(a.iter().all(|&v| (0.9..=1.0).contains(&v)));
        let mean = a.mean().unwrap();
        assert!((mean - 0.95).abs() < 0.002, "mean {mean} outside 3-sigma bound");

        let mut rng2 = seeds::rng_from(1, &["labels"]);
        let b = smooth_real_labels(&[100_000], 0.9, 1.0, &mut rng2);
        assert_eq!(a, b);
    }
}
