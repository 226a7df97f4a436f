//! Central finite-difference utilities used to verify gradients.

use ndarray::ArrayD;

/// Central finite-difference gradient of `f` with respect to each input,
/// evaluated elementwise with step `h`.
pub fn finite_diff_grads(
    f: &dyn Fn(&[ArrayD<f64>]) -> f64,
    inputs: &[ArrayD<f64>],
    h: f64,
) -> Vec<ArrayD<f64>> {
    let mut grads = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = ArrayD::<f64>::zeros(inputs[i].raw_dim());
        let mut work: Vec<ArrayD<f64>> = inputs.to_vec();
        let n = inputs[i].len();
        for j in 0..n {
            let orig = inputs[i].as_slice().unwrap()[j];
            work[i].as_slice_mut().unwrap()[j] = orig + h;
            let fp = f(&work);
            work[i].as_slice_mut().unwrap()[j] = orig - h;
            let fm = f(&work);
            work[i].as_slice_mut().unwrap()[j] = orig;
            g.as_slice_mut().unwrap()[j] = (fp - fm) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

/// Relative error between tensors: max_i |a_i - b_i| / max(1, ||a||_inf, ||b||_inf).
pub fn rel_err(a: &ArrayD<f64>, b: &ArrayD<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "rel_err: shape mismatch");
    let scale = a
        .iter()
        .chain(b.iter())
        .fold(1.0f64, |m, &x| m.max(x.abs()));
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs()))
        / scale
}

/// Maximum relative error across parallel gradient lists.
pub fn max_rel_err(analytic: &[ArrayD<f64>], numeric: &[ArrayD<f64>]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, b)| rel_err(a, b))
        .fold(0.0, f64::max)
}
