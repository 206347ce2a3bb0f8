//! Central finite-difference gradient checks.

use super::model::{Grads, Params};
use super::tensor::Tensor;

pub const EPS: f64 = 1e-4;

/// `Σ t ⊙ r`, the scalar probe used to turn a tensor-valued op into a loss.
pub fn dot(t: &Tensor, r: &Tensor) -> f64 {
    t.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + EPS;
            let up = f(&probe);
            probe[i] = x[i] - EPS;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * EPS)
        })
        .collect()
}

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖)`; 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-300 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Relative error between `analytic` and the central-difference gradient of `f` at `x`.
pub fn check(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> f64 {
    relative_error(analytic, &numeric_gradient(f, x))
}

/// Like [`check`], over every scalar of a parameter store.
pub fn check_params(params: &Params, analytic: &Grads, loss: impl Fn(&Params) -> f64) -> f64 {
    let flat = params.flatten();
    let mut probe = params.clone();
    let numeric = numeric_gradient(
        |v| {
            probe.load_flat(v);
            loss(&probe)
        },
        &flat,
    );
    relative_error(&analytic.flatten(), &numeric)
}
