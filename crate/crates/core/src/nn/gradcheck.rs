//! Central finite-difference gradient checks.

use super::*;
use crate::error::Result;
use crate::rng::Prng;

const EPS: f64 = 1e-4;

/// Scalar loss placed on the network output for checking.
#[derive(Clone, Debug, PartialEq)]
pub enum CheckLoss {
    /// Softmax cross-entropy against a target class.
    CrossEntropy(usize),
    /// Squared error of the half-tanh outputs.
    HalfTanhMse([f64; 3]),
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheck {
    /// Largest `|a - n| / max(|a|, |n|, 1e-6)` over checked coordinates.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation flipped a ReLU and were not compared.
    pub skipped: usize,
}

fn eval(
    p: &ModelParams,
    crops: &[&[f64]],
    extra: &[f64],
    loss: &CheckLoss,
    cache: &mut Cache,
) -> Result<f64> {
    let out = p.forward(crops, extra, Some(cache))?;
    Ok(match loss {
        CheckLoss::CrossEntropy(t) => softmax_cross_entropy(&out, *t)?.0,
        CheckLoss::HalfTanhMse(target) => out
            .iter()
            .zip(target)
            .map(|(&z, t)| (half_tanh(z).0 - t).powi(2))
            .sum(),
    })
}

fn output_grad(out: &[f64], loss: &CheckLoss) -> Vec<f64> {
    match loss {
        CheckLoss::CrossEntropy(t) => {
            let mut g = softmax(out);
            g[*t] -= 1.0;
            g
        }
        CheckLoss::HalfTanhMse(target) => out
            .iter()
            .zip(target)
            .map(|(&z, t)| {
                let (y, dy) = half_tanh(z);
                2.0 * (y - t) * dy
            })
            .collect(),
    }
}

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares backpropagated parameter and extra-input gradients with central
/// differences. At most `per_tensor` evenly spaced coordinates of each
/// tensor are checked (0 checks all).
pub fn check_gradients(
    params: &ModelParams,
    crops: &[&[f64]],
    extra: &[f64],
    loss: &CheckLoss,
    per_tensor: usize,
) -> Result<GradCheck> {
    let mut p = params.clone();
    let mut cache = Cache::default();
    let out = p.forward(crops, extra, Some(&mut cache))?;
    let pattern = cache.active_units();
    let mut grads = p.zero_grads();
    let input_grads = p
        .backward(&cache, &output_grad(&out, loss), &mut grads, true)?
        .expect("input gradients requested");

    let mut r = GradCheck::default();
    for ti in 0..p.tensors().len() {
        let len = p.tensors()[ti].len();
        let step = if per_tensor == 0 || len <= per_tensor {
            1
        } else {
            len.div_ceil(per_tensor)
        };
        for i in (0..len).step_by(step) {
            let orig = p.tensors()[ti].data()[i];
            p.tensors_mut()[ti].data_mut()[i] = orig + EPS;
            let mut c_plus = Cache::default();
            let lp = eval(&p, crops, extra, loss, &mut c_plus)?;
            p.tensors_mut()[ti].data_mut()[i] = orig - EPS;
            let mut c_minus = Cache::default();
            let lm = eval(&p, crops, extra, loss, &mut c_minus)?;
            p.tensors_mut()[ti].data_mut()[i] = orig;
            if c_plus.active_units() != pattern || c_minus.active_units() != pattern {
                r.skipped += 1;
                continue;
            }
            r.max_rel_error = r
                .max_rel_error
                .max(rel(grads.tensors[ti][i], (lp - lm) / (2.0 * EPS)));
            r.checked += 1;
        }
    }
    let mut extra_p = extra.to_vec();
    for i in 0..extra.len() {
        extra_p[i] = extra[i] + EPS;
        let mut c_plus = Cache::default();
        let lp = eval(&p, crops, &extra_p, loss, &mut c_plus)?;
        extra_p[i] = extra[i] - EPS;
        let mut c_minus = Cache::default();
        let lm = eval(&p, crops, &extra_p, loss, &mut c_minus)?;
        extra_p[i] = extra[i];
        if c_plus.active_units() != pattern || c_minus.active_units() != pattern {
            r.skipped += 1;
            continue;
        }
        r.max_rel_error = r
            .max_rel_error
            .max(rel(input_grads.extra[i], (lp - lm) / (2.0 * EPS)));
        r.checked += 1;
    }
    Ok(r)
}

/// Jitters every parameter by up to `scale` and, when `head` is set, gives the
/// output layer random weights so gradients reach the body.
pub fn jitter(params: &mut ModelParams, seed: u64, scale: f64, head: bool) {
    let mut rng = Prng::new(seed);
    if head {
        let layer = params.dense_layers_mut().last_mut().expect("output layer");
        for v in layer.weight.data_mut() {
            *v = rng.range(-0.5, 0.5);
        }
    }
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.range(-scale, scale);
        }
    }
}
