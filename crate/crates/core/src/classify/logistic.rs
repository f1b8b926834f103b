//! Logistic regression by minibatch proximal SGD.
//!
//! Objective over standardized features, with `t_i ∈ {0,1}` and class weight `s_i`:
//! `J = (1/n) Σ s_i · CE(σ(w·x_i + b), t_i) + (1/(C·n)) · R(w)`
//! where `R` is `||w||₁`, `½||w||²`, or `ρ||w||₁ + (1-ρ)·½||w||²`.
//! The smooth part takes gradient steps; the L1 part is applied by soft thresholding.

use rand::seq::SliceRandom;

use super::{ClassWeights, ClassifierSettings, Fitted, Penalty, Standardizer};
use crate::embed::pv::{log_sigmoid, sigmoid};
use crate::gradcheck::{self, GradCheckReport, ParamGroups};
use crate::seeded_rng;

fn penalty_split(penalty: Penalty, l1_ratio: f64) -> (f64, f64) {
    match penalty {
        Penalty::L1 => (1.0, 0.0),
        Penalty::L2 => (0.0, 1.0),
        Penalty::Elasticnet => (l1_ratio, 1.0 - l1_ratio),
    }
}

fn soft_threshold(w: f64, t: f64) -> f64 {
    if w > t {
        w - t
    } else if w < -t {
        w + t
    } else {
        0.0
    }
}

pub(super) fn fit(
    x: &[Vec<f64>],
    y: &[bool],
    cw: &ClassWeights,
    penalty: Penalty,
    c: f64,
    settings: &ClassifierSettings,
    seed: u64,
) -> Fitted {
    let scaler = Standardizer::fit(x);
    let xs = scaler.transform(x);
    let n = xs.len();
    let d = scaler.mean.len();
    let (l1, l2) = penalty_split(penalty, settings.l1_ratio);
    let reg = 1.0 / (c * n as f64);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeded_rng(seed);
    let batch = settings.linear_batch.clamp(1, n);
    let mut gw = vec![0.0; d];
    for epoch in 0..settings.linear_epochs {
        let eta = settings.linear_lr / (1.0 + epoch as f64).sqrt();
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            gw.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            for &i in chunk {
                let z = dot(&w, &xs[i]) + b;
                let t = if y[i] { 1.0 } else { 0.0 };
                let r = cw.weight(y[i]) * (sigmoid(z) - t);
                for (g, v) in gw.iter_mut().zip(&xs[i]) {
                    *g += r * v;
                }
                gb += r;
            }
            let m = chunk.len() as f64;
            for (wj, g) in w.iter_mut().zip(&gw) {
                *wj -= eta * (g / m + reg * l2 * *wj);
                if l1 > 0.0 {
                    *wj = soft_threshold(*wj, eta * reg * l1);
                }
            }
            b -= eta * gb / m;
        }
    }
    Fitted::Linear {
        scaler,
        weights: w,
        bias: b,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Full objective `J(w, b)` on already-standardized features.
pub fn logistic_objective(
    w: &[f64],
    b: f64,
    x: &[Vec<f64>],
    y: &[bool],
    cw: &ClassWeights,
    penalty: Penalty,
    c: f64,
    l1_ratio: f64,
) -> f64 {
    let (l1, l2) = penalty_split(penalty, l1_ratio);
    let l1_term = l1 * w.iter().map(|v| v.abs()).sum::<f64>() / (c * x.len() as f64);
    smooth_objective(w, b, x, y, cw, l2, c) + l1_term
}

fn smooth_objective(w: &[f64], b: f64, x: &[Vec<f64>], y: &[bool], cw: &ClassWeights, l2: f64, c: f64) -> f64 {
    let n = x.len() as f64;
    let data: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let z = dot(w, xi) + b;
            let ll = if yi { log_sigmoid(z) } else { log_sigmoid(-z) };
            -cw.weight(yi) * ll
        })
        .sum::<f64>()
        / n;
    data + l2 * 0.5 * dot(w, w) / (c * n)
}

/// Gradient of the smooth part of the objective (data term and L2 share).
fn smooth_grad(
    w: &[f64],
    b: f64,
    x: &[Vec<f64>],
    y: &[bool],
    cw: &ClassWeights,
    l2: f64,
    c: f64,
) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let t = if yi { 1.0 } else { 0.0 };
        let r = cw.weight(yi) * (sigmoid(dot(w, xi) + b) - t) / n;
        for (g, v) in gw.iter_mut().zip(xi) {
            *g += r * v;
        }
        gb += r;
    }
    for (g, wj) in gw.iter_mut().zip(w) {
        *g += l2 * wj / (c * n);
    }
    (gw, gb)
}

struct LrParams {
    w: Vec<f64>,
    b: [f64; 1],
}

impl ParamGroups for LrParams {
    fn group_names(&self) -> Vec<&'static str> {
        vec!["weights", "bias"]
    }

    fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Finite-difference check of the smooth objective's gradient for `penalty`
/// (`l2` or `elasticnet`; the L1 share is excluded since it is handled by the
/// proximal step) on a small random problem.
pub fn logistic_gradient_check(penalty: Penalty, seed: u64) -> GradCheckReport {
    use rand::Rng;
    let mut rng = seeded_rng(seed);
    let n = 12;
    let d = 5;
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let y: Vec<bool> = (0..n).map(|i| i % 4 == 0).collect();
    let cw = ClassWeights { no: 0.6, yes: 2.5 };
    let c = 0.5;
    let l2 = penalty_split(penalty, 0.5).1;
    let mut p = LrParams {
        w: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        b: [rng.random_range(-0.5..0.5)],
    };
    let (gw, gb) = smooth_grad(&p.w, p.b[0], &x, &y, &cw, l2, c);
    gradcheck::check(&mut p, &[gw, vec![gb]], |p| {
        smooth_objective(&p.w, p.b[0], &x, &y, &cw, l2, c)
    })
}
