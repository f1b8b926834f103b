//! One-hidden-layer perceptron with a sigmoid output, trained by minibatch
//! SGD with momentum on class-weighted cross-entropy plus `(α/2m)·||W||²`
//! per batch of size `m`.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Activation, ClassWeights, ClassifierSettings, Fitted, LearningRate, Standardizer};
use crate::binio;
use crate::embed::pv::{log_sigmoid, sigmoid};
use crate::gradcheck::{self, GradCheckReport, ParamGroups};
use crate::{seeded_rng, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub activation: Activation,
    pub hidden: usize,
    /// `d × hidden`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: [f64; 1],
}

fn activate(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Logistic => sigmoid(z),
        Activation::Identity => z,
        Activation::Tanh => z.tanh(),
        Activation::Relu => z.max(0.0),
    }
}

/// Derivative expressed through the activation value `h` (and `z` for relu).
fn activate_grad(a: Activation, z: f64, h: f64) -> f64 {
    match a {
        Activation::Logistic => h * (1.0 - h),
        Activation::Identity => 1.0,
        Activation::Tanh => 1.0 - h * h,
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

impl MlpParams {
    fn init(d: usize, hidden: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let factor = if activation == Activation::Logistic { 2.0 } else { 6.0 };
        let b1_bound = (factor / (d + hidden) as f64).sqrt();
        let b2_bound = (factor / (hidden + 1) as f64).sqrt();
        let mut u = |b: f64| rng.random_range(-b..b);
        Self {
            activation,
            hidden,
            w1: (0..d * hidden).map(|_| u(b1_bound)).collect(),
            b1: (0..hidden).map(|_| u(b1_bound)).collect(),
            w2: (0..hidden).map(|_| u(b2_bound)).collect(),
            b2: [u(b2_bound)],
        }
    }

    pub fn dim(&self) -> usize {
        self.w1.len() / self.hidden
    }

    /// Pre-activations and activations of the hidden layer, then the output logit.
    fn forward(&self, x: &[f64], z: &mut [f64], h: &mut [f64]) -> f64 {
        z.copy_from_slice(&self.b1);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.w1[i * self.hidden..(i + 1) * self.hidden];
            for (zj, w) in z.iter_mut().zip(row) {
                *zj += xi * w;
            }
        }
        for (hj, &zj) in h.iter_mut().zip(z.iter()) {
            *hj = activate(self.activation, zj);
        }
        h.iter().zip(&self.w2).map(|(a, b)| a * b).sum::<f64>() + self.b2[0]
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; self.hidden];
        let mut h = vec![0.0; self.hidden];
        sigmoid(self.forward(x, &mut z, &mut h))
    }

    fn zeros_like(&self) -> Self {
        Self {
            activation: self.activation,
            hidden: self.hidden,
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: [0.0],
        }
    }

    /// Loss and gradient over the rows in `batch`, accumulated into `grad`
    /// (which is overwritten).
    fn loss_grad(
        &self,
        x: &[Vec<f64>],
        y: &[bool],
        cw: &ClassWeights,
        alpha: f64,
        batch: &[usize],
        grad: &mut Self,
    ) -> f64 {
        for g in [&mut grad.w1, &mut grad.b1, &mut grad.w2] {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        grad.b2[0] = 0.0;
        let m = batch.len() as f64;
        let mut z = vec![0.0; self.hidden];
        let mut h = vec![0.0; self.hidden];
        let mut loss = 0.0;
        for &i in batch {
            let logit = self.forward(&x[i], &mut z, &mut h);
            let s = cw.weight(y[i]);
            loss -= s * if y[i] { log_sigmoid(logit) } else { log_sigmoid(-logit) };
            let t = if y[i] { 1.0 } else { 0.0 };
            let d_out = s * (sigmoid(logit) - t) / m;
            grad.b2[0] += d_out;
            for j in 0..self.hidden {
                grad.w2[j] += d_out * h[j];
                let dz = d_out * self.w2[j] * activate_grad(self.activation, z[j], h[j]);
                z[j] = dz;
                grad.b1[j] += dz;
            }
            for (k, &xk) in x[i].iter().enumerate() {
                if xk == 0.0 {
                    continue;
                }
                let row = &mut grad.w1[k * self.hidden..(k + 1) * self.hidden];
                for (g, dz) in row.iter_mut().zip(&z) {
                    *g += xk * dz;
                }
            }
        }
        let sq: f64 = self.w1.iter().chain(&self.w2).map(|w| w * w).sum();
        for (g, w) in grad.w1.iter_mut().zip(&self.w1) {
            *g += alpha * w / m;
        }
        for (g, w) in grad.w2.iter_mut().zip(&self.w2) {
            *g += alpha * w / m;
        }
        loss / m + 0.5 * alpha * sq / m
    }

    pub(super) fn write(&self, w: &mut binio::Writer) -> Result<()> {
        w.json(&self.activation)?;
        w.u64(self.hidden as u64);
        w.f64s(&self.w1).f64s(&self.b1).f64s(&self.w2).f64s(&self.b2);
        Ok(())
    }

    pub(super) fn read(r: &mut binio::Reader<'_>, dim: usize) -> Result<Self> {
        let activation = r.json()?;
        let hidden = r.u64()? as usize;
        let w1 = r.f64s()?;
        let b1 = r.f64s()?;
        let w2 = r.f64s()?;
        let b2 = r.f64s()?;
        if hidden == 0 || w1.len() != dim * hidden || b1.len() != hidden || w2.len() != hidden || b2.len() != 1 {
            return Err(Error::BadFormat("mlp shape".into()));
        }
        Ok(Self {
            activation,
            hidden,
            w1,
            b1,
            w2,
            b2: [b2[0]],
        })
    }
}

impl ParamGroups for MlpParams {
    fn group_names(&self) -> Vec<&'static str> {
        vec!["w1", "b1", "w2", "b2"]
    }

    fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn fit(
    x: &[Vec<f64>],
    y: &[bool],
    cw: &ClassWeights,
    hidden: usize,
    schedule: LearningRate,
    activation: Activation,
    alpha: f64,
    settings: &ClassifierSettings,
    seed: u64,
) -> Fitted {
    let scaler = Standardizer::fit(x);
    let xs = scaler.transform(x);
    let n = xs.len();
    let mut rng = seeded_rng(seed);
    let mut params = MlpParams::init(xs[0].len(), hidden, activation, &mut rng);
    let mut grad = params.zeros_like();
    let mut velocity = params.zeros_like();
    let mut order: Vec<usize> = (0..n).collect();
    let batch = settings.mlp_batch.clamp(1, n);
    let mut lr = settings.mlp_lr;
    let mut best_loss = f64::INFINITY;
    let mut stalls = 0;
    for epoch in 0..settings.mlp_epochs {
        if schedule == LearningRate::Invscaling {
            lr = settings.mlp_lr / ((epoch + 1) as f64).powf(settings.mlp_power_t);
        }
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let l = params.loss_grad(&xs, y, cw, alpha, chunk, &mut grad);
            epoch_loss += l * chunk.len() as f64;
            let mom = settings.mlp_momentum;
            let step = |p: &mut [f64], v: &mut [f64], g: &[f64]| {
                for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vi = mom * *vi - lr * gi;
                    *pi += *vi;
                }
            };
            step(&mut params.w1, &mut velocity.w1, &grad.w1);
            step(&mut params.b1, &mut velocity.b1, &grad.b1);
            step(&mut params.w2, &mut velocity.w2, &grad.w2);
            step(&mut params.b2, &mut velocity.b2, &grad.b2);
        }
        epoch_loss /= n as f64;
        if !epoch_loss.is_finite() {
            log::warn!("MLP loss diverged at epoch {epoch}");
            break;
        }
        if epoch_loss > best_loss - settings.mlp_tol {
            stalls += 1;
        } else {
            stalls = 0;
        }
        best_loss = best_loss.min(epoch_loss);
        if schedule == LearningRate::Adaptive {
            if stalls >= settings.mlp_adaptive_patience {
                if lr <= 1e-6 {
                    break;
                }
                lr /= 2.0;
                stalls = 0;
            }
        } else if stalls >= settings.mlp_patience {
            break;
        }
    }
    Fitted::Mlp { scaler, params }
}

/// Finite-difference check of the full-batch objective on a small network.
pub fn mlp_gradient_check(activation: Activation, seed: u64) -> GradCheckReport {
    let mut rng = seeded_rng(seed);
    let n = 9;
    let d = 4;
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect();
    let y: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
    let cw = ClassWeights { no: 0.75, yes: 1.5 };
    let alpha = 0.3;
    let mut params = MlpParams::init(d, 5, activation, &mut rng);
    if activation == Activation::Relu {
        // Keep pre-activations away from the kink.
        for b in params.b1.iter_mut() {
            *b += if *b >= 0.0 { 0.5 } else { -0.5 };
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let mut grad = params.zeros_like();
    params.loss_grad(&x, &y, &cw, alpha, &all, &mut grad);
    let analytic = vec![grad.w1, grad.b1, grad.w2, grad.b2.to_vec()];
    gradcheck::check(&mut params, &analytic, |p| {
        let mut g = p.zeros_like();
        p.loss_grad(&x, &y, &cw, alpha, &all, &mut g)
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::separable;
    use super::super::*;
    use super::*;

    #[test]
    fn gradients_match_finite_differences() {
        for a in [
            Activation::Logistic,
            Activation::Identity,
            Activation::Tanh,
            Activation::Relu,
        ] {
            let r = mlp_gradient_check(a, 17);
            assert!(r.passes(1e-4), "{a:?}: {r:?}");
        }
    }

    #[test]
    fn learns_separable_clusters() {
        let (x, y) = separable(90, 12);
        let w = compute_class_weights(&y).unwrap();
        for lr in [LearningRate::Constant, LearningRate::Invscaling, LearningRate::Adaptive] {
            let spec = ClassifierSpec::new(
                Hyperparams::Mlp {
                    hidden: 100,
                    learning_rate: lr,
                    activation: Activation::Relu,
                    alpha: 0.0001,
                },
                4,
            );
            let m = train_classifier(&x, &y, &spec, &w, &ClassifierSettings::default()).unwrap();
            let p = m.predict(&x).unwrap();
            let correct = p.labels.iter().zip(&y).filter(|(a, b)| a == b).count();
            assert!(correct >= 88, "{lr:?}: {correct}");
        }
    }

    #[test]
    fn init_bounds() {
        let mut rng = seeded_rng(0);
        let p = MlpParams::init(300, 100, Activation::Tanh, &mut rng);
        let bound = (6.0f64 / 400.0).sqrt();
        assert!(p.w1.iter().all(|w| w.abs() <= bound));
        assert_eq!(p.w1.len(), 300 * 100);
        assert_eq!(p.dim(), 300);
    }
}
