//! Support vector machines.
//!
//! The linear kernel is trained in the primal by minibatch SGD on
//! `(λ/2)||w||² + (1/n) Σ s_i · max(0, 1 - y_i(w·x_i + b))` with `λ = 1/(C·n)`.
//! Non-linear kernels solve the dual by SMO with maximal-violating-pair
//! selection and a per-sample box `0 ≤ α_i ≤ C · s_i`.

use rand::seq::SliceRandom;

use super::{ClassWeights, ClassifierSettings, Fitted, Kernel, Standardizer};
use crate::binio;
use crate::{seeded_rng, Error, Result};

const TAU: f64 = 1e-12;

pub(super) fn fit_linear(
    x: &[Vec<f64>],
    y: &[bool],
    cw: &ClassWeights,
    c: f64,
    settings: &ClassifierSettings,
    seed: u64,
) -> Fitted {
    let scaler = Standardizer::fit(x);
    let xs = scaler.transform(x);
    let n = xs.len();
    let lambda = 1.0 / (c * n as f64);
    let mut w = vec![0.0; scaler.mean.len()];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeded_rng(seed);
    let batch = settings.linear_batch.clamp(1, n);
    let mut gw = vec![0.0; w.len()];
    for epoch in 0..settings.linear_epochs {
        let eta = settings.linear_lr / (1.0 + epoch as f64).sqrt();
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            gw.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            for &i in chunk {
                let yi = if y[i] { 1.0 } else { -1.0 };
                let margin = yi * (dot(&w, &xs[i]) + b);
                if margin < 1.0 {
                    let s = cw.weight(y[i]) * yi;
                    for (g, v) in gw.iter_mut().zip(&xs[i]) {
                        *g -= s * v;
                    }
                    gb -= s;
                }
            }
            let m = chunk.len() as f64;
            for (wj, g) in w.iter_mut().zip(&gw) {
                *wj -= eta * (g / m + lambda * *wj);
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

/// Kernel function parameters; `gamma = 1 / (d · var(X))`, `coef0 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct KernelFn {
    kernel: Kernel,
    gamma: f64,
    degree: u32,
}

impl KernelFn {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kernel {
            Kernel::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-self.gamma * d2).exp()
            }
            Kernel::Poly => (self.gamma * dot(a, b)).powi(self.degree as i32),
            Kernel::Linear => dot(a, b),
        }
    }
}

fn scale_gamma(x: &[Vec<f64>]) -> f64 {
    let d = x[0].len();
    let count = (x.len() * d) as f64;
    let mean = x.iter().flatten().sum::<f64>() / count;
    let var = x.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0
    }
}

/// Outcome of a dual solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoReport {
    pub iterations: usize,
    /// `max_{I_up} -y G - min_{I_low} -y G` at exit.
    pub kkt_gap: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    kernel: Kernel,
    gamma: f64,
    degree: u32,
    support: Vec<Vec<f64>>,
    /// `α_i · y_i` per support vector.
    coef: Vec<f64>,
    bias: f64,
    pub report: SmoReport,
}

impl KernelModel {
    fn kernel_fn(&self) -> KernelFn {
        KernelFn {
            kernel: self.kernel,
            gamma: self.gamma,
            degree: self.degree,
        }
    }

    pub fn n_support(&self) -> usize {
        self.support.len()
    }

    /// Signed margin `Σ α_i y_i K(x_i, x) + b`.
    pub fn decision(&self, x: &[f64]) -> f64 {
        let k = self.kernel_fn();
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * k.eval(s, x))
            .sum::<f64>()
            + self.bias
    }

    pub(super) fn write(&self, w: &mut binio::Writer) {
        let kind = match self.kernel {
            Kernel::Rbf => 0u64,
            Kernel::Poly => 1,
            Kernel::Linear => 2,
        };
        w.u64(kind).u64(self.degree as u64).u64(self.support.len() as u64);
        w.f64s(&[self.gamma, self.bias]).f64s(&self.coef);
        let flat: Vec<f64> = self.support.iter().flatten().copied().collect();
        w.f64s(&flat);
        w.u64(self.report.iterations as u64)
            .f64s(&[self.report.kkt_gap])
            .u64(self.report.converged as u64);
    }

    pub(super) fn read(r: &mut binio::Reader<'_>, dim: usize) -> Result<Self> {
        let kernel = match r.u64()? {
            0 => Kernel::Rbf,
            1 => Kernel::Poly,
            2 => Kernel::Linear,
            k => return Err(Error::BadFormat(format!("unknown kernel tag {k}"))),
        };
        let degree = r.u64()? as u32;
        let n_sv = r.u64()? as usize;
        let gb = r.f64s()?;
        let coef = r.f64s()?;
        let flat = r.f64s()?;
        if gb.len() != 2 || coef.len() != n_sv || flat.len() != n_sv * dim {
            return Err(Error::BadFormat("kernel model shape".into()));
        }
        let iterations = r.u64()? as usize;
        let kkt_gap = *r
            .f64s()?
            .first()
            .ok_or_else(|| Error::BadFormat("missing kkt gap".into()))?;
        let converged = r.u64()? != 0;
        Ok(Self {
            kernel,
            gamma: gb[0],
            degree,
            support: flat.chunks(dim.max(1)).map(<[f64]>::to_vec).collect(),
            coef,
            bias: gb[1],
            report: SmoReport {
                iterations,
                kkt_gap,
                converged,
            },
        })
    }
}

/// Kernel rows, precomputed for small problems and recomputed otherwise.
struct KernelCache<'a> {
    x: &'a [Vec<f64>],
    k: KernelFn,
    full: Option<Vec<f64>>,
}

const FULL_MATRIX_LIMIT: usize = 2500;

impl<'a> KernelCache<'a> {
    fn new(x: &'a [Vec<f64>], k: KernelFn) -> Self {
        let n = x.len();
        let full = (n <= FULL_MATRIX_LIMIT).then(|| {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = k.eval(&x[i], &x[j]);
                    m[i * n + j] = v;
                    m[j * n + i] = v;
                }
            }
            m
        });
        Self { x, k, full }
    }

    fn row(&self, i: usize, out: &mut Vec<f64>) {
        let n = self.x.len();
        out.clear();
        match &self.full {
            Some(m) => out.extend_from_slice(&m[i * n..(i + 1) * n]),
            None => out.extend(self.x.iter().map(|xj| self.k.eval(&self.x[i], xj))),
        }
    }

    fn diag(&self, i: usize) -> f64 {
        match &self.full {
            Some(m) => m[i * self.x.len() + i],
            None => self.k.eval(&self.x[i], &self.x[i]),
        }
    }
}

pub(super) fn fit_kernel(
    x: &[Vec<f64>],
    y: &[bool],
    cw: &ClassWeights,
    kernel: Kernel,
    c: f64,
    degree: Option<u32>,
    settings: &ClassifierSettings,
) -> Result<KernelModel> {
    let kf = KernelFn {
        kernel,
        gamma: scale_gamma(x),
        degree: degree.unwrap_or(1),
    };
    let ys: Vec<f64> = y.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let bounds: Vec<f64> = y.iter().map(|&l| c * cw.weight(l)).collect();
    let cache = KernelCache::new(x, kf);
    let (alpha, bias, report) = smo(&cache, &ys, &bounds, settings);
    if !report.converged {
        log::warn!(
            "SMO stopped at the iteration cap ({}) with KKT gap {:.3e}",
            report.iterations,
            report.kkt_gap
        );
    }
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for (i, &a) in alpha.iter().enumerate() {
        if a > 0.0 {
            support.push(x[i].clone());
            coef.push(a * ys[i]);
        }
    }
    Ok(KernelModel {
        kernel,
        gamma: kf.gamma,
        degree: kf.degree,
        support,
        coef,
        bias,
        report,
    })
}

/// Solves `min ½ αᵀQα - eᵀα` s.t. `yᵀα = 0`, `0 ≤ α_i ≤ C_i`, `Q_ij = y_i y_j K_ij`.
/// Returns `(α, b, report)`.
fn smo(
    cache: &KernelCache<'_>,
    y: &[f64],
    bounds: &[f64],
    settings: &ClassifierSettings,
) -> (Vec<f64>, f64, SmoReport) {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let qd: Vec<f64> = (0..n).map(|i| cache.diag(i)).collect();
    let max_iter = settings.smo_max_iter.max(100 * n);
    let mut ki = Vec::with_capacity(n);
    let mut kj = Vec::with_capacity(n);
    let mut iterations = 0;
    let mut gap;
    loop {
        let (i, j, g) = select_pair(&alpha, &grad, y, bounds);
        gap = g;
        if gap < settings.smo_tol || iterations >= max_iter {
            break;
        }
        iterations += 1;
        cache.row(i, &mut ki);
        cache.row(j, &mut kj);
        let (ci, cj) = (bounds[i], bounds[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * ki[j];
        if y[i] != y[j] {
            let quad = (qd[i] + qd[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = (qd[i] + qd[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for k in 0..n {
            grad[k] += y[k] * (y[i] * ki[k] * di + y[j] * kj[k] * dj);
        }
    }
    let bias = -rho(&alpha, &grad, y, bounds);
    (
        alpha,
        bias,
        SmoReport {
            iterations,
            kkt_gap: gap,
            converged: gap < settings.smo_tol,
        },
    )
}

fn in_up(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Maximal violating pair and its gap.
fn select_pair(alpha: &[f64], grad: &[f64], y: &[f64], bounds: &[f64]) -> (usize, usize, f64) {
    let mut i = 0;
    let mut j = 0;
    let mut up = f64::NEG_INFINITY;
    let mut low = f64::INFINITY;
    for t in 0..y.len() {
        let v = -y[t] * grad[t];
        if in_up(alpha[t], y[t], bounds[t]) && v > up {
            up = v;
            i = t;
        }
        if in_low(alpha[t], y[t], bounds[t]) && v < low {
            low = v;
            j = t;
        }
    }
    (i, j, up - low)
}

fn rho(alpha: &[f64], grad: &[f64], y: &[f64], bounds: &[f64]) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut free = 0usize;
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= bounds[t] {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::separable;
    use super::super::*;
    use super::*;
    use rand::Rng;

    fn fit(x: &[Vec<f64>], y: &[bool], kernel: Kernel, c: f64, degree: Option<u32>) -> ClassifierModel {
        let w = compute_class_weights(y).unwrap();
        let spec = ClassifierSpec::new(Hyperparams::Svm { kernel, c, degree }, 3);
        train_classifier(x, y, &spec, &w, &ClassifierSettings::default()).unwrap()
    }

    #[test]
    fn linear_separable_perfect() {
        let (x, y) = separable(90, 21);
        let m = fit(&x, &y, Kernel::Linear, 1.0, None);
        assert_eq!(m.predict(&x).unwrap().labels, y);
    }

    #[test]
    fn kernels_separate_clusters() {
        let (x, y) = separable(60, 22);
        for (k, d) in [(Kernel::Rbf, None), (Kernel::Poly, Some(3))] {
            let m = fit(&x, &y, k, 10.0, d);
            let acc = m
                .predict(&x)
                .unwrap()
                .labels
                .iter()
                .zip(&y)
                .filter(|(a, b)| a == b)
                .count();
            assert!(acc >= 58, "{k:?}: {acc}");
        }
    }

    fn ring(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = seeded_rng(seed);
        (0..n)
            .map(|i| {
                let inner = i % 2 == 0;
                let r = if inner { 0.5 } else { 2.0 } + rng.random_range(-0.2..0.2);
                let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                (vec![r * t.cos(), r * t.sin()], inner)
            })
            .unzip()
    }

    #[test]
    fn rbf_solves_rings_and_satisfies_kkt() {
        let (x, y) = ring(80, 4);
        let m = fit(&x, &y, Kernel::Rbf, 10.0, None);
        assert_eq!(m.predict(&x).unwrap().labels, y);
        let Fitted::Kernel(k) = &m.fitted else { panic!() };
        assert!(k.report.converged);
        assert!(k.report.kkt_gap < 1e-3);
        assert!(k.n_support() < 80);
    }

    #[test]
    fn dual_constraints_hold() {
        let (x, y) = ring(50, 9);
        let cw = ClassWeights { no: 0.7, yes: 1.9 };
        let ys: Vec<f64> = y.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
        let bounds: Vec<f64> = y.iter().map(|&l| 2.0 * cw.weight(l)).collect();
        let kf = KernelFn {
            kernel: Kernel::Rbf,
            gamma: scale_gamma(&x),
            degree: 1,
        };
        let cache = KernelCache::new(&x, kf);
        let (alpha, _, rep) = smo(&cache, &ys, &bounds, &ClassifierSettings::default());
        assert!(rep.converged);
        let balance: f64 = alpha.iter().zip(&ys).map(|(a, y)| a * y).sum();
        assert!(balance.abs() < 1e-9, "{balance}");
        for (a, c) in alpha.iter().zip(&bounds) {
            assert!(*a >= 0.0 && *a <= *c + 1e-12);
        }
    }

    #[test]
    fn noisy_data_prefers_small_c() {
        // Overlapping clusters with label noise: a huge C overfits.
        let mut rng = seeded_rng(31);
        let gen = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> (Vec<Vec<f64>>, Vec<bool>) {
            (0..n)
                .map(|i| {
                    let label = i % 2 == 0;
                    let c = if label { 0.7 } else { -0.7 };
                    let p: Vec<f64> = (0..2).map(|_| c + rng.random_range(-1.5..1.5)).collect();
                    let flip = rng.random_bool(0.15);
                    (p, label ^ flip)
                })
                .unzip()
        };
        let (xtr, ytr) = gen(&mut rng, 120);
        let (xte, yte) = gen(&mut rng, 400);
        let score = |c: f64| {
            let m = fit(&xtr, &ytr, Kernel::Rbf, c, None);
            let p = m.predict(&xte).unwrap().labels;
            crate::eval::prf(&yte, &p).unwrap().macro_f1()
        };
        let small = score(1.0);
        let large = score(1000.0);
        assert!(small > large, "C=1 {small} vs C=1000 {large}");
    }

    #[test]
    fn gamma_scale() {
        let x = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
        // var of {0,2,2,0} = 1, d = 2.
        assert!((scale_gamma(&x) - 0.5).abs() < 1e-12);
        assert_eq!(scale_gamma(&[vec![1.0, 1.0]]), 1.0);
    }
}
