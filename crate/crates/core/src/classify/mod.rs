//! Downstream binary classifiers over embedding features: logistic
//! regression, SVM, random forest and a one-hidden-layer MLP, all trained
//! with balanced class weights, plus exhaustive grid search.

mod forest;
mod grid;
mod logistic;
mod mlp;
mod svm;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio;
use crate::{Error, Result};

pub use forest::{Forest, Node, Tree};
pub use grid::{grid_for, grid_search, lr_grid, mlp_grid, rf_grid, svm_grid, GridEntry, GridResult};
pub use logistic::{logistic_gradient_check, logistic_objective};
pub use mlp::{mlp_gradient_check, MlpParams};
pub use svm::{KernelModel, SmoReport};

pub const CLF_MAGIC: &[u8; 7] = b"RFD-CLF";
pub const CLF_VERSION: u16 = 1;

/// Per-class loss multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub no: f64,
    pub yes: f64,
}

impl ClassWeights {
    pub const UNIFORM: ClassWeights = ClassWeights { no: 1.0, yes: 1.0 };

    pub fn weight(&self, label: bool) -> f64 {
        if label {
            self.yes
        } else {
            self.no
        }
    }
}

/// Balanced weights `w_c = n / (2 · n_c)`.
pub fn compute_class_weights(labels: &[bool]) -> Result<ClassWeights> {
    let n_yes = labels.iter().filter(|&&l| l).count();
    let n_no = labels.len() - n_yes;
    if n_yes == 0 || n_no == 0 {
        return Err(Error::SingleClass);
    }
    let n = labels.len() as f64;
    Ok(ClassWeights {
        no: n / (2.0 * n_no as f64),
        yes: n / (2.0 * n_yes as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
    Elasticnet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Rbf,
    Poly,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Log2,
    Sqrt,
}

impl MaxFeatures {
    pub fn count(&self, n_features: usize) -> usize {
        let n = n_features as f64;
        let k = match self {
            MaxFeatures::Log2 => n.log2(),
            MaxFeatures::Sqrt => n.sqrt(),
        };
        (k.floor() as usize).clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearningRate {
    Constant,
    Invscaling,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Logistic,
    Identity,
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    LogisticRegression,
    Svm,
    RandomForest,
    Mlp,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lr" | "logistic_regression" | "logreg" => Ok(Self::LogisticRegression),
            "svm" | "svc" => Ok(Self::Svm),
            "rf" | "random_forest" => Ok(Self::RandomForest),
            "mlp" => Ok(Self::Mlp),
            other => Err(Error::config(format!("unknown classifier kind {other:?}"))),
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::LogisticRegression => "Logistic Regression",
            ClassifierKind::Svm => "SVM",
            ClassifierKind::RandomForest => "Random Forest",
            ClassifierKind::Mlp => "Multi-layer Perceptron",
        })
    }
}

/// Searched hyperparameters, one variant per classifier family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Hyperparams {
    LogisticRegression {
        penalty: Penalty,
        c: f64,
    },
    Svm {
        kernel: Kernel,
        c: f64,
        /// Polynomial degree; only meaningful (and only allowed) for `poly`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        degree: Option<u32>,
    },
    RandomForest {
        n_estimators: usize,
        max_features: MaxFeatures,
    },
    Mlp {
        hidden: usize,
        learning_rate: LearningRate,
        activation: Activation,
        alpha: f64,
    },
}

impl Hyperparams {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Hyperparams::LogisticRegression { .. } => ClassifierKind::LogisticRegression,
            Hyperparams::Svm { .. } => ClassifierKind::Svm,
            Hyperparams::RandomForest { .. } => ClassifierKind::RandomForest,
            Hyperparams::Mlp { .. } => ClassifierKind::Mlp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        match *self {
            Hyperparams::LogisticRegression { c, .. } if !(c > 0.0 && c.is_finite()) => {
                bad("C must be positive")
            }
            Hyperparams::Svm { c, .. } if !(c > 0.0 && c.is_finite()) => bad("C must be positive"),
            Hyperparams::Svm {
                kernel: Kernel::Poly,
                degree: None | Some(0),
                ..
            } => bad("poly kernel needs degree >= 1"),
            Hyperparams::Svm {
                kernel: Kernel::Rbf | Kernel::Linear,
                degree: Some(_),
                ..
            } => bad("degree applies to the poly kernel only"),
            Hyperparams::RandomForest { n_estimators: 0, .. } => bad("n_estimators must be >= 1"),
            Hyperparams::Mlp { hidden: 0, .. } => bad("hidden size must be >= 1"),
            Hyperparams::Mlp { alpha, .. } if !(alpha >= 0.0 && alpha.is_finite()) => {
                bad("alpha must be >= 0")
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hyperparams::LogisticRegression { penalty, c } => {
                write!(f, "LR(penalty={penalty:?}, C={c})")
            }
            Hyperparams::Svm { kernel, c, degree } => match degree {
                Some(d) => write!(f, "SVM(kernel={kernel:?}, C={c}, degree={d})"),
                None => write!(f, "SVM(kernel={kernel:?}, C={c})"),
            },
            Hyperparams::RandomForest {
                n_estimators,
                max_features,
            } => write!(f, "RF(n_estimators={n_estimators}, max_features={max_features:?})"),
            Hyperparams::Mlp {
                hidden,
                learning_rate,
                activation,
                alpha,
            } => write!(
                f,
                "MLP(hidden=({hidden},), learning_rate={learning_rate:?}, activation={activation:?}, alpha={alpha})"
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    #[serde(flatten)]
    pub hyper: Hyperparams,
    #[serde(default)]
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(hyper: Hyperparams, seed: u64) -> Self {
        Self { hyper, seed }
    }
}

/// Fixed settings not covered by the search grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSettings {
    /// Epochs of proximal SGD (logistic regression) and primal SGD (linear SVM).
    pub linear_epochs: usize,
    pub linear_batch: usize,
    pub linear_lr: f64,
    /// Mixing ratio of the L1 term in the elastic-net penalty.
    pub l1_ratio: f64,
    pub smo_tol: f64,
    /// Iteration cap for SMO; the effective cap is `max(smo_max_iter, 100 · n)`.
    pub smo_max_iter: usize,
    pub forest_max_depth: Option<usize>,
    pub mlp_epochs: usize,
    pub mlp_batch: usize,
    pub mlp_lr: f64,
    pub mlp_momentum: f64,
    /// Exponent of the inverse-scaling schedule.
    pub mlp_power_t: f64,
    /// Epochs without training-loss improvement before stopping.
    pub mlp_patience: usize,
    /// Epochs without improvement before the `adaptive` schedule halves the rate.
    pub mlp_adaptive_patience: usize,
    pub mlp_tol: f64,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        Self {
            linear_epochs: 100,
            linear_batch: 32,
            linear_lr: 0.1,
            l1_ratio: 0.5,
            smo_tol: 1e-3,
            smo_max_iter: 1_000_000,
            forest_max_depth: None,
            mlp_epochs: 200,
            mlp_batch: 200,
            mlp_lr: 0.01,
            mlp_momentum: 0.9,
            mlp_power_t: 0.5,
            mlp_patience: 10,
            mlp_adaptive_patience: 2,
            mlp_tol: 1e-4,
        }
    }
}

/// Per-feature z-scoring fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|r| self.transform_row(r)).collect()
    }
}

/// Fitted parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Fitted {
    /// Logistic regression or linear SVM: `w·x + b` on standardized features.
    Linear {
        scaler: Standardizer,
        weights: Vec<f64>,
        bias: f64,
    },
    Kernel(KernelModel),
    Forest(Forest),
    Mlp {
        scaler: Standardizer,
        params: MlpParams,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub spec: ClassifierSpec,
    pub settings: ClassifierSettings,
    pub dim: usize,
    pub fitted: Fitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub labels: Vec<bool>,
    /// Probabilities (LR, MLP), vote fractions (RF) or margins (SVM).
    pub scores: Vec<f64>,
}

pub(crate) fn check_features(features: &[Vec<f64>]) -> Result<usize> {
    let dim = features.first().map_or(0, Vec::len);
    for row in features {
        if row.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite feature value"));
        }
    }
    Ok(dim)
}

/// Fit a classifier. Every per-example loss is scaled by its class weight.
pub fn train_classifier(
    features: &[Vec<f64>],
    labels: &[bool],
    spec: &ClassifierSpec,
    weights: &ClassWeights,
    settings: &ClassifierSettings,
) -> Result<ClassifierModel> {
    spec.hyper.validate()?;
    if features.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    if features.len() < 2 {
        return Err(Error::input("need at least 2 training examples"));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::SingleClass);
    }
    let dim = check_features(features)?;
    if dim == 0 {
        return Err(Error::input("zero-dimensional features"));
    }
    let fitted = match spec.hyper {
        Hyperparams::LogisticRegression { penalty, c } => {
            logistic::fit(features, labels, weights, penalty, c, settings, spec.seed)
        }
        Hyperparams::Svm {
            kernel: Kernel::Linear,
            c,
            ..
        } => svm::fit_linear(features, labels, weights, c, settings, spec.seed),
        Hyperparams::Svm { kernel, c, degree } => Fitted::Kernel(svm::fit_kernel(
            features, labels, weights, kernel, c, degree, settings,
        )?),
        Hyperparams::RandomForest {
            n_estimators,
            max_features,
        } => Fitted::Forest(forest::fit(
            features,
            labels,
            weights,
            n_estimators,
            max_features,
            settings.forest_max_depth,
            spec.seed,
        )),
        Hyperparams::Mlp {
            hidden,
            learning_rate,
            activation,
            alpha,
        } => mlp::fit(
            features,
            labels,
            weights,
            hidden,
            learning_rate,
            activation,
            alpha,
            settings,
            spec.seed,
        ),
    };
    Ok(ClassifierModel {
        spec: *spec,
        settings: *settings,
        dim,
        fitted,
    })
}

impl ClassifierModel {
    pub fn kind(&self) -> ClassifierKind {
        self.spec.hyper.kind()
    }

    fn score_one(&self, x: &[f64]) -> (bool, f64) {
        match &self.fitted {
            Fitted::Linear {
                scaler,
                weights,
                bias,
            } => {
                let z = scaler
                    .transform_row(x)
                    .iter()
                    .zip(weights)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    + bias;
                if self.kind() == ClassifierKind::Svm {
                    (z > 0.0, z)
                } else {
                    let p = crate::embed::pv::sigmoid(z);
                    (p > 0.5, p)
                }
            }
            Fitted::Kernel(k) => {
                let m = k.decision(x);
                (m > 0.0, m)
            }
            Fitted::Forest(f) => {
                let v = f.vote_fraction(x);
                (v > 0.5, v)
            }
            Fitted::Mlp { scaler, params } => {
                let p = params.predict_proba(&scaler.transform_row(x));
                (p > 0.5, p)
            }
        }
    }

    pub fn predict(&self, features: &[Vec<f64>]) -> Result<Prediction> {
        let mut out = Prediction {
            labels: Vec::with_capacity(features.len()),
            scores: Vec::with_capacity(features.len()),
        };
        for row in features {
            if row.len() != self.dim {
                return Err(Error::DimMismatch {
                    expected: self.dim,
                    got: row.len(),
                });
            }
            let (l, s) = self.score_one(row);
            out.labels.push(l);
            out.scores.push(s);
        }
        Ok(out)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<(bool, f64)> {
        if x.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.score_one(x))
    }

    /// Weight vector for linear models (standardized feature space).
    pub fn linear_weights(&self) -> Option<&[f64]> {
        match &self.fitted {
            Fitted::Linear { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = binio::Writer::new(CLF_MAGIC, CLF_VERSION, 0);
        w.json(&ClfHeader {
            spec: self.spec,
            settings: self.settings,
            dim: self.dim,
        })?;
        match &self.fitted {
            Fitted::Linear {
                scaler,
                weights,
                bias,
            } => {
                write_scaler(&mut w, scaler);
                w.f64s(weights).f64s(&[*bias]);
            }
            Fitted::Kernel(k) => k.write(&mut w),
            Fitted::Forest(f) => f.write(&mut w),
            Fitted::Mlp { scaler, params } => {
                write_scaler(&mut w, scaler);
                params.write(&mut w)?;
            }
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = binio::Reader::open(bytes, CLF_MAGIC, CLF_VERSION)?;
        let header: ClfHeader = r.json()?;
        header.spec.hyper.validate()?;
        let fitted = match header.spec.hyper {
            Hyperparams::LogisticRegression { .. }
            | Hyperparams::Svm {
                kernel: Kernel::Linear,
                ..
            } => {
                let scaler = read_scaler(&mut r)?;
                let weights = r.f64s()?;
                let bias = *r
                    .f64s()?
                    .first()
                    .ok_or_else(|| Error::BadFormat("missing bias".into()))?;
                if weights.len() != header.dim || scaler.mean.len() != header.dim {
                    return Err(Error::BadFormat("weight length mismatch".into()));
                }
                Fitted::Linear {
                    scaler,
                    weights,
                    bias,
                }
            }
            Hyperparams::Svm { .. } => Fitted::Kernel(KernelModel::read(&mut r, header.dim)?),
            Hyperparams::RandomForest { .. } => Fitted::Forest(Forest::read(&mut r)?),
            Hyperparams::Mlp { .. } => {
                let scaler = read_scaler(&mut r)?;
                Fitted::Mlp {
                    scaler,
                    params: MlpParams::read(&mut r, header.dim)?,
                }
            }
        };
        r.finish()?;
        Ok(Self {
            spec: header.spec,
            settings: header.settings,
            dim: header.dim,
            fitted,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Serialize, Deserialize)]
struct ClfHeader {
    spec: ClassifierSpec,
    settings: ClassifierSettings,
    dim: usize,
}

fn write_scaler(w: &mut binio::Writer, s: &Standardizer) {
    w.f64s(&s.mean).f64s(&s.scale);
}

fn read_scaler(r: &mut binio::Reader<'_>) -> Result<Standardizer> {
    let mean = r.f64s()?;
    let scale = r.f64s()?;
    if mean.len() != scale.len() {
        return Err(Error::BadFormat("scaler shape".into()));
    }
    Ok(Standardizer { mean, scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use rand::Rng;

    pub(crate) fn separable(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = seeded_rng(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = i % 3 == 0;
            let cx = if label { 2.0 } else { -2.0 };
            x.push(vec![cx + rng.random_range(-1.0..1.0), rng.random_range(-1.5..1.5)]);
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn table_two_class_weights() {
        let mut labels = vec![false; 13130];
        labels.extend(vec![true; 942]);
        let w = compute_class_weights(&labels).unwrap();
        assert!((w.no - 0.5359).abs() < 1e-4, "{}", w.no);
        assert!((w.yes - 7.469).abs() < 1e-3, "{}", w.yes);
        assert!((w.yes / w.no - 13130.0 / 942.0).abs() < 1e-9);
    }

    #[test]
    fn balanced_and_ratio_weights() {
        let labels: Vec<bool> = (0..10).map(|i| i < 5).collect();
        let w = compute_class_weights(&labels).unwrap();
        assert_eq!((w.no, w.yes), (1.0, 1.0));
        let labels: Vec<bool> = (0..14).map(|i| i == 0).collect();
        let w = compute_class_weights(&labels).unwrap();
        assert!((w.yes / w.no - 13.0).abs() < 1e-12);
        assert!(matches!(
            compute_class_weights(&[true, true]),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn weighted_mass_is_equal_per_class() {
        let labels: Vec<bool> = (0..97).map(|i| i % 9 == 0).collect();
        let w = compute_class_weights(&labels).unwrap();
        let yes: f64 = labels.iter().filter(|&&l| l).map(|&l| w.weight(l)).sum();
        let no: f64 = labels.iter().filter(|&&l| !l).map(|&l| w.weight(l)).sum();
        assert!((yes - 97.0 / 2.0).abs() < 1e-9);
        assert!((no - 97.0 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn spec_validation() {
        let bad_degree = Hyperparams::Svm {
            kernel: Kernel::Rbf,
            c: 1.0,
            degree: Some(3),
        };
        assert!(bad_degree.validate().is_err());
        let unknown: std::result::Result<ClassifierSpec, _> =
            serde_json::from_str(r#"{"kind":"logistic_regression","penalty":"l2","c":1.0,"gamma":2}"#);
        assert!(unknown.is_err());
        let ok: ClassifierSpec =
            serde_json::from_str(r#"{"kind":"svm","kernel":"poly","c":10.0,"degree":3,"seed":4}"#).unwrap();
        assert_eq!(ok.seed, 4);
        ok.hyper.validate().unwrap();
    }

    #[test]
    fn training_errors() {
        let spec = ClassifierSpec::new(
            Hyperparams::LogisticRegression {
                penalty: Penalty::L2,
                c: 1.0,
            },
            0,
        );
        let s = ClassifierSettings::default();
        let w = ClassWeights::UNIFORM;
        assert!(matches!(
            train_classifier(&[vec![1.0], vec![2.0]], &[true, true], &spec, &w, &s),
            Err(Error::SingleClass)
        ));
        assert!(train_classifier(&[vec![f64::NAN], vec![2.0]], &[true, false], &spec, &w, &s).is_err());
        let (x, y) = separable(20, 1);
        let m = train_classifier(&x, &y, &spec, &w, &s).unwrap();
        assert!(matches!(m.predict(&[vec![1.0]]), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn zero_weight_logistic_gives_half() {
        let (x, y) = separable(12, 2);
        let mut m = train_classifier(
            &x,
            &y,
            &ClassifierSpec::new(
                Hyperparams::LogisticRegression {
                    penalty: Penalty::L2,
                    c: 1.0,
                },
                0,
            ),
            &ClassWeights::UNIFORM,
            &ClassifierSettings::default(),
        )
        .unwrap();
        if let Fitted::Linear { weights, bias, .. } = &mut m.fitted {
            weights.iter_mut().for_each(|w| *w = 0.0);
            *bias = 0.0;
        }
        let p = m.predict(&[vec![3.0, -1.0]]).unwrap();
        assert_eq!(p.scores[0], 0.5);
    }

    #[test]
    fn every_family_round_trips() {
        let (x, y) = separable(40, 3);
        let w = compute_class_weights(&y).unwrap();
        let s = ClassifierSettings {
            mlp_epochs: 20,
            ..Default::default()
        };
        let specs = [
            Hyperparams::LogisticRegression {
                penalty: Penalty::Elasticnet,
                c: 10.0,
            },
            Hyperparams::Svm {
                kernel: Kernel::Linear,
                c: 1.0,
                degree: None,
            },
            Hyperparams::Svm {
                kernel: Kernel::Rbf,
                c: 1.0,
                degree: None,
            },
            Hyperparams::Svm {
                kernel: Kernel::Poly,
                c: 1.0,
                degree: Some(3),
            },
            Hyperparams::RandomForest {
                n_estimators: 5,
                max_features: MaxFeatures::Sqrt,
            },
            Hyperparams::Mlp {
                hidden: 100,
                learning_rate: LearningRate::Adaptive,
                activation: Activation::Tanh,
                alpha: 0.001,
            },
        ];
        for h in specs {
            let m = train_classifier(&x, &y, &ClassifierSpec::new(h, 7), &w, &s).unwrap();
            let bytes = m.to_bytes().unwrap();
            assert_eq!(&bytes[..7], b"RFD-CLF");
            let back = ClassifierModel::from_bytes(&bytes).unwrap();
            assert_eq!(back, m, "{h}");
            assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
            let again = train_classifier(&x, &y, &ClassifierSpec::new(h, 7), &w, &s).unwrap();
            assert_eq!(again.to_bytes().unwrap(), bytes, "determinism {h}");
        }
    }

    #[test]
    fn max_features_counts() {
        assert_eq!(MaxFeatures::Sqrt.count(300), 17);
        assert_eq!(MaxFeatures::Log2.count(300), 8);
        assert_eq!(MaxFeatures::Log2.count(1), 1);
    }
}
