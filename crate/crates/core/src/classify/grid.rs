//! Exhaustive hyperparameter search scored by stratified k-fold macro-F1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    compute_class_weights, train_classifier, Activation, ClassifierKind, ClassifierModel,
    ClassifierSettings, ClassifierSpec, Hyperparams, Kernel, LearningRate, MaxFeatures, Penalty,
};
use crate::eval::{prf, stratified_kfold, MeanStd};
use crate::{Error, Result};

const C_VALUES: [f64; 5] = [0.1, 1.0, 10.0, 100.0, 1000.0];

pub fn lr_grid() -> Vec<Hyperparams> {
    let mut g = Vec::new();
    for penalty in [Penalty::L1, Penalty::L2, Penalty::Elasticnet] {
        for c in C_VALUES {
            g.push(Hyperparams::LogisticRegression { penalty, c });
        }
    }
    g
}

/// Degree is searched for the poly kernel only: 5 (rbf) + 4·5 (poly) + 5 (linear).
pub fn svm_grid() -> Vec<Hyperparams> {
    let mut g = Vec::new();
    for kernel in [Kernel::Rbf, Kernel::Poly, Kernel::Linear] {
        let degrees: Vec<Option<u32>> = if kernel == Kernel::Poly {
            [3, 5, 7, 8].map(Some).to_vec()
        } else {
            vec![None]
        };
        for degree in degrees {
            for c in C_VALUES {
                g.push(Hyperparams::Svm { kernel, c, degree });
            }
        }
    }
    g
}

pub fn mlp_grid() -> Vec<Hyperparams> {
    let mut g = Vec::new();
    for learning_rate in [
        LearningRate::Constant,
        LearningRate::Invscaling,
        LearningRate::Adaptive,
    ] {
        for activation in [
            Activation::Logistic,
            Activation::Identity,
            Activation::Tanh,
            Activation::Relu,
        ] {
            for alpha in [0.1, 0.01, 0.001, 0.0001] {
                g.push(Hyperparams::Mlp {
                    hidden: 100,
                    learning_rate,
                    activation,
                    alpha,
                });
            }
        }
    }
    g
}

pub fn rf_grid() -> Vec<Hyperparams> {
    let mut g = Vec::new();
    for n_estimators in [10, 50, 100, 200, 500, 1000] {
        for max_features in [MaxFeatures::Log2, MaxFeatures::Sqrt] {
            g.push(Hyperparams::RandomForest {
                n_estimators,
                max_features,
            });
        }
    }
    g
}

pub fn grid_for(kind: ClassifierKind) -> Vec<Hyperparams> {
    match kind {
        ClassifierKind::LogisticRegression => lr_grid(),
        ClassifierKind::Svm => svm_grid(),
        ClassifierKind::RandomForest => rf_grid(),
        ClassifierKind::Mlp => mlp_grid(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub hyper: Hyperparams,
    pub fold_scores: Vec<f64>,
    pub macro_f1: MeanStd,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub entries: Vec<GridEntry>,
    pub best: usize,
    /// Best configuration refit on all data.
    pub model: ClassifierModel,
}

impl GridResult {
    pub fn best_entry(&self) -> &GridEntry {
        &self.entries[self.best]
    }
}

/// Scores every configuration on the same stratified folds, in parallel.
/// The highest mean macro-F1 wins; ties go to the earlier configuration.
pub fn grid_search(
    features: &[Vec<f64>],
    labels: &[bool],
    grid: &[Hyperparams],
    folds: usize,
    seed: u64,
    settings: &ClassifierSettings,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::config("empty grid"));
    }
    if features.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    for h in grid {
        h.validate()?;
    }
    let splits = stratified_kfold(labels, folds, seed)?;
    let entries: Vec<GridEntry> = grid
        .par_iter()
        .map(|&hyper| -> Result<GridEntry> {
            let mut fold_scores = Vec::with_capacity(splits.len());
            for (f, fold) in splits.iter().enumerate() {
                let wrap = |e| Error::Fold {
                    fold: f,
                    source: Box::new(e),
                };
                let x: Vec<Vec<f64>> = fold.train.iter().map(|&i| features[i].clone()).collect();
                let y: Vec<bool> = fold.train.iter().map(|&i| labels[i]).collect();
                let w = compute_class_weights(&y).map_err(wrap)?;
                let spec = ClassifierSpec::new(hyper, seed);
                let model = train_classifier(&x, &y, &spec, &w, settings).map_err(wrap)?;
                let xt: Vec<Vec<f64>> = fold.test.iter().map(|&i| features[i].clone()).collect();
                let yt: Vec<bool> = fold.test.iter().map(|&i| labels[i]).collect();
                let pred = model.predict(&xt).map_err(wrap)?;
                fold_scores.push(prf(&yt, &pred.labels).map_err(wrap)?.macro_f1());
            }
            let macro_f1 = MeanStd::of(&fold_scores);
            log::info!("{hyper}: macro-F1 {:.4} ± {:.4}", macro_f1.mean, macro_f1.std);
            Ok(GridEntry {
                hyper,
                fold_scores,
                macro_f1,
            })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, e) in entries.iter().enumerate() {
        if e.macro_f1.mean > entries[best].macro_f1.mean {
            best = i;
        }
    }
    let w = compute_class_weights(labels)?;
    let model = train_classifier(
        features,
        labels,
        &ClassifierSpec::new(entries[best].hyper, seed),
        &w,
        settings,
    )?;
    Ok(GridResult {
        entries,
        best,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn grid_sizes() {
        assert_eq!(lr_grid().len(), 15);
        assert_eq!(svm_grid().len(), 30);
        assert_eq!(mlp_grid().len(), 48);
        assert_eq!(rf_grid().len(), 12);
        for kind in [
            ClassifierKind::LogisticRegression,
            ClassifierKind::Svm,
            ClassifierKind::RandomForest,
            ClassifierKind::Mlp,
        ] {
            let g = grid_for(kind);
            let distinct: HashSet<String> = g.iter().map(|h| h.to_string()).collect();
            assert_eq!(distinct.len(), g.len());
            assert!(g.iter().all(|h| h.validate().is_ok() && h.kind() == kind));
        }
    }

    #[test]
    fn search_picks_best_and_refits() {
        let (x, y) = super::super::tests::separable(60, 41);
        let grid = lr_grid();
        let settings = ClassifierSettings {
            linear_epochs: 30,
            ..Default::default()
        };
        let r = grid_search(&x, &y, &grid, 5, 3, &settings).unwrap();
        assert_eq!(r.entries.len(), 15);
        let best = r.best_entry().macro_f1.mean;
        assert!(r.entries.iter().all(|e| e.macro_f1.mean <= best));
        assert!(r.entries[..r.best].iter().all(|e| e.macro_f1.mean < best));
        assert_eq!(r.model.spec.hyper, r.best_entry().hyper);
        assert!(r.entries.iter().all(|e| e.fold_scores.len() == 5));
    }

    #[test]
    fn search_errors() {
        let (x, y) = super::super::tests::separable(9, 1);
        // 3 positives cannot fill 5 folds.
        assert!(matches!(
            grid_search(&x, &y, &lr_grid(), 5, 0, &ClassifierSettings::default()),
            Err(Error::TooFewForFolds { .. })
        ));
        assert!(grid_search(&x, &y, &[], 2, 0, &ClassifierSettings::default()).is_err());
    }

    #[test]
    fn single_config_grid_returns_it() {
        let (x, y) = super::super::tests::separable(30, 2);
        let only = Hyperparams::LogisticRegression {
            penalty: Penalty::L2,
            c: 10.0,
        };
        let r = grid_search(&x, &y, &[only], 3, 0, &ClassifierSettings::default()).unwrap();
        assert_eq!(r.best, 0);
        assert_eq!(r.model.spec.hyper, only);
    }

    #[test]
    fn noisy_data_selects_moderate_c() {
        use rand::Rng;
        let mut rng = crate::seeded_rng(8);
        let (x, y): (Vec<Vec<f64>>, Vec<bool>) = (0..200)
            .map(|i| {
                let label = i % 2 == 0;
                let c = if label { 0.7 } else { -0.7 };
                let p: Vec<f64> = (0..2).map(|_| c + rng.random_range(-1.5..1.5)).collect();
                (p, label ^ rng.random_bool(0.15))
            })
            .unzip();
        let grid = [1000.0, 1.0].map(|c| Hyperparams::Svm {
            kernel: Kernel::Rbf,
            c,
            degree: None,
        });
        let r = grid_search(&x, &y, &grid, 5, 1, &ClassifierSettings::default()).unwrap();
        assert_eq!(r.best_entry().hyper, grid[1], "{:?}", r.entries);
    }

    #[test]
    fn search_is_deterministic() {
        let (x, y) = super::super::tests::separable(40, 5);
        let grid = rf_grid()[..2].to_vec();
        let s = ClassifierSettings::default();
        let a = grid_search(&x, &y, &grid, 4, 9, &s).unwrap();
        let b = grid_search(&x, &y, &grid, 4, 9, &s).unwrap();
        assert_eq!(a.entries, b.entries);
        assert_eq!(a.model.to_bytes().unwrap(), b.model.to_bytes().unwrap());
    }
}
