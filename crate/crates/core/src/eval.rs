//! Precision / recall / F1 for the binary tasks and the repeated stratified
//! k-fold protocol. Reported values are means over folds.

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{seeded_rng, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    /// Counts with `positive` as the class of interest.
    pub fn from_labels(gold: &[bool], pred: &[bool], positive: bool) -> Self {
        let mut c = Self::default();
        for (&g, &p) in gold.iter().zip(pred) {
            match (g == positive, p == positive) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn metrics(&self) -> ClassMetrics {
        ClassMetrics::from_counts(self.tp, self.fp, self.fn_)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a metric had a zero denominator and was reported as 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_division: bool,
}

impl ClassMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let mut zero_division = false;
        let mut ratio = |num: usize, den: usize| {
            if den == 0 {
                zero_division = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            zero_division = true;
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            zero_division,
        }
    }
}

/// Metrics for both classes and their unweighted mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub yes: ClassMetrics,
    pub no: ClassMetrics,
    #[serde(rename = "macro")]
    pub macro_avg: ClassMetrics,
}

impl Prf {
    pub fn from_class_metrics(yes: ClassMetrics, no: ClassMetrics) -> Self {
        let macro_avg = ClassMetrics {
            precision: (yes.precision + no.precision) / 2.0,
            recall: (yes.recall + no.recall) / 2.0,
            f1: (yes.f1 + no.f1) / 2.0,
            zero_division: yes.zero_division || no.zero_division,
        };
        Self { yes, no, macro_avg }
    }

    pub fn macro_f1(&self) -> f64 {
        self.macro_avg.f1
    }
}

/// Per-class precision, recall and F1 plus macro averages.
pub fn prf(gold: &[bool], pred: &[bool]) -> Result<Prf> {
    if gold.len() != pred.len() {
        return Err(Error::DimMismatch {
            expected: gold.len(),
            got: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::input("no labels to score"));
    }
    Ok(Prf::from_class_metrics(
        ConfusionCounts::from_labels(gold, pred, true).metrics(),
        ConfusionCounts::from_labels(gold, pred, false).metrics(),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold partitions, reshuffled for each repeat.
///
/// Within a class, shuffled indices are dealt round-robin to the folds; the
/// second class continues the rotation where the first stopped so fold sizes
/// differ by at most one.
pub fn repeated_stratified_kfold(
    labels: &[bool],
    k: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::config("need at least 2 folds"));
    }
    let yes: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let no: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    let minority = yes.len().min(no.len());
    if minority < k {
        return Err(Error::TooFewForFolds { minority, folds: k });
    }
    let mut rng = seeded_rng(seed);
    let mut out = Vec::with_capacity(k * repeats);
    for repeat in 0..repeats {
        let mut assignment = vec![0usize; labels.len()];
        let mut slot = 0usize;
        for class in [&yes, &no] {
            let mut idx = class.clone();
            idx.shuffle(&mut rng);
            for i in idx {
                assignment[i] = slot % k;
                slot += 1;
            }
        }
        for fold in 0..k {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..labels.len()).partition(|&i| assignment[i] == fold);
            out.push(Fold {
                repeat,
                fold,
                train,
                test,
            });
        }
    }
    Ok(out)
}

/// Plain stratified k-fold (one repeat).
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Fold>> {
    repeated_stratified_kfold(labels, k, 1, seed)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
}

impl ClassSummary {
    fn of(metrics: &[ClassMetrics]) -> Self {
        let col = |f: fn(&ClassMetrics) -> f64| MeanStd::of(&metrics.iter().map(f).collect::<Vec<_>>());
        Self {
            precision: col(|m| m.precision),
            recall: col(|m| m.recall),
            f1: col(|m| m.f1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub repeat: usize,
    pub fold: usize,
    pub scores: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Free-form description of what was evaluated (embedding, classifier,
    /// embedding mode, seeds).
    pub provenance: serde_json::Value,
    pub folds: Vec<FoldScore>,
    pub yes: ClassSummary,
    pub no: ClassSummary,
    #[serde(rename = "macro")]
    pub macro_avg: ClassSummary,
    /// True if any fold hit a zero denominator.
    pub zero_division: bool,
}

impl EvalReport {
    pub fn from_folds(provenance: serde_json::Value, folds: Vec<FoldScore>) -> Self {
        let pick = |f: fn(&Prf) -> ClassMetrics| {
            ClassSummary::of(&folds.iter().map(|s| f(&s.scores)).collect::<Vec<_>>())
        };
        let yes = pick(|p| p.yes);
        let no = pick(|p| p.no);
        let macro_avg = pick(|p| p.macro_avg);
        let zero_division = folds.iter().any(|f| f.scores.macro_avg.zero_division);
        Self {
            provenance,
            folds,
            yes,
            no,
            macro_avg,
            zero_division,
        }
    }

    /// Aligned text table: one row per class with mean P / R / F1.
    pub fn table(&self, embedding: &str, classifier: &str) -> String {
        let mut s = format!(
            "{:<16} {:<22} {:<14} {:>9} {:>9} {:>9}\n",
            "Embedding", "Classifier", "Class", "Precision", "Recall", "F1-score"
        );
        for (name, c) in [("No", &self.no), ("Yes", &self.yes), ("Macro-average", &self.macro_avg)] {
            s.push_str(&format!(
                "{:<16} {:<22} {:<14} {:>9.2} {:>9.2} {:>9.2}\n",
                embedding, classifier, name, c.precision.mean, c.recall.mean, c.f1.mean
            ));
        }
        s
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let emb = self.provenance["embedding"].as_str().unwrap_or("-");
        let clf = self.provenance["classifier"].as_str().unwrap_or("-");
        f.write_str(&self.table(emb, clf))
    }
}

/// Cross-validate a train/predict pair: train on each fold's training
/// indices, predict its test indices, and average the fold scores.
pub fn evaluate_model<M, T, P>(
    train: T,
    predict: P,
    labels: &[bool],
    k: usize,
    repeats: usize,
    seed: u64,
    provenance: serde_json::Value,
) -> Result<EvalReport>
where
    T: Fn(&[usize], u64) -> Result<M>,
    P: Fn(&M, &[usize]) -> Result<Vec<bool>>,
{
    let folds = repeated_stratified_kfold(labels, k, repeats, seed)?;
    let mut scores = Vec::with_capacity(folds.len());
    for (i, fold) in folds.iter().enumerate() {
        let wrap = |e: Error| Error::Fold {
            fold: i,
            source: Box::new(e),
        };
        let model = train(&fold.train, crate::derive_seed(seed, i as u64)).map_err(wrap)?;
        let pred = predict(&model, &fold.test).map_err(wrap)?;
        let gold: Vec<bool> = fold.test.iter().map(|&j| labels[j]).collect();
        scores.push(FoldScore {
            repeat: fold.repeat,
            fold: fold.fold,
            scores: prf(&gold, &pred).map_err(wrap)?,
        });
    }
    Ok(EvalReport::from_folds(provenance, scores))
}
