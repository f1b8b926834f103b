//! Random forest of bootstrap CART trees split on weighted Gini impurity.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{ClassWeights, MaxFeatures};
use crate::binio;
use crate::{derive_seed, seeded_rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Weighted fraction of Yes among training samples reaching the leaf.
    Leaf { p_yes: f64 },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn p_yes(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { p_yes } => return p_yes,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, at: usize) -> usize {
            match t.nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Fraction of trees voting Yes.
    pub fn vote_fraction(&self, x: &[f64]) -> f64 {
        let yes = self.trees.iter().filter(|t| t.p_yes(x) > 0.5).count();
        yes as f64 / self.trees.len() as f64
    }

    pub(super) fn write(&self, w: &mut binio::Writer) {
        w.u64(self.trees.len() as u64);
        for t in &self.trees {
            // Per node: (kind, feature, left, right) as u64 and (threshold or p_yes) as f64.
            let mut ints = Vec::with_capacity(t.nodes.len() * 4);
            let mut vals = Vec::with_capacity(t.nodes.len());
            for n in &t.nodes {
                match *n {
                    Node::Leaf { p_yes } => {
                        ints.extend([0u64, 0, 0, 0]);
                        vals.push(p_yes);
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        ints.extend([1u64, feature as u64, left as u64, right as u64]);
                        vals.push(threshold);
                    }
                }
            }
            let bytes: Vec<u8> = ints.iter().flat_map(|v| v.to_le_bytes()).collect();
            w.bytes(&bytes).f64s(&vals);
        }
    }

    pub(super) fn read(r: &mut binio::Reader<'_>) -> Result<Self> {
        let n_trees = r.u64()? as usize;
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for _ in 0..n_trees {
            let bytes = r.bytes()?;
            let vals = r.f64s()?;
            if bytes.len() != vals.len() * 32 || vals.is_empty() {
                return Err(Error::BadFormat("tree shape".into()));
            }
            let ints: Vec<u64> = bytes
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let n = vals.len();
            let mut nodes = Vec::with_capacity(n);
            for (k, v) in vals.iter().enumerate() {
                let f = &ints[k * 4..k * 4 + 4];
                nodes.push(match f[0] {
                    0 => Node::Leaf { p_yes: *v },
                    1 if (f[2] as usize) < n && (f[3] as usize) < n && f[2] as usize > k && f[3] as usize > k => {
                        Node::Split {
                            feature: f[1] as usize,
                            threshold: *v,
                            left: f[2] as usize,
                            right: f[3] as usize,
                        }
                    }
                    _ => return Err(Error::BadFormat("bad tree node".into())),
                });
            }
            trees.push(Tree { nodes });
        }
        if trees.is_empty() {
            return Err(Error::BadFormat("empty forest".into()));
        }
        Ok(Self { trees })
    }
}

pub(super) fn fit(
    x: &[Vec<f64>],
    y: &[bool],
    cw: &ClassWeights,
    n_estimators: usize,
    max_features: MaxFeatures,
    max_depth: Option<usize>,
    seed: u64,
) -> Forest {
    let n = x.len();
    let m_try = max_features.count(x[0].len());
    let trees = (0..n_estimators)
        .map(|t| {
            let mut rng = seeded_rng(derive_seed(seed, t as u64));
            let mut counts = vec![0usize; n];
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
            let samples: Vec<(usize, f64)> = counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (i, c as f64 * cw.weight(y[i])))
                .collect();
            grow(x, y, samples, m_try, max_depth, &mut rng)
        })
        .collect();
    Forest { trees }
}

fn weighted_yes(y: &[bool], samples: &[(usize, f64)]) -> (f64, f64) {
    samples.iter().fold((0.0, 0.0), |(yes, tot), &(i, w)| {
        (if y[i] { yes + w } else { yes }, tot + w)
    })
}

fn gini(yes: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = yes / total;
    2.0 * p * (1.0 - p)
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Grow one tree depth-first. A node splits whenever it is impure and some
/// feature separates its samples, even if impurity does not drop.
fn grow(
    x: &[Vec<f64>],
    y: &[bool],
    root: Vec<(usize, f64)>,
    m_try: usize,
    max_depth: Option<usize>,
    rng: &mut impl Rng,
) -> Tree {
    let d = x[0].len();
    let mut nodes = vec![Node::Leaf { p_yes: 0.0 }];
    let mut stack = vec![(0usize, root, 0usize)];
    let mut features: Vec<usize> = (0..d).collect();
    while let Some((at, samples, depth)) = stack.pop() {
        let (yes, total) = weighted_yes(y, &samples);
        let p_yes = if total > 0.0 { yes / total } else { 0.0 };
        let pure = yes <= 0.0 || yes >= total;
        if pure || samples.len() < 2 || max_depth.is_some_and(|m| depth >= m) {
            nodes[at] = Node::Leaf { p_yes };
            continue;
        }
        features.shuffle(rng);
        let mut best: Option<SplitChoice> = None;
        let mut tried = 0;
        let mut sorted = samples.clone();
        for &f in &features {
            if tried >= m_try {
                break;
            }
            sorted.sort_by(|a, b| x[a.0][f].total_cmp(&x[b.0][f]));
            let lo = x[sorted[0].0][f];
            let hi = x[sorted[sorted.len() - 1].0][f];
            if lo == hi {
                continue;
            }
            tried += 1;
            let mut left_yes = 0.0;
            let mut left_tot = 0.0;
            for k in 0..sorted.len() - 1 {
                let (i, w) = sorted[k];
                left_tot += w;
                if y[i] {
                    left_yes += w;
                }
                let v = x[i][f];
                let next = x[sorted[k + 1].0][f];
                if v == next {
                    continue;
                }
                let right_tot = total - left_tot;
                let score =
                    left_tot * gini(left_yes, left_tot) + right_tot * gini(yes - left_yes, right_tot);
                if best.as_ref().is_none_or(|b| score < b.score) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(SplitChoice {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        let Some(split) = best else {
            nodes[at] = Node::Leaf { p_yes };
            continue;
        };
        let (left, right): (Vec<_>, Vec<_>) = samples
            .into_iter()
            .partition(|&(i, _)| x[i][split.feature] <= split.threshold);
        let l = nodes.len();
        nodes.push(Node::Leaf { p_yes: 0.0 });
        nodes.push(Node::Leaf { p_yes: 0.0 });
        nodes[at] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: l + 1,
        };
        stack.push((l + 1, right, depth + 1));
        stack.push((l, left, depth + 1));
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;

    fn xor(reps: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for r in 0..reps {
            let e = r as f64 * 1e-3;
            for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
                x.push(vec![a + e, b - e]);
                y.push((a > 0.5) != (b > 0.5));
            }
        }
        (x, y)
    }

    #[test]
    fn xor_is_learned() {
        let (x, y) = xor(10);
        let w = compute_class_weights(&y).unwrap();
        let spec = ClassifierSpec::new(
            Hyperparams::RandomForest {
                n_estimators: 50,
                max_features: MaxFeatures::Log2,
            },
            5,
        );
        let m = train_classifier(&x, &y, &spec, &w, &ClassifierSettings::default()).unwrap();
        assert_eq!(m.predict(&x).unwrap().labels, y);
    }

    #[test]
    fn single_stump_forest_is_constant() {
        let (x, y) = xor(5);
        let w = compute_class_weights(&y).unwrap();
        let spec = ClassifierSpec::new(
            Hyperparams::RandomForest {
                n_estimators: 1,
                max_features: MaxFeatures::Sqrt,
            },
            1,
        );
        let settings = ClassifierSettings {
            forest_max_depth: Some(0),
            ..Default::default()
        };
        let m = train_classifier(&x, &y, &spec, &w, &settings).unwrap();
        let p = m.predict(&x).unwrap();
        assert!(p.labels.iter().all(|&l| l == p.labels[0]));
        assert!(p.scores.iter().all(|&s| s == 0.0 || s == 1.0));
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(0.0, 4.0), 0.0);
        assert_eq!(gini(2.0, 4.0), 0.5);
    }

    #[test]
    fn vote_fractions_in_unit_interval() {
        let (x, y) = super::super::tests::separable(40, 3);
        let w = compute_class_weights(&y).unwrap();
        let spec = ClassifierSpec::new(
            Hyperparams::RandomForest {
                n_estimators: 7,
                max_features: MaxFeatures::Sqrt,
            },
            2,
        );
        let m = train_classifier(&x, &y, &spec, &w, &ClassifierSettings::default()).unwrap();
        let Fitted::Forest(f) = &m.fitted else { panic!() };
        assert_eq!(f.trees.len(), 7);
        for s in m.predict(&x).unwrap().scores {
            assert!((0.0..=1.0).contains(&s));
            assert!(((s * 7.0).round() - s * 7.0).abs() < 1e-12);
        }
    }
}
