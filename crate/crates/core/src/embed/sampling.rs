use rand::Rng;

/// Exponent applied to unigram counts for the noise distribution.
pub const NOISE_POWER: f64 = 0.75;

/// Smoothed unigram distribution for negative sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDistribution {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl NoiseDistribution {
    /// `p(t) ∝ count(t)^0.75`.
    pub fn from_counts(counts: &[u64]) -> Self {
        let weights: Vec<f64> = counts
            .iter()
            .map(|&c| (c as f64).powf(NOISE_POWER))
            .collect();
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Self { probs, cumulative }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.probs.len() - 1)
    }

    /// `k` independent draws, redrawing any that hit `target`. Returns an
    /// empty vector when `target` carries all of the mass.
    pub fn negative_sample<R: Rng>(&self, k: usize, target: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        self.negative_sample_into(k, target, rng, &mut out);
        out
    }

    pub(crate) fn negative_sample_into<R: Rng>(
        &self,
        k: usize,
        target: usize,
        rng: &mut R,
        out: &mut Vec<usize>,
    ) {
        out.clear();
        if self.probs.get(target).is_some_and(|&p| p >= 1.0) {
            return;
        }
        while out.len() < k {
            let s = self.sample(rng);
            if s != target {
                out.push(s);
            }
        }
    }
}
