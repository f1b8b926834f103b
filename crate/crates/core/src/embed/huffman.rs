use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::{Error, Result};

/// Binary prefix code over vocabulary ids, used by the hierarchical softmax.
///
/// `points[t]` lists internal-node indices (`0..V-1`) from the root down to
/// leaf `t`; `codes[t][j]` is the branch bit taken at `points[t][j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanTree {
    codes: Vec<Vec<u8>>,
    points: Vec<Vec<u32>>,
}

impl HuffmanTree {
    /// Build from token frequencies. Ties are broken by lower node id, so
    /// leaves (ordered by token id) merge before internal nodes of equal weight.
    pub fn build(freqs: &[u64]) -> Result<Self> {
        let v = freqs.len();
        if v < 2 {
            return Err(Error::config(
                "hierarchical softmax needs at least 2 vocabulary entries",
            ));
        }
        let mut heap: BinaryHeap<Reverse<(u64, usize)>> = freqs
            .iter()
            .enumerate()
            .map(|(id, &f)| Reverse((f, id)))
            .collect();
        // parent[node] and which branch (0 = first popped, 1 = second popped).
        let mut parent = vec![usize::MAX; 2 * v - 1];
        let mut bit = vec![0u8; 2 * v - 1];
        let mut next = v;
        while heap.len() > 1 {
            let Reverse((fa, a)) = heap.pop().unwrap();
            let Reverse((fb, b)) = heap.pop().unwrap();
            parent[a] = next;
            parent[b] = next;
            bit[a] = 0;
            bit[b] = 1;
            heap.push(Reverse((fa + fb, next)));
            next += 1;
        }
        let root = next - 1;
        let mut codes = Vec::with_capacity(v);
        let mut points = Vec::with_capacity(v);
        for leaf in 0..v {
            let mut code = Vec::new();
            let mut path = Vec::new();
            let mut node = leaf;
            while node != root {
                code.push(bit[node]);
                node = parent[node];
                path.push((node - v) as u32);
            }
            code.reverse();
            path.reverse();
            codes.push(code);
            points.push(path);
        }
        Ok(Self { codes, points })
    }

    pub fn n_leaves(&self) -> usize {
        self.codes.len()
    }

    pub fn n_internal(&self) -> usize {
        self.codes.len() - 1
    }

    pub fn code(&self, token: usize) -> &[u8] {
        &self.codes[token]
    }

    pub fn path(&self, token: usize) -> &[u32] {
        &self.points[token]
    }

    pub fn code_lengths(&self) -> Vec<usize> {
        self.codes.iter().map(Vec::len).collect()
    }

    /// `Σ freq · code length`.
    pub fn weighted_length(&self, freqs: &[u64]) -> u64 {
        self.codes
            .iter()
            .zip(freqs)
            .map(|(c, &f)| c.len() as u64 * f)
            .sum()
    }

    pub fn is_prefix_free(&self) -> bool {
        for (i, a) in self.codes.iter().enumerate() {
            for (j, b) in self.codes.iter().enumerate() {
                if i != j && b.starts_with(a) {
                    return false;
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Minimum weighted length over all complete prefix codes, found by
    /// enumerating length vectors that satisfy Kraft's equality.
    fn brute_force_optimum(freqs: &[u64]) -> u64 {
        let n = freqs.len();
        let max_len = n - 1;
        let mut lengths = vec![1usize; n];
        let mut best = u64::MAX;
        loop {
            // Kraft sum scaled by 2^max_len.
            let kraft: u64 = lengths.iter().map(|&l| 1u64 << (max_len - l)).sum();
            if kraft == 1u64 << max_len {
                let cost = lengths.iter().zip(freqs).map(|(&l, &f)| l as u64 * f).sum();
                best = best.min(cost);
            }
            let mut k = 0;
            loop {
                if k == n {
                    return best;
                }
                lengths[k] += 1;
                if lengths[k] <= max_len {
                    break;
                }
                lengths[k] = 1;
                k += 1;
            }
        }
    }

    #[test]
    fn four_token_example() {
        // the:4, ai:2, race:1, war:1
        let freqs = [4, 2, 1, 1];
        let tree = HuffmanTree::build(&freqs).unwrap();
        assert_eq!(tree.code_lengths(), vec![1, 2, 3, 3]);
        assert_eq!(tree.weighted_length(&freqs), 14);
        assert_eq!(brute_force_optimum(&freqs), 14);
        assert!(tree.is_prefix_free());
    }

    #[test]
    fn two_equal_tokens() {
        let tree = HuffmanTree::build(&[7, 7]).unwrap();
        assert_eq!(tree.code_lengths(), vec![1, 1]);
        assert_ne!(tree.code(0), tree.code(1));
        assert_eq!(tree.n_internal(), 1);
    }

    #[test]
    fn rejects_tiny_vocab() {
        assert!(HuffmanTree::build(&[3]).is_err());
    }

    #[test]
    fn deterministic() {
        let freqs = [5, 5, 5, 5, 2, 2];
        assert_eq!(
            HuffmanTree::build(&freqs).unwrap(),
            HuffmanTree::build(&freqs).unwrap()
        );
    }

    proptest! {
        #[test]
        fn optimal_and_prefix_free(freqs in prop::collection::vec(1u64..50, 2..7)) {
            let tree = HuffmanTree::build(&freqs).unwrap();
            prop_assert!(tree.is_prefix_free());
            prop_assert_eq!(tree.weighted_length(&freqs), brute_force_optimum(&freqs));
            for t in 0..freqs.len() {
                prop_assert_eq!(tree.code(t).len(), tree.path(t).len());
                prop_assert!(tree.path(t).iter().all(|&p| (p as usize) < freqs.len() - 1));
            }
        }

        #[test]
        fn larger_vocab_prefix_free(freqs in prop::collection::vec(1u64..1000, 2..60)) {
            prop_assert!(HuffmanTree::build(&freqs).unwrap().is_prefix_free());
        }
    }
}
