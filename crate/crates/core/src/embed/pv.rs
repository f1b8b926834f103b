//! Paragraph-vector objectives and their gradients.
//!
//! One training example predicts a `target` token from a hidden vector `h`:
//! for DBOW `h` is the unit vector alone, for DM it is the mean of the unit
//! vector and the context word vectors. The output side is either a
//! hierarchical softmax over the Huffman path of `target` or a
//! negative-sampling logistic loss.
//!
//! The math is generic over the float type so the same code trains in `f32`
//! and is gradient-checked in `f64`.

use num_traits::Float;

use super::huffman::HuffmanTree;
use super::{PvArch, PvObjective};

#[inline]
pub(crate) fn cast<F: Float>(x: f64) -> F {
    F::from(x).expect("representable")
}

/// `log σ(x)`, stable for large |x|.
#[inline]
pub(crate) fn log_sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

#[inline]
fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Trainable matrices, row-major with `dim` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PvParams<F> {
    pub dim: usize,
    /// Input word vectors, `V × dim` (unused by pure DBOW).
    pub words: Vec<F>,
    /// Text-unit vectors, `N × dim`.
    pub units: Vec<F>,
    /// HS: internal-node vectors `(V-1) × dim`; NEG: output word vectors `V × dim`.
    pub outputs: Vec<F>,
}

impl<F: Float> PvParams<F> {
    pub fn row(m: &[F], dim: usize, r: usize) -> &[F] {
        &m[r * dim..(r + 1) * dim]
    }

    pub fn row_mut(m: &mut [F], dim: usize, r: usize) -> &mut [F] {
        &mut m[r * dim..(r + 1) * dim]
    }

    pub fn unit(&self, u: usize) -> &[F] {
        Self::row(&self.units, self.dim, u)
    }
}

/// Output-side structure.
#[derive(Debug, Clone)]
pub enum OutputLayer<'a> {
    Hierarchical(&'a HuffmanTree),
    Negative,
}

impl OutputLayer<'_> {
    pub fn objective(&self) -> PvObjective {
        match self {
            OutputLayer::Hierarchical(_) => PvObjective::Hs,
            OutputLayer::Negative => PvObjective::Neg,
        }
    }
}

/// A single prediction problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PvExample {
    pub unit: usize,
    /// Context word ids (DM only).
    pub context: Vec<usize>,
    pub target: usize,
    /// Pre-drawn negatives (NEG only).
    pub negatives: Vec<usize>,
}

/// Per-example gradient buffers, reused across examples.
#[derive(Debug, Clone)]
pub struct Scratch<F> {
    pub h: Vec<F>,
    /// dL/dh.
    pub grad_h: Vec<F>,
    /// Output rows touched and their gradients (`rows.len() × dim`).
    pub rows: Vec<usize>,
    pub row_grads: Vec<F>,
}

impl<F: Float> Scratch<F> {
    pub fn new(dim: usize) -> Self {
        Self {
            h: vec![F::zero(); dim],
            grad_h: vec![F::zero(); dim],
            rows: Vec::new(),
            row_grads: Vec::new(),
        }
    }
}

/// Builds `h` into `scratch.h` from the unit vector and context words.
pub fn hidden<F: Float>(
    arch: PvArch,
    words: &[F],
    unit_vec: &[F],
    context: &[usize],
    dim: usize,
    h: &mut [F],
) {
    h.copy_from_slice(unit_vec);
    if arch == PvArch::Dm && !context.is_empty() {
        for &c in context {
            for (x, &w) in h.iter_mut().zip(PvParams::row(words, dim, c)) {
                *x = *x + w;
            }
        }
        let n: F = cast((context.len() + 1) as f64);
        for x in h.iter_mut() {
            *x = *x / n;
        }
    }
}

/// Forward and backward for one example. Leaves `dL/dh` and the output-row
/// gradients in `scratch` and returns the example loss.
pub fn forward_backward<F: Float>(
    arch: PvArch,
    output: &OutputLayer<'_>,
    words: &[F],
    outputs: &[F],
    unit_vec: &[F],
    dim: usize,
    ex: &PvExample,
    scratch: &mut Scratch<F>,
) -> F {
    let ctx: &[usize] = if arch == PvArch::Dm { &ex.context } else { &[] };
    hidden(arch, words, unit_vec, ctx, dim, &mut scratch.h);
    scratch.grad_h.iter_mut().for_each(|g| *g = F::zero());
    scratch.rows.clear();
    scratch.row_grads.clear();
    let mut loss = F::zero();

    let Scratch {
        h,
        grad_h,
        rows,
        row_grads,
    } = scratch;
    // Each term is -log σ(sign · h·u); d/dh = -(1 - σ(sign·h·u))·sign·u.
    let mut term = |row: usize, sign: F| {
        let u = PvParams::row(outputs, dim, row);
        let z = sign * dot(h, u);
        loss = loss - log_sigmoid(z);
        let coef = -(F::one() - sigmoid(z)) * sign;
        for (g, &w) in grad_h.iter_mut().zip(u) {
            *g = *g + coef * w;
        }
        rows.push(row);
        row_grads.extend(h.iter().map(|&x| coef * x));
    };

    match output {
        OutputLayer::Hierarchical(tree) => {
            for (&node, &bit) in tree.path(ex.target).iter().zip(tree.code(ex.target)) {
                let sign = if bit == 0 { F::one() } else { -F::one() };
                term(node as usize, sign);
            }
        }
        OutputLayer::Negative => {
            term(ex.target, F::one());
            for &n in &ex.negatives {
                term(n, -F::one());
            }
        }
    }
    loss
}

/// Probability of reaching each child at every internal node on `target`'s
/// path: `(p(branch 0), p(branch 1))` per node.
pub fn hs_branch_probabilities<F: Float>(
    tree: &HuffmanTree,
    outputs: &[F],
    h: &[F],
    target: usize,
) -> Vec<(F, F)> {
    let dim = h.len();
    tree.path(target)
        .iter()
        .map(|&node| {
            let z = dot(h, PvParams::row(outputs, dim, node as usize));
            (sigmoid(z), sigmoid(-z))
        })
        .collect()
}

/// Full gradients over a fixed batch, shaped like [`PvParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct PvGrads<F> {
    pub words: Vec<F>,
    pub units: Vec<F>,
    pub outputs: Vec<F>,
}

/// Distributes `dL/dh` to the inputs that formed `h`, scaled by `scale`.
pub(crate) fn scatter_input_grad<F: Float>(
    arch: PvArch,
    context: &[usize],
    grad_h: &[F],
    scale: F,
    dim: usize,
    words: Option<&mut [F]>,
    unit_vec: &mut [F],
) {
    let n_inputs = if arch == PvArch::Dm { context.len() + 1 } else { 1 };
    let s = scale / cast(n_inputs as f64);
    for (u, &g) in unit_vec.iter_mut().zip(grad_h) {
        *u = *u + s * g;
    }
    if arch == PvArch::Dm {
        if let Some(words) = words {
            for &c in context {
                for (w, &g) in PvParams::row_mut(words, dim, c).iter_mut().zip(grad_h) {
                    *w = *w + s * g;
                }
            }
        }
    }
}

pub(crate) fn scatter_output_grad<F: Float>(scratch: &Scratch<F>, scale: F, dim: usize, outputs: &mut [F]) {
    for (k, &row) in scratch.rows.iter().enumerate() {
        let g = &scratch.row_grads[k * dim..(k + 1) * dim];
        for (o, &gi) in PvParams::row_mut(outputs, dim, row).iter_mut().zip(g) {
            *o = *o + scale * gi;
        }
    }
}

/// Summed loss and exact gradient over `examples` at fixed parameters.
pub fn batch_loss_grad<F: Float>(
    arch: PvArch,
    output: &OutputLayer<'_>,
    params: &PvParams<F>,
    examples: &[PvExample],
) -> (F, PvGrads<F>) {
    let dim = params.dim;
    let mut grads = PvGrads {
        words: vec![F::zero(); params.words.len()],
        units: vec![F::zero(); params.units.len()],
        outputs: vec![F::zero(); params.outputs.len()],
    };
    let mut scratch = Scratch::new(dim);
    let mut total = F::zero();
    for ex in examples {
        total = total
            + forward_backward(
                arch,
                output,
                &params.words,
                &params.outputs,
                params.unit(ex.unit),
                dim,
                ex,
                &mut scratch,
            );
        let unit_grad = PvParams::row_mut(&mut grads.units, dim, ex.unit);
        scatter_input_grad(
            arch,
            &ex.context,
            &scratch.grad_h,
            F::one(),
            dim,
            Some(&mut grads.words),
            unit_grad,
        );
        scatter_output_grad(&scratch, F::one(), dim, &mut grads.outputs);
    }
    (total, grads)
}

pub fn batch_loss<F: Float>(
    arch: PvArch,
    output: &OutputLayer<'_>,
    params: &PvParams<F>,
    examples: &[PvExample],
) -> F {
    let mut scratch = Scratch::new(params.dim);
    examples.iter().fold(F::zero(), |acc, ex| {
        acc + forward_backward(
            arch,
            output,
            &params.words,
            &params.outputs,
            params.unit(ex.unit),
            params.dim,
            ex,
            &mut scratch,
        )
    })
}
