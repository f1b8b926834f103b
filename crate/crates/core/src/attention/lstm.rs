//! Single-direction LSTM with gates ordered `i, f, g, o`.

use crate::embed::pv::sigmoid;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Lstm {
    pub input: usize,
    pub hidden: usize,
    /// `4H × (I + H)`: input weights then recurrent weights per row.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Per-step activations kept for backpropagation.
#[derive(Debug, Clone, Default)]
pub(crate) struct LstmTrace {
    /// Gate activations, `4H` per step.
    pub gates: Vec<Vec<f64>>,
    pub cells: Vec<Vec<f64>>,
    pub hs: Vec<Vec<f64>>,
}

impl Lstm {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w: vec![0.0; 4 * hidden * (input + hidden)],
            b: vec![0.0; 4 * hidden],
        }
    }

    fn cols(&self) -> usize {
        self.input + self.hidden
    }

    /// Runs over `xs` in the given order.
    pub fn forward(&self, xs: &[&[f64]]) -> LstmTrace {
        let h = self.hidden;
        let cols = self.cols();
        let mut trace = LstmTrace::default();
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut z = vec![0.0; 4 * h];
        for x in xs {
            z.copy_from_slice(&self.b);
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &self.w[r * cols..(r + 1) * cols];
                let (wx, wh) = row.split_at(self.input);
                *zr += dot(wx, x) + dot(wh, &h_prev);
            }
            let mut gates = vec![0.0; 4 * h];
            for j in 0..h {
                gates[j] = sigmoid(z[j]);
                gates[h + j] = sigmoid(z[h + j]);
                gates[2 * h + j] = z[2 * h + j].tanh();
                gates[3 * h + j] = sigmoid(z[3 * h + j]);
            }
            let mut c = vec![0.0; h];
            let mut hn = vec![0.0; h];
            for j in 0..h {
                c[j] = gates[h + j] * c_prev[j] + gates[j] * gates[2 * h + j];
                hn[j] = gates[3 * h + j] * c[j].tanh();
            }
            h_prev.copy_from_slice(&hn);
            c_prev.copy_from_slice(&c);
            trace.gates.push(gates);
            trace.cells.push(c);
            trace.hs.push(hn);
        }
        trace
    }

    /// Backpropagates `dh_out` (one vector per step, processing order) and
    /// adds parameter gradients into `gw`, `gb`. Input gradients are dropped
    /// since embeddings are frozen.
    pub fn backward(&self, xs: &[&[f64]], trace: &LstmTrace, dh_out: &[Vec<f64>], gw: &mut [f64], gb: &mut [f64]) {
        let h = self.hidden;
        let cols = self.cols();
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        let zeros = vec![0.0; h];
        for t in (0..xs.len()).rev() {
            let gates = &trace.gates[t];
            let c = &trace.cells[t];
            let c_prev = if t > 0 { &trace.cells[t - 1] } else { &zeros };
            let h_prev = if t > 0 { &trace.hs[t - 1] } else { &zeros };
            for j in 0..h {
                let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let dh = dh_out[t][j] + dh_next[j];
                let tc = c[j].tanh();
                let d_o = dh * tc;
                let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                dz[j] = dc * g * i * (1.0 - i);
                dz[h + j] = dc * c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - g * g);
                dz[3 * h + j] = d_o * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (r, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[r] += d;
                let row = &self.w[r * cols..(r + 1) * cols];
                let grow = &mut gw[r * cols..(r + 1) * cols];
                let (gx, gh) = grow.split_at_mut(self.input);
                for (g, &x) in gx.iter_mut().zip(xs[t].iter()) {
                    *g += d * x;
                }
                for (g, &hp) in gh.iter_mut().zip(h_prev) {
                    *g += d * hp;
                }
                for (dn, &w) in dh_next.iter_mut().zip(&row[self.input..]) {
                    *dn += d * w;
                }
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_shape_and_zero_weights() {
        let lstm = Lstm::zeros(3, 4);
        let x = [1.0, -1.0, 0.5];
        let xs: Vec<&[f64]> = vec![&x, &x];
        let t = lstm.forward(&xs);
        assert_eq!(t.hs.len(), 2);
        assert_eq!(t.hs[0].len(), 4);
        // Zero weights: i = f = o = 0.5, g = 0, so c and h stay zero.
        assert!(t.hs.iter().flatten().all(|&v| v == 0.0));
    }
}
