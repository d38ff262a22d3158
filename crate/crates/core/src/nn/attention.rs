//! Additive attention: `score_i = q . tanh(W x_i + b)`, softmax over the
//! valid positions, output `sum_i alpha_i x_i`.
use ndarray::{Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD};

use super::math::{add_outer, softmax_in_place};
use super::{join, NamedParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub q: Array1<f64>,
}

impl AttentionParams {
    pub fn zeros(dim: usize) -> Self {
        AttentionParams {
            w: Array2::zeros((dim, dim)),
            b: Array1::zeros(dim),
            q: Array1::zeros(dim),
        }
    }

    /// `tanh(W x + b)` and `q . tanh(W x + b)`.
    pub fn score(&self, x: ndarray::ArrayView1<'_, f64>) -> (Array1<f64>, f64) {
        let act = (self.w.dot(&x) + &self.b).mapv_into(f64::tanh);
        let s = self.q.dot(&act);
        (act, s)
    }

    /// Backward through [`score`](Self::score) for upstream gradient
    /// `d_score`. Returns `dL/dx`.
    pub fn score_backward(
        &self,
        x: ndarray::ArrayView1<'_, f64>,
        act: &Array1<f64>,
        d_score: f64,
        grads: &mut AttentionParams,
    ) -> Array1<f64> {
        grads.q.scaled_add(d_score, act);
        let d_pre = &self.q * &act.mapv(|a| 1.0 - a * a) * d_score;
        add_outer(&mut grads.w, d_pre.view(), x);
        grads.b += &d_pre;
        self.w.t().dot(&d_pre)
    }
}

impl NamedParams for AttentionParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        f(&join(prefix, "w"), self.w.view().into_dyn());
        f(&join(prefix, "b"), self.b.view().into_dyn());
        f(&join(prefix, "q"), self.q.view().into_dyn());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        f(&join(prefix, "w"), self.w.view_mut().into_dyn());
        f(&join(prefix, "b"), self.b.view_mut().into_dyn());
        f(&join(prefix, "q"), self.q.view_mut().into_dyn());
    }
}

#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub weights: Array1<f64>,
    pub scores: Array1<f64>,
    /// `tanh(W x_i + b)` for valid rows, empty for masked ones.
    activations: Vec<Array1<f64>>,
    pub output: Array1<f64>,
}

/// Attends over the rows of `states`. Rows with `valid[i] == false` get
/// weight exactly zero.
pub fn attend_sequence(states: ArrayView2<'_, f64>, valid: &[bool], params: &AttentionParams) -> Result<AttentionTrace> {
    let n = states.nrows();
    assert_eq!(valid.len(), n);
    if !valid.iter().any(|&v| v) {
        return Err(Error::Invalid("attention over a fully masked sequence".into()));
    }
    let mut scores = Array1::zeros(n);
    let mut activations = Vec::with_capacity(n);
    for (i, row) in states.rows().into_iter().enumerate() {
        if valid[i] {
            let (act, s) = params.score(row);
            scores[i] = s;
            activations.push(act);
        } else {
            activations.push(Array1::zeros(0));
        }
    }
    let mut weights = scores.clone();
    softmax_in_place(weights.view_mut(), Some(valid));
    let output = weights.dot(&states);
    Ok(AttentionTrace {
        weights,
        scores,
        activations,
        output,
    })
}

/// Returns `dL/dstates` (zero rows for masked positions).
pub fn attend_backward(
    states: ArrayView2<'_, f64>,
    trace: &AttentionTrace,
    d_output: &Array1<f64>,
    params: &AttentionParams,
    grads: &mut AttentionParams,
) -> Array2<f64> {
    let a = &trace.weights;
    let d_alpha = states.dot(d_output);
    let mean = a.dot(&d_alpha);
    let mut d_states = Array2::zeros(states.raw_dim());
    for (i, row) in states.rows().into_iter().enumerate() {
        if a[i] == 0.0 && trace.activations[i].is_empty() {
            continue;
        }
        let d_score = a[i] * (d_alpha[i] - mean);
        let mut d_row = params.score_backward(row, &trace.activations[i], d_score, grads);
        d_row.scaled_add(a[i], d_output);
        d_states.row_mut(i).assign(&d_row);
    }
    d_states
}
