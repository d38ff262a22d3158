//! Single-layer LSTM over `[h_{t-1}, x_t]`.
//!
//! Gate matrices have shape `(hidden + input, hidden)`: the first `hidden`
//! rows act on the previous hidden state, the rest on the input.
use ndarray::{s, Array1, Array2, ArrayView1, ArrayViewD, ArrayViewMutD};

use super::math::{add_outer, sigmoid};
use super::{join, NamedParams};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_f: Array2<f64>,
    pub w_i: Array2<f64>,
    pub w_o: Array2<f64>,
    pub w_c: Array2<f64>,
    pub b_f: Array1<f64>,
    pub b_i: Array1<f64>,
    pub b_o: Array1<f64>,
    pub b_c: Array1<f64>,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Array2::zeros((hidden + input, hidden));
        let b = || Array1::zeros(hidden);
        LstmParams {
            w_f: w(),
            w_i: w(),
            w_o: w(),
            w_c: w(),
            b_f: b(),
            b_i: b(),
            b_o: b(),
            b_c: b(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_f.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_f.nrows() - self.hidden()
    }
}

impl NamedParams for LstmParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        for (n, w) in [("w_f", &self.w_f), ("w_i", &self.w_i), ("w_o", &self.w_o), ("w_c", &self.w_c)] {
            f(&join(prefix, n), w.view().into_dyn());
        }
        for (n, b) in [("b_f", &self.b_f), ("b_i", &self.b_i), ("b_o", &self.b_o), ("b_c", &self.b_c)] {
            f(&join(prefix, n), b.view().into_dyn());
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        for (n, w) in [
            ("w_f", &mut self.w_f),
            ("w_i", &mut self.w_i),
            ("w_o", &mut self.w_o),
            ("w_c", &mut self.w_c),
        ] {
            f(&join(prefix, n), w.view_mut().into_dyn());
        }
        for (n, b) in [
            ("b_f", &mut self.b_f),
            ("b_i", &mut self.b_i),
            ("b_o", &mut self.b_o),
            ("b_c", &mut self.b_c),
        ] {
            f(&join(prefix, n), b.view_mut().into_dyn());
        }
    }
}

/// Everything one cell computed, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmStep {
    /// `[h_{t-1}, x_t]`.
    pub xh: Array1<f64>,
    pub forget: Array1<f64>,
    pub input: Array1<f64>,
    pub output: Array1<f64>,
    pub candidate: Array1<f64>,
    pub cell: Array1<f64>,
    pub hidden: Array1<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct LstmTrace {
    pub steps: Vec<LstmStep>,
}

impl LstmTrace {
    pub fn hidden_states(&self) -> impl Iterator<Item = &Array1<f64>> {
        self.steps.iter().map(|s| &s.hidden)
    }
}

/// Runs the recurrence from `h = C = 0` and keeps every step.
pub fn lstm_forward<'a>(params: &LstmParams, inputs: impl IntoIterator<Item = ArrayView1<'a, f64>>) -> LstmTrace {
    let u = params.hidden();
    let mut h = Array1::zeros(u);
    let mut c = Array1::zeros(u);
    let mut steps = Vec::new();
    for x in inputs {
        assert_eq!(x.len(), params.input(), "LSTM input width");
        let mut xh = Array1::zeros(u + x.len());
        xh.slice_mut(s![..u]).assign(&h);
        xh.slice_mut(s![u..]).assign(&x);
        let forget = (xh.dot(&params.w_f) + &params.b_f).mapv_into(sigmoid);
        let input = (xh.dot(&params.w_i) + &params.b_i).mapv_into(sigmoid);
        let output = (xh.dot(&params.w_o) + &params.b_o).mapv_into(sigmoid);
        let candidate = (xh.dot(&params.w_c) + &params.b_c).mapv_into(f64::tanh);
        c = &forget * &c + &input * &candidate;
        h = &output * &c.mapv(f64::tanh);
        steps.push(LstmStep {
            xh,
            forget,
            input,
            output,
            candidate,
            cell: c.clone(),
            hidden: h.clone(),
        });
    }
    LstmTrace { steps }
}

/// Backpropagation through time. `d_hidden[t]` is the external gradient on
/// `h_t`. Accumulates into `grads` and returns the gradient of every input.
pub fn lstm_backward(params: &LstmParams, trace: &LstmTrace, d_hidden: &[Array1<f64>], grads: &mut LstmParams) -> Vec<Array1<f64>> {
    let u = params.hidden();
    let n = trace.steps.len();
    assert_eq!(d_hidden.len(), n);
    let mut d_inputs = vec![Array1::zeros(0); n];
    let mut dh_next = Array1::<f64>::zeros(u);
    let mut dc_next = Array1::<f64>::zeros(u);
    let zero = Array1::zeros(u);
    for t in (0..n).rev() {
        let st = &trace.steps[t];
        let c_prev = if t > 0 { &trace.steps[t - 1].cell } else { &zero };
        let dh = &d_hidden[t] + &dh_next;
        let tanh_c = st.cell.mapv(f64::tanh);
        let d_out = &dh * &tanh_c;
        let dc = &dc_next + &(&dh * &st.output * &tanh_c.mapv(|v| 1.0 - v * v));
        let dz_f = &dc * c_prev * &st.forget.mapv(|v| v * (1.0 - v));
        let dz_i = &dc * &st.candidate * &st.input.mapv(|v| v * (1.0 - v));
        let dz_o = &d_out * &st.output.mapv(|v| v * (1.0 - v));
        let dz_c = &dc * &st.input * &st.candidate.mapv(|v| 1.0 - v * v);
        dc_next = &dc * &st.forget;

        let xh = st.xh.view();
        add_outer(&mut grads.w_f, xh, dz_f.view());
        add_outer(&mut grads.w_i, xh, dz_i.view());
        add_outer(&mut grads.w_o, xh, dz_o.view());
        add_outer(&mut grads.w_c, xh, dz_c.view());
        grads.b_f += &dz_f;
        grads.b_i += &dz_i;
        grads.b_o += &dz_o;
        grads.b_c += &dz_c;

        let d_xh = params.w_f.dot(&dz_f) + params.w_i.dot(&dz_i) + params.w_o.dot(&dz_o) + params.w_c.dot(&dz_c);
        dh_next = d_xh.slice(s![..u]).to_owned();
        d_inputs[t] = d_xh.slice(s![u..]).to_owned();
    }
    d_inputs
}
