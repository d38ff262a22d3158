//! User encoder: bidirectional LSTM over the history of news encodings and
//! additive attention over the `2s` hidden states laid out as
//! `[fwd_1..fwd_s, bwd_1..bwd_s]`.
use ndarray::{Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD};

use crate::error::{Error, Result};
use crate::nn::attention::{attend_backward, attend_sequence, AttentionParams, AttentionTrace};
use crate::nn::lstm::{lstm_backward, lstm_forward, LstmParams, LstmTrace};
use crate::nn::{join, NamedParams};

#[derive(Debug, Clone, PartialEq)]
pub struct UserEncoderParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
    pub attention: AttentionParams,
}

impl UserEncoderParams {
    /// Input width `g`, hidden width `u_b`.
    pub fn zeros(input: usize, hidden: usize) -> Self {
        UserEncoderParams {
            forward: LstmParams::zeros(input, hidden),
            backward: LstmParams::zeros(input, hidden),
            attention: AttentionParams::zeros(hidden),
        }
    }
}

impl NamedParams for UserEncoderParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        self.forward.visit(&join(prefix, "forward"), f);
        self.backward.visit(&join(prefix, "backward"), f);
        self.attention.visit(&join(prefix, "attention"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        self.forward.visit_mut(&join(prefix, "forward"), f);
        self.backward.visit_mut(&join(prefix, "backward"), f);
        self.attention.visit_mut(&join(prefix, "attention"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserEncoding {
    pub e_u: Array1<f64>,
    /// Weights over the `2s` states; masked slots are 0.
    pub history_weights: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct BiLstmTrace {
    valid_rows: Vec<usize>,
    forward: LstmTrace,
    backward: LstmTrace,
    /// `2s x u_b`; masked rows are zero.
    pub states: Array2<f64>,
    pub mask: Vec<bool>,
}

/// Runs the forward LSTM over the valid rows of `history` in order and the
/// backward LSTM over them in reverse.
pub fn bilstm_forward(history: ArrayView2<'_, f64>, valid: &[bool], params: &UserEncoderParams) -> Result<BiLstmTrace> {
    let s = history.nrows();
    assert_eq!(valid.len(), s);
    let valid_rows: Vec<usize> = (0..s).filter(|&i| valid[i]).collect();
    if valid_rows.is_empty() {
        return Err(Error::Invalid("user history is empty".into()));
    }
    let forward = lstm_forward(&params.forward, valid_rows.iter().map(|&i| history.row(i)));
    let backward = lstm_forward(&params.backward, valid_rows.iter().rev().map(|&i| history.row(i)));
    let u = params.forward.hidden();
    let mut states = Array2::zeros((2 * s, u));
    let n = valid_rows.len();
    for (k, &i) in valid_rows.iter().enumerate() {
        states.row_mut(i).assign(&forward.steps[k].hidden);
        states.row_mut(s + i).assign(&backward.steps[n - 1 - k].hidden);
    }
    let mut mask = valid.to_vec();
    mask.extend_from_slice(valid);
    Ok(BiLstmTrace {
        valid_rows,
        forward,
        backward,
        states,
        mask,
    })
}

#[derive(Debug, Clone)]
pub struct UserTrace {
    pub bilstm: BiLstmTrace,
    attention: AttentionTrace,
    pub encoding: UserEncoding,
}

pub fn encode_user(history: ArrayView2<'_, f64>, valid: &[bool], params: &UserEncoderParams) -> Result<UserEncoding> {
    Ok(user_forward(history, valid, params)?.encoding)
}

pub fn user_forward(history: ArrayView2<'_, f64>, valid: &[bool], params: &UserEncoderParams) -> Result<UserTrace> {
    let bilstm = bilstm_forward(history, valid, params)?;
    let attention = attend_sequence(bilstm.states.view(), &bilstm.mask, &params.attention)?;
    let encoding = UserEncoding {
        e_u: attention.output.clone(),
        history_weights: attention.weights.clone(),
    };
    Ok(UserTrace {
        bilstm,
        attention,
        encoding,
    })
}

/// Accumulates parameter gradients and returns `dL/dhistory` (`s x g`,
/// zero rows for masked slots).
pub fn user_backward(trace: &UserTrace, d_e_u: &Array1<f64>, params: &UserEncoderParams, grads: &mut UserEncoderParams) -> Array2<f64> {
    let b = &trace.bilstm;
    let s = b.states.nrows() / 2;
    let d_states = attend_backward(b.states.view(), &trace.attention, d_e_u, &params.attention, &mut grads.attention);
    let n = b.valid_rows.len();
    let d_fwd: Vec<Array1<f64>> = b.valid_rows.iter().map(|&i| d_states.row(i).to_owned()).collect();
    let d_bwd: Vec<Array1<f64>> = b.valid_rows.iter().rev().map(|&i| d_states.row(s + i).to_owned()).collect();
    let dx_f = lstm_backward(&params.forward, &b.forward, &d_fwd, &mut grads.forward);
    let dx_b = lstm_backward(&params.backward, &b.backward, &d_bwd, &mut grads.backward);
    let mut d_history = Array2::zeros((s, params.forward.input()));
    for (k, &i) in b.valid_rows.iter().enumerate() {
        let mut row = d_history.row_mut(i);
        row += &dx_f[k];
        row += &dx_b[n - 1 - k];
    }
    d_history
}
