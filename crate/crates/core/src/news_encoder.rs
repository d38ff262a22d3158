//! News encoder: title CNN, attentive LSTM over the personalized diffusion
//! view, calibrated adoption counts, and attention fusion of the three.
use ndarray::{s, Array1, Array2, ArrayViewD, ArrayViewMutD};
use serde::{Deserialize, Serialize};

use crate::corpus::{AdoptionHistogram, Timestamp, TokenId, WordEmbeddingTable};
use crate::error::{Error, Result};
use crate::influence::InfluenceModel;
use crate::nn::attention::{attend_backward, attend_sequence, AttentionParams, AttentionTrace};
use crate::nn::cnn::{conv_max_pool, conv_max_pool_backward, Activation, ConvParams, ConvTrace};
use crate::nn::linear::Affine;
use crate::nn::lstm::{lstm_backward, lstm_forward, LstmParams, LstmTrace};
use crate::nn::math::softmax_in_place;
use crate::nn::{join, NamedParams};
use crate::view::PersonalizedView;

/// Which views take part in fusion. Disabled views keep their parameters
/// but get zero weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Channels {
    pub diffusion: bool,
    pub adoption: bool,
}

impl Default for Channels {
    fn default() -> Self {
        Channels {
            diffusion: true,
            adoption: true,
        }
    }
}

impl Channels {
    pub fn active(&self) -> [bool; 3] {
        [true, self.diffusion, self.adoption]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsEncoderDims {
    /// Word vector width `g1`.
    pub word_dim: usize,
    /// Node embedding width `g2`.
    pub node_dim: usize,
    /// Number of CNN filters.
    pub filters: usize,
    pub filter_width: usize,
    /// Diffusion LSTM width.
    pub lstm_hidden: usize,
    /// Fused width `g`.
    pub fused: usize,
    pub d_max: usize,
}

impl NewsEncoderDims {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("word_dim", self.word_dim),
            ("node_dim", self.node_dim),
            ("filters", self.filters),
            ("filter_width", self.filter_width),
            ("lstm_hidden", self.lstm_hidden),
            ("fused", self.fused),
            ("d_max", self.d_max),
        ];
        if let Some((name, _)) = all.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.fused < self.d_max {
            return Err(Error::Config(format!(
                "fused width g = {} must be at least d_max = {}",
                self.fused, self.d_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewsEncoderParams {
    pub cnn: ConvParams,
    pub lstm: LstmParams,
    pub diffusion_attention: AttentionParams,
    pub proj_s: Affine,
    pub proj_v: Affine,
    /// Fusion scorers for the semantic, diffusion and adoption views.
    pub view_attention: [AttentionParams; 3],
}

const VIEW_NAMES: [&str; 3] = ["view_s", "view_v", "view_a"];

impl NewsEncoderParams {
    pub fn zeros(d: &NewsEncoderDims) -> Self {
        NewsEncoderParams {
            cnn: ConvParams::zeros(d.filters, d.filter_width, d.word_dim),
            lstm: LstmParams::zeros(d.node_dim, d.lstm_hidden),
            diffusion_attention: AttentionParams::zeros(d.lstm_hidden),
            proj_s: Affine::zeros(d.filters, d.fused),
            proj_v: Affine::zeros(d.lstm_hidden, d.fused),
            view_attention: std::array::from_fn(|_| AttentionParams::zeros(d.fused)),
        }
    }

    pub fn dims(&self) -> NewsEncoderDims {
        NewsEncoderDims {
            word_dim: self.cnn.filters.shape()[2],
            node_dim: self.lstm.input(),
            filters: self.cnn.count(),
            filter_width: self.cnn.width(),
            lstm_hidden: self.lstm.hidden(),
            fused: self.proj_s.w.ncols(),
            d_max: 0,
        }
    }
}

impl NamedParams for NewsEncoderParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        self.cnn.visit(&join(prefix, "cnn"), f);
        self.lstm.visit(&join(prefix, "lstm"), f);
        self.diffusion_attention.visit(&join(prefix, "diffusion_attention"), f);
        self.proj_s.visit(&join(prefix, "proj_s"), f);
        self.proj_v.visit(&join(prefix, "proj_v"), f);
        for (name, p) in VIEW_NAMES.iter().zip(&self.view_attention) {
            p.visit(&join(prefix, name), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        self.cnn.visit_mut(&join(prefix, "cnn"), f);
        self.lstm.visit_mut(&join(prefix, "lstm"), f);
        self.diffusion_attention.visit_mut(&join(prefix, "diffusion_attention"), f);
        self.proj_s.visit_mut(&join(prefix, "proj_s"), f);
        self.proj_v.visit_mut(&join(prefix, "proj_v"), f);
        for (name, p) in VIEW_NAMES.iter().zip(&mut self.view_attention) {
            p.visit_mut(&join(prefix, name), f);
        }
    }
}

/// Frozen lookup tables the encoder reads from.
#[derive(Debug, Clone, Copy)]
pub struct Tables<'a> {
    pub words: &'a WordEmbeddingTable,
    pub nodes: &'a InfluenceModel,
}

/// A news item as seen by one target user at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct NewsState {
    pub title: Vec<TokenId>,
    pub view: PersonalizedView,
    /// Calibrated adoption features, length `d_max`.
    pub adoption: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewsEncoding {
    pub e_s: Array1<f64>,
    pub e_v: Array1<f64>,
    pub e_a: Array1<f64>,
    pub e_n: Array1<f64>,
    pub view_weights: [f64; 3],
    /// One weight per view slot; padding and disabled diffusion give 0.
    pub node_weights: Array1<f64>,
}

/// `ln(1 + ln(1 + a)) / max(1, elapsed units)`, zero-padded to `d_max`.
pub fn featurize_adoptions(hist: &AdoptionHistogram, observe_until: Timestamp, d_max: usize) -> Array1<f64> {
    let elapsed = (observe_until - hist.t0) as f64 / hist.unit_seconds as f64;
    let delta = elapsed.max(1.0);
    let mut out = Array1::zeros(d_max);
    for (slot, &a) in out.iter_mut().zip(&hist.bucket_counts) {
        *slot = (1.0 + (1.0 + a as f64).ln()).ln() / delta;
    }
    out
}

/// Title CNN output for `tokens`.
pub fn encode_semantics(tokens: &[TokenId], words: &WordEmbeddingTable, cnn: &ConvParams, act: Activation) -> Array1<f64> {
    conv_max_pool(title_matrix(tokens, words).view(), cnn, act).pooled
}

fn title_matrix(tokens: &[TokenId], words: &WordEmbeddingTable) -> Array2<f64> {
    let mut m = Array2::zeros((tokens.len(), words.dim()));
    for (mut row, &t) in m.rows_mut().into_iter().zip(tokens) {
        row.assign(&words.vector(t));
    }
    m
}

fn align(e_a: &Array1<f64>, g: usize) -> Array1<f64> {
    let mut out = Array1::zeros(g);
    out.slice_mut(s![..e_a.len()]).assign(e_a);
    out
}

/// Fusion of already aligned views. Returns the fused vector, weights, and
/// per-view attention activations.
#[derive(Debug, Clone)]
pub struct FusionTrace {
    pub aligned: [Array1<f64>; 3],
    activations: [Array1<f64>; 3],
    pub weights: Array1<f64>,
    pub output: Array1<f64>,
    active: [bool; 3],
}

pub fn fuse_views(aligned: [Array1<f64>; 3], params: &[AttentionParams; 3], channels: Channels) -> FusionTrace {
    let active = channels.active();
    let mut scores = Array1::zeros(3);
    let activations = std::array::from_fn(|k| {
        if active[k] {
            let (act, sc) = params[k].score(aligned[k].view());
            scores[k] = sc;
            act
        } else {
            Array1::zeros(0)
        }
    });
    softmax_in_place(scores.view_mut(), Some(&active));
    let weights = scores;
    let mut output = Array1::zeros(aligned[0].len());
    for k in 0..3 {
        if active[k] {
            output.scaled_add(weights[k], &aligned[k]);
        }
    }
    FusionTrace {
        aligned,
        activations,
        weights,
        output,
        active,
    }
}

fn fuse_backward(
    trace: &FusionTrace,
    d_out: &Array1<f64>,
    params: &[AttentionParams; 3],
    grads: &mut [AttentionParams; 3],
) -> [Array1<f64>; 3] {
    let a = &trace.weights;
    let d_alpha: Vec<f64> = trace.aligned.iter().map(|x| x.dot(d_out)).collect();
    let mean: f64 = (0..3).map(|k| a[k] * d_alpha[k]).sum();
    std::array::from_fn(|k| {
        if !trace.active[k] {
            return Array1::zeros(d_out.len());
        }
        let d_score = a[k] * (d_alpha[k] - mean);
        let mut dx = params[k].score_backward(trace.aligned[k].view(), &trace.activations[k], d_score, &mut grads[k]);
        dx.scaled_add(a[k], d_out);
        dx
    })
}

/// Forward intermediates kept for [`NewsEncoder::backward`].
#[derive(Debug, Clone)]
pub struct NewsTrace {
    words: Array2<f64>,
    conv: ConvTrace,
    diffusion: Option<DiffusionTrace>,
    fusion: FusionTrace,
    pub encoding: NewsEncoding,
}

#[derive(Debug, Clone)]
struct DiffusionTrace {
    lstm: LstmTrace,
    hiddens: Array2<f64>,
    attention: AttentionTrace,
}

/// Encoder bundle of parameters, options and frozen tables.
#[derive(Debug, Clone, Copy)]
pub struct NewsEncoder<'a> {
    pub params: &'a NewsEncoderParams,
    pub tables: Tables<'a>,
    pub activation: Activation,
    pub channels: Channels,
}

impl NewsEncoder<'_> {
    pub fn encode(&self, state: &NewsState) -> Result<NewsEncoding> {
        Ok(self.forward(state)?.encoding)
    }

    pub fn forward(&self, state: &NewsState) -> Result<NewsTrace> {
        let p = self.params;
        let g = p.proj_s.w.ncols();
        if state.adoption.len() > g {
            return Err(Error::Config(format!(
                "adoption features of width {} exceed fused width {g}",
                state.adoption.len()
            )));
        }
        if state.title.len() < p.cnn.width() {
            return Err(Error::Invalid(format!(
                "title of {} tokens is shorter than the filter width {}",
                state.title.len(),
                p.cnn.width()
            )));
        }
        let words = title_matrix(&state.title, self.tables.words);
        let conv = conv_max_pool(words.view(), &p.cnn, self.activation);
        let e_s = conv.pooled.clone();

        let m = state.view.len();
        let mut node_weights = Array1::zeros(m);
        let (diffusion, e_v) = if self.channels.diffusion {
            let real = state.view.real_nodes();
            let inputs: Vec<_> = real.iter().map(|&v| self.tables.nodes.reposter_embedding(v)).collect();
            let lstm = lstm_forward(&p.lstm, inputs);
            let mut hiddens = Array2::zeros((real.len(), p.lstm.hidden()));
            for (mut row, h) in hiddens.rows_mut().into_iter().zip(lstm.hidden_states()) {
                row.assign(h);
            }
            let attention = attend_sequence(hiddens.view(), &vec![true; real.len()], &p.diffusion_attention)?;
            node_weights.slice_mut(s![..real.len()]).assign(&attention.weights);
            let e_v = attention.output.clone();
            (
                Some(DiffusionTrace {
                    lstm,
                    hiddens,
                    attention,
                }),
                e_v,
            )
        } else {
            (None, Array1::zeros(p.lstm.hidden()))
        };

        let e_a = state.adoption.clone();
        let aligned = [
            p.proj_s.forward(e_s.view()),
            p.proj_v.forward(e_v.view()),
            align(&e_a, g),
        ];
        let fusion = fuse_views(aligned, &p.view_attention, self.channels);
        let w = &fusion.weights;
        let encoding = NewsEncoding {
            e_s,
            e_v,
            e_a,
            e_n: fusion.output.clone(),
            view_weights: [w[0], w[1], w[2]],
            node_weights,
        };
        Ok(NewsTrace {
            words,
            conv,
            diffusion,
            fusion,
            encoding,
        })
    }

    /// Accumulates `dL/dparams` for upstream gradient `d_e_n`.
    pub fn backward(&self, trace: &NewsTrace, d_e_n: &Array1<f64>, grads: &mut NewsEncoderParams) {
        let p = self.params;
        let d_aligned = fuse_backward(&trace.fusion, d_e_n, &p.view_attention, &mut grads.view_attention);
        let d_e_s = p.proj_s.backward(trace.encoding.e_s.view(), d_aligned[0].view(), &mut grads.proj_s);
        conv_max_pool_backward(trace.words.view(), &trace.conv, &d_e_s, &p.cnn, self.activation, &mut grads.cnn);
        if let Some(diff) = &trace.diffusion {
            let d_e_v = p.proj_v.backward(trace.encoding.e_v.view(), d_aligned[1].view(), &mut grads.proj_v);
            let d_h = attend_backward(
                diff.hiddens.view(),
                &diff.attention,
                &d_e_v,
                &p.diffusion_attention,
                &mut grads.diffusion_attention,
            );
            let d_hidden: Vec<Array1<f64>> = d_h.rows().into_iter().map(|r| r.to_owned()).collect();
            lstm_backward(&p.lstm, &diff.lstm, &d_hidden, &mut grads.lstm);
        }
    }
}
