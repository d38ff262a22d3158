//! Full recommender: news and user encoders tied together by impression
//! scores, with batched reverse-mode gradients.
use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use super::data::{Dataset, Impression, NewsKey};
use super::loss::impression_loss;
use super::params::{ModelConfig, ModelParams};
use crate::error::Result;
use crate::news_encoder::{Channels, NewsEncoder, NewsEncoding, NewsState, NewsTrace};
use crate::nn::cnn::Activation;
use crate::nn::NamedParams;
use crate::user_encoder::{user_backward, user_forward, UserEncoding};

#[derive(Debug, Clone, Copy)]
pub struct Recommender<'a> {
    pub params: &'a ModelParams,
    pub data: &'a Dataset<'a>,
    pub activation: Activation,
    pub channels: Channels,
}

/// Everything computed for one impression.
#[derive(Debug, Clone)]
pub struct ImpressionOutput {
    /// Positive first.
    pub scores: Vec<f64>,
    pub loss: f64,
    pub user: UserEncoding,
    pub candidates: Vec<NewsEncoding>,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    /// Sum of impression losses.
    pub loss: f64,
    pub impressions: Vec<ImpressionOutput>,
    /// Sum of per-impression gradients, when requested.
    pub grads: Option<ModelParams>,
}

impl<'a> Recommender<'a> {
    pub fn new(params: &'a ModelParams, data: &'a Dataset<'a>, config: &ModelConfig) -> Self {
        Recommender {
            params,
            data,
            activation: config.activation,
            channels: config.channels,
        }
    }

    pub fn news_encoder(&self) -> NewsEncoder<'a> {
        NewsEncoder {
            params: &self.params.news,
            tables: self.data.tables(),
            activation: self.activation,
            channels: self.channels,
        }
    }

    pub fn encode_news(&self, key: NewsKey) -> Result<NewsEncoding> {
        self.news_encoder().encode(&self.data.state(key)?)
    }

    /// Forward pass over `batch`, optionally followed by the backward pass.
    /// Each distinct news state is encoded once per batch.
    pub fn run_batch(&self, batch: &[&Impression], with_grad: bool) -> Result<BatchOutput> {
        let mut keys: BTreeMap<NewsKey, usize> = BTreeMap::new();
        for imp in batch {
            for k in imp.history_keys().chain(imp.candidate_keys()) {
                keys.entry(k).or_insert(0);
            }
        }
        for (i, v) in keys.values_mut().enumerate() {
            *v = i;
        }
        let states: Vec<NewsState> = keys.keys().map(|&k| self.data.state(k)).collect::<Result<_>>()?;
        let encoder = self.news_encoder();
        let traces: Vec<NewsTrace> = states.iter().map(|s| encoder.forward(s)).collect::<Result<_>>()?;

        let g = self.params.fused();
        let mut grads = with_grad.then(|| {
            let mut z = self.params.clone();
            z.fill(0.0);
            z
        });
        let mut d_news: Vec<Option<Array1<f64>>> = vec![None; traces.len()];
        let mut outputs = Vec::with_capacity(batch.len());
        let mut total = 0.0;
        for imp in batch {
            let hist_idx: Vec<usize> = imp.history_keys().map(|k| keys[&k]).collect();
            let cand_idx: Vec<usize> = imp.candidate_keys().map(|k| keys[&k]).collect();
            let mut history = Array2::zeros((hist_idx.len(), g));
            for (mut row, &i) in history.rows_mut().into_iter().zip(&hist_idx) {
                row.assign(&traces[i].encoding.e_n);
            }
            let valid = vec![true; hist_idx.len()];
            let ut = user_forward(history.view(), &valid, &self.params.user)?;
            let e_u = &ut.encoding.e_u;
            let scores: Vec<f64> = cand_idx.iter().map(|&i| e_u.dot(&traces[i].encoding.e_n)).collect();
            let (loss, d_scores) = impression_loss(&scores);
            total += loss;
            if let Some(grads) = grads.as_mut() {
                let mut d_eu = Array1::zeros(g);
                for (&i, &ds) in cand_idx.iter().zip(&d_scores) {
                    d_eu.scaled_add(ds, &traces[i].encoding.e_n);
                    d_news[i].get_or_insert_with(|| Array1::zeros(g)).scaled_add(ds, e_u);
                }
                let d_hist = user_backward(&ut, &d_eu, &self.params.user, &mut grads.user);
                for (row, &i) in d_hist.rows().into_iter().zip(&hist_idx) {
                    *d_news[i].get_or_insert_with(|| Array1::zeros(g)) += &row;
                }
            }
            outputs.push(ImpressionOutput {
                scores,
                loss,
                user: ut.encoding,
                candidates: cand_idx.iter().map(|&i| traces[i].encoding.clone()).collect(),
            });
        }
        if let Some(grads) = grads.as_mut() {
            for (trace, d) in traces.iter().zip(&d_news) {
                if let Some(d) = d {
                    encoder.backward(trace, d, &mut grads.news);
                }
            }
        }
        Ok(BatchOutput {
            loss: total,
            impressions: outputs,
            grads,
        })
    }

    pub fn impression(&self, imp: &Impression) -> Result<ImpressionOutput> {
        Ok(self.run_batch(&[imp], false)?.impressions.remove(0))
    }
}
