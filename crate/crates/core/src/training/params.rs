//! Trainable model tensors, their configuration, and checkpoints.
use std::path::Path;

use ndarray::ArrayViewD;
use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{NamedTensor, TensorArchive, TensorData};
use crate::error::{Error, Result, TensorMismatch};
use crate::news_encoder::{Channels, NewsEncoderDims, NewsEncoderParams};
use crate::nn::cnn::Activation;
use crate::nn::NamedParams;
use crate::user_encoder::UserEncoderParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Precision {
    #[default]
    Single,
    Double,
}

impl TryFrom<u8> for Precision {
    type Error = String;

    fn try_from(bits: u8) -> std::result::Result<Self, String> {
        match bits {
            32 => Ok(Precision::Single),
            64 => Ok(Precision::Double),
            _ => Err(format!("precision must be 32 or 64, got {bits}")),
        }
    }
}

impl From<Precision> for u8 {
    fn from(p: Precision) -> u8 {
        match p {
            Precision::Single => 32,
            Precision::Double => 64,
        }
    }
}

impl Precision {
    /// Rounds every parameter to the storage grid of this precision.
    pub fn quantize<P: NamedParams>(self, params: &mut P) {
        if self == Precision::Single {
            params.visit_mut("", &mut |_, mut t| t.mapv_inplace(|v| v as f32 as f64));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Fused news/user width `g`.
    pub fused: usize,
    /// Number of title filters `gamma`.
    pub filters: usize,
    /// Filter width `l`.
    pub filter_width: usize,
    /// Diffusion LSTM width `u`.
    pub lstm_hidden: usize,
    /// Cascade view size `m`.
    pub view_size: usize,
    pub activation: Activation,
    pub channels: Channels,
    /// Multiplier on the fan-scaled initialization bounds.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            fused: 128,
            filters: 120,
            filter_width: 3,
            lstm_hidden: 128,
            view_size: 30,
            activation: Activation::Relu,
            channels: Channels::default(),
            init_scale: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn news_dims(&self, word_dim: usize, node_dim: usize, d_max: usize) -> NewsEncoderDims {
        NewsEncoderDims {
            word_dim,
            node_dim,
            filters: self.filters,
            filter_width: self.filter_width,
            lstm_hidden: self.lstm_hidden,
            fused: self.fused,
            d_max,
        }
    }

    pub fn validate(&self, d_max: usize, n_max: usize) -> Result<()> {
        if self.view_size == 0 {
            return Err(Error::Config("model.view_size must be positive".into()));
        }
        if self.filter_width > n_max {
            return Err(Error::Config(format!(
                "model.filter_width {} exceeds the title length n_max {n_max}",
                self.filter_width
            )));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config("model.init_scale must be a finite non-negative number".into()));
        }
        self.news_dims(1, 1, d_max).validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub news: NewsEncoderParams,
    pub user: UserEncoderParams,
}

impl ModelParams {
    pub fn zeros(dims: &NewsEncoderDims) -> Self {
        ModelParams {
            news: NewsEncoderParams::zeros(dims),
            user: UserEncoderParams::zeros(dims.fused, dims.fused),
        }
    }

    /// Matrices and filters are uniform in `init_scale * sqrt(6 / (fan_in +
    /// fan_out))`; attention queries uniform in `init_scale / sqrt(len)`;
    /// biases start at zero.
    pub fn random(dims: &NewsEncoderDims, init_scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(dims);
        p.visit_mut("", &mut |name, mut t| {
            let shape = t.shape().to_vec();
            let bound = match shape.as_slice() {
                [fan_out, l, g] => init_scale * (6.0 / (l * g + fan_out) as f64).sqrt(),
                [a, b] => init_scale * (6.0 / (a + b) as f64).sqrt(),
                [n] if name.ends_with(".q") => init_scale / (*n as f64).sqrt(),
                _ => 0.0,
            };
            if bound > 0.0 {
                let dist = Uniform::new_inclusive(-bound, bound);
                t.mapv_inplace(|_| dist.sample(rng));
            }
        });
        p
    }

    /// Fused width `g`.
    pub fn fused(&self) -> usize {
        self.news.proj_s.w.ncols()
    }

    pub fn to_archive(&self, precision: Precision) -> TensorArchive {
        let mut archive = TensorArchive::new();
        self.visit("", &mut |name, t| {
            let data = match precision {
                Precision::Single => TensorData::F32(t.iter().map(|&v| v as f32).collect()),
                Precision::Double => TensorData::F64(t.iter().copied().collect()),
            };
            archive.push(NamedTensor::new(name, t.shape().to_vec(), data));
        });
        archive
    }

    /// Fills `self` from `archive`. Every absent, unexpected or misshapen
    /// tensor is reported in one error and `self` is left untouched.
    pub fn load_archive(&mut self, archive: &TensorArchive) -> Result<()> {
        let expected = self.shapes();
        let mut problems = Vec::new();
        for (name, shape) in &expected {
            match archive.get(name) {
                None => problems.push(TensorMismatch {
                    name: name.clone(),
                    expected: Some(shape.clone()),
                    found: None,
                }),
                Some(t) if &t.shape != shape || t.data.dtype() == "u32" => problems.push(TensorMismatch {
                    name: name.clone(),
                    expected: Some(shape.clone()),
                    found: Some(t.shape.clone()),
                }),
                Some(_) => {}
            }
        }
        for t in &archive.tensors {
            if !expected.iter().any(|(n, _)| n == &t.name) {
                problems.push(TensorMismatch {
                    name: t.name.clone(),
                    expected: None,
                    found: Some(t.shape.clone()),
                });
            }
        }
        if !problems.is_empty() {
            return Err(Error::ShapeMismatch(problems));
        }
        self.visit_mut("", &mut |name, mut t| {
            let src = archive.get(name).expect("checked above").data.to_f64();
            for (dst, v) in t.iter_mut().zip(src) {
                *dst = v;
            }
        });
        Ok(())
    }
}

impl NamedParams for ModelParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        self.news.visit(&crate::nn::join(prefix, "news"), f);
        self.user.visit(&crate::nn::join(prefix, "user"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewMutD<'_, f64>)) {
        self.news.visit_mut(&crate::nn::join(prefix, "news"), f);
        self.user.visit_mut(&crate::nn::join(prefix, "user"), f);
    }
}

pub fn save_checkpoint(params: &ModelParams, precision: Precision, path: impl AsRef<Path>) -> Result<()> {
    params.to_archive(precision).save(path)
}

/// Loads a checkpoint into a model shaped like `template`.
pub fn load_checkpoint(template: &ModelParams, path: impl AsRef<Path>) -> Result<ModelParams> {
    let archive = TensorArchive::load(path)?;
    let mut params = template.clone();
    params.load_archive(&archive)?;
    Ok(params)
}
