//! Mini-batch training loop.
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{build_impressions, Dataset, Impression, ImpressionBuild, NegativeCount, Portion};
use super::model::Recommender;
use super::params::{ModelConfig, ModelParams, Precision};
use crate::corpus::DatasetSplit;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig};
use crate::nn::NamedParams;

const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Sgd,
    Momentum,
    /// Bias-corrected adaptive moments with `momentum` as the first-moment
    /// decay.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Negatives per training impression.
    pub negatives: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub momentum: f64,
    /// Second-moment decay for Adam.
    pub beta2: f64,
    /// Denominator offset for Adam.
    pub epsilon: f64,
    pub precision: Precision,
    /// Gradient shards per batch. 1 is single-threaded.
    pub threads: usize,
    /// Draw fresh training negatives every epoch.
    pub resample_negatives: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            negatives: 4,
            lr: 0.05,
            epochs: 10,
            batch_size: 16,
            optimizer: Optimizer::Sgd,
            momentum: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            precision: Precision::Single,
            threads: 1,
            resample_negatives: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.negatives == 0 {
            return Err(Error::Config("training.negatives must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("training.lr must be positive".into()));
        }
        if self.batch_size == 0 || self.threads == 0 {
            return Err(Error::Config("training.batch_size and training.threads must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("training.momentum must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::Config("training.beta2 must be in [0, 1) and training.epsilon positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub impressions: usize,
    /// Sum of impression losses over the epoch.
    pub loss: f64,
    pub mean_loss: f64,
    pub valid_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (the last epoch without
    /// validation data).
    pub params: ModelParams,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Per-parameter state of the adaptive optimizer, flattened in visiting
/// order.
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl AdamState {
    fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut ModelParams, grads: &ModelParams, scale: f64, cfg: &TrainConfig) {
        let mut g = Vec::with_capacity(self.m.len());
        grads.visit("", &mut |_, t| g.extend(t.iter().map(|x| x * scale)));
        self.step += 1;
        let (b1, b2) = (cfg.momentum, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let mut i = 0;
        params.visit_mut("", &mut |_, mut t| {
            for p in t.iter_mut() {
                self.m[i] = b1 * self.m[i] + (1.0 - b1) * g[i];
                self.v[i] = b2 * self.v[i] + (1.0 - b2) * g[i] * g[i];
                *p -= cfg.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + cfg.epsilon);
                i += 1;
            }
        });
    }
}

/// Batches keep each pseudo-user's impressions together; users are shuffled.
fn batches<'i>(impressions: &'i [Impression], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<&'i Impression>> {
    let mut users: Vec<usize> = impressions.iter().map(|i| i.pseudo_user).collect();
    users.sort_unstable();
    users.dedup();
    users.shuffle(rng);
    let mut by_user: std::collections::HashMap<usize, Vec<&Impression>> = std::collections::HashMap::new();
    for imp in impressions {
        by_user.entry(imp.pseudo_user).or_default().push(imp);
    }
    let ordered: Vec<&Impression> = users.iter().flat_map(|u| by_user.remove(u).unwrap_or_default()).collect();
    ordered.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// Summed batch loss and gradient, computed over `shards` contiguous slices
/// and reduced in slice order.
fn batch_gradient(model: &Recommender<'_>, batch: &[&Impression], shards: usize) -> Result<(f64, ModelParams)> {
    if shards <= 1 || batch.len() < 2 {
        let out = model.run_batch(batch, true)?;
        return Ok((out.loss, out.grads.expect("requested")));
    }
    let size = batch.len().div_ceil(shards);
    let parts: Vec<Result<(f64, ModelParams)>> = batch
        .par_chunks(size)
        .map(|c| {
            let out = model.run_batch(c, true)?;
            Ok((out.loss, out.grads.expect("requested")))
        })
        .collect();
    let mut iter = parts.into_iter();
    let (mut loss, mut grads) = iter.next().expect("nonempty batch")?;
    for part in iter {
        let (l, g) = part?;
        loss += l;
        grads.scaled_add(1.0, &g);
    }
    Ok((loss, grads))
}

pub struct Trainer<'a> {
    pub data: &'a Dataset<'a>,
    pub model: &'a ModelConfig,
    pub config: &'a TrainConfig,
    pub eval: &'a EvalConfig,
}

impl Trainer<'_> {
    pub fn initial_params(&self, seed: u64) -> ModelParams {
        let cfg = &self.data.corpus.config;
        let dims = self
            .model
            .news_dims(self.data.words.dim(), self.data.influence.dim(), cfg.d_max);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ModelParams::random(&dims, self.model.init_scale, &mut rng);
        self.config.precision.quantize(&mut p);
        p
    }

    /// Trains on the split's leave-one-out impressions and selects the epoch
    /// with the best validation AUC.
    pub fn train(&self, split: &DatasetSplit, seed: u64) -> Result<TrainOutcome> {
        let validation = build_impressions(
            self.data,
            split,
            Portion::Validation,
            NegativeCount::UpTo(self.eval.max_negatives),
            seed ^ 0x5eed_0001,
        )
        .impressions;
        let negatives = NegativeCount::Exactly(self.config.negatives);
        let fixed = (!self.config.resample_negatives)
            .then(|| build_impressions(self.data, split, Portion::Train, negatives, seed ^ 0x5eed_0002));
        self.run(seed, &validation, |epoch| match &fixed {
            Some(b) => b.clone(),
            None => build_impressions(
                self.data,
                split,
                Portion::Train,
                negatives,
                seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(epoch as u64 + 1)),
            ),
        })
    }

    /// Trains on a fixed impression set.
    pub fn train_on(&self, train: &[Impression], validation: &[Impression], seed: u64) -> Result<TrainOutcome> {
        let build = ImpressionBuild {
            impressions: train.to_vec(),
            ..ImpressionBuild::default()
        };
        self.run(seed, validation, |_| build.clone())
    }

    fn run(
        &self,
        seed: u64,
        validation: &[Impression],
        mut epoch_impressions: impl FnMut(usize) -> ImpressionBuild,
    ) -> Result<TrainOutcome> {
        self.config.validate()?;
        self.model
            .validate(self.data.corpus.config.d_max, self.data.corpus.config.n_max)?;
        let cfg = self.config;
        let mut params = self.initial_params(seed);
        let mut velocity = cfg.optimizer.eq(&Optimizer::Momentum).then(|| {
            let mut z = params.clone();
            z.fill(0.0);
            z
        });
        let mut adam = cfg
            .optimizer
            .eq(&Optimizer::Adam)
            .then(|| AdamState::new(params.param_count()));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xba7c_4e5);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let mut log = Vec::with_capacity(cfg.epochs);
        let mut best: Option<(f64, usize, ModelParams)> = None;
        let mut first_mean = None;

        for epoch in 0..cfg.epochs {
            let build = epoch_impressions(epoch);
            if build.impressions.is_empty() {
                return Err(Error::Invalid("no training impressions could be built".into()));
            }
            let (mut total, mut count) = (0.0, 0usize);
            for batch in batches(&build.impressions, cfg.batch_size, &mut rng) {
                let model = Recommender::new(&params, self.data, self.model);
                let (loss, grads) = pool.install(|| batch_gradient(&model, &batch, cfg.threads))?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
                }
                grads.all_finite().map_err(|name| Error::NonFinite(format!("gradient of {name}")))?;
                let scale = 1.0 / batch.len() as f64;
                match (velocity.as_mut(), adam.as_mut()) {
                    (Some(v), _) => {
                        v.visit_mut("", &mut |_, mut t| t *= cfg.momentum);
                        v.scaled_add(scale, &grads);
                        params.scaled_add(-cfg.lr, v);
                    }
                    (None, Some(state)) => state.update(&mut params, &grads, scale, cfg),
                    (None, None) => params.scaled_add(-cfg.lr * scale, &grads),
                }
                cfg.precision.quantize(&mut params);
                total += loss;
                count += batch.len();
            }
            let mean = total / count as f64;
            let initial = *first_mean.get_or_insert(mean);
            if mean > DIVERGENCE_FACTOR * initial {
                return Err(Error::Diverged { loss: mean, initial });
            }
            let valid_auc = if validation.is_empty() {
                None
            } else {
                let model = Recommender::new(&params, self.data, self.model);
                Some(pool.install(|| evaluate(&model, validation, self.eval))?.auc)
            };
            log::info!(
                "epoch {epoch}: loss {total:.4} (mean {mean:.4}) valid auc {}",
                valid_auc.map_or("-".to_string(), |a| format!("{a:.4}"))
            );
            log.push(EpochLog {
                epoch,
                impressions: count,
                loss: total,
                mean_loss: mean,
                valid_auc,
            });
            let score = valid_auc.unwrap_or(f64::NEG_INFINITY);
            let better = match &best {
                None => true,
                Some((b, _, _)) => score > *b || (valid_auc.is_none() && score == *b),
            };
            if better {
                best = Some((score, epoch, params.clone()));
            }
        }
        let (_, best_epoch, params) = best.unwrap_or((f64::NEG_INFINITY, 0, params));
        Ok(TrainOutcome {
            params,
            best_epoch,
            log,
        })
    }
}
