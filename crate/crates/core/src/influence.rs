//! Initiator/reposter embeddings learned from cascades.
//!
//! Each cascade contributes (initiator, reposter) context pairs. Reposters
//! are sampled with probability inversely proportional to how long after
//! the initiator they adopted, and a softmax over all users scores
//! `z_j = O[initiator] . T[j] + b[j]`.
use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::distributions::{Distribution, Uniform, WeightedIndex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{NamedTensor, TensorArchive, TensorData};
use crate::corpus::{Cascade, UserId};
use crate::error::{Error, Result};
use crate::nn::math::{log_sum_exp, softmax_in_place};

/// Seconds added to every elapsed time so simultaneous reposts stay finite.
pub const ELAPSED_EPSILON: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceModel {
    /// `O`: one row per influencer.
    pub initiator: Array2<f64>,
    /// `T`: one row per user.
    pub reposter: Array2<f64>,
    /// One bias per user.
    pub bias: Array1<f64>,
    influencers: Vec<UserId>,
    rows: HashMap<UserId, usize>,
}

impl InfluenceModel {
    pub fn zeros(node_count: usize, influencers: Vec<UserId>, dim: usize) -> Self {
        let rows = influencers
            .iter()
            .enumerate()
            .map(|(r, &u)| (u, r))
            .collect();
        InfluenceModel {
            initiator: Array2::zeros((influencers.len(), dim)),
            reposter: Array2::zeros((node_count, dim)),
            bias: Array1::zeros(node_count),
            influencers,
            rows,
        }
    }

    /// Entries uniform in `[-init_scale / dim, init_scale / dim]`.
    pub fn random(
        node_count: usize,
        influencers: Vec<UserId>,
        dim: usize,
        init_scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut m = Self::zeros(node_count, influencers, dim);
        let r = init_scale / dim as f64;
        if r > 0.0 {
            let dist = Uniform::new_inclusive(-r, r);
            m.initiator.mapv_inplace(|_| dist.sample(rng));
            m.reposter.mapv_inplace(|_| dist.sample(rng));
        }
        m
    }

    /// Sets the reposter embeddings directly, with no influencers. Useful for
    /// assembling models whose embeddings come from elsewhere.
    pub fn from_reposter_embeddings(reposter: Array2<f64>) -> Self {
        let mut m = Self::zeros(reposter.nrows(), Vec::new(), reposter.ncols());
        m.reposter = reposter;
        m
    }

    pub fn dim(&self) -> usize {
        self.reposter.ncols()
    }

    pub fn node_count(&self) -> usize {
        self.reposter.nrows()
    }

    pub fn influencers(&self) -> &[UserId] {
        &self.influencers
    }

    pub fn influencer_row(&self, user: UserId) -> Option<usize> {
        self.rows.get(&user).copied()
    }

    pub fn is_influencer(&self, user: UserId) -> bool {
        self.rows.contains_key(&user)
    }

    pub fn reposter_embedding(&self, user: UserId) -> ArrayView1<'_, f64> {
        self.reposter.row(user as usize)
    }

    pub fn to_archive(&self) -> TensorArchive {
        let f32s = |it: &mut dyn Iterator<Item = f64>| TensorData::F32(it.map(|x| x as f32).collect());
        let mut a = TensorArchive::new();
        a.push(NamedTensor::new(
            "influence.initiator",
            vec![self.initiator.nrows(), self.dim()],
            f32s(&mut self.initiator.iter().copied()),
        ));
        a.push(NamedTensor::new(
            "influence.reposter",
            vec![self.node_count(), self.dim()],
            f32s(&mut self.reposter.iter().copied()),
        ));
        a.push(NamedTensor::new(
            "influence.bias",
            vec![self.node_count()],
            f32s(&mut self.bias.iter().copied()),
        ));
        a.push(NamedTensor::new(
            "influence.influencers",
            vec![self.influencers.len().max(1)],
            TensorData::U32(if self.influencers.is_empty() {
                vec![u32::MAX]
            } else {
                self.influencers.clone()
            }),
        ));
        a
    }

    pub fn from_archive(a: &TensorArchive) -> Result<Self> {
        let get = |name: &str| {
            a.get(name)
                .ok_or_else(|| Error::Archive(format!("missing tensor {name}")))
        };
        let matrix = |name: &str| -> Result<Array2<f64>> {
            let t = get(name)?;
            if t.shape.len() != 2 {
                return Err(Error::Archive(format!("{name} must be a matrix")));
            }
            Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data.to_f64())
                .map_err(|e| Error::Archive(e.to_string()))
        };
        let initiator = matrix("influence.initiator")?;
        let reposter = matrix("influence.reposter")?;
        let bias = Array1::from(get("influence.bias")?.data.to_f64());
        let influencers: Vec<UserId> = match &get("influence.influencers")?.data {
            TensorData::U32(v) => v.iter().copied().filter(|&u| u != u32::MAX).collect(),
            _ => return Err(Error::Archive("influence.influencers must be u32".into())),
        };
        if initiator.nrows() != influencers.len()
            || initiator.ncols() != reposter.ncols()
            || bias.len() != reposter.nrows()
            || influencers.iter().any(|&u| u as usize >= reposter.nrows())
        {
            return Err(Error::Archive("inconsistent influence tensor shapes".into()));
        }
        let mut m = Self::zeros(reposter.nrows(), influencers, reposter.ncols());
        m.initiator = initiator;
        m.reposter = reposter;
        m.bias = bias;
        Ok(m)
    }
}

/// A sampled (initiator, reposter) context with the reposter's sampling
/// probability within its cascade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextPair {
    pub initiator: UserId,
    pub reposter: UserId,
    pub weight: f64,
}

/// Every reposter of `cascade` with its sampling probability
/// `(t_j - t_0 + eps)^-1 / sum_i (t_i - t_0 + eps)^-1`.
pub fn context_distribution(cascade: &Cascade) -> Vec<ContextPair> {
    let t0 = cascade.start_time();
    let inv: Vec<f64> = cascade
        .reposters()
        .iter()
        .map(|e| 1.0 / ((e.time - t0) as f64 + ELAPSED_EPSILON))
        .collect();
    let total: f64 = inv.iter().sum();
    cascade
        .reposters()
        .iter()
        .zip(inv)
        .map(|(e, w)| ContextPair {
            initiator: cascade.initiator(),
            reposter: e.user,
            weight: w / total,
        })
        .collect()
}

fn draw_context(cascade: &Cascade, k: usize, rng: &mut ChaCha8Rng) -> Vec<ContextPair> {
    let dist = context_distribution(cascade);
    if dist.is_empty() || k == 0 {
        return Vec::new();
    }
    let index = WeightedIndex::new(dist.iter().map(|p| p.weight)).expect("weights are positive");
    (0..k).map(|_| dist[index.sample(rng)]).collect()
}

/// Draws `k` reposters with replacement. Deterministic for a given seed; a
/// cascade without reposters yields nothing.
pub fn sample_context(cascade: &Cascade, k: usize, seed: u64) -> Vec<ContextPair> {
    draw_context(cascade, k, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn logits(model: &InfluenceModel, row: usize) -> Array1<f64> {
    model.reposter.dot(&model.initiator.row(row)) + &model.bias
}

/// Softmax over all users of `O[initiator] . T[j] + b[j]`.
pub fn forward_scores(model: &InfluenceModel, initiator: UserId) -> Result<Array1<f64>> {
    let row = model
        .influencer_row(initiator)
        .ok_or(Error::NotAnInfluencer(initiator))?;
    let mut z = logits(model, row);
    softmax_in_place(z.view_mut(), None);
    Ok(z)
}

pub fn reposter_similarity(model: &InfluenceModel, i: UserId, j: UserId) -> f64 {
    model.reposter_embedding(i).dot(&model.reposter_embedding(j))
}

/// Gradients of one pair's cross-entropy. Only the initiator's row of `O`
/// receives gradient.
#[derive(Debug, Clone)]
pub struct PairGradient {
    pub loss: f64,
    pub initiator_row: usize,
    pub d_initiator: Array1<f64>,
    pub d_reposter: Array2<f64>,
    pub d_bias: Array1<f64>,
}

/// `-log softmax(z)[target]` and its exact gradient, full softmax.
pub fn pair_gradient(model: &InfluenceModel, initiator_row: usize, target: UserId) -> PairGradient {
    let z = logits(model, initiator_row);
    let lse = log_sum_exp(z.view(), None);
    let loss = lse - z[target as usize];
    let mut dz = z.mapv(|v| (v - lse).exp());
    dz[target as usize] -= 1.0;
    let o = model.initiator.row(initiator_row);
    let d_initiator = model.reposter.t().dot(&dz);
    let d_reposter = dz
        .view()
        .insert_axis(Axis(1))
        .dot(&o.insert_axis(Axis(0)));
    PairGradient {
        loss,
        initiator_row,
        d_initiator,
        d_reposter,
        d_bias: dz,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfluenceConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Reposters drawn per cascade per epoch; defaults to
    /// `min(#reposters, 10)`.
    pub samples_per_cascade: Option<usize>,
    pub init_scale: f64,
    /// When set, each step normalizes over the target plus this many
    /// uniformly drawn users instead of all users.
    pub sampled_softmax: Option<usize>,
}

impl Default for InfluenceConfig {
    fn default() -> Self {
        InfluenceConfig {
            dim: 50,
            epochs: 20,
            lr: 0.05,
            samples_per_cascade: None,
            init_scale: 0.5,
            sampled_softmax: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InfluenceTraining {
    pub model: InfluenceModel,
    /// Mean pair loss of every epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
}

/// Plain SGD over sampled context pairs. Single-threaded and deterministic
/// for a given seed.
pub fn train_influence(
    cascades: &[Cascade],
    node_count: usize,
    config: &InfluenceConfig,
    seed: u64,
) -> Result<InfluenceTraining> {
    if config.dim == 0 {
        return Err(Error::Config("influence.dim must be positive".into()));
    }
    if !(config.lr > 0.0) {
        return Err(Error::Config("influence.lr must be positive".into()));
    }
    let usable: Vec<&Cascade> = cascades.iter().filter(|c| c.len() > 1).collect();
    if usable.is_empty() {
        return Err(Error::Invalid("no cascade has a reposter".into()));
    }
    for c in &usable {
        if let Some(u) = c.users().find(|&u| u as usize >= node_count) {
            return Err(Error::UnknownUser(u));
        }
    }
    let mut influencers: Vec<UserId> = usable.iter().map(|c| c.initiator()).collect();
    influencers.sort_unstable();
    influencers.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = InfluenceModel::random(node_count, influencers, config.dim, config.init_scale, &mut rng);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut pairs) = (0.0, 0usize);
        for &ci in &order {
            let cascade = usable[ci];
            let k = config
                .samples_per_cascade
                .unwrap_or_else(|| cascade.reposters().len().min(10));
            let row = model.influencer_row(cascade.initiator()).expect("initiators are indexed");
            for pair in draw_context(cascade, k, &mut rng) {
                let loss = match config.sampled_softmax {
                    None => full_softmax_step(&mut model, row, pair.reposter, config.lr),
                    Some(n) => sampled_softmax_step(&mut model, row, pair.reposter, n, config.lr, &mut rng),
                };
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "influence loss at epoch {epoch} (initiator {}, reposter {}); lower influence.lr",
                        pair.initiator, pair.reposter
                    )));
                }
                total += loss;
                pairs += 1;
            }
        }
        let mean = total / pairs.max(1) as f64;
        log::debug!("influence epoch {epoch}: loss {mean:.5}");
        epoch_losses.push(mean);
    }
    Ok(InfluenceTraining {
        model,
        epoch_losses,
    })
}

fn full_softmax_step(model: &mut InfluenceModel, row: usize, target: UserId, lr: f64) -> f64 {
    let g = pair_gradient(model, row, target);
    model.initiator.row_mut(row).scaled_add(-lr, &g.d_initiator);
    model.reposter.scaled_add(-lr, &g.d_reposter);
    model.bias.scaled_add(-lr, &g.d_bias);
    g.loss
}

fn sampled_softmax_step(
    model: &mut InfluenceModel,
    row: usize,
    target: UserId,
    negatives: usize,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let users = Uniform::new(0, model.node_count() as UserId);
    let mut cand = Vec::with_capacity(negatives + 1);
    cand.push(target);
    while cand.len() < negatives + 1 && model.node_count() > 1 {
        let u = users.sample(rng);
        if u != target {
            cand.push(u);
        }
    }
    let o = model.initiator.row(row).to_owned();
    let z: Array1<f64> = cand
        .iter()
        .map(|&u| o.dot(&model.reposter.row(u as usize)) + model.bias[u as usize])
        .collect();
    let lse = log_sum_exp(z.view(), None);
    let loss = lse - z[0];
    let mut d_o = Array1::zeros(o.len());
    for (i, &u) in cand.iter().enumerate() {
        let dz = (z[i] - lse).exp() - if i == 0 { 1.0 } else { 0.0 };
        d_o.scaled_add(dz, &model.reposter.row(u as usize));
        model.reposter.row_mut(u as usize).scaled_add(-lr * dz, &o);
        model.bias[u as usize] -= lr * dz;
    }
    model.initiator.row_mut(row).scaled_add(-lr, &d_o);
    loss
}
