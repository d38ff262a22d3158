//! Ranking metrics over impressions, history-length breakdowns, and
//! attention export.
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::{Impression, Recommender};

/// History-length groups: impressions whose history has more than `n` items.
pub const HISTORY_GROUPS: [usize; 4] = [5, 10, 15, 20];

/// Fraction of negatives the positive beats, ties counted one half.
pub fn auc(scores: &[f64], positive: usize) -> Result<f64> {
    if scores.len() < 2 || positive >= scores.len() {
        return Err(Error::Invalid("AUC needs a positive and at least one negative".into()));
    }
    let p = scores[positive];
    let mut wins = 0.0;
    for (i, &s) in scores.iter().enumerate() {
        if i != positive {
            wins += if p > s {
                1.0
            } else if p == s {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(wins / (scores.len() - 1) as f64)
}

/// 1-based rank with ties resolved against the positive.
pub fn rank_of_positive(scores: &[f64], positive: usize) -> usize {
    let p = scores[positive];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| i != positive && s >= p)
        .count()
}

pub fn mrr(rank: usize) -> f64 {
    1.0 / rank as f64
}

pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / (1.0 + rank as f64).log2()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedImpressionResult {
    pub scores: Vec<f64>,
    pub positive_index: usize,
    pub rank_of_positive: usize,
}

impl RankedImpressionResult {
    pub fn new(scores: Vec<f64>, positive_index: usize) -> Self {
        let rank_of_positive = rank_of_positive(&scores, positive_index);
        RankedImpressionResult {
            scores,
            positive_index,
            rank_of_positive,
        }
    }

    pub fn auc(&self) -> Result<f64> {
        auc(&self.scores, self.positive_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub impressions: usize,
    pub auc: Option<f64>,
    pub mrr: Option<f64>,
    pub ndcg5: Option<f64>,
    pub ndcg10: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub impressions: usize,
    pub auc: f64,
    pub mrr: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    /// Pooled AUC over all positive/negative pairs, when requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub global_auc: Option<f64>,
    /// Keyed `">5"`, `">10"`, `">15"`, `">20"`.
    pub groups: BTreeMap<String, GroupMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Upper bound on negatives per test impression.
    pub max_negatives: usize,
    pub global_auc: bool,
    /// News rows per user in the attention dump.
    pub attention_per_user: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            max_negatives: 10,
            global_auc: false,
            attention_per_user: 5,
        }
    }
}

/// Scores every candidate of an impression, positive first.
pub trait ImpressionScorer: Sync {
    fn score(&self, impression: &Impression) -> Result<Vec<f64>>;
}

impl ImpressionScorer for Recommender<'_> {
    fn score(&self, impression: &Impression) -> Result<Vec<f64>> {
        Ok(self.impression(impression)?.scores)
    }
}

#[derive(Default)]
struct Accumulator {
    n: usize,
    auc: f64,
    mrr: f64,
    ndcg5: f64,
    ndcg10: f64,
}

impl Accumulator {
    fn add(&mut self, r: &RankedImpressionResult) -> Result<()> {
        self.n += 1;
        self.auc += r.auc()?;
        self.mrr += mrr(r.rank_of_positive);
        self.ndcg5 += ndcg_at_k(r.rank_of_positive, 5);
        self.ndcg10 += ndcg_at_k(r.rank_of_positive, 10);
        Ok(())
    }

    fn mean(&self, v: f64) -> Option<f64> {
        (self.n > 0).then(|| v / self.n as f64)
    }

    fn group(&self) -> GroupMetrics {
        GroupMetrics {
            impressions: self.n,
            auc: self.mean(self.auc),
            mrr: self.mean(self.mrr),
            ndcg5: self.mean(self.ndcg5),
            ndcg10: self.mean(self.ndcg10),
        }
    }
}

/// Pooled AUC: probability a positive from any impression outscores a
/// negative from any impression.
pub fn pooled_auc(results: &[RankedImpressionResult]) -> f64 {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for r in results {
        for (i, &s) in r.scores.iter().enumerate() {
            if i == r.positive_index {
                pos.push(s);
            } else {
                neg.push(s);
            }
        }
    }
    neg.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for p in &pos {
        let below = neg.partition_point(|n| n < p);
        let not_above = neg.partition_point(|n| n <= p);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    wins / (pos.len() as f64 * neg.len() as f64)
}

/// Scores all impressions (in parallel when run inside a multi-threaded
/// pool) and averages metrics per impression in input order.
pub fn evaluate(scorer: &dyn ImpressionScorer, impressions: &[Impression], config: &EvalConfig) -> Result<MetricReport> {
    if impressions.is_empty() {
        return Err(Error::Invalid("no impressions to evaluate".into()));
    }
    let results: Vec<RankedImpressionResult> = impressions
        .par_iter()
        .map(|imp| Ok(RankedImpressionResult::new(scorer.score(imp)?, 0)))
        .collect::<Result<_>>()?;
    let mut all = Accumulator::default();
    let mut groups: Vec<Accumulator> = HISTORY_GROUPS.iter().map(|_| Accumulator::default()).collect();
    for (imp, r) in impressions.iter().zip(&results) {
        all.add(r)?;
        for (acc, &n) in groups.iter_mut().zip(&HISTORY_GROUPS) {
            if imp.history.len() > n {
                acc.add(r)?;
            }
        }
    }
    let g = all.group();
    Ok(MetricReport {
        impressions: all.n,
        auc: g.auc.unwrap_or(0.0),
        mrr: g.mrr.unwrap_or(0.0),
        ndcg5: g.ndcg5.unwrap_or(0.0),
        ndcg10: g.ndcg10.unwrap_or(0.0),
        global_auc: config.global_auc.then(|| pooled_auc(&results)),
        groups: HISTORY_GROUPS
            .iter()
            .zip(&groups)
            .map(|(n, acc)| (format!(">{n}"), acc.group()))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRow {
    pub user: u64,
    pub pseudo_user: usize,
    pub news: u64,
    pub time: i64,
    pub view_weights: [f64; 3],
    pub node_weights: Vec<f64>,
}

/// Writes one JSON line per (user, news) pair: the positive of up to
/// `per_user` impressions of each pseudo-user, encoded for that user.
pub fn dump_attention(model: &Recommender<'_>, impressions: &[Impression], per_user: usize, out: &mut dyn Write) -> Result<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    let mut rows = 0;
    let corpus = model.data.corpus;
    for imp in impressions {
        let c = counts.entry(imp.pseudo_user).or_insert(0);
        if *c >= per_user || !seen.insert((imp.pseudo_user, imp.positive.news)) {
            continue;
        }
        *c += 1;
        let key = imp.candidate_keys().next().expect("positive");
        let enc = model.encode_news(key)?;
        let row = AttentionRow {
            user: corpus.graph.external_id(imp.user).unwrap_or(imp.user as u64),
            pseudo_user: imp.pseudo_user,
            news: corpus.articles[imp.positive.news as usize].item.news_id,
            time: imp.positive.time,
            view_weights: enc.view_weights,
            node_weights: enc.node_weights.to_vec(),
        };
        let line = serde_json::to_string(&row).map_err(|e| Error::Invalid(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io("attention dump", e))?;
        rows += 1;
    }
    Ok(rows)
}
