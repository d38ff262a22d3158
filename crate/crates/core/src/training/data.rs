//! Frozen inputs for recommendation training and impression construction.
use std::collections::HashSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_adoption_histogram, Adoption, Corpus, DatasetSplit, NewsIdx, Timestamp, UserHistory, UserId,
    WordEmbeddingTable,
};
use crate::error::{Error, Result};
use crate::influence::InfluenceModel;
use crate::news_encoder::{featurize_adoptions, NewsState, Tables};
use crate::view::select_local_influence;

const SECONDS_PER_DAY: i64 = 86_400;

/// A news item as seen by `target` at time `at`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NewsKey {
    pub news: NewsIdx,
    pub target: UserId,
    pub at: Timestamp,
}

/// Corpus, word vectors and influence embeddings, all read-only.
#[derive(Debug)]
pub struct Dataset<'a> {
    pub corpus: &'a Corpus,
    pub words: &'a WordEmbeddingTable,
    pub influence: &'a InfluenceModel,
    pub view_size: usize,
    influencers: HashSet<UserId>,
    /// `(release time, news)` ascending.
    by_release: Vec<(Timestamp, NewsIdx)>,
    /// Every news item each user ever adopted, sorted.
    adopted: Vec<Vec<NewsIdx>>,
}

impl<'a> Dataset<'a> {
    pub fn new(
        corpus: &'a Corpus,
        words: &'a WordEmbeddingTable,
        influence: &'a InfluenceModel,
        view_size: usize,
    ) -> Result<Self> {
        let n = corpus.graph.node_count();
        if influence.node_count() != n {
            return Err(Error::Config(format!(
                "influence embeddings cover {} users but the graph has {n}",
                influence.node_count()
            )));
        }
        if view_size == 0 {
            return Err(Error::Config("view size must be positive".into()));
        }
        let mut by_release: Vec<_> = corpus
            .articles
            .iter()
            .enumerate()
            .map(|(i, a)| (a.release_time(), i as NewsIdx))
            .collect();
        by_release.sort_unstable();
        let mut adopted = vec![Vec::new(); n];
        for (i, a) in corpus.articles.iter().enumerate() {
            for u in a.cascade.users() {
                adopted[u as usize].push(i as NewsIdx);
            }
        }
        Ok(Dataset {
            corpus,
            words,
            influence,
            view_size,
            influencers: influence.influencers().iter().copied().collect(),
            by_release,
            adopted,
        })
    }

    pub fn tables(&self) -> Tables<'a> {
        Tables {
            words: self.words,
            nodes: self.influence,
        }
    }

    pub fn has_adopted(&self, user: UserId, news: NewsIdx) -> bool {
        self.adopted[user as usize].binary_search(&news).is_ok()
    }

    /// Title, personalized view and adoption features of `key.news` as it
    /// stood at `key.at`, with the target's own adoption hidden.
    pub fn state(&self, key: NewsKey) -> Result<NewsState> {
        let article = self
            .corpus
            .articles
            .get(key.news as usize)
            .ok_or_else(|| Error::Invalid(format!("news index {} out of range", key.news)))?;
        let cfg = &self.corpus.config;
        let snapshot = article.cascade.snapshot(key.at, Some(key.target));
        let v_t: Vec<UserId> = snapshot.users().collect();
        let view = select_local_influence(
            &v_t,
            &self.corpus.graph,
            self.influence,
            &self.influencers,
            key.target,
            self.view_size,
        )?;
        let observe = key.at.max(snapshot.start_time());
        let hist = build_adoption_histogram(&snapshot, observe, cfg.unit_seconds, cfg.d_max)?;
        Ok(NewsState {
            title: article.item.title_tokens.clone(),
            view,
            adoption: featurize_adoptions(&hist, observe, cfg.d_max),
        })
    }

    /// News released in `[at - window, at]` that `user` never adopted.
    pub fn negative_pool(&self, user: UserId, at: Timestamp) -> Vec<NewsIdx> {
        let from = at - self.corpus.config.window_days as i64 * SECONDS_PER_DAY;
        let lo = self.by_release.partition_point(|&(t, _)| t < from);
        let hi = self.by_release.partition_point(|&(t, _)| t <= at);
        self.by_release[lo..hi]
            .iter()
            .map(|&(_, n)| n)
            .filter(|&n| !self.has_adopted(user, n))
            .collect()
    }
}

/// One positive adoption with sampled negatives, scored against the user's
/// history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Impression {
    /// Index into [`Corpus::histories`].
    pub pseudo_user: usize,
    pub user: UserId,
    pub history: Vec<Adoption>,
    pub positive: Adoption,
    pub negatives: Vec<NewsIdx>,
}

impl Impression {
    /// Positive first, then negatives, all seen at the positive's time.
    pub fn candidate_keys(&self) -> impl Iterator<Item = NewsKey> + '_ {
        std::iter::once(self.positive.news)
            .chain(self.negatives.iter().copied())
            .map(|news| NewsKey {
                news,
                target: self.user,
                at: self.positive.time,
            })
    }

    /// History items, each seen when the user adopted it.
    pub fn history_keys(&self) -> impl Iterator<Item = NewsKey> + '_ {
        self.history.iter().map(|a| NewsKey {
            news: a.news,
            target: self.user,
            at: a.time,
        })
    }

    pub fn candidate_count(&self) -> usize {
        1 + self.negatives.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Portion {
    /// Leave-one-out over the training adoptions.
    Train,
    /// Validation adoptions against the training history.
    Validation,
    /// Test adoptions against training and validation history.
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeCount {
    /// Exactly this many; smaller pools skip the impression.
    Exactly(usize),
    /// As many as available up to this bound, at least one.
    UpTo(usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImpressionBuild {
    pub impressions: Vec<Impression>,
    pub skipped_small_pool: usize,
    pub skipped_empty_history: usize,
}

/// Impression positives and histories without negatives.
fn positives(split: &DatasetSplit, portion: Portion) -> Vec<(usize, UserId, Vec<Adoption>, Adoption)> {
    let mut out = Vec::new();
    let merged = |a: &UserHistory, b: &UserHistory| {
        let mut h = a.adoptions.clone();
        h.extend_from_slice(&b.adoptions);
        h
    };
    for (idx, train) in split.train.iter().enumerate() {
        match portion {
            Portion::Train => {
                for k in 0..train.adoptions.len() {
                    let mut history = train.adoptions.clone();
                    let positive = history.remove(k);
                    out.push((idx, train.user_id, history, positive));
                }
            }
            Portion::Validation => {
                for &p in &split.validation[idx].adoptions {
                    out.push((idx, train.user_id, train.adoptions.clone(), p));
                }
            }
            Portion::Test => {
                let history = merged(train, &split.validation[idx]);
                for &p in &split.test[idx].adoptions {
                    out.push((idx, train.user_id, history.clone(), p));
                }
            }
        }
    }
    out
}

/// One impression per positive adoption of `portion`, with negatives drawn
/// uniformly without replacement from [`Dataset::negative_pool`].
pub fn build_impressions(
    data: &Dataset<'_>,
    split: &DatasetSplit,
    portion: Portion,
    count: NegativeCount,
    seed: u64,
) -> ImpressionBuild {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut build = ImpressionBuild::default();
    let s_max = data.corpus.config.s_max;
    for (pseudo_user, user, mut history, positive) in positives(split, portion) {
        if history.is_empty() {
            build.skipped_empty_history += 1;
            continue;
        }
        if history.len() > s_max {
            history.drain(..history.len() - s_max);
        }
        let pool = data.negative_pool(user, positive.time);
        let k = match count {
            NegativeCount::Exactly(k) if pool.len() >= k => k,
            NegativeCount::UpTo(k) if !pool.is_empty() => k.min(pool.len()),
            _ => {
                build.skipped_small_pool += 1;
                continue;
            }
        };
        let negatives = sample(&mut rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
        build.impressions.push(Impression {
            pseudo_user,
            user,
            history,
            positive,
            negatives,
        });
    }
    if build.skipped_small_pool + build.skipped_empty_history > 0 {
        log::warn!(
            "{portion:?} impressions: skipped {} with too few negatives and {} with empty history",
            build.skipped_small_pool,
            build.skipped_empty_history
        );
    }
    build
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Cascade, CascadeEvent, CorpusConfig, FollowerGraph, NewsItem};

    const DAY: i64 = SECONDS_PER_DAY;

    /// User 0 adopts news 0..20 on days 1..=20; user 1 initiates everything;
    /// `extra` further items, released before day 1, are never touched by
    /// user 0.
    fn corpus(extra: usize) -> (Corpus, WordEmbeddingTable, InfluenceModel) {
        let words = WordEmbeddingTable::from_pairs(2, [("w".to_string(), vec![1.0, 0.0])]).unwrap();
        let mut cascades = Vec::new();
        let mut news = Vec::new();
        for i in 0..20 + extra {
            let t = if i < 20 { (i as i64 + 1) * DAY } else { 1000 + 200 * i as i64 };
            let mut ev = vec![CascadeEvent { user: 1, time: t - 100 }];
            if i < 20 {
                ev.push(CascadeEvent { user: 0, time: t });
            }
            ev.push(CascadeEvent { user: 2, time: t + 50 });
            cascades.push(Cascade::new(i as u64, ev).unwrap());
            news.push(NewsItem {
                news_id: i as u64,
                title_tokens: words.encode_title("w", 3),
                publish_time: t,
            });
        }
        let cfg = CorpusConfig {
            n_max: 3,
            d_max: 4,
            s_max: 20,
            ..CorpusConfig::default()
        };
        let (c, _) = Corpus::assemble(FollowerGraph::with_nodes(3), cascades, news, cfg).unwrap();
        let model = InfluenceModel::zeros(3, vec![1], 2);
        (c, words, model)
    }

    fn whole_train(c: &Corpus) -> DatasetSplit {
        let empty = |h: &UserHistory| UserHistory {
            adoptions: Vec::new(),
            ..h.clone()
        };
        DatasetSplit {
            train: c.histories.clone(),
            validation: c.histories.iter().map(empty).collect(),
            test: c.histories.iter().map(empty).collect(),
            test_cut: i64::MAX,
            validation_cut: i64::MAX,
        }
    }

    #[test]
    fn twenty_adoptions_give_twenty_impressions() {
        let (c, w, m) = corpus(10);
        let data = Dataset::new(&c, &w, &m, 3).unwrap();
        let split = whole_train(&c);
        let build = build_impressions(&data, &split, Portion::Train, NegativeCount::Exactly(4), 1);
        let mine: Vec<_> = build.impressions.iter().filter(|i| i.user == 0).collect();
        assert_eq!(mine.len(), 20);
        for imp in mine {
            assert_eq!(imp.candidate_count(), 5);
            assert_eq!(imp.history.len(), 19);
            for &n in &imp.negatives {
                assert!(n >= 20, "user 0 adopted {n}");
                assert!(c.articles[n as usize].release_time() <= imp.positive.time);
            }
            let mut uniq = imp.negatives.clone();
            uniq.sort();
            uniq.dedup();
            assert_eq!(uniq.len(), 4);
        }
    }

    #[test]
    fn small_pool_is_skipped() {
        let (c, w, m) = corpus(3);
        let data = Dataset::new(&c, &w, &m, 3).unwrap();
        let split = whole_train(&c);
        let b = build_impressions(&data, &split, Portion::Train, NegativeCount::Exactly(4), 1);
        assert!(b.impressions.iter().all(|i| i.user != 0));
        assert!(b.skipped_small_pool >= 20);
        let b = build_impressions(&data, &split, Portion::Train, NegativeCount::UpTo(10), 1);
        assert!(b.impressions.iter().any(|i| i.user == 0 && i.negatives.len() <= 3));
    }

    #[test]
    fn snapshot_hides_later_events_and_the_target() {
        let (c, w, m) = corpus(0);
        let data = Dataset::new(&c, &w, &m, 3).unwrap();
        let t = DAY;
        let s = data
            .state(NewsKey {
                news: 0,
                target: 0,
                at: t,
            })
            .unwrap();
        // initiator only: user 0 is the target, user 2 adopts later
        assert_eq!(s.view.real_nodes(), &[1]);
        let s = data
            .state(NewsKey {
                news: 0,
                target: 2,
                at: t + 50,
            })
            .unwrap();
        assert_eq!(s.view.real_length, 2);
        assert!(!s.view.real_nodes().contains(&2));
    }

    #[test]
    fn impressions_are_seeded() {
        let (c, w, m) = corpus(10);
        let data = Dataset::new(&c, &w, &m, 3).unwrap();
        let split = whole_train(&c);
        let a = build_impressions(&data, &split, Portion::Train, NegativeCount::Exactly(4), 7);
        let b = build_impressions(&data, &split, Portion::Train, NegativeCount::Exactly(4), 7);
        assert_eq!(a, b);
    }
}
