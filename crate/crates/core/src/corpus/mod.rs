//! Ingestion of follower graphs, cascades and news titles into a normalized
//! corpus of articles and windowed pseudo-user histories.
mod cascade;
mod graph;
mod histogram;
mod history;
mod news;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use cascade::{load_cascades, parse_cascades, Cascade, CascadeEvent, CascadeLoad, Timestamp};
pub use graph::{load_follower_graph, parse_follower_graph, FollowerGraph, UserId};
pub use histogram::{build_adoption_histogram, AdoptionHistogram};
pub use history::{
    collect_histories, count_adoptions, split_timeline, window_users, Adoption, DatasetSplit,
    NewsIdx, UserHistory,
};
pub use news::{
    load_news_titles, load_word_vectors, parse_news_titles, parse_word_vectors, NewsItem,
    TokenId, WordEmbeddingTable, OOV_TOKEN, PAD_TOKEN,
};

use crate::archive::{NamedTensor, TensorArchive, TensorData};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub window_days: u32,
    pub s_max: usize,
    pub n_max: usize,
    pub unit_seconds: i64,
    pub d_max: usize,
    pub min_history: usize,
    pub train_frac: f64,
    pub valid_frac: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            window_days: 90,
            s_max: 20,
            n_max: 20,
            unit_seconds: 3600,
            d_max: 120,
            min_history: 1,
            train_frac: 0.85,
            valid_frac: 0.10,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window_days", self.window_days as i64),
            ("s_max", self.s_max as i64),
            ("n_max", self.n_max as i64),
            ("unit_seconds", self.unit_seconds),
            ("d_max", self.d_max as i64),
        ];
        for (name, v) in positive {
            if v <= 0 {
                return Err(Error::Config(format!("corpus.{name} must be positive")));
            }
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::Config("corpus.train_frac must be in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.valid_frac) {
            return Err(Error::Config("corpus.valid_frac must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// A news item joined with its cascade. Its position in
/// [`Corpus::articles`] is its [`NewsIdx`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub item: NewsItem,
    pub cascade: Cascade,
}

impl Article {
    /// Time the item became available: its first adoption.
    pub fn release_time(&self) -> Timestamp {
        self.cascade.start_time()
    }
}

/// Counts of records discarded while assembling a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub cascades_without_title: usize,
    pub titles_without_cascade: usize,
    pub duplicate_cascades: usize,
    pub short_histories: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub graph: FollowerGraph,
    pub articles: Vec<Article>,
    /// Windowed pseudo-users, capped at `s_max` adoptions each.
    pub histories: Vec<UserHistory>,
}

/// Summary written next to a normalized corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub user_count: usize,
    pub edge_count: usize,
    pub news_count: usize,
    pub pseudo_user_count: usize,
    pub adoption_count: usize,
    pub median_chain_length: f64,
    pub max_chain_length: usize,
}

impl Corpus {
    /// Joins cascades with titles by news id, then windows and filters the
    /// resulting user histories.
    pub fn assemble(
        graph: FollowerGraph,
        cascades: Vec<Cascade>,
        news: Vec<NewsItem>,
        config: CorpusConfig,
    ) -> Result<(Corpus, AssemblyReport)> {
        config.validate()?;
        let mut report = AssemblyReport::default();
        let mut titles: HashMap<u64, NewsItem> = HashMap::with_capacity(news.len());
        for item in news {
            titles.entry(item.news_id).or_insert(item);
        }
        let mut articles = Vec::with_capacity(cascades.len());
        let mut seen = std::collections::HashSet::new();
        for cascade in cascades {
            if !seen.insert(cascade.news_id) {
                report.duplicate_cascades += 1;
                continue;
            }
            match titles.remove(&cascade.news_id) {
                Some(item) => articles.push(Article { item, cascade }),
                None => report.cascades_without_title += 1,
            }
        }
        report.titles_without_cascade = titles.len();

        let chains: Vec<Cascade> = articles.iter().map(|a| a.cascade.clone()).collect();
        let raw = collect_histories(&chains);
        let min_history = config.min_history.max(1);
        let windowed = window_users(&raw, config.window_days, usize::MAX);
        let before = windowed.len();
        let histories: Vec<UserHistory> = windowed
            .into_iter()
            .filter(|h| h.len() >= min_history)
            .map(|mut h| {
                if h.adoptions.len() > config.s_max {
                    h.adoptions.drain(..h.adoptions.len() - config.s_max);
                }
                h
            })
            .collect();
        report.short_histories = before - histories.len();
        Ok((
            Corpus {
                config,
                graph,
                articles,
                histories,
            },
            report,
        ))
    }

    pub fn cascades(&self) -> impl Iterator<Item = &Cascade> {
        self.articles.iter().map(|a| &a.cascade)
    }

    pub fn stats(&self) -> CorpusStats {
        let mut lengths: Vec<usize> = self.articles.iter().map(|a| a.cascade.len()).collect();
        lengths.sort_unstable();
        let median = match lengths.len() {
            0 => 0.0,
            n if n % 2 == 1 => lengths[n / 2] as f64,
            n => (lengths[n / 2 - 1] + lengths[n / 2]) as f64 / 2.0,
        };
        CorpusStats {
            user_count: self.graph.node_count(),
            edge_count: self.graph.edge_count(),
            news_count: self.articles.len(),
            pseudo_user_count: self.histories.len(),
            adoption_count: self.histories.iter().map(UserHistory::len).sum(),
            median_chain_length: median,
            max_chain_length: lengths.last().copied().unwrap_or(0),
        }
    }

    pub fn split(&self) -> Result<DatasetSplit> {
        split_timeline(&self.histories, self.config.train_frac, self.config.valid_frac)
    }

    /// Writes `corpus.json` and `words.ntar` into `dir`.
    pub fn save(&self, words: &WordEmbeddingTable, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stored = StoredCorpus {
            corpus: self.clone(),
            tokens: words.tokens().to_vec(),
        };
        let json = serde_json::to_vec(&stored).map_err(|e| Error::Invalid(e.to_string()))?;
        let path = dir.join(CORPUS_FILE);
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        let v = words.vectors();
        let mut archive = TensorArchive::new();
        archive.push(NamedTensor::new(
            "words.vectors",
            vec![v.nrows(), v.ncols()],
            TensorData::F64(v.iter().copied().collect()),
        ));
        archive.save(dir.join(WORDS_FILE))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<(Corpus, WordEmbeddingTable)> {
        let dir = dir.as_ref();
        let path = dir.join(CORPUS_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let stored: StoredCorpus =
            serde_json::from_slice(&bytes).map_err(|e| Error::parse(&path, e.line(), e.to_string()))?;
        let archive = TensorArchive::load(dir.join(WORDS_FILE))?;
        let t = archive
            .get("words.vectors")
            .ok_or_else(|| Error::Archive("missing words.vectors".into()))?;
        if t.shape.len() != 2 {
            return Err(Error::Archive("words.vectors must be a matrix".into()));
        }
        let vectors = Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data.to_f64())
            .map_err(|e| Error::Archive(e.to_string()))?;
        let words = WordEmbeddingTable::from_parts(stored.tokens, vectors)?;
        Ok((stored.corpus, words))
    }
}

pub const CORPUS_FILE: &str = "corpus.json";
pub const WORDS_FILE: &str = "words.ntar";

#[derive(Serialize, Deserialize)]
struct StoredCorpus {
    corpus: Corpus,
    tokens: Vec<String>,
}
