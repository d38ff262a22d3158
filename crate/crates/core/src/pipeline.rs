//! End-to-end helpers shared by the command line and tests.
use crate::corpus::{Cascade, Corpus, DatasetSplit};
use crate::error::Result;
use crate::influence::{train_influence, InfluenceConfig, InfluenceTraining};

/// Cascades as observed before the test period, so influence embeddings
/// never see test adoptions.
pub fn influence_cascades(corpus: &Corpus, split: &DatasetSplit) -> Vec<Cascade> {
    corpus
        .cascades()
        .filter_map(|c| c.truncated_before(split.test_cut))
        .collect()
}

pub fn fit_influence(corpus: &Corpus, split: &DatasetSplit, config: &InfluenceConfig, seed: u64) -> Result<InfluenceTraining> {
    train_influence(&influence_cascades(corpus, split), corpus.graph.node_count(), config, seed)
}
