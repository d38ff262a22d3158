#![allow(dead_code)]
use diffrec_core::corpus::{Corpus, CorpusConfig, DatasetSplit, WordEmbeddingTable};
use diffrec_core::influence::{InfluenceConfig, InfluenceModel};
use diffrec_core::pipeline::fit_influence;
use diffrec_core::synthetic::{planted_preference, PlantedConfig, SyntheticCorpus};
use diffrec_core::training::{ModelConfig, Precision, TrainConfig};

/// A corpus with its frozen tables, ready for `Dataset::new`.
pub struct Fixture {
    pub raw: SyntheticCorpus,
    pub corpus: Corpus,
    pub words: WordEmbeddingTable,
    pub influence: InfluenceModel,
    pub split: DatasetSplit,
}

pub fn fixture(planted: &PlantedConfig, corpus: CorpusConfig, influence: &InfluenceConfig, seed: u64) -> Fixture {
    let raw = planted_preference(planted, seed).unwrap();
    let (corpus, _) = Corpus::assemble(raw.graph.clone(), raw.cascades.clone(), raw.news.clone(), corpus).unwrap();
    let split = corpus.split().unwrap();
    let influence = fit_influence(&corpus, &split, influence, seed).unwrap().model;
    Fixture {
        words: raw.words.clone(),
        raw,
        corpus,
        influence,
        split,
    }
}

/// g=6, u=4, gamma=3, l=2, m=3, s=3.
pub fn toy(seed: u64) -> (Fixture, ModelConfig) {
    toy_sized(16, seed)
}

pub fn toy_sized(users: usize, seed: u64) -> (Fixture, ModelConfig) {
    let planted = PlantedConfig {
        users,
        news: 40,
        days: 20,
        adoptions_per_user: 6,
        title_len: 4,
        vocab: 20,
        word_dim: 4,
        followees: 3,
        ..PlantedConfig::default()
    };
    let corpus = CorpusConfig {
        s_max: 3,
        n_max: 4,
        d_max: 6,
        ..CorpusConfig::default()
    };
    let influence = InfluenceConfig {
        dim: 4,
        epochs: 3,
        ..InfluenceConfig::default()
    };
    let model = ModelConfig {
        fused: 6,
        filters: 3,
        filter_width: 2,
        lstm_hidden: 4,
        view_size: 3,
        ..ModelConfig::default()
    };
    (fixture(&planted, corpus, &influence, seed), model)
}

pub fn toy_training() -> TrainConfig {
    TrainConfig {
        negatives: 2,
        epochs: 2,
        batch_size: 4,
        precision: Precision::Double,
        ..TrainConfig::default()
    }
}
