//! Diffusion- and influence-aware news recommendation.
//!
//! Cascades and follower graphs are turned into per-user news views,
//! encoded together with titles and adoption curves, and matched against
//! user histories by a bidirectional recurrent user encoder.
pub mod archive;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod influence;
pub mod news_encoder;
pub mod nn;
pub mod pipeline;
pub mod synthetic;
pub mod training;
pub mod user_encoder;
pub mod view;

pub use archive::TensorArchive;
pub use corpus::{Cascade, Corpus, CorpusConfig, DatasetSplit, FollowerGraph, UserId, WordEmbeddingTable};
pub use error::{Error, Result};
pub use eval::{evaluate, EvalConfig, MetricReport};
pub use influence::{train_influence, InfluenceConfig, InfluenceModel};
pub use news_encoder::{Channels, NewsEncoder, NewsEncoding};
pub use training::{ModelConfig, ModelParams, Precision, Recommender, TrainConfig, Trainer};
pub use view::{select_local_influence, PersonalizedView};
