//! Configuration file with dotted-key overrides.
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use diffrec_core::corpus::CorpusConfig;
use diffrec_core::eval::EvalConfig;
use diffrec_core::influence::InfluenceConfig;
use diffrec_core::training::{ModelConfig, TrainConfig};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Follower graph, one `follower followee` pair per line.
    pub graph: Option<PathBuf>,
    /// JSON-lines cascades.
    pub cascades: Option<PathBuf>,
    /// `news_id<TAB>publish_time<TAB>title` lines.
    pub news: Option<PathBuf>,
    /// Word vectors in text format.
    pub words: Option<PathBuf>,
    /// Directory for every artifact.
    pub output: PathBuf,
    /// Checkpoint to evaluate; defaults to the one `train` writes.
    pub checkpoint: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            graph: None,
            cascades: None,
            news: None,
            words: None,
            output: PathBuf::from("out"),
            checkpoint: None,
        }
    }
}

impl Paths {
    pub fn corpus_dir(&self) -> PathBuf {
        self.output.join("corpus")
    }

    pub fn stats(&self) -> PathBuf {
        self.output.join("stats.json")
    }

    pub fn influence(&self) -> PathBuf {
        self.output.join("influence.ntar")
    }

    pub fn influence_loss(&self) -> PathBuf {
        self.output.join("influence_loss.csv")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.output.join("checkpoint.ntar"))
    }

    pub fn train_log(&self) -> PathBuf {
        self.output.join("train_log.csv")
    }

    pub fn grad_check(&self) -> PathBuf {
        self.output.join("grad_check.json")
    }

    pub fn report(&self) -> PathBuf {
        self.output.join("report.json")
    }

    pub fn attention(&self) -> PathBuf {
        self.output.join("attention.jsonl")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub paths: Paths,
    pub corpus: CorpusConfig,
    pub influence: InfluenceConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 42,
            paths: Paths::default(),
            corpus: CorpusConfig::default(),
            influence: InfluenceConfig::default(),
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl Config {
    /// Reads `path` (if any), applies `key=value` overrides in order, then
    /// checks the dimension invariants.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config, UsageError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| UsageError(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| UsageError(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Config = Config::deserialize(toml::Value::Table(table))
            .map_err(|e| UsageError(format!("invalid configuration: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        let bad = |e: diffrec_core::error::Error| UsageError(e.to_string());
        self.corpus.validate().map_err(bad)?;
        self.model
            .validate(self.corpus.d_max, self.corpus.n_max)
            .map_err(bad)?;
        self.training.validate().map_err(bad)?;
        if self.influence.dim == 0 {
            return Err(UsageError("influence.dim must be positive".into()));
        }
        Ok(())
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, or as a string if it
/// does not parse as one.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), UsageError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| UsageError(format!("override `{assignment}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(UsageError(format!("override `{assignment}` has an empty key segment")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = parts.split_last().expect("nonempty key");
    let mut node = table;
    for p in parents {
        node = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| UsageError(format!("override `{assignment}`: `{p}` is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
