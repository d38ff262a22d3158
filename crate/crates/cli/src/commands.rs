use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use diffrec_core::archive::TensorArchive;
use diffrec_core::corpus::{
    load_cascades, load_follower_graph, load_news_titles, load_word_vectors, Corpus, WordEmbeddingTable,
};
use diffrec_core::eval::{dump_attention, evaluate};
use diffrec_core::influence::InfluenceModel;
use diffrec_core::pipeline::fit_influence;
use diffrec_core::training::{
    build_impressions, load_checkpoint, model_gradient_check, save_checkpoint, Dataset, Impression, ModelParams,
    NegativeCount, Portion, Recommender, Trainer,
};

use crate::config::Config;
use crate::UsageError;

const GRAD_CHECK_STEP: f64 = 1e-4;

fn required<'a>(path: &'a Option<std::path::PathBuf>, key: &str) -> Result<&'a Path> {
    let p = path
        .as_deref()
        .ok_or_else(|| UsageError(format!("paths.{key} is not set")))?;
    if !p.exists() {
        return Err(UsageError(format!("paths.{key}: {} does not exist", p.display())).into());
    }
    Ok(p)
}

fn existing(path: &Path, hint: &str) -> Result<()> {
    if !path.exists() {
        return Err(UsageError(format!("{} does not exist; {hint}", path.display())).into());
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_output(config: &Config) -> Result<()> {
    let dir = &config.paths.output;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_corpus(config: &Config) -> Result<(Corpus, WordEmbeddingTable)> {
    let dir = config.paths.corpus_dir();
    existing(&dir, "run `diffrec ingest` first")?;
    Ok(Corpus::load(&dir)?)
}

fn load_influence(config: &Config) -> Result<InfluenceModel> {
    let path = config.paths.influence();
    existing(&path, "run `diffrec train-influence` first")?;
    Ok(InfluenceModel::from_archive(&TensorArchive::load(&path)?)?)
}

pub fn ingest(config: &Config) -> Result<()> {
    let p = &config.paths;
    let graph_path = required(&p.graph, "graph")?;
    let cascades_path = required(&p.cascades, "cascades")?;
    let news_path = required(&p.news, "news")?;
    let words_path = required(&p.words, "words")?;
    create_output(config)?;

    let words = load_word_vectors(words_path)?;
    let graph = load_follower_graph(graph_path)?;
    let cascades = load_cascades(cascades_path, &graph)?.cascades;
    let news = load_news_titles(news_path, &words, config.corpus.n_max)?;
    let (corpus, report) = Corpus::assemble(graph, cascades, news, config.corpus.clone())?;
    log::info!(
        "dropped {} cascades without title, {} titles without cascade, {} duplicate cascades, {} short histories",
        report.cascades_without_title,
        report.titles_without_cascade,
        report.duplicate_cascades,
        report.short_histories
    );
    corpus.save(&words, p.corpus_dir())?;
    let stats = corpus.stats();
    write_json(&p.stats(), &stats)?;
    println!(
        "ingested {} users, {} news, {} pseudo-users, {} adoptions",
        stats.user_count, stats.news_count, stats.pseudo_user_count, stats.adoption_count
    );
    Ok(())
}

pub fn train_influence(config: &Config) -> Result<()> {
    let (corpus, _) = load_corpus(config)?;
    let split = corpus.split()?;
    let out = fit_influence(&corpus, &split, &config.influence, config.seed)?;
    out.model.to_archive().save(config.paths.influence())?;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in out.epoch_losses.iter().enumerate() {
        csv.push_str(&format!("{e},{l}\n"));
    }
    let path = config.paths.influence_loss();
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    println!(
        "influence embeddings for {} users, final loss {}",
        out.model.node_count(),
        out.epoch_losses.last().map_or("-".into(), |l| format!("{l:.5}"))
    );
    Ok(())
}

pub fn train(config: &Config, grad_check: bool) -> Result<()> {
    let (corpus, words) = load_corpus(config)?;
    let influence = load_influence(config)?;
    let split = corpus.split()?;
    let data = Dataset::new(&corpus, &words, &influence, config.model.view_size)?;
    let trainer = Trainer {
        data: &data,
        model: &config.model,
        config: &config.training,
        eval: &config.eval,
    };
    if grad_check {
        let train = build_impressions(
            &data,
            &split,
            Portion::Train,
            NegativeCount::Exactly(config.training.negatives),
            config.seed,
        )
        .impressions;
        let batch: Vec<&Impression> = train.iter().take(config.training.batch_size.min(4)).collect();
        if batch.is_empty() {
            anyhow::bail!("no training impressions for the gradient check");
        }
        let params = trainer.initial_params(config.seed);
        let report = model_gradient_check(&Recommender::new(&params, &data, &config.model), &batch, GRAD_CHECK_STEP)?;
        write_json(&config.paths.grad_check(), &report)?;
        let worst = report.worst().map_or("-".to_string(), |t| t.name.clone());
        println!(
            "gradient check: max relative error {:.3e} ({worst}) over {} tensors",
            report.max_relative_error(),
            report.tensors.len()
        );
    }
    let out = trainer.train(&split, config.seed)?;
    save_checkpoint(&out.params, config.training.precision, config.paths.checkpoint())?;
    let mut csv = String::from("epoch,impressions,loss,mean_loss,valid_auc\n");
    for l in &out.log {
        let auc = l.valid_auc.map_or(String::new(), |a| a.to_string());
        csv.push_str(&format!("{},{},{},{},{auc}\n", l.epoch, l.impressions, l.loss, l.mean_loss));
    }
    let path = config.paths.train_log();
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    println!("trained {} epochs, kept epoch {}", out.log.len(), out.best_epoch);
    Ok(())
}

struct Evaluation {
    corpus: Corpus,
    words: WordEmbeddingTable,
    influence: InfluenceModel,
    params: ModelParams,
}

fn load_model(config: &Config) -> Result<Evaluation> {
    let checkpoint = config.paths.checkpoint();
    existing(&checkpoint, "run `diffrec train` first or set paths.checkpoint")?;
    let (corpus, words) = load_corpus(config)?;
    let influence = load_influence(config)?;
    let dims = config
        .model
        .news_dims(words.dim(), influence.dim(), corpus.config.d_max);
    let params = load_checkpoint(&ModelParams::zeros(&dims), &checkpoint)?;
    Ok(Evaluation {
        corpus,
        words,
        influence,
        params,
    })
}

fn test_impressions(config: &Config, data: &Dataset<'_>) -> Result<Vec<Impression>> {
    let split = data.corpus.split()?;
    let build = build_impressions(
        data,
        &split,
        Portion::Test,
        NegativeCount::UpTo(config.eval.max_negatives),
        config.seed,
    );
    if build.impressions.is_empty() {
        anyhow::bail!("the test split yields no impressions");
    }
    Ok(build.impressions)
}

fn write_attention(config: &Config, model: &Recommender<'_>, impressions: &[Impression], path: &Path) -> Result<usize> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    let rows = dump_attention(model, impressions, config.eval.attention_per_user, &mut out)?;
    out.flush()?;
    Ok(rows)
}

pub fn evaluate_cmd(config: &Config, attention: Option<&Path>) -> Result<()> {
    let e = load_model(config)?;
    let data = Dataset::new(&e.corpus, &e.words, &e.influence, config.model.view_size)?;
    let model = Recommender::new(&e.params, &data, &config.model);
    let impressions = test_impressions(config, &data)?;
    let report = evaluate(&model, &impressions, &config.eval)?;
    write_json(&config.paths.report(), &report)?;
    println!(
        "{} impressions: AUC {:.4} MRR {:.4} NDCG@5 {:.4} NDCG@10 {:.4}",
        report.impressions, report.auc, report.mrr, report.ndcg5, report.ndcg10
    );
    if let Some(path) = attention {
        let rows = write_attention(config, &model, &impressions, path)?;
        println!("wrote {rows} attention rows to {}", path.display());
    }
    Ok(())
}

pub fn dump_attention_cmd(config: &Config, path: Option<&Path>) -> Result<()> {
    let e = load_model(config)?;
    let data = Dataset::new(&e.corpus, &e.words, &e.influence, config.model.view_size)?;
    let model = Recommender::new(&e.params, &data, &config.model);
    let impressions = test_impressions(config, &data)?;
    let path = path.map_or_else(|| config.paths.attention(), Path::to_path_buf);
    let rows = write_attention(config, &model, &impressions, &path)?;
    println!("wrote {rows} attention rows to {}", path.display());
    Ok(())
}
