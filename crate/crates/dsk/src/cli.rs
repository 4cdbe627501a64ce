//! The `dsk` command line. Exit codes: 0 success, 1 data or runtime
//! error, 2 usage error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dsk_core::captioner::{
    build_vocab, greedy_decode, train_captioner, CaptionExample, CaptionerDims, CaptionerTrainConfig, LstmParams,
    DEFAULT_MAX_LEN,
};
use dsk_core::evaluation::{mean_average_precision, precision_recall_at_k};
use dsk_core::features::HashedTextFeaturizer;
use dsk_core::joint::{init_model, train, JointEmbeddingModel, ProjectionLayer, TrainConfig};
use dsk_core::retrieval::{build_index, IndexMode};
use serde_json::json;

use crate::formats::text::{format_run_lines, read_text};
use crate::formats::{
    caption_feature_id, load_captioner, load_captions, load_features, load_model, load_qrels, load_run, save_captioner,
    save_index, save_model, write_feature_file, CaptionerCheckpoint, EvalReport, FeatureSet, QueryMetrics,
};
use crate::pipeline::{caption_index_inputs, caption_vectors, embedding_index_inputs, training_pairs, CaptionFeatures};
use crate::query::{Snapshot, DEFAULT_NGRAM_MAX};
use crate::service::{self, ServiceConfig};

#[derive(Debug, Parser)]
#[command(
    name = "dsk",
    version,
    about = "Text-to-image retrieval: train, index, query, evaluate, serve"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the joint embedding on image features and their captions.
    TrainEmbedding(TrainEmbeddingArgs),
    /// Train the LSTM caption generator.
    TrainCaptioner(TrainCaptionerArgs),
    /// Greedy-decode captions for image features.
    Caption(CaptionArgs),
    /// Build a retrieval index.
    Index(IndexArgs),
    /// Search an index with text queries.
    Query(QueryArgs),
    /// Score a run file against relevance judgments.
    Eval(EvalArgs),
    /// Run the HTTP query service.
    Serve(ServeArgs),
    /// Hashed text features for a string or a caption dataset.
    Featurize(FeaturizeArgs),
}

/// Caption feature source: precomputed vectors or the hashed featurizer.
#[derive(Debug, Args)]
pub struct CaptionFeatureArgs {
    /// Caption features keyed `<image id>#<k>` (DSKF, or JSON lines for `.jsonl`).
    #[arg(long, conflicts_with = "hash_dim")]
    pub caption_features: Option<PathBuf>,
    /// Featurize caption text into this many hashed buckets.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub hash_dim: Option<u32>,
    #[arg(long, default_value_t = DEFAULT_NGRAM_MAX as u32, value_parser = clap::value_parser!(u32).range(1..))]
    pub ngram_max: u32,
}

#[derive(Debug, Args)]
pub struct TrainEmbeddingArgs {
    /// Image features (DSKF, or JSON lines for `.jsonl`).
    #[arg(long)]
    pub images: PathBuf,
    /// Caption dataset, JSON lines of {"id", "captions", "uri"?}.
    #[arg(long)]
    pub captions: PathBuf,
    #[command(flatten)]
    pub features: CaptionFeatureArgs,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(1..))]
    pub d: u32,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(1..))]
    pub batch_size: u32,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 10.0)]
    pub grad_clip: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Keep the image projection fixed (identity when d equals the image dim).
    #[arg(long)]
    pub freeze_image_side: bool,
    /// Train with the in-batch hinge objective instead of the plain pair loss.
    #[arg(long)]
    pub margin: bool,
    #[arg(long, default_value_t = 0.2, requires = "margin")]
    pub margin_value: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainCaptionerArgs {
    /// Image features (DSKF, or JSON lines for `.jsonl`).
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub captions: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub min_freq: u32,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(1..))]
    pub embed_dim: u32,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(1..))]
    pub hidden_dim: u32,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(1..))]
    pub batch_size: u32,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 10.0)]
    pub grad_clip: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CaptionArgs {
    /// Captioner checkpoint (DSKC).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Caption only this image.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN as u32, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_len: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Caption,
    Embedding,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Joint embedding checkpoint (DSKM). Optional in caption mode, where
    /// the identity projection is used without it.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Image features; required in embedding mode.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Caption dataset; required in caption mode.
    #[arg(long)]
    pub captions: Option<PathBuf>,
    #[command(flatten)]
    pub features: CaptionFeatureArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Joint embedding checkpoint; identity projection when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Query text.
    #[arg(
        short = 'q',
        long = "query",
        required_unless_present = "queries",
        conflicts_with = "queries"
    )]
    pub query: Option<String>,
    /// Batch mode: `query_id<TAB>text` per line; prints a run file.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(short = 'k', long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub k: u32,
    /// Print the service's SearchResponse JSON.
    #[arg(long, conflicts_with = "queries")]
    pub json: bool,
    #[arg(long, default_value_t = DEFAULT_NGRAM_MAX as u32, value_parser = clap::value_parser!(u32).range(1..))]
    pub ngram_max: u32,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    /// Also report precision and recall at this depth.
    #[arg(short = 'k', long, value_parser = clap::value_parser!(u32).range(1..))]
    pub k: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub addr: Option<String>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub hash_dim: u32,
    #[arg(long, default_value_t = DEFAULT_NGRAM_MAX as u32, value_parser = clap::value_parser!(u32).range(1..))]
    pub ngram_max: u32,
    /// Print the feature of this text as JSON.
    #[arg(long, required_unless_present = "captions", conflicts_with = "captions")]
    pub text: Option<String>,
    /// Featurize every caption of this dataset into `--out`.
    #[arg(long, requires = "out")]
    pub captions: Option<PathBuf>,
    /// Output feature file (DSKF, or JSON lines for `.jsonl`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<()> {
    match cli.command {
        Command::TrainEmbedding(a) => train_embedding(a, out),
        Command::TrainCaptioner(a) => train_captioner_cmd(a, out),
        Command::Caption(a) => caption(a, out),
        Command::Index(a) => index(a, out),
        Command::Query(a) => query(a, out, err),
        Command::Eval(a) => eval(a, out, err),
        Command::Serve(a) => serve(a),
        Command::Featurize(a) => featurize(a, out),
    }
}

fn featurizer(dim: usize, ngram_max: u32) -> anyhow::Result<HashedTextFeaturizer> {
    Ok(HashedTextFeaturizer::new(dim, ngram_max as usize)?)
}

fn train_embedding(a: TrainEmbeddingArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let images = load_features(&a.images)?;
    let entries = load_captions(&a.captions)?;
    let external;
    let hashed;
    let source = match (&a.features.caption_features, a.features.hash_dim) {
        (Some(path), _) => {
            external = load_features(path)?;
            CaptionFeatures::External(&external)
        }
        (None, Some(dim)) => {
            hashed = featurizer(dim as usize, a.features.ngram_max)?;
            CaptionFeatures::Hashed(&hashed)
        }
        (None, None) => bail!("one of --caption-features or --hash-dim is required"),
    };
    let vectors = caption_vectors(&entries, &source)?;
    let pairs = training_pairs(&images, &entries, &vectors)?;

    let d = a.d as usize;
    let mut model = init_model(images.dim, source.dim(), d, a.seed)?;
    if a.freeze_image_side && d == images.dim {
        *model.image_proj_mut() = ProjectionLayer::identity(d);
    }
    let config = TrainConfig {
        d,
        learning_rate: a.lr,
        batch_size: a.batch_size as usize,
        epochs: a.epochs,
        grad_clip: a.grad_clip,
        seed: a.seed,
        freeze_image_side: a.freeze_image_side,
        margin_mode: a.margin,
        margin: a.margin_value,
        ..TrainConfig::default()
    };
    let outcome = train(model, &pairs, &config)?;
    for (epoch, loss) in outcome.loss_history.iter().enumerate() {
        writeln!(out, "{}", json!({"epoch": epoch + 1, "loss": loss}))?;
    }
    writeln!(
        out,
        "{}",
        json!({
            "pairs": pairs.len(),
            "embedding_variance": outcome.embedding_variance,
            "collapsed": outcome.collapse.is_some(),
        })
    )?;
    save_model(&a.out, &outcome.model)?;
    Ok(())
}

fn train_captioner_cmd(a: TrainCaptionerArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let features = load_features(&a.features)?;
    let entries = load_captions(&a.captions)?;
    let by_id = features.to_map();
    let missing: Vec<&str> = entries
        .iter()
        .filter(|e| !by_id.contains_key(e.id.as_str()))
        .map(|e| e.id.as_str())
        .collect();
    if !missing.is_empty() {
        bail!(
            "{} caption ids without an image feature: {}",
            missing.len(),
            missing.join(", ")
        );
    }
    let data: Vec<CaptionExample> = entries
        .iter()
        .flat_map(|e| {
            let feature = by_id[e.id.as_str()];
            e.captions.iter().map(move |c| CaptionExample {
                feature: feature.clone(),
                caption: c.clone(),
            })
        })
        .collect();
    let vocab = build_vocab(data.iter().map(|ex| ex.caption.as_str()), a.min_freq as usize)?;
    let dims = CaptionerDims {
        vocab_size: vocab.len(),
        embed_dim: a.embed_dim as usize,
        hidden_dim: a.hidden_dim as usize,
        image_dim: features.dim,
    };
    let config = CaptionerTrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size as usize,
        epochs: a.epochs,
        grad_clip: a.grad_clip,
        seed: a.seed,
        ..CaptionerTrainConfig::default()
    };
    let outcome = train_captioner(LstmParams::init(dims, a.seed)?, &vocab, &data, &config)?;
    for (epoch, nll) in outcome.loss_history.iter().enumerate() {
        writeln!(out, "{}", json!({"epoch": epoch + 1, "nll": nll}))?;
    }
    save_captioner(
        &a.out,
        &CaptionerCheckpoint {
            vocab,
            params: outcome.params,
        },
    )?;
    Ok(())
}

fn caption(a: CaptionArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let ckpt = load_captioner(&a.model)?;
    let features = load_features(&a.features)?;
    let selected: Vec<&(String, _)> = match &a.id {
        Some(id) => vec![features
            .records
            .iter()
            .find(|(i, _)| i == id)
            .with_context(|| format!("unknown image id {id:?}"))?],
        None => features.records.iter().collect(),
    };
    for (id, feature) in selected {
        let text = greedy_decode(&ckpt.params, &ckpt.vocab, feature, a.max_len as usize)?;
        writeln!(out, "{id}\t{text}")?;
    }
    Ok(())
}

fn index(a: IndexArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let model = a.model.as_deref().map(load_model).transpose()?;
    let entries = a
        .captions
        .as_deref()
        .map(load_captions)
        .transpose()?
        .unwrap_or_default();
    let (mode, model, inputs) = match a.mode {
        ModeArg::Embedding => {
            let Some(model) = model else {
                bail!("--model is required in embedding mode")
            };
            let Some(images) = &a.images else {
                bail!("--images is required in embedding mode")
            };
            let images = load_features(images)?;
            let inputs = embedding_index_inputs(&images, &entries)?;
            (IndexMode::EmbeddingSpace, model, inputs)
        }
        ModeArg::Caption => {
            if a.captions.is_none() {
                bail!("--captions is required in caption mode");
            }
            let external;
            let hashed;
            let source = match (&a.features.caption_features, a.features.hash_dim, &model) {
                (Some(path), _, _) => {
                    external = load_features(path)?;
                    CaptionFeatures::External(&external)
                }
                (None, Some(dim), _) => {
                    hashed = featurizer(dim as usize, a.features.ngram_max)?;
                    CaptionFeatures::Hashed(&hashed)
                }
                (None, None, Some(m)) => {
                    hashed = featurizer(m.text_dim(), a.features.ngram_max)?;
                    CaptionFeatures::Hashed(&hashed)
                }
                (None, None, None) => bail!("caption mode needs --model, --hash-dim or --caption-features"),
            };
            let model = model.unwrap_or_else(|| JointEmbeddingModel::identity(source.dim()));
            let vectors = caption_vectors(&entries, &source)?;
            (IndexMode::CaptionBased, model, caption_index_inputs(&entries, vectors))
        }
    };
    let index = build_index(mode, &model, &inputs)?;
    save_index(&a.out, &index)?;
    writeln!(
        out,
        "{}",
        json!({
            "mode": index.mode().as_str(),
            "d": index.d(),
            "images": index.len(),
            "caption_vectors": index.caption_vector_count(),
        })
    )?;
    Ok(())
}

fn query(a: QueryArgs, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<()> {
    let snap = Snapshot::load(&a.index, a.model.as_deref(), a.ngram_max as usize)?;
    let k = a.k as usize;
    if let Some(path) = &a.queries {
        let text = read_text(path)?;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let Some((qid, q)) = line.split_once('\t') else {
                bail!("{}:{}: expected query_id<TAB>text", path.display(), n + 1);
            };
            let outcome = snap.query(q, k)?;
            if outcome.empty_query {
                writeln!(err, "warning: query {qid:?} has no tokens")?;
            }
            out.write_all(format_run_lines(qid.trim(), &outcome.result).as_bytes())?;
        }
        return Ok(());
    }
    let q = a.query.as_deref().unwrap_or_default();
    let started = Instant::now();
    let outcome = snap.query(q, k)?;
    let took_ms = started.elapsed().as_secs_f64() * 1e3;
    if outcome.empty_query {
        writeln!(err, "warning: query has no tokens; searching with the zero feature")?;
    }
    if a.json {
        writeln!(out, "{}", serde_json::to_string(&snap.response(q, &outcome, took_ms))?)?;
    } else {
        for (i, hit) in outcome.result.ranked.iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                i + 1,
                hit.image_id,
                hit.distance,
                hit.best_caption.as_deref().unwrap_or("")
            )?;
        }
    }
    Ok(())
}

fn eval(a: EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<()> {
    let run = load_run(&a.run)?;
    let qrels = load_qrels(&a.qrels)?;
    let report = mean_average_precision(&run, &qrels)?;
    if !report.unjudged.is_empty() {
        writeln!(
            err,
            "warning: {} run queries have no judgments and are excluded: {}",
            report.unjudged.len(),
            report.unjudged.join(", ")
        )?;
    }
    let k = a.k.map(|k| k as usize);
    let mut per_query = std::collections::BTreeMap::new();
    for (q, ap) in &report.per_query {
        let (precision_at_k, recall_at_k) = match k {
            Some(k) => {
                let (p, r) = precision_recall_at_k(&run[q], &qrels[q], k)?;
                (Some(p), Some(r))
            }
            None => (None, None),
        };
        per_query.insert(
            q.clone(),
            QueryMetrics {
                ap: *ap,
                precision_at_k,
                recall_at_k,
            },
        );
    }
    let report = EvalReport {
        map: report.mean_average_precision,
        judged_queries: per_query.len(),
        unjudged_queries: report.unjudged,
        per_query,
        k,
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let mut config = match &a.config {
        Some(path) => ServiceConfig::from_file(path)?,
        None => ServiceConfig::default(),
    };
    config.apply_env(|k| std::env::var(k).ok());
    if let Some(addr) = a.addr {
        config.addr = addr;
    }
    if a.index.is_some() {
        config.index = a.index;
    }
    if a.model.is_some() {
        config.model = a.model;
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(service::serve(config))
}

fn featurize(a: FeaturizeArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let f = featurizer(a.hash_dim as usize, a.ngram_max)?;
    if let Some(text) = &a.text {
        writeln!(out, "{}", json!({"dim": f.dim(), "v": f.featurize(text).as_slice()}))?;
        return Ok(());
    }
    let (Some(captions), Some(path)) = (&a.captions, &a.out) else {
        bail!("--captions needs --out");
    };
    let entries = load_captions(captions)?;
    let records: Vec<_> = entries
        .iter()
        .flat_map(|e| {
            e.captions
                .iter()
                .enumerate()
                .map(|(k, c)| (caption_feature_id(&e.id, k), f.featurize(c)))
        })
        .collect();
    write_features(path, &FeatureSet { dim: f.dim(), records })?;
    writeln!(
        out,
        "{}",
        json!({"records": entries.iter().map(|e| e.captions.len()).sum::<usize>(), "dim": f.dim()})
    )?;
    Ok(())
}

fn write_features(path: &Path, set: &FeatureSet) -> anyhow::Result<()> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        std::fs::write(path, crate::formats::features::features_to_jsonl(&set.records))
            .with_context(|| path.display().to_string())?;
    } else {
        write_feature_file(path, set.dim, &set.records)?;
    }
    Ok(())
}
