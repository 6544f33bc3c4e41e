//! Command-line entry point.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::checkpoint::load_model_for;
use crate::config::RunConfig;
use crate::corpus::{load_interactions, split_train_test, DatasetBundle};
use crate::error::{AarmError, Result};
use crate::evaluation::{evaluate, percent, EvalReport, ModelScorer};
use crate::introspection::{attention_dump, shared_aspect_distribution, PairTraversal};
use crate::manifest::{run_manifest, sha256_hex, KeyValues};
use crate::matrix::Matrix;
use crate::model::{ModelConfig, ModelParams};
use crate::parallel::Workers;
use crate::pretrain::{load_embeddings, pretrain_aspects, save_embeddings};
use crate::synthetic::{generate, to_jsonl, SyntheticConfig};
use crate::training::{train, TrainConfig, TrainOptions, TrainOutcome};
use crate::variants::Variant;

#[derive(Parser, Debug)]
#[command(name = "aarm", version, about = "Attentive aspect-based recommendation: data preparation, training, evaluation")]
struct Cli {
    /// flat key=value config file (section.key=value); flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// worker threads for gradient and evaluation fan-out
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split interactions and build the dataset bundle
    Prepare(PrepareArgs),
    /// Train skip-gram aspect embeddings or import external vectors
    Pretrain(PretrainArgs),
    /// Train a model
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split
    Evaluate(EvaluateArgs),
    /// Train and evaluate several variants and compare them
    Ablate(AblateArgs),
    /// Dump attention weights for one (user, item) pair
    Inspect(InspectArgs),
    /// Dataset statistics
    Stats(StatsArgs),
    /// Generate a synthetic interaction file
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct PrepareArgs {
    /// JSON-lines interaction file
    #[arg(long)]
    input: Option<PathBuf>,
    /// output bundle directory
    #[arg(long)]
    out: PathBuf,
    /// per-user train fraction [default: 0.7]
    #[arg(long)]
    ratio: Option<f64>,
    /// aspect-set length quantile [default: 0.75]
    #[arg(long)]
    quantile: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// validation users [default: 1000]
    #[arg(long)]
    validation_users: Option<usize>,
    /// reviews used for aspect sets: train or all [default: train]
    #[arg(long)]
    aspects_from: Option<String>,
}

#[derive(Args, Debug)]
struct PretrainArgs {
    /// dataset bundle directory
    #[arg(long)]
    data: Option<PathBuf>,
    /// output vector file
    #[arg(long)]
    out: PathBuf,
    /// [default: 128]
    #[arg(long)]
    dim: Option<usize>,
    /// [default: 5]
    #[arg(long)]
    window: Option<usize>,
    /// [default: 5]
    #[arg(long)]
    negatives: Option<usize>,
    /// [default: 5]
    #[arg(long)]
    epochs: Option<usize>,
    /// frequency floor for non-aspect tokens [default: 5]
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// validate and copy external vectors instead of training
    #[arg(long = "import")]
    import: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct ModelTrainArgs {
    /// dataset bundle directory
    #[arg(long)]
    data: Option<PathBuf>,
    /// pre-trained vectors (not needed for random_tune or global_only)
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// pretrain_transform, pretrain_tune or random_tune [default: pretrain_transform]
    #[arg(long)]
    strategy: Option<String>,
    /// aspect embedding size [default: 128]
    #[arg(long)]
    aspect_dim: Option<usize>,
    /// latent factor size [default: 128]
    #[arg(long)]
    global_dim: Option<usize>,
    /// [default: 0.5]
    #[arg(long)]
    dropout: Option<f64>,
    /// softmax_exclude or literal [default: softmax_exclude]
    #[arg(long)]
    masking: Option<String>,
    /// [default: 0.003]
    #[arg(long)]
    lr: Option<f64>,
    /// [default: 0.0001]
    #[arg(long)]
    l2: Option<f64>,
    /// [default: 512]
    #[arg(long)]
    batch: Option<usize>,
    /// maximum epochs [default: 300]
    #[arg(long)]
    epochs: Option<usize>,
    /// epochs between validation checkpoints [default: 10]
    #[arg(long)]
    eval_every: Option<usize>,
    /// checkpoints without improvement before stopping [default: 4]
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: ModelTrainArgs,
    /// [default: aarm]
    #[arg(long)]
    variant: Option<String>,
    /// checkpoint directory
    #[arg(long)]
    out: PathBuf,
    /// continue from the state checkpoint in --out
    #[arg(long)]
    resume: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// model checkpoint file (or a training output directory)
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// list length [default: 10]
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    common: ModelTrainArgs,
    /// comma-separated variant names [default: all]
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    /// list length [default: 10]
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// external user id
    #[arg(long)]
    user: String,
    /// external item id
    #[arg(long)]
    item: String,
    /// JSON dump; the heatmap CSV goes next to it
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// distribution of shared aspects over user-item pairs
    #[arg(long, required = true)]
    shared_aspects: bool,
    /// count truncated sets instead of raw ones
    #[arg(long)]
    truncated: bool,
    /// sample this many pairs instead of traversing all of them
    #[arg(long, conflicts_with = "exact")]
    sample: Option<usize>,
    /// traverse every pair even on large datasets
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    users: usize,
    #[arg(long, default_value_t = 200)]
    items: usize,
    #[arg(long, default_value_t = 30)]
    aspects: usize,
    #[arg(long, default_value_t = 5)]
    topics: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Pairs up to which shared-aspect stats traverse every pair by default.
const EXACT_PAIR_LIMIT: usize = 10_000_000;
const DEFAULT_SAMPLE: usize = 1_000_000;

fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(t) = cli.threads {
        cfg.set("threads", t);
    }
    match cli.command {
        Command::Prepare(a) => cmd_prepare(cfg, a),
        Command::Pretrain(a) => cmd_pretrain(cfg, a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::Evaluate(a) => cmd_evaluate(cfg, a),
        Command::Ablate(a) => cmd_ablate(cfg, a),
        Command::Inspect(a) => cmd_inspect(cfg, a),
        Command::Stats(a) => cmd_stats(cfg, a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn required_path(flag: Option<PathBuf>, cfg: &RunConfig, key: &str, flag_name: &str) -> Result<PathBuf> {
    flag.or_else(|| cfg.path(key)).ok_or_else(|| {
        AarmError::InvalidArgument(format!("missing --{flag_name} (or paths.{key} in the config file)"))
    })
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| AarmError::io(parent, e))?;
    }
    fs::write(path, content).map_err(|e| AarmError::io(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, &s)
}

/// `<file>.manifest` next to a file output.
fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn write_manifest(path: &Path, command: &str, config: &KeyValues, seed: u64) -> Result<()> {
    run_manifest(command, config, seed).write(path)
}

fn load_bundle(path: &Path) -> Result<DatasetBundle> {
    let started = Instant::now();
    let bundle = DatasetBundle::load(path)?;
    info!(
        "loaded {} ({} users, {} items, {} aspects) in {:.2?}",
        path.display(),
        bundle.num_users(),
        bundle.num_items(),
        bundle.vocab.num_aspects(),
        started.elapsed()
    );
    Ok(bundle)
}

fn cmd_prepare(mut cfg: RunConfig, a: PrepareArgs) -> Result<()> {
    let input = required_path(a.input, &cfg, "input", "input")?;
    cfg.set_opt("prepare", "ratio", a.ratio)
        .set_opt("prepare", "quantile", a.quantile)
        .set_opt("prepare", "seed", a.seed)
        .set_opt("prepare", "validation_users", a.validation_users)
        .set_opt("prepare", "aspects_from", a.aspects_from);
    let pc = cfg.prepare()?;
    if !(pc.ratio > 0.0 && pc.ratio < 1.0) {
        return Err(AarmError::InvalidArgument(format!("--ratio must lie in (0,1), got {}", pc.ratio)));
    }
    let table = load_interactions(&input)?;
    info!(
        "read {} records, {} users, {} items",
        table.num_records(),
        table.num_users(),
        table.num_items()
    );
    let table = split_train_test(table, pc.ratio, pc.seed)?;
    let bundle = DatasetBundle::prepare(table, pc.clone())?;
    bundle.save(&a.out)?;
    info!(
        "bundle written to {} (M_u={}, M_v={}, {} positives, {} validation users)",
        a.out.display(),
        bundle.sets.user_len(),
        bundle.sets.item_len(),
        bundle.positives.len(),
        bundle.validation.len()
    );
    let resolved = cfg.resolved(&["prepare"])?;
    write_manifest(&a.out.join("run.manifest"), "prepare", &resolved, pc.seed)
}

fn cmd_pretrain(mut cfg: RunConfig, a: PretrainArgs) -> Result<()> {
    let data = required_path(a.data, &cfg, "data", "data")?;
    cfg.set_opt("pretrain", "dim", a.dim)
        .set_opt("pretrain", "window", a.window)
        .set_opt("pretrain", "negatives", a.negatives)
        .set_opt("pretrain", "epochs", a.epochs)
        .set_opt("pretrain", "min_count", a.min_count)
        .set_opt("pretrain", "seed", a.seed);
    let sc = cfg.pretrain()?;
    let bundle = load_bundle(&data)?;
    let mut resolved = cfg.resolved(&["pretrain"])?;
    let table = match &a.import {
        Some(path) => {
            let t = load_embeddings(path)?;
            t.aspect_matrix(&bundle.vocab, if a.dim.is_some() { sc.dim } else { t.dim() })?;
            resolved.set("pretrain.import", path.display());
            resolved.set("pretrain.import_sha256", sha256_hex(t.to_text().as_bytes()));
            info!("imported {} vectors of dim {}", t.len(), t.dim());
            t
        }
        None => {
            let started = Instant::now();
            let t = pretrain_aspects(&bundle.table, &bundle.vocab, &sc)?;
            info!("trained {} vectors in {:.2?}", t.len(), started.elapsed());
            t
        }
    };
    save_embeddings(&table, &a.out)?;
    write_manifest(&sidecar(&a.out), "pretrain", &resolved, sc.seed)
}

fn apply_model_train_args(cfg: &mut RunConfig, a: &ModelTrainArgs) {
    cfg.set_opt("model", "strategy", a.strategy.clone())
        .set_opt("model", "aspect_dim", a.aspect_dim)
        .set_opt("model", "global_dim", a.global_dim)
        .set_opt("model", "dropout", a.dropout)
        .set_opt("model", "masking", a.masking.clone())
        .set_opt("train", "lr", a.lr)
        .set_opt("train", "l2", a.l2)
        .set_opt("train", "batch", a.batch)
        .set_opt("train", "max_epochs", a.epochs)
        .set_opt("train", "eval_every", a.eval_every)
        .set_opt("train", "patience", a.patience)
        .set_opt("train", "seed", a.seed);
}

/// Initializes and trains one model configuration.
fn train_model(
    bundle: &DatasetBundle,
    model_cfg: ModelConfig,
    train_cfg: &TrainConfig,
    embeddings: Option<&Matrix>,
    out: &Path,
    resume: bool,
    threads: usize,
) -> Result<TrainOutcome> {
    let spec = model_cfg.spec();
    if spec.uses_aspect && model_cfg.strategy.needs_pretrained() && embeddings.is_none() {
        return Err(AarmError::InvalidArgument(format!(
            "variant {} with strategy {} needs --embeddings",
            spec.name, model_cfg.strategy
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    rng.set_stream(u64::MAX);
    let init = ModelParams::init(
        model_cfg,
        bundle.vocab.size(),
        bundle.num_users(),
        bundle.num_items(),
        embeddings,
        &mut rng,
    )?;
    let started = Instant::now();
    let outcome = train(
        bundle,
        init,
        train_cfg,
        &TrainOptions {
            out_dir: Some(out),
            resume,
            threads,
        },
    )?;
    info!(
        "{} trained {} epochs in {:.2?} (best epoch {:?})",
        spec.name,
        outcome.history.stopped_epoch,
        started.elapsed(),
        outcome.history.best_epoch()
    );
    Ok(outcome)
}

fn load_aspect_matrix(path: Option<&Path>, bundle: &DatasetBundle, dim: usize) -> Result<Option<Matrix>> {
    path.map(|p| load_embeddings(p)?.aspect_matrix(&bundle.vocab, dim)).transpose()
}

fn cmd_train(mut cfg: RunConfig, a: TrainArgs) -> Result<()> {
    let data = required_path(a.common.data.clone(), &cfg, "data", "data")?;
    apply_model_train_args(&mut cfg, &a.common);
    cfg.set_opt("model", "variant", a.variant.clone());
    let model_cfg = cfg.model()?;
    let train_cfg = cfg.train()?;
    let bundle = load_bundle(&data)?;
    let embeddings_path = a.common.embeddings.clone().or_else(|| cfg.path("embeddings"));
    let embeddings = load_aspect_matrix(embeddings_path.as_deref(), &bundle, model_cfg.aspect_dim)?;
    fs::create_dir_all(&a.out).map_err(|e| AarmError::io(&a.out, e))?;
    train_model(&bundle, model_cfg, &train_cfg, embeddings.as_ref(), &a.out, a.resume, cfg.threads()?)?;
    let resolved = cfg.resolved(&["model", "train"])?;
    write_manifest(&a.out.join("run.manifest"), "train", &resolved, train_cfg.seed)
}

fn resolve_checkpoint(path: PathBuf) -> PathBuf {
    if path.is_dir() {
        path.join(crate::training::BEST_CHECKPOINT)
    } else {
        path
    }
}

fn report_json(report: &EvalReport, variant: &str, ckpt_hash: &str) -> Value {
    let mut v = report.to_json();
    v["variant"] = json!(variant);
    v["checkpoint_sha256"] = json!(ckpt_hash);
    v
}

fn cmd_evaluate(mut cfg: RunConfig, a: EvaluateArgs) -> Result<()> {
    let data = required_path(a.data, &cfg, "data", "data")?;
    let ckpt = resolve_checkpoint(required_path(a.ckpt, &cfg, "ckpt", "ckpt")?);
    cfg.set_opt("eval", "n", a.n);
    let n = cfg.eval_n()?;
    let bundle = load_bundle(&data)?;
    let params = load_model_for(&ckpt, &bundle)?;
    let hash = sha256_hex(&fs::read(&ckpt).map_err(|e| AarmError::io(&ckpt, e))?);
    let scorer = ModelScorer::new(&params, &bundle.sets)?;
    let workers = Workers::new(cfg.threads()?)?;
    let report = evaluate(&scorer, &bundle, n, &workers)?;
    info!(
        "{} users: recall {:.3}% precision {:.3}% ndcg {:.3}% hit {:.3}%",
        report.num_users(),
        percent(report.metrics.recall),
        percent(report.metrics.precision),
        percent(report.metrics.ndcg),
        percent(report.metrics.hit_ratio)
    );
    write_json(&a.out, &report_json(&report, params.config.variant.name(), &hash))?;
    let mut resolved = cfg.resolved(&["eval"])?;
    resolved.set("checkpoint_sha256", hash);
    write_manifest(&sidecar(&a.out), "evaluate", &resolved, 0)
}

fn improvement(base: f64, other: f64) -> Value {
    if other == 0.0 {
        Value::Null
    } else {
        json!(format!("{:+.3}%", (base - other) / other * 100.0))
    }
}

fn cmd_ablate(mut cfg: RunConfig, a: AblateArgs) -> Result<()> {
    let data = required_path(a.common.data.clone(), &cfg, "data", "data")?;
    apply_model_train_args(&mut cfg, &a.common);
    cfg.set_opt("eval", "n", a.n);
    let variants: Vec<Variant> = if a.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        a.variants.iter().map(|s| s.trim().parse()).collect::<Result<_>>()?
    };
    let base_model = cfg.model()?;
    let train_cfg = cfg.train()?;
    let n = cfg.eval_n()?;
    let threads = cfg.threads()?;
    let bundle = load_bundle(&data)?;
    let embeddings_path = a.common.embeddings.clone().or_else(|| cfg.path("embeddings"));
    let embeddings = load_aspect_matrix(embeddings_path.as_deref(), &bundle, base_model.aspect_dim)?;
    let workers = Workers::new(threads)?;

    let mut rows = Vec::new();
    for &variant in &variants {
        let dir = a.out.join(variant.name());
        fs::create_dir_all(&dir).map_err(|e| AarmError::io(&dir, e))?;
        let model_cfg = ModelConfig {
            variant,
            ..base_model.clone()
        };
        let outcome = train_model(&bundle, model_cfg, &train_cfg, embeddings.as_ref(), &dir, false, threads)?;
        let ckpt = dir.join(crate::training::BEST_CHECKPOINT);
        let hash = sha256_hex(&fs::read(&ckpt).map_err(|e| AarmError::io(&ckpt, e))?);
        let scorer = ModelScorer::new(&outcome.best, &bundle.sets)?;
        let report = evaluate(&scorer, &bundle, n, &workers)?;
        write_json(&dir.join("report.json"), &report_json(&report, variant.name(), &hash))?;
        rows.push((variant, report.metrics));
    }

    let reference = rows.iter().find(|(v, _)| *v == Variant::Aarm).map(|(_, m)| *m);
    let mut table = Vec::new();
    let mut text = String::from("variant\trecall\tprecision\tndcg\thit_ratio\taarm_gain_ndcg\taarm_gain_hit\n");
    for (variant, m) in &rows {
        let gains = reference.map(|r| (improvement(r.ndcg, m.ndcg), improvement(r.hit_ratio, m.hit_ratio)));
        let (g_ndcg, g_hit) = gains.clone().unwrap_or((Value::Null, Value::Null));
        text.push_str(&format!(
            "{}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{}\t{}\n",
            variant.name(),
            percent(m.recall),
            percent(m.precision),
            percent(m.ndcg),
            percent(m.hit_ratio),
            g_ndcg.as_str().unwrap_or("-"),
            g_hit.as_str().unwrap_or("-"),
        ));
        table.push(json!({
            "variant": variant.name(),
            "metrics": m.to_percent_json(),
            "aarm_improvement": { "ndcg": g_ndcg, "hit_ratio": g_hit },
        }));
    }
    write_json(
        &a.out.join("comparison.json"),
        &json!({ "n": n, "strategy": base_model.strategy.name(), "units": "percent", "variants": table }),
    )?;
    write_file(&a.out.join("comparison.tsv"), &text)?;
    let mut resolved = cfg.resolved(&["model", "train", "eval"])?;
    resolved.set("variants", variants.iter().map(|v| v.name()).collect::<Vec<_>>().join(","));
    write_manifest(&a.out.join("run.manifest"), "ablate", &resolved, train_cfg.seed)
}

fn cmd_inspect(cfg: RunConfig, a: InspectArgs) -> Result<()> {
    let data = required_path(a.data, &cfg, "data", "data")?;
    let ckpt = resolve_checkpoint(required_path(a.ckpt, &cfg, "ckpt", "ckpt")?);
    let bundle = load_bundle(&data)?;
    let params = load_model_for(&ckpt, &bundle)?;
    let user = bundle.user_index(&a.user)?;
    let item = bundle.item_index(&a.item)?;
    let dump = attention_dump(&params, &bundle, user, item)?;
    write_json(&a.out, &dump.to_json())?;
    if let Some(h) = &dump.heatmap {
        write_file(&a.out.with_extension("csv"), &h.to_csv())?;
    }
    let mut resolved = KeyValues::new();
    resolved.set("user", &a.user).set("item", &a.item).set("checkpoint", ckpt.display());
    write_manifest(&sidecar(&a.out), "inspect", &resolved, 0)
}

fn cmd_stats(cfg: RunConfig, a: StatsArgs) -> Result<()> {
    let data = required_path(a.data, &cfg, "data", "data")?;
    let bundle = load_bundle(&data)?;
    let seed = match a.seed {
        Some(s) => s,
        None => cfg.key_values().parse_or("seed", 0)?,
    };
    let total = bundle.num_users() * bundle.num_items();
    let traversal = match (a.sample, a.exact) {
        (Some(pairs), _) => PairTraversal::Sampled { pairs, seed },
        (None, true) => PairTraversal::Exact,
        (None, false) if total <= EXACT_PAIR_LIMIT => PairTraversal::Exact,
        (None, false) => PairTraversal::Sampled {
            pairs: DEFAULT_SAMPLE,
            seed,
        },
    };
    let hist = shared_aspect_distribution(&bundle, traversal, a.truncated);
    write_json(&a.out, &hist.to_json())?;
    let mut resolved = KeyValues::new();
    resolved.set("truncated", a.truncated).set("pairs", hist.pairs);
    write_manifest(&sidecar(&a.out), "stats", &resolved, seed)
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let sc = SyntheticConfig {
        users: a.users,
        items: a.items,
        aspects: a.aspects,
        topics: a.topics,
        seed: a.seed,
        ..SyntheticConfig::default()
    };
    let data = generate(&sc)?;
    write_file(&a.out, &to_jsonl(&data.records)?)?;
    info!("wrote {} records to {}", data.records.len(), a.out.display());
    write_manifest(&sidecar(&a.out), "synth", &sc.to_key_values(), sc.seed)
}
