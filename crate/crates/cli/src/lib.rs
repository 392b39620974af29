//! The `dan` command-line pipeline: data generation, training, evaluation,
//! prediction, gradient checking and the reference game.
//!
//! Every subcommand is deterministic given its configuration and seed. The
//! resolved configuration is echoed into each artifact it writes; output
//! paths are not, so reruns into different directories are byte-identical.

pub mod config;

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use dan::baselines::RandomBaseline;
use dan::dataset::{gen_world, Split, World};
use dan::evaluator::{
    eval_attributes, eval_discriminativeness, eval_random_attributes, eval_random_discriminativeness,
    play_refgame, Averaging, Choice, EvalOptions, GameRecord,
};
use dan::gradcheck::{run_gradcheck, GradcheckConfig, GradcheckReport};
use dan::predict::{
    AttributePredictor, DiscriminativePredictor, GoldOracle, PairView, Polarity, Speaker,
};
use dan::storage::{self, Checkpoint};
use dan::trainer::{train, EvalMetric, Trained};
use dan::{ModelKind, Rng, Scalar};

pub use config::{Precision, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] dan::Error),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    /// 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 3,
            CliError::Core(e) if !e.is_data_error() => 3,
            CliError::Core(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "dan", version, about = "Discriminative attribute network")]
pub struct Cli {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed (default: config file, then $DAN_SEED, then 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parallel evaluation workers.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub precision: Option<Precision>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world (or import a ViSA-style table).
    GenData(GenDataArgs),
    /// Train a model on a world.
    Train(TrainArgs),
    /// Evaluate a model on a world.
    Eval(EvalArgs),
    /// Discriminative attributes for one referent/context pair.
    Predict(PredictArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Play and print a few reference games.
    RefgameDemo(RefgameDemoArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Total number of concepts (spread over the categories).
    #[arg(long)]
    pub concepts: Option<usize>,
    #[arg(long)]
    pub categories: Option<usize>,
    #[arg(long)]
    pub concepts_per_category: Option<usize>,
    #[arg(long)]
    pub attributes: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub coherence: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Import this attribute table instead of generating a world.
    #[arg(long, value_name = "TSV", requires = "visa_vectors")]
    pub visa_attributes: Option<PathBuf>,
    /// Directory with one `<concept>.danv` per concept.
    #[arg(long, value_name = "DIR", requires = "visa_attributes")]
    pub visa_vectors: Option<PathBuf>,
    /// Concepts to leave out of an import, one per line.
    #[arg(long, value_name = "FILE", requires = "visa_attributes")]
    pub exclude: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Dan,
    Ablation,
    Classifier,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Dan => ModelKind::Dan,
            ModelArg::Ablation => ModelKind::Ablation,
            ModelArg::Classifier => ModelKind::Classifier,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "DIR")]
    pub world: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "dan")]
    pub model: ModelArg,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub rms_decay: Option<f64>,
    #[arg(long)]
    pub rms_epsilon: Option<f64>,
    /// Epochs without improvement before stopping; 0 never stops early.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, value_parser = parse_metric)]
    pub eval_metric: Option<EvalMetric>,
    /// Train on both orders of every pair.
    #[arg(long)]
    pub ordered_pairs: bool,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub no_attr_sigmoid: bool,
    #[arg(long)]
    pub no_bias: bool,
    /// Keep whatever attribute-layer polarity training ends up with.
    #[arg(long)]
    pub no_canonical_polarity: bool,
    /// Fill the wall-clock column of history.csv (breaks byte-identity).
    #[arg(long)]
    pub record_time: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Discrim,
    Attrib,
    Refgame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalModel {
    Dan,
    Ablation,
    Classifier,
    /// Gold attributes; an upper bound.
    Oracle,
    /// Frequency-matched random sets.
    Random,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long, value_name = "DIR")]
    pub world: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Defaults to the checkpoint's model.
    #[arg(long, value_enum)]
    pub model: Option<EvalModel>,
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub select: SelectArgs,
    #[arg(long, value_enum)]
    pub task: Task,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_parser = parse_averaging)]
    pub averaging: Option<Averaging>,
    #[arg(long)]
    pub games: Option<usize>,
    #[arg(long)]
    pub max_pairs: Option<usize>,
    /// Write report.json and predictions.tsv here.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "DIR")]
    pub world: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Referent concept id.
    #[arg(long)]
    pub referent: String,
    /// Context concept id.
    #[arg(long)]
    pub context: String,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Check one model (default: all three).
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub input: Option<usize>,
    #[arg(long)]
    pub attributes: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub no_attr_sigmoid: bool,
    #[arg(long)]
    pub no_bias: bool,
    /// Write the per-block report as JSON.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Negative control: corrupt the analytic gradient.
    #[arg(long, hide = true)]
    pub inject_sign_flip: bool,
}

#[derive(Debug, Args)]
pub struct RefgameDemoArgs {
    #[command(flatten)]
    pub select: SelectArgs,
    #[arg(long, default_value_t = 10)]
    pub games: usize,
}

fn parse_metric(s: &str) -> std::result::Result<EvalMetric, String> {
    s.parse().map_err(|e: dan::Error| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    s.parse().map_err(|e: dan::Error| e.to_string())
}

fn parse_averaging(s: &str) -> std::result::Result<Averaging, String> {
    match s {
        "micro" => Ok(Averaging::Micro),
        "macro" => Ok(Averaging::Macro),
        other => Err(format!("unknown averaging `{other}` (micro|macro)")),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_args<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| usage(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.resolve_seed(cli.seed)?;
    config::set(&mut cfg.workers, cli.workers.map(Some));
    config::set(&mut cfg.precision, cli.precision);
    match cli.command {
        Command::GenData(a) => cmd_gen_data(cfg, &a),
        Command::Train(a) => cmd_train(cfg, &a),
        Command::Eval(a) => cmd_eval(cfg, &a),
        Command::Predict(a) => cmd_predict(cfg, &a),
        Command::Gradcheck(a) => cmd_gradcheck(cfg, &a),
        Command::RefgameDemo(a) => cmd_refgame_demo(cfg, &a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    Ok(storage::write_atomic(path, text.as_bytes())?)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    write_text(path, &text)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::Core(dan::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value serializes"));
}

// ---------------------------------------------------------------- gen-data

pub fn cmd_gen_data(mut cfg: RunConfig, a: &GenDataArgs) -> Result<()> {
    let w = &mut cfg.world;
    config::set(&mut w.n_concepts, a.concepts.map(Some));
    config::set(&mut w.n_categories, a.categories);
    config::set(&mut w.concepts_per_category, a.concepts_per_category);
    config::set(&mut w.n_attributes, a.attributes);
    config::set(&mut w.dim, a.dim);
    config::set(&mut w.instances_per_concept, a.instances);
    config::set(&mut w.attr_density, a.density);
    config::set(&mut w.category_coherence, a.coherence);
    config::set(&mut w.noise_std, a.noise);
    match cfg.precision {
        Precision::F32 => gen_data::<f32>(&cfg, a),
        Precision::F64 => gen_data::<f64>(&cfg, a),
    }
}

fn gen_data<T: Scalar>(cfg: &RunConfig, a: &GenDataArgs) -> Result<()> {
    let mut rng = Rng::new(cfg.seed());
    let (world, provenance) = match (&a.visa_attributes, &a.visa_vectors) {
        (Some(table), Some(vectors)) => {
            let exclusions = match &a.exclude {
                Some(p) => storage::read_exclusions(p)?,
                None => HashSet::new(),
            };
            let (world, report) = storage::load_visa::<T>(table, vectors, &exclusions, cfg.world.split, &mut rng)?;
            log::info!(
                "imported {} concepts; pruned {} attributes, {} missing vectors, {} excluded",
                report.n_concepts,
                report.pruned_attributes.len(),
                report.missing_vectors.len(),
                report.excluded.len()
            );
            let prov = json!({
                "command": "gen-data",
                "source": "import",
                "seed": cfg.seed(),
                "split": cfg.world.split,
                "import": report,
            });
            (world, prov)
        }
        _ => {
            let world = gen_world::<T>(&cfg.world, &mut rng)?;
            let prov = json!({
                "command": "gen-data",
                "source": "synthetic",
                "seed": cfg.seed(),
                "world": cfg.world,
            });
            (world, prov)
        }
    };
    storage::save_world(&world, &a.out, provenance)?;
    print_json(&json!(world.stats()));
    Ok(())
}

// ------------------------------------------------------------------- train

pub fn cmd_train(mut cfg: RunConfig, a: &TrainArgs) -> Result<()> {
    let t = &mut cfg.train;
    config::set(&mut t.max_epochs, a.epochs);
    config::set(&mut t.batch_size, a.batch_size);
    config::set(&mut t.learning_rate, a.lr);
    config::set(&mut t.rms_decay, a.rms_decay);
    config::set(&mut t.rms_epsilon, a.rms_epsilon);
    config::set(&mut t.patience, a.patience);
    config::set(&mut t.hidden, a.hidden);
    config::set(&mut t.eval_metric, a.eval_metric);
    config::set(&mut t.clip_norm, a.clip_norm.map(Some));
    t.ordered_pairs |= a.ordered_pairs;
    t.record_time |= a.record_time;
    if a.no_attr_sigmoid {
        t.dan_options.attr_sigmoid = false;
    }
    if a.no_bias {
        t.dan_options.bias = false;
    }
    if a.no_canonical_polarity {
        t.canonical_polarity = false;
    }
    t.validate().map_err(|e| usage(e.to_string()))?;
    match cfg.precision {
        Precision::F32 => train_into::<f32>(&cfg, a),
        Precision::F64 => train_into::<f64>(&cfg, a),
    }
}

fn train_into<T: Scalar>(cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    let kind = ModelKind::from(a.model);
    let world = storage::load_world::<T>(&a.world)?;
    let (model, history) = train(kind, &world, &cfg.train)?;
    let echo = json!({
        "command": "train",
        "model": kind,
        "world": a.world,
        "config": cfg.to_json(),
    });
    create_dir(&a.out)?;
    let ckpt = Checkpoint::from_trained(&model, cfg.seed(), echo.to_string());
    ckpt.save(&a.out.join("checkpoint.danc"))?;
    write_text(&a.out.join("history.csv"), &history.to_csv())?;
    let summary = json!({
        "model": kind,
        "seed": cfg.seed(),
        "parameters": model.parameter_count(),
        "epochs_run": history.records.len(),
        "best_epoch": history.best_epoch,
        "best": history.best(),
        "polarity_flipped": history.polarity_flipped,
        "config": echo,
    });
    write_json(&a.out.join("train.json"), &summary)?;
    match history.best() {
        Some(b) => println!(
            "{}: best epoch {} of {}, val loss {:.6}, val F1 {:.4}",
            kind.name(),
            b.epoch,
            history.records.len(),
            b.val_loss,
            b.val_f1
        ),
        None => println!("{}: no epochs run; wrote the initialisation", kind.name()),
    }
    Ok(())
}

// -------------------------------------------------------- model selection

/// A predictor chosen on the command line.
enum Selected<T> {
    Trained(Trained<T>),
    Oracle(GoldOracle),
    Random,
}

impl<T: Scalar> Selected<T> {
    fn name(&self) -> &'static str {
        match self {
            Selected::Trained(m) => m.kind().name(),
            Selected::Oracle(_) => "oracle",
            Selected::Random => "random",
        }
    }
}

fn select<T: Scalar>(s: &SelectArgs, world: &World<T>) -> Result<Selected<T>> {
    let learned = |m: EvalModel| match m {
        EvalModel::Dan => Some(ModelKind::Dan),
        EvalModel::Ablation => Some(ModelKind::Ablation),
        EvalModel::Classifier => Some(ModelKind::Classifier),
        EvalModel::Oracle | EvalModel::Random => None,
    };
    match (&s.checkpoint, s.model) {
        (Some(path), model) => {
            let ckpt = Checkpoint::load(path)?;
            if let Some(m) = model {
                if learned(m) != Some(ckpt.kind) {
                    return Err(usage(format!(
                        "--model {m:?} does not match the checkpoint's model `{}`",
                        ckpt.kind.name()
                    )));
                }
            }
            let model = ckpt.to_model::<T>()?;
            if model.n_attributes() != world.n_attributes() {
                return Err(CliError::Core(dan::Error::Length {
                    op: "checkpoint attributes vs world",
                    left: model.n_attributes(),
                    right: world.n_attributes(),
                }));
            }
            Ok(Selected::Trained(model))
        }
        (None, Some(EvalModel::Oracle)) => Ok(Selected::Oracle(GoldOracle::new(world))),
        (None, Some(EvalModel::Random)) => Ok(Selected::Random),
        (None, Some(m)) => Err(usage(format!("--model {m:?} needs --checkpoint"))),
        (None, None) => Err(usage("give --checkpoint or --model oracle|random")),
    }
}

// -------------------------------------------------------------------- eval

pub fn cmd_eval(mut cfg: RunConfig, a: &EvalArgs) -> Result<()> {
    let e = &mut cfg.eval;
    config::set(&mut e.split, a.select.split);
    config::set(&mut e.threshold, a.threshold);
    config::set(&mut e.averaging, a.averaging);
    config::set(&mut e.games, a.games);
    config::set(&mut e.max_pairs, a.max_pairs.map(Some));
    match cfg.precision {
        Precision::F32 => eval::<f32>(&cfg, a),
        Precision::F64 => eval::<f64>(&cfg, a),
    }
}

fn ids(xs: &[usize]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn eval<T: Scalar>(cfg: &RunConfig, a: &EvalArgs) -> Result<()> {
    let world = storage::load_world::<T>(&a.select.world)?;
    let model = select(&a.select, &world)?;
    let opts = EvalOptions {
        split: cfg.eval.split,
        threshold: cfg.eval.threshold,
        max_pairs: cfg.eval.max_pairs,
        seed: cfg.seed(),
        averaging: cfg.eval.averaging,
        workers: cfg.workers(),
    };
    let mut rng = Rng::new(cfg.seed());
    let id = |i: usize| world.concepts[i].id.as_str();
    let mut tsv = String::new();
    let metrics = match a.task {
        Task::Discrim => {
            let res = match &model {
                Selected::Trained(m) => eval_discriminativeness(m, &world, &opts)?,
                Selected::Oracle(m) => eval_discriminativeness(m, &world, &opts)?,
                Selected::Random => {
                    let baseline = RandomBaseline::fit(&world.pairs(Split::Train, false)?)?;
                    eval_random_discriminativeness(&baseline, &world, &opts, &mut rng)?
                }
            };
            tsv.push_str("pair\treferent\tcontext\tpredicted\tgold\n");
            for (k, p) in res.predictions.iter().enumerate() {
                let _ = writeln!(tsv, "{k}\t{}\t{}\t{}\t{}", id(p.referent), id(p.context), ids(&p.predicted), ids(&p.gold));
            }
            print_prf_row(model.name(), &res.report);
            json!(res.report)
        }
        Task::Attrib => {
            let res = match &model {
                Selected::Trained(m) if m.kind() == ModelKind::Ablation => {
                    return Err(usage("the ablation has no attribute layer; --task attrib is undefined for it"))
                }
                Selected::Trained(m) => eval_attributes(m, &world, &opts)?,
                Selected::Oracle(m) => eval_attributes(m, &world, &opts)?,
                Selected::Random => {
                    let baseline = RandomBaseline::fit_attributes(&world.split_concepts(Split::Train))?;
                    eval_random_attributes(&baseline, &world, &opts, &mut rng)?
                }
            };
            tsv.push_str("concept\tpredicted\tgold\n");
            for p in &res.predictions {
                let _ = writeln!(tsv, "{}\t{}\t{}", id(p.concept), ids(&p.predicted), ids(&p.gold));
            }
            print_prf_row(model.name(), &res.report);
            json!(res.report)
        }
        Task::Refgame => {
            let (report, games) = match &model {
                Selected::Trained(m) => play_refgame(m, &world, cfg.eval.games, cfg.eval.split, &mut rng)?,
                Selected::Oracle(m) => play_refgame(m, &world, cfg.eval.games, cfg.eval.split, &mut rng)?,
                Selected::Random => return Err(usage("the random baseline is not a speaker")),
            };
            tsv.push_str("game\treferent\tcontext\tattribute\tpolarity\tchoice\tsuccess\n");
            for (k, g) in games.iter().enumerate() {
                let _ = writeln!(
                    tsv,
                    "{k}\t{}\t{}\t{}\t{}\t{}\t{}",
                    id(g.referent),
                    id(g.context),
                    g.utterance.attribute,
                    polarity_name(g.utterance.polarity),
                    choice_name(g.choice),
                    u8::from(g.choice == Choice::Referent)
                );
            }
            println!(
                "{}: success rate {:.4} ({}/{}), chance {:.2}, binomial p = {:.3e}",
                model.name(),
                report.success_rate,
                report.successes,
                report.n_pairs,
                report.chance_level,
                report.binomial_p_value
            );
            json!(report)
        }
    };
    if let Some(out) = &a.out {
        create_dir(out)?;
        let report = json!({
            "task": a.task.to_possible_value().map(|v| v.get_name().to_string()),
            "model": model.name(),
            "seed": cfg.seed(),
            "metrics": metrics,
            "config": {
                "command": "eval",
                "world": a.select.world,
                "checkpoint": a.select.checkpoint,
                "config": cfg.to_json(),
            },
        });
        write_json(&out.join("report.json"), &report)?;
        write_text(&out.join("predictions.tsv"), &tsv)?;
    }
    Ok(())
}

fn print_prf_row(model: &str, r: &dan::evaluator::PrfReport) {
    println!("{:<12} {:>9} {:>9} {:>9}", "model", "precision", "recall", "F1");
    println!("{:<12} {:>9.4} {:>9.4} {:>9.4}", model, r.precision, r.recall, r.f1);
}

fn polarity_name(p: Option<Polarity>) -> &'static str {
    match p {
        None => "bare",
        Some(Polarity::Referent) => "referent",
        Some(Polarity::Context) => "context",
    }
}

fn choice_name(c: Choice) -> &'static str {
    match c {
        Choice::Referent => "referent",
        Choice::Context => "context",
    }
}

// ----------------------------------------------------------------- predict

pub fn cmd_predict(mut cfg: RunConfig, a: &PredictArgs) -> Result<()> {
    config::set(&mut cfg.eval.threshold, a.threshold);
    match cfg.precision {
        Precision::F32 => predict::<f32>(&cfg, a),
        Precision::F64 => predict::<f64>(&cfg, a),
    }
}

fn predict<T: Scalar>(cfg: &RunConfig, a: &PredictArgs) -> Result<()> {
    let world = storage::load_world::<T>(&a.world)?;
    let model = Checkpoint::load(&a.checkpoint)?.to_model::<T>()?;
    let r = world.concept_index(&a.referent)?;
    let c = world.concept_index(&a.context)?;
    let (v_r, v_c) = (world.concept_vector(r)?, world.concept_vector(c)?);
    let pair = PairView {
        referent: r,
        context: c,
        v_r: &v_r,
        v_c: &v_c,
    };
    let t = T::of(cfg.eval.threshold);
    let names = |xs: &[usize]| -> Vec<&str> { xs.iter().map(|&i| world.space.name(i)).collect() };
    let scores: Vec<f64> = model.discriminative_scores(&pair)?.iter().map(|s| s.to_f64().unwrap_or(f64::NAN)).collect();
    let set = model.discriminative_set(&pair, t)?;
    let utterance = model.speak(&pair)?;
    let mut out = json!({
        "model": model.kind(),
        "referent": a.referent,
        "context": a.context,
        "threshold": cfg.eval.threshold,
        "discriminative": names(&set),
        "scores": scores,
        "utterance": {
            "attribute": world.space.name(utterance.attribute),
            "polarity": polarity_name(utterance.polarity),
        },
    });
    if model.kind() != ModelKind::Ablation {
        let attrs = |i: usize, v: &[T]| -> Result<Vec<String>> {
            let bits = model.predict_attribute_set(i, v, t)?;
            Ok(names(&bits.ones()).into_iter().map(String::from).collect())
        };
        out["referent_attributes"] = json!(attrs(r, &v_r)?);
        out["context_attributes"] = json!(attrs(c, &v_c)?);
    }
    print_json(&out);
    Ok(())
}

// --------------------------------------------------------------- gradcheck

pub fn cmd_gradcheck(cfg: RunConfig, a: &GradcheckArgs) -> Result<()> {
    let mut gc = GradcheckConfig {
        seed: cfg.seed(),
        dan_options: cfg.train.dan_options,
        inject_sign_flip: a.inject_sign_flip,
        ..GradcheckConfig::default()
    };
    config::set(&mut gc.draws, a.draws);
    config::set(&mut gc.input, a.input);
    config::set(&mut gc.attributes, a.attributes);
    config::set(&mut gc.hidden, a.hidden);
    config::set(&mut gc.batch, a.batch);
    if a.no_attr_sigmoid {
        gc.dan_options.attr_sigmoid = false;
    }
    if a.no_bias {
        gc.dan_options.bias = false;
    }
    let kinds = match a.model {
        Some(m) => vec![m.into()],
        None => vec![ModelKind::Dan, ModelKind::Ablation, ModelKind::Classifier],
    };
    let reports = kinds
        .into_iter()
        .map(|k| match cfg.precision {
            Precision::F32 => run_gradcheck::<f32>(k, &gc),
            Precision::F64 => run_gradcheck::<f64>(k, &gc),
        })
        .collect::<dan::Result<Vec<GradcheckReport>>>()?;
    println!("{:<11} {:<12} {:>14} {:>14}", "model", "block", "max_rel_err", "max_abs_err");
    for r in &reports {
        for b in &r.blocks {
            println!("{:<11} {:<12} {:>14.3e} {:>14.3e}", r.model.name(), b.block, b.max_rel_error, b.max_abs_error);
        }
    }
    if let Some(out) = &a.out {
        write_json(out, &json!({ "config": gc, "reports": reports }))?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.model.name()).collect();
    let tol = reports.first().map_or(0.0, |r| r.tolerance.max_rel_error);
    if failed.is_empty() {
        println!("PASS: all blocks below {tol:e}");
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "gradient check failed for {} (tolerance {tol:e})",
            failed.join(", ")
        )))
    }
}

// ------------------------------------------------------------ refgame-demo

pub fn cmd_refgame_demo(mut cfg: RunConfig, a: &RefgameDemoArgs) -> Result<()> {
    config::set(&mut cfg.eval.split, a.select.split);
    match cfg.precision {
        Precision::F32 => refgame_demo::<f32>(&cfg, a),
        Precision::F64 => refgame_demo::<f64>(&cfg, a),
    }
}

fn refgame_demo<T: Scalar>(cfg: &RunConfig, a: &RefgameDemoArgs) -> Result<()> {
    let world = storage::load_world::<T>(&a.select.world)?;
    let model = select(&a.select, &world)?;
    let mut rng = Rng::new(cfg.seed());
    let (report, games) = match &model {
        Selected::Trained(m) => play_refgame(m, &world, a.games, cfg.eval.split, &mut rng)?,
        Selected::Oracle(m) => play_refgame(m, &world, a.games, cfg.eval.split, &mut rng)?,
        Selected::Random => return Err(usage("the random baseline is not a speaker")),
    };
    for (k, g) in games.iter().enumerate() {
        println!("{}", describe_game(k + 1, g, &world));
    }
    println!(
        "{} of {} games won ({:.1}%), binomial p = {:.3e}",
        report.successes,
        report.n_pairs,
        100.0 * report.success_rate,
        report.binomial_p_value
    );
    Ok(())
}

fn describe_game<T>(k: usize, g: &GameRecord, world: &World<T>) -> String {
    let r = &world.concepts[g.referent].id;
    let c = &world.concepts[g.context].id;
    let attr = world.space.name(g.utterance.attribute);
    let said = match g.utterance.polarity {
        None | Some(Polarity::Referent) => format!("the one that is `{attr}`"),
        Some(Polarity::Context) => format!("the one that is not `{attr}`"),
    };
    let picked = match g.choice {
        Choice::Referent => r,
        Choice::Context => c,
    };
    let mark = if g.choice == Choice::Referent { "won" } else { "lost" };
    let guess = if g.informative { "" } else { " (guess)" };
    format!("{k:>3}. {r} (#{}) vs {c} (#{}): \"{said}\" -> {picked}{guess}, {mark}", g.referent_instance, g.context_instance)
}
