//! Subcommand definitions and their implementations. `main` only parses
//! arguments and maps errors to exit codes.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use egpt_core::features::{build_sequence, decode_prediction, PredictionBlocks};
use egpt_core::graphmetrics;
use egpt_core::synthgen::{generate_dataset, Adjacency, Dataset, TemporalSnapshot};
use egpt_core::trainer::{self, random_baseline_f1, LinkScores};
use serde::Serialize;

use crate::checkpoint::{self, Checkpoint};
use crate::config::RunConfig;
use crate::dataset::{read_dataset, write_dataset, write_prediction};
use crate::error::{CliError, Result};
use crate::report::{self, SweepLog};

#[derive(Debug, Parser)]
#[command(name = "egpt", version, about = "Synthesize temporal social networks and forecast their next step")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Run configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset directory to read (or, for `generate`, to write).
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Checkpoint file: written by `train`, read by `predict` and `evaluate`.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory (a file for `print-config`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Rollout length for `predict`.
    #[arg(long, global = true, default_value_t = 1)]
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset directory.
    Generate,
    /// Train on a dataset, then write a checkpoint and a report.
    Train,
    /// Roll a checkpoint forward and list recommended links per user.
    Predict,
    /// Score next-step links and compute structure and homophily tables.
    Evaluate,
    /// Train every configuration in the sweep grid.
    Sweep,
    /// Print the full configuration with defaults filled in.
    PrintConfig,
}

struct Context {
    config: RunConfig,
    args: CommonArgs,
    seed: u64,
}

impl Context {
    fn new(args: CommonArgs) -> Result<Self> {
        let config = RunConfig::load_or_default(args.config.as_deref())?;
        let seed = args.seed.unwrap_or(config.seed);
        Ok(Context { config, args, seed })
    }

    fn dataset_dir(&self) -> &Path {
        self.args.dataset.as_deref().unwrap_or(&self.config.paths.dataset)
    }

    fn checkpoint_path(&self) -> &Path {
        self.args.checkpoint.as_deref().unwrap_or(&self.config.paths.checkpoint)
    }

    fn out_dir(&self) -> &Path {
        self.args.out.as_deref().unwrap_or(&self.config.paths.reports)
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let ctx = Context::new(cli.common)?;
    match cli.command {
        Command::Generate => generate(&ctx, out),
        Command::Train => train(&ctx, out),
        Command::Predict => predict(&ctx, out),
        Command::Evaluate => evaluate(&ctx, out),
        Command::Sweep => sweep(&ctx, out),
        Command::PrintConfig => print_config(&ctx, out),
    }
}

fn say(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| CliError::io("<stdout>", e))
}

fn generate(ctx: &Context, out: &mut dyn Write) -> Result<()> {
    let dir = ctx.args.out.as_deref().unwrap_or(ctx.dataset_dir());
    let dataset = generate_dataset(&ctx.config.dataset, ctx.seed)?;
    write_dataset(dir, &dataset)?;
    say(
        out,
        format_args!(
            "wrote {} users x {} steps (seed {}) to {}",
            dataset.user_count(),
            dataset.steps(),
            ctx.seed,
            dir.display()
        ),
    )
}

fn train(ctx: &Context, out: &mut dyn Write) -> Result<()> {
    let dataset = read_dataset(ctx.dataset_dir())?;
    let hp = &ctx.config.train;
    let (model, report) = trainer::train(&dataset, hp, ctx.seed)?;
    checkpoint::save(ctx.checkpoint_path(), &Checkpoint::new(&model, hp, ctx.seed))?;
    let report_path = ctx.out_dir().join("train_report.json");
    report::write_json(&report_path, &report)?;
    say(out, report::train_summary(&report))?;
    say(out, format_args!("checkpoint {}", ctx.checkpoint_path().display()))?;
    say(out, format_args!("report {}", report_path.display()))
}

/// One recommended link: `candidate` is not yet connected to `user`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub step: usize,
    pub user: usize,
    pub rank: usize,
    pub candidate: usize,
    pub score: f64,
    pub predicted_link: bool,
}

/// Ranks every non-neighbour of each user by symmetrized link score,
/// highest first, ties broken by candidate index, keeping `top` per user.
pub fn rank_new_links(
    blocks: &PredictionBlocks,
    previous: &Adjacency,
    step: usize,
    threshold: f64,
    top: usize,
) -> Vec<Recommendation> {
    let s = &blocks.adjacency_scores;
    let n = previous.len();
    let mut out = Vec::new();
    for i in 0..n {
        let mut cands: Vec<(usize, f64)> = (0..n)
            .filter(|&j| j != i && !previous.has_edge(i, j))
            .map(|j| (j, 0.5 * (s.row(i)[j] + s.row(j)[i])))
            .collect();
        cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out.extend(cands.into_iter().take(top).enumerate().map(|(r, (j, score))| Recommendation {
            step,
            user: i,
            rank: r + 1,
            candidate: j,
            score,
            predicted_link: score > threshold,
        }));
    }
    out
}

fn load_pair(ctx: &Context) -> Result<(egpt_core::egpt::EgptModel, trainer::Hyperparams, Dataset)> {
    let (model, hp) = checkpoint::load_model(ctx.checkpoint_path())?;
    let dataset = read_dataset(ctx.dataset_dir())?;
    if model.config().layout.users != dataset.user_count() {
        return Err(CliError::Core(egpt_core::Error::Layout(format!(
            "checkpoint expects {} users, dataset has {}",
            model.config().layout.users,
            dataset.user_count()
        ))));
    }
    Ok((model, hp, dataset))
}

fn predict(ctx: &Context, out: &mut dyn Write) -> Result<()> {
    let (model, hp, dataset) = load_pair(ctx)?;
    let k = ctx.args.steps;
    let seq = build_sequence(&dataset)?;
    let rolled = model.rollout(&seq, k)?;
    let mut previous = dataset
        .snapshots
        .iter()
        .max_by_key(|s| s.step)
        .expect("validated dataset is non-empty")
        .clone();
    let mut predicted: Vec<TemporalSnapshot> = Vec::with_capacity(k);
    let mut recs = Vec::new();
    for blocks in &rolled {
        let step = previous.step + 1;
        // Written snapshots use the trained threshold; the rollout's own
        // feedback uses the model default.
        let snap = decode_prediction(blocks, step, hp.threshold)?;
        recs.extend(rank_new_links(
            blocks,
            &previous.adjacency,
            step,
            hp.threshold,
            ctx.config.predict.recommendations,
        ));
        previous = snap.clone();
        predicted.push(snap);
    }
    let dir = ctx.out_dir().join("prediction");
    write_prediction(&dir, &dataset, predicted)?;
    let links = ctx.out_dir().join("recommendations.csv");
    let mut w = csv::Writer::from_path(&links).map_err(|e| CliError::format(&links, e))?;
    for r in &recs {
        w.serialize(r).map_err(|e| CliError::format(&links, e))?;
    }
    w.flush().map_err(|e| CliError::io(&links, e))?;
    say(out, format_args!("predicted {k} step(s) into {}", dir.display()))?;
    say(out, format_args!("recommendations {}", links.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Evaluation {
    hyperparameters: String,
    model: LinkScores,
    random_f1: f64,
    persistence: LinkScores,
}

fn evaluate(ctx: &Context, out: &mut dyn Write) -> Result<()> {
    let (model, hp, dataset) = load_pair(ctx)?;
    let scores = trainer::evaluate_links(&model, &dataset, hp.threshold)?;
    let persistence = trainer::persistence_baseline(&dataset)?;
    let c = scores.counts;
    let random = LinkScores {
        precision: c.base_rate(),
        recall: c.predicted_rate(),
        f1: random_baseline_f1(c.base_rate(), c.predicted_rate()),
        counts: Default::default(),
    };
    let dir = ctx.out_dir();
    report::write_link_scores(
        &dir.join("link_scores.csv"),
        &[
            (hp.label(), scores),
            ("random (matched rate)".to_string(), random),
            ("persistence".to_string(), persistence),
        ],
    )?;
    report::write_json(
        &dir.join("evaluation.json"),
        &Evaluation {
            hyperparameters: hp.label(),
            model: scores,
            random_f1: random.f1,
            persistence,
        },
    )?;

    let mut truth: Vec<TemporalSnapshot> = dataset.snapshots.clone();
    truth.sort_by_key(|s| s.step);
    report::write_metrics(dir, "truth", &graphmetrics::report(&truth)?)?;

    // Observed steps 1..T-1 followed by the model's forecast of step T.
    let seq = build_sequence(&dataset)?;
    let blocks = model.predict_next(&seq.prefix(seq.len() - 1)?)?;
    let last = truth.last().expect("validated dataset is non-empty").step;
    let mut forecast = truth[..truth.len() - 1].to_vec();
    forecast.push(decode_prediction(&blocks, last, hp.threshold)?);
    report::write_metrics(dir, "predicted", &graphmetrics::report(&forecast)?)?;

    say(
        out,
        format_args!(
            "{}  P {:.4}  R {:.4}  F1 {:.4}  (random {:.4}, persistence {:.4})",
            hp.label(),
            scores.precision,
            scores.recall,
            scores.f1,
            random.f1,
            persistence.f1
        ),
    )?;
    say(out, format_args!("reports in {}", dir.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SweepSummaryRow {
    rank: Option<usize>,
    cell: usize,
    hyperparameters: String,
    f1: Option<f64>,
    error: Option<String>,
}

fn sweep(ctx: &Context, out: &mut dyn Write) -> Result<()> {
    let grid = &ctx.config.sweep.grid;
    if grid.is_empty() {
        return Err(CliError::Usage("the sweep grid is empty".into()));
    }
    let dataset = read_dataset(ctx.dataset_dir())?;
    let dir = ctx.out_dir();
    let mut log = SweepLog::create(&dir.join("sweep.csv"))?;
    let mut log_error = None;
    let rows = trainer::sweep(&dataset, grid, ctx.seed, |row| {
        if log_error.is_none() {
            log_error = log.record(row).err();
        }
    })?;
    if let Some(e) = log_error {
        return Err(e);
    }
    let summary: Vec<SweepSummaryRow> = rows
        .iter()
        .map(|r| SweepSummaryRow {
            rank: trainer::rank_of(&rows, r.cell),
            cell: r.cell,
            hyperparameters: r.hyperparams.label(),
            f1: r.f1(),
            error: r.outcome.as_ref().err().cloned(),
        })
        .collect();
    report::write_json(&dir.join("sweep.json"), &summary)?;
    for r in &summary {
        say(
            out,
            format_args!(
                "{:>2}  {}  F1 {}",
                r.rank.map_or_else(|| "-".to_string(), |x| x.to_string()),
                r.hyperparameters,
                r.f1.map_or_else(|| r.error.clone().unwrap_or_default(), |f| format!("{f:.4}"))
            ),
        )?;
    }
    Ok(())
}

fn print_config(ctx: &Context, out: &mut dyn Write) -> Result<()> {
    let mut config = ctx.config.clone();
    config.seed = ctx.seed;
    let text = config.to_toml();
    match &ctx.args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e)),
    }
}
