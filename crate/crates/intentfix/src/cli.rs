//! Command-line interface.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use intentfix_core::classifier::{self, synthetic, Label, LabeledWindow, NaiveBayesModel};
use intentfix_core::gaze::{GazeSample, Screen};
use intentfix_core::rng;
use intentfix_core::sim::{self, AssistMode, Assistance, OperatorKind, Task};

use crate::config::{Grid, GridPreset, RunConfig};
use crate::formats;
use crate::report::{ExperimentReport, FailureReport};
use crate::server::{self, ServerOptions};
use crate::session_log;

#[derive(Debug, Parser)]
#[command(
    name = "intentfix",
    version,
    about = "Gaze-intent virtual fixtures: training, simulation, reports and live bridge"
)]
pub struct Cli {
    /// Seed for every random choice (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run configuration JSON.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the intent classifier from recorded or synthetic gaze.
    Train(TrainArgs),
    /// Write synthetic gaze recordings (fixating with confirmations, scanning).
    Corpus(CorpusArgs),
    /// Run one closed-loop trial, or verify a live session log by replay.
    Simulate(SimulateArgs),
    /// Run a grid of trials and write logs plus a report.
    Experiment(ExperimentArgs),
    /// Aggregate trial logs, or render the boundary-set failure fixture.
    Report(ReportArgs),
    /// Serve live sessions over WebSocket.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Recording as `GAZE.csv` or `GAZE.csv,EVENTS.csv`; repeatable.
    #[arg(long = "session")]
    pub sessions: Vec<String>,
    /// Add this many synthetic windows per class.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Held-out fraction for the accuracy estimate.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    /// Model output path (default: OUT/model.json).
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Windows per recording.
    #[arg(long, default_value_t = 200)]
    pub windows: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AssistArg {
    None,
    GuidanceForce,
    SafetyBoundary,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OperatorArg {
    DirectReacher,
    DistractedScanner,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long, value_enum)]
    pub assist: Option<AssistArg>,
    /// Modulate the fixture by intent confidence.
    #[arg(long)]
    pub intent: bool,
    #[arg(long, value_enum)]
    pub operator: Option<OperatorArg>,
    /// Scene JSON (default: random layout from the seed).
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub timeout: Option<f64>,
    /// Verify a live session log by offline replay instead of simulating.
    #[arg(long)]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Grasping,
    Cutting,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Trials per cell (overrides the config file).
    #[arg(long)]
    pub trials: Option<u32>,
    /// Named grid (overrides the config file).
    #[arg(long, value_enum)]
    pub grid: Option<GridArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GridArg {
    /// Both tasks under each assistance mode, intent-adjusted.
    Validation,
    /// Both tasks under each assistance mode, fixed fixtures.
    ValidationPlain,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Trial logs (JSONL).
    pub logs: Vec<PathBuf>,
    /// Render a named fixture instead of logs.
    #[arg(long, value_parser = ["table2"])]
    pub fixture: Option<String>,
    /// Tabulate failure rates per boundary set from the logs.
    #[arg(long)]
    pub by_set: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    #[arg(long, default_value_t = 20.0)]
    pub tick_hz: f64,
    #[arg(long, default_value_t = 16)]
    pub max_sessions: usize,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match cli.command {
        Command::Train(a) => train(a, &cfg, &out),
        Command::Corpus(a) => corpus(a, &cfg, &out),
        Command::Simulate(a) => simulate(a, cfg, &out),
        Command::Experiment(a) => experiment(a, cfg, &out),
        Command::Report(a) => report(a, cli.out.as_deref()),
        Command::Serve(a) => serve(a, &cfg, cli.out.as_deref()),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_model(path: Option<&Path>) -> Result<NaiveBayesModel> {
    match path {
        Some(p) => formats::load_model(p).with_context(|| format!("model {}", p.display())),
        None => Ok(crate::default_model()),
    }
}

fn train(a: TrainArgs, cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut data: Vec<LabeledWindow> = Vec::new();
    for spec in &a.sessions {
        let (gaze, events) = match spec.split_once(',') {
            Some((g, e)) => (PathBuf::from(g), Some(PathBuf::from(e))),
            None => (PathBuf::from(spec), None),
        };
        let stream = formats::read_gaze_csv(&gaze)?;
        let confirms = match events {
            Some(e) => formats::read_events_csv(&e)?,
            None => Vec::new(),
        };
        data.extend(classifier::label_corpus(&stream, &confirms));
    }
    if let Some(n) = a.synthetic {
        data.extend(synthetic::corpus(n, cfg.seed));
    }
    if data.is_empty() {
        bail!("no training windows: give --session or --synthetic");
    }
    if !(0.0..1.0).contains(&a.holdout) {
        bail!("--holdout must lie in [0, 1)");
    }
    let count = |l| data.iter().filter(|w| w.label == l).count();
    println!(
        "windows: intent {}, no_intent {}",
        count(Label::Intent),
        count(Label::NoIntent)
    );
    let (train, test) = classifier::train_test_split(&data, a.holdout, cfg.seed);
    let held = NaiveBayesModel::fit(&train)?;
    if !test.is_empty() {
        println!(
            "held-out accuracy: {:.4} ({} windows)",
            held.accuracy(&test),
            test.len()
        );
    }
    let model = NaiveBayesModel::fit(&data)?;
    let path = a.model_out.unwrap_or_else(|| out.join("model.json"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    formats::save_model(&path, &model)?;
    println!("model written to {}", path.display());
    Ok(())
}

fn corpus(a: CorpusArgs, cfg: &RunConfig, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let screen = Screen::default();
    let mut rng = rng::seeded(cfg.seed);
    let jitter = synthetic::FIXATION_JITTER;

    // fixations separated by a short tracking gap, each confirmed at its end
    let mut fix = Vec::new();
    let mut confirms = Vec::new();
    for k in 0..a.windows {
        let t0 = k as f64 * 2.5;
        fix.extend(synthetic::fixating_window(&mut rng, &screen, t0, jitter));
        confirms.push(t0 + 2.0);
        fix.push(GazeSample::invalid(t0 + 2.0));
    }
    let mut scan = Vec::new();
    for k in 0..a.windows {
        scan.extend(synthetic::scanning_window(&mut rng, &screen, k as f64 * 2.0, jitter));
    }
    scan.push(GazeSample::invalid(a.windows as f64 * 2.0));

    formats::write_gaze_csv(&out.join("fixating.csv"), &fix)?;
    formats::write_events_csv(&out.join("fixating_events.csv"), &confirms)?;
    formats::write_gaze_csv(&out.join("scanning.csv"), &scan)?;
    println!(
        "wrote fixating.csv, fixating_events.csv, scanning.csv to {}",
        out.display()
    );
    Ok(())
}

fn simulate(a: SimulateArgs, mut cfg: RunConfig, out: &Path) -> Result<()> {
    if let Some(log) = &a.replay {
        let check = session_log::verify_session_log(log)?;
        println!(
            "replayed {} segment(s), {} tick(s): {} mismatching row(s)",
            check.segments,
            check.ticks,
            check.mismatches.len()
        );
        if !check.mismatches.is_empty() {
            bail!(
                "replay diverged at (segment, tick) {:?}",
                &check.mismatches[..check.mismatches.len().min(5)]
            );
        }
        return Ok(());
    }
    if let Some(t) = a.task {
        cfg.task = match t {
            TaskArg::Grasping => Task::Grasping,
            TaskArg::Cutting => Task::Cutting,
        };
    }
    if let Some(m) = a.assist {
        let assistance = match m {
            AssistArg::None => Assistance::None,
            AssistArg::GuidanceForce => Assistance::GuidanceForce,
            AssistArg::SafetyBoundary => Assistance::SafetyBoundary,
        };
        cfg.mode = AssistMode::new(assistance, a.intent);
    } else if a.intent {
        cfg.mode = AssistMode::new(cfg.mode.assistance, true);
    }
    if let Some(o) = a.operator {
        cfg.operator.kind = match o {
            OperatorArg::DirectReacher => OperatorKind::DirectReacher,
            OperatorArg::DistractedScanner => OperatorKind::DistractedScanner,
        };
    }
    if let Some(t) = a.timeout {
        cfg.timeout = t;
    }
    cfg.operator.seed = cfg.seed;
    cfg.validate()?;
    let scene_path = a.scene.or(cfg.scene.clone());
    let scene = match &scene_path {
        Some(p) => formats::load_scene(p)?,
        None => sim::scenario::for_task(cfg.task, &mut rng::seeded(cfg.seed)),
    };
    let model = load_model(a.model.as_deref().or(cfg.model.as_deref()))?;
    let mut record = sim::run_trial(cfg.sim_config(cfg.task, cfg.mode), scene, cfg.operator, &model)?;
    record.seed = cfg.seed;
    ensure_dir(out)?;
    let path = out.join("trial.jsonl");
    formats::save_trials(&path, std::slice::from_ref(&record))?;
    println!(
        "{} / {}: {:?} at {:.2} s after {} attempt(s); log {}",
        cfg.task.name(),
        cfg.mode.label(),
        record.outcome,
        record.completion_time,
        record.attempts,
        path.display()
    );
    Ok(())
}

fn experiment(a: ExperimentArgs, mut cfg: RunConfig, out: &Path) -> Result<()> {
    if let Some(n) = a.trials {
        cfg.n_trials = n;
    }
    if let Some(g) = a.grid {
        cfg.grid = Some(Grid::Preset(match g {
            GridArg::Validation => GridPreset::Validation,
            GridArg::ValidationPlain => GridPreset::ValidationPlain,
        }));
    }
    cfg.validate()?;
    let model = load_model(cfg.model.as_deref())?;
    let cells = cfg.cells();
    let base = cfg.sim_config(cfg.task, cfg.mode);
    let records = sim::run_experiment(&cells, cfg.n_trials, cfg.seed, &base, &cfg.operator, &model)?;
    ensure_dir(out)?;
    formats::save_trials(&out.join("trials.jsonl"), &records)?;
    let report = ExperimentReport::from_records(&records)?;
    formats::write_json(&out.join("report.json"), &report)?;
    let md = report.to_markdown();
    std::fs::write(out.join("report.md"), &md)?;
    print!("{md}");
    log::info!("{} trials written to {}", records.len(), out.display());
    Ok(())
}

fn report(a: ReportArgs, out: Option<&Path>) -> Result<()> {
    let (json, md) = match a.fixture.as_deref() {
        Some(_) => {
            let r = FailureReport::fixture();
            (serde_json::to_value(&r)?, r.to_markdown())
        }
        None => {
            if a.logs.is_empty() {
                bail!("give trial logs or --fixture table2");
            }
            let mut records = Vec::new();
            for p in &a.logs {
                records.extend(formats::load_trials(p)?);
            }
            if records.is_empty() {
                bail!("no trials");
            }
            if a.by_set {
                let r = FailureReport::from_records(&records)?;
                (serde_json::to_value(&r)?, r.to_markdown())
            } else {
                let r = ExperimentReport::from_records(&records)?;
                for w in &r.warnings {
                    eprintln!("warning: {w}");
                }
                (serde_json::to_value(&r)?, r.to_markdown())
            }
        }
    };
    if let Some(dir) = out {
        ensure_dir(dir)?;
        formats::write_json(&dir.join("report.json"), &json)?;
        std::fs::write(dir.join("report.md"), &md)?;
    }
    print!("{md}");
    Ok(())
}

fn serve(a: ServeArgs, cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let opts = ServerOptions {
        tick_hz: a.tick_hz,
        max_sessions: a.max_sessions,
        log_dir: out.map(|o| o.join("sessions")),
        model: load_model(a.model.as_deref().or(cfg.model.as_deref()))?,
        defaults: crate::protocol::SessionConfig {
            task: cfg.task,
            mode: cfg.mode,
            fixture: cfg.fixture,
            scene_seed: cfg.seed,
            ..Default::default()
        },
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let srv = server::start((a.host.as_str(), a.port), opts).await?;
        println!("listening on ws://{}", srv.addr);
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = srv.wait() => {}
        }
        Ok(())
    })
}
