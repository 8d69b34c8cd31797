use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use techimpact::config::PipelineConfig;
use techimpact::error::PipelineError;
use techimpact::stages::StageStatus;
use techimpact::{run_pipeline, run_stage};
use techimpact_core::corpus::{Horizon, ThresholdMode};
use techimpact_core::explain::ShapleyMode;

#[derive(Parser)]
#[command(name = "techimpact", version, about = "Patent impact prediction pipeline")]
struct Cli {
    /// Pipeline config (JSON). Without it a synthetic-corpus default is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; must already exist.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restrict explain, trend tests and topic scores to one horizon.
    #[arg(long, global = true, value_parser = parse_horizon)]
    horizon: Option<Horizon>,
    /// Threshold mode: fixed or stanine.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<ThresholdMode>,
    #[arg(long, global = true)]
    n_permutations: Option<usize>,
    #[arg(long, global = true)]
    top_k: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage in order and write the manifest.
    Run,
    Synth,
    Ingest {
        /// JSONL corpus; overrides the config's corpus_path.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    Label,
    Features,
    Gridsearch,
    Train,
    Cv,
    Evaluate {
        /// Score an existing predictions file instead of the trained models.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    Explain,
    JtTest,
    TopicScore,
    Report,
    /// Print the default config as JSON.
    InitConfig,
}

fn parse_horizon(s: &str) -> Result<Horizon, String> {
    Horizon::parse(s).ok_or_else(|| format!("unknown horizon {s:?}"))
}

fn parse_mode(s: &str) -> Result<ThresholdMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown threshold mode {s:?}"))
}

fn build_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::synthetic(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = Some(o.clone());
    }
    if let Some(h) = cli.horizon {
        cfg.explain.horizons = vec![h];
        cfg.validation.horizons = vec![h];
        cfg.topic.horizon = h;
    }
    if let Some(m) = cli.mode {
        cfg.threshold_mode = m;
    }
    if let Some(n) = cli.n_permutations {
        if let ShapleyMode::Sampled { n_permutations } = &mut cfg.explain.mode {
            *n_permutations = n;
        }
        cfg.validation.n_permutations = n;
    }
    if let Some(k) = cli.top_k {
        cfg.explain.top_k = k;
    }
    if let Command::Ingest { corpus: Some(c) } = &cli.command {
        cfg.corpus_path = Some(c.clone());
        cfg.synth = None;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = build_config(cli)?;
    let stage = match &cli.command {
        Command::InitConfig => {
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            return Ok(());
        }
        Command::Run => {
            let m = run_pipeline(&cfg)?;
            println!("{} stages, {} output files", m.stages.len(), m.outputs.len());
            return Ok(());
        }
        Command::Evaluate { predictions } => {
            return report(run_stage(&cfg, "evaluate", predictions.as_deref())?, "evaluate");
        }
        Command::Synth => "synth",
        Command::Ingest { .. } => "ingest",
        Command::Label => "label",
        Command::Features => "features",
        Command::Gridsearch => "gridsearch",
        Command::Train => "train",
        Command::Cv => "cv",
        Command::Explain => "explain",
        Command::JtTest => "jt-test",
        Command::TopicScore => "topic-score",
        Command::Report => "report",
    };
    report(run_stage(&cfg, stage, None)?, stage)
}

fn report(status: StageStatus, stage: &str) -> Result<(), PipelineError> {
    match status {
        StageStatus::Done(files) => println!("{stage}: wrote {}", files.join(", ")),
        StageStatus::Skipped(why) => println!("{stage}: skipped ({why})"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
