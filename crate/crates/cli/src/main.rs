use std::path::PathBuf;
use std::process::ExitCode;

use ambiscene::decoder::read_decoder;
use ambiscene::error::{Error, ErrorKind};
use ambiscene::pipeline::demo::{make_demo_data, simulate_recordings};
use ambiscene::pipeline::{self, PipelineConfig};
use clap::{Parser, Subcommand};

/// Exit codes. Usage errors reported by the argument parser also exit with 2.
const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "ambiscene", version, about = "Ambisonics speech-in-noise scene synthesis and evaluation")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Keep records that are already complete.
    #[arg(long, global = true)]
    resume: bool,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Crop, extend and fit the binaural decoder; fit the compensation filter.
    FitDecoder,
    /// Render the training corpus.
    Synth,
    /// Render loudspeaker feeds, references and mixtures of the evaluation scenes.
    RenderEval,
    /// Score recordings against the evaluation references.
    Evaluate,
    /// Write synthetic inputs and a matching config.toml.
    MakeDemoData {
        dir: PathBuf,
    },
    /// Write bypass and oracle recordings for the rendered evaluation scenes.
    SimulateRecordings {
        #[arg(long, default_value_t = 2)]
        devices: usize,
        /// Output root; defaults to the configured recordings directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(cli: &Cli) -> Result<PipelineConfig, Error> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::FitDecoder => {
            let summary = pipeline::fit_decoder(&load(cli)?)?;
            print!("{}", summary.to_text());
        }
        Command::Synth => {
            let cfg = load(cli)?;
            let outcome = pipeline::synth(&cfg, cli.resume)?;
            println!(
                "{} records written to {}",
                outcome.manifest.records.len(),
                cfg.corpus_dir().display()
            );
            if !outcome.failures.is_empty() {
                for (id, msg) in &outcome.failures {
                    eprintln!("failed {id}: {msg}");
                }
                return Err(Error::Data(format!("{} records failed", outcome.failures.len())));
            }
        }
        Command::RenderEval => {
            let cfg = load(cli)?;
            for b in pipeline::render_eval(&cfg)? {
                println!("{}: noise gain {:.4}", b.name, b.noise_gain);
            }
        }
        Command::Evaluate => {
            let cfg = load(cli)?;
            pipeline::evaluate(&cfg)?;
            let summary = cfg.report_dir().join("summary.txt");
            let text = std::fs::read_to_string(&summary).map_err(|e| Error::io(&summary, e))?;
            print!("{text}");
        }
        Command::MakeDemoData { dir } => {
            let config = make_demo_data(dir, cli.seed.unwrap_or(0))?;
            println!("demo data written; configuration at {}", config.display());
        }
        Command::SimulateRecordings { devices, out } => {
            let cfg = load(cli)?;
            let dec = read_decoder(&cfg.decoder_dir())?;
            let out = out.clone().unwrap_or_else(|| cfg.recordings_dir());
            let files = simulate_recordings(&cfg.output_dir.join(pipeline::EVAL_DIR), &dec, &out, *devices, cfg.seed)?;
            println!("{} recordings written to {}", files.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose {
        "debug"
    } else {
        "warn"
    }))
    .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => EXIT_CONFIG,
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Numeric => EXIT_NUMERIC,
            })
        }
    }
}
