use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use effort_cli::commands;
use effort_cli::{exit_code, RunConfig};
use effort_core::generator::SamplingMode;
use effort_core::trainer::Criterion;
use effort_core::{Error, Result};

#[derive(Parser)]
#[command(name = "effort", version, about = "Semi-supervised motion VAE: ingest, label, train, generate")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory for every artifact.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load or synthesize clips, normalize and cache them.
    Ingest(IngestArgs),
    /// Apply between-fill and dilation to the manual labels.
    Augment(AugmentArgs),
    Train(TrainArgs),
    /// Classifier, reconstruction and generation metrics.
    Eval(EvalArgs),
    /// Sample sequences of one class.
    Generate(GenerateArgs),
    /// Serve the HTTP API for the labeling studio.
    Serve(ServeArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Clip file or directory.
    source: Option<PathBuf>,
    #[arg(long)]
    synthetic: bool,
    #[arg(long)]
    format: Option<String>,
    /// Label CSV to merge into the run's store.
    #[arg(long)]
    import_labels: Option<PathBuf>,
    /// Label this fraction of windows with the simulated annotator.
    #[arg(long)]
    simulate_labels: Option<f64>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    no_between: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// `dance` (validation loss) or `watch` (validation accuracy).
    #[arg(long)]
    criterion: Option<Criterion>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Continue from a checkpoint manifest.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    samples_per_class: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Class name or index.
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// `json`, `csv` or `binary`.
    #[arg(long)]
    format: Option<String>,
    /// Sample stored latents with this noise bandwidth instead of the
    /// class Gaussians.
    #[arg(long)]
    kde: Option<f64>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    port: Option<u16>,
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) if !path.exists() => {
            return Err(Error::Config(format!("config file {} does not exist", path.display())))
        }
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = base_config(&cli)?;
    let mut stdout = io::stdout();
    match cli.command {
        Command::Ingest(a) => {
            if a.synthetic {
                cfg.data.synthetic = true;
            }
            if let Some(s) = a.source {
                cfg.data.source = Some(s);
                cfg.data.synthetic = false;
            }
            if a.format.is_some() {
                cfg.data.format = a.format;
            }
            if a.import_labels.is_some() {
                cfg.labels.import = a.import_labels;
            }
            if a.simulate_labels.is_some() {
                cfg.labels.simulate_fraction = a.simulate_labels;
            }
            commands::ingest(&cfg.resolve()?, &mut stdout).map(drop)
        }
        Command::Augment(a) => {
            if let Some(r) = a.radius {
                cfg.labels.radius = r;
            }
            if a.no_between {
                cfg.labels.between = false;
            }
            commands::augment(&cfg.resolve()?, &mut stdout).map(drop)
        }
        Command::Train(a) => {
            let t = &mut cfg.train;
            t.epochs = a.epochs.unwrap_or(t.epochs);
            t.learning_rate = a.lr.unwrap_or(t.learning_rate);
            t.batch_size = a.batch_size.unwrap_or(t.batch_size);
            t.criterion = a.criterion.unwrap_or(t.criterion);
            if a.alpha.is_some() {
                t.alpha = a.alpha;
            }
            if a.max_steps.is_some() {
                t.max_steps_per_epoch = a.max_steps;
            }
            commands::train(&cfg.resolve()?, a.resume.as_deref(), &mut stdout).map(drop)
        }
        Command::Eval(a) => {
            if let Some(n) = a.samples_per_class {
                cfg.eval.samples_per_class = n;
            }
            commands::eval(&cfg.resolve()?, a.checkpoint.as_deref(), &mut stdout).map(drop)
        }
        Command::Generate(a) => {
            let g = &mut cfg.generate;
            if a.label.is_some() {
                g.label = a.label;
            }
            g.count = a.count.unwrap_or(g.count);
            g.format = a.format.unwrap_or(g.format.clone());
            if let Some(bandwidth) = a.kde {
                g.sampling = SamplingMode::Kde { bandwidth };
            }
            commands::generate(&cfg.resolve()?, a.checkpoint.as_deref(), &mut stdout).map(drop)
        }
        Command::Serve(a) => {
            let cfg = cfg.resolve()?;
            let mut service = commands::service_config(&cfg, |k| std::env::var(k).ok())?;
            if let Some(h) = a.host {
                service.host = h;
            }
            if let Some(p) = a.port {
                service.port = p;
            }
            commands::serve(service, &mut stdout)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { effort_cli::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
