use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvcluster::experiment::{
    ablate, ablation_table, evaluate_files, export_embeddings, make_synthetic, run_and_write, ExperimentConfig,
    ExperimentError, SynthSpec, Variant,
};

/// Progressive multi-view subspace clustering.
#[derive(Debug, Parser)]
#[command(name = "mvcluster", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic Gaussian-blob dataset and its manifest.
    Synth(SynthArgs),
    /// Run one variant of the pipeline.
    Run(RunArgs),
    /// Run all variants on the same data and seed.
    Ablate(RunArgs),
    /// Re-export the embeddings of a finished run.
    Export {
        /// Output directory of a finished run.
        run_dir: PathBuf,
        /// Destination CSV (default: <run_dir>/embeddings_export.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ACC/NMI/Purity of a predicted-label file against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    clusters: usize,
    #[arg(long, default_value_t = 300)]
    samples: usize,
    #[arg(long, default_value_t = 2)]
    views: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for the view files, labels and manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// NONE, CS, CS+GS, AIS+CS or FULL; overrides the config variant.
    #[arg(long)]
    variant: Option<String>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, ExperimentError> {
        let mut config = ExperimentConfig::from_file(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(v) = &self.variant {
            config.variant = v.parse::<Variant>()?;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        Ok(config)
    }
}

fn configure_threads() -> Result<(), ExperimentError> {
    // Training is sequential; the variable is accepted and validated for
    // forward compatibility with parallel restarts.
    if let Ok(v) = std::env::var("MVCLUSTER_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| ExperimentError::Config(format!("MVCLUSTER_THREADS must be a positive integer, got {v:?}")))?;
        log::debug!("thread budget {n}");
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), ExperimentError> {
    configure_threads()?;
    match cli.command {
        Command::Synth(a) => {
            let spec = SynthSpec {
                clusters: a.clusters,
                samples: a.samples,
                views: a.views,
                noise: a.noise,
                seed: a.seed,
                ..SynthSpec::default()
            };
            let manifest = make_synthetic(&spec, &a.out)?;
            println!("{}", manifest.display());
        }
        Command::Run(a) => {
            let config = a.load()?;
            let report = run_and_write(&config)?;
            match &report.metrics {
                Some(m) => print!("{}", m.to_table()),
                None => println!("no labels; embeddings written"),
            }
            println!("outputs in {}", config.output_dir.display());
        }
        Command::Ablate(a) => {
            if a.variant.is_some() {
                return Err(ExperimentError::Config("ablate runs every variant; drop --variant".into()));
            }
            let config = a.load()?;
            let reports = ablate(&config, &Variant::ALL)?;
            print!("{}", ablation_table(&reports));
        }
        Command::Export { run_dir, out } => {
            let out = out.unwrap_or_else(|| run_dir.join("embeddings_export.csv"));
            let rows = export_embeddings(&run_dir, &out)?;
            println!("{rows} rows written to {}", out.display());
        }
        Command::Eval { pred, truth } => {
            print!("{}", evaluate_files(&pred, &truth)?.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
