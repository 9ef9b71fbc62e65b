//! `ppgmm`: projection pursuit on Gaussian mixture densities.

mod commands;
mod config;
mod svg;

use clap::{Args, Parser, Subcommand};
use ppgmm::data::PreprocessMode;
use ppgmm::gmm::CovarianceModel;
use ppgmm::negentropy::EstimatorKind;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use commands::{PlotOptions, SimulateKind};
use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] ppgmm::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(ppgmm::Error::InvalidArgument(_)) => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
        }
    }
}

fn parse_with<T: FromStr<Err = ppgmm::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: ppgmm::Error| e.to_string())
}

#[derive(Parser)]
#[command(
    name = "ppgmm",
    version,
    about = "Projection pursuit based on Gaussian mixtures and genetic algorithms"
)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated dataset.
    Simulate {
        #[command(subcommand)]
        kind: SimulateCommand,
    },
    /// Fit Gaussian mixtures and select one by BIC.
    Fit {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        gmm: GmmArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Search for the projection maximizing negentropy.
    Pursue {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        pursuit: PursuitArgs,
        /// Model JSON written by `fit`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Compare the negentropy approximations and PCA.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        pursuit: PursuitArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Project data onto a basis written by `pursue`.
    Project {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a projected CSV as SVG.
    Plot {
        /// Projected CSV with one or two feature columns.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Basis CSV; draws biplot arrows on 2-D plots.
        #[arg(long)]
        basis: Option<PathBuf>,
        /// Histogram bins for 1-D plots.
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long, default_value = "")]
        title: String,
        #[arg(long)]
        label_column: Option<String>,
    },
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Gaussian triangle clusters in the first two coordinates plus noise.
    Triangle {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        p: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Breiman's three-class waveform data with 21 features.
    Waveform {
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Options shared by the commands that read a run configuration.
#[derive(Args)]
struct RunArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// `center` or `center_scale`.
    #[arg(long, value_parser = parse_with::<PreprocessMode>)]
    preprocess: Option<PreprocessMode>,
    #[arg(long)]
    label_column: Option<String>,
    /// The input CSV has no header row.
    #[arg(long)]
    no_header: bool,
}

#[derive(Args)]
struct GmmArgs {
    #[arg(long)]
    g_min: Option<usize>,
    #[arg(long)]
    g_max: Option<usize>,
    /// Comma-separated covariance models, e.g. `EII,VVI`.
    #[arg(long, value_delimiter = ',', value_parser = parse_with::<CovarianceModel>)]
    models: Option<Vec<CovarianceModel>>,
}

#[derive(Args)]
struct PursuitArgs {
    #[arg(long)]
    d: Option<usize>,
    /// MC, UT, VAR or SOTE.
    #[arg(long, value_parser = parse_with::<EstimatorKind>)]
    estimator: Option<EstimatorKind>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    mc_seed: Option<u64>,
    /// Seed the initial population with the PCA basis.
    #[arg(long)]
    pca_init: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if let Some(v) = &self.input {
            cfg.input = Some(v.clone());
        }
        if let Some(v) = self.seed {
            cfg.seed = Some(v);
        }
        if let Some(v) = self.preprocess {
            cfg.preprocess = v;
        }
        if let Some(v) = &self.label_column {
            cfg.label_column = Some(v.clone());
        }
        if self.no_header {
            cfg.has_header = false;
        }
        Ok(cfg)
    }
}

impl GmmArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.g_min {
            cfg.gmm.g_min = v;
        }
        if let Some(v) = self.g_max {
            cfg.gmm.g_max = v;
        }
        if let Some(v) = &self.models {
            cfg.gmm.models = v.clone();
        }
    }
}

impl PursuitArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.d {
            cfg.d = v;
        }
        if let Some(v) = self.estimator {
            cfg.estimator = v;
        }
        if let Some(v) = self.mc_samples {
            cfg.mc_samples = v;
        }
        if let Some(v) = self.mc_seed {
            cfg.mc_seed = Some(v);
        }
        if self.pca_init {
            cfg.pca_init = true;
        }
    }
}

fn run(command: Command) -> Result<String, CliError> {
    match command {
        Command::Simulate { kind } => match kind {
            SimulateCommand::Triangle { n, p, seed, out } => {
                commands::simulate(SimulateKind::Triangle { n, p }, seed, &out)
            }
            SimulateCommand::Waveform { n, seed, out } => commands::simulate(SimulateKind::Waveform { n }, seed, &out),
        },
        Command::Fit { run, gmm, out_dir } => {
            let mut cfg = run.resolve()?;
            gmm.apply(&mut cfg);
            commands::fit(&cfg, &out_dir)
        }
        Command::Pursue {
            run,
            pursuit,
            model,
            out_dir,
        } => {
            let mut cfg = run.resolve()?;
            pursuit.apply(&mut cfg);
            commands::pursue(&cfg, &model, &out_dir)
        }
        Command::Compare {
            run,
            pursuit,
            model,
            out_dir,
        } => {
            let mut cfg = run.resolve()?;
            pursuit.apply(&mut cfg);
            commands::compare(&cfg, &model, &out_dir)
        }
        Command::Project { run, model, basis, out } => commands::project(&run.resolve()?, &model, &basis, &out),
        Command::Plot {
            input,
            out,
            basis,
            bins,
            title,
            label_column,
        } => {
            let cfg = RunConfig {
                label_column,
                ..RunConfig::default()
            };
            commands::plot(&cfg, &input, &out, &PlotOptions { basis, bins, title })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
