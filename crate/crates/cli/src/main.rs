use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sentifuse_cli::{
    cmd_classify, cmd_evaluate, cmd_fuse, cmd_ingest, cmd_report, cmd_score, cmd_simulate, CliError, RunConfig,
    SimulateOptions,
};

/// Multi-backend zero-shot sentiment classification with majority-vote fusion.
#[derive(Parser)]
#[command(name = "sentifuse", version)]
struct Cli {
    /// Run configuration file.
    #[arg(long, global = true, default_value = "sentifuse.toml")]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and normalize the corpus into the output directory.
    Ingest,
    /// Classify every post with every enabled backend (resumable).
    Classify,
    /// Majority-vote the verdict stores into fused labels.
    Fuse,
    /// Sentiment distributions and overall scores per topic and language.
    Score {
        /// Also write stacked-bar and grouped-bar csv files for plotting.
        #[arg(long)]
        plot_data: bool,
    },
    /// Error rates, F1, agreement and t-tests against gold labels.
    Evaluate,
    /// Plain-text summary of scores and, if labeled, the evaluation.
    Report,
    /// Monte-Carlo fusion study on simulated backends.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 10_000)]
    n_posts: usize,
    /// Comma-separated per-backend error rates.
    #[arg(long, value_delimiter = ',', default_values_t = [0.125, 0.082, 0.115, 0.092, 0.116])]
    error_rates: Vec<f64>,
    /// Comma-separated shared-error probabilities to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0])]
    correlation: Vec<f64>,
    /// Seeds per correlation value.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Class prior as negative,neutral,positive.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    prior: Option<Vec<f64>>,
}

fn run(cli: Cli) -> Result<String, CliError> {
    if let Command::Simulate(args) = &cli.command {
        // the config file is optional here
        let cfg = if cli.config.is_file() {
            Some(RunConfig::load(&cli.config)?)
        } else {
            None
        };
        let out = cli
            .out
            .clone()
            .or_else(|| cfg.as_ref().map(|c| c.output_dir.clone()))
            .unwrap_or_else(|| PathBuf::from("out"));
        let seed = cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
        let class_prior = match &args.prior {
            Some(p) => [p[0], p[1], p[2]],
            None => [1.0 / 3.0; 3],
        };
        return cmd_simulate(
            &out,
            &SimulateOptions {
                n_posts: args.n_posts,
                error_rates: args.error_rates.clone(),
                correlations: args.correlation.clone(),
                runs: args.runs,
                class_prior,
                seed,
            },
        );
    }

    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    match cli.command {
        Command::Ingest => cmd_ingest(&cfg),
        Command::Classify => cmd_classify(&cfg),
        Command::Fuse => cmd_fuse(&cfg),
        Command::Score { plot_data } => cmd_score(&cfg, plot_data),
        Command::Evaluate => cmd_evaluate(&cfg),
        Command::Report => cmd_report(&cfg),
        Command::Simulate(_) => unreachable!(),
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
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            if !summary.ends_with('\n') {
                println!();
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
