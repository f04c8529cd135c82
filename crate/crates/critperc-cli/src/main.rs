use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use critperc_cli::commands::{self, SampleKind, TailKind};
use critperc_cli::verify::{run_suite, Context, Suite};
use critperc_cli::{CliError, Result, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "critperc", version, about = "Critical percolation cluster experiments")]
struct Cli {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable), e.g. --set samples=50.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Model parameters and estimated scaling constants
    Constants,
    /// Excursion, peeling or cluster samples
    Sample {
        #[arg(long)]
        what: String,
        /// Also write one JSON file per cluster
        #[arg(long)]
        export: bool,
    },
    /// Empirical survival of tau or of the cluster size
    Tails {
        #[arg(long)]
        what: String,
    },
    /// Rescaled diameters and coupled distortions across the n grid
    Scaling,
    /// Displacement of simple random walks from the root
    Walk,
    /// GH and GHP upper bounds between two serialized spaces
    Ghp {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        /// Exhaustive search (small spaces only)
        #[arg(long)]
        exact: bool,
    },
    /// One discretized continuum random tree
    Crt {
        /// Fixed lifetime instead of a sampled one
        #[arg(long)]
        zeta: Option<f64>,
    },
    /// KS tables of cluster walks against continuum walks at matched times
    Compare,
    /// Run an acceptance suite
    Verify {
        #[arg(long)]
        suite: String,
        /// Sample budget multiplier
        #[arg(long, default_value_t = 1.0)]
        budget: f64,
    },
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut overrides = Vec::new();
    for s in &cli.set {
        let (k, v) = s.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(s) = cli.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    if let Some(a) = cli.alpha {
        overrides.push(("alpha".into(), a.to_string()));
    }
    if let Some(o) = &cli.out {
        overrides.push(("out_dir".into(), o.display().to_string()));
    }
    if let Some(w) = cli.workers {
        overrides.push(("workers".into(), w.to_string()));
    }
    RunConfig::load(cli.config.as_deref(), &overrides)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    match &cli.command {
        Command::Constants => commands::constants(&cfg).map(drop),
        Command::Sample { what, export } => commands::sample(&cfg, what.parse::<SampleKind>()?, *export).map(drop),
        Command::Tails { what } => commands::tails(&cfg, what.parse::<TailKind>()?).map(drop),
        Command::Scaling => commands::scaling(&cfg).map(drop),
        Command::Walk => commands::walk(&cfg).map(drop),
        Command::Ghp { x, y, exact } => commands::ghp(&cfg, x, y, *exact).map(drop),
        Command::Crt { zeta } => commands::crt(&cfg, *zeta).map(drop),
        Command::Compare => commands::compare(&cfg).map(drop),
        Command::Verify { suite, budget } => {
            let suite: Suite = suite.parse()?;
            let ctx = Context::new(cfg.seed, *budget, cfg.workers)?;
            let report = run_suite(suite, &ctx);
            for c in &report.criteria {
                println!("{}", c.line());
            }
            let mut art = critperc_cli::output::Artifacts::create(&cfg.out_dir, "verify")?;
            art.write_json(&format!("verify_{}.json", suite.name()), &report)?;
            art.finish(&cfg)?;
            if report.passed {
                Ok(())
            } else {
                let ids: Vec<&str> = report.criteria.iter().filter(|c| !c.passed).map(|c| c.id.as_str()).collect();
                Err(CliError::Criteria(ids.join(", ")))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("critperc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
