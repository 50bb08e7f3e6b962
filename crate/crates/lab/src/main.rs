use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use otbound_lab::accept::{self, AcceptOptions, CRITERIA};
use otbound_lab::config::{ExperimentConfig, ParameterGrid, SCHEMA_VERSION};
use otbound_lab::families;
use otbound_lab::pipeline;
use otbound_lab::{LabError, Result};

#[derive(Parser)]
#[command(name = "lab", about = "Experiment runner for boundary-regularity diagnostics of optimal transport maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment, or a single family from flags.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        family: Option<String>,
        /// Cells per unit length; may be repeated.
        #[arg(long = "n")]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        amplitudes: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        depth: usize,
    },
    /// Run acceptance criterion `id` (1-11), or `all`.
    Accept { id: String },
    ListFamilies,
    /// Plot a column of an aggregate CSV against the family parameter.
    Plot {
        csv: PathBuf,
        #[arg(long, default_value = "linf_ratio")]
        column: String,
    },
}

fn config_from_flags(
    cli: &Cli,
    family: Option<String>,
    n: Vec<usize>,
    eps: Vec<f64>,
    amplitudes: Vec<f64>,
    depth: usize,
) -> Result<ExperimentConfig> {
    let family = family.ok_or_else(|| LabError::Config("either --config or --family is required".into()))?;
    let cfg = ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        output: cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("lab-out/{family}"))),
        family,
        grid: ParameterGrid { eps, a: amplitudes, ..Default::default() },
        resolutions: if n.is_empty() { vec![64] } else { n },
        seed: cli.seed.unwrap_or(0),
        depth,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::ListFamilies => {
            for e in families::catalog() {
                println!("{:<18} {:<24} {}", e.name, e.params, e.summary);
            }
            Ok(true)
        }
        Command::Plot { csv, column } => {
            let out = pipeline::plot_csv(csv, column)?;
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Accept { id } => {
            let ids: Vec<usize> = if id == "all" {
                CRITERIA.iter().map(|c| c.0).collect()
            } else {
                vec![id.parse().map_err(|_| LabError::Config(format!("criterion id '{id}' is not a number")))?]
            };
            if let Some(t) = cli.threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build_global()
                    .map_err(|e| LabError::Config(e.to_string()))?;
            }
            let opts = AcceptOptions { seed: cli.seed.unwrap_or(AcceptOptions::default().seed) };
            let mut all = true;
            for id in ids {
                let outcome = accept::run_criterion(id, &opts)?;
                for m in &outcome.measurements {
                    let mark = if m.passed { "ok  " } else { "FAIL" };
                    println!("  {mark} {:<55} {:>12.5e}  {}", m.label, m.value, m.bound);
                }
                println!("{}", outcome.line());
                if let Some(dir) = &cli.out {
                    std::fs::create_dir_all(dir)?;
                    let path = dir.join(format!("criterion-{id:02}.json"));
                    std::fs::write(path, serde_json::to_string_pretty(&outcome)?)?;
                }
                all &= outcome.passed;
            }
            Ok(all)
        }
        Command::Run { config, family, n, eps, amplitudes, depth } => {
            let cfg = match config {
                Some(path) => {
                    let mut cfg = ExperimentConfig::load(path)?;
                    if let Some(out) = &cli.out {
                        cfg.output = out.clone();
                    }
                    if let Some(seed) = cli.seed {
                        cfg.seed = seed;
                    }
                    cfg
                }
                None => config_from_flags(&cli, family.clone(), n.clone(), eps.clone(), amplitudes.clone(), *depth)?,
            };
            let summary = pipeline::run(&cfg, cli.threads)?;
            for row in &summary.rows {
                println!(
                    "{:>3} {:<18} param={:<8} n={:<4} E={:.3e} D={:.3e} ratio={:.3} topological={} status={}",
                    row.index, row.family, row.parameter, row.per_unit, row.e, row.d, row.linf_ratio, row.topological, row.status
                );
            }
            for fit in &summary.fits {
                println!("fit {} vs {} (n={}, {} points): slope {:.3}", fit.quantity, fit.against, fit.per_unit, fit.points, fit.slope);
            }
            println!("wrote {} files under {}", summary.files.len(), cfg.output.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
