use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use revgn_cli::config::RunConfig;
use revgn_cli::{analyze, plot, run, verify};

/// Exact Gauss-Newton training for reversible networks.
#[derive(Parser)]
#[command(name = "revgn", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every seed (and swept learning rate) of a run config.
    Train { config: PathBuf },
    /// Run the oracle checks.
    Verify {
        /// Include the step-size scaling study.
        #[arg(long)]
        full: bool,
        /// Print reports as JSON lines.
        #[arg(long)]
        json: bool,
    },
    /// Recompute NTK, CKA and weight-cosine metrics from checkpoints.
    Analyze {
        glob: String,
        /// Compare against this checkpoint instead of each lineage's epoch 0.
        #[arg(long)]
        against: Option<PathBuf>,
    },
    /// Render SVG curves from a metrics CSV.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// `Ok(false)` is a check failure (exit 1); errors are usage or input
/// errors (exit 2).
fn dispatch(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::Train { config } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg = RunConfig::parse(&text)?;
            let summary = run::train(&cfg, &text)?;
            for o in &summary.outcomes {
                match &o.failure {
                    Some(f) => println!("FAILED {} seed {} lr {}: {f}", o.run_id, o.seed, o.lr),
                    None => println!("ok {} seed {} lr {}: final train loss {:.6}", o.run_id, o.seed, o.lr, o.final_train_loss.unwrap_or(f64::NAN)),
                }
            }
            if let Some(rep) = &summary.sweep {
                match rep.selected_lr {
                    Some(lr) => println!("sweep: largest non-diverging {} lr = {lr}", rep.optimizer),
                    None => println!("sweep: every {} lr diverged", rep.optimizer),
                }
            }
            println!("output: {}", summary.output_dir.display());
            Ok(!summary.any_failed())
        }
        Cmd::Verify { full, json } => {
            let reports = verify::verify(full);
            for r in &reports {
                if json {
                    println!("{}", serde_json::to_string(r)?);
                } else {
                    println!("{}", verify::format_report(r));
                }
            }
            let failed = reports.iter().filter(|r| !r.pass).count();
            eprintln!("{} checks, {failed} failed", reports.len());
            Ok(failed == 0)
        }
        Cmd::Analyze { glob, against } => {
            for r in analyze::analyze(&glob, against.as_deref())? {
                println!(
                    "{} seed {} epoch {}: ntk_similarity {} cka [{}] weight_cosine [{}]",
                    r.run_id,
                    r.seed,
                    r.epoch,
                    r.ntk_similarity.map_or("-".into(), |v| format!("{v:.6}")),
                    r.cka,
                    r.weight_cosine
                );
            }
            Ok(true)
        }
        Cmd::Plot { csv, out } => {
            for p in plot::plot(&csv, &out)? {
                println!("{}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
