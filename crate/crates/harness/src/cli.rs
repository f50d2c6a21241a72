//! Command-line front end. Exit codes: 0 success, 1 configuration error,
//! 2 runtime error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{RunConfig, SweepConfig};
use crate::dist::{dump_distributions, write_distributions};
use crate::error::{HarnessError, Result};
use crate::lab::{run_theory_lab, LabConfig};
use crate::sweep::lr_sweep;
use crate::train::{resume_with, run};
use crate::verify::run_verify;

#[derive(Debug, Parser)]
#[command(name = "olion", version, about = "Train and audit matrix optimizers on toy problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train from a TOML or JSON config. Extra `--key value` pairs override
    /// config keys, e.g. `--hyperparams.lr 0.01`.
    Run {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Continue a run from a checkpoint directory.
    Resume {
        checkpoint: PathBuf,
        #[arg(long)]
        steps: u64,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Learning-rate sweep over one or more optimizers.
    Sweep {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Singular values and |entry| histograms of checkpointed blocks.
    DumpDist {
        checkpoint: PathBuf,
        /// Comma-separated block names; all blocks when omitted.
        #[arg(long, value_delimiter = ',')]
        blocks: Vec<String>,
        /// Output directory (default: `<checkpoint>/distributions`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo isotropy study over a grid.
    TheoryLab {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Run the invariant suite.
    Verify,
}

/// Turns `--a.b 1 --c=x` into `[("a.b", "1"), ("c", "x")]`. Dashes in keys
/// become underscores.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| HarnessError::ConfigInvalid(format!("expected --key, got '{arg}'")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| HarnessError::ConfigInvalid(format!("--{key} needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

fn execute(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Run { config, overrides } => {
            let cfg = RunConfig::load(&config, &parse_overrides(&overrides)?)?;
            let s = run(&cfg)?;
            println!(
                "completed {} steps, final loss {:.6e}, outputs in {}",
                s.steps_completed,
                s.final_loss,
                cfg.output_dir.display()
            );
            Ok(true)
        }
        Command::Resume {
            checkpoint,
            steps,
            overrides,
        } => {
            let s = resume_with(&checkpoint, steps, &parse_overrides(&overrides)?)?;
            println!("resumed to step {}, final loss {:.6e}", s.steps_completed, s.final_loss);
            Ok(true)
        }
        Command::Sweep { config, overrides } => {
            let sweep = SweepConfig::load(&config, &parse_overrides(&overrides)?)?;
            let table = lr_sweep(&sweep)?;
            for r in &table.rows {
                let loss = r.loss_at_metric.map_or("divergent".to_string(), |l| format!("{l:.6e}"));
                println!(
                    "{:<8} lr={:<10e} loss@{}={loss}",
                    r.optimizer.as_str(),
                    r.lr,
                    table.metric_step
                );
            }
            println!("table written to {}", table.csv_path.display());
            Ok(true)
        }
        Command::DumpDist {
            checkpoint,
            blocks,
            out,
        } => {
            let dists = dump_distributions(&checkpoint, &blocks)?;
            let base = if checkpoint.is_dir() {
                checkpoint.clone()
            } else {
                checkpoint.parent().map(PathBuf::from).unwrap_or_default()
            };
            let out = out.unwrap_or_else(|| base.join("distributions"));
            for path in write_distributions(&out, &dists)? {
                println!("{}", path.display());
            }
            Ok(true)
        }
        Command::TheoryLab { config, overrides } => {
            let cfg = LabConfig::load(&config, &parse_overrides(&overrides)?)?;
            let report = run_theory_lab(&cfg)?;
            for c in &report.study.cells {
                println!("{}x{} r={}: mean eps {:.6e}", c.d1, c.d2, c.r, c.mean_eps());
            }
            match (&report.fit, &report.fit_error) {
                (Some(f), _) => println!("slope {:.4}, r^2 {:.4}", f.slope, f.r_squared),
                (None, Some(e)) => println!("no fit: {e}"),
                _ => {}
            }
            Ok(true)
        }
        Command::Verify => {
            let results = run_verify();
            for r in &results {
                let tag = if r.passed { "PASS" } else { "FAIL" };
                println!("[{tag}] {}: {}", r.name, r.detail);
            }
            Ok(results.iter().all(|r| r.passed))
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
