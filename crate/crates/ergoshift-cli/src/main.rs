use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use ergoshift_cli::{execute, listing, RunConfig};

#[derive(Parser)]
#[command(name = "ergoshift", about = "Ergodic-shift Monte Carlo experiment harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment and write manifest.json, results.csv, report.json.
    Run {
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        seed: u64,
        /// Experiment parameter as key=value; repeatable.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        /// Output directory; overridden by ERGOSHIFT_OUT when set.
        #[arg(long)]
        out: PathBuf,
        /// Exit with code 2 when the run ends in an undecided verdict.
        #[arg(long, default_value_t = false)]
        require_decision: bool,
    },
    /// List available experiments and explicitly out-of-scope topics.
    List,
}

fn parse_params(raw: &[String]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for p in raw {
        let Some((k, v)) = p.split_once('=') else {
            bail!("parameter '{p}' is not of the form key=value");
        };
        if out.insert(k.to_string(), v.to_string()).is_some() {
            bail!("parameter '{k}' given twice");
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::List => {
            print!("{}", listing());
            ExitCode::SUCCESS
        }
        Cmd::Run {
            experiment,
            seed,
            params,
            out,
            require_decision,
        } => {
            let params = match parse_params(&params) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let out = std::env::var_os("ERGOSHIFT_OUT")
                .map(PathBuf::from)
                .unwrap_or(out);
            let cfg = RunConfig {
                experiment,
                seed,
                out,
                params,
                require_decision,
            };
            match execute(&cfg) {
                Ok(0) => ExitCode::SUCCESS,
                Ok(code) => {
                    eprintln!("verdict undecided");
                    ExitCode::from(code as u8)
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
