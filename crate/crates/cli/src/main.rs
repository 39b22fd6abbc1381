use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tailfed::gpd::{fit_gpd, FitOptions};
use tailfed::report::{self, RunReport};
use tailfed::{Error, Protocol, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "tailfed",
    version,
    about = "Tail-aware V2V power control and federated GPD estimation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario, or a K-sweep, and write CSV reports.
    Run {
        /// Config file of `key = value` lines; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated pair counts.
        #[arg(long, value_delimiter = ',')]
        sweep_k: Vec<usize>,
        /// Comma-separated protocols (cen, sync, async, fp, qso, qsr).
        #[arg(long, value_delimiter = ',')]
        protocol: Vec<Protocol>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a GPD to the last column of a CSV of excess samples.
    Fit {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit the excess samples of one run directory and tabulate empirical vs fitted CCDF.
    Ccdf {
        #[arg(long)]
        report: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ConfigParse { .. } | Error::ConfigInvalid { .. } => 3,
        Error::Io(_) => 4,
        Error::Data(_) | Error::EmptySamples => 6,
        _ => 5,
    }
}

fn run_dir_name(r: &RunReport) -> String {
    format!("{}_k{}", r.metrics.protocol, r.metrics.n_pairs)
}

fn cmd_run(
    config: Option<PathBuf>,
    sweep_k: Vec<usize>,
    protocol: Vec<Protocol>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> tailfed::Result<()> {
    let mut cfg = match &config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    cfg.validate()?;
    let ks = if sweep_k.is_empty() {
        vec![cfg.n_pairs]
    } else {
        sweep_k
    };
    let protocols = if protocol.is_empty() {
        vec![cfg.protocol]
    } else {
        protocol
    };
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let mut metrics = Vec::new();
    for &k in &ks {
        for &p in &protocols {
            let c = ScenarioConfig {
                n_pairs: k,
                protocol: p,
                ..cfg.clone()
            };
            let r = report::run_experiment(&c)?;
            r.write_dir(&dir.join(run_dir_name(&r)))?;
            eprintln!("{} K={} done", p, k);
            metrics.push(r.metrics);
        }
    }
    let csv = report::metrics_csv(&metrics)?;
    fs::write(dir.join("metrics.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_fit(samples: &Path, seed: u64) -> tailfed::Result<()> {
    let xs = report::read_samples_csv(&fs::read_to_string(samples)?)?;
    let fit = fit_gpd(
        &xs,
        &FitOptions {
            seed,
            ..FitOptions::default()
        },
    )?;
    println!("n,sigma,xi,nll,epochs");
    println!(
        "{},{},{},{},{}",
        xs.len(),
        fit.theta.sigma,
        fit.theta.xi,
        fit.nll,
        fit.epochs
    );
    Ok(())
}

fn cmd_ccdf(dir: &Path) -> tailfed::Result<()> {
    let xs = report::read_samples_csv(&fs::read_to_string(dir.join("excess_samples.csv"))?)?;
    let fit = fit_gpd(&xs, &FitOptions::default())?;
    let csv = report::ccdf_csv(&report::emit_ccdf(&xs, &fit.theta)?)?;
    fs::write(dir.join("ccdf.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run {
            config,
            sweep_k,
            protocol,
            seed,
            out,
        } => cmd_run(config, sweep_k, protocol, seed, out),
        Cmd::Fit { samples, seed } => cmd_fit(&samples, seed),
        Cmd::Ccdf { report } => cmd_ccdf(&report),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
