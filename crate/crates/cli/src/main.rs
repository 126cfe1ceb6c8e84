//! `dualid`: run, sweep and validate scenario configurations.
//!
//! Exit codes: 0 on success, 2 on a configuration error, 1 on any other
//! failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use dualid_core::scenarios::{emit_report, format_g9, mean, run_scenario, Metrics, ScenarioConfig};
use dualid_core::{ConfigError, Error};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "dualid", version, about = "Dual-identity UAV scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write summary.csv, events.jsonl and config.echo.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `scenario.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run seeds 1..=n, optionally over a grid of one numeric parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// `key=start:stop:steps`, e.g. `noise.sigma_gnss_m=0.5:4:8`.
        #[arg(long)]
        vary: Option<String>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Parse and validate a configuration.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug)]
struct Vary {
    key: String,
    values: Vec<f64>,
}

fn parse_vary(s: &str) -> Result<Vary, ConfigError> {
    let bad = || {
        ConfigError::new(
            "--vary",
            format!("expected key=start:stop:steps, got `{s}`"),
        )
    };
    let (key, range) = s.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = range.split(':').collect();
    let [start, stop, steps] = parts.as_slice() else {
        return Err(bad());
    };
    let start: f64 = start.parse().map_err(|_| bad())?;
    let stop: f64 = stop.parse().map_err(|_| bad())?;
    let steps: usize = steps.parse().map_err(|_| bad())?;
    if steps == 0 {
        return Err(ConfigError::new("--vary", "steps must be >= 1"));
    }
    let values = if steps == 1 {
        vec![start]
    } else {
        (0..steps)
            .map(|i| start + (stop - start) * i as f64 / (steps - 1) as f64)
            .collect()
    };
    Ok(Vary {
        key: key.to_string(),
        values,
    })
}

fn load(path: &Path) -> anyhow::Result<ScenarioConfig> {
    match ScenarioConfig::from_path(path) {
        Err(Error::Io { path, source }) => {
            Err(ConfigError::new("--config", format!("{}: {source}", path.display())).into())
        }
        r => Ok(r?),
    }
}

fn print_metrics(m: &Metrics) {
    for (k, v) in &m.scalars {
        println!("{k:<28} {}", format_g9(*v));
    }
}

fn run(config: &Path, seed: Option<u64>, out: &Path) -> anyhow::Result<()> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.scenario.seed = s;
    }
    let (metrics, events) = run_scenario(&cfg)?;
    emit_report(&metrics, &events, &cfg, out)?;
    print_metrics(&metrics);
    println!("wrote {}", out.display());
    Ok(())
}

fn sweep(config: &Path, seeds: u64, vary: Option<&str>, out: &Path) -> anyhow::Result<()> {
    if seeds == 0 {
        bail!(ConfigError::new("--seeds", "must be >= 1"));
    }
    let base = load(config)?;
    let vary = vary.map(parse_vary).transpose()?;
    let points: Vec<(Option<f64>, ScenarioConfig)> = match &vary {
        Some(v) => v
            .values
            .iter()
            .map(|&x| {
                let mut c = base.clone();
                c.set_number(&v.key, x)?;
                Ok((Some(x), c))
            })
            .collect::<Result<_, ConfigError>>()?,
        None => vec![(None, base.clone())],
    };
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| (1..=seeds).map(move |s| (p, s)))
        .collect();
    let results: Vec<anyhow::Result<(usize, Metrics)>> = jobs
        .par_iter()
        .map(|&(p, seed)| {
            let mut cfg = points[p].1.clone();
            cfg.scenario.seed = seed;
            let (m, events) = run_scenario(&cfg)?;
            let dir = match points[p].0 {
                Some(x) => out
                    .join(format!("p{p}_{}", format_g9(x)))
                    .join(format!("seed{seed}")),
                None => out.join(format!("seed{seed}")),
            };
            emit_report(&m, &events, &cfg, &dir)?;
            Ok((p, m))
        })
        .collect();
    let results = results.into_iter().collect::<anyhow::Result<Vec<_>>>()?;

    let key = vary.as_ref().map_or("", |v| v.key.as_str());
    let mut csv = String::from("scenario,seed,vary_key,vary_value,metric,value\n");
    for (p, m) in &results {
        let x = points[*p].0.map(format_g9).unwrap_or_default();
        for (name, v) in &m.scalars {
            let _ = writeln!(
                csv,
                "{},{},{key},{x},{name},{}",
                m.scenario,
                m.seed,
                format_g9(*v)
            );
        }
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("sweep_summary.csv");
    std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;

    for (p, (x, _)) in points.iter().enumerate() {
        let runs: Vec<&Metrics> = results
            .iter()
            .filter(|(q, _)| *q == p)
            .map(|(_, m)| m)
            .collect();
        match x {
            Some(x) => println!("{key} = {}", format_g9(*x)),
            None => println!("{} seeds", runs.len()),
        }
        let names: Vec<&String> = runs
            .first()
            .map(|m| m.scalars.keys().collect())
            .unwrap_or_default();
        for name in names {
            let vals: Vec<f64> = runs.iter().filter_map(|m| m.get(name)).collect();
            println!("  {name:<28} mean {}", format_g9(mean(&vals)));
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<ConfigError>().is_some()
            || matches!(c.downcast_ref::<Error>(), Some(Error::Config(_)))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, seed, out } => run(config, *seed, out),
        Command::Sweep {
            config,
            seeds,
            vary,
            out,
        } => sweep(config, *seeds, vary.as_deref(), out),
        Command::Validate { config } => load(config).map(|c| {
            println!(
                "{}: ok ({}, {} nodes, {} epochs)",
                config.display(),
                c.scenario.kind.as_str(),
                c.nodes.len(),
                c.epochs()
            );
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_config_error(&e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {:#}", anyhow!(e));
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vary_grid() {
        let v = parse_vary("noise.sigma_gnss_m=1:3:3").unwrap();
        assert_eq!(v.key, "noise.sigma_gnss_m");
        assert_eq!(v.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_vary("a=5:9:1").unwrap().values, vec![5.0]);
        assert!(parse_vary("a=1:2").is_err());
        assert!(parse_vary("a=1:2:0").is_err());
    }
}
