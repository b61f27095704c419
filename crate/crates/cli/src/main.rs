use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use wassineq::config::ExperimentConfig;
use wassineq::flow::{check_dissipation, estimate_rate, evolve};
use wassineq::inequalities::plsi_constant;
use wassineq::measures::normalize;
use wassineq::models::conjugate_exponent;
use wassineq::stationary::{sigma_c, sobolev_constants};
use wassineq::suite::{plan, run_job, SuiteReport, CHECKERS};
use wassineq::{Error, ScalarFn};

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "wassineq", version, about = "Numerical checks of transport inequalities on 1D grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every check of a config; writes <name>.report.json and <name>.summary.csv
    Verify {
        config: PathBuf,
        /// Output directory
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the gradient flow of a config; writes <name>.flow.csv and <name>.flow.json
    Flow {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print C_p, sigma_c and the sharp Sobolev constant C(p, n) as JSON
    Constants {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        n: u32,
    },
    /// Print the registered checkers
    ListCheckers,
}

/// Errors that map to the usage exit status.
#[derive(Debug)]
struct Usage(anyhow::Error);

fn usage<E: Into<anyhow::Error>>(e: E) -> Usage {
    Usage(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify { config, out } => verify(&config, &out),
        Command::Flow { config, out } => flow(&config, &out),
        Command::Constants { p, n } => constants(p, n),
        Command::ListCheckers => {
            for c in CHECKERS {
                println!("{}  {}", c.name, c.anchor);
            }
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, Usage> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("WASSINEQ_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| usage(anyhow::anyhow!("WASSINEQ_THREADS={v:?} is not a count")))?;
        if n == 0 {
            return Err(usage(anyhow::anyhow!("WASSINEQ_THREADS must be at least 1")));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(usage)
}

fn load(path: &Path) -> Result<ExperimentConfig, Usage> {
    ExperimentConfig::load(path).map_err(usage)
}

fn write(dir: &Path, file: String, contents: &str) -> Result<(), Usage> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(usage)?;
    let path = dir.join(file);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display())).map_err(usage)
}

fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn verify(path: &Path, out: &Path) -> Result<bool, Usage> {
    let cfg = load(path)?;
    let jobs = plan(&cfg).map_err(usage)?;
    let pool = thread_pool()?;
    let started = unix_seconds();
    let clock = Instant::now();
    let entries: Vec<_> = pool.install(|| jobs.par_iter().map(run_job).collect::<Vec<_>>()).into_iter().flatten().collect();
    let report = SuiteReport::assemble(&cfg.name, entries);
    for line in report.lines() {
        println!("{line}");
    }
    write(out, format!("{}.report.json", cfg.name), &report.to_json())?;
    write(out, format!("{}.summary.csv", cfg.name), &report.summary_csv())?;
    // timestamps live here so the report itself stays reproducible
    let meta = json!({
        "config": path.display().to_string(),
        "version": env!("CARGO_PKG_VERSION"),
        "threads": pool.current_num_threads(),
        "jobs": jobs.len(),
        "started_unix": started,
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
    });
    write(out, format!("{}.meta.json", cfg.name), &(serde_json::to_string_pretty(&meta).map_err(usage)? + "\n"))?;
    println!("{}: {} passed, {} failed", cfg.name, report.passed, report.failed);
    Ok(report.all_pass())
}

fn flow(path: &Path, out: &Path) -> Result<bool, Usage> {
    let cfg = load(path)?;
    let Some(spec) = cfg.flow.clone() else {
        return Err(usage(anyhow::anyhow!("{}: config has no [flow] section", path.display())));
    };
    let run = || -> anyhow::Result<(wassineq::FlowTrace, wassineq::flow::DissipationReport)> {
        let grid = cfg.grid.build()?;
        let m = cfg.entropy.build()?;
        let pot = cfg.potential.build()?;
        let init = ScalarFn::parse(&spec.initial)?;
        let rho0 = normalize(&grid.sample(|x| init.eval(x)), &grid, 0.0)?;
        let trace = evolve(&rho0, &m, &pot, spec.t_end, spec.dt, spec.sample_every)?;
        let diss = check_dissipation(&trace)?;
        Ok((trace, diss))
    };
    let (trace, diss) = match run() {
        Ok(v) => v,
        Err(e) => match e.downcast_ref::<Error>() {
            Some(Error::Parse(_)) => return Err(usage(e)),
            _ => {
                eprintln!("flow failed: {e:#}");
                return Ok(false);
            }
        },
    };
    let positive: (Vec<f64>, Vec<f64>) =
        trace.times.iter().zip(&trace.energies).filter(|(_, h)| **h > 0.0).map(|(t, h)| (*t, *h)).unzip();
    let h_rate = estimate_rate(&positive.0, &positive.1).ok();
    let w_rate = estimate_rate(&trace.times, &trace.w2s).ok();
    write(out, format!("{}.flow.csv", cfg.name), &trace.to_csv())?;
    let payload = json!({ "trace": trace, "dissipation": diss, "energy_rate": h_rate, "w2_rate": w_rate });
    write(out, format!("{}.flow.json", cfg.name), &(serde_json::to_string_pretty(&payload).map_err(usage)? + "\n"))?;
    let last = trace.len() - 1;
    println!(
        "{}: {} steps to t = {}, H = {:.6e}, I2 = {:.6e}, W2 = {:.6e}",
        cfg.name, trace.steps, trace.times[last], trace.energies[last], trace.dissipations[last], trace.w2s[last]
    );
    if let Some(r) = h_rate {
        println!("energy rate {r:.6}");
    }
    if let Some(r) = w_rate {
        println!("W2 rate {r:.6}");
    }
    println!("{} dissipation defect={:.3e}", if diss.pass { "PASS" } else { "FAIL" }, diss.max_defect);
    Ok(diss.pass)
}

fn constants(p: f64, n: u32) -> Result<bool, Usage> {
    let inner = || -> anyhow::Result<serde_json::Value> {
        if !(p > 1.0) || n == 0 {
            bail!("need p > 1 and n >= 1, got p = {p}, n = {n}");
        }
        let q = conjugate_exponent(p);
        let sobolev = if p < n as f64 { Some(sobolev_constants(p, n)?) } else { None };
        Ok(json!({
            "p": p,
            "n": n,
            "q": q,
            "c_p": plsi_constant(p, n)?,
            "sigma_c": sigma_c(p, q, n)?,
            "c_pn": sobolev.map(|s| s.c_pn),
            "c_inf": sobolev.map(|s| s.c_inf),
        }))
    };
    let value = inner().map_err(usage)?;
    println!("{}", serde_json::to_string_pretty(&value).map_err(usage)?);
    Ok(true)
}
