use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nsf_core::stepper::{run, RunOptions, Scheme};
use nsf_core::thermo::validate_hypotheses;
use nsf_runner::converge::convergence_study;
use nsf_runner::ensemble::{persist, run_ensemble};
use nsf_runner::RunConfig;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nsf", version, about = "Stochastic compressible heat-conducting flow simulator")]
struct Cli {
    /// Config file overlaying the reference configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, env = "NSF_THREADS")]
    threads: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single path and write its ledger
    Run {
        /// Path index whose random streams are used
        #[arg(long, default_value_t = 0)]
        path: u64,
    },
    /// Run an ensemble and write per-path ledgers plus summary.json
    Ensemble,
    /// Time-step and grid refinement studies, written to converge.json
    Converge,
    /// Check the configuration and the gas model hypotheses without running
    Validate,
    /// Print the reference configuration
    DefaultConfig,
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::reference(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = cli.paths {
        cfg.paths = p;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn write_json<T: serde::Serialize>(path: &PathBuf, value: &T) -> Result<()> {
    let f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    if let Command::DefaultConfig = cli.command {
        print!("{}", nsf_runner::config::REFERENCE);
        return Ok(ExitCode::SUCCESS);
    }
    let cfg = load(&cli)?;
    match cli.command {
        Command::Validate => {
            cfg.validate()?;
            for w in cfg.warnings() {
                println!("note: {w}");
            }
            let grid: Vec<f64> = (0..=20).map(|i| 0.2 + 4.8 * i as f64 / 20.0).collect();
            let z: Vec<f64> = (-6..=6).map(|e| 10f64.powi(e)).collect();
            let report = validate_hypotheses(&cfg.sim.gas, &z, &grid)?;
            for (name, ok) in report.checks() {
                println!("{:<32} {}", name, if ok { "pass" } else { "FAIL" });
            }
            println!("config hash {}", cfg.hash());
            if !report.passed() {
                bail!("gas model violates a structural hypothesis");
            }
        }
        Command::Run { path } => {
            cfg.validate()?;
            let scheme = Scheme::new(cfg.sim.clone())?;
            let tr = run(
                &scheme,
                cfg.seed,
                path,
                RunOptions {
                    keep_records: false,
                    big_theta: cfg.big_theta,
                },
            )?;
            std::fs::create_dir_all(&cfg.out)?;
            let file = cfg.out.join(format!("run_path_{path:05}.csv"));
            tr.ledger.write_csv(BufWriter::new(File::create(&file)?))?;
            let last = tr.ledger.rows.last().expect("ledger has the initial row");
            println!(
                "t = {:.4}  E = {:.6}  mass = {:.12}  min rho = {:.4}  min theta = {:.4}  |u| = {:.4}",
                last.t, last.e_delta, last.mass, last.min_rho, last.min_theta, last.u_l2
            );
            println!("ledger written to {}", file.display());
        }
        Command::Ensemble => {
            let run = run_ensemble(&cfg)?;
            let summary = persist(&cfg, &run, &cfg.out)?;
            for f in &summary.failed_paths {
                eprintln!("path {} failed: {}", f.path, f.error);
            }
            if let Some(m) = &summary.martingale {
                println!("stochastic integral at t = {:.4}: mean {:.3e}, se {:.3e}, z {:.2}", m.t, m.mean, m.se, m.z);
            }
            if let Some(last) = summary.stats.last() {
                println!(
                    "energy drift at t = {:.4}: measured {:.4e}, predicted {:.4e}, z {:.2}",
                    last.t, last.drift_measured, last.drift_predicted, last.z
                );
            }
            for (name, v) in &summary.invariant_suite {
                println!("{name:<28} {v}");
            }
            println!(
                "{} of {} paths completed; summary in {}",
                summary.n_paths - summary.n_failed,
                summary.n_paths,
                cfg.out.join("summary.json").display()
            );
            if summary.n_failed > 0 || !summary.all_passed() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Converge => {
            let report = convergence_study(&cfg)?;
            std::fs::create_dir_all(&cfg.out)?;
            let file = cfg.out.join("converge.json");
            write_json(&file, &report)?;
            println!("{:>10} {:>12} {:>12} {:>12} {:>12}", "h", "energy", "entropy", "slack", "weak cont");
            for l in &report.time.levels {
                println!(
                    "{:>10.3e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
                    l.h, l.errors.energy, l.errors.entropy, l.errors.slack, l.errors.weak_continuity
                );
            }
            for (name, f) in &report.time.fits {
                println!("{name:<20} order {:.3}  r2 {:.4}", f.order, f.r2);
            }
            println!("heat mode            order {:.3}  r2 {:.4}", report.heat.fit.order, report.heat.fit.r2);
            println!("report written to {}", file.display());
        }
        Command::DefaultConfig => unreachable!(),
    }
    Ok(ExitCode::SUCCESS)
}
