//! Ensemble orchestration, persisted ledgers and the summary computed from them.

use crate::config::RunConfig;
use nsf_core::diagnostics::{mean_se, stationarity_drift, Ledger};
use nsf_core::stepper::{run, RunOptions, Scheme};
use nsf_core::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Relative mass drift tolerated by the per-path invariant suite.
pub const MASS_TOL: f64 = 1e-12;
/// Pointwise slack for entropy-production signs.
pub const SIGN_TOL: f64 = 1e-10;
/// Standard errors allowed by the ensemble mean-zero tests.
pub const Z_TOL: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathFailure {
    pub path: u64,
    pub error: String,
}

/// In-memory result of an ensemble, in path order.
#[derive(Debug, Clone, Default)]
pub struct EnsembleRun {
    pub ledgers: Vec<(u64, Ledger)>,
    pub failures: Vec<PathFailure>,
}

/// Maps `f` over `0..n` on a pool of `threads` workers; output is in index order.
pub fn par_map<T: Send>(n: u64, threads: usize, f: impl Fn(u64) -> T + Sync + Send) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}

/// Runs every path of the ensemble. Paths that abort are recorded, not propagated.
pub fn run_ensemble(cfg: &RunConfig) -> Result<EnsembleRun> {
    cfg.validate()?;
    let scheme = Scheme::new(cfg.sim.clone())?;
    let opts = RunOptions {
        keep_records: false,
        big_theta: cfg.big_theta,
    };
    let results = par_map(cfg.paths as u64, cfg.effective_threads(), |p| {
        run(&scheme, cfg.seed, p, opts).map(|tr| tr.ledger)
    })?;
    let mut out = EnsembleRun::default();
    for (p, r) in results.into_iter().enumerate() {
        match r {
            Ok(ledger) => out.ledgers.push((p as u64, ledger)),
            Err(e) => out.failures.push(PathFailure {
                path: p as u64,
                error: e.to_string(),
            }),
        }
    }
    Ok(out)
}

pub fn ledger_file(out: &Path, path: u64) -> PathBuf {
    out.join("ledgers").join(format!("path_{path:05}.csv"))
}

/// Ensemble statistics at one recorded time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub t: f64,
    #[serde(rename = "mean_E")]
    pub mean_e: f64,
    #[serde(rename = "var_E")]
    pub var_e: f64,
    #[serde(rename = "se_E")]
    pub se_e: f64,
    pub mean_mass: f64,
    pub drift_measured: f64,
    pub drift_predicted: f64,
    pub z: f64,
    pub z_measured: f64,
    pub mean_stoch: f64,
    pub se_stoch: f64,
}

/// Mean-zero test of the cumulative stochastic integral at the final time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleTest {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub config_hash: String,
    pub n_paths: usize,
    pub n_failed: usize,
    pub failed_paths: Vec<PathFailure>,
    pub stats: Vec<StatRow>,
    pub martingale: Option<MartingaleTest>,
    /// Ensemble-level verdicts, `"pass"` or `"fail"`.
    pub invariant_suite: BTreeMap<String, String>,
    /// Names of the per-path checks each completed path failed; empty when all passed.
    pub path_invariants: BTreeMap<u64, Vec<String>>,
}

impl EnsembleSummary {
    pub fn all_passed(&self) -> bool {
        self.invariant_suite.values().all(|v| v == "pass")
    }
}

/// Per-path checks that can be evaluated from a ledger alone.
pub fn path_checks(ledger: &Ledger) -> Vec<(&'static str, bool)> {
    let rows = &ledger.rows;
    let m0 = rows.first().map_or(0.0, |r| r.mass);
    let finite = rows.iter().all(|r| {
        [r.e_delta, r.mass, r.sigma_int, r.e_bal_res, r.s_bal_res, r.diss_slack, r.u_l2, r.stoch_inc]
            .iter()
            .all(|v| v.is_finite())
    });
    vec![
        ("finite", finite),
        (
            "mass_conservation",
            rows.iter().all(|r| (r.mass - m0).abs() <= MASS_TOL * m0.abs()),
        ),
        ("positivity", rows.iter().all(|r| r.min_rho > 0.0 && r.min_theta > 0.0)),
        ("entropy_production_sign", rows.iter().all(|r| r.sigma_int >= -SIGN_TOL)),
    ]
}

fn verdict(ok: bool) -> String {
    if ok { "pass" } else { "fail" }.to_string()
}

/// Summary statistics over completed paths.
pub fn summarize(config_hash: &str, n_paths: usize, failures: &[PathFailure], ledgers: &[(u64, Ledger)]) -> Result<EnsembleSummary> {
    let mut suite = BTreeMap::new();
    let mut path_invariants = BTreeMap::new();
    let mut per_name: BTreeMap<&str, bool> = BTreeMap::new();
    for (p, l) in ledgers {
        let failed: Vec<String> = path_checks(l)
            .into_iter()
            .inspect(|(name, ok)| *per_name.entry(name).or_insert(true) &= ok)
            .filter(|(_, ok)| !ok)
            .map(|(name, _)| name.to_string())
            .collect();
        path_invariants.insert(*p, failed);
    }
    for (name, ok) in per_name {
        suite.insert(name.to_string(), verdict(ok));
    }
    suite.insert("no_failed_paths".into(), verdict(failures.is_empty()));

    let (stats, martingale) = if ledgers.is_empty() {
        (Vec::new(), None)
    } else {
        let refs: Vec<&Ledger> = ledgers.iter().map(|(_, l)| l).collect();
        let drift = stationarity_drift(&refs)?;
        let stats: Vec<StatRow> = drift
            .iter()
            .map(|d| StatRow {
                t: d.t,
                mean_e: d.mean_e,
                var_e: d.se_e * d.se_e * refs.len() as f64,
                se_e: d.se_e,
                mean_mass: d.mean_mass,
                drift_measured: d.drift_measured,
                drift_predicted: d.drift_predicted,
                z: d.z,
                z_measured: d.z_measured,
                mean_stoch: d.mean_stoch,
                se_stoch: d.se_stoch,
            })
            .collect();
        let finals: Vec<f64> = refs.iter().map(|l| l.cumulative_residual_and_stochastic().1.last().copied().unwrap_or(0.0)).collect();
        let (mean, se) = mean_se(&finals);
        let z = if se > 0.0 { mean / se } else { 0.0 };
        let (t_last, z_last) = stats.last().map(|s| (s.t, s.z)).expect("ledgers have rows");
        if refs.len() >= 2 {
            suite.insert("martingale_mean_zero".into(), verdict(z.abs() <= Z_TOL));
            suite.insert("energy_identity".into(), verdict(z_last.abs() <= Z_TOL));
        }
        (stats, Some(MartingaleTest { t: t_last, mean, se, z }))
    };

    Ok(EnsembleSummary {
        config_hash: config_hash.to_string(),
        n_paths,
        n_failed: failures.len(),
        failed_paths: failures.to_vec(),
        stats,
        martingale,
        invariant_suite: suite,
        path_invariants,
    })
}

/// Writes one ledger per completed path, then builds the summary by reading those files
/// back, and writes it with the canonical config next to them.
pub fn persist(cfg: &RunConfig, run: &EnsembleRun, out: &Path) -> Result<EnsembleSummary> {
    std::fs::create_dir_all(out.join("ledgers"))?;
    std::fs::write(out.join("config.conf"), cfg.to_conf_string())?;
    for (p, ledger) in &run.ledgers {
        ledger.write_csv(BufWriter::new(File::create(ledger_file(out, *p))?))?;
    }
    let summary = summarize_dir(cfg, &run.failures, out)?;
    let mut f = BufWriter::new(File::create(out.join("summary.json"))?);
    serde_json::to_writer_pretty(&mut f, &summary).map_err(std::io::Error::other)?;
    writeln!(f)?;
    f.flush()?;
    Ok(summary)
}

/// Rebuilds the summary from the ledgers persisted under `out`.
pub fn summarize_dir(cfg: &RunConfig, failures: &[PathFailure], out: &Path) -> Result<EnsembleSummary> {
    let failed: std::collections::BTreeSet<u64> = failures.iter().map(|f| f.path).collect();
    let mut ledgers = Vec::new();
    for p in (0..cfg.paths as u64).filter(|p| !failed.contains(p)) {
        let file = ledger_file(out, p);
        let l = Ledger::read_csv(BufReader::new(File::open(&file).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", file.display())))
        })?))?;
        ledgers.push((p, l));
    }
    summarize(&cfg.hash(), cfg.paths, failures, &ledgers)
}

pub fn read_summary(out: &Path) -> Result<EnsembleSummary> {
    let f = BufReader::new(File::open(out.join("summary.json"))?);
    serde_json::from_reader(f).map_err(|e| Error::Io(std::io::Error::other(e)))
}
