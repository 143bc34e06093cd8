//! Refinement studies with shared Brownian increments.

use crate::config::{check_h_list, refinement_factor, RunConfig};
use crate::ensemble::par_map;
use nsf_core::diagnostics::{fit_order, weak_residuals, WeakResiduals};
use nsf_core::fields_pde::continuity_step;
use nsf_core::stepper::{run, RunOptions, Scheme, SimParams};
use nsf_core::{Error, Grid, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Per-path error measures of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathErrors {
    /// `|Σ_n energy residual|`
    pub energy: f64,
    pub entropy: f64,
    pub slack: f64,
    /// Largest weak-form residual over the battery, per equation.
    pub weak_continuity: f64,
    pub weak_momentum: f64,
    pub weak_energy: f64,
}

/// Root mean square over paths of each error measure at one step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub h: f64,
    pub refinement: u64,
    pub errors: PathErrors,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub order: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub paths: usize,
    pub levels: Vec<Level>,
    /// Fitted order per residual family; families that vanish at some level are omitted.
    pub fits: BTreeMap<String, Fit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyOptions {
    pub paths: usize,
    pub threads: usize,
    /// Evaluate the weak-form battery too; keeps every step record in memory.
    pub weak: bool,
}

fn path_errors(scheme: &Scheme, seed: u64, path: u64, big_theta: f64, weak: bool) -> Result<PathErrors> {
    let tr = run(
        scheme,
        seed,
        path,
        RunOptions {
            keep_records: weak,
            big_theta,
        },
    )?;
    let sum = |f: &dyn Fn(&nsf_core::diagnostics::StepAudit) -> f64| tr.steps.iter().map(f).sum::<f64>().abs();
    let mut e = PathErrors {
        energy: sum(&|a| a.energy.residual),
        entropy: sum(&|a| a.entropy_residual),
        slack: sum(&|a| a.dissipation_slack),
        weak_continuity: 0.0,
        weak_momentum: 0.0,
        weak_energy: 0.0,
    };
    if weak {
        let w = weak_residuals(scheme, &tr.records)?;
        e.weak_continuity = WeakResiduals::max_abs(&w.continuity);
        e.weak_momentum = WeakResiduals::max_abs(&w.momentum);
        e.weak_energy = w.energy.iter().map(|v| v.abs()).fold(0.0, f64::max);
    }
    Ok(e)
}

fn rms(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (s / n.max(1) as f64).sqrt()
}

/// Runs every `(h, path)` pair of the study. The coarse levels draw `h/h_finest` Wiener
/// sub-increments per step, so every level integrates the same Brownian paths.
pub fn time_refinement(base: &SimParams, seed: u64, big_theta: f64, hs: &[f64], opts: StudyOptions) -> Result<OrderReport> {
    check_h_list(hs)?;
    if opts.paths == 0 {
        return Err(Error::Argument("a convergence study needs at least one path".into()));
    }
    let finest = *hs.last().unwrap();
    let schemes: Vec<Scheme> = hs
        .iter()
        .map(|&h| {
            let mut p = SimParams { h, ..base.clone() };
            p.noise.refinement = refinement_factor(h, finest);
            Scheme::new(p)
        })
        .collect::<Result<_>>()?;
    let np = opts.paths as u64;
    let all = par_map(hs.len() as u64 * np, opts.threads, |k| {
        path_errors(&schemes[(k / np) as usize], seed, k % np, big_theta, opts.weak)
    })?;
    let all: Vec<PathErrors> = all.into_iter().collect::<Result<_>>()?;

    let levels: Vec<Level> = schemes
        .iter()
        .zip(all.chunks(opts.paths))
        .map(|(s, chunk)| Level {
            h: s.params.h,
            refinement: s.params.noise.refinement,
            errors: PathErrors {
                energy: rms(chunk.iter().map(|e| e.energy)),
                entropy: rms(chunk.iter().map(|e| e.entropy)),
                slack: rms(chunk.iter().map(|e| e.slack)),
                weak_continuity: rms(chunk.iter().map(|e| e.weak_continuity)),
                weak_momentum: rms(chunk.iter().map(|e| e.weak_momentum)),
                weak_energy: rms(chunk.iter().map(|e| e.weak_energy)),
            },
        })
        .collect();

    let mut families: Vec<(&str, fn(&PathErrors) -> f64)> = vec![
        ("energy_residual", |e| e.energy),
        ("entropy_residual", |e| e.entropy),
        ("dissipation_slack", |e| e.slack),
    ];
    if opts.weak {
        families.push(("weak_continuity", |e| e.weak_continuity));
        families.push(("weak_momentum", |e| e.weak_momentum));
        families.push(("weak_energy", |e| e.weak_energy));
    }
    let mut fits = BTreeMap::new();
    for (name, get) in families {
        let ys: Vec<f64> = levels.iter().map(|l| get(&l.errors)).collect();
        if ys.iter().all(|y| *y > 0.0 && y.is_finite()) {
            let (order, r2) = fit_order(hs, &ys)?;
            fits.insert(name.to_string(), Fit { order, r2 });
        }
    }
    Ok(OrderReport {
        paths: opts.paths,
        levels,
        fits,
    })
}

/// Decay of the `cos(πx/L)` mode under pure density diffusion at one resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatLevel {
    pub cells: usize,
    pub dx: f64,
    pub h: f64,
    /// Relative error of the mode amplitude at the final time.
    pub amplitude_error: f64,
    /// Relative error of the measured decay rate against `ε(π/L)²`.
    pub rate_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatReport {
    pub eps: f64,
    pub t_end: f64,
    pub levels: Vec<HeatLevel>,
    pub fit: Fit,
}

/// Runs the continuity solver with `u = 0` from `1 + 0.5 cos(πx/L)` to `t_end` with
/// `h = dx²/2` and compares the mode amplitude with `exp(-ε(π/L)² t)`.
pub fn heat_mode_level(cells: usize, length: f64, eps: f64, t_end: f64) -> Result<HeatLevel> {
    let grid = Grid::new(cells, length)?;
    let dx = grid.dx();
    let steps = (t_end / (0.5 * dx * dx)).round().max(1.0) as usize;
    let h = t_end / steps as f64;
    let k = PI / length;
    let c: Vec<f64> = grid.positions().iter().map(|x| (k * x).cos()).collect();
    let amp = |f: &[f64]| grid.inner(f, &c) / grid.inner(&c, &c);
    let mut rho: Vec<f64> = c.iter().map(|v| 1.0 + 0.5 * v).collect();
    let a0 = amp(&rho);
    let zeros = vec![0.0; grid.nodes()];
    for _ in 0..steps {
        rho = continuity_step(&grid, &rho, &zeros, h, eps)?;
    }
    let ratio = amp(&rho) / a0;
    let exact_rate = eps * k * k;
    let exact = (-exact_rate * t_end).exp();
    Ok(HeatLevel {
        cells,
        dx,
        h,
        amplitude_error: (ratio - exact).abs() / exact,
        rate_error: (-ratio.ln() / t_end - exact_rate).abs() / exact_rate,
    })
}

pub fn heat_mode_study(cells_list: &[usize], length: f64, eps: f64, t_end: f64) -> Result<HeatReport> {
    if cells_list.len() < 3 {
        return Err(Error::Argument(format!(
            "a convergence study needs at least 3 refinement levels, got {}",
            cells_list.len()
        )));
    }
    let levels: Vec<HeatLevel> = cells_list
        .iter()
        .map(|&n| heat_mode_level(n, length, eps, t_end))
        .collect::<Result<_>>()?;
    let dxs: Vec<f64> = levels.iter().map(|l| l.dx).collect();
    let errs: Vec<f64> = levels.iter().map(|l| l.amplitude_error).collect();
    let (order, r2) = fit_order(&dxs, &errs)?;
    Ok(HeatReport {
        eps,
        t_end,
        levels,
        fit: Fit { order, r2 },
    })
}

/// Both studies as configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config_hash: String,
    pub time: OrderReport,
    pub heat: HeatReport,
}

pub fn convergence_study(cfg: &RunConfig) -> Result<ConvergenceReport> {
    cfg.validate_convergence()?;
    let time = time_refinement(
        &cfg.sim,
        cfg.seed,
        cfg.big_theta,
        &cfg.h_list,
        StudyOptions {
            paths: cfg.paths,
            threads: cfg.effective_threads(),
            weak: true,
        },
    )?;
    let heat = heat_mode_study(&cfg.cells_list, cfg.sim.length, cfg.sim.eps, 1.0)?;
    Ok(ConvergenceReport {
        config_hash: cfg.hash(),
        time,
        heat,
    })
}
