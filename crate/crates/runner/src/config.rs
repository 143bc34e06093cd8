//! Flat `key = value` run configuration.
//!
//! Every key and its default lives in the shipped reference file; a user file overlays it.

use nsf_core::{Error, Result, SimParams};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

/// The documented reference configuration.
pub const REFERENCE: &str = include_str!("../../../configs/default.conf");

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimParams,
    pub seed: u64,
    pub paths: usize,
    /// Worker threads; 0 means all available cores.
    pub threads: usize,
    pub out: PathBuf,
    pub big_theta: f64,
    pub h_list: Vec<f64>,
    pub cells_list: Vec<usize>,
}

/// Keys in canonical order.
pub const KEYS: [&str; 37] = [
    "length",
    "cells",
    "m",
    "r_cut",
    "eps",
    "h",
    "t_end",
    "heat_h0",
    "record_stride",
    "gas.a",
    "gas.p_inf",
    "gas.delta",
    "gas.beta",
    "gas.mu0",
    "gas.eta0",
    "gas.kappa0",
    "gas.s_gauge",
    "noise.f0",
    "noise.sigma_u",
    "noise.modes",
    "noise.xi",
    "noise.hxi_margin",
    "noise.refinement",
    "law.rho_mean",
    "law.rho_low",
    "law.rho_up",
    "law.theta_mean",
    "law.rho_amps",
    "law.theta_amps",
    "law.u_amp",
    "seed",
    "paths",
    "threads",
    "out",
    "big_theta",
    "converge.h_list",
    "converge.cells_list",
];

fn parse_pairs(text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected `key = value`, got `{line}`", no + 1)));
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if !seen.insert(k.clone()) {
            return Err(Error::Config(format!("line {}: duplicate key `{k}`", no + 1)));
        }
        out.push((k, v, no + 1));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}` as a number")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| num(key, s.trim())).collect()
}

fn fmt_list<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    /// The reference configuration.
    pub fn reference() -> Self {
        let blank = RunConfig {
            sim: SimParams::default(),
            seed: 0,
            paths: 0,
            threads: 0,
            out: PathBuf::new(),
            big_theta: 0.0,
            h_list: Vec::new(),
            cells_list: Vec::new(),
        };
        blank.overlay(REFERENCE).expect("reference config parses")
    }

    /// Parses `text` on top of the reference configuration. Does not validate.
    pub fn parse(text: &str) -> Result<Self> {
        Self::reference().overlay(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn overlay(mut self, text: &str) -> Result<Self> {
        for (k, v, line) in parse_pairs(text)? {
            self.set(&k, &v)
                .map_err(|e| Error::Config(format!("line {line}: {}", e.to_string().trim_start_matches("configuration error: "))))?;
        }
        Ok(self)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let s = &mut self.sim;
        match key {
            "length" => s.length = num(key, v)?,
            "cells" => s.cells = num(key, v)?,
            "m" => s.m = num(key, v)?,
            "r_cut" => s.r_cut = num(key, v)?,
            "eps" => s.eps = num(key, v)?,
            "h" => s.h = num(key, v)?,
            "t_end" => s.t_end = num(key, v)?,
            "heat_h0" => s.heat_h0 = num(key, v)?,
            "record_stride" => s.record_stride = num(key, v)?,
            "gas.a" => s.gas.a = num(key, v)?,
            "gas.p_inf" => s.gas.p_inf = num(key, v)?,
            "gas.delta" => s.gas.delta = num(key, v)?,
            "gas.beta" => s.gas.beta = num(key, v)?,
            "gas.mu0" => s.gas.mu0 = num(key, v)?,
            "gas.eta0" => s.gas.eta0 = num(key, v)?,
            "gas.kappa0" => s.gas.kappa0 = num(key, v)?,
            "gas.s_gauge" => s.gas.s_gauge = num(key, v)?,
            "noise.f0" => s.noise.f0 = num(key, v)?,
            "noise.sigma_u" => s.noise.sigma_u = num(key, v)?,
            "noise.modes" => s.noise.modes = num(key, v)?,
            "noise.xi" => s.noise.xi = num(key, v)?,
            "noise.hxi_margin" => s.noise.hxi_margin = num(key, v)?,
            "noise.refinement" => s.noise.refinement = num(key, v)?,
            "law.rho_mean" => s.law.rho_mean = num(key, v)?,
            "law.rho_low" => s.law.rho_low = num(key, v)?,
            "law.rho_up" => s.law.rho_up = num(key, v)?,
            "law.theta_mean" => s.law.theta_mean = num(key, v)?,
            "law.rho_amps" => s.law.rho_amps = list(key, v)?,
            "law.theta_amps" => s.law.theta_amps = list(key, v)?,
            "law.u_amp" => s.law.u_amp = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "paths" => self.paths = num(key, v)?,
            "threads" => self.threads = num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "big_theta" => self.big_theta = num(key, v)?,
            "converge.h_list" => self.h_list = list(key, v)?,
            "converge.cells_list" => self.cells_list = list(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let s = &self.sim;
        match key {
            "length" => s.length.to_string(),
            "cells" => s.cells.to_string(),
            "m" => s.m.to_string(),
            "r_cut" => s.r_cut.to_string(),
            "eps" => s.eps.to_string(),
            "h" => s.h.to_string(),
            "t_end" => s.t_end.to_string(),
            "heat_h0" => s.heat_h0.to_string(),
            "record_stride" => s.record_stride.to_string(),
            "gas.a" => s.gas.a.to_string(),
            "gas.p_inf" => s.gas.p_inf.to_string(),
            "gas.delta" => s.gas.delta.to_string(),
            "gas.beta" => s.gas.beta.to_string(),
            "gas.mu0" => s.gas.mu0.to_string(),
            "gas.eta0" => s.gas.eta0.to_string(),
            "gas.kappa0" => s.gas.kappa0.to_string(),
            "gas.s_gauge" => s.gas.s_gauge.to_string(),
            "noise.f0" => s.noise.f0.to_string(),
            "noise.sigma_u" => s.noise.sigma_u.to_string(),
            "noise.modes" => s.noise.modes.to_string(),
            "noise.xi" => s.noise.xi.to_string(),
            "noise.hxi_margin" => s.noise.hxi_margin.to_string(),
            "noise.refinement" => s.noise.refinement.to_string(),
            "law.rho_mean" => s.law.rho_mean.to_string(),
            "law.rho_low" => s.law.rho_low.to_string(),
            "law.rho_up" => s.law.rho_up.to_string(),
            "law.theta_mean" => s.law.theta_mean.to_string(),
            "law.rho_amps" => fmt_list(&s.law.rho_amps),
            "law.theta_amps" => fmt_list(&s.law.theta_amps),
            "law.u_amp" => s.law.u_amp.to_string(),
            "seed" => self.seed.to_string(),
            "paths" => self.paths.to_string(),
            "threads" => self.threads.to_string(),
            "out" => self.out.display().to_string(),
            "big_theta" => self.big_theta.to_string(),
            "converge.h_list" => fmt_list(&self.h_list),
            "converge.cells_list" => fmt_list(&self.cells_list),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Every key in canonical order; parsing this text gives back `self` exactly.
    pub fn to_conf_string(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k)))
            .collect()
    }

    /// SHA-256 of the canonical text, excluding the keys that cannot change results
    /// (`threads` and `out`).
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.threads = 0;
        canon.out = PathBuf::new();
        hex::encode(Sha256::digest(canon.to_conf_string().as_bytes()))
    }

    /// Checks every precondition of a run before any path starts.
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.paths == 0 {
            return Err(Error::Config("paths must be at least 1".into()));
        }
        if !(self.big_theta.is_finite() && self.big_theta > 0.0) {
            return Err(Error::Config(format!("big_theta must be positive, got {}", self.big_theta)));
        }
        Ok(())
    }

    /// Preconditions of the convergence study on top of [`RunConfig::validate`].
    pub fn validate_convergence(&self) -> Result<()> {
        self.validate()?;
        check_h_list(&self.h_list)?;
        for &h in &self.h_list {
            SimParams { h, ..self.sim.clone() }
                .validate()
                .map_err(|e| Error::Config(format!("converge.h_list entry {h}: {e}")))?;
        }
        if self.cells_list.len() < 3 {
            return Err(Error::Config(format!(
                "converge.cells_list needs at least 3 levels, got {}",
                self.cells_list.len()
            )));
        }
        if self.cells_list.windows(2).any(|w| w[1] <= w[0]) || self.cells_list[0] < 2 {
            return Err(Error::Config("converge.cells_list must be strictly increasing and start at 2 or more".into()));
        }
        Ok(())
    }

    /// Non-fatal advice about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let s = &self.sim;
        let dx = s.length / s.cells as f64;
        // |v| ≤ R √(2m/L) for the sine basis, so this bounds the upwind CFL ratio
        let vmax = s.r_cut * (2.0 * s.m as f64 / s.length).sqrt();
        let cfl = 2.0 * s.h * vmax / dx;
        let mut w = Vec::new();
        if cfl > 1.0 {
            w.push(format!(
                "upwind CFL ratio may reach {cfl:.2} if |u| approaches r_cut; steps fail with a \
                 suggested h if it exceeds 1 (guaranteed safe below h = {:.3e})",
                s.h / cfl
            ));
        }
        w
    }

    pub fn effective_threads(&self) -> usize {
        if self.threads == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.threads
        }
    }
}

/// A refinement list must have at least 3 strictly decreasing steps, each an integer
/// multiple of the finest.
pub fn check_h_list(hs: &[f64]) -> Result<()> {
    if hs.len() < 3 {
        return Err(Error::Argument(format!(
            "a convergence study needs at least 3 refinement levels, got {}",
            hs.len()
        )));
    }
    if hs.iter().any(|h| !(h.is_finite() && *h > 0.0)) || hs.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Argument("refinement steps must be positive and strictly decreasing".into()));
    }
    let finest = *hs.last().unwrap();
    for &h in hs {
        let r = h / finest;
        if (r - r.round()).abs() > 1e-9 * r {
            return Err(Error::Argument(format!(
                "step {h} is not an integer multiple of the finest step {finest}"
            )));
        }
    }
    Ok(())
}

/// Sub-increments per step for shared-increment refinement.
pub fn refinement_factor(h: f64, finest: f64) -> u64 {
    (h / finest).round() as u64
}
