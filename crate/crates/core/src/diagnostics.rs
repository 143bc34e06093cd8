//! Discrete balance laws, entropy production, weak-form residuals and ensemble statistics.
//!
//! Every residual is built from the same quadrature, face operators and realized Wiener
//! increments as the stepper, so it measures how far the scheme is from the continuous
//! identity rather than re-deriving it independently.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields_pde::{energy_sources, face_avg, face_diff, net_outflow, upwind_flux, EnergyInputs, Grid};
use crate::galerkin::coeff_norm;
use crate::stepper::{Scheme, SimState, StepRecord};

/// `∫ [½ρu² + ρe_δ + δ(ρ^β/(β-1) + ρ²)]`.
pub fn total_energy(scheme: &Scheme, state: &SimState) -> Result<f64> {
    let gas = scheme.gas();
    let u = scheme.space.eval(&state.u);
    let w = scheme.grid().weights();
    let mut e = 0.0;
    for i in 0..w.len() {
        let (r, t) = (state.rho[i], state.theta[i]);
        e += w[i] * (0.5 * r * u[i] * u[i] + r * gas.internal_energy_reg(r, t)? + gas.artificial_potential(r));
    }
    Ok(e)
}

pub fn kinetic_energy(scheme: &Scheme, state: &SimState) -> f64 {
    let u = scheme.space.eval(&state.u);
    let w = scheme.grid().weights();
    (0..w.len()).map(|i| 0.5 * w[i] * state.rho[i] * u[i] * u[i]).sum()
}

/// `∫ ρ s_δ`.
pub fn total_entropy(scheme: &Scheme, state: &SimState) -> Result<f64> {
    let gas = scheme.gas();
    let w = scheme.grid().weights();
    let mut s = 0.0;
    for i in 0..w.len() {
        s += w[i] * state.rho[i] * gas.entropy_reg(state.rho[i], state.theta[i])?;
    }
    Ok(s)
}

/// Terms of the discrete total-energy balance over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBalance {
    pub delta_e: f64,
    /// `h[(1/m)∫u² + ε∫θ'⁵]`
    pub dissipation: f64,
    /// `h[∫δ/θ'² + ∫ρ'H]`
    pub sources: f64,
    /// `½ h Σ_k ∫ρ|Π_m F_k|²`
    pub ito: f64,
    /// `Σ_k (∫ρ Π_m F_k · u) ΔW_k`
    pub stochastic: f64,
    pub residual: f64,
}

impl EnergyBalance {
    /// Deterministic part of the predicted energy change.
    pub fn predicted(&self) -> f64 {
        self.sources + self.ito - self.dissipation
    }
}

pub fn energy_balance(scheme: &Scheme, rec: &StepRecord) -> Result<EnergyBalance> {
    let p = &scheme.params;
    let gas = scheme.gas();
    let w = scheme.grid().weights();
    let h = rec.h;
    let (b, a) = (&rec.before, &rec.after);
    let delta_e = total_energy(scheme, a)? - total_energy(scheme, b)?;
    let u2: f64 = rec.before.u.iter().map(|x| x * x).sum();
    let mut theta5 = 0.0;
    let mut src = 0.0;
    for i in 0..w.len() {
        let t = a.theta[i];
        theta5 += w[i] * t.powi(5);
        src += w[i] * (gas.delta / (t * t) + a.rho[i] * scheme.heat[i]);
    }
    let dissipation = h * (u2 / p.m as f64 + p.eps * theta5);
    let sources = h * src;
    let mass = scheme.space.assemble_mass(&b.rho)?;
    let mut ito = 0.0;
    let mut stochastic = 0.0;
    for (g, dw) in rec.g.iter().zip(&rec.dw) {
        let s = mass.apply(g);
        ito += 0.5 * h * s.iter().zip(g).map(|(x, y)| x * y).sum::<f64>();
        stochastic += dw * s.iter().zip(&b.u).map(|(x, y)| x * y).sum::<f64>();
    }
    Ok(EnergyBalance {
        delta_e,
        dissipation,
        sources,
        ito,
        stochastic,
        residual: delta_e + dissipation - sources - ito - stochastic,
    })
}

pub fn energy_balance_residual(scheme: &Scheme, rec: &StepRecord) -> Result<f64> {
    Ok(energy_balance(scheme, rec)?.residual)
}

/// Discrete entropy balance over one step.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyBalance {
    pub delta_s: f64,
    /// Convective exchange through the upwind fluxes.
    pub transport: f64,
    /// `-Σ_f Δ(1/θ') ΔK(θ')/dx`, non-negative.
    pub heat_production: f64,
    /// Dissipative and stiff sources divided by `θ'`.
    pub source_production: f64,
    /// `ε Σ_f Δ(g'/θ') Δρ'/dx` from density diffusion.
    pub diffusion_exchange: f64,
    /// Per-node `w_i Δ(ρs)_i - h·(discrete right-hand side)_i`; non-negative up to the
    /// Newton tolerance because `ρs_δ` is concave in `(ρ, ρe_δ)`.
    pub node_residual: Vec<f64>,
    pub residual: f64,
}

pub fn entropy_balance(scheme: &Scheme, rec: &StepRecord) -> Result<EntropyBalance> {
    let gas = scheme.gas();
    let grid = scheme.grid();
    let w = grid.weights();
    let dx = grid.dx();
    let n = grid.nodes();
    let h = rec.h;
    let eps = scheme.params.eps;
    let (b, a) = (&rec.before, &rec.after);
    let u_nodes = scheme.space.eval(&b.u);
    let inputs = EnergyInputs {
        rho_n: &b.rho,
        rho_next: &a.rho,
        theta_n: &b.theta,
        u: &u_nodes,
        chi: rec.chi,
        heat: &scheme.heat,
        h,
        eps,
    };
    let v: Vec<f64> = u_nodes.iter().map(|u| rec.chi * u).collect();
    let v_face = face_avg(&v);
    let rho_e: Vec<f64> = (0..n)
        .map(|i| Ok(b.rho[i] * gas.internal_energy_reg(b.rho[i], b.theta[i])?))
        .collect::<Result<_>>()?;
    let div_g = net_outflow(&upwind_flux(&rho_e, &v_face));
    let div_f = net_outflow(&upwind_flux(&b.rho, &v_face));
    let q = energy_sources(grid, gas, &inputs)?;
    let k: Vec<f64> = a.theta.iter().map(|&t| gas.kirchhoff(t)).collect::<Result<_>>()?;
    let dk = face_diff(&k);
    let lap_k = net_outflow(&dk);
    let drho = face_diff(&a.rho);
    let lap_rho = net_outflow(&drho);

    let mut inv_t = vec![0.0; n];
    let mut g_over_t = vec![0.0; n];
    let mut node_residual = vec![0.0; n];
    let (mut transport, mut source_production, mut delta_s) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (r1, t1) = (a.rho[i], a.theta[i]);
        let e1 = gas.internal_energy_reg(r1, t1)?;
        let s1 = gas.entropy_reg(r1, t1)?;
        let gibbs = e1 + gas.pressure(r1, t1)? / r1 - t1 * s1;
        inv_t[i] = 1.0 / t1;
        g_over_t[i] = gibbs / t1;
        let ds = w[i] * (r1 * s1 - b.rho[i] * gas.entropy_reg(b.rho[i], b.theta[i])?);
        delta_s += ds;
        let stiff = gas.delta / (t1 * t1) - eps * t1.powi(5) + r1 * scheme.heat[i];
        let tr = -inv_t[i] * div_g[i] + g_over_t[i] * div_f[i];
        let src = inv_t[i] * (q[i] + w[i] * stiff);
        transport += tr;
        source_production += src;
        let rhs = tr + inv_t[i] * lap_k[i] / dx + src - eps * g_over_t[i] * lap_rho[i] / dx;
        node_residual[i] = ds - h * rhs;
    }
    let d_inv = face_diff(&inv_t);
    let d_g = face_diff(&g_over_t);
    let heat_production = -(0..grid.faces()).map(|f| d_inv[f] * dk[f] / dx).sum::<f64>();
    let diffusion_exchange = eps * (0..grid.faces()).map(|f| d_g[f] * drho[f] / dx).sum::<f64>();
    let residual = delta_s - h * (transport + heat_production + source_production + diffusion_exchange);
    Ok(EntropyBalance {
        delta_s,
        transport: h * transport,
        heat_production: h * heat_production,
        source_production: h * source_production,
        diffusion_exchange: h * diffusion_exchange,
        node_residual,
        residual,
    })
}

pub fn entropy_balance_residual(scheme: &Scheme, rec: &StepRecord) -> Result<f64> {
    Ok(entropy_balance(scheme, rec)?.residual)
}

/// Energy residual minus `Θ` times the entropy residual: the step's contribution to the
/// discrete total dissipation balance for the ballistic free energy.
pub fn dissipation_slack(scheme: &Scheme, rec: &StepRecord, big_theta: f64) -> Result<f64> {
    Ok(energy_balance_residual(scheme, rec)? - big_theta * entropy_balance_residual(scheme, rec)?)
}

pub const SIGMA_TERMS: [&str; 7] = [
    "viscous",
    "heat_conduction",
    "regularized_conduction",
    "temperature_source",
    "artificial_pressure",
    "density_diffusion",
    "artificial_viscosity",
];

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyProduction {
    /// `σ` at every node.
    pub field: Vec<f64>,
    pub integral: f64,
    /// Each summand at every node, in the order of [`SIGMA_TERMS`].
    pub terms: Vec<Vec<f64>>,
}

impl EntropyProduction {
    pub fn min_term(&self) -> f64 {
        self.terms.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }
}

fn nodal_gradient(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                0.0
            } else {
                (f[i + 1] - f[i - 1]) / (2.0 * grid.dx())
            }
        })
        .collect()
}

/// Pointwise entropy production rate of the regularized system; boundary gradients of
/// `ρ` and `θ` are zero by the Neumann condition.
pub fn entropy_production(scheme: &Scheme, state: &SimState) -> Result<EntropyProduction> {
    let gas = scheme.gas();
    let grid = scheme.grid();
    let (delta, beta, eps) = (gas.delta, gas.beta, scheme.params.eps);
    let chi = scheme.space.cutoff_factor(&state.u, scheme.params.r_cut);
    let (_, ux) = scheme.space.eval_and_grad(&state.u);
    let tx = nodal_gradient(grid, &state.theta);
    let rx = nodal_gradient(grid, &state.rho);
    let n = grid.nodes();
    let mut terms = vec![vec![0.0; n]; SIGMA_TERMS.len()];
    for i in 0..n {
        let (r, t) = (state.rho[i], state.theta[i]);
        let tr = gas.transport_coeffs(t)?;
        let dp = gas.molecular_pressure_drho(r, t)?;
        terms[0][i] = chi * tr.longitudinal() * ux[i] * ux[i] / t;
        terms[1][i] = tr.kappa * tx[i] * tx[i] / (t * t);
        terms[2][i] = 0.5 * delta * (r.powf(beta - 1.0) + 1.0 / (t * t)) * tx[i] * tx[i] / t;
        terms[3][i] = delta / (t * t * t);
        terms[4][i] = eps * delta / (2.0 * t) * (beta * r.powf(beta - 2.0) + 2.0) * rx[i] * rx[i];
        terms[5][i] = eps * dp * rx[i] * rx[i] / (r * t);
        terms[6][i] = eps * r * ux[i] * ux[i] / t;
    }
    let field: Vec<f64> = (0..n).map(|i| terms.iter().map(|t| t[i]).sum()).collect();
    Ok(EntropyProduction {
        integral: grid.integrate(&field),
        field,
        terms,
    })
}

/// `‖v‖²_{W^{1,2}} / ∫ ν(θ) |v_x|² / θ`; `None` for zero velocity.
pub fn korn_poincare_ratio(scheme: &Scheme, theta: &[f64], u: &[f64]) -> Result<Option<f64>> {
    if u.iter().all(|x| *x == 0.0) {
        return Ok(None);
    }
    let gas = scheme.gas();
    let (v, vx) = scheme.space.eval_and_grad(u);
    let w = scheme.grid().weights();
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for i in 0..w.len() {
        lhs += w[i] * (v[i] * v[i] + vx[i] * vx[i]);
        rhs += w[i] * gas.transport_coeffs(theta[i])?.longitudinal() * vx[i] * vx[i] / theta[i];
    }
    Ok(Some(lhs / rhs))
}

/// `√(Σ (1 + λ_n) u_n²)`.
pub fn velocity_h1(scheme: &Scheme, u: &[f64]) -> f64 {
    u.iter()
        .enumerate()
        .map(|(n, c)| (1.0 + scheme.space.eigenvalue(n)) * c * c)
        .sum::<f64>()
        .sqrt()
}

/// Everything the ledger needs from one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepAudit {
    pub t: f64,
    pub energy: EnergyBalance,
    pub entropy_residual: f64,
    pub min_node_entropy_residual: f64,
    pub dissipation_slack: f64,
    pub sigma_integral: f64,
    pub sigma_min_term: f64,
}

pub fn audit_step(scheme: &Scheme, rec: &StepRecord, big_theta: f64) -> Result<StepAudit> {
    let energy = energy_balance(scheme, rec)?;
    let entropy = entropy_balance(scheme, rec)?;
    let sigma = entropy_production(scheme, &rec.after)?;
    Ok(StepAudit {
        t: rec.after.t,
        energy,
        entropy_residual: entropy.residual,
        min_node_entropy_residual: entropy.node_residual.iter().copied().fold(f64::INFINITY, f64::min),
        dissipation_slack: energy.residual - big_theta * entropy.residual,
        sigma_integral: sigma.integral,
        sigma_min_term: sigma.min_term(),
    })
}

/// One CSV row. The balance columns and `stoch_inc` are accumulated since the previous row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    #[serde(rename = "E_delta")]
    pub e_delta: f64,
    pub mass: f64,
    pub min_rho: f64,
    pub min_theta: f64,
    pub sigma_int: f64,
    pub e_bal_res: f64,
    pub s_bal_res: f64,
    pub diss_slack: f64,
    pub u_l2: f64,
    pub u_h1: f64,
    pub stoch_inc: f64,
}

/// Running sums between ledger rows plus whole-run norm integrals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RowAccumulator {
    pub e_res: f64,
    pub s_res: f64,
    pub slack: f64,
    pub stoch: f64,
}

impl RowAccumulator {
    pub fn add(&mut self, a: &StepAudit) {
        self.e_res += a.energy.residual;
        self.s_res += a.entropy_residual;
        self.slack += a.dissipation_slack;
        self.stoch += a.energy.stochastic;
    }

    pub fn reset_increments(&mut self) {
        *self = Self::default();
    }
}

pub fn ledger_row(scheme: &Scheme, state: &SimState, audit: Option<&StepAudit>, acc: &RowAccumulator) -> Result<LedgerRow> {
    let sigma_int = match audit {
        Some(a) => a.sigma_integral,
        None => entropy_production(scheme, state)?.integral,
    };
    Ok(LedgerRow {
        t: state.t,
        e_delta: total_energy(scheme, state)?,
        mass: scheme.grid().integrate(&state.rho),
        min_rho: state.rho.iter().copied().fold(f64::INFINITY, f64::min),
        min_theta: state.theta.iter().copied().fold(f64::INFINITY, f64::min),
        sigma_int,
        e_bal_res: acc.e_res,
        s_bal_res: acc.s_res,
        diss_slack: acc.slack,
        u_l2: coeff_norm(&state.u),
        u_h1: velocity_h1(scheme, &state.u),
        stoch_inc: acc.stoch,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ledger {
    pub rows: Vec<LedgerRow>,
}

impl Ledger {
    pub fn push(&mut self, row: LedgerRow) {
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<LedgerRow>, _>>()?;
        Ok(Self { rows })
    }

    /// `E(t) - E(0)` at each row.
    pub fn measured_drift(&self) -> Vec<f64> {
        let e0 = self.rows.first().map_or(0.0, |r| r.e_delta);
        self.rows.iter().map(|r| r.e_delta - e0).collect()
    }

    /// Cumulative energy residual and stochastic integral at each row.
    pub fn cumulative_residual_and_stochastic(&self) -> (Vec<f64>, Vec<f64>) {
        let (mut res, mut sto) = (0.0, 0.0);
        self.rows
            .iter()
            .map(|r| {
                res += r.e_bal_res;
                sto += r.stoch_inc;
                (res, sto)
            })
            .unzip()
    }

    /// Predicted deterministic drift `(E(t) - E(0)) - Σ residual - Σ stochastic` at each row.
    pub fn predicted_drift(&self) -> Vec<f64> {
        let (res, sto) = self.cumulative_residual_and_stochastic();
        self.measured_drift()
            .iter()
            .zip(res.iter().zip(&sto))
            .map(|(m, (r, s))| m - r - s)
            .collect()
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ensemble energy statistics at one recorded time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftStat {
    pub t: f64,
    pub mean_e: f64,
    pub se_e: f64,
    pub mean_mass: f64,
    pub drift_measured: f64,
    pub drift_predicted: f64,
    /// `(measured - predicted) / SE` over paths.
    pub z: f64,
    /// `measured / SE(measured)`: how far the energy drift is from zero.
    pub z_measured: f64,
    pub mean_stoch: f64,
    pub se_stoch: f64,
}

/// Compares the measured mean energy drift with the mean of the per-path predicted drift.
pub fn stationarity_drift(ledgers: &[&Ledger]) -> Result<Vec<DriftStat>> {
    let Some(first) = ledgers.first() else {
        return Err(Error::Argument("empty ensemble".into()));
    };
    let rows = first.rows.len();
    if ledgers.iter().any(|l| l.rows.len() != rows) {
        return Err(Error::Argument("ledgers have different numbers of rows".into()));
    }
    let measured: Vec<Vec<f64>> = ledgers.iter().map(|l| l.measured_drift()).collect();
    let predicted: Vec<Vec<f64>> = ledgers.iter().map(|l| l.predicted_drift()).collect();
    let stoch: Vec<Vec<f64>> = ledgers.iter().map(|l| l.cumulative_residual_and_stochastic().1).collect();
    let ratio = |num: f64, se: f64| if se > 0.0 { num / se } else { 0.0 };
    Ok((0..rows)
        .map(|r| {
            let col = |f: &dyn Fn(usize) -> f64| (0..ledgers.len()).map(f).collect::<Vec<f64>>();
            let (mean_e, se_e) = mean_se(&col(&|p| ledgers[p].rows[r].e_delta));
            let (mean_mass, _) = mean_se(&col(&|p| ledgers[p].rows[r].mass));
            let (drift_measured, se_m) = mean_se(&col(&|p| measured[p][r]));
            let (drift_predicted, _) = mean_se(&col(&|p| predicted[p][r]));
            let (diff, se_d) = mean_se(&col(&|p| measured[p][r] - predicted[p][r]));
            let (mean_stoch, se_stoch) = mean_se(&col(&|p| stoch[p][r]));
            DriftStat {
                t: first.rows[r].t,
                mean_e,
                se_e,
                mean_mass,
                drift_measured,
                drift_predicted,
                z: ratio(diff, se_d),
                z_measured: ratio(drift_measured, se_m),
                mean_stoch,
                se_stoch,
            }
        })
        .collect())
}

/// Least-squares slope of `ln y` against `ln x` and its coefficient of determination.
pub fn fit_order(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Argument(format!(
            "order fit needs at least 3 matching levels, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Argument("order fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok((slope, r2))
}

/// Time test function `ψ_i(t) = (1 - t/T)^{i+2}` and its derivative.
pub fn time_test(i: usize, t: f64, t_end: f64) -> (f64, f64) {
    let s = (1.0 - t / t_end).max(0.0);
    let p = (i + 2) as i32;
    (s.powi(p), -(p as f64) / t_end * s.powi(p - 1))
}

/// Weak-form residuals of one trajectory against a battery of test functions.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakResiduals {
    /// `[i][j]`: time test `ψ_i` times `cos(jπx/L)`.
    pub continuity: Vec<Vec<f64>>,
    /// `[i][j]`: time test `ψ_i` times the Galerkin basis function `w_{j+1}`.
    pub momentum: Vec<Vec<f64>>,
    /// `[i]`: time test `ψ_i` against the total energy balance.
    pub energy: Vec<f64>,
    /// `[i][j]`: `ψ_i` times a non-negative spatial weight; must be non-negative.
    pub entropy_slack: Vec<Vec<f64>>,
}

impl WeakResiduals {
    pub fn max_abs(table: &[Vec<f64>]) -> f64 {
        table.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

pub const WEAK_BATTERY: usize = 3;

/// Evaluates the weak forms of continuity, momentum, total energy and the entropy
/// inequality over a stride-1 trajectory. States are piecewise constant in time (left
/// point) and `ψ'` is integrated exactly over each step, so constants cancel exactly.
pub fn weak_residuals(scheme: &Scheme, records: &[StepRecord]) -> Result<WeakResiduals> {
    let Some(last) = records.last() else {
        return Err(Error::Argument("weak residuals need at least one step".into()));
    };
    let t0 = records[0].before.t;
    let t_end = last.after.t - t0;
    let grid = scheme.grid();
    let dx = grid.dx();
    let w = grid.weights();
    let xs = grid.positions();
    let l = grid.length();
    let eps = scheme.params.eps;
    let nb = WEAK_BATTERY;
    let cosines: Vec<Vec<f64>> = (0..nb)
        .map(|j| xs.iter().map(|x| (j as f64 * std::f64::consts::PI * x / l).cos()).collect())
        .collect();
    let weights: Vec<Vec<f64>> = vec![
        vec![1.0; xs.len()],
        xs.iter().map(|x| 1.0 + (std::f64::consts::PI * x / l).cos()).collect(),
        xs.iter().map(|x| 1.0 - (2.0 * std::f64::consts::PI * x / l).cos()).collect(),
    ];

    let mut cont = vec![vec![0.0; nb]; nb];
    let mut mom = vec![vec![0.0; nb]; nb];
    let mut energy = vec![0.0; nb];
    let mut ent = vec![vec![0.0; nb]; nb];

    let first = &records[0].before;
    let e0 = total_energy(scheme, first)?;
    for i in 0..nb {
        let (psi0, _) = time_test(i, 0.0, t_end);
        for j in 0..nb {
            cont[i][j] = psi0 * grid.inner(&first.rho, &cosines[j]);
            mom[i][j] = psi0 * first.p[j];
        }
        energy[i] = psi0 * e0;
    }

    for rec in records {
        let b = &rec.before;
        let h = rec.h;
        let tn = b.t - t0;
        let u_nodes = scheme.space.eval(&b.u);
        let v: Vec<f64> = u_nodes.iter().map(|u| rec.chi * u).collect();
        let flux = upwind_flux(&b.rho, &face_avg(&v));
        let drho = face_diff(&b.rho);
        let eb = energy_balance(scheme, rec)?;
        let e_n = total_energy(scheme, b)?;
        let entropy = entropy_balance(scheme, rec)?;
        let mass = scheme.space.assemble_mass(&b.rho)?;
        let noise: Vec<f64> = {
            let mut s = vec![0.0; scheme.space.m()];
            for (g, dw) in rec.g.iter().zip(&rec.dw) {
                for (sj, mj) in s.iter_mut().zip(mass.apply(g)) {
                    *sj += mj * dw;
                }
            }
            s
        };
        for i in 0..nb {
            let (psi, _) = time_test(i, tn, t_end);
            let dpsi = time_test(i, tn + h, t_end).0 - psi;
            for j in 0..nb {
                let dphi = face_diff(&cosines[j]);
                let transport: f64 = (0..grid.faces())
                    .map(|f| flux[f] * dphi[f] - eps * drho[f] * dphi[f] / dx)
                    .sum();
                cont[i][j] += dpsi * grid.inner(&b.rho, &cosines[j]) + h * psi * transport;
                if j < scheme.space.m() {
                    mom[i][j] += dpsi * b.p[j] + psi * (h * rec.drift[j] + noise[j]);
                }
                let weighted: f64 = (0..w.len()).map(|k| weights[j][k] * entropy.node_residual[k]).sum();
                ent[i][j] += psi * weighted;
            }
            energy[i] += dpsi * e_n + psi * (eb.predicted() + eb.stochastic);
        }
    }
    Ok(WeakResiduals {
        continuity: cont,
        momentum: mom,
        energy,
        entropy_slack: ent,
    })
}

/// Empirical counterparts of the solution-class norms over one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub rho_l53_sup: f64,
    pub momentum_l54_sup: f64,
    pub theta_l4_sup: f64,
    pub theta_h1_sq_int: f64,
    pub u_h1_sq_int: f64,
}

/// Norms over the recorded states; time integrals use the left-point rule between records.
pub fn norm_report(scheme: &Scheme, states: &[SimState]) -> NormReport {
    let grid = scheme.grid();
    let lp = |f: &[f64], p: f64| grid.integrate(&f.iter().map(|v| v.abs().powf(p)).collect::<Vec<_>>()).powf(1.0 / p);
    let mut r = NormReport {
        rho_l53_sup: 0.0,
        momentum_l54_sup: 0.0,
        theta_l4_sup: 0.0,
        theta_h1_sq_int: 0.0,
        u_h1_sq_int: 0.0,
    };
    for (k, s) in states.iter().enumerate() {
        let u = scheme.space.eval(&s.u);
        let rho_u: Vec<f64> = s.rho.iter().zip(&u).map(|(a, b)| a * b).collect();
        r.rho_l53_sup = r.rho_l53_sup.max(lp(&s.rho, 5.0 / 3.0));
        r.momentum_l54_sup = r.momentum_l54_sup.max(lp(&rho_u, 5.0 / 4.0));
        r.theta_l4_sup = r.theta_l4_sup.max(lp(&s.theta, 4.0));
        if let Some(next) = states.get(k + 1) {
            let dt = next.t - s.t;
            let dtheta = face_diff(&s.theta);
            let grad_sq: f64 = dtheta.iter().map(|d| d * d / grid.dx()).sum();
            let theta_sq = grid.integrate(&s.theta.iter().map(|t| t * t).collect::<Vec<_>>());
            r.theta_h1_sq_int += dt * (theta_sq + grad_sq);
            r.u_h1_sq_int += dt * velocity_h1(scheme, &s.u).powi(2);
        }
    }
    r
}
