//! The collocation time loop.
//!
//! Each step freezes the velocity at `t_n`, advances density and then temperature with the
//! parabolic solvers, performs one Euler–Maruyama update of the projected momentum
//! `P = Π_m[ρu]`, and recovers the velocity as `u' = M[ρ']⁻¹ P'`.
//!
//! The momentum drift is written face by face so that it is the discrete adjoint of the
//! continuity and internal-energy updates: the exchange between kinetic, internal and
//! artificial-potential energy cancels in the discrete total energy.

use crate::diagnostics::{self, Ledger, LedgerRow};
use crate::error::{Error, Result};
use crate::fields_pde::{self, face_avg, face_diff, upwind_flux, EnergyInputs, Grid};
use crate::galerkin::GalerkinSpace;
use crate::noise::{keyed_normal, law_stream, DiffusionFamily, WienerDriver};
use crate::thermo::GasModel;

/// Parameters of the random initial data.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialLaw {
    pub rho_mean: f64,
    pub rho_low: f64,
    pub rho_up: f64,
    pub theta_mean: f64,
    /// Standard deviations of the cosine-mode coefficients of `ln ρ₀`.
    pub rho_amps: Vec<f64>,
    pub theta_amps: Vec<f64>,
    /// Velocity coefficient `n` has standard deviation `u_amp / n`.
    pub u_amp: f64,
}

impl Default for InitialLaw {
    fn default() -> Self {
        Self {
            rho_mean: 1.0,
            rho_low: 0.5,
            rho_up: 2.0,
            theta_mean: 1.0,
            rho_amps: vec![0.1; 3],
            theta_amps: vec![0.1; 3],
            u_amp: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub f0: f64,
    pub sigma_u: f64,
    pub modes: usize,
    pub xi: f64,
    pub hxi_margin: f64,
    /// Each increment is the sum of this many finer Gaussian draws (shared-increment
    /// refinement); 1 for ordinary runs.
    pub refinement: u64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            f0: 1.0,
            sigma_u: 0.5,
            modes: 8,
            xi: 0.05,
            hxi_margin: 0.02,
            refinement: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub length: f64,
    pub cells: usize,
    pub m: usize,
    pub r_cut: f64,
    pub eps: f64,
    pub h: f64,
    pub t_end: f64,
    /// Amplitude of the heat source `H(x) = h0 (1 + cos(πx/L)) / 2`.
    pub heat_h0: f64,
    pub record_stride: usize,
    pub gas: GasModel,
    pub noise: NoiseParams,
    pub law: InitialLaw,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            length: 1.0,
            cells: 64,
            m: 5,
            r_cut: 10.0,
            eps: 0.1,
            h: 1e-3,
            t_end: 0.5,
            heat_h0: 0.0,
            record_stride: 1,
            gas: GasModel::default(),
            noise: NoiseParams::default(),
            law: InitialLaw::default(),
        }
    }
}

impl SimParams {
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.h - 1e-9).ceil().max(0.0) as usize
    }

    pub fn family(&self) -> DiffusionFamily {
        DiffusionFamily {
            f0: self.noise.f0,
            sigma_u: self.noise.sigma_u,
            modes: self.noise.modes,
            eps: self.eps,
            xi: self.noise.xi,
            hxi_margin: self.noise.hxi_margin,
            length: self.length,
        }
    }

    pub fn noise_enabled(&self) -> bool {
        self.noise.f0 != 0.0 && self.noise.modes > 0
    }

    /// Largest explicit decay rate of the momentum drift at the reference state
    /// `(ρ_low, θ_mean)`, times `h`. Euler steps are stable for values up to 2.
    pub fn viscous_stability_number(&self) -> Result<f64> {
        let nu = self.gas.transport_coeffs(self.law.theta_mean)?.longitudinal();
        let lam = (self.m as f64 * std::f64::consts::PI / self.length).powi(2);
        Ok(self.h * (nu * lam / self.law.rho_low + self.eps * lam + 1.0 / self.m as f64))
    }

    /// Checks every precondition of the scheme before any step is taken.
    pub fn validate(&self) -> Result<()> {
        let grid = Grid::new(self.cells, self.length)?;
        self.gas.validate()?;
        let pos = [("h", self.h), ("T", self.t_end), ("eps", self.eps), ("R", self.r_cut)];
        for (name, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.m == 0 || self.m >= self.cells {
            return Err(Error::Config(format!(
                "need 1 <= m < N, got m = {} and N = {}",
                self.m, self.cells
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be at least 1".into()));
        }
        if !(self.heat_h0.is_finite() && self.heat_h0 >= 0.0) {
            return Err(Error::Config(format!("heat_h0 must be non-negative, got {}", self.heat_h0)));
        }
        if self.noise.refinement == 0 {
            return Err(Error::Config("noise refinement must be at least 1".into()));
        }
        if self.noise_enabled() {
            self.family().validate(&grid)?;
        }
        let law = &self.law;
        if !(law.rho_low > 0.0 && law.rho_low < law.rho_mean && law.rho_mean < law.rho_up) {
            return Err(Error::Config(format!(
                "need 0 < rho_low < rho_mean < rho_up, got {} < {} < {}",
                law.rho_low, law.rho_mean, law.rho_up
            )));
        }
        if !(law.theta_mean > 0.0) {
            return Err(Error::Config(format!("theta_mean must be positive, got {}", law.theta_mean)));
        }
        if law.rho_amps.iter().chain(&law.theta_amps).chain([&law.u_amp]).any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::Config("initial-law amplitudes must be finite and non-negative".into()));
        }
        let stab = self.viscous_stability_number()?;
        if stab > 2.0 {
            return Err(Error::Config(format!(
                "time step {} is too large for explicit viscous damping of {} modes \
                 (stability number {stab:.3} > 2); reduce h below {:.3e} or reduce m",
                self.h,
                self.m,
                2.0 * self.h / stab
            )));
        }
        Ok(())
    }
}

/// Immutable operators shared by every step of every path.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub params: SimParams,
    pub space: GalerkinSpace,
    pub family: DiffusionFamily,
    pub heat: Vec<f64>,
}

impl Scheme {
    pub fn new(params: SimParams) -> Result<Self> {
        params.validate()?;
        let grid = Grid::new(params.cells, params.length)?;
        let space = GalerkinSpace::new(params.m, grid.clone())?;
        let family = params.family();
        let heat = grid
            .positions()
            .iter()
            .map(|x| params.heat_h0 * 0.5 * (1.0 + (std::f64::consts::PI * x / params.length).cos()))
            .collect();
        Ok(Self {
            params,
            space,
            family,
            heat,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.space.grid()
    }

    pub fn gas(&self) -> &GasModel {
        &self.params.gas
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub rho: Vec<f64>,
    pub theta: Vec<f64>,
    /// Galerkin velocity coefficients.
    pub u: Vec<f64>,
    /// Projected momentum `Π_m[ρu]`.
    pub p: Vec<f64>,
    pub driver: WienerDriver,
}

impl SimState {
    /// State with the given fields; the momentum is computed from them.
    pub fn from_fields(scheme: &Scheme, rho: Vec<f64>, theta: Vec<f64>, u: Vec<f64>, driver: WienerDriver) -> Result<Self> {
        let p = scheme.space.assemble_mass(&rho)?.apply(&u);
        Ok(Self {
            t: 0.0,
            rho,
            theta,
            u,
            p,
            driver,
        })
    }
}

/// Everything a diagnostic needs to audit one step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub h: f64,
    pub before: SimState,
    pub after: SimState,
    /// Velocity cut-off factor at the start of the step.
    pub chi: f64,
    pub dw: Vec<f64>,
    /// Projected noise coefficients `Π_m F_{k,ε,ξ}` at the start of the step, one per mode.
    pub g: Vec<Vec<f64>>,
    pub drift: Vec<f64>,
    pub newton_iterations: usize,
}

/// Face quantities of the start-of-step state that enter the momentum drift.
struct FaceState {
    flux: Vec<f64>,
    u_avg: Vec<f64>,
    du: Vec<f64>,
    p_bar: Vec<f64>,
    rho_up: Vec<f64>,
    dbp: Vec<f64>,
    nu: Vec<f64>,
    drho_u: Vec<f64>,
}

fn face_state(scheme: &Scheme, rho: &[f64], theta: &[f64], u_nodes: &[f64], chi: f64) -> Result<FaceState> {
    let gas = scheme.gas();
    let v: Vec<f64> = u_nodes.iter().map(|u| chi * u).collect();
    let v_face = face_avg(&v);
    let flux = upwind_flux(rho, &v_face);
    let p: Vec<f64> = rho.iter().zip(theta).map(|(&r, &t)| gas.pressure(r, t)).collect::<Result<_>>()?;
    let rho_up = v_face
        .iter()
        .enumerate()
        .map(|(f, &vf)| {
            if vf > 0.0 {
                rho[f]
            } else if vf < 0.0 {
                rho[f + 1]
            } else {
                0.5 * (rho[f] + rho[f + 1])
            }
        })
        .collect();
    let bp: Vec<f64> = rho.iter().map(|&r| gas.artificial_potential_d1(r)).collect();
    let nu = face_avg(theta)
        .iter()
        .map(|&t| Ok(gas.transport_coeffs(t)?.longitudinal()))
        .collect::<Result<_>>()?;
    let rho_u: Vec<f64> = rho.iter().zip(u_nodes).map(|(r, u)| r * u).collect();
    Ok(FaceState {
        flux,
        u_avg: face_avg(u_nodes),
        du: face_diff(u_nodes),
        p_bar: face_avg(&p),
        rho_up,
        dbp: face_diff(&bp),
        nu,
        drho_u: face_diff(&rho_u),
    })
}

/// Momentum drift tested against each basis function, split into its named parts.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftParts {
    pub convection: Vec<f64>,
    pub pressure: Vec<f64>,
    pub artificial_pressure: Vec<f64>,
    pub viscous: Vec<f64>,
    pub artificial_viscosity: Vec<f64>,
    pub damping: Vec<f64>,
}

impl DriftParts {
    pub fn total(&self) -> Vec<f64> {
        (0..self.convection.len())
            .map(|j| {
                self.convection[j]
                    + self.pressure[j]
                    + self.artificial_pressure[j]
                    + self.viscous[j]
                    + self.artificial_viscosity[j]
                    + self.damping[j]
            })
            .collect()
    }
}

pub fn drift_parts(state: &SimState, scheme: &Scheme) -> Result<DriftParts> {
    let space = &scheme.space;
    let grid = space.grid();
    let dx = grid.dx();
    let w = grid.weights();
    let u_nodes = space.eval(&state.u);
    let chi = space.cutoff_factor(&state.u, scheme.params.r_cut);
    let fs = face_state(scheme, &state.rho, &state.theta, &u_nodes, chi)?;
    let eps = scheme.params.eps;
    let m = space.m();
    let mut parts = DriftParts {
        convection: vec![0.0; m],
        pressure: vec![0.0; m],
        artificial_pressure: vec![0.0; m],
        viscous: vec![0.0; m],
        artificial_viscosity: vec![0.0; m],
        damping: vec![0.0; m],
    };
    for j in 0..m {
        let phi = space.basis(j);
        let dphi = face_diff(phi);
        let phi_bar = face_avg(phi);
        let (mut conv, mut pres, mut art, mut visc, mut avis) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for f in 0..grid.faces() {
            conv += fs.flux[f] * fs.u_avg[f] * dphi[f];
            pres += chi * fs.p_bar[f] * dphi[f];
            art -= chi * fs.rho_up[f] * fs.dbp[f] * phi_bar[f];
            visc -= chi * fs.nu[f] * fs.du[f] * dphi[f] / dx;
            avis -= eps * fs.drho_u[f] * dphi[f] / dx;
        }
        parts.convection[j] = conv;
        parts.pressure[j] = pres;
        parts.artificial_pressure[j] = art;
        parts.viscous[j] = visc;
        parts.artificial_viscosity[j] = avis;
        parts.damping[j] = -(0..grid.nodes()).map(|i| w[i] * u_nodes[i] * phi[i]).sum::<f64>() / m as f64;
    }
    Ok(parts)
}

pub fn assemble_drift(state: &SimState, scheme: &Scheme) -> Result<Vec<f64>> {
    Ok(drift_parts(state, scheme)?.total())
}

/// Projected noise coefficients `Π_m F_{k,ε,ξ}(ρ, θ, u)`.
pub fn noise_coefficients(state: &SimState, scheme: &Scheme, u_nodes: &[f64]) -> Result<Vec<Vec<f64>>> {
    if !scheme.params.noise_enabled() {
        return Ok(vec![vec![0.0; scheme.space.m()]; scheme.params.noise.modes]);
    }
    let fields = scheme
        .family
        .coefficient_fields(scheme.grid(), &state.rho, &state.theta, u_nodes)?;
    Ok(fields.iter().map(|f| scheme.space.project(f)).collect())
}

/// Advances `state` by one step and returns the audit record.
pub fn step(state: &SimState, scheme: &Scheme) -> Result<StepRecord> {
    let params = &scheme.params;
    let space = &scheme.space;
    let grid = space.grid();
    let h = params.h;
    let u_nodes = space.eval(&state.u);
    let chi = space.cutoff_factor(&state.u, params.r_cut);
    let v: Vec<f64> = u_nodes.iter().map(|u| chi * u).collect();

    let rho = fields_pde::continuity_step(grid, &state.rho, &v, h, params.eps)?;
    let energy = fields_pde::energy_step(
        grid,
        scheme.gas(),
        &EnergyInputs {
            rho_n: &state.rho,
            rho_next: &rho,
            theta_n: &state.theta,
            u: &u_nodes,
            chi,
            heat: &scheme.heat,
            h,
            eps: params.eps,
        },
    )?;

    let drift = assemble_drift(state, scheme)?;
    let mut driver = state.driver.clone();
    let sampled = driver.sample_increments(h)?;
    let dw = if params.noise_enabled() {
        sampled
    } else {
        vec![0.0; params.noise.modes]
    };
    let g = noise_coefficients(state, scheme, &u_nodes)?;
    let mass_n = space.assemble_mass(&state.rho)?;
    let mut p: Vec<f64> = state.p.iter().zip(&drift).map(|(p, d)| p + h * d).collect();
    for (gk, dwk) in g.iter().zip(&dw) {
        if *dwk != 0.0 {
            for (pj, sj) in p.iter_mut().zip(mass_n.apply(gk)) {
                *pj += sj * dwk;
            }
        }
    }
    let u = space.assemble_mass(&rho)?.solve(&p)?;
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::State(format!("non-finite velocity at t = {}", state.t + h)));
    }
    let after = SimState {
        t: state.t + h,
        rho,
        theta: energy.theta,
        u,
        p,
        driver,
    };
    Ok(StepRecord {
        h,
        before: state.clone(),
        after,
        chi,
        dw,
        g,
        drift,
        newton_iterations: energy.iterations,
    })
}

const TRUNCATION: f64 = 3.0;

/// Standard normal conditioned on `|Z| ≤ 3`, drawn by rejection from the keyed stream.
fn truncated_normal(seed: u64, path: u64, slot: u64) -> f64 {
    let stream = law_stream(path);
    (0..)
        .map(|c| keyed_normal(seed, stream, slot, c))
        .find(|z| z.abs() <= TRUNCATION)
        .expect("rejection sampling terminates")
}

/// Draws initial data for `path` from the configured law.
///
/// `ρ₀ = ρ̄ exp(Σ a_j cos(jπx/L))` and likewise for `θ₀`, so both are positive and satisfy
/// the Neumann condition; the velocity coefficients are independent centred Gaussians.
pub fn sample_initial(scheme: &Scheme, seed: u64, path: u64) -> Result<SimState> {
    let law = &scheme.params.law;
    let grid = scheme.grid();
    let xs = grid.positions();
    let l = scheme.params.length;
    let log_field = |amps: &[f64], offset: u64| -> Vec<f64> {
        let a: Vec<f64> = amps
            .iter()
            .enumerate()
            .map(|(j, s)| s * truncated_normal(seed, path, offset + j as u64))
            .collect();
        xs.iter()
            .map(|x| {
                a.iter()
                    .enumerate()
                    .map(|(j, aj)| aj * ((j + 1) as f64 * std::f64::consts::PI * x / l).cos())
                    .sum::<f64>()
            })
            .collect()
    };
    let rho: Vec<f64> = log_field(&law.rho_amps, 0).iter().map(|z| law.rho_mean * z.exp()).collect();
    let theta: Vec<f64> = log_field(&law.theta_amps, 1000).iter().map(|z| law.theta_mean * z.exp()).collect();
    let u: Vec<f64> = (0..scheme.space.m())
        .map(|n| law.u_amp / (n + 1) as f64 * truncated_normal(seed, path, 2000 + n as u64))
        .collect();
    let driver = WienerDriver::new(seed, path, scheme.params.noise.modes).with_refinement(scheme.params.noise.refinement);
    SimState::from_fields(scheme, rho, theta, u, driver)
}

/// Constant state `(ρ̄, θ̄, u = 0)`.
pub fn constant_state(scheme: &Scheme, rho: f64, theta: f64, seed: u64, path: u64) -> Result<SimState> {
    let n = scheme.grid().nodes();
    let driver = WienerDriver::new(seed, path, scheme.params.noise.modes).with_refinement(scheme.params.noise.refinement);
    SimState::from_fields(scheme, vec![rho; n], vec![theta; n], vec![0.0; scheme.space.m()], driver)
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// States at `t = 0` and at every recorded step.
    pub states: Vec<SimState>,
    pub ledger: Ledger,
    /// Every step record, kept only when requested.
    pub records: Vec<StepRecord>,
    /// Per-step audit quantities, one entry per step.
    pub steps: Vec<diagnostics::StepAudit>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub keep_records: bool,
    /// Reference temperature of the dissipation balance.
    pub big_theta: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            keep_records: false,
            big_theta: 1.0,
        }
    }
}

/// Runs one path from the given initial state for `⌈T/h⌉` steps.
pub fn run_from(scheme: &Scheme, initial: SimState, opts: RunOptions) -> Result<Trajectory> {
    let n_steps = scheme.params.n_steps();
    let stride = scheme.params.record_stride;
    let mut ledger = Ledger::default();
    let mut acc = diagnostics::RowAccumulator::default();
    ledger.push(diagnostics::ledger_row(scheme, &initial, None, &acc)?);
    let mut states = vec![initial.clone()];
    let mut records = Vec::new();
    let mut steps = Vec::with_capacity(n_steps);
    let mut state = initial;
    for n in 0..n_steps {
        let rec = step(&state, scheme)?;
        let audit = diagnostics::audit_step(scheme, &rec, opts.big_theta)?;
        acc.add(&audit);
        if (n + 1) % stride == 0 || n + 1 == n_steps {
            let row: LedgerRow = diagnostics::ledger_row(scheme, &rec.after, Some(&audit), &acc)?;
            ledger.push(row);
            acc.reset_increments();
            states.push(rec.after.clone());
        }
        steps.push(audit);
        state = rec.after.clone();
        if opts.keep_records {
            records.push(rec);
        }
    }
    Ok(Trajectory {
        states,
        ledger,
        records,
        steps,
    })
}

/// Samples the initial law for `(seed, path)` and runs it.
pub fn run(scheme: &Scheme, seed: u64, path: u64, opts: RunOptions) -> Result<Trajectory> {
    let initial = sample_initial(scheme, seed, path)?;
    run_from(scheme, initial, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_validate() {
        SimParams::default().validate().unwrap();
    }

    #[test]
    fn step_count_bookkeeping() {
        let p = SimParams {
            t_end: 0.01,
            h: 1e-3,
            ..SimParams::default()
        };
        assert_eq!(p.n_steps(), 10);
    }

    #[test]
    fn validation_rejects_bad_beta_and_coarse_grid() {
        let mut p = SimParams::default();
        p.gas.beta = 6.0;
        assert!(matches!(p.validate(), Err(Error::Config(_))));
        let mut p = SimParams::default();
        p.noise.xi = 0.01;
        assert!(matches!(p.validate(), Err(Error::Config(_))));
        let p = SimParams { h: 0.05, ..SimParams::default() };
        assert!(matches!(p.validate(), Err(Error::Config(_))));
    }
}
