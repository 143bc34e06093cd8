//! Uniform nodal grid on `[0, L]` and the pathwise parabolic solvers for density and
//! temperature.
//!
//! Nodes sit at `x_i = i·dx`, `i = 0..=N`, with trapezoid weights (`dx/2` at the two end
//! nodes). Fluxes live on the `N` interior faces `i+1/2`; the boundary flux is zero, which
//! is the discrete Neumann condition. Every update is written as
//! `w_i (q'_i - q_i) = -h (F_{i+1/2} - F_{i-1/2})`, so `Σ w_i q_i` changes only through
//! sources.

use crate::error::{Error, Result};
use crate::solve_tridiagonal;
use crate::thermo::GasModel;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    cells: usize,
    length: f64,
    dx: f64,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(cells: usize, length: f64) -> Result<Self> {
        if cells < 2 {
            return Err(Error::Config(format!("grid needs at least 2 cells, got {cells}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Config(format!("domain length must be positive, got {length}")));
        }
        let dx = length / cells as f64;
        let mut weights = vec![dx; cells + 1];
        weights[0] = 0.5 * dx;
        weights[cells] = 0.5 * dx;
        Ok(Self {
            cells,
            length,
            dx,
            weights,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn nodes(&self) -> usize {
        self.cells + 1
    }

    pub fn faces(&self) -> usize {
        self.cells
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.cells {
            self.length
        } else {
            i as f64 * self.dx
        }
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.nodes()).map(|i| self.x(i)).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum()
    }

    pub fn distance_to_boundary(&self, i: usize) -> f64 {
        let x = self.x(i);
        x.min(self.length - x)
    }
}

/// `a_{i+1} - a_i` on each face.
pub fn face_diff(a: &[f64]) -> Vec<f64> {
    a.windows(2).map(|p| p[1] - p[0]).collect()
}

/// `(a_i + a_{i+1}) / 2` on each face.
pub fn face_avg(a: &[f64]) -> Vec<f64> {
    a.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

/// Net outflow `F_{i+1/2} - F_{i-1/2}` at each node, with zero boundary fluxes.
pub fn net_outflow(face: &[f64]) -> Vec<f64> {
    let n = face.len() + 1;
    (0..n)
        .map(|i| {
            let right = if i < n - 1 { face[i] } else { 0.0 };
            let left = if i > 0 { face[i - 1] } else { 0.0 };
            right - left
        })
        .collect()
}

/// Upwind flux `v⁺ q_i + v⁻ q_{i+1}` of the nodal quantity `q` with face velocities `v`.
pub fn upwind_flux(q: &[f64], v_face: &[f64]) -> Vec<f64> {
    v_face
        .iter()
        .enumerate()
        .map(|(f, &v)| v.max(0.0) * q[f] + v.min(0.0) * q[f + 1])
        .collect()
}

/// Largest fraction of a node's control volume emptied by convection in one step.
pub fn cfl_ratio(grid: &Grid, v_face: &[f64], h: f64) -> f64 {
    let w = grid.weights();
    (0..grid.nodes())
        .map(|i| {
            let right = if i < grid.faces() { v_face[i].max(0.0) } else { 0.0 };
            let left = if i > 0 { (-v_face[i - 1]).max(0.0) } else { 0.0 };
            h * (right + left) / w[i]
        })
        .fold(0.0, f64::max)
}

fn check_positive(name: &str, f: &[f64]) -> Result<()> {
    if let Some((i, v)) = f.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::State(format!("{name} not positive at node {i}: {v}")));
    }
    Ok(())
}

fn check_len(name: &str, f: &[f64], n: usize) -> Result<()> {
    if f.len() != n {
        return Err(Error::Argument(format!("{name} has {} values, expected {n}", f.len())));
    }
    Ok(())
}

/// Solves `w_i (q'_i - b_i/w_i) - (h c / dx) Σ_faces Δq' = 0` for `q'`.
fn implicit_diffusion(grid: &Grid, rhs: &[f64], coef: f64) -> Result<Vec<f64>> {
    let n = grid.nodes();
    let w = grid.weights();
    let r = coef / grid.dx();
    let lower = vec![-r; n];
    let upper = vec![-r; n];
    let diag: Vec<f64> = (0..n)
        .map(|i| w[i] + if i == 0 || i == n - 1 { r } else { 2.0 * r })
        .collect();
    solve_tridiagonal(&lower, &diag, &upper, rhs)
        .ok_or_else(|| Error::State("singular diffusion system".into()))
}

/// One step of `∂ₜρ + ∂ₓ(ρv) = ε∂ₓ²ρ`: explicit upwind convection, implicit diffusion.
///
/// `v` is the nodal advecting velocity (already cut off); face velocities are nodal averages.
pub fn continuity_step(grid: &Grid, rho_n: &[f64], v: &[f64], h: f64, eps: f64) -> Result<Vec<f64>> {
    check_len("rho", rho_n, grid.nodes())?;
    check_len("velocity", v, grid.nodes())?;
    check_positive("density", rho_n)?;
    if !(h > 0.0) || !(eps >= 0.0) {
        return Err(Error::Argument(format!("need h > 0 and eps >= 0, got h={h}, eps={eps}")));
    }
    let v_face = face_avg(v);
    let ratio = cfl_ratio(grid, &v_face, h);
    if ratio > 1.0 {
        return Err(Error::StepSize {
            h,
            ratio,
            suggested: 0.9 * h / ratio,
        });
    }
    let flux = upwind_flux(rho_n, &v_face);
    let div = net_outflow(&flux);
    let rhs: Vec<f64> = (0..grid.nodes())
        .map(|i| grid.weights()[i] * rho_n[i] - h * div[i])
        .collect();
    let rho = implicit_diffusion(grid, &rhs, h * eps)?;
    check_positive("updated density", &rho)?;
    Ok(rho)
}

/// Frozen data entering one internal-energy step.
#[derive(Debug, Clone, Copy)]
pub struct EnergyInputs<'a> {
    pub rho_n: &'a [f64],
    pub rho_next: &'a [f64],
    pub theta_n: &'a [f64],
    /// Nodal Galerkin velocity at the start of the step (before the cut-off).
    pub u: &'a [f64],
    /// Velocity cut-off factor `χ(‖u‖ - R)`.
    pub chi: f64,
    /// Nodal heat source `H ≥ 0`.
    pub heat: &'a [f64],
    pub h: f64,
    pub eps: f64,
}

/// Nodal dissipative and work sources of the internal-energy equation, integrated over
/// each control volume. Each face quantity is split evenly between its two nodes.
pub fn energy_sources(grid: &Grid, gas: &GasModel, inp: &EnergyInputs<'_>) -> Result<Vec<f64>> {
    let dx = grid.dx();
    let du = face_diff(inp.u);
    let theta_bar = face_avg(inp.theta_n);
    let rho_bar = face_avg(inp.rho_n);
    let p: Vec<f64> = inp
        .rho_n
        .iter()
        .zip(inp.theta_n)
        .map(|(&r, &t)| gas.pressure(r, t))
        .collect::<Result<_>>()?;
    let p_bar = face_avg(&p);
    let bp: Vec<f64> = inp.rho_next.iter().map(|&r| gas.artificial_potential_d1(r)).collect();
    let dbp = face_diff(&bp);
    let drho = face_diff(inp.rho_next);
    let mut q = vec![0.0; grid.nodes()];
    for f in 0..grid.faces() {
        let nu = gas.transport_coeffs(theta_bar[f])?.longitudinal();
        let val = inp.chi * nu * du[f] * du[f] / dx + inp.eps * rho_bar[f] * du[f] * du[f] / dx
            - p_bar[f] * inp.chi * du[f]
            + inp.eps * dbp[f] * drho[f] / dx;
        q[f] += 0.5 * val;
        q[f + 1] += 0.5 * val;
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyStep {
    pub theta: Vec<f64>,
    pub iterations: usize,
    /// Final `max_i |G_i| / w_i`.
    pub residual: f64,
}

pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 50;

/// Backward-Euler step of the internal-energy equation in Kirchhoff form, solved by
/// Newton's method on `θ'`.
pub fn energy_step(grid: &Grid, gas: &GasModel, inp: &EnergyInputs<'_>) -> Result<EnergyStep> {
    let n = grid.nodes();
    for (name, f) in [
        ("rho_n", inp.rho_n),
        ("rho_next", inp.rho_next),
        ("theta_n", inp.theta_n),
        ("u", inp.u),
        ("heat", inp.heat),
    ] {
        check_len(name, f, n)?;
    }
    check_positive("density", inp.rho_n)?;
    check_positive("updated density", inp.rho_next)?;
    check_positive("temperature", inp.theta_n)?;
    let h = inp.h;
    let w = grid.weights();
    let dx = grid.dx();
    let (delta, eps) = (gas.delta, inp.eps);

    let v: Vec<f64> = inp.u.iter().map(|u| inp.chi * u).collect();
    let v_face = face_avg(&v);
    let rho_e_n: Vec<f64> = (0..n)
        .map(|i| Ok(inp.rho_n[i] * gas.internal_energy_reg(inp.rho_n[i], inp.theta_n[i])?))
        .collect::<Result<_>>()?;
    let conv = net_outflow(&upwind_flux(&rho_e_n, &v_face));
    let q = energy_sources(grid, gas, inp)?;
    let c: Vec<f64> = (0..n)
        .map(|i| w[i] * rho_e_n[i] - h * conv[i] + h * q[i] + h * w[i] * inp.rho_next[i] * inp.heat[i])
        .collect();

    let residual = |theta: &[f64]| -> Result<Vec<f64>> {
        let k: Vec<f64> = theta.iter().map(|&t| gas.kirchhoff(t)).collect::<Result<_>>()?;
        let lap = net_outflow(&face_diff(&k));
        (0..n)
            .map(|i| {
                let t = theta[i];
                let stiff = delta / (t * t) - eps * t.powi(5);
                Ok(w[i] * inp.rho_next[i] * gas.internal_energy_reg(inp.rho_next[i], t)?
                    - h / dx * lap[i]
                    - h * w[i] * stiff
                    - c[i])
            })
            .collect()
    };
    let scaled_max = |g: &[f64]| g.iter().zip(w).map(|(g, w)| (g / w).abs()).fold(0.0, f64::max);

    let mut theta = inp.theta_n.to_vec();
    let mut g = residual(&theta)?;
    let mut res = scaled_max(&g);
    let mut iterations = 0;
    while res > NEWTON_TOL {
        if iterations == NEWTON_MAX_ITER {
            return Err(Error::Solver {
                iterations,
                residual: res,
            });
        }
        iterations += 1;
        let kd: Vec<f64> = theta
            .iter()
            .map(|&t| Ok(gas.transport_coeffs(t)?.kappa_delta))
            .collect::<Result<_>>()?;
        let r = h / dx;
        let mut diag = vec![0.0; n];
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            let t = theta[i];
            let faces = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
            diag[i] = w[i] * inp.rho_next[i] * gas.heat_capacity_reg(inp.rho_next[i], t)?
                + r * faces * kd[i]
                + h * w[i] * (2.0 * delta / (t * t * t) + 5.0 * eps * t.powi(4));
            if i > 0 {
                lower[i] = -r * kd[i - 1];
            }
            if i < n - 1 {
                upper[i] = -r * kd[i + 1];
            }
        }
        let step = solve_tridiagonal(&lower, &diag, &upper, &g)
            .ok_or_else(|| Error::State("singular energy Jacobian".into()))?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t - lambda * s).collect();
            if trial.iter().all(|t| *t > 0.0 && t.is_finite()) {
                let g_trial = residual(&trial)?;
                let r_trial = scaled_max(&g_trial);
                if r_trial < res || lambda < 1e-3 {
                    theta = trial;
                    g = g_trial;
                    res = r_trial;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-10 {
                return Err(Error::Solver {
                    iterations,
                    residual: res,
                });
            }
        }
    }
    Ok(EnergyStep {
        theta,
        iterations,
        residual: res,
    })
}

/// `min_n min ρ(t_n) / (min ρ(0) · exp(-Σ_{k<n} h ‖∂ₓv_k‖_∞))` for a trajectory whose
/// step `k` was advected by the nodal velocity `v_history[k]`.
pub fn lower_bound_check(grid: &Grid, rho_history: &[Vec<f64>], v_history: &[Vec<f64>], h: f64) -> Result<f64> {
    if rho_history.is_empty() || v_history.len() + 1 < rho_history.len() {
        return Err(Error::Argument("velocity history shorter than density history".into()));
    }
    let min0 = rho_history[0].iter().copied().fold(f64::INFINITY, f64::min);
    let mut integral = 0.0;
    let mut margin = f64::INFINITY;
    for (n, rho) in rho_history.iter().enumerate() {
        if n > 0 {
            let sup = face_diff(&v_history[n - 1])
                .iter()
                .map(|d| (d / grid.dx()).abs())
                .fold(0.0, f64::max);
            integral += h * sup;
        }
        let min_n = rho.iter().copied().fold(f64::INFINITY, f64::min);
        margin = margin.min(min_n / (min0 * (-integral).exp()));
    }
    Ok(margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_basics() {
        let g = Grid::new(4, 2.0).unwrap();
        assert_eq!(g.nodes(), 5);
        assert_eq!(g.x(4), 2.0);
        assert_abs_diff_eq!(g.integrate(&[1.0; 5]), 2.0, epsilon = 1e-15);
        assert!(Grid::new(1, 1.0).is_err());
    }

    #[test]
    fn constant_density_at_rest_is_fixed() {
        let g = Grid::new(32, 1.0).unwrap();
        let rho = vec![1.7; 33];
        let out = continuity_step(&g, &rho, &[0.0; 33], 0.01, 0.1).unwrap();
        for r in out {
            assert_abs_diff_eq!(r, 1.7, epsilon = 1e-13);
        }
    }

    #[test]
    fn continuity_conserves_mass() {
        let g = Grid::new(50, 1.0).unwrap();
        let rho: Vec<f64> = g.positions().iter().map(|x| 1.0 + 0.3 * (5.0 * x).sin()).collect();
        let v: Vec<f64> = g.positions().iter().map(|x| 2.0 * (3.0 * x).cos()).collect();
        let out = continuity_step(&g, &rho, &v, 1e-3, 0.05).unwrap();
        let (m0, m1) = (g.integrate(&rho), g.integrate(&out));
        assert!((m1 - m0).abs() <= 1e-12 * m0);
    }

    #[test]
    fn continuity_rejects_large_steps() {
        let g = Grid::new(10, 1.0).unwrap();
        let err = continuity_step(&g, &[1.0; 11], &[5.0; 11], 0.1, 0.0).unwrap_err();
        match err {
            Error::StepSize { suggested, .. } => assert!(suggested < 0.1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn energy_fixed_point() {
        let g = Grid::new(16, 1.0).unwrap();
        let gas = GasModel {
            delta: 0.1,
            ..GasModel::default()
        };
        let ones = vec![1.0; 17];
        let zeros = vec![0.0; 17];
        let inp = EnergyInputs {
            rho_n: &ones,
            rho_next: &ones,
            theta_n: &ones,
            u: &zeros,
            chi: 1.0,
            heat: &zeros,
            h: 0.01,
            eps: 0.1,
        };
        let out = energy_step(&g, &gas, &inp).unwrap();
        for t in out.theta {
            assert_abs_diff_eq!(t, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn energy_minimum_principle() {
        let g = Grid::new(40, 1.0).unwrap();
        let gas = GasModel::default();
        let rho: Vec<f64> = g.positions().iter().map(|x| 1.0 + 0.2 * (3.0 * x).cos()).collect();
        let theta: Vec<f64> = g.positions().iter().map(|x| 1.0 + 0.5 * (7.0 * x).sin()).collect();
        let zeros = vec![0.0; 41];
        let inp = EnergyInputs {
            rho_n: &rho,
            rho_next: &rho,
            theta_n: &theta,
            u: &zeros,
            chi: 1.0,
            heat: &zeros,
            h: 0.01,
            eps: 0.0,
        };
        let out = energy_step(&g, &gas, &inp).unwrap();
        let min_n = theta.iter().copied().fold(f64::INFINITY, f64::min);
        let min_next = out.theta.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min_next >= min_n - 1e-10);
    }

    #[test]
    fn lower_bound_at_rest() {
        let g = Grid::new(20, 1.0).unwrap();
        let mut rho: Vec<f64> = g.positions().iter().map(|x| 1.0 + 0.5 * (3.0 * x).cos()).collect();
        let zeros = vec![0.0; 21];
        let mut hist = vec![rho.clone()];
        for _ in 0..20 {
            rho = continuity_step(&g, &rho, &zeros, 0.01, 0.1).unwrap();
            hist.push(rho.clone());
        }
        let margin = lower_bound_check(&g, &hist, &vec![zeros; 20], 0.01).unwrap();
        assert!(margin >= 1.0 - 1e-12);
    }
}
