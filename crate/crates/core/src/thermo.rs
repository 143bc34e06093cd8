//! Constitutive relations of a heat-conducting gas with radiation.
//!
//! The molecular pressure follows the scaling `p_M = θ^{5/2} P(ρ θ^{-3/2})` with the
//! structural profile `P(Z) = Z + p_∞ Z^{5/3}` (a monatomic gas with a degenerate cold
//! part). Energy and entropy follow from the same profile, so that Gibbs' relation
//! `θ Ds = De + p D(1/ρ)` holds identically; [`gibbs_residual`] checks it numerically for
//! any [`Thermodynamics`] implementation.
//!
//! The `_reg` variants carry the artificial-pressure and temperature regularizations
//! weighted by `delta`.

use crate::error::{Error, Result};

/// A complete constitutive model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasModel {
    /// Radiation constant.
    pub a: f64,
    /// Large-`Z` limit of `P(Z) / Z^{5/3}`.
    pub p_inf: f64,
    pub delta: f64,
    /// Artificial-pressure exponent.
    pub beta: f64,
    pub mu0: f64,
    pub eta0: f64,
    pub kappa0: f64,
    /// Additive entropy constant, `S(1) = s_gauge`.
    pub s_gauge: f64,
}

impl Default for GasModel {
    fn default() -> Self {
        Self {
            a: 1.0,
            p_inf: 1.0,
            delta: 0.1,
            beta: 8.0,
            mu0: 1.0,
            eta0: 0.5,
            kappa0: 1.0,
            s_gauge: 0.0,
        }
    }
}

/// Pointwise thermodynamic state with the partial derivatives used by the solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoEval {
    pub p: f64,
    pub p_m: f64,
    pub e: f64,
    pub e_m: f64,
    pub s: f64,
    pub s_m: f64,
    pub dp_drho: f64,
    pub dp_dtheta: f64,
    pub de_dtheta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transport {
    pub mu: f64,
    pub eta: f64,
    pub kappa: f64,
    pub kappa_delta: f64,
}

impl Transport {
    /// Effective one-dimensional viscosity `4μ/3 + η`, the coefficient of `∂ₓu` in the
    /// reduced stress.
    pub fn longitudinal(&self) -> f64 {
        4.0 * self.mu / 3.0 + self.eta
    }
}

/// Anything that can supply `p`, `e` and `s` as functions of density and temperature.
pub trait Thermodynamics {
    fn pressure(&self, rho: f64, theta: f64) -> Result<f64>;
    fn internal_energy(&self, rho: f64, theta: f64) -> Result<f64>;
    fn entropy(&self, rho: f64, theta: f64) -> Result<f64>;
}

fn check_theta(func: &'static str, theta: f64) -> Result<()> {
    if !theta.is_finite() || theta <= 0.0 {
        return Err(Error::domain(func, format!("temperature must be positive and finite, got {theta}")));
    }
    Ok(())
}

fn check_rho(func: &'static str, rho: f64, allow_zero: bool) -> Result<()> {
    let ok = rho.is_finite() && if allow_zero { rho >= 0.0 } else { rho > 0.0 };
    if !ok {
        return Err(Error::domain(func, format!("density out of range: {rho}")));
    }
    Ok(())
}

impl GasModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a", self.a),
            ("p_inf", self.p_inf),
            ("mu0", self.mu0),
            ("kappa0", self.kappa0),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("gas.{name} must be positive, got {v}")));
            }
        }
        if !(self.eta0.is_finite() && self.eta0 >= 0.0) {
            return Err(Error::Config(format!("gas.eta0 must be non-negative, got {}", self.eta0)));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::Config(format!("delta must be non-negative, got {}", self.delta)));
        }
        if self.delta > 0.0 && !(self.beta > 6.0) {
            return Err(Error::Config(format!(
                "beta must exceed 6 when delta > 0, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Structural profile `P(Z)`.
    pub fn profile(&self, z: f64) -> f64 {
        z + self.p_inf * z.powf(5.0 / 3.0)
    }

    pub fn profile_deriv(&self, z: f64) -> f64 {
        1.0 + 5.0 / 3.0 * self.p_inf * z.powf(2.0 / 3.0)
    }

    /// Entropy profile `S(Z)`; `S'(Z) = -(3/2)(5P/3 - ZP')/Z² = -1/Z` for this family.
    pub fn profile_entropy(&self, z: f64) -> f64 {
        -z.ln() + self.s_gauge
    }

    pub fn profile_entropy_deriv(&self, z: f64) -> f64 {
        -self.profile_ratio(z) / z
    }

    /// `5P/3 - ZP'`. The cold part `Z^{5/3}` cancels identically, leaving `2Z/3`.
    pub fn profile_defect(&self, z: f64) -> f64 {
        (5.0 / 3.0 - 1.0) * z
    }

    /// `(3/2)(5P/3 - ZP')/Z`.
    pub fn profile_ratio(&self, z: f64) -> f64 {
        1.5 * self.profile_defect(z) / z
    }

    fn scaled_density(rho: f64, theta: f64) -> f64 {
        rho / theta.powf(1.5)
    }

    pub fn molecular_pressure(&self, rho: f64, theta: f64) -> Result<f64> {
        check_theta("pressure", theta)?;
        check_rho("pressure", rho, true)?;
        if rho == 0.0 {
            return Ok(0.0);
        }
        Ok(theta.powf(2.5) * self.profile(Self::scaled_density(rho, theta)))
    }

    pub fn pressure(&self, rho: f64, theta: f64) -> Result<f64> {
        Ok(self.molecular_pressure(rho, theta)? + self.a / 3.0 * theta.powi(4))
    }

    /// `p_δ = p + δ(ρ² + ρ^β)`.
    pub fn pressure_reg(&self, rho: f64, theta: f64) -> Result<f64> {
        Ok(self.pressure(rho, theta)? + self.artificial_pressure(rho))
    }

    pub fn artificial_pressure(&self, rho: f64) -> f64 {
        self.delta * (rho * rho + rho.powf(self.beta))
    }

    /// Potential `b(ρ) = δ(ρ^β/(β-1) + ρ²)` with `ρ b'(ρ) - b(ρ)` equal to the artificial pressure.
    pub fn artificial_potential(&self, rho: f64) -> f64 {
        self.delta * (rho.powf(self.beta) / (self.beta - 1.0) + rho * rho)
    }

    pub fn artificial_potential_d1(&self, rho: f64) -> f64 {
        self.delta * (self.beta / (self.beta - 1.0) * rho.powf(self.beta - 1.0) + 2.0 * rho)
    }

    pub fn artificial_potential_d2(&self, rho: f64) -> f64 {
        self.delta * (self.beta * rho.powf(self.beta - 2.0) + 2.0)
    }

    pub fn internal_energy(&self, rho: f64, theta: f64) -> Result<f64> {
        check_theta("internal_energy", theta)?;
        check_rho("internal_energy", rho, false)?;
        let e_m = 1.5 * theta.powf(2.5) / rho * self.profile(Self::scaled_density(rho, theta));
        Ok(e_m + self.a * theta.powi(4) / rho)
    }

    pub fn internal_energy_reg(&self, rho: f64, theta: f64) -> Result<f64> {
        Ok(self.internal_energy(rho, theta)? + self.delta * theta)
    }

    pub fn entropy(&self, rho: f64, theta: f64) -> Result<f64> {
        check_theta("entropy", theta)?;
        check_rho("entropy", rho, false)?;
        let s_m = self.profile_entropy(Self::scaled_density(rho, theta));
        Ok(s_m + 4.0 * self.a / 3.0 * theta.powi(3) / rho)
    }

    pub fn entropy_reg(&self, rho: f64, theta: f64) -> Result<f64> {
        Ok(self.entropy(rho, theta)? + self.delta * theta.ln())
    }

    /// All constitutive quantities (unregularized) plus the partials needed downstream.
    pub fn eval(&self, rho: f64, theta: f64) -> Result<ThermoEval> {
        check_theta("eval", theta)?;
        check_rho("eval", rho, false)?;
        let z = Self::scaled_density(rho, theta);
        let pz = self.profile(z);
        let dpz = self.profile_deriv(z);
        let th32 = theta.powf(1.5);
        let p_m = theta * th32 * pz;
        let rad = self.a * theta.powi(4);
        let e_m = 1.5 * p_m / rho;
        let s_m = self.profile_entropy(z);
        Ok(ThermoEval {
            p: p_m + rad / 3.0,
            p_m,
            e: e_m + rad / rho,
            e_m,
            s: s_m + 4.0 * self.a / 3.0 * theta.powi(3) / rho,
            s_m,
            dp_drho: theta * dpz,
            dp_dtheta: th32 * (2.5 * pz - 1.5 * z * dpz) + 4.0 / 3.0 * self.a * theta.powi(3),
            de_dtheta: 2.25 * th32 / rho * self.profile_defect(z)
                + 4.0 * self.a * theta.powi(3) / rho,
        })
    }

    /// `∂θ e_δ`, the positive factor that makes the internal-energy solve monotone.
    pub fn heat_capacity_reg(&self, rho: f64, theta: f64) -> Result<f64> {
        Ok(self.eval(rho, theta)?.de_dtheta + self.delta)
    }

    /// `∂ρ p_M` at fixed temperature.
    pub fn molecular_pressure_drho(&self, rho: f64, theta: f64) -> Result<f64> {
        check_theta("molecular_pressure_drho", theta)?;
        check_rho("molecular_pressure_drho", rho, true)?;
        Ok(theta * self.profile_deriv(Self::scaled_density(rho, theta)))
    }

    /// `∂ρ e_M` at fixed temperature.
    pub fn molecular_energy_drho(&self, rho: f64, theta: f64) -> Result<f64> {
        check_theta("molecular_energy_drho", theta)?;
        check_rho("molecular_energy_drho", rho, false)?;
        let z = Self::scaled_density(rho, theta);
        // e_M = (3/2) θ^{5/2} P(Z)/ρ
        Ok(1.5 * (theta * self.profile_deriv(z) - theta.powf(2.5) * self.profile(z) / rho) / rho)
    }

    pub fn transport_coeffs(&self, theta: f64) -> Result<Transport> {
        check_theta("transport_coeffs", theta)?;
        let kappa = self.kappa0 * (1.0 + theta.powi(3));
        Ok(Transport {
            mu: self.mu0 * (1.0 + theta),
            eta: self.eta0 * (1.0 + theta),
            kappa,
            kappa_delta: kappa + self.delta * (theta.powf(self.beta) + 1.0 / theta),
        })
    }

    /// Antiderivative of `κ_δ` normalized to vanish at `θ = 1`.
    pub fn kirchhoff(&self, theta: f64) -> Result<f64> {
        check_theta("kirchhoff", theta)?;
        let b1 = self.beta + 1.0;
        Ok(self.kappa0 * (theta - 1.0 + (theta.powi(4) - 1.0) / 4.0)
            + self.delta * ((theta.powf(b1) - 1.0) / b1 + theta.ln()))
    }

    /// Inverse of [`GasModel::kirchhoff`] by safeguarded Newton iteration.
    pub fn kirchhoff_inverse(&self, value: f64) -> Result<f64> {
        if !value.is_finite() {
            return Err(Error::domain("kirchhoff_inverse", "non-finite argument"));
        }
        let k = |t: f64| self.kirchhoff(t).expect("positive temperature");
        let mut lo = 1.0;
        let mut hi = 1.0;
        while k(lo) > value {
            lo *= 0.5;
            if lo < 1e-300 {
                return Err(Error::domain(
                    "kirchhoff_inverse",
                    format!("{value} lies below the range of the Kirchhoff transform"),
                ));
            }
        }
        while k(hi) < value {
            hi *= 2.0;
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = k(t) - value;
            if f.abs() <= 1e-15 * value.abs().max(1.0) {
                return Ok(t);
            }
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let slope = self.transport_coeffs(t)?.kappa_delta;
            let mut next = t - f / slope;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() <= 1e-16 * t {
                return Ok(next);
            }
            t = next;
        }
        Ok(t)
    }

    /// `H_Θ = ρ(e - Θ s)`.
    pub fn ballistic_free_energy(&self, rho: f64, theta: f64, big_theta: f64) -> Result<f64> {
        Ok(rho * (self.internal_energy(rho, theta)? - big_theta * self.entropy(rho, theta)?))
    }

    /// `H_{δ,Θ} = ρ(e_δ - Θ s_δ)`.
    pub fn ballistic_free_energy_reg(&self, rho: f64, theta: f64, big_theta: f64) -> Result<f64> {
        Ok(rho * (self.internal_energy_reg(rho, theta)? - big_theta * self.entropy_reg(rho, theta)?))
    }

    /// `∂ρ H_{δ,Θ}` at fixed temperature.
    pub fn ballistic_free_energy_reg_drho(&self, rho: f64, theta: f64, big_theta: f64) -> Result<f64> {
        check_theta("ballistic_free_energy_reg_drho", theta)?;
        check_rho("ballistic_free_energy_reg_drho", rho, false)?;
        let z = Self::scaled_density(rho, theta);
        // ρe_δ = (3/2) θ^{5/2} P(Z) + aθ⁴ + δρθ
        let d_energy = 1.5 * theta * self.profile_deriv(z) + self.delta * theta;
        // ρs_δ = ρ S(Z) + (4a/3)θ³ + δρ ln θ
        let d_entropy = self.profile_entropy(z) + z * self.profile_entropy_deriv(z) + self.delta * theta.ln();
        Ok(d_energy - big_theta * d_entropy)
    }
}

impl Thermodynamics for GasModel {
    fn pressure(&self, rho: f64, theta: f64) -> Result<f64> {
        GasModel::pressure(self, rho, theta)
    }
    fn internal_energy(&self, rho: f64, theta: f64) -> Result<f64> {
        GasModel::internal_energy(self, rho, theta)
    }
    fn entropy(&self, rho: f64, theta: f64) -> Result<f64> {
        GasModel::entropy(self, rho, theta)
    }
}

/// The δ-regularized triple `(p, e_δ, s_δ)`, which satisfies Gibbs' relation as well.
#[derive(Debug, Clone, Copy)]
pub struct Regularized<'a>(pub &'a GasModel);

impl Thermodynamics for Regularized<'_> {
    fn pressure(&self, rho: f64, theta: f64) -> Result<f64> {
        self.0.pressure(rho, theta)
    }
    fn internal_energy(&self, rho: f64, theta: f64) -> Result<f64> {
        self.0.internal_energy_reg(rho, theta)
    }
    fn entropy(&self, rho: f64, theta: f64) -> Result<f64> {
        self.0.entropy_reg(rho, theta)
    }
}

/// Central-difference residuals of Gibbs' relation:
/// `r1 = θ ∂θ s - ∂θ e` and `r2 = θ ∂ρ s - ∂ρ e + p/ρ²`.
///
/// `fd_step` is relative: the increments are `fd_step·ρ` and `fd_step·θ`.
pub fn gibbs_residual<T: Thermodynamics + ?Sized>(
    model: &T,
    rho: f64,
    theta: f64,
    fd_step: f64,
) -> Result<(f64, f64)> {
    if !(fd_step > 0.0 && fd_step < 0.5) {
        return Err(Error::Argument(format!("relative fd_step must lie in (0, 1/2), got {fd_step}")));
    }
    let (hr, ht) = (fd_step * rho, fd_step * theta);
    let ds_dt = (model.entropy(rho, theta + ht)? - model.entropy(rho, theta - ht)?) / (2.0 * ht);
    let de_dt = (model.internal_energy(rho, theta + ht)? - model.internal_energy(rho, theta - ht)?) / (2.0 * ht);
    let ds_dr = (model.entropy(rho + hr, theta)? - model.entropy(rho - hr, theta)?) / (2.0 * hr);
    let de_dr = (model.internal_energy(rho + hr, theta)? - model.internal_energy(rho - hr, theta)?) / (2.0 * hr);
    let p = model.pressure(rho, theta)?;
    Ok((theta * ds_dt - de_dt, theta * ds_dr - de_dr + p / (rho * rho)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    fn empty() -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
    fn push(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }
}

/// Upper constant `c` in `0 < (3/2)(5P/3 - ZP')/Z < c`.
pub const PROFILE_BOUND_C: f64 = 2.0;

/// Outcome of [`validate_hypotheses`].
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub profile_at_zero: f64,
    pub profile_deriv: Range,
    /// `(3/2)(5P/3 - ZP')/Z` over the `Z` grid.
    pub profile_ratio: Range,
    pub entropy_deriv_max: f64,
    /// `P(Z)/Z^{5/3}` at the largest `Z` sampled.
    pub p_inf_estimate: f64,
    pub mu_ratio: Range,
    pub eta_ratio: Range,
    pub kappa_ratio: Range,
    /// Declared two-sided bound constants `(lower, upper)` for μ, η and κ.
    pub mu_bounds: (f64, f64),
    pub eta_bounds: (f64, f64),
    pub kappa_bounds: (f64, f64),
    /// Smallest left-minus-right value of the free-energy coercivity inequality.
    pub coercivity_min: f64,
}

impl HypothesisReport {
    pub fn checks(&self) -> Vec<(&'static str, bool)> {
        let within = |r: &Range, b: (f64, f64)| r.min >= b.0 * (1.0 - 1e-12) && r.max <= b.1 * (1.0 + 1e-12);
        vec![
            ("profile_vanishes_at_zero", self.profile_at_zero == 0.0),
            ("profile_increasing", self.profile_deriv.min > 0.0),
            (
                "profile_ratio_bounded",
                self.profile_ratio.min > 0.0 && self.profile_ratio.max < PROFILE_BOUND_C,
            ),
            ("entropy_profile_decreasing", self.entropy_deriv_max < 0.0),
            ("cold_pressure_limit_positive", self.p_inf_estimate > 0.0),
            ("shear_viscosity_bounds", self.mu_ratio.min > 0.0 && within(&self.mu_ratio, self.mu_bounds)),
            ("bulk_viscosity_bounds", self.eta_ratio.min >= 0.0 && within(&self.eta_ratio, self.eta_bounds)),
            ("conductivity_bounds", self.kappa_ratio.min > 0.0 && within(&self.kappa_ratio, self.kappa_bounds)),
            ("free_energy_coercivity", self.coercivity_min >= 0.0),
        ]
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|(_, ok)| *ok)
    }
}

/// Left minus right side of the coercivity inequality for `H_{δ,Θ}`.
pub fn coercivity_margin(gas: &GasModel, rho: f64, theta: f64, big_theta: f64, rho_bar: f64) -> Result<f64> {
    let h = gas.ballistic_free_energy_reg(rho, theta, big_theta)?;
    let lower = 0.25 * (rho * gas.internal_energy_reg(rho, theta)? + big_theta * rho * gas.entropy(rho, theta)?.abs());
    let tangent = (rho - rho_bar) * gas.ballistic_free_energy_reg_drho(rho_bar, 2.0 * big_theta, 2.0 * big_theta)?
        + gas.ballistic_free_energy_reg(rho_bar, 2.0 * big_theta, 2.0 * big_theta)?;
    Ok(h - lower + tangent.abs())
}

pub const COERCIVITY_REFERENCE_TEMPS: [f64; 3] = [0.5, 1.0, 2.0];
pub const COERCIVITY_REFERENCE_DENSITIES: [f64; 3] = [0.5, 1.0, 2.0];

/// Samples every structural hypothesis on the given grids. `theta_grid` doubles as the
/// density grid for the coercivity check.
pub fn validate_hypotheses(gas: &GasModel, z_grid: &[f64], theta_grid: &[f64]) -> Result<HypothesisReport> {
    let mut profile_deriv = Range::empty();
    let mut profile_ratio = Range::empty();
    let mut entropy_deriv_max = f64::NEG_INFINITY;
    let mut z_max = 0.0_f64;
    for &z in z_grid {
        if !(z > 0.0) {
            return Err(Error::Argument(format!("profile samples must be positive, got {z}")));
        }
        profile_deriv.push(gas.profile_deriv(z));
        profile_ratio.push(gas.profile_ratio(z));
        entropy_deriv_max = entropy_deriv_max.max(gas.profile_entropy_deriv(z));
        z_max = z_max.max(z);
    }
    profile_deriv.push(gas.profile_deriv(0.0));

    let mut mu_ratio = Range::empty();
    let mut eta_ratio = Range::empty();
    let mut kappa_ratio = Range::empty();
    let mut coercivity_min = f64::INFINITY;
    for &theta in theta_grid {
        let tr = gas.transport_coeffs(theta)?;
        mu_ratio.push(tr.mu / (1.0 + theta));
        eta_ratio.push(tr.eta / (1.0 + theta));
        kappa_ratio.push(tr.kappa / (1.0 + theta.powi(3)));
        for &rho in theta_grid {
            for big_theta in COERCIVITY_REFERENCE_TEMPS {
                for rho_bar in COERCIVITY_REFERENCE_DENSITIES {
                    coercivity_min = coercivity_min.min(coercivity_margin(gas, rho, theta, big_theta, rho_bar)?);
                }
            }
        }
    }

    Ok(HypothesisReport {
        profile_at_zero: gas.profile(0.0),
        profile_deriv,
        profile_ratio,
        entropy_deriv_max,
        p_inf_estimate: gas.profile(z_max) / z_max.powf(5.0 / 3.0),
        mu_ratio,
        eta_ratio,
        kappa_ratio,
        mu_bounds: (gas.mu0, gas.mu0),
        eta_bounds: (gas.eta0, gas.eta0),
        kappa_bounds: (gas.kappa0, gas.kappa0),
        coercivity_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gas(delta: f64) -> GasModel {
        GasModel {
            delta,
            ..GasModel::default()
        }
    }

    #[test]
    fn pressure_examples() {
        let g = gas(0.0);
        assert_abs_diff_eq!(g.pressure(1.0, 1.0).unwrap(), 7.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.pressure(0.0, 2.0).unwrap(), 16.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.pressure(8.0, 4.0).unwrap(), 64.0 + 256.0 / 3.0, epsilon = 1e-11);
    }

    #[test]
    fn pressure_rejects_bad_temperature() {
        let g = gas(0.0);
        assert!(matches!(g.pressure(1.0, -1.0), Err(Error::Domain { .. })));
        assert!(matches!(g.pressure(1.0, f64::NAN), Err(Error::Domain { .. })));
        assert!(g.pressure(-1.0, 1.0).is_err());
    }

    #[test]
    fn regularized_pressure_examples() {
        let g = gas(0.1);
        assert_abs_diff_eq!(g.pressure_reg(1.0, 1.0).unwrap(), 7.0 / 3.0 + 0.2, epsilon = 1e-14);
        let expected = g.pressure(2.0, 1.0).unwrap() + 0.1 * (4.0 + 256.0);
        assert_abs_diff_eq!(g.pressure_reg(2.0, 1.0).unwrap(), expected, epsilon = 1e-12);
        let g0 = gas(0.0);
        assert_eq!(g0.pressure_reg(1.3, 0.7).unwrap(), g0.pressure(1.3, 0.7).unwrap());
    }

    #[test]
    fn energy_examples() {
        assert_abs_diff_eq!(gas(0.0).internal_energy(1.0, 1.0).unwrap(), 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(gas(0.1).internal_energy_reg(1.0, 1.0).unwrap(), 4.1, epsilon = 1e-14);
        let no_rad = GasModel { a: 0.0, ..gas(0.0) };
        assert_abs_diff_eq!(no_rad.internal_energy(1.0, 1.0).unwrap(), 3.0, epsilon = 1e-14);
        assert!(matches!(gas(0.0).internal_energy(0.0, 1.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(gas(0.0).entropy(1.0, 1.0).unwrap(), 4.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(gas(0.1).entropy_reg(1.0, 1.0).unwrap(), 4.0 / 3.0, epsilon = 1e-14);
        let no_rad = GasModel { a: 0.0, ..gas(0.0) };
        assert_abs_diff_eq!(no_rad.entropy(std::f64::consts::E, 1.0).unwrap(), -1.0, epsilon = 1e-14);
        assert!(gas(0.0).entropy(0.0, 1.0).is_err());
        assert!(gas(0.0).entropy(1.0, 0.0).is_err());
    }

    #[test]
    fn transport_examples() {
        let g = gas(0.1);
        assert_abs_diff_eq!(g.transport_coeffs(1.0).unwrap().mu, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.transport_coeffs(2.0).unwrap().kappa_delta, 34.65, epsilon = 1e-12);
        let g0 = gas(0.0);
        let t = g0.transport_coeffs(3.3).unwrap();
        assert_eq!(t.kappa, t.kappa_delta);
        assert!(g.transport_coeffs(0.0).is_err());
    }

    #[test]
    fn kirchhoff_examples() {
        let g = gas(0.1);
        assert_eq!(g.kirchhoff(1.0).unwrap(), 0.0);
        let expected = 1.0 + 3.75 + 0.1 * 511.0 / 9.0 + 0.1 * 2f64.ln();
        assert_abs_diff_eq!(g.kirchhoff(2.0).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 10.49709, epsilon = 1e-5);
        for i in 0..=99 {
            let theta = 0.1 + 9.9 * i as f64 / 99.0;
            let back = g.kirchhoff_inverse(g.kirchhoff(theta).unwrap()).unwrap();
            assert!((back - theta).abs() <= 1e-12 * theta.max(1.0), "{theta} -> {back}");
        }
    }

    #[test]
    fn kirchhoff_derivative_is_conductivity() {
        let g = gas(0.1);
        for &theta in &[0.3, 1.0, 2.5] {
            let h = 1e-6;
            let fd = (g.kirchhoff(theta + h).unwrap() - g.kirchhoff(theta - h).unwrap()) / (2.0 * h);
            let k = g.transport_coeffs(theta).unwrap().kappa_delta;
            assert!((fd - k).abs() < 1e-6 * k);
        }
    }

    #[test]
    fn analytic_partials_match_differences() {
        let g = gas(0.0);
        let (rho, theta, h) = (0.7, 1.9, 1e-6);
        let ev = g.eval(rho, theta).unwrap();
        let dp_dr = (g.pressure(rho + h, theta).unwrap() - g.pressure(rho - h, theta).unwrap()) / (2.0 * h);
        let dp_dt = (g.pressure(rho, theta + h).unwrap() - g.pressure(rho, theta - h).unwrap()) / (2.0 * h);
        let de_dt = (g.internal_energy(rho, theta + h).unwrap() - g.internal_energy(rho, theta - h).unwrap()) / (2.0 * h);
        assert_abs_diff_eq!(ev.dp_drho, dp_dr, epsilon = 1e-7);
        assert_abs_diff_eq!(ev.dp_dtheta, dp_dt, epsilon = 1e-7);
        assert_abs_diff_eq!(ev.de_dtheta, de_dt, epsilon = 1e-7);
        let dem = (g.eval(rho + h, theta).unwrap().e_m - g.eval(rho - h, theta).unwrap().e_m) / (2.0 * h);
        assert_abs_diff_eq!(g.molecular_energy_drho(rho, theta).unwrap(), dem, epsilon = 1e-7);
        let g1 = gas(0.1);
        let dh = (g1.ballistic_free_energy_reg(rho + h, theta, 1.3).unwrap()
            - g1.ballistic_free_energy_reg(rho - h, theta, 1.3).unwrap())
            / (2.0 * h);
        assert_abs_diff_eq!(g1.ballistic_free_energy_reg_drho(rho, theta, 1.3).unwrap(), dh, epsilon = 1e-7);
    }

    #[test]
    fn gibbs_examples() {
        let g = gas(0.1);
        for (rho, theta) in [(1.0, 1.0), (0.3, 4.0)] {
            let (r1, r2) = gibbs_residual(&g, rho, theta, 1e-5).unwrap();
            assert!(r1.abs() <= 1e-6 && r2.abs() <= 1e-6, "{r1} {r2}");
            let (r1, r2) = gibbs_residual(&Regularized(&g), rho, theta, 1e-5).unwrap();
            assert!(r1.abs() <= 1e-6 && r2.abs() <= 1e-6, "{r1} {r2}");
        }
    }

    struct Broken(GasModel);
    impl Thermodynamics for Broken {
        fn pressure(&self, rho: f64, theta: f64) -> Result<f64> {
            self.0.pressure(rho, theta)
        }
        fn internal_energy(&self, rho: f64, theta: f64) -> Result<f64> {
            Ok(1.01 * self.0.internal_energy(rho, theta)?)
        }
        fn entropy(&self, rho: f64, theta: f64) -> Result<f64> {
            self.0.entropy(rho, theta)
        }
    }

    #[test]
    fn gibbs_audit_catches_mutated_energy() {
        let (r1, _) = gibbs_residual(&Broken(gas(0.1)), 1.0, 1.0, 1e-5).unwrap();
        assert!(r1.abs() > 1e-3);
    }

    #[test]
    fn free_energy_examples() {
        let g = gas(0.0);
        assert_abs_diff_eq!(g.ballistic_free_energy(1.0, 1.0, 1.0).unwrap(), 8.0 / 3.0, epsilon = 1e-14);
        let rho_e = 1.7 * g.internal_energy(1.7, 0.8).unwrap();
        assert_abs_diff_eq!(g.ballistic_free_energy(1.7, 0.8, 1e-300).unwrap(), rho_e, epsilon = 1e-12);
    }

    #[test]
    fn hypothesis_examples() {
        let g = GasModel::default();
        let z_grid: Vec<f64> = (0..=90).map(|i| 10f64.powf(-3.0 + 9.0 * i as f64 / 90.0)).collect();
        let theta_grid: Vec<f64> = (0..21).map(|i| 0.2 + 4.8 * i as f64 / 20.0).collect();
        let report = validate_hypotheses(&g, &z_grid, &theta_grid).unwrap();
        assert!((report.profile_ratio.min - 1.0).abs() <= 1e-12);
        assert!((report.profile_ratio.max - 1.0).abs() <= 1e-12);
        assert!((report.p_inf_estimate - (1.0 + 1e-4)).abs() <= 1e-8);
        assert!(report.passed(), "{:?}", report.checks());
        assert!(coercivity_margin(&g, 1.0, 1.0, 1.0, 1.0).unwrap() >= 0.0);
    }

    #[test]
    fn beta_constraint_enforced() {
        let g = GasModel { beta: 5.0, ..GasModel::default() };
        assert!(g.validate().is_err());
        let g = GasModel { beta: 5.0, delta: 0.0, ..GasModel::default() };
        assert!(g.validate().is_ok());
    }
}
