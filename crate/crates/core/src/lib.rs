//! Constructive approximation scheme for the stochastically forced, heat-conducting
//! compressible Navier–Stokes–Fourier system on an interval.
//!
//! The velocity lives in a Galerkin space of Dirichlet–Laplacian eigenfunctions and is
//! advanced by an Euler–Maruyama step of the projected momentum equation; density and
//! temperature are nodal fields advanced pathwise by positivity-preserving parabolic
//! solvers with homogeneous Neumann conditions. Every balance law the scheme is meant to
//! satisfy is available as a discrete residual in [`diagnostics`].

pub mod diagnostics;
pub mod error;
pub mod fields_pde;
pub mod galerkin;
pub mod noise;
pub mod stepper;
pub mod thermo;

pub use error::{Error, Result};
pub use fields_pde::Grid;
pub use galerkin::{GalerkinSpace, MassOperator};
pub use noise::{DiffusionFamily, WienerDriver};
pub use stepper::{SimParams, SimState};
pub use thermo::GasModel;

/// Quintic smoothstep cut-off: 1 on `z <= 0`, 0 on `z >= 1`, C² and non-increasing between.
pub fn cutoff_chi(z: f64) -> f64 {
    if z <= 0.0 {
        1.0
    } else if z >= 1.0 {
        0.0
    } else {
        1.0 - z * z * z * (10.0 - 15.0 * z + 6.0 * z * z)
    }
}

/// Solves a tridiagonal system in place (Thomas algorithm).
///
/// `lower[i]` couples row `i` to `i-1` (ignored for `i = 0`), `upper[i]` couples row `i`
/// to `i+1` (ignored for the last row). Returns `None` on a zero pivot.
pub(crate) fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 {
        return None;
    }
    c[0] = upper[0] / pivot;
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * c[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return None;
        }
        c[i] = if i + 1 < n { upper[i] / pivot } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_plateaus_and_midpoint() {
        assert_eq!(cutoff_chi(-2.0), 1.0);
        assert_eq!(cutoff_chi(0.0), 1.0);
        assert!((cutoff_chi(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(cutoff_chi(1.7), 0.0);
    }

    #[test]
    fn chi_is_monotone() {
        let mut prev = 1.0;
        for i in 0..=1000 {
            let v = cutoff_chi(i as f64 / 1000.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let lower = [0.0, -1.0, -1.0, -1.0];
        let diag = [4.0, 4.0, 4.0, 4.0];
        let upper = [-1.0, -1.0, -1.0, 0.0];
        let x = [1.0, 2.0, -1.0, 0.5];
        let mut rhs = [0.0; 4];
        for i in 0..4 {
            rhs[i] = diag[i] * x[i];
            if i > 0 {
                rhs[i] += lower[i] * x[i - 1];
            }
            if i < 3 {
                rhs[i] += upper[i] * x[i + 1];
            }
        }
        let sol = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for i in 0..4 {
            assert!((sol[i] - x[i]).abs() < 1e-14);
        }
    }
}
