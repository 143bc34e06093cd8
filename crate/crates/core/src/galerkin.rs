//! Dirichlet sine basis, projection, density-weighted mass matrix and the velocity cut-off.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::fields_pde::Grid;

/// Span of the first `m` Dirichlet eigenfunctions `w_n = √(2/L) sin(nπx/L)`, sampled on a grid.
#[derive(Debug, Clone)]
pub struct GalerkinSpace {
    m: usize,
    grid: Grid,
    /// `basis[n][i] = w_{n+1}(x_i)`
    basis: Vec<Vec<f64>>,
    /// `deriv[n][i] = w'_{n+1}(x_i)`
    deriv: Vec<Vec<f64>>,
}

impl GalerkinSpace {
    pub fn new(m: usize, grid: Grid) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("Galerkin space needs at least one mode".into()));
        }
        if m >= grid.cells() {
            return Err(Error::Config(format!(
                "{m} modes cannot be resolved on {} cells",
                grid.cells()
            )));
        }
        let l = grid.length();
        let amp = (2.0 / l).sqrt();
        let n_nodes = grid.nodes();
        let mut basis = Vec::with_capacity(m);
        let mut deriv = Vec::with_capacity(m);
        for n in 1..=m {
            let k = n as f64 * std::f64::consts::PI / l;
            let mut b: Vec<f64> = (0..n_nodes).map(|i| amp * (k * grid.x(i)).sin()).collect();
            b[0] = 0.0;
            b[n_nodes - 1] = 0.0;
            basis.push(b);
            deriv.push((0..n_nodes).map(|i| amp * k * (k * grid.x(i)).cos()).collect());
        }
        Ok(Self { m, grid, basis, deriv })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Nodal values of `w_{n+1}`.
    pub fn basis(&self, n: usize) -> &[f64] {
        &self.basis[n]
    }

    pub fn basis_deriv(&self, n: usize) -> &[f64] {
        &self.deriv[n]
    }

    /// `λ_{n+1} = ((n+1)π/L)²`.
    pub fn eigenvalue(&self, n: usize) -> f64 {
        ((n + 1) as f64 * std::f64::consts::PI / self.grid.length()).powi(2)
    }

    /// `c_n = ⟨f, w_n⟩` by trapezoid quadrature.
    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|b| self.grid.inner(f, b)).collect()
    }

    /// Nodal values of `Σ c_n w_n`.
    pub fn eval(&self, coeff: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.nodes()];
        for (c, b) in coeff.iter().zip(&self.basis) {
            for (o, v) in out.iter_mut().zip(b) {
                *o += c * v;
            }
        }
        out
    }

    /// Field and its exact derivative `(Σ c_n w_n, Σ c_n w'_n)`.
    pub fn eval_and_grad(&self, coeff: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut grad = vec![0.0; self.grid.nodes()];
        for (c, d) in coeff.iter().zip(&self.deriv) {
            for (o, v) in grad.iter_mut().zip(d) {
                *o += c * v;
            }
        }
        (self.eval(coeff), grad)
    }

    pub fn assemble_mass(&self, rho: &[f64]) -> Result<MassOperator> {
        if let Some((i, r)) = rho.iter().enumerate().find(|(_, r)| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::State(format!("mass matrix needs positive density, got {r} at node {i}")));
        }
        let w = self.grid.weights();
        let m = self.m;
        let mut mat = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let v: f64 = (0..rho.len())
                    .map(|i| w[i] * rho[i] * self.basis[a][i] * self.basis[b][i])
                    .sum();
                mat[(a, b)] = v;
                mat[(b, a)] = v;
            }
        }
        let chol = Cholesky::new(mat.clone())
            .ok_or_else(|| Error::State("mass matrix is not positive definite".into()))?;
        Ok(MassOperator { matrix: mat, chol })
    }

    /// `χ(‖v‖ - R)`.
    pub fn cutoff_factor(&self, v: &[f64], r: f64) -> f64 {
        crate::cutoff_chi(coeff_norm(v) - r)
    }

    /// `[v]_R = χ(‖v‖ - R) v`.
    pub fn cutoff_r(&self, v: &[f64], r: f64) -> Vec<f64> {
        let c = self.cutoff_factor(v, r);
        v.iter().map(|x| c * x).collect()
    }
}

/// Euclidean norm of a coefficient vector, which is the L² norm of the represented field.
pub fn coeff_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `M_ij = ∫ ρ w_i w_j` with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct MassOperator {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl MassOperator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    pub fn solve(&self, p: &[f64]) -> Result<Vec<f64>> {
        let x = self.chol.solve(&DVector::from_column_slice(p));
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::State("mass solve produced non-finite values".into()));
        }
        Ok(x.as_slice().to_vec())
    }

    /// `vᵀ M v`.
    pub fn quadratic(&self, v: &[f64]) -> f64 {
        let mv = self.apply(v);
        mv.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Free-function form of [`MassOperator::solve`].
pub fn mass_solve(op: &MassOperator, p: &[f64]) -> Result<Vec<f64>> {
    op.solve(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn space(m: usize) -> GalerkinSpace {
        GalerkinSpace::new(m, Grid::new(128, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn basis_is_orthonormal() {
        let s = space(8);
        for a in 0..8 {
            for b in 0..8 {
                let ip = s.grid().inner(s.basis(a), s.basis(b));
                assert_abs_diff_eq!(ip, if a == b { 1.0 } else { 0.0 }, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn projection_examples() {
        let s = space(5);
        let c = s.project(s.basis(2));
        for (n, v) in c.iter().enumerate() {
            assert_abs_diff_eq!(*v, if n == 2 { 1.0 } else { 0.0 }, epsilon = 1e-10);
        }
        let ones = vec![1.0; s.grid().nodes()];
        let c = s.project(&ones);
        // trapezoid rule on a smooth periodic-like integrand: second order in dx
        assert_abs_diff_eq!(c[0], 2.0 * 2f64.sqrt() / std::f64::consts::PI, epsilon = 1e-4);
        assert_abs_diff_eq!(c[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mass_examples() {
        let s = space(4);
        let two = vec![2.0; s.grid().nodes()];
        let op = s.assemble_mass(&two).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert_abs_diff_eq!(op.matrix()[(a, b)], if a == b { 2.0 } else { 0.0 }, epsilon = 1e-10);
            }
        }
        let v = op.solve(&[1.0, -2.0, 0.5, 4.0]).unwrap();
        for (x, e) in v.iter().zip([0.5, -1.0, 0.25, 2.0]) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-12);
        }
        assert_eq!(op.solve(&[0.0; 4]).unwrap(), vec![0.0; 4]);
        let mut bad = two.clone();
        bad[7] = 0.0;
        assert!(matches!(s.assemble_mass(&bad), Err(Error::State(_))));
    }

    #[test]
    fn cutoff_examples() {
        let s = space(3);
        let v = [3.0, 4.0, 0.0];
        assert_eq!(s.cutoff_r(&v, 10.0), v.to_vec());
        assert_eq!(s.cutoff_r(&v, 4.0), vec![0.0; 3]);
        let half = s.cutoff_r(&v, 4.5);
        assert_abs_diff_eq!(half[0], 1.5, epsilon = 1e-15);
    }

    #[test]
    fn eval_examples() {
        let s = space(2);
        let (f, g) = s.eval_and_grad(&[1.0, 0.0]);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[128], 0.0);
        assert_abs_diff_eq!(f[64], 2f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(g[64], 0.0, epsilon = 1e-13);
    }
}
