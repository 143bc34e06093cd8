//! Truncated cylindrical Wiener process and the diffusion coefficients it drives.
//!
//! Every Gaussian draw is a pure function of `(seed, stream, mode, counter)`: a ChaCha8
//! generator is positioned at a word offset derived from the key, so that draws can be
//! evaluated in any order or on any thread with identical results.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fields_pde::Grid;

const MODE_BITS: u32 = 20;

/// Stream reserved for the Wiener increments of `path`.
pub fn wiener_stream(path: u64) -> u64 {
    path.wrapping_mul(2)
}

/// Stream reserved for sampling the initial data of `path`.
pub fn law_stream(path: u64) -> u64 {
    path.wrapping_mul(2).wrapping_add(1)
}

/// One standard normal value determined entirely by its key.
pub fn keyed_normal(seed: u64, stream: u64, slot: u64, counter: u64) -> f64 {
    debug_assert!(slot < 1 << MODE_BITS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let block = ((counter as u128) << MODE_BITS) | slot as u128;
    rng.set_word_pos(block * 4);
    let a = rng.next_u64();
    let b = rng.next_u64();
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// The first `modes` Brownian motions `β_k` of a cylindrical Wiener process.
///
/// With `refinement = r`, the increment over step `n` is assembled from `r` finer
/// sub-increments, so drivers with step `h` and `h/r` sample the same Brownian path.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerDriver {
    seed: u64,
    path: u64,
    modes: usize,
    refinement: u64,
    step: u64,
    t: f64,
}

impl WienerDriver {
    pub fn new(seed: u64, path: u64, modes: usize) -> Self {
        Self {
            seed,
            path,
            modes,
            refinement: 1,
            step: 0,
            t: 0.0,
        }
    }

    /// Each increment is the sum of `r` draws on the finest level. A driver with step
    /// `h` and refinement `r` shares its path with one of step `h/2` and refinement `r/2`.
    pub fn with_refinement(mut self, r: u64) -> Self {
        assert!(r >= 1, "refinement must be at least 1");
        self.refinement = r;
        self
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn path(&self) -> u64 {
        self.path
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Increments for step `step` without advancing the driver.
    pub fn increments_at(&self, step: u64, h: f64) -> Result<Vec<f64>> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Argument(format!("time step must be positive, got {h}")));
        }
        let r = self.refinement;
        let scale = (h / r as f64).sqrt();
        let stream = wiener_stream(self.path);
        Ok((0..self.modes)
            .map(|k| {
                let sum: f64 = (0..r)
                    .map(|j| keyed_normal(self.seed, stream, k as u64, step * r + j))
                    .sum();
                scale * sum
            })
            .collect())
    }

    /// Draws `ΔW_k`, `k = 1..K`, for the next step and advances time by `h`.
    pub fn sample_increments(&mut self, h: f64) -> Result<Vec<f64>> {
        let dw = self.increments_at(self.step, h)?;
        self.step += 1;
        self.t += h;
        Ok(dw)
    }
}

/// `sqrt(Σ α_k² / k²)`, the norm of the larger space in which the cylindrical process lives.
pub fn u0_norm(coeff: &[f64]) -> f64 {
    coeff
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let k = (i + 1) as f64;
            a * a / (k * k)
        })
        .sum::<f64>()
        .sqrt()
}

/// Bump `(1 - r²)³` on `|r| < 1`.
fn bump(r: f64) -> f64 {
    let s = 1.0 - r * r;
    if s <= 0.0 {
        0.0
    } else {
        s * s * s
    }
}

fn smoothstep(z: f64) -> f64 {
    1.0 - crate::cutoff_chi(z)
}

/// Default diffusion family `F_k = f_k [sin(kπx/L) θ/(1+θ) + σ_u u]`, `f_k = f0/k²`, with
/// its vacuum/velocity cut-off and spatial mollification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionFamily {
    pub f0: f64,
    pub sigma_u: f64,
    pub modes: usize,
    pub eps: f64,
    pub xi: f64,
    pub hxi_margin: f64,
    pub length: f64,
}

impl DiffusionFamily {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.f0.is_finite() && self.f0 >= 0.0) || !self.sigma_u.is_finite() {
            return Err(Error::Config("noise amplitudes must be finite and f0 non-negative".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.xi > 0.0) || !(self.hxi_margin >= 0.0) {
            return Err(Error::Config("xi must be positive and hxi_margin non-negative".into()));
        }
        if grid.dx() > 0.5 * self.xi * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "grid spacing {} is too coarse for mollification width {} (need dx <= xi/2)",
                grid.dx(),
                self.xi
            )));
        }
        if 2.0 * (self.hxi_margin + 2.0 * self.xi) >= self.length {
            return Err(Error::Config(format!(
                "xi = {} and hxi_margin = {} leave no interior on a domain of length {}",
                self.xi, self.hxi_margin, self.length
            )));
        }
        Ok(())
    }

    pub fn amplitude(&self, k: usize) -> f64 {
        let k = k as f64;
        self.f0 / (k * k)
    }

    /// Global Lipschitz constant of `F_k` in each of its arguments.
    pub fn lipschitz_bound(&self, k: usize) -> f64 {
        let freq = k as f64 * std::f64::consts::PI / self.length;
        self.amplitude(k) * 1f64.max(self.sigma_u.abs()).max(freq)
    }

    /// `Σ_{k>K} f_k²`, the part of the noise intensity discarded by truncation.
    pub fn truncation_tail(&self) -> f64 {
        let zeta4 = std::f64::consts::PI.powi(4) / 90.0;
        let kept: f64 = (1..=self.modes).map(|k| self.amplitude(k).powi(2)).sum();
        (self.f0 * self.f0 * zeta4 - kept).max(0.0)
    }

    /// `F_k(x, ρ, θ, u)` for `k = 1..K`. Independent of `ρ` for the default family.
    pub fn eval_f(&self, x: f64, _rho: f64, theta: f64, u: f64) -> Vec<f64> {
        let thermal = theta / (1.0 + theta);
        (1..=self.modes)
            .map(|k| {
                let s = (k as f64 * std::f64::consts::PI * x / self.length).sin();
                self.amplitude(k) * (s * thermal + self.sigma_u * u)
            })
            .collect()
    }

    /// Cut-off factor `χ(ε/ρ - 1) χ(|u| - 1/ε)`; zero at vacuum.
    pub fn eps_factor(&self, rho: f64, u: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        crate::cutoff_chi(self.eps / rho - 1.0) * crate::cutoff_chi(u.abs() - 1.0 / self.eps)
    }

    pub fn regularize_eps(&self, values: &[f64], rho: f64, u: f64) -> Vec<f64> {
        let c = self.eps_factor(rho, u);
        values.iter().map(|v| c * v).collect()
    }

    /// Smooth interior indicator at a point at distance `d` from the boundary; it
    /// vanishes for `d ≤ hxi_margin + ξ`, so the mollified product vanishes within
    /// `hxi_margin` of the boundary.
    pub fn interior_indicator(&self, d: f64) -> f64 {
        smoothstep((d - self.hxi_margin - self.xi) / self.xi)
    }

    /// Discrete convolution with the normalized bump of radius ξ (no interior indicator).
    pub fn convolve(&self, field: &[f64], grid: &Grid) -> Result<Vec<f64>> {
        if field.len() != grid.nodes() {
            return Err(Error::Argument(format!(
                "field has {} values, grid has {} nodes",
                field.len(),
                grid.nodes()
            )));
        }
        let dx = grid.dx();
        let reach = (self.xi / dx).ceil() as usize;
        let kernel: Vec<f64> = (0..=reach).map(|j| bump(j as f64 * dx / self.xi)).collect();
        let norm = dx * (kernel[0] + 2.0 * kernel[1..].iter().sum::<f64>());
        let w = grid.weights();
        let n = grid.nodes();
        Ok((0..n)
            .map(|i| {
                let lo = i.saturating_sub(reach);
                let hi = (i + reach).min(n - 1);
                (lo..=hi)
                    .map(|j| kernel[i.abs_diff(j)] * w[j] * field[j])
                    .sum::<f64>()
                    / norm
            })
            .collect())
    }

    /// `ω_ξ * (h_ξ F)` on the grid.
    pub fn mollify_xi(&self, field: &[f64], grid: &Grid) -> Result<Vec<f64>> {
        if grid.dx() > 0.5 * self.xi * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "grid spacing {} is too coarse for mollification width {}",
                grid.dx(),
                self.xi
            )));
        }
        let masked: Vec<f64> = field
            .iter()
            .enumerate()
            .map(|(i, f)| self.interior_indicator(grid.distance_to_boundary(i)) * f)
            .collect();
        self.convolve(&masked, grid)
    }

    /// Grid fields of the fully regularized coefficients `F_{k,ε,ξ}`, one per mode.
    pub fn coefficient_fields(&self, grid: &Grid, rho: &[f64], theta: &[f64], u: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = grid.nodes();
        let mut per_mode = vec![vec![0.0; n]; self.modes];
        for i in 0..n {
            let raw = self.eval_f(grid.x(i), rho[i], theta[i], u[i]);
            let c = self.eps_factor(rho[i], u[i]);
            for (k, v) in raw.into_iter().enumerate() {
                per_mode[k][i] = c * v;
            }
        }
        per_mode.iter().map(|f| self.mollify_xi(f, grid)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn family() -> DiffusionFamily {
        DiffusionFamily {
            f0: 0.1,
            sigma_u: 0.5,
            modes: 8,
            eps: 0.01,
            xi: 0.05,
            hxi_margin: 0.02,
            length: 1.0,
        }
    }

    #[test]
    fn increments_have_unit_variance_rate() {
        let h = 0.01;
        let drv = WienerDriver::new(7, 3, 2);
        let n = 100_000u64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for step in 0..n {
            let dw = drv.increments_at(step, h).unwrap()[0];
            s1 += dw / h.sqrt();
            s2 += dw * dw;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64;
        assert!(mean.abs() <= 0.02, "mean {mean}");
        assert!((var - h).abs() <= 0.02 * h, "var {var}");
    }

    #[test]
    fn increments_are_keyed() {
        let mut a = WienerDriver::new(11, 5, 4);
        let b = WienerDriver::new(11, 5, 4);
        a.sample_increments(0.1).unwrap();
        let second = a.sample_increments(0.1).unwrap();
        assert_eq!(second, b.increments_at(1, 0.1).unwrap());
        assert_eq!(keyed_normal(1, 2, 3, 4), keyed_normal(1, 2, 3, 4));
        assert_ne!(keyed_normal(1, 2, 3, 4), keyed_normal(1, 2, 3, 5));
        assert_ne!(keyed_normal(1, 2, 3, 4), keyed_normal(1, 3, 3, 4));
        assert!((a.t() - 0.2).abs() < 1e-15);
        assert!(a.sample_increments(0.0).is_err());
    }

    #[test]
    fn refined_drivers_share_the_path() {
        let coarse = WienerDriver::new(3, 0, 3).with_refinement(4);
        let fine = WienerDriver::new(3, 0, 3).with_refinement(2);
        let h = 0.02;
        let c = coarse.increments_at(5, h).unwrap();
        let f0 = fine.increments_at(10, h / 2.0).unwrap();
        let f1 = fine.increments_at(11, h / 2.0).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(c[k], f0[k] + f1[k], epsilon = 1e-14);
        }
    }

    #[test]
    fn u0_norm_examples() {
        assert_eq!(u0_norm(&[1.0]), 1.0);
        assert_abs_diff_eq!(u0_norm(&[0.0, 0.0, 1.0]), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(u0_norm(&[0.0; 4]), 0.0);
    }

    #[test]
    fn eval_examples() {
        let f = family();
        assert_abs_diff_eq!(f.eval_f(0.5, 1.0, 1.0, 0.0)[0], 0.05, epsilon = 1e-15);
        assert!(f.eval_f(0.0, 1.0, 1.0, 0.0).iter().all(|v| *v == 0.0));
        let big = DiffusionFamily { modes: 100_000, ..f };
        let total: f64 = (1..=big.modes).map(|k| big.amplitude(k).powi(2)).sum();
        assert_abs_diff_eq!(total, 0.01 * std::f64::consts::PI.powi(4) / 90.0, epsilon = 1e-9);
        assert_abs_diff_eq!(total, 0.0108232, epsilon = 1e-7);
    }

    #[test]
    fn eps_cutoff_examples() {
        let f = family();
        let vals = f.eval_f(0.3, 1.0, 2.0, 1.0);
        assert_eq!(f.regularize_eps(&vals, 1.0, 1.0), vals);
        assert!(f.regularize_eps(&vals, 0.004, 1.0).iter().all(|v| *v == 0.0));
        let half = f.regularize_eps(&vals, 1.0, 100.5);
        for (h, v) in half.iter().zip(&vals) {
            assert_abs_diff_eq!(*h, 0.5 * v, epsilon = 1e-15);
        }
        assert_eq!(f.eps_factor(0.0, 0.0), 0.0);
    }

    #[test]
    fn mollifier_examples() {
        let f = family();
        let grid = Grid::new(200, 1.0).unwrap();
        let ones = vec![1.0; grid.nodes()];
        let out = f.convolve(&ones, &grid).unwrap();
        assert_abs_diff_eq!(out[100], 1.0, epsilon = 1e-12);
        let lin: Vec<f64> = (0..grid.nodes()).map(|i| 3.0 * grid.x(i)).collect();
        let out = f.convolve(&lin, &grid).unwrap();
        assert_abs_diff_eq!(out[100], 3.0 * grid.x(100), epsilon = 1e-12);
        let wavy: Vec<f64> = (0..grid.nodes()).map(|i| (7.0 * grid.x(i)).sin() + 2.0).collect();
        let out = f.mollify_xi(&wavy, &grid).unwrap();
        for i in 0..grid.nodes() {
            if grid.distance_to_boundary(i) < f.hxi_margin {
                assert_eq!(out[i], 0.0);
            }
        }
        let coarse = Grid::new(10, 1.0).unwrap();
        assert!(matches!(f.mollify_xi(&[1.0; 11], &coarse), Err(Error::Config(_))));
    }

    #[test]
    fn mollifier_matches_dense_quadrature() {
        // oracle: the same smoothing evaluated with a fine midpoint rule on the continuum
        let f = DiffusionFamily { xi: 0.1, ..family() };
        let grid = Grid::new(400, 1.0).unwrap();
        let g = |x: f64| (3.0 * x).cos();
        let field: Vec<f64> = (0..grid.nodes()).map(|i| g(grid.x(i))).collect();
        let out = f.convolve(&field, &grid).unwrap();
        let x0 = grid.x(200);
        let m = 20_000;
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..m {
            let y = x0 - f.xi + 2.0 * f.xi * (j as f64 + 0.5) / m as f64;
            let k = bump((y - x0) / f.xi);
            num += k * g(y);
            den += k;
        }
        assert_abs_diff_eq!(out[200], num / den, epsilon = 1e-6);
    }
}
