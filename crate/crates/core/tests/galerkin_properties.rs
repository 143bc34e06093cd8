use nsf_core::galerkin::{mass_solve, GalerkinSpace};
use nsf_core::Grid;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn space(m: usize) -> GalerkinSpace {
    GalerkinSpace::new(m, Grid::new(96, 1.0).unwrap()).unwrap()
}

/// Smooth positive field with values in [lo, hi].
fn random_density(rng: &mut ChaCha8Rng, grid: &Grid, lo: f64, hi: f64) -> Vec<f64> {
    let a: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let raw: Vec<f64> = grid
        .positions()
        .iter()
        .map(|x| {
            a.iter()
                .enumerate()
                .map(|(j, c)| c * ((j + 1) as f64 * 2.7 * x + j as f64).sin())
                .sum::<f64>()
        })
        .collect();
    let (mn, mx) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    raw.iter().map(|v| lo + (hi - lo) * (v - mn) / (mx - mn)).collect()
}

#[test]
fn spectral_lower_bound() {
    let s = space(6);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let rho = random_density(&mut rng, s.grid(), 0.5, 2.0);
        let min = rho.iter().copied().fold(f64::INFINITY, f64::min);
        let op = s.assemble_mass(&rho).unwrap();
        assert!(op.min_eigenvalue() >= min - 1e-10);
    }
}

#[test]
fn round_trip_recovers_velocity() {
    let s = space(6);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let rho = random_density(&mut rng, s.grid(), 0.5, 2.0);
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let field = s.eval(&v);
        let rho_v: Vec<f64> = rho.iter().zip(&field).map(|(a, b)| a * b).collect();
        let back = mass_solve(&s.assemble_mass(&rho).unwrap(), &s.project(&rho_v)).unwrap();
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() <= 1e-8);
        }
    }
}

#[test]
fn mass_operator_lipschitz_in_density() {
    let s = space(5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // |M¹-M²|_F ≤ Σ_i w_i |Δρ_i| ‖φ(x_i)‖² ≤ max_i ‖φ(x_i)‖² ‖Δρ‖_{L¹}
    let bound: f64 = (0..s.grid().nodes())
        .map(|i| (0..5).map(|n| s.basis(n)[i].powi(2)).sum::<f64>())
        .fold(0.0, f64::max);
    let mut measured: f64 = 0.0;
    for _ in 0..50 {
        let r1 = random_density(&mut rng, s.grid(), 0.5, 2.0);
        let r2 = random_density(&mut rng, s.grid(), 0.5, 2.0);
        let d = s.assemble_mass(&r1).unwrap().matrix() - s.assemble_mass(&r2).unwrap().matrix();
        let l1 = s.grid().integrate(&r1.iter().zip(&r2).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>());
        let ratio = d.norm() / l1;
        measured = measured.max(ratio);
        assert!(ratio <= bound * (1.0 + 1e-12));
    }
    assert!(measured > 0.0);
}

#[test]
fn gradient_matches_differences() {
    let s = space(4);
    let coeff = [0.3, -1.0, 0.5, 0.25];
    let (f, g) = s.eval_and_grad(&coeff);
    let dx = s.grid().dx();
    let mut err: f64 = 0.0;
    for i in 1..s.grid().nodes() - 1 {
        err = err.max(((f[i + 1] - f[i - 1]) / (2.0 * dx) - g[i]).abs());
    }
    // central differences: error ≈ dx²/6 · max|f'''|
    let third: f64 = coeff
        .iter()
        .enumerate()
        .map(|(n, c)| c.abs() * 2f64.sqrt() * ((n + 1) as f64 * std::f64::consts::PI).powi(3))
        .sum();
    assert!(err <= dx * dx / 6.0 * third * 1.01, "{err}");
}

proptest! {
    #[test]
    fn mass_is_homogeneous(c in 0.1f64..10.0, seed in any::<u64>()) {
        let s = space(4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density(&mut rng, s.grid(), 0.3, 3.0);
        let scaled: Vec<f64> = rho.iter().map(|r| c * r).collect();
        let a = s.assemble_mass(&rho).unwrap();
        let b = s.assemble_mass(&scaled).unwrap();
        prop_assert!((b.matrix() - a.matrix() * c).norm() <= 1e-12 * c * a.matrix().norm());
    }

    #[test]
    fn projection_is_orthogonal_and_nonexpansive(seed in any::<u64>()) {
        let s = space(5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..s.grid().nodes()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c = s.project(&f);
        let pf = s.eval(&c);
        let rest: Vec<f64> = f.iter().zip(&pf).map(|(a, b)| a - b).collect();
        for n in 0..5 {
            prop_assert!(s.grid().inner(&rest, s.basis(n)).abs() <= 1e-10);
        }
        prop_assert!(s.grid().inner(&pf, &pf) <= s.grid().inner(&f, &f) + 1e-12);
    }

    #[test]
    fn projection_is_idempotent(c in prop::collection::vec(-3.0f64..3.0, 5)) {
        let s = space(5);
        let back = s.project(&s.eval(&c));
        for (a, b) in back.iter().zip(&c) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}
