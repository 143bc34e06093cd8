use nsf_core::thermo::{coercivity_margin, gibbs_residual, GasModel, Regularized};
use proptest::prelude::*;

proptest! {
    #[test]
    fn gibbs_relation_holds(rho in 0.2f64..5.0, theta in 0.2f64..5.0) {
        let gas = GasModel::default();
        let (r1, r2) = gibbs_residual(&gas, rho, theta, 1e-5).unwrap();
        prop_assert!(r1.abs() <= 1e-6 && r2.abs() <= 1e-6, "{} {}", r1, r2);
        let (r1, r2) = gibbs_residual(&Regularized(&gas), rho, theta, 1e-5).unwrap();
        prop_assert!(r1.abs() <= 1e-6 && r2.abs() <= 1e-6, "{} {}", r1, r2);
    }

    #[test]
    fn kirchhoff_round_trip(theta in 0.05f64..20.0, delta in 0.0f64..0.5) {
        let gas = GasModel { delta, ..GasModel::default() };
        let back = gas.kirchhoff_inverse(gas.kirchhoff(theta).unwrap()).unwrap();
        prop_assert!((back - theta).abs() <= 1e-12 * theta.max(1.0));
    }

    #[test]
    fn regularized_quantities_dominate(rho in 0.01f64..10.0, theta in 0.01f64..10.0) {
        let gas = GasModel::default();
        prop_assert!(gas.pressure_reg(rho, theta).unwrap() >= gas.pressure(rho, theta).unwrap());
        prop_assert!(gas.internal_energy_reg(rho, theta).unwrap() > gas.internal_energy(rho, theta).unwrap());
        let t = gas.transport_coeffs(theta).unwrap();
        prop_assert!(t.mu > 0.0 && t.eta >= 0.0 && t.kappa_delta >= t.kappa && t.kappa > 0.0);
        prop_assert!(gas.heat_capacity_reg(rho, theta).unwrap() > 0.0);
    }

    #[test]
    fn artificial_pressure_is_potential_derivative(rho in 0.05f64..4.0) {
        // ρ b'(ρ) - b(ρ) must reproduce δ(ρ² + ρ^β)
        let gas = GasModel::default();
        let lhs = rho * gas.artificial_potential_d1(rho) - gas.artificial_potential(rho);
        prop_assert!((lhs - gas.artificial_pressure(rho)).abs() <= 1e-12 * gas.artificial_pressure(rho).max(1.0));
    }

    #[test]
    fn free_energy_coercivity(rho in 0.2f64..5.0, theta in 0.2f64..5.0,
                              big_theta in prop::sample::select(vec![0.5, 1.0, 2.0]),
                              rho_bar in prop::sample::select(vec![0.5, 1.0, 2.0])) {
        let gas = GasModel::default();
        prop_assert!(coercivity_margin(&gas, rho, theta, big_theta, rho_bar).unwrap() >= 0.0);
    }
}

#[test]
fn gibbs_grid_sweep() {
    let gas = GasModel::default();
    let mut worst: f64 = 0.0;
    for i in 0..21 {
        for j in 0..21 {
            let rho = 0.2 + 4.8 * i as f64 / 20.0;
            let theta = 0.2 + 4.8 * j as f64 / 20.0;
            let (r1, r2) = gibbs_residual(&gas, rho, theta, 1e-5).unwrap();
            worst = worst.max(r1.abs()).max(r2.abs());
        }
    }
    assert!(worst <= 1e-6, "worst residual {worst}");
}
