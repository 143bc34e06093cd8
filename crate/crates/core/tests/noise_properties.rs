use nsf_core::noise::{DiffusionFamily, WienerDriver};
use nsf_core::Grid;
use proptest::prelude::*;

fn family() -> DiffusionFamily {
    DiffusionFamily {
        f0: 0.7,
        sigma_u: 0.5,
        modes: 6,
        eps: 0.05,
        xi: 0.05,
        hxi_margin: 0.02,
        length: 1.0,
    }
}

proptest! {
    #[test]
    fn cutoff_never_amplifies(x in 0.0f64..1.0, rho in 0.0f64..3.0, theta in 0.01f64..5.0, u in -30.0f64..30.0) {
        let f = family();
        let raw = f.eval_f(x, rho, theta, u);
        let reg = f.regularize_eps(&raw, rho, u);
        for (a, b) in raw.iter().zip(&reg) {
            prop_assert!(b.abs() <= a.abs());
        }
    }

    #[test]
    fn coefficient_lipschitz_in_velocity(x in 0.0f64..1.0, theta in 0.01f64..5.0, u in -5.0f64..5.0, v in -5.0f64..5.0) {
        let f = family();
        let a = f.eval_f(x, 1.0, theta, u);
        let b = f.eval_f(x, 1.0, theta, v);
        for k in 0..f.modes {
            prop_assert!((a[k] - b[k]).abs() <= f.lipschitz_bound(k + 1) * (u - v).abs() * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn coefficient_lipschitz_in_temperature_and_position(x in 0.0f64..1.0, y in 0.0f64..1.0, s in 0.01f64..5.0, t in 0.01f64..5.0) {
        let f = family();
        let a = f.eval_f(x, 1.0, s, 0.2);
        let b = f.eval_f(x, 1.0, t, 0.2);
        let c = f.eval_f(y, 1.0, s, 0.2);
        for k in 0..f.modes {
            let l = f.lipschitz_bound(k + 1) * (1.0 + 1e-12);
            prop_assert!((a[k] - b[k]).abs() <= l * (s - t).abs() + 1e-15);
            prop_assert!((a[k] - c[k]).abs() <= l * (x - y).abs() + 1e-15);
        }
    }

    #[test]
    fn mollifier_is_bounded_and_linear(seed in any::<u64>(), c in -3.0f64..3.0) {
        let f = family();
        let grid = Grid::new(128, 1.0).unwrap();
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let a: Vec<f64> = (0..grid.nodes()).map(|_| next()).collect();
        let b: Vec<f64> = (0..grid.nodes()).map(|_| next()).collect();
        let ma = f.mollify_xi(&a, &grid).unwrap();
        let mb = f.mollify_xi(&b, &grid).unwrap();
        let sup_in = a.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let sup_out = ma.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(sup_out <= sup_in * (1.0 + 1e-12));
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + c * y).collect();
        let mc = f.mollify_xi(&combo, &grid).unwrap();
        for i in 0..grid.nodes() {
            prop_assert!((mc[i] - ma[i] - c * mb[i]).abs() <= 1e-12);
        }
    }
}

#[test]
fn truncation_tail_matches_zeta() {
    let f = DiffusionFamily { f0: 0.1, modes: 8, ..family() };
    let kept: f64 = (1..=8).map(|k| f.amplitude(k).powi(2)).sum();
    let total = 0.01 * std::f64::consts::PI.powi(4) / 90.0;
    assert!((f.truncation_tail() - (total - kept)).abs() < 1e-15);
    assert!(f.truncation_tail() > 0.0);
}

#[test]
fn stochastic_sums_have_zero_mean() {
    // Σ g(t_n) ΔW_n with a bounded predictable integrand g = cos(W(t_n))
    let h = 0.01;
    let steps = 50;
    let paths = 2000;
    let sums: Vec<f64> = (0..paths)
        .map(|p| {
            let mut d = WienerDriver::new(5, p, 1);
            let mut w: f64 = 0.0;
            let mut acc = 0.0;
            for _ in 0..steps {
                let dw = d.sample_increments(h).unwrap()[0];
                acc += w.cos() * dw;
                w += dw;
            }
            acc
        })
        .collect();
    let n = paths as f64;
    let mean = sums.iter().sum::<f64>() / n;
    let var = sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!(mean.abs() <= 3.0 * se, "mean {mean} se {se}");
}

#[test]
fn increments_independent_across_modes() {
    let d = WienerDriver::new(9, 1, 2);
    let n = 20_000u64;
    let mut cov = 0.0;
    for s in 0..n {
        let dw = d.increments_at(s, 1.0).unwrap();
        cov += dw[0] * dw[1];
    }
    let cov = cov / n as f64;
    assert!(cov.abs() < 4.0 / (n as f64).sqrt(), "cov {cov}");
}
