use segrekin_core::collision::TransportCoefficients;
use segrekin_core::domain::{ScalarField, SpatialGrid, VectorField};
use segrekin_core::equilibrium::*;
use segrekin_core::hydro::{compute_q, vns_rhs, HydroKernel, HydroState};
use segrekin_core::kac::{KacKernel, PotentialSpec};
use segrekin_core::Error;

/// 1D tophat kernel of radius 1 whose transform at zero is `uhat0`.
fn tophat(grid: &SpatialGrid, uhat0: f64) -> KacKernel {
    KacKernel::tabulate(PotentialSpec::tophat(1.0, uhat0 / 2.0), grid).unwrap()
}

fn small_grid() -> SpatialGrid {
    SpatialGrid::line(16.0, 128).unwrap()
}

#[test]
fn critical_temperature_formula_and_stability_scan_agree() {
    let k = tophat(&small_grid(), 0.5);
    assert!((k.uhat0 - 0.5).abs() < 1e-12);
    let tc = critical_temperature(2.0, &k).unwrap();
    assert!((tc - 0.5).abs() < 1e-12);
    let numeric = critical_temperature_numeric(2.0, &k).unwrap();
    assert!((numeric - tc).abs() < 1e-6, "{numeric} vs {tc}");
}

#[test]
fn critical_temperature_is_linear_in_density_and_amplitude() {
    let k = tophat(&small_grid(), 0.5);
    let k2 = k.scaled(2.0);
    let base = critical_temperature(1.0, &k).unwrap();
    assert!((critical_temperature(2.0, &k).unwrap() - 2.0 * base).abs() < 1e-14);
    assert!((critical_temperature(1.0, &k2).unwrap() - 2.0 * base).abs() < 1e-14);
    let n1 = critical_temperature_numeric(1.0, &k).unwrap();
    let n2 = critical_temperature_numeric(2.0, &k).unwrap();
    assert!((n2 / n1 - 2.0).abs() < 1e-6);
}

#[test]
fn demixing_eigenvalue_crosses_one_at_tc() {
    let k = tophat(&small_grid(), 0.5);
    let tc = critical_temperature(2.0, &k).unwrap();
    assert!(demixing_eigenvalue(0.9 * tc, 2.0, &k).unwrap() > 1.0);
    assert!(demixing_eigenvalue(1.1 * tc, 2.0, &k).unwrap() < 1.0);
}

/// Two-cell fixed point `phi <- rho tanh(U(0) phi / (2T))` iterated from full segregation.
fn fixed_point_oracle(t: f64, rho: f64, uhat0: f64) -> f64 {
    let mut phi = rho;
    for _ in 0..1_000_000 {
        let next = rho * (uhat0 * phi / (2.0 * t)).tanh();
        if (next - phi).abs() < 1e-16 {
            return next;
        }
        phi = next;
    }
    phi
}

#[test]
fn coexistence_matches_fixed_point_oracle() {
    let k = tophat(&small_grid(), 0.5);
    let tc = critical_temperature(2.0, &k).unwrap();
    for frac in [0.3, 0.5, 0.8, 0.95] {
        let t = frac * tc;
        let phi = coexistence_order_parameter(t, 2.0, &k).unwrap();
        let oracle = fixed_point_oracle(t, 2.0, k.uhat0);
        assert!((phi - oracle).abs() < 1e-10, "T = {t}: {phi} vs {oracle}");
        assert!(coexistence_defect(t, 2.0, phi, &k).abs() < 1e-10);
    }
}

#[test]
fn coexistence_limits_and_monotonicity() {
    let k = tophat(&small_grid(), 0.5);
    let tc = critical_temperature(2.0, &k).unwrap();
    assert_eq!(coexistence_order_parameter(tc, 2.0, &k).unwrap(), 0.0);
    assert_eq!(coexistence_order_parameter(2.0 * tc, 2.0, &k).unwrap(), 0.0);
    assert!(coexistence_order_parameter(0.1 * tc, 2.0, &k).unwrap() > 0.99 * 2.0);
    assert!(coexistence_order_parameter(0.01 * tc, 2.0, &k).unwrap() > 2.0 * (1.0 - 1e-12));
    let temps: Vec<f64> = (1..200).map(|i| tc * i as f64 / 200.0).collect();
    let diagram = phase_diagram(2.0, &k, &temps).unwrap();
    for w in diagram.windows(2) {
        assert!(w[1].phi_star <= w[0].phi_star, "increasing in T: {w:?}");
        if w[0].t > 0.2 * tc {
            assert!(w[1].phi_star < w[0].phi_star, "not strictly decreasing: {w:?}");
        }
        assert!(w[0].phi_star <= 2.0);
    }
    // Continuity at T_c: phi_star ~ sqrt(3 (1 - T/T_c)) rho near the critical point.
    let near = coexistence_order_parameter(tc * (1.0 - 1e-6), 2.0, &k).unwrap();
    assert!(near < 2.0 * (3e-6f64).sqrt() * 1.01 && near > 0.0);
}

#[test]
fn stationary_residual_basics() {
    let g = small_grid();
    let k = tophat(&g, 0.5);
    let u = ScalarField::constant(&g, 0.7);
    assert_eq!(stationary_residual(&u, &ScalarField::constant(&g, 1.3), 0.4, &k).unwrap(), 0.0);
    let a = ScalarField::from_fn(&g, |x| 1.0 + 0.2 * (x[0]).sin());
    let b = ScalarField::from_fn(&g, |x| 1.0 + 0.1 * (2.0 * x[0]).cos());
    assert!(stationary_residual(&a, &b, 0.4, &k).unwrap() > 1e-3);
    let bad = ScalarField::constant(&g, 0.0);
    assert!(matches!(stationary_residual(&bad, &a, 0.4, &k), Err(Error::Positivity(_))));
}

fn interface_grid() -> SpatialGrid {
    SpatialGrid::line(64.0, 512).unwrap()
}

#[test]
fn interface_rejects_bad_inputs() {
    let g = interface_grid();
    let k = tophat(&g, 0.5);
    let tc = critical_temperature(2.0, &k).unwrap();
    let opts = InterfaceOptions::default();
    assert!(matches!(interface_profile(tc, 2.0, &k, &g, &opts), Err(Error::InvalidParameter(_))));
    let short = SpatialGrid::line(30.0, 240).unwrap();
    let ks = tophat(&short, 0.5);
    assert!(matches!(interface_profile(0.7 * tc, 2.0, &ks, &short, &opts), Err(Error::InvalidGrid(_))));
}

#[test]
fn interface_at_07_tc_converges_and_is_stationary_under_vns() {
    let g = interface_grid();
    let k = tophat(&g, 0.5);
    let tc = critical_temperature(2.0, &k).unwrap();
    let t = 0.7 * tc;
    let prof = interface_profile(t, 2.0, &k, &g, &InterfaceOptions::default()).unwrap();
    assert!(prof.converged && prof.residual < 1e-8, "residual {}", prof.residual);
    // Plateaus at the coexistence densities.
    let mid = g.len() / 2;
    let n_hi = 0.5 * (2.0 + prof.phi_star);
    assert!((prof.n1.values[mid] - n_hi).abs() < 1e-6);
    assert!((prof.n1.values[0] - (2.0 - n_hi)).abs() < 1e-6);

    let hk = HydroKernel::from_species(&k);
    let state = HydroState::new(
        prof.n1.zip_map(&prof.n2, |a, b| a + b).unwrap(),
        VectorField::zeros(&g, 1),
        ScalarField::constant(&g, t),
        prof.phi(),
    )
    .unwrap();
    let q = compute_q(&state, &hk).unwrap();
    assert!(q.q.max_abs() < 1e-6, "|Q| = {}", q.q.max_abs());
    // The two parts cancel; each is individually large.
    assert!(q.gradient_part.max_abs() > 1e-2);
    let rhs = vns_rhs(&state, &hk, None, 0.0).unwrap();
    assert!(rhs.max_abs() < 1e-5, "|rhs| = {}", rhs.max_abs());
    let coeffs = TransportCoefficients::constant(0.3, 0.2, 0.5).unwrap();
    let rhs = vns_rhs(&state, &hk, Some(&coeffs), 0.1).unwrap();
    assert!(rhs.max_abs() < 1e-5, "|rhs| = {}", rhs.max_abs());
}

#[test]
fn interface_near_tc_matches_coexistence_amplitude() {
    let g = SpatialGrid::line(160.0, 1280).unwrap();
    let k = tophat(&g, 0.5);
    let tc = critical_temperature(2.0, &k).unwrap();
    let prof = interface_profile(0.95 * tc, 2.0, &k, &g, &InterfaceOptions::default()).unwrap();
    assert!(prof.converged, "residual {}", prof.residual);
    assert!((prof.amplitude() - prof.phi_star).abs() < 1e-4);
    assert!(prof.phi_star < 0.5 * 2.0);
}

#[test]
fn interface_symmetries() {
    let g = interface_grid();
    let k = tophat(&g, 0.5);
    let t = 0.7 * critical_temperature(2.0, &k).unwrap();
    let base = interface_profile(t, 2.0, &k, &g, &InterfaceOptions::default()).unwrap();
    let (r1, r2) = base.reflected();
    let refl = stationary_residual(&r1, &r2, t, &k).unwrap();
    assert!((refl - base.residual).abs() < 1e-10);
    // Species swap composed with reflection about the kink position maps the profile to itself.
    let n = g.len();
    let quarter = n / 4;
    for i in 0..n {
        let j = (2 * quarter + n - i) % n;
        assert!((base.n1.values[i] - base.n2.values[j]).abs() < 1e-6, "cell {i}");
    }
    // Translation equivariance: a seed shifted by whole cells gives the shifted profile.
    let shift = 37;
    let opts = InterfaceOptions {
        offset: shift as f64 / n as f64,
        ..InterfaceOptions::default()
    };
    let moved = interface_profile(t, 2.0, &k, &g, &opts).unwrap();
    let expected = base.n1.shifted(0, shift as isize);
    let diff = expected
        .values
        .iter()
        .zip(&moved.n1.values)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(diff < 1e-8, "diff {diff}");
}

#[test]
fn anderson_acceleration_reaches_the_same_profile() {
    let g = interface_grid();
    let k = tophat(&g, 0.5);
    let t = 0.7 * critical_temperature(2.0, &k).unwrap();
    let base = interface_profile(t, 2.0, &k, &g, &InterfaceOptions::default()).unwrap();
    let opts = InterfaceOptions {
        anderson: Some(5),
        ..InterfaceOptions::default()
    };
    let acc = interface_profile(t, 2.0, &k, &g, &opts).unwrap();
    assert!(acc.converged);
    assert!(acc.iterations < base.iterations, "{} vs {}", acc.iterations, base.iterations);
    let diff = base
        .n1
        .values
        .iter()
        .zip(&acc.n1.values)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(diff < 1e-6, "diff {diff}");
}

#[test]
fn step_seed_converges_to_coexistence_plateaus() {
    let g = interface_grid();
    let k = tophat(&g, 0.5);
    let t = 0.7 * critical_temperature(2.0, &k).unwrap();
    let opts = InterfaceOptions {
        seed: InterfaceSeed::Step,
        ..InterfaceOptions::default()
    };
    let p = interface_profile(t, 2.0, &k, &g, &opts).unwrap();
    assert!(p.converged && p.residual < 1e-8);
    let n_hi = 0.5 * (2.0 + p.phi_star);
    assert!((p.n1.values[g.len() / 2] - n_hi).abs() < 1e-6);
    assert!((p.n2.values[0] - n_hi).abs() < 1e-6);
}

#[test]
fn iteration_cap_returns_flagged_best_iterate() {
    let g = interface_grid();
    let k = tophat(&g, 0.5);
    let t = 0.7 * critical_temperature(2.0, &k).unwrap();
    let opts = InterfaceOptions {
        max_iterations: 3,
        ..InterfaceOptions::default()
    };
    let p = interface_profile(t, 2.0, &k, &g, &opts).unwrap();
    assert!(!p.converged);
    assert!(p.residual > 1e-8 && p.residual.is_finite());
}
