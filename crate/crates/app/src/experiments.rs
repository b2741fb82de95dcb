//! Experiment dispatch. Each experiment reads its keys from a
//! [`RunConfig`], calls the owning core module and writes its outputs.
//!
//! CSV column orders:
//!
//! | file                | columns |
//! |---------------------|---------|
//! | `phase_diagram.csv` | `T, phi_star, T_over_Tc` |
//! | `interface.csv`     | `x, n1, n2, phi` |
//! | `diagnostics.csv`   | `step, time, mass_r, mass_b, momentum_x, momentum_y, momentum_z, energy_kinetic, energy_interaction, energy_total, entropy, min_f, phi_variance` |
//! | `hydro.csv`         | `step, time, mass, phi_total, momentum_x, momentum_y, energy, phi_rms, rho_min, t_min` |
//! | `ins.csv`           | `step, time, kinetic_energy, phi_rms, theta_rms, divergence_max, mode_amplitude, constraint_defect` |
//! | `transport.csv`     | `model, nu, kappa, d, nu_analytic, kappa_analytic, d_analytic` |
//! | `validate.csv`      | `criterion, name, value, tolerance, passed, detail` |
//!
//! Snapshots `<field>_<step>.bin` hold 1D fields as `[nx]` and 2D fields
//! as `[ny, nx]`.

use std::f64::consts::PI;
use std::path::Path;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use segrekin_core::collision::{
    transport_coefficients, CollisionModel, CrossSection, MaxwellianParams, SphericalQuadrature, TransportCoefficients,
    TransportMethod,
};
use segrekin_core::domain::{ScalarField, SpatialGrid, VectorField, VelocityGrid};
use segrekin_core::equilibrium::{
    critical_temperature, critical_temperature_numeric, interface_profile, phase_diagram, InterfaceOptions, InterfaceSeed,
};
use segrekin_core::hydro::{
    constraint_defect, dispersion_growth_rate, divergence_max, ins_admissible_dt, ins_step, vns_admissible_dt, vns_step,
    HydroKernel, HydroState, InsParams, InsState, InsVariant, Limiter, RungeKutta, VnsOptions, VnsScheme,
};
use segrekin_core::kac::{KacKernel, PotentialSpec};
use segrekin_core::kinetic::{
    admissible_dt, hydro_moments, run, AdvectionScheme, KineticState, RunOptions, Scaling,
};

use crate::acceptance;
use crate::config::{Experiment, RunConfig};
use crate::error::AppError;
use crate::output::{Cell, OutputDir, RunManifest, Table};

/// Result of one experiment before the manifest is assembled.
struct Outcome {
    summary: serde_json::Value,
    failure: Option<AppError>,
}

impl Outcome {
    fn ok(summary: serde_json::Value) -> Self {
        Outcome { summary, failure: None }
    }
}

/// Runs the configured experiment into `out`, writes `manifest.json` and
/// returns the manifest. A failed `validate` run still writes its outputs
/// and manifest before returning the failure.
pub fn run_experiment(cfg: &RunConfig, out: &Path) -> Result<RunManifest, AppError> {
    let started = chrono::Utc::now().to_rfc3339();
    let mut dir = OutputDir::create(out)?;
    info!("running {} into {}", cfg.experiment, out.display());
    let outcome = match cfg.experiment {
        Experiment::PhaseDiagram => phase_diagram_run(cfg, &mut dir)?,
        Experiment::Interface => interface_run(cfg, &mut dir)?,
        Experiment::KineticRun => kinetic_run(cfg, &mut dir)?,
        Experiment::HydroRun => hydro_run(cfg, &mut dir)?,
        Experiment::InsRun => ins_run(cfg, &mut dir)?,
        Experiment::Transport => transport_run(cfg, &mut dir)?,
        Experiment::Validate => validate_run(cfg, &mut dir)?,
    };
    let config: serde_json::Map<String, serde_json::Value> = cfg
        .values()
        .iter()
        .map(|(k, v)| (k.to_string(), serde_json::to_value(v).expect("config values serialize")))
        .collect();
    let manifest = RunManifest {
        experiment: cfg.experiment.to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.u64("solver.seed"),
        threads: rayon::current_num_threads(),
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        config_echo: cfg.echo(),
        config: serde_json::Value::Object(config),
        summary: outcome.summary,
        files: dir.files().to_vec(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(out.join("manifest.json"), text)?;
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

fn spatial_grid(cfg: &RunConfig) -> Result<SpatialGrid, AppError> {
    let (ex, nx) = (cfg.f64("grid.extent"), cfg.usize("grid.cells"));
    let grid = match cfg.opt_f64("grid.extent_y") {
        Some(ey) => {
            let ny = cfg.opt_usize("grid.cells_y").unwrap_or(nx);
            SpatialGrid::new(&[ex, ey], &[nx, ny])?
        }
        None => SpatialGrid::line(ex, nx)?,
    };
    Ok(grid)
}

fn line_grid(cfg: &RunConfig) -> Result<SpatialGrid, AppError> {
    Ok(SpatialGrid::line(cfg.f64("grid.extent"), cfg.usize("grid.cells"))?)
}

fn potential(cfg: &RunConfig) -> Option<PotentialSpec> {
    let (r, a) = (cfg.f64("potential.radius"), cfg.f64("potential.amplitude"));
    match cfg.str("potential.shape") {
        "tophat" => Some(PotentialSpec::tophat(r, a)),
        "smooth_bump" => Some(PotentialSpec::smooth_bump(r, a)),
        "gaussian" => Some(PotentialSpec::gaussian(r, a)),
        _ => None,
    }
}

fn optional_kernel(cfg: &RunConfig, grid: &SpatialGrid) -> Result<Option<KacKernel>, AppError> {
    potential(cfg).map(|p| KacKernel::tabulate(p, grid)).transpose().map_err(AppError::from)
}

fn kernel(cfg: &RunConfig, grid: &SpatialGrid) -> Result<KacKernel, AppError> {
    optional_kernel(cfg, grid)?.ok_or_else(|| {
        AppError::Usage(format!("experiment '{}' needs an interaction potential; 'none' is only valid for kinetic-run", cfg.experiment))
    })
}

fn field_dims(grid: &SpatialGrid) -> Vec<usize> {
    if grid.dim() == 1 {
        vec![grid.cells(0)]
    } else {
        vec![grid.cells(1), grid.cells(0)]
    }
}

fn wavevector(cfg: &RunConfig, grid: &SpatialGrid) -> [f64; 2] {
    let kx = 2.0 * PI * cfg.usize("physics.mode") as f64 / grid.extent(0);
    let ky = if grid.dim() > 1 {
        2.0 * PI * cfg.usize("physics.mode_y") as f64 / grid.extent(1)
    } else {
        0.0
    };
    [kx, ky]
}

/// `phi0 cos(k.x)` plus seeded uniform noise of amplitude `physics.noise`.
fn initial_phi(cfg: &RunConfig, grid: &SpatialGrid) -> Result<ScalarField, AppError> {
    let k = wavevector(cfg, grid);
    let (phi0, noise) = (cfg.f64("physics.phi0"), cfg.f64("physics.noise"));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.u64("solver.seed"));
    let values = (0..grid.len())
        .map(|i| {
            let x = grid.position(i);
            let r: f64 = if noise > 0.0 { rng.gen_range(-1.0..1.0) } else { 0.0 };
            phi0 * (k[0] * x[0] + k[1] * x[1]).cos() + noise * r
        })
        .collect();
    Ok(ScalarField::from_values(grid, values)?)
}

/// `u0 sin(k.x)` along `physics.u_dir`, with `ncomp` components.
fn initial_velocity(cfg: &RunConfig, grid: &SpatialGrid, ncomp: usize) -> Result<VectorField, AppError> {
    let axis = if cfg.str("physics.u_dir") == "y" { 1 } else { 0 };
    if axis >= ncomp {
        return Err(AppError::Usage(format!("physics.u_dir = y needs at least two velocity components, have {ncomp}")));
    }
    let k = wavevector(cfg, grid);
    let u0 = cfg.f64("physics.u0");
    let mut u = VectorField::zeros(grid, ncomp);
    u.components[axis] = ScalarField::from_fn(grid, |x| u0 * (k[0] * x[0] + k[1] * x[1]).sin()).values;
    Ok(u)
}

fn check_phi_bound(phi: &ScalarField, rho: f64) -> Result<(), AppError> {
    if phi.max_abs() > rho {
        return Err(AppError::Usage(format!(
            "initial |phi| reaches {} which exceeds rho = {rho}; lower physics.phi0 or physics.noise",
            phi.max_abs()
        )));
    }
    Ok(())
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|x| x * x).sum::<f64>() / values.len() as f64).sqrt()
}

fn wants_snapshot(cfg: &RunConfig, step: usize) -> bool {
    let stride = cfg.usize("solver.snapshot_stride");
    cfg.bool("output.snapshots") && stride > 0 && step.is_multiple_of(stride)
}

fn phase_diagram_run(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Outcome, AppError> {
    let grid = line_grid(cfg)?;
    let k = kernel(cfg, &grid)?;
    let rho = cfg.f64("physics.rho");
    let tc = critical_temperature(rho, &k)?;
    let tc_numeric = critical_temperature_numeric(rho, &k)?;
    let n = cfg.usize("phase.points");
    let (lo, hi) = (cfg.f64("phase.t_min"), cfg.f64("phase.t_max"));
    let temps: Vec<f64> = (0..n)
        .map(|i| {
            let s = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            tc * (lo + s * (hi - lo))
        })
        .collect();
    let diagram = phase_diagram(rho, &k, &temps)?;
    let mut table = Table::new(&["T", "phi_star", "T_over_Tc"]);
    for p in &diagram {
        table.push_floats(&[p.t, p.phi_star, p.t / tc]);
    }
    dir.write_csv("phase_diagram.csv", &table)?;
    Ok(Outcome::ok(json!({
        "uhat0": k.uhat0,
        "critical_temperature": tc,
        "critical_temperature_numeric": tc_numeric,
        "points": diagram.len(),
    })))
}

fn interface_run(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Outcome, AppError> {
    let grid = line_grid(cfg)?;
    let k = kernel(cfg, &grid)?;
    let (t, rho) = (cfg.f64("physics.T"), cfg.f64("physics.rho"));
    let anderson = cfg.usize("interface.anderson");
    let opts = InterfaceOptions {
        seed: if cfg.str("interface.seed") == "step" {
            InterfaceSeed::Step
        } else {
            InterfaceSeed::Tanh
        },
        anderson: (anderson > 0).then_some(anderson),
        tolerance: cfg.f64("interface.tolerance"),
        max_iterations: cfg.usize("interface.max_iterations"),
        ..InterfaceOptions::default()
    };
    let prof = interface_profile(t, rho, &k, &grid, &opts)?;
    if !prof.converged {
        warn!("interface iteration stopped at the cap with residual {:e}", prof.residual);
    }
    let phi = prof.phi();
    let mut table = Table::new(&["x", "n1", "n2", "phi"]);
    for i in 0..grid.len() {
        table.push_floats(&[grid.position(i)[0], prof.n1.values[i], prof.n2.values[i], phi.values[i]]);
    }
    dir.write_csv("interface.csv", &table)?;
    if cfg.bool("output.snapshots") {
        dir.write_snapshot("phi_final.bin", &field_dims(&grid), &phi.values)?;
    }
    Ok(Outcome::ok(json!({
        "critical_temperature": critical_temperature(rho, &k)?,
        "phi_star": prof.phi_star,
        "amplitude": prof.amplitude(),
        "residual": prof.residual,
        "iterations": prof.iterations,
        "converged": prof.converged,
    })))
}

fn kinetic_run(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Outcome, AppError> {
    let grid = spatial_grid(cfg)?;
    let vg = VelocityGrid::new(cfg.usize("grid.dim_v"), cfg.f64("grid.v_max"), cfg.usize("grid.nodes"))?;
    let k = optional_kernel(cfg, &grid)?;
    let rho0 = cfg.f64("physics.rho");
    let rho = ScalarField::constant(&grid, rho0);
    let phi = initial_phi(cfg, &grid)?;
    check_phi_bound(&phi, rho0)?;
    let u = initial_velocity(cfg, &grid, vg.dim())?;
    let t = ScalarField::constant(&grid, cfg.f64("physics.T"));
    let scaling = if cfg.str("physics.scaling") == "parabolic" {
        Scaling::Parabolic
    } else {
        Scaling::Euler
    };
    let state = KineticState::from_fields(&vg, &rho, &phi, &u, &t, cfg.f64("physics.eps"), scaling)?;
    let dt = match cfg.opt_f64("solver.dt") {
        Some(dt) => dt,
        None => cfg.f64("solver.cfl") * admissible_dt(&state, k.as_ref())?,
    };
    let scheme = match cfg.str("solver.scheme") {
        "upwind" => AdvectionScheme::Upwind,
        "spectral" => AdvectionScheme::Spectral,
        _ => AdvectionScheme::Pfc,
    };
    let opts = RunOptions {
        stride: cfg.usize("solver.stride"),
        scheme,
    };
    let dims = field_dims(&grid);
    let mut table = Table::new(&[
        "step",
        "time",
        "mass_r",
        "mass_b",
        "momentum_x",
        "momentum_y",
        "momentum_z",
        "energy_kinetic",
        "energy_interaction",
        "energy_total",
        "entropy",
        "min_f",
        "phi_variance",
    ]);
    let mut snapshots: Vec<(String, Vec<f64>)> = Vec::new();
    let output = run(&state, k.as_ref(), cfg.f64("physics.nu_collision"), cfg.f64("solver.t_end"), dt, &opts, &mut |obs| {
        let d = obs.diagnostics;
        let (rho, phi) = densities(obs.state);
        table.push(&[
            Cell::I(obs.step as u64),
            Cell::F(obs.time),
            Cell::F(d.mass_r),
            Cell::F(d.mass_b),
            Cell::F(d.momentum[0]),
            Cell::F(d.momentum[1]),
            Cell::F(d.momentum[2]),
            Cell::F(d.energy_kinetic),
            Cell::F(d.energy_interaction),
            Cell::F(d.energy_total),
            Cell::F(d.entropy),
            Cell::F(d.min_f),
            Cell::F(variance(&phi)),
        ]);
        if wants_snapshot(cfg, obs.step) {
            snapshots.push((format!("rho_{:06}.bin", obs.step), rho));
            snapshots.push((format!("phi_{:06}.bin", obs.step), phi));
        }
    })?;
    dir.write_csv("diagnostics.csv", &table)?;
    for (name, data) in &snapshots {
        dir.write_snapshot(name, &dims, data)?;
    }
    let fin = &output.final_state;
    if cfg.bool("output.snapshots") {
        let (rho, phi) = densities(fin);
        dir.write_snapshot("rho_final.bin", &dims, &rho)?;
        dir.write_snapshot("phi_final.bin", &dims, &phi)?;
        if let Ok(h) = hydro_moments(fin) {
            dir.write_snapshot("temperature_final.bin", &dims, &h.t.values)?;
        }
    }
    let first = &output.trajectory[0].diagnostics;
    let drift = |f: &dyn Fn(&segrekin_core::kinetic::Diagnostics) -> f64| -> f64 {
        let f0 = f(first);
        output
            .trajectory
            .iter()
            .map(|r| ((f(&r.diagnostics) - f0) / f0.abs().max(f64::MIN_POSITIVE)).abs())
            .fold(0.0, f64::max)
    };
    Ok(Outcome::ok(json!({
        "dt": dt,
        "steps": output.trajectory.last().map(|r| r.step).unwrap_or(0),
        "final_time": fin.time,
        "max_relative_mass_r_drift": drift(&|d| d.mass_r),
        "max_relative_mass_b_drift": drift(&|d| d.mass_b),
        "max_relative_energy_drift": drift(&|d| d.energy_total),
        "forces": k.is_some(),
    })))
}

/// Cell densities `rho = n_r + n_b` and `phi = n_r - n_b`.
fn densities(state: &KineticState) -> (Vec<f64>, Vec<f64>) {
    let (nr, nb) = (state.dists.density_r(), state.dists.density_b());
    let rho = nr.values.iter().zip(&nb.values).map(|(a, b)| a + b).collect();
    let phi = nr.values.iter().zip(&nb.values).map(|(a, b)| a - b).collect();
    (rho, phi)
}

fn coefficient(cfg: &RunConfig, key: &str, analytic: f64) -> f64 {
    cfg.opt_f64(key).unwrap_or(analytic)
}

fn hydro_run(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Outcome, AppError> {
    let grid = spatial_grid(cfg)?;
    let k = kernel(cfg, &grid)?;
    let hk = HydroKernel::from_species(&k);
    let dof = cfg.opt_usize("physics.dof").unwrap_or(grid.dim());
    let (rho0, t0) = (cfg.f64("physics.rho"), cfg.f64("physics.T"));
    let phi = initial_phi(cfg, &grid)?;
    check_phi_bound(&phi, rho0)?;
    let u = initial_velocity(cfg, &grid, dof)?;
    let mut state = HydroState::new(ScalarField::constant(&grid, rho0), u, ScalarField::constant(&grid, t0), phi)?;
    let eps = cfg.f64("physics.eps");
    let coeffs = if eps > 0.0 {
        let p = MaxwellianParams::new(rho0, [0.0; 3], t0)?;
        let a = TransportCoefficients::bgk_analytic(&p, cfg.f64("physics.nu_collision"), dof)?;
        Some(TransportCoefficients::constant(
            coefficient(cfg, "coefficients.nu", a.nu_visc),
            coefficient(cfg, "coefficients.kappa", a.kappa),
            coefficient(cfg, "coefficients.d", a.d_diff),
        )?)
    } else {
        None
    };
    let scheme = if cfg.str("solver.hydro_scheme") == "spectral_rk4" {
        VnsScheme::SpectralRk4
    } else {
        let limiter = match cfg.str("solver.limiter") {
            "minmod" => Limiter::Minmod,
            "van_leer" => Limiter::VanLeer,
            _ => Limiter::MonotonizedCentral,
        };
        VnsScheme::FiniteVolume {
            limiter,
            integrator: RungeKutta::SspRk3,
        }
    };
    let opts = VnsOptions {
        scheme,
        cfl: cfg.f64("solver.cfl"),
        ..VnsOptions::default()
    };
    let t_end = cfg.f64("solver.t_end");
    let stride = cfg.usize("solver.stride");
    let dims = field_dims(&grid);
    let mut table = Table::new(&[
        "step",
        "time",
        "mass",
        "phi_total",
        "momentum_x",
        "momentum_y",
        "energy",
        "phi_rms",
        "rho_min",
        "t_min",
    ]);
    let record = |table: &mut Table, step: usize, time: f64, s: &HydroState| {
        let tot = s.totals();
        table.push(&[
            Cell::I(step as u64),
            Cell::F(time),
            Cell::F(tot.mass),
            Cell::F(tot.phi),
            Cell::F(tot.momentum[0]),
            Cell::F(tot.momentum.get(1).copied().unwrap_or(0.0)),
            Cell::F(tot.energy),
            Cell::F(rms(&s.phi.values)),
            Cell::F(s.rho.min()),
            Cell::F(s.t.min()),
        ]);
    };
    let write_fields = |dir: &mut OutputDir, tag: &str, s: &HydroState| -> std::io::Result<()> {
        dir.write_snapshot(&format!("rho_{tag}.bin"), &dims, &s.rho.values)?;
        dir.write_snapshot(&format!("phi_{tag}.bin"), &dims, &s.phi.values)?;
        dir.write_snapshot(&format!("temperature_{tag}.bin"), &dims, &s.t.values)?;
        dir.write_snapshot(&format!("u_x_{tag}.bin"), &dims, &s.u.components[0])
    };
    record(&mut table, 0, 0.0, &state);
    if wants_snapshot(cfg, 0) {
        write_fields(dir, "000000", &state)?;
    }
    let fixed = cfg.opt_f64("solver.dt");
    let steps_fixed = fixed.map(|dt| ((t_end / dt).round() as usize).max(1));
    let (mut time, mut step) = (0.0, 0usize);
    loop {
        let done = match steps_fixed {
            Some(n) => step >= n,
            None => time >= t_end * (1.0 - 1e-14),
        };
        if done {
            break;
        }
        let dt = match steps_fixed {
            Some(n) => t_end / n as f64,
            None => vns_admissible_dt(&state, coeffs.as_ref(), eps, &opts)?.min(t_end - time),
        };
        state = vns_step(&state, &hk, coeffs.as_ref(), eps, dt, &opts)?;
        step += 1;
        time = match steps_fixed {
            Some(n) => t_end * step as f64 / n as f64,
            None => time + dt,
        };
        let last = match steps_fixed {
            Some(n) => step == n,
            None => time >= t_end * (1.0 - 1e-14),
        };
        if step % stride == 0 || last {
            record(&mut table, step, time, &state);
        }
        if wants_snapshot(cfg, step) {
            write_fields(dir, &format!("{step:06}"), &state)?;
        }
    }
    dir.write_csv("hydro.csv", &table)?;
    if cfg.bool("output.snapshots") {
        write_fields(dir, "final", &state)?;
    }
    Ok(Outcome::ok(json!({
        "system": if eps > 0.0 { "vlasov-navier-stokes" } else { "vlasov-euler" },
        "eps": eps,
        "dof": dof,
        "steps": step,
        "final_time": time,
        "coefficients": coeffs.map(|c| json!({"nu": c.nu_visc, "kappa": c.kappa, "d": c.d_diff})),
    })))
}

fn ins_run(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Outcome, AppError> {
    let grid = spatial_grid(cfg)?;
    let k = kernel(cfg, &grid)?;
    let hk = HydroKernel::from_species(&k);
    let (rho0, t0, nu_c) = (cfg.f64("physics.rho"), cfg.f64("physics.T"), cfg.f64("physics.nu_collision"));
    let a = TransportCoefficients::bgk_analytic(&MaxwellianParams::new(rho0, [0.0; 3], t0)?, nu_c, 3)?;
    let params = InsParams {
        nu: coefficient(cfg, "coefficients.nu", a.nu_visc),
        kappa: coefficient(cfg, "coefficients.kappa", a.kappa),
        d_diff: coefficient(cfg, "coefficients.d", a.d_diff),
        variant: if cfg.str("ins.variant") == "full" {
            InsVariant::Full
        } else {
            InsVariant::Reduced
        },
        dealias: cfg.bool("ins.dealias"),
        ..InsParams::reduced(rho0, t0, 0.0, 0.0)
    };
    params.validate()?;
    let phi = initial_phi(cfg, &grid)?;
    let mut u = VectorField::zeros(&grid, grid.dim());
    let u0 = cfg.f64("physics.u0");
    if u0 != 0.0 {
        if grid.dim() < 2 {
            return Err(AppError::Usage("physics.u0 needs a 2D grid for an incompressible shear flow".into()));
        }
        let ky = 2.0 * PI / grid.extent(1);
        u.components[0] = ScalarField::from_fn(&grid, |x| u0 * (ky * x[1]).sin()).values;
    }
    let mut state = InsState::new(u, phi.clone(), ScalarField::zeros(&grid), ScalarField::zeros(&grid))?;
    let t_end = cfg.f64("solver.t_end");
    let dt = match cfg.opt_f64("solver.dt") {
        Some(dt) => dt,
        None => (2.0 * cfg.f64("solver.cfl") * ins_admissible_dt(&state)).min(t_end / 100.0),
    };
    let steps = ((t_end / dt).round() as usize).max(1);
    let dt = t_end / steps as f64;
    let mode = [cfg.usize("physics.mode") as i64, if grid.dim() > 1 { cfg.usize("physics.mode_y") as i64 } else { 0 }];
    let kv = wavevector(cfg, &grid);
    let basis = ScalarField::from_fn(&grid, |x| (kv[0] * x[0] + kv[1] * x[1]).cos());
    let norm = basis.values.iter().map(|b| b * b).sum::<f64>();
    let amplitude = |s: &InsState| s.phi.values.iter().zip(&basis.values).map(|(a, b)| a * b).sum::<f64>() / norm;
    let stride = cfg.usize("solver.stride");
    let dims = field_dims(&grid);
    let mut table = Table::new(&[
        "step",
        "time",
        "kinetic_energy",
        "phi_rms",
        "theta_rms",
        "divergence_max",
        "mode_amplitude",
        "constraint_defect",
    ]);
    let sp = hk.spectral().clone();
    let record = |table: &mut Table, step: usize, s: &InsState| -> Result<(), AppError> {
        table.push(&[
            Cell::I(step as u64),
            Cell::F(s.time),
            Cell::F(s.kinetic_energy()),
            Cell::F(rms(&s.phi.values)),
            Cell::F(rms(&s.theta.values)),
            Cell::F(divergence_max(&sp, &s.u)),
            Cell::F(amplitude(s)),
            Cell::F(constraint_defect(s, &hk)?),
        ]);
        Ok(())
    };
    record(&mut table, 0, &state)?;
    for step in 1..=steps {
        state = ins_step(&state, &hk, &params, dt)?;
        state.time = dt * step as f64;
        if step % stride == 0 || step == steps {
            record(&mut table, step, &state)?;
        }
        if wants_snapshot(cfg, step) {
            dir.write_snapshot(&format!("phi_{step:06}.bin"), &dims, &state.phi.values)?;
        }
    }
    dir.write_csv("ins.csv", &table)?;
    if cfg.bool("output.snapshots") {
        dir.write_snapshot("phi_final.bin", &dims, &state.phi.values)?;
        dir.write_snapshot("theta_final.bin", &dims, &state.theta.values)?;
    }
    Ok(Outcome::ok(json!({
        "dt": dt,
        "steps": steps,
        "mode": mode,
        "predicted_growth_rate": dispersion_growth_rate(mode, rho0, t0, params.d_diff, &hk),
        "nu": params.nu,
        "kappa": params.kappa,
        "d": params.d_diff,
    })))
}

fn transport_run(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Outcome, AppError> {
    let dim_v = cfg.usize("grid.dim_v");
    let vg = VelocityGrid::new(dim_v, cfg.f64("grid.v_max"), cfg.usize("grid.nodes"))?;
    let p = MaxwellianParams::new(cfg.f64("physics.rho"), [0.0; 3], cfg.f64("physics.T"))?;
    let nu_c = cfg.f64("physics.nu_collision");
    let analytic = TransportCoefficients::bgk_analytic(&p, nu_c, dim_v)?;
    let cs = match cfg.str("transport.cross_section") {
        "isotropic" => CrossSection::isotropic(1.0)?,
        _ => CrossSection::hard_spheres(),
    };
    let angles = SphericalQuadrature::default_for(dim_v)?;
    let models: Vec<(&str, CollisionModel)> = match cfg.str("transport.model") {
        "exact" => vec![("exact", CollisionModel::Exact { cs: &cs, angles: &angles })],
        "both" => vec![
            ("bgk", CollisionModel::BgkDiagonal),
            ("exact", CollisionModel::Exact { cs: &cs, angles: &angles }),
        ],
        _ => vec![("bgk", CollisionModel::BgkDiagonal)],
    };
    let mut table = Table::new(&["model", "nu", "kappa", "d", "nu_analytic", "kappa_analytic", "d_analytic"]);
    let mut summary = serde_json::Map::new();
    for (name, model) in models {
        let c = transport_coefficients(TransportMethod::NumericOperator, &p, nu_c, Some((&vg, model)))?;
        table.push(&[
            Cell::S(name),
            Cell::F(c.nu_visc),
            Cell::F(c.kappa),
            Cell::F(c.d_diff),
            Cell::F(analytic.nu_visc),
            Cell::F(analytic.kappa),
            Cell::F(analytic.d_diff),
        ]);
        summary.insert(name.to_string(), json!({"nu": c.nu_visc, "kappa": c.kappa, "d": c.d_diff}));
    }
    dir.write_csv("transport.csv", &table)?;
    summary.insert(
        "bgk_analytic".into(),
        json!({"nu": analytic.nu_visc, "kappa": analytic.kappa, "d": analytic.d_diff}),
    );
    Ok(Outcome::ok(serde_json::Value::Object(summary)))
}

fn validate_run(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Outcome, AppError> {
    let ids = acceptance::parse_selection(cfg.str("validate.criteria")).map_err(AppError::Usage)?;
    let seed = cfg.u64("solver.seed");
    let scratch = dir.root().join("scratch");
    let mut table = Table::new(&["criterion", "name", "value", "tolerance", "passed", "detail"]);
    let mut failed = Vec::new();
    for id in ids {
        let r = acceptance::run_criterion(id, seed, &scratch)?;
        info!("{}", r.line());
        table.push(&[
            Cell::I(r.id as u64),
            Cell::S(r.name),
            Cell::F(r.value),
            Cell::S(&r.tolerance),
            Cell::B(r.passed),
            Cell::S(&r.detail),
        ]);
        if !r.passed {
            failed.push(r.id);
        }
    }
    if scratch.exists() {
        std::fs::remove_dir_all(&scratch)?;
    }
    dir.write_csv("validate.csv", &table)?;
    let summary = json!({"checked": table.len(), "failed": failed});
    let failure = (!failed.is_empty()).then(|| AppError::Validation(format!("criteria {failed:?} failed")));
    Ok(Outcome { summary, failure })
}
