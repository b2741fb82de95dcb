//! Time integration of the two-species Vlasov-BGK system on a periodic
//! grid, in Euler or parabolic scaling.
//!
//! Transport is a flux-form shift along each axis (PFC third-order
//! reconstruction with positivity limiters, or first-order upwind):
//! periodic in `x`, zero flux at the velocity box edges. The spectral
//! option replaces the `x` shift by an exact Fourier phase shift, whose
//! divergence is the adjoint of the spectral force gradient; total energy
//! then has no spatial truncation drift, at the price of positivity. The Vlasov
//! step is Strang split as `x(dt/2) v(dt) x(dt/2)`; [`run`] composes
//! `collide(dt/2) transport(dt) collide(dt/2)`.
//!
//! Stability requires `|v| dt_x / dx <= 1` for each `x` half step and
//! `|F| dt_v / dv <= 1` for the kick, with `dt_x = dt/2` and `dt_v = dt`
//! (times `1/eps` in parabolic scaling).

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::collision::{moments, relax_cell_exact, LOG_FLOOR};
use crate::domain::{ScalarField, SpatialGrid, SpeciesDistributions, VectorField, VelocityGrid};
use crate::error::{Error, Result};
use crate::hydro::HydroState;
use crate::kac::KacKernel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scaling {
    Euler,
    Parabolic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AdvectionScheme {
    #[default]
    Pfc,
    Upwind,
    /// Fourier shift in `x`, PFC in `v`.
    Spectral,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KineticState {
    pub dists: SpeciesDistributions,
    pub time: f64,
    pub epsilon: f64,
    pub scaling: Scaling,
}

impl KineticState {
    pub fn new(dists: SpeciesDistributions, epsilon: f64, scaling: Scaling) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1], got {epsilon}")));
        }
        if dists.vgrid.dim() < dists.grid.dim() {
            return Err(Error::InvalidGrid(format!(
                "velocity dimension {} is below the spatial dimension {}",
                dists.vgrid.dim(),
                dists.grid.dim()
            )));
        }
        dists.check_nonnegative()?;
        let w = dists.vgrid.weight();
        for (name, f) in [("r", &dists.f_r), ("b", &dists.f_b)] {
            let mass = w * f.iter().sum::<f64>();
            if !(mass > 0.0) || !mass.is_finite() {
                return Err(Error::InvalidParameter(format!("species {name} mass must be positive, got {mass}")));
            }
        }
        Ok(KineticState {
            dists,
            time: 0.0,
            epsilon,
            scaling,
        })
    }

    /// Local Maxwellians sharing `(u, T)` with species densities
    /// `(rho +- phi) / 2`. Each cell uses the lattice Maxwellian with
    /// exactly those discrete moments.
    pub fn from_fields(
        vgrid: &VelocityGrid,
        rho: &ScalarField,
        phi: &ScalarField,
        u: &VectorField,
        t: &ScalarField,
        epsilon: f64,
        scaling: Scaling,
    ) -> Result<Self> {
        let grid = &rho.grid;
        if &phi.grid != grid || &u.grid != grid || &t.grid != grid {
            return Err(Error::GridMismatch);
        }
        let cells: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..grid.len())
            .into_par_iter()
            .map(|c| {
                let mut vel = [0.0; 3];
                for (a, comp) in u.components.iter().enumerate().take(vgrid.dim()) {
                    vel[a] = comp[c];
                }
                let (r, p) = (rho.values[c], phi.values[c]);
                if !(p.abs() <= r) {
                    return Err(Error::Positivity(format!("cell {c}: |phi| = {} > rho = {r}", p.abs())));
                }
                let params = crate::collision::MaxwellianParams::new(1.0, vel, t.values[c])?;
                let m = crate::collision::discrete_maxwellian(&params, vgrid)?;
                let scale = |n: f64| m.iter().map(|x| n * x).collect::<Vec<_>>();
                Ok((scale(0.5 * (r + p)), scale(0.5 * (r - p))))
            })
            .collect();
        let mut f_r = Vec::with_capacity(grid.len() * vgrid.len());
        let mut f_b = Vec::with_capacity(grid.len() * vgrid.len());
        for cell in cells {
            let (r, b) = cell?;
            f_r.extend(r);
            f_b.extend(b);
        }
        Self::new(SpeciesDistributions::new(grid, vgrid, f_r, f_b)?, epsilon, scaling)
    }

    fn stream_factor(&self) -> f64 {
        match self.scaling {
            Scaling::Euler => 1.0,
            Scaling::Parabolic => 1.0 / self.epsilon,
        }
    }

    fn collision_factor(&self) -> f64 {
        match self.scaling {
            Scaling::Euler => 1.0 / self.epsilon,
            Scaling::Parabolic => 1.0 / (self.epsilon * self.epsilon),
        }
    }
}

/// Conserved quantities and entropy of a state.
///
/// `energy_interaction = int n_r (U * n_b) dx` with the species kernel, and
/// `entropy = sum_alpha int int f log f` (zero entries contribute zero).
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub mass_r: f64,
    pub mass_b: f64,
    pub momentum: [f64; 3],
    pub energy_kinetic: f64,
    pub energy_interaction: f64,
    pub energy_total: f64,
    pub entropy: f64,
    pub min_f: f64,
}

pub fn diagnostics(state: &KineticState, kernel: Option<&KacKernel>) -> Result<Diagnostics> {
    let d = &state.dists;
    let vg = &d.vgrid;
    let nv = vg.len();
    let dim_v = vg.dim();
    let w = vg.weight() * d.grid.cell_volume();
    // Per-cell partial sums in a fixed order keep the result thread-count independent.
    let per_cell: Vec<[f64; 7]> = (0..d.grid.len())
        .into_par_iter()
        .map(|c| {
            let mut s = [0.0; 7];
            for k in 0..nv {
                let (r, b) = (d.f_r[c * nv + k], d.f_b[c * nv + k]);
                let v = vg.node(k);
                let tot = r + b;
                s[0] += r;
                s[1] += b;
                for a in 0..dim_v {
                    s[2 + a] += tot * v[a];
                }
                s[5] += 0.5 * tot * (0..dim_v).map(|a| v[a] * v[a]).sum::<f64>();
                for x in [r, b] {
                    if x > 0.0 {
                        s[6] += x * x.max(LOG_FLOOR).ln();
                    }
                }
            }
            s
        })
        .collect();
    let mut tot = [0.0; 7];
    for s in &per_cell {
        for (t, x) in tot.iter_mut().zip(s) {
            *t += x;
        }
    }
    let energy_interaction = match kernel {
        Some(k) => k.interaction_energy(&d.density_r(), &d.density_b())?,
        None => 0.0,
    };
    let energy_kinetic = w * tot[5];
    Ok(Diagnostics {
        mass_r: w * tot[0],
        mass_b: w * tot[1],
        momentum: [w * tot[2], w * tot[3], w * tot[4]],
        energy_kinetic,
        energy_interaction,
        energy_total: energy_kinetic + energy_interaction,
        entropy: w * tot[6],
        min_f: d.min_value(),
    })
}

fn check_kernel(state: &KineticState, kernel: Option<&KacKernel>) -> Result<()> {
    if let Some(k) = kernel {
        if k.grid != state.dists.grid {
            return Err(Error::GridMismatch);
        }
    }
    Ok(())
}

fn max_node_speed(vg: &VelocityGrid) -> f64 {
    vg.v_max() - 0.5 * vg.spacing()
}

fn species_forces(state: &KineticState, kernel: Option<&KacKernel>) -> Result<Option<(VectorField, VectorField)>> {
    match kernel {
        None => Ok(None),
        Some(k) => {
            let f = k.forces(&state.dists.density_r(), &state.dists.density_b())?;
            Ok(Some((f.f_r, f.f_b)))
        }
    }
}

/// Largest admissible `dt` for [`vlasov_step`] at the current forces.
pub fn admissible_dt(state: &KineticState, kernel: Option<&KacKernel>) -> Result<f64> {
    check_kernel(state, kernel)?;
    let sf = state.stream_factor();
    let vg = &state.dists.vgrid;
    let mut dt = 2.0 * state.dists.grid.min_spacing() / (max_node_speed(vg) * sf);
    if let Some((fr, fb)) = species_forces(state, kernel)? {
        let fmax = fr.max_abs().max(fb.max_abs());
        if fmax > 0.0 {
            dt = dt.min(vg.spacing() / (fmax * sf));
        }
    }
    Ok(dt)
}

/// Flux-form shift of one line by `alpha` cells (`|alpha| <= 1`).
fn advect_line(line: &mut [f64], alpha: f64, periodic: bool, scheme: AdvectionScheme, flux: &mut Vec<f64>) {
    if alpha == 0.0 {
        return;
    }
    if alpha < 0.0 {
        line.reverse();
        advect_line(line, -alpha, periodic, scheme, flux);
        line.reverse();
        return;
    }
    let n = line.len();
    let get = |j: isize| -> f64 {
        if periodic {
            line[j.rem_euclid(n as isize) as usize]
        } else if j < 0 || j >= n as isize {
            0.0
        } else {
            line[j as usize]
        }
    };
    flux.clear();
    // flux[i] is the flux through the face i + 1/2.
    for i in 0..n {
        if !periodic && i == n - 1 {
            flux.push(0.0);
            continue;
        }
        let fi = line[i];
        let phi = match scheme {
            AdvectionScheme::Upwind => alpha * fi,
            AdvectionScheme::Pfc | AdvectionScheme::Spectral => {
                let fp = get(i as isize + 1);
                let fm = get(i as isize - 1);
                let eps_p = if fp > fi { (2.0 * fi / (fp - fi)).min(1.0) } else { 1.0 };
                let eps_m = if fi < fm { (2.0 * fi / (fm - fi)).min(1.0) } else { 1.0 };
                let a = alpha;
                a * (fi
                    + eps_p * (1.0 - a) * (2.0 - a) / 6.0 * (fp - fi)
                    + eps_m * (1.0 - a) * (1.0 + a) / 6.0 * (fi - fm))
            }
        };
        flux.push(phi);
    }
    let inflow_last = if periodic { flux[n - 1] } else { 0.0 };
    let mut prev = inflow_last;
    for i in 0..n {
        let out = flux[i];
        line[i] += prev - out;
        prev = out;
    }
}

/// Streams both species along spatial axis `axis` over `dt_eff`.
fn stream_x(d: &mut SpeciesDistributions, axis: usize, dt_eff: f64, scheme: AdvectionScheme) {
    let grid = d.grid.clone();
    let nv = d.vgrid.len();
    let ncell = grid.len();
    let h = grid.spacing(axis);
    let n_line = grid.cells(axis);
    let n_other = ncell / n_line;
    let cell_of = |line: usize, pos: usize| -> usize {
        if axis == 0 {
            pos + n_line * line
        } else {
            line + grid.cells(0) * pos
        }
    };
    let nodes: Vec<[f64; 3]> = d.vgrid.nodes().to_vec();
    let mut planner = FftPlanner::new();
    let (fwd, inv) = (planner.plan_fft_forward(n_line), planner.plan_fft_inverse(n_line));
    let wavenumber = |m: usize| -> f64 {
        let j = if 2 * m <= n_line { m as f64 } else { m as f64 - n_line as f64 };
        2.0 * std::f64::consts::PI * j / grid.extent(axis)
    };
    for f in [&mut d.f_r, &mut d.f_b] {
        let columns: Vec<Vec<f64>> = (0..nv)
            .into_par_iter()
            .map(|k| {
                let alpha = nodes[k][axis] * dt_eff / h;
                let mut col = vec![0.0; ncell];
                let mut line = vec![0.0; n_line];
                let mut flux = Vec::with_capacity(n_line);
                let mut spec = vec![Complex64::new(0.0, 0.0); n_line];
                let shift = nodes[k][axis] * dt_eff;
                for l in 0..n_other {
                    for (p, x) in line.iter_mut().enumerate() {
                        *x = f[cell_of(l, p) * nv + k];
                    }
                    if scheme == AdvectionScheme::Spectral {
                        for (c, x) in spec.iter_mut().zip(&line) {
                            *c = Complex64::new(*x, 0.0);
                        }
                        fwd.process(&mut spec);
                        for (m, c) in spec.iter_mut().enumerate() {
                            let phase = wavenumber(m) * shift;
                            *c *= if 2 * m == n_line {
                                Complex64::new(phase.cos(), 0.0)
                            } else {
                                Complex64::from_polar(1.0, -phase)
                            };
                        }
                        inv.process(&mut spec);
                        let norm = 1.0 / n_line as f64;
                        for (x, c) in line.iter_mut().zip(&spec) {
                            *x = c.re * norm;
                        }
                    } else {
                        advect_line(&mut line, alpha, true, scheme, &mut flux);
                    }
                    for (p, x) in line.iter().enumerate() {
                        col[cell_of(l, p)] = *x;
                    }
                }
                col
            })
            .collect();
        for (k, col) in columns.into_iter().enumerate() {
            for (c, x) in col.into_iter().enumerate() {
                f[c * nv + k] = x;
            }
        }
    }
}

/// Shifts each cell's distribution in velocity by `force * dt_eff`.
fn kick(f: &mut [f64], vg: &VelocityGrid, force: &VectorField, dt_eff: f64, scheme: AdvectionScheme) {
    let nv = vg.len();
    let shape = vg.shape();
    let dv = vg.spacing();
    let n = vg.nodes_per_axis();
    f.par_chunks_mut(nv).enumerate().for_each(|(c, cell)| {
        let mut line = vec![0.0; n];
        let mut flux = Vec::with_capacity(n);
        for (axis, comp) in force.components.iter().enumerate() {
            let alpha = comp[c] * dt_eff / dv;
            if alpha == 0.0 {
                continue;
            }
            let stride = shape[..axis].iter().product::<usize>();
            for start in 0..nv {
                if vg.unravel(start)[axis] != 0 {
                    continue;
                }
                for (p, x) in line.iter_mut().enumerate() {
                    *x = cell[start + p * stride];
                }
                advect_line(&mut line, alpha, false, scheme, &mut flux);
                for (p, x) in line.iter().enumerate() {
                    cell[start + p * stride] = *x;
                }
            }
        }
    });
}

/// One Strang-split transport step `x(dt/2) v(dt) x(dt/2)`.
pub fn vlasov_step(state: &KineticState, kernel: Option<&KacKernel>, dt: f64, scheme: AdvectionScheme) -> Result<KineticState> {
    check_kernel(state, kernel)?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let sf = state.stream_factor();
    let vg = state.dists.vgrid.clone();
    let grid = state.dists.grid.clone();
    let stream_limit = 2.0 * grid.min_spacing() / (max_node_speed(&vg) * sf);
    if dt > stream_limit {
        return Err(Error::Stability {
            dt,
            admissible: admissible_dt(state, kernel)?,
        });
    }
    let mut next = state.clone();
    for axis in 0..grid.dim() {
        stream_x(&mut next.dists, axis, 0.5 * dt * sf, scheme);
    }
    if let Some((fr, fb)) = species_forces(&next, kernel)? {
        let fmax = fr.max_abs().max(fb.max_abs());
        if fmax * dt * sf > vg.spacing() {
            return Err(Error::Stability {
                dt,
                admissible: stream_limit.min(vg.spacing() / (fmax * sf)),
            });
        }
        let v_scheme = if scheme == AdvectionScheme::Spectral { AdvectionScheme::Pfc } else { scheme };
        kick(&mut next.dists.f_r, &vg, &fr, dt * sf, v_scheme);
        kick(&mut next.dists.f_b, &vg, &fb, dt * sf, v_scheme);
    }
    for axis in (0..grid.dim()).rev() {
        stream_x(&mut next.dists, axis, 0.5 * dt * sf, scheme);
    }
    next.time += dt;
    Ok(next)
}

/// Exact per-cell BGK relaxation over `dt` at rate `nu_collision / eps`
/// (Euler) or `nu_collision / eps^2` (parabolic).
pub fn collide_step(state: &KineticState, nu_collision: f64, dt: f64) -> Result<KineticState> {
    crate::collision::check_rate(nu_collision)?;
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be nonnegative, got {dt}")));
    }
    let decay = (-nu_collision * dt * state.collision_factor()).exp();
    let mut next = state.clone();
    let nv = next.dists.vgrid.len();
    let vg = next.dists.vgrid.clone();
    let SpeciesDistributions { f_r, f_b, .. } = &mut next.dists;
    f_r.par_chunks_mut(nv)
        .zip(f_b.par_chunks_mut(nv))
        .for_each(|(r, b)| relax_cell_exact(r, b, &vg, decay));
    Ok(next)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    /// Diagnostics are recorded every `stride` steps (and at the end).
    pub stride: usize,
    pub scheme: AdvectionScheme,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            stride: 1,
            scheme: AdvectionScheme::Pfc,
        }
    }
}

/// What an observer sees at each recorded step.
#[derive(Clone, Copy, Debug)]
pub struct Observation<'a> {
    pub step: usize,
    pub time: f64,
    pub diagnostics: &'a Diagnostics,
    pub state: &'a KineticState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trajectory: Vec<DiagnosticsRecord>,
    pub final_state: KineticState,
}

/// Integrates to `t_end` with `round(t_end / dt)` equal steps of
/// `collide(dt/2) transport(dt) collide(dt/2)`. A zero collision rate
/// switches collisions off.
pub fn run(
    initial: &KineticState,
    kernel: Option<&KacKernel>,
    nu_collision: f64,
    t_end: f64,
    dt: f64,
    opts: &RunOptions,
    observer: &mut dyn FnMut(&Observation),
) -> Result<RunOutput> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParameter(format!("t_end must be positive, got {t_end}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if !(nu_collision >= 0.0) || !nu_collision.is_finite() {
        return Err(Error::InvalidParameter(format!("collision rate must be nonnegative, got {nu_collision}")));
    }
    if opts.stride == 0 {
        return Err(Error::InvalidParameter("stride must be at least 1".into()));
    }
    check_kernel(initial, kernel)?;
    let steps = ((t_end / dt).round() as usize).max(1);
    let h = t_end / steps as f64;
    let mut state = initial.clone();
    let mut trajectory = Vec::new();
    let mut record = |step: usize, state: &KineticState, trajectory: &mut Vec<DiagnosticsRecord>| -> Result<()> {
        let diagnostics = diagnostics(state, kernel)?;
        observer(&Observation {
            step,
            time: state.time,
            diagnostics: &diagnostics,
            state,
        });
        trajectory.push(DiagnosticsRecord {
            step,
            time: state.time,
            diagnostics,
        });
        Ok(())
    };
    record(0, &state, &mut trajectory)?;
    let start = state.time;
    for step in 1..=steps {
        if nu_collision > 0.0 {
            state = collide_step(&state, nu_collision, 0.5 * h)?;
        }
        state = vlasov_step(&state, kernel, h, opts.scheme)?;
        if nu_collision > 0.0 {
            state = collide_step(&state, nu_collision, 0.5 * h)?;
        }
        state.time = start + step as f64 * h;
        if step % opts.stride == 0 || step == steps {
            record(step, &state, &mut trajectory)?;
        }
    }
    Ok(RunOutput {
        trajectory,
        final_state: state,
    })
}

/// `rho = n_r + n_b`, `phi = n_r - n_b` and the mixture `u`, `T` per cell.
pub fn hydro_moments(state: &KineticState) -> Result<HydroState> {
    let d = &state.dists;
    let grid: &SpatialGrid = &d.grid;
    let vg = &d.vgrid;
    let dof = vg.dim();
    type CellMoments = Option<(f64, f64, [f64; 3], f64)>;
    let cells: Vec<CellMoments> = (0..grid.len())
        .into_par_iter()
        .map(|c| {
            let r = d.slice_r(c);
            let b = d.slice_b(c);
            let total: Vec<f64> = r.iter().zip(b).map(|(x, y)| x + y).collect();
            let mo = moments(&total, vg);
            let n_r = vg.weight() * r.iter().sum::<f64>();
            let n_b = vg.weight() * b.iter().sum::<f64>();
            Some((mo.n, n_r - n_b, mo.u?, mo.t?))
        })
        .collect();
    let vacuum: Vec<usize> = cells.iter().enumerate().filter(|(_, c)| c.is_none()).map(|(i, _)| i).collect();
    if !vacuum.is_empty() {
        return Err(Error::Positivity(format!("vacuum cells {vacuum:?}")));
    }
    let mut rho = ScalarField::zeros(grid);
    let mut phi = ScalarField::zeros(grid);
    let mut t = ScalarField::zeros(grid);
    let mut u = VectorField::zeros(grid, dof);
    for (c, cell) in cells.into_iter().enumerate() {
        let (n, p, vel, temp) = cell.expect("checked above");
        rho.values[c] = n;
        // Roundoff can push |phi| a hair above rho when one species is absent.
        phi.values[c] = p.clamp(-n, n);
        t.values[c] = temp;
        for a in 0..dof {
            u.components[a][c] = vel[a];
        }
    }
    HydroState::new(rho, u, t, phi)
}
