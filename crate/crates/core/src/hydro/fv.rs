//! Time stepping for the compressible system.
//!
//! The finite-volume path evolves `(rho, phi, rho u, E)` with MUSCL
//! reconstruction of `(rho, phi/rho, u, T)`, Rusanov fluxes and SSP
//! Runge-Kutta. Dissipative fluxes use centred face differences; the
//! Vlasov forces come from the spectral kernel. A pseudo-spectral RK4 path
//! on the primitive form is kept for smooth reference solutions.

use super::{check_grid, require_coeffs, vns_rhs, HydroKernel, HydroState};
use crate::collision::TransportCoefficients;
use crate::domain::{ScalarField, SpatialGrid, VectorField};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Limiter {
    Minmod,
    VanLeer,
    MonotonizedCentral,
}

impl Limiter {
    fn slope(self, a: f64, b: f64) -> f64 {
        if a * b <= 0.0 {
            return 0.0;
        }
        let s = a.signum();
        match self {
            Limiter::Minmod => s * a.abs().min(b.abs()),
            Limiter::VanLeer => 2.0 * a * b / (a + b),
            Limiter::MonotonizedCentral => s * (2.0 * a.abs()).min(2.0 * b.abs()).min(0.5 * (a + b).abs()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RungeKutta {
    SspRk2,
    SspRk3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VnsScheme {
    FiniteVolume { limiter: Limiter, integrator: RungeKutta },
    SpectralRk4,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VnsOptions {
    pub scheme: VnsScheme,
    /// Courant number for the hyperbolic part.
    pub cfl: f64,
    /// Number of times a step may be split in half after a positivity failure.
    pub max_retries: usize,
}

impl Default for VnsOptions {
    fn default() -> Self {
        VnsOptions {
            scheme: VnsScheme::FiniteVolume {
                limiter: Limiter::MonotonizedCentral,
                integrator: RungeKutta::SspRk3,
            },
            cfl: 0.5,
            max_retries: 5,
        }
    }
}

/// Largest step allowed by the advective and diffusive limits.
pub fn vns_admissible_dt(state: &HydroState, coeffs: Option<&TransportCoefficients>, eps: f64, opts: &VnsOptions) -> Result<f64> {
    let coeffs = require_coeffs(coeffs, eps)?;
    let grid = &state.grid;
    let dim = grid.dim();
    let gamma = state.gamma();
    let spectral = matches!(opts.scheme, VnsScheme::SpectralRk4);
    // Advective and diffusive rates add so the odd-even mode stays inside
    // the integrator's stability interval when both limits are active.
    let mut advective = 0.0f64;
    for a in 0..dim {
        let h = grid.spacing(a);
        let speed = (0..grid.len())
            .map(|i| state.u.components[a][i].abs() + (gamma * state.t.values[i]).sqrt())
            .fold(0.0f64, f64::max);
        let h_eff = if spectral { h / std::f64::consts::PI } else { h };
        advective = advective.max(speed / (opts.cfl * h_eff));
    }
    let mut diffusive = 0.0;
    if let Some(c) = coeffs {
        let cv = 0.5 * state.dof as f64;
        let rho_min = state.rho.min();
        let diffusivity = eps * (2.0 * c.nu_visc).max(c.kappa / cv).max(c.d_diff) / rho_min;
        let h = grid.min_spacing();
        let h2 = if spectral {
            2.0 * (h / std::f64::consts::PI).powi(2)
        } else {
            h * h
        };
        diffusive = 2.0 * dim as f64 * diffusivity / h2;
    }
    let dt = 1.0 / (advective + diffusive);
    Ok(dt)
}

/// Advances the state by `dt`. Steps that lose positivity are retried as
/// 2, 4, ... substeps up to `opts.max_retries` times.
pub fn vns_step(
    state: &HydroState,
    hk: &HydroKernel,
    coeffs: Option<&TransportCoefficients>,
    eps: f64,
    dt: f64,
    opts: &VnsOptions,
) -> Result<HydroState> {
    check_grid(state, hk)?;
    state.check_positivity()?;
    require_coeffs(coeffs, eps)?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let admissible = vns_admissible_dt(state, coeffs, eps, opts)?;
    if dt > admissible * (1.0 + 1e-12) {
        return Err(Error::Stability { dt, admissible });
    }
    let mut last = None;
    for attempt in 0..=opts.max_retries {
        let pieces = 1usize << attempt;
        let sub = dt / pieces as f64;
        let mut s = state.clone();
        let mut ok = true;
        for _ in 0..pieces {
            match single_step(&s, hk, coeffs, eps, sub, opts) {
                Ok(next) => s = next,
                Err(e @ Error::Positivity(_)) => {
                    last = Some(e);
                    ok = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if ok {
            if attempt > 0 {
                log::debug!("vns_step needed {pieces} substeps");
            }
            return Ok(s);
        }
    }
    Err(last.unwrap_or_else(|| Error::Positivity("step rejected".into())))
}

fn single_step(
    state: &HydroState,
    hk: &HydroKernel,
    coeffs: Option<&TransportCoefficients>,
    eps: f64,
    dt: f64,
    opts: &VnsOptions,
) -> Result<HydroState> {
    match opts.scheme {
        VnsScheme::SpectralRk4 => rk4_step(state, hk, coeffs, eps, dt),
        VnsScheme::FiniteVolume { limiter, integrator } => {
            let fv = FiniteVolume {
                grid: &state.grid,
                hk,
                coeffs: coeffs.copied(),
                eps,
                dof: state.dof,
                limiter,
            };
            let u0 = Conserved::from_state(state);
            let axpy = |a: f64, x: &Conserved, b: f64, y: &Conserved, c: f64, r: &Conserved| Conserved {
                vars: (0..x.vars.len())
                    .map(|v| {
                        (0..x.vars[v].len())
                            .map(|i| a * x.vars[v][i] + b * y.vars[v][i] + c * r.vars[v][i])
                            .collect()
                    })
                    .collect(),
            };
            let out = match integrator {
                RungeKutta::SspRk2 => {
                    let l0 = fv.rhs(&u0)?;
                    let u1 = axpy(1.0, &u0, 0.0, &u0, dt, &l0);
                    let l1 = fv.rhs(&u1)?;
                    axpy(0.5, &u0, 0.5, &u1, 0.5 * dt, &l1)
                }
                RungeKutta::SspRk3 => {
                    let l0 = fv.rhs(&u0)?;
                    let u1 = axpy(1.0, &u0, 0.0, &u0, dt, &l0);
                    let l1 = fv.rhs(&u1)?;
                    let u2 = axpy(0.75, &u0, 0.25, &u1, 0.25 * dt, &l1);
                    let l2 = fv.rhs(&u2)?;
                    axpy(1.0 / 3.0, &u0, 2.0 / 3.0, &u2, 2.0 / 3.0 * dt, &l2)
                }
            };
            out.to_state(&state.grid, state.dof)
        }
    }
}

fn rk4_step(state: &HydroState, hk: &HydroKernel, coeffs: Option<&TransportCoefficients>, eps: f64, dt: f64) -> Result<HydroState> {
    let shift = |s: &HydroState, k: &super::HydroRhs, h: f64| -> Result<HydroState> {
        let add = |f: &ScalarField, d: &[f64]| ScalarField {
            grid: f.grid.clone(),
            values: f.values.iter().zip(d).map(|(x, y)| x + h * y).collect(),
        };
        let u = VectorField {
            grid: s.grid.clone(),
            components: s
                .u
                .components
                .iter()
                .zip(&k.u)
                .map(|(c, d)| c.iter().zip(d).map(|(x, y)| x + h * y).collect())
                .collect(),
        };
        let next = HydroState {
            grid: s.grid.clone(),
            rho: add(&s.rho, &k.rho),
            u,
            t: add(&s.t, &k.t),
            phi: add(&s.phi, &k.phi),
            dof: s.dof,
        };
        next.check_positivity()?;
        Ok(next)
    };
    let k1 = vns_rhs(state, hk, coeffs, eps)?;
    let k2 = vns_rhs(&shift(state, &k1, 0.5 * dt)?, hk, coeffs, eps)?;
    let k3 = vns_rhs(&shift(state, &k2, 0.5 * dt)?, hk, coeffs, eps)?;
    let k4 = vns_rhs(&shift(state, &k3, dt)?, hk, coeffs, eps)?;
    let comb = |a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..a.len()).map(|i| (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]) / 6.0).collect()
    };
    let total = super::HydroRhs {
        rho: comb(&k1.rho, &k2.rho, &k3.rho, &k4.rho),
        phi: comb(&k1.phi, &k2.phi, &k3.phi, &k4.phi),
        u: (0..state.dof).map(|b| comb(&k1.u[b], &k2.u[b], &k3.u[b], &k4.u[b])).collect(),
        t: comb(&k1.t, &k2.t, &k3.t, &k4.t),
    };
    shift(state, &total, dt)
}

/// Conserved variables: `[rho, phi, rho u_0 .. rho u_{dof-1}, E]`.
#[derive(Clone, Debug)]
struct Conserved {
    vars: Vec<Vec<f64>>,
}

impl Conserved {
    fn from_state(s: &HydroState) -> Self {
        let n = s.grid.len();
        let cv = 0.5 * s.dof as f64;
        let mut vars = vec![s.rho.values.clone(), s.phi.values.clone()];
        for b in 0..s.dof {
            vars.push((0..n).map(|i| s.rho.values[i] * s.u.components[b][i]).collect());
        }
        vars.push(
            (0..n)
                .map(|i| {
                    let u2: f64 = (0..s.dof).map(|b| s.u.components[b][i].powi(2)).sum();
                    s.rho.values[i] * (0.5 * u2 + cv * s.t.values[i])
                })
                .collect(),
        );
        Conserved { vars }
    }

    fn primitives(&self, dof: usize) -> Result<Primitives> {
        let n = self.vars[0].len();
        let cv = 0.5 * dof as f64;
        let mut p = Primitives {
            rho: vec![0.0; n],
            c: vec![0.0; n],
            u: vec![vec![0.0; n]; dof],
            t: vec![0.0; n],
        };
        for i in 0..n {
            let r = self.vars[0][i];
            if !(r > 0.0) {
                return Err(Error::Positivity(format!("cell {i}: rho = {r}")));
            }
            let phi = self.vars[1][i];
            if !(phi.abs() <= r) {
                return Err(Error::Positivity(format!("cell {i}: |phi| = {} > rho = {r}", phi.abs())));
            }
            p.rho[i] = r;
            p.c[i] = phi / r;
            let mut u2 = 0.0;
            for b in 0..dof {
                let ub = self.vars[2 + b][i] / r;
                p.u[b][i] = ub;
                u2 += ub * ub;
            }
            let t = (self.vars[2 + dof][i] / r - 0.5 * u2) / cv;
            if !(t > 0.0) {
                return Err(Error::Positivity(format!("cell {i}: T = {t}")));
            }
            p.t[i] = t;
        }
        Ok(p)
    }

    fn to_state(&self, grid: &SpatialGrid, dof: usize) -> Result<HydroState> {
        let p = self.primitives(dof)?;
        let phi = self.vars[1].clone();
        HydroState::new(
            ScalarField {
                grid: grid.clone(),
                values: p.rho,
            },
            VectorField {
                grid: grid.clone(),
                components: p.u,
            },
            ScalarField {
                grid: grid.clone(),
                values: p.t,
            },
            ScalarField {
                grid: grid.clone(),
                values: phi,
            },
        )
    }
}

struct Primitives {
    rho: Vec<f64>,
    c: Vec<f64>,
    u: Vec<Vec<f64>>,
    t: Vec<f64>,
}

/// Primitive point values `[rho, c, u.., T]` at a face side.
fn flux_of(w: &[f64], dof: usize, axis: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let cv = 0.5 * dof as f64;
    let rho = w[0];
    let c = w[1];
    let u = &w[2..2 + dof];
    let t = w[2 + dof];
    let p = rho * t;
    let u2: f64 = u.iter().map(|x| x * x).sum();
    let e = rho * (0.5 * u2 + cv * t);
    let ua = u[axis];
    let mut cons = vec![rho, rho * c];
    let mut flux = vec![rho * ua, rho * c * ua];
    for b in 0..dof {
        cons.push(rho * u[b]);
        flux.push(rho * u[b] * ua + if b == axis { p } else { 0.0 });
    }
    cons.push(e);
    flux.push((e + p) * ua);
    let gamma = (dof as f64 + 2.0) / dof as f64;
    (cons, flux, ua.abs() + (gamma * t).sqrt())
}

struct FiniteVolume<'a> {
    grid: &'a SpatialGrid,
    hk: &'a HydroKernel,
    coeffs: Option<TransportCoefficients>,
    eps: f64,
    dof: usize,
    limiter: Limiter,
}

impl FiniteVolume<'_> {
    fn neighbour(&self, i: usize, axis: usize, step: isize) -> usize {
        let [ix, iy] = self.grid.unravel(i);
        let (mut x, mut y) = (ix as isize, iy as isize);
        if axis == 0 {
            x += step;
        } else {
            y += step;
        }
        self.grid.index(x, y)
    }

    fn rhs(&self, u: &Conserved) -> Result<Conserved> {
        let dof = self.dof;
        let nvar = 3 + dof;
        let n = self.grid.len();
        let dim = self.grid.dim();
        let prim = u.primitives(dof)?;
        let fields: Vec<&Vec<f64>> = std::iter::once(&prim.rho)
            .chain(std::iter::once(&prim.c))
            .chain(prim.u.iter())
            .chain(std::iter::once(&prim.t))
            .collect();
        let mut out = vec![vec![0.0; n]; nvar];

        for axis in 0..dim {
            let h = self.grid.spacing(axis);
            let slopes: Vec<Vec<f64>> = fields
                .iter()
                .map(|q| {
                    (0..n)
                        .map(|i| {
                            let l = q[self.neighbour(i, axis, -1)];
                            let r = q[self.neighbour(i, axis, 1)];
                            self.limiter.slope(q[i] - l, r - q[i])
                        })
                        .collect()
                })
                .collect();
            for i in 0..n {
                let j = self.neighbour(i, axis, 1);
                let wl: Vec<f64> = (0..nvar).map(|v| fields[v][i] + 0.5 * slopes[v][i]).collect();
                let wr: Vec<f64> = (0..nvar).map(|v| fields[v][j] - 0.5 * slopes[v][j]).collect();
                let (ul, fl, sl) = flux_of(&wl, dof, axis);
                let (ur, fr, sr) = flux_of(&wr, dof, axis);
                let s = sl.max(sr);
                for v in 0..nvar {
                    let f = 0.5 * (fl[v] + fr[v]) - 0.5 * s * (ur[v] - ul[v]);
                    out[v][i] -= f / h;
                    out[v][j] += f / h;
                }
            }
        }

        let rho_f = ScalarField {
            grid: self.grid.clone(),
            values: prim.rho.clone(),
        };
        let phi_f = ScalarField {
            grid: self.grid.clone(),
            values: prim.rho.iter().zip(&prim.c).map(|(r, c)| r * c).collect(),
        };
        let k_rho = self.hk.force_of(&rho_f)?;
        let k_phi = self.hk.force_of(&phi_f)?;
        for a in 0..dim {
            for i in 0..n {
                let f = prim.rho[i] * k_rho.components[a][i] - phi_f.values[i] * k_phi.components[a][i];
                out[2 + a][i] += f;
                out[2 + dof][i] += prim.u[a][i] * f;
            }
        }

        if let Some(c) = self.coeffs {
            self.dissipative(&prim, &phi_f.values, &k_phi, &c, &mut out);
        }
        Ok(Conserved { vars: out })
    }

    /// Centred-difference dissipative fluxes and the `(K*phi).D Q` work term.
    fn dissipative(&self, prim: &Primitives, phi: &[f64], k_phi: &VectorField, c: &TransportCoefficients, out: &mut [Vec<f64>]) {
        let dof = self.dof;
        let n = self.grid.len();
        let dim = self.grid.dim();
        let eps = self.eps;
        let cell_grad = |q: &[f64], b: usize, i: usize| -> f64 {
            let h = self.grid.spacing(b);
            (q[self.neighbour(i, b, 1)] - q[self.neighbour(i, b, -1)]) / (2.0 * h)
        };
        let mut q_face = vec![vec![0.0; n]; dim];
        for axis in 0..dim {
            let h = self.grid.spacing(axis);
            for i in 0..n {
                let j = self.neighbour(i, axis, 1);
                // d_b q at the face between i and j.
                let face_grad = |q: &[f64], b: usize| -> f64 {
                    if b == axis {
                        (q[j] - q[i]) / h
                    } else {
                        0.5 * (cell_grad(q, b, i) + cell_grad(q, b, j))
                    }
                };
                let avg = |q: &[f64]| 0.5 * (q[i] + q[j]);
                let rho = avg(&prim.rho);
                let ph = avg(phi);
                let t = avg(&prim.t);
                let kphi = avg(&k_phi.components[axis]);
                let q = face_grad(&prim.c, axis) + (rho * rho - ph * ph) / (rho * rho * t) * kphi;
                q_face[axis][i] = q;

                let mut flux = vec![0.0; 3 + dof];
                flux[1] = -eps * c.d_diff * q;
                let div_u: f64 = (0..dim).map(|b| face_grad(&prim.u[b], b)).sum();
                let mut sigma_u = 0.0;
                for b in 0..dof {
                    let mut s = face_grad(&prim.u[b], axis);
                    if b < dim {
                        s += face_grad(&prim.u[axis], b);
                    }
                    if b == axis {
                        s -= 2.0 / dof as f64 * div_u;
                    }
                    let sigma = -c.nu_visc * s;
                    flux[2 + b] = eps * sigma;
                    sigma_u += sigma * avg(&prim.u[b]);
                }
                flux[2 + dof] = eps * (sigma_u - c.kappa * face_grad(&prim.t, axis));
                for (v, f) in flux.iter().enumerate() {
                    out[v][i] -= f / h;
                    out[v][j] += f / h;
                }
            }
        }
        for i in 0..n {
            let mut work = 0.0;
            for a in 0..dim {
                let qa = 0.5 * (q_face[a][i] + q_face[a][self.neighbour(i, a, -1)]);
                work += k_phi.components[a][i] * c.d_diff * qa;
            }
            out[2 + dof][i] -= eps * work;
        }
    }
}
