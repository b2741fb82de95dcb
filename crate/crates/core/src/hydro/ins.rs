//! Incompressible limit: divergence-free velocity, concentration and
//! temperature fluctuations on the periodic grid.
//!
//! ```text
//! d_t u + u.grad u = -grad p + nu lap u + phi W (+ rho F)
//! d_t phi + u.grad phi = D [lap phi / rho_bar - lap(U_h*phi) / T_bar]
//! c_theta (d_t theta + u.grad theta) = u.F + kappa lap theta      (full variant)
//! div u = 0
//! ```
//!
//! with `F = -grad(U_h*rho)`, `W = grad(U_h*phi)` and
//! `c_theta = (dof + 2) / 2`. The linear parts are integrated exactly in
//! Fourier space (integrating-factor RK2); the constraint
//! `grad(rho + theta + U_h*rho) = 0` is only monitored.

use num_complex::Complex64;

use super::HydroKernel;
use crate::domain::{ScalarField, SpatialGrid, VectorField};
use crate::error::{Error, Result};
use crate::spectral::Spectral;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsVariant {
    /// Velocity and concentration only.
    Reduced,
    /// Adds the density force and the temperature equation.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InsParams {
    pub rho_bar: f64,
    pub t_bar: f64,
    pub nu: f64,
    pub kappa: f64,
    pub d_diff: f64,
    pub dof: usize,
    pub variant: InsVariant,
    /// Two-thirds dealiasing of the quadratic terms.
    pub dealias: bool,
}

impl InsParams {
    pub fn reduced(rho_bar: f64, t_bar: f64, nu: f64, d_diff: f64) -> Self {
        InsParams {
            rho_bar,
            t_bar,
            nu,
            kappa: 0.0,
            d_diff,
            dof: 3,
            variant: InsVariant::Reduced,
            dealias: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rho_bar > 0.0
            && self.t_bar > 0.0
            && self.nu >= 0.0
            && self.kappa >= 0.0
            && self.d_diff >= 0.0
            && (1..=3).contains(&self.dof)
            && [self.rho_bar, self.t_bar, self.nu, self.kappa, self.d_diff].iter().all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid incompressible parameters {self:?}")))
        }
    }

    fn c_theta(&self) -> f64 {
        0.5 * (self.dof as f64 + 2.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InsState {
    pub grid: SpatialGrid,
    /// One component per spatial axis.
    pub u: VectorField,
    pub phi: ScalarField,
    pub theta: ScalarField,
    /// Density fluctuation; held fixed in time, enters the full variant.
    pub rho: ScalarField,
    pub time: f64,
}

impl InsState {
    pub fn new(u: VectorField, phi: ScalarField, theta: ScalarField, rho: ScalarField) -> Result<Self> {
        let grid = phi.grid.clone();
        if u.grid != grid || theta.grid != grid || rho.grid != grid {
            return Err(Error::GridMismatch);
        }
        if u.ncomp() != grid.dim() {
            return Err(Error::InvalidParameter(format!(
                "velocity needs {} components, got {}",
                grid.dim(),
                u.ncomp()
            )));
        }
        Ok(InsState {
            grid,
            u,
            phi,
            theta,
            rho,
            time: 0.0,
        })
    }

    /// State with zero velocity, temperature and density fluctuations.
    pub fn from_phi(phi: ScalarField) -> Self {
        let grid = phi.grid.clone();
        InsState {
            u: VectorField::zeros(&grid, grid.dim()),
            theta: ScalarField::zeros(&grid),
            rho: ScalarField::zeros(&grid),
            phi,
            grid,
            time: 0.0,
        }
    }

    pub fn kinetic_energy(&self) -> f64 {
        let vol = self.grid.cell_volume();
        0.5 * vol * self.u.components.iter().flatten().map(|x| x * x).sum::<f64>()
    }
}

/// Leray projection onto divergence-free fields.
pub fn project(sp: &Spectral, u: &VectorField) -> VectorField {
    let spec: Vec<Vec<Complex64>> = u.components.iter().map(|c| sp.forward(c)).collect();
    let projected = project_spectra(sp, spec);
    VectorField {
        grid: u.grid.clone(),
        components: projected.into_iter().map(|s| sp.inverse_real(s)).collect(),
    }
}

fn project_spectra(sp: &Spectral, mut spec: Vec<Vec<Complex64>>) -> Vec<Vec<Complex64>> {
    let dim = spec.len();
    for i in 0..spec[0].len() {
        let k = sp.derivative_wavevector(i);
        let k2: f64 = (0..dim).map(|a| k[a] * k[a]).sum();
        if k2 == 0.0 {
            continue;
        }
        let dot: Complex64 = (0..dim).map(|a| spec[a][i] * k[a]).sum();
        for (a, s) in spec.iter_mut().enumerate() {
            s[i] -= dot * (k[a] / k2);
        }
    }
    spec
}

/// Maximum of `|div u|` computed spectrally.
pub fn divergence_max(sp: &Spectral, u: &VectorField) -> f64 {
    let mut div = vec![0.0; u.grid.len()];
    for (a, c) in u.components.iter().enumerate() {
        for (d, x) in div.iter_mut().zip(sp.derivative(c, a)) {
            *d += x;
        }
    }
    div.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `max |grad(rho + theta + U_h*rho)|`, zero when the constraint holds.
pub fn constraint_defect(state: &InsState, hk: &HydroKernel) -> Result<f64> {
    let urho = hk.kernel().convolve(&state.rho)?;
    let field: Vec<f64> = (0..state.grid.len())
        .map(|i| state.rho.values[i] + state.theta.values[i] + urho.values[i])
        .collect();
    let g = hk.spectral().gradient(&field);
    Ok(g.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs())))
}

/// Growth rate `-D k^2 (1/rho_bar - U_h(k)/T_bar)` of a concentration mode.
pub fn dispersion_growth_rate(mode: [i64; 2], rho_bar: f64, t_bar: f64, d_diff: f64, hk: &HydroKernel) -> f64 {
    let k2 = mode_k_squared(hk.grid(), mode);
    -d_diff * k2 * (1.0 / rho_bar - hk.multiplier_for_mode(mode) / t_bar)
}

/// Temperature below which the mode grows: `rho_bar U_h(k)`.
pub fn marginal_temperature(mode: [i64; 2], rho_bar: f64, hk: &HydroKernel) -> f64 {
    rho_bar * hk.multiplier_for_mode(mode)
}

fn mode_k_squared(grid: &SpatialGrid, mode: [i64; 2]) -> f64 {
    (0..grid.dim())
        .map(|a| (2.0 * std::f64::consts::PI * mode[a] as f64 / grid.extent(a)).powi(2))
        .sum()
}

/// Time derivatives of `(u, phi, theta)` and the pressure.
#[derive(Clone, Debug, PartialEq)]
pub struct InsRhs {
    pub u: VectorField,
    pub phi: ScalarField,
    pub theta: ScalarField,
    pub pressure: ScalarField,
}

struct Spectra {
    u: Vec<Vec<Complex64>>,
    phi: Vec<Complex64>,
    theta: Vec<Complex64>,
}

struct Solver<'a> {
    sp: &'a Spectral,
    hk: &'a HydroKernel,
    p: InsParams,
    rho: &'a ScalarField,
    dealias_mask: Vec<bool>,
}

impl<'a> Solver<'a> {
    fn new(state: &'a InsState, hk: &'a HydroKernel, p: InsParams) -> Result<Self> {
        p.validate()?;
        if &state.grid != hk.grid() {
            return Err(Error::GridMismatch);
        }
        let grid = &state.grid;
        let dealias_mask = (0..grid.len())
            .map(|i| {
                if !p.dealias {
                    return true;
                }
                let idx = grid.unravel(i);
                (0..grid.dim()).all(|a| {
                    let n = grid.cells(a) as i64;
                    let m = if (idx[a] as i64) < (n + 1) / 2 { idx[a] as i64 } else { idx[a] as i64 - n };
                    3 * m.abs() < n
                })
            })
            .collect();
        Ok(Solver {
            sp: hk.spectral(),
            hk,
            p,
            rho: &state.rho,
            dealias_mask,
        })
    }

    fn linear_u(&self, i: usize) -> f64 {
        -self.p.nu * self.sp.k_squared(i)
    }

    fn linear_phi(&self, i: usize) -> f64 {
        let u_h = self.hk.kernel().fourier_multipliers[i];
        -self.p.d_diff * self.sp.k_squared(i) * (1.0 / self.p.rho_bar - u_h / self.p.t_bar)
    }

    fn linear_theta(&self, i: usize) -> f64 {
        -self.p.kappa * self.sp.k_squared(i) / self.p.c_theta()
    }

    fn filtered(&self, v: &[f64]) -> Vec<Complex64> {
        let mut s = self.sp.forward(v);
        for (c, &keep) in s.iter_mut().zip(&self.dealias_mask) {
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        s
    }

    /// Nonlinear and forcing terms in spectral space, with the pressure.
    fn nonlinear(&self, u: &[Vec<f64>], phi: &[f64], theta: &[f64]) -> Result<(Spectra, Vec<Complex64>)> {
        let grid = self.sp.grid();
        let dim = grid.dim();
        let n = grid.len();
        let full = self.p.variant == InsVariant::Full;
        let phi_f = ScalarField {
            grid: grid.clone(),
            values: phi.to_vec(),
        };
        let w = self.hk.kernel().gradient_of_convolution(&phi_f)?;
        let f = if full {
            Some(self.hk.force_of(self.rho)?)
        } else {
            None
        };
        let grad_u: Vec<Vec<Vec<f64>>> = u.iter().map(|c| self.sp.gradient(c)).collect();
        let mut nl_u = Vec::with_capacity(dim);
        for b in 0..dim {
            let v: Vec<f64> = (0..n)
                .map(|i| {
                    let adv: f64 = (0..dim).map(|a| u[a][i] * grad_u[b][a][i]).sum();
                    let mut s = -adv + phi[i] * w.components[b][i];
                    if let Some(f) = &f {
                        s += self.rho.values[i] * f.components[b][i];
                    }
                    s
                })
                .collect();
            nl_u.push(self.filtered(&v));
        }
        let raw = nl_u.clone();
        let nl_u = project_spectra(self.sp, nl_u);
        let pressure: Vec<Complex64> = (0..n)
            .map(|i| {
                let k = self.sp.derivative_wavevector(i);
                let k2: f64 = (0..dim).map(|a| k[a] * k[a]).sum();
                if k2 == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                // grad p = raw - projected, so p_hat = -i k.(raw) / k^2
                let dot: Complex64 = (0..dim).map(|a| raw[a][i] * k[a]).sum();
                dot * Complex64::new(0.0, -1.0 / k2)
            })
            .collect();
        let grad_phi = self.sp.gradient(phi);
        let adv_phi: Vec<f64> = (0..n).map(|i| -(0..dim).map(|a| u[a][i] * grad_phi[a][i]).sum::<f64>()).collect();
        let nl_theta = if full {
            let f = f.as_ref().expect("full variant");
            let grad_t = self.sp.gradient(theta);
            let c = self.p.c_theta();
            let v: Vec<f64> = (0..n)
                .map(|i| {
                    let adv: f64 = (0..dim).map(|a| u[a][i] * grad_t[a][i]).sum();
                    let work: f64 = (0..dim).map(|a| u[a][i] * f.components[a][i]).sum();
                    -adv + work / c
                })
                .collect();
            self.filtered(&v)
        } else {
            vec![Complex64::new(0.0, 0.0); n]
        };
        Ok((
            Spectra {
                u: nl_u,
                phi: self.filtered(&adv_phi),
                theta: nl_theta,
            },
            pressure,
        ))
    }
}

fn check_divergence(sp: &Spectral, u: &VectorField) -> Result<()> {
    let h = u.grid.min_spacing();
    let tol = 1e-8 * (1.0f64).max(u.max_abs() / h);
    let div = divergence_max(sp, u);
    if div > tol {
        return Err(Error::InvalidParameter(format!(
            "velocity is not divergence free: max |div u| = {div:e}"
        )));
    }
    Ok(())
}

pub fn ins_rhs(state: &InsState, hk: &HydroKernel, params: &InsParams) -> Result<InsRhs> {
    let s = Solver::new(state, hk, *params)?;
    check_divergence(s.sp, &state.u)?;
    let (nl, pressure) = s.nonlinear(&state.u.components, &state.phi.values, &state.theta.values)?;
    let sp = s.sp;
    let n = state.grid.len();
    let with_linear = |nl: &[Complex64], field: &[f64], lin: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let f = sp.forward(field);
        sp.inverse_real((0..n).map(|i| nl[i] + f[i] * lin(i)).collect())
    };
    let grid = &state.grid;
    let wrap = |values| ScalarField {
        grid: grid.clone(),
        values,
    };
    let u = VectorField {
        grid: grid.clone(),
        components: (0..grid.dim())
            .map(|b| with_linear(&nl.u[b], &state.u.components[b], &|i| s.linear_u(i)))
            .collect(),
    };
    let theta = if params.variant == InsVariant::Full {
        with_linear(&nl.theta, &state.theta.values, &|i| s.linear_theta(i))
    } else {
        vec![0.0; n]
    };
    Ok(InsRhs {
        u,
        phi: wrap(with_linear(&nl.phi, &state.phi.values, &|i| s.linear_phi(i))),
        theta: wrap(theta),
        pressure: wrap(sp.inverse_real(pressure)),
    })
}

/// Advective step limit `0.5 h / max|u|` (infinite for a fluid at rest).
pub fn ins_admissible_dt(state: &InsState) -> f64 {
    let umax = state.u.max_abs();
    if umax == 0.0 {
        f64::INFINITY
    } else {
        0.5 * state.grid.min_spacing() / umax
    }
}

/// One integrating-factor RK2 step.
pub fn ins_step(state: &InsState, hk: &HydroKernel, params: &InsParams, dt: f64) -> Result<InsState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let s = Solver::new(state, hk, *params)?;
    check_divergence(s.sp, &state.u)?;
    let admissible = ins_admissible_dt(state);
    if dt > admissible {
        return Err(Error::Stability { dt, admissible });
    }
    let sp = s.sp;
    let n = state.grid.len();
    let dim = state.grid.dim();
    let full = params.variant == InsVariant::Full;
    let e_u: Vec<f64> = (0..n).map(|i| (s.linear_u(i) * dt).exp()).collect();
    let e_phi: Vec<f64> = (0..n).map(|i| (s.linear_phi(i) * dt).exp()).collect();
    let e_theta: Vec<f64> = (0..n).map(|i| (s.linear_theta(i) * dt).exp()).collect();

    let q0 = Spectra {
        u: project_spectra(sp, state.u.components.iter().map(|c| sp.forward(c)).collect()),
        phi: sp.forward(&state.phi.values),
        theta: sp.forward(&state.theta.values),
    };
    let (n0, _) = s.nonlinear(&state.u.components, &state.phi.values, &state.theta.values)?;
    let stage = |q: &[Complex64], nl: &[Complex64], e: &[f64]| -> Vec<Complex64> {
        (0..n).map(|i| (q[i] + nl[i] * dt) * e[i]).collect()
    };
    let q1 = Spectra {
        u: (0..dim).map(|b| stage(&q0.u[b], &n0.u[b], &e_u)).collect(),
        phi: stage(&q0.phi, &n0.phi, &e_phi),
        theta: stage(&q0.theta, &n0.theta, &e_theta),
    };
    let u1: Vec<Vec<f64>> = q1.u.iter().map(|c| sp.inverse_real(c.clone())).collect();
    let phi1 = sp.inverse_real(q1.phi.clone());
    let theta1 = sp.inverse_real(q1.theta.clone());
    let (n1, _) = s.nonlinear(&u1, &phi1, &theta1)?;
    let finish = |q: &[Complex64], a: &[Complex64], b: &[Complex64], e: &[f64]| -> Vec<f64> {
        sp.inverse_real((0..n).map(|i| q[i] * e[i] + (a[i] * e[i] + b[i]) * (0.5 * dt)).collect())
    };
    let grid = &state.grid;
    let wrap = |values| ScalarField {
        grid: grid.clone(),
        values,
    };
    let u = VectorField {
        grid: grid.clone(),
        components: (0..dim).map(|b| finish(&q0.u[b], &n0.u[b], &n1.u[b], &e_u)).collect(),
    };
    let theta = if full {
        wrap(finish(&q0.theta, &n0.theta, &n1.theta, &e_theta))
    } else {
        state.theta.clone()
    };
    Ok(InsState {
        grid: grid.clone(),
        u,
        phi: wrap(finish(&q0.phi, &n0.phi, &n1.phi, &e_phi)),
        theta,
        rho: state.rho.clone(),
        time: state.time + dt,
    })
}
