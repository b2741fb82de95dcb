//! Compressible Vlasov-Euler / Vlasov-Navier-Stokes and incompressible
//! limit solvers.
//!
//! All hydrodynamic equations use the halved potential `U_h = U / 2` of
//! [`HydroKernel`] and `K = -grad U_h`. The velocity has `dof` components
//! (the number of kinetic velocity dimensions), which may exceed the
//! spatial dimension; derivatives act along spatial axes only. Internal
//! energy per particle is `dof T / 2`.

mod fv;
mod ins;

use crate::collision::TransportCoefficients;
use crate::domain::{ScalarField, SpatialGrid, VectorField};
use crate::error::{Error, Result};
use crate::kac::KacKernel;
use crate::spectral::Spectral;

pub use fv::*;
pub use ins::*;

/// The hydrodynamic kernel `U_h = U / 2` built from the species kernel.
#[derive(Clone, Debug)]
pub struct HydroKernel {
    kernel: KacKernel,
}

impl HydroKernel {
    pub fn from_species(species: &KacKernel) -> Self {
        HydroKernel {
            kernel: species.hydrodynamic(),
        }
    }

    pub fn kernel(&self) -> &KacKernel {
        &self.kernel
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.kernel.grid
    }

    pub fn spectral(&self) -> &Spectral {
        self.kernel.spectral()
    }

    /// `K * g = -grad(U_h * g)`.
    pub fn force_of(&self, g: &ScalarField) -> Result<VectorField> {
        Ok(self.kernel.gradient_of_convolution(g)?.scaled(-1.0))
    }

    /// Hydrodynamic multiplier `U_h(k)` at a lattice mode.
    pub fn multiplier_for_mode(&self, mode: [i64; 2]) -> f64 {
        self.kernel.multiplier_for_mode(mode)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HydroState {
    pub grid: SpatialGrid,
    pub rho: ScalarField,
    pub u: VectorField,
    pub t: ScalarField,
    pub phi: ScalarField,
    /// Velocity components (kinetic degrees of freedom per particle).
    pub dof: usize,
}

impl HydroState {
    pub fn new(rho: ScalarField, u: VectorField, t: ScalarField, phi: ScalarField) -> Result<Self> {
        let grid = rho.grid.clone();
        if u.grid != grid || t.grid != grid || phi.grid != grid {
            return Err(Error::GridMismatch);
        }
        let dof = u.ncomp();
        if dof < grid.dim() || dof > 3 {
            return Err(Error::InvalidParameter(format!(
                "velocity needs between {} and 3 components, got {dof}",
                grid.dim()
            )));
        }
        let s = HydroState {
            grid,
            rho,
            u,
            t,
            phi,
            dof,
        };
        s.check_positivity()?;
        Ok(s)
    }

    pub fn uniform(grid: &SpatialGrid, rho: f64, u: &[f64], t: f64, phi: f64) -> Result<Self> {
        let mut vel = VectorField::zeros(grid, u.len());
        for (c, &x) in vel.components.iter_mut().zip(u) {
            c.iter_mut().for_each(|v| *v = x);
        }
        Self::new(
            ScalarField::constant(grid, rho),
            vel,
            ScalarField::constant(grid, t),
            ScalarField::constant(grid, phi),
        )
    }

    pub fn check_positivity(&self) -> Result<()> {
        for i in 0..self.grid.len() {
            let (r, t, p) = (self.rho.values[i], self.t.values[i], self.phi.values[i]);
            if !(r > 0.0) || !(t > 0.0) || !(p.abs() <= r) || !p.is_finite() {
                return Err(Error::Positivity(format!(
                    "cell {i}: rho = {r}, T = {t}, phi = {p} (need rho, T > 0 and |phi| <= rho)"
                )));
            }
        }
        Ok(())
    }

    pub fn pressure(&self) -> ScalarField {
        self.rho.zip_map(&self.t, |r, t| r * t).expect("same grid")
    }

    /// Ratio of specific heats `(dof + 2) / dof`.
    pub fn gamma(&self) -> f64 {
        (self.dof as f64 + 2.0) / self.dof as f64
    }

    /// `(int rho, int phi, int rho u, int E)` with `E = rho |u|^2 / 2 + dof rho T / 2`.
    pub fn totals(&self) -> HydroTotals {
        let vol = self.grid.cell_volume();
        let mut momentum = vec![0.0; self.dof];
        let mut energy = 0.0;
        for i in 0..self.grid.len() {
            let r = self.rho.values[i];
            let mut u2 = 0.0;
            for (b, m) in momentum.iter_mut().enumerate() {
                let ub = self.u.components[b][i];
                *m += vol * r * ub;
                u2 += ub * ub;
            }
            energy += vol * (0.5 * r * u2 + 0.5 * self.dof as f64 * r * self.t.values[i]);
        }
        HydroTotals {
            mass: self.rho.integral(),
            phi: self.phi.integral(),
            momentum,
            energy,
        }
    }

    /// Copy with every field translated by `by` cells along `axis`.
    pub fn shifted(&self, axis: usize, by: isize) -> Self {
        let shift_vec = |v: &VectorField| VectorField {
            grid: v.grid.clone(),
            components: v
                .components
                .iter()
                .map(|c| {
                    ScalarField {
                        grid: v.grid.clone(),
                        values: c.clone(),
                    }
                    .shifted(axis, by)
                    .values
                })
                .collect(),
        };
        HydroState {
            grid: self.grid.clone(),
            rho: self.rho.shifted(axis, by),
            u: shift_vec(&self.u),
            t: self.t.shifted(axis, by),
            phi: self.phi.shifted(axis, by),
            dof: self.dof,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HydroTotals {
    pub mass: f64,
    pub phi: f64,
    pub momentum: Vec<f64>,
    pub energy: f64,
}

/// Concentration flux `Q = grad(phi/rho) + (rho^2 - phi^2)/(rho^2 T) K*phi`,
/// with both contributions kept separately.
#[derive(Clone, Debug, PartialEq)]
pub struct FluxQ {
    pub q: VectorField,
    pub gradient_part: VectorField,
    pub vlasov_part: VectorField,
}

fn check_grid(state: &HydroState, hk: &HydroKernel) -> Result<()> {
    if &state.grid != hk.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

pub fn compute_q(state: &HydroState, hk: &HydroKernel) -> Result<FluxQ> {
    check_grid(state, hk)?;
    state.check_positivity()?;
    let sp = hk.spectral();
    let ratio: Vec<f64> = state.phi.values.iter().zip(&state.rho.values).map(|(p, r)| p / r).collect();
    let grad = sp.gradient(&ratio);
    let kphi = hk.force_of(&state.phi)?;
    let factor: Vec<f64> = (0..state.grid.len())
        .map(|i| {
            let (r, p, t) = (state.rho.values[i], state.phi.values[i], state.t.values[i]);
            (r * r - p * p) / (r * r * t)
        })
        .collect();
    let vl: Vec<Vec<f64>> = kphi
        .components
        .iter()
        .map(|c| c.iter().zip(&factor).map(|(a, b)| a * b).collect())
        .collect();
    let q = grad
        .iter()
        .zip(&vl)
        .map(|(g, v)| g.iter().zip(v).map(|(a, b)| a + b).collect())
        .collect();
    let wrap = |components| VectorField {
        grid: state.grid.clone(),
        components,
    };
    Ok(FluxQ {
        q: wrap(q),
        gradient_part: wrap(grad),
        vlasov_part: wrap(vl),
    })
}

/// Time derivatives of the primitive fields `(rho, phi, u, T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HydroRhs {
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub t: Vec<f64>,
}

impl HydroRhs {
    pub fn max_abs(&self) -> f64 {
        self.rho
            .iter()
            .chain(&self.phi)
            .chain(self.u.iter().flatten())
            .chain(&self.t)
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

fn require_coeffs(coeffs: Option<&TransportCoefficients>, eps: f64) -> Result<Option<TransportCoefficients>> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("eps must be nonnegative, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(None);
    }
    coeffs
        .copied()
        .map(Some)
        .ok_or_else(|| Error::InvalidParameter("transport coefficients are required when eps > 0".into()))
}

/// Pseudo-spectral evaluation of the VNS system in primitive form:
///
/// ```text
/// d_t rho + div(rho u) = 0
/// d_t phi + div(phi u) = eps div(D Q)
/// rho D_t u + grad P = rho K*rho - phi K*phi - eps div sigma
/// (dof/2) rho D_t T + P div u = eps div(kappa grad T) - eps sigma:grad u - eps (K*phi).D Q
/// ```
///
/// with `sigma = -nu (grad u + grad u^T - (2/dof) I div u)`. `eps = 0`
/// gives the Vlasov-Euler system and needs no coefficients.
pub fn vns_rhs(state: &HydroState, hk: &HydroKernel, coeffs: Option<&TransportCoefficients>, eps: f64) -> Result<HydroRhs> {
    check_grid(state, hk)?;
    state.check_positivity()?;
    let coeffs = require_coeffs(coeffs, eps)?;
    let sp = hk.spectral();
    let dim = state.grid.dim();
    let dof = state.dof;
    let len = state.grid.len();
    let rho = &state.rho.values;
    let phi = &state.phi.values;
    let t = &state.t.values;
    let u = &state.u.components;

    let div_of = |flux: &[Vec<f64>]| -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (a, f) in flux.iter().enumerate().take(dim) {
            let d = sp.derivative(f, a);
            out.iter_mut().zip(d).for_each(|(o, x)| *o += x);
        }
        out
    };
    let times = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x * y).collect() };
    // grad_u[a][b] = d_a u_b
    let grad_u: Vec<Vec<Vec<f64>>> = (0..dim).map(|a| (0..dof).map(|b| sp.derivative(&u[b], a)).collect()).collect();
    let div_u: Vec<f64> = (0..len).map(|i| (0..dim).map(|a| grad_u[a][a][i]).sum()).collect();
    let grad_t = sp.gradient(t);
    let pressure = times(rho, t);
    let grad_p = sp.gradient(&pressure);

    let mass_flux: Vec<Vec<f64>> = (0..dim).map(|a| times(rho, &u[a])).collect();
    let mut d_rho = div_of(&mass_flux);
    d_rho.iter_mut().for_each(|x| *x = -*x);
    let phi_flux: Vec<Vec<f64>> = (0..dim).map(|a| times(phi, &u[a])).collect();
    let mut d_phi = div_of(&phi_flux);
    d_phi.iter_mut().for_each(|x| *x = -*x);

    let k_rho = hk.force_of(&state.rho)?;
    let k_phi = hk.force_of(&state.phi)?;
    let mut d_u: Vec<Vec<f64>> = (0..dof)
        .map(|b| {
            (0..len)
                .map(|i| {
                    let adv: f64 = (0..dim).map(|a| u[a][i] * grad_u[a][b][i]).sum();
                    let mut force = 0.0;
                    let mut gp = 0.0;
                    if b < dim {
                        force = rho[i] * k_rho.components[b][i] - phi[i] * k_phi.components[b][i];
                        gp = grad_p[b][i];
                    }
                    -adv + (force - gp) / rho[i]
                })
                .collect()
        })
        .collect();
    let cv = 0.5 * dof as f64;
    let mut d_t: Vec<f64> = (0..len)
        .map(|i| {
            let adv: f64 = (0..dim).map(|a| u[a][i] * grad_t[a][i]).sum();
            -adv - pressure[i] * div_u[i] / (cv * rho[i])
        })
        .collect();

    if let Some(c) = coeffs {
        let fq = compute_q(state, hk)?;
        let dq: Vec<Vec<f64>> = fq.q.components.iter().map(|q| q.iter().map(|x| c.d_diff * x).collect()).collect();
        let div_dq = div_of(&dq);
        d_phi.iter_mut().zip(&div_dq).for_each(|(o, x)| *o += eps * x);

        // sigma[a][b] for spatial a and all b.
        let sigma = |a: usize, b: usize, i: usize| -> f64 {
            let mut s = grad_u[a][b][i];
            if b < dim {
                s += grad_u[b][a][i];
            }
            if a == b {
                s -= 2.0 / dof as f64 * div_u[i];
            }
            -c.nu_visc * s
        };
        for (b, du) in d_u.iter_mut().enumerate() {
            let flux: Vec<Vec<f64>> = (0..dim).map(|a| (0..len).map(|i| sigma(a, b, i)).collect()).collect();
            let div_sigma = div_of(&flux);
            du.iter_mut().zip(&div_sigma).zip(rho).for_each(|((o, x), r)| *o -= eps * x / r);
        }
        let heat: Vec<Vec<f64>> = grad_t.iter().map(|g| g.iter().map(|x| c.kappa * x).collect()).collect();
        let div_heat = div_of(&heat);
        for i in 0..len {
            let mut dissipation = 0.0;
            for a in 0..dim {
                for b in 0..dof {
                    dissipation += sigma(a, b, i) * grad_u[a][b][i];
                }
            }
            let work: f64 = (0..dim).map(|a| k_phi.components[a][i] * c.d_diff * fq.q.components[a][i]).sum();
            d_t[i] += eps * (div_heat[i] - dissipation - work) / (cv * rho[i]);
        }
    }
    Ok(HydroRhs {
        rho: d_rho,
        phi: d_phi,
        u: d_u,
        t: d_t,
    })
}
