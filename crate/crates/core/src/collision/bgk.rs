//! BGK surrogate relaxing both species to the mixture Maxwellian, and the
//! entropy production split for both collision models.

use rayon::prelude::*;

use super::boltzmann::CollisionTable;
use super::maxwellian::{discrete_maxwellian, moments, MaxwellianParams, VACUUM_DENSITY};
use crate::domain::{SpeciesDistributions, VelocityGrid};
use crate::error::{Error, Result};

/// Floor applied inside logarithms.
pub const LOG_FLOOR: f64 = 1e-300;

/// Mixture equilibrium of one cell: species densities and the unit-mass
/// lattice Maxwellian at the mixture velocity and temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct CellEquilibrium {
    pub n_r: f64,
    pub n_b: f64,
    pub params: MaxwellianParams,
    pub unit_maxwellian: Vec<f64>,
}

/// `None` for vacuum cells (or a degenerate, non-positive temperature).
pub fn mixture_equilibrium(f_r: &[f64], f_b: &[f64], vgrid: &VelocityGrid) -> Option<CellEquilibrium> {
    let w = vgrid.weight();
    let n_r = w * f_r.iter().sum::<f64>();
    let n_b = w * f_b.iter().sum::<f64>();
    let total: Vec<f64> = f_r.iter().zip(f_b).map(|(a, b)| a + b).collect();
    let mo = moments(&total, vgrid);
    let (u, t) = (mo.u?, mo.t?);
    if !(t > 0.0) || !(mo.n > VACUUM_DENSITY) {
        return None;
    }
    let params = MaxwellianParams { n: 1.0, u, t };
    let unit_maxwellian = discrete_maxwellian(&params, vgrid).ok()?;
    Some(CellEquilibrium {
        n_r,
        n_b,
        params: MaxwellianParams { n: mo.n, u, t },
        unit_maxwellian,
    })
}

/// `nu_c (n_alpha M_mix - f_alpha)` for one cell.
pub fn bgk_cell(f_r: &[f64], f_b: &[f64], vgrid: &VelocityGrid, nu_collision: f64) -> (Vec<f64>, Vec<f64>) {
    match mixture_equilibrium(f_r, f_b, vgrid) {
        None => (vec![0.0; f_r.len()], vec![0.0; f_b.len()]),
        Some(eq) => {
            let term = |f: &[f64], n: f64| -> Vec<f64> {
                f.iter()
                    .zip(&eq.unit_maxwellian)
                    .map(|(x, m)| nu_collision * (n * m - x))
                    .collect()
            };
            (term(f_r, eq.n_r), term(f_b, eq.n_b))
        }
    }
}

/// BGK collision terms for every cell, in the cell-major layout of the state.
pub fn bgk_relax(state: &SpeciesDistributions, nu_collision: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_rate(nu_collision)?;
    let nv = state.vgrid.len();
    let cells: Vec<(Vec<f64>, Vec<f64>)> = (0..state.grid.len())
        .into_par_iter()
        .map(|c| bgk_cell(state.slice_r(c), state.slice_b(c), &state.vgrid, nu_collision))
        .collect();
    let mut out_r = Vec::with_capacity(nv * cells.len());
    let mut out_b = Vec::with_capacity(nv * cells.len());
    for (r, b) in cells {
        out_r.extend(r);
        out_b.extend(b);
    }
    Ok((out_r, out_b))
}

/// Exact solution of the cell relaxation ODE over a time with
/// `decay = exp(-nu_c t)`: `f <- n M + (f - n M) decay`.
pub fn relax_cell_exact(f_r: &mut [f64], f_b: &mut [f64], vgrid: &VelocityGrid, decay: f64) {
    let Some(eq) = mixture_equilibrium(f_r, f_b, vgrid) else {
        return;
    };
    for (f, n) in [(f_r, eq.n_r), (f_b, eq.n_b)] {
        for (x, m) in f.iter_mut().zip(&eq.unit_maxwellian) {
            let target = n * m;
            *x = target + (*x - target) * decay;
        }
    }
}

pub(crate) fn check_rate(nu_collision: f64) -> Result<()> {
    if !(nu_collision > 0.0) || !nu_collision.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "collision rate must be positive, got {nu_collision}"
        )));
    }
    Ok(())
}

/// Collision model used for entropy bookkeeping.
#[derive(Clone, Copy, Debug)]
pub enum EntropyOperator<'a> {
    ExactJ(&'a CollisionTable),
    Bgk { nu_collision: f64 },
}

/// Entropy production `-int C log(.)` per cell, reported with the sign that
/// makes the productions nonnegative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyProduction {
    pub n1: f64,
    pub n2: f64,
    pub n12: f64,
    pub n21: f64,
    /// The log floor was active somewhere in the cell.
    pub floored: bool,
}

impl EntropyProduction {
    /// `N_12 + N_21`, the only cross combination with a definite sign.
    pub fn cross(&self) -> f64 {
        self.n12 + self.n21
    }

    pub fn total(&self) -> f64 {
        self.n1 + self.n2 + self.cross()
    }
}

fn floored_log(x: f64) -> f64 {
    x.max(LOG_FLOOR).ln()
}

pub fn entropy_production_cell(
    f1: &[f64],
    f2: &[f64],
    vgrid: &VelocityGrid,
    op: EntropyOperator,
) -> Result<EntropyProduction> {
    if let Some(x) = f1.iter().chain(f2).find(|x| !(**x >= 0.0)) {
        return Err(Error::Positivity(format!("entropy needs nonnegative values, found {x}")));
    }
    let floored = f1.iter().chain(f2).any(|&x| x < LOG_FLOOR);
    let w = vgrid.weight();
    let dot = |c: &[f64], g: &dyn Fn(usize) -> f64| -> f64 { -w * c.iter().enumerate().map(|(i, x)| x * g(i)).sum::<f64>() };
    match op {
        EntropyOperator::ExactJ(table) => {
            let t = table.pair_terms(f1, f2)?;
            let l1 = |i: usize| floored_log(f1[i]);
            let l2 = |i: usize| floored_log(f2[i]);
            Ok(EntropyProduction {
                n1: dot(&t.j11, &l1),
                n2: dot(&t.j22, &l2),
                n12: dot(&t.j12, &l1),
                n21: dot(&t.j21, &l2),
                floored,
            })
        }
        EntropyOperator::Bgk { nu_collision } => {
            check_rate(nu_collision)?;
            let Some(eq) = mixture_equilibrium(f1, f2, vgrid) else {
                return Ok(EntropyProduction {
                    n1: 0.0,
                    n2: 0.0,
                    n12: 0.0,
                    n21: 0.0,
                    floored,
                });
            };
            let (c1, c2) = bgk_cell(f1, f2, vgrid, nu_collision);
            let m = &eq.unit_maxwellian;
            let eq1 = |i: usize| floored_log(eq.n_r * m[i]);
            let eq2 = |i: usize| floored_log(eq.n_b * m[i]);
            Ok(EntropyProduction {
                n1: dot(&c1, &|i| floored_log(f1[i]) - eq1(i)),
                n2: dot(&c2, &|i| floored_log(f2[i]) - eq2(i)),
                n12: dot(&c1, &eq1),
                n21: dot(&c2, &eq2),
                floored,
            })
        }
    }
}

/// Per-cell entropy production of a state.
pub fn entropy_production(state: &SpeciesDistributions, op: EntropyOperator) -> Result<Vec<EntropyProduction>> {
    (0..state.grid.len())
        .map(|c| entropy_production_cell(state.slice_r(c), state.slice_b(c), &state.vgrid, op))
        .collect()
}
