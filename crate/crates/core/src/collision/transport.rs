//! Shear viscosity, heat conductivity and concentration diffusivity.

use super::bgk::check_rate;
use super::linear::{bgk_diagonal_operator, build_linearized_from_table, solve_orthogonal, LinearCollisionOperator, OperatorKind};
use super::maxwellian::{exceeds_truncation, MaxwellianParams};
use super::quadrature::{CrossSection, SphericalQuadrature};
use super::boltzmann::CollisionTable;
use crate::domain::VelocityGrid;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransportMethod {
    BgkAnalytic,
    NumericOperator,
}

/// Collision model whose linearization defines the numeric coefficients.
#[derive(Clone, Copy, Debug)]
pub enum CollisionModel<'a> {
    Exact {
        cs: &'a CrossSection,
        angles: &'a SphericalQuadrature,
    },
    BgkDiagonal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportCoefficients {
    pub nu_visc: f64,
    pub kappa: f64,
    pub d_diff: f64,
    pub method: TransportMethod,
}

impl TransportCoefficients {
    /// Closed forms of the BGK surrogate in `dim_v` velocity dimensions:
    /// `nu = nT/nu_c`, `kappa = (d+2)/2 nT/nu_c`, `D = nT/nu_c`.
    pub fn bgk_analytic(p: &MaxwellianParams, nu_collision: f64, dim_v: usize) -> Result<Self> {
        p.validate()?;
        check_rate(nu_collision)?;
        if !(1..=3).contains(&dim_v) {
            return Err(Error::InvalidParameter(format!("dim_v must be 1, 2 or 3, got {dim_v}")));
        }
        let base = p.n * p.t / nu_collision;
        Self::checked(base, 0.5 * (dim_v as f64 + 2.0) * base, base, TransportMethod::BgkAnalytic)
    }

    /// Constant coefficients supplied directly.
    pub fn constant(nu_visc: f64, kappa: f64, d_diff: f64) -> Result<Self> {
        Self::checked(nu_visc, kappa, d_diff, TransportMethod::BgkAnalytic)
    }

    fn checked(nu_visc: f64, kappa: f64, d_diff: f64, method: TransportMethod) -> Result<Self> {
        for (name, v) in [("viscosity", nu_visc), ("heat conductivity", kappa), ("diffusivity", d_diff)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(TransportCoefficients {
            nu_visc,
            kappa,
            d_diff,
            method,
        })
    }
}

fn relative_velocity(op: &LinearCollisionOperator) -> Vec<[f64; 3]> {
    let u = op.params.u;
    op.vgrid
        .nodes()
        .iter()
        .map(|v| [v[0] - u[0], v[1] - u[1], v[2] - u[2]])
        .collect()
}

/// `-int A g` with `g` solving `op g = M A`.
fn response(op: &LinearCollisionOperator, a: &[f64]) -> Result<f64> {
    let source: Vec<f64> = a.iter().zip(&op.maxwellian).map(|(x, m)| x * m).collect();
    let g = solve_orthogonal(op, &source)?.solution;
    Ok(-op.vgrid.weight() * a.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>())
}

fn require(op: &LinearCollisionOperator, kind: OperatorKind) -> Result<()> {
    if op.kind != kind {
        return Err(Error::InvalidParameter(format!("expected the {kind:?} operator, got {:?}", op.kind)));
    }
    Ok(())
}

/// `D = -int v_x Gamma^{-1}(v_x M)` (peculiar velocity).
pub fn diffusion_coefficient(gamma: &LinearCollisionOperator) -> Result<f64> {
    require(gamma, OperatorKind::Gamma)?;
    let a: Vec<f64> = relative_velocity(gamma).iter().map(|c| c[0]).collect();
    response(gamma, &a)
}

/// `nu = -T int A_xy L^{-1}(M A_xy)` with `A_xy = c_x c_y / T`.
pub fn shear_viscosity(l: &LinearCollisionOperator) -> Result<f64> {
    require(l, OperatorKind::L)?;
    if l.vgrid.dim() < 2 {
        return Err(Error::InvalidParameter("shear viscosity needs dim_v >= 2".into()));
    }
    let t = l.params.t;
    let a: Vec<f64> = relative_velocity(l).iter().map(|c| c[0] * c[1] / t).collect();
    Ok(t * response(l, &a)?)
}

/// `kappa = -T^2 int B_x L^{-1}(M B_x)` with
/// `B_x = (|c|^2/2 - (d+2)T/2) c_x / T^2`.
pub fn heat_conductivity(l: &LinearCollisionOperator) -> Result<f64> {
    require(l, OperatorKind::L)?;
    let t = l.params.t;
    let d = l.vgrid.dim();
    let a: Vec<f64> = relative_velocity(l)
        .iter()
        .map(|c| {
            let c2: f64 = (0..d).map(|k| c[k] * c[k]).sum();
            (0.5 * c2 - 0.5 * (d as f64 + 2.0) * t) * c[0] / (t * t)
        })
        .collect();
    Ok(t * t * response(l, &a)?)
}

pub fn transport_coefficients(
    method: TransportMethod,
    p: &MaxwellianParams,
    nu_collision: f64,
    numeric: Option<(&VelocityGrid, CollisionModel)>,
) -> Result<TransportCoefficients> {
    match method {
        TransportMethod::BgkAnalytic => {
            let dim_v = numeric.map(|(g, _)| g.dim()).unwrap_or(3);
            TransportCoefficients::bgk_analytic(p, nu_collision, dim_v)
        }
        TransportMethod::NumericOperator => {
            let (vgrid, model) = numeric.ok_or_else(|| {
                Error::InvalidParameter("numeric transport needs a velocity grid and collision model".into())
            })?;
            let (l, gamma) = match model {
                CollisionModel::BgkDiagonal => (
                    bgk_diagonal_operator(OperatorKind::L, p, vgrid, nu_collision)?,
                    bgk_diagonal_operator(OperatorKind::Gamma, p, vgrid, nu_collision)?,
                ),
                CollisionModel::Exact { cs, angles } => {
                    let table = CollisionTable::new(vgrid, cs, angles)?;
                    (
                        build_linearized_from_table(OperatorKind::L, p, &table)?,
                        build_linearized_from_table(OperatorKind::Gamma, p, &table)?,
                    )
                }
            };
            if let Some(fraction) = exceeds_truncation(&l.maxwellian, vgrid) {
                return Err(Error::Truncation { fraction });
            }
            TransportCoefficients::checked(
                shear_viscosity(&l)?,
                heat_conductivity(&l)?,
                diffusion_coefficient(&gamma)?,
                TransportMethod::NumericOperator,
            )
        }
    }
}
