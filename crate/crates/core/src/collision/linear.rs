//! Linearized collision operators around a fixed Maxwellian and their
//! inversion on the orthogonal complement of the null space.
//!
//! `L h = J(M, h) + J(h, M)` linearizes the total-density operator and
//! `Gamma h = J(h, M)` the concentration operator. Both are symmetric and
//! non-positive in the inner product `<f, g> = int f g / M`.

use nalgebra::{DMatrix, DVector};

use super::boltzmann::CollisionTable;
use super::maxwellian::{collision_invariants, discrete_maxwellian, MaxwellianParams};
use super::quadrature::{CrossSection, SphericalQuadrature};
use super::bgk::check_rate;
use crate::domain::VelocityGrid;
use crate::error::{Error, Result};

/// Largest velocity lattice for which dense operators are assembled
/// (a 4096-node operator takes 128 MiB).
pub const DENSE_NODE_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    L,
    Gamma,
}

/// Orthonormal basis (in the `1/M` inner product) of the null space.
#[derive(Clone, Debug, PartialEq)]
pub struct NullProjector {
    basis: Vec<Vec<f64>>,
    inv_m: Vec<f64>,
}

impl NullProjector {
    fn new(functions: Vec<Vec<f64>>, m: &[f64]) -> Self {
        let inv_m: Vec<f64> = m.iter().map(|x| 1.0 / x).collect();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for mut f in functions {
            // Two passes of Gram-Schmidt for stability.
            for _ in 0..2 {
                for b in &basis {
                    let c = weighted_dot(&f, b, &inv_m);
                    f.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let norm = weighted_dot(&f, &f, &inv_m).sqrt();
            if norm > 0.0 {
                f.iter_mut().for_each(|x| *x /= norm);
                basis.push(f);
            }
        }
        NullProjector { basis, inv_m }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Component of `x` in the null space.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for b in &self.basis {
            let c = weighted_dot(x, b, &self.inv_m);
            out.iter_mut().zip(b).for_each(|(o, y)| *o += c * y);
        }
        out
    }

    /// Component of `x` orthogonal to the null space.
    pub fn complement(&self, x: &[f64]) -> Vec<f64> {
        let p = self.project(x);
        x.iter().zip(p).map(|(a, b)| a - b).collect()
    }
}

fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), z)| x * y * z).sum()
}

#[derive(Clone, Debug)]
pub struct LinearCollisionOperator {
    pub kind: OperatorKind,
    pub matrix: DMatrix<f64>,
    /// Loss frequency `nu(v) = sum_j sum_k B M_j` of the multiplication part.
    pub nu_diag: Vec<f64>,
    pub null_projector: NullProjector,
    pub maxwellian: Vec<f64>,
    pub params: MaxwellianParams,
    pub vgrid: VelocityGrid,
}

impl LinearCollisionOperator {
    fn assemble(kind: OperatorKind, p: &MaxwellianParams, vgrid: &VelocityGrid, matrix: DMatrix<f64>, nu_diag: Vec<f64>, m: Vec<f64>) -> Self {
        let functions = match kind {
            OperatorKind::L => collision_invariants(vgrid)
                .into_iter()
                .map(|chi| chi.iter().zip(&m).map(|(c, x)| c * x).collect())
                .collect(),
            OperatorKind::Gamma => vec![m.clone()],
        };
        LinearCollisionOperator {
            kind,
            matrix,
            nu_diag,
            null_projector: NullProjector::new(functions, &m),
            maxwellian: m,
            params: *p,
            vgrid: vgrid.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.maxwellian.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maxwellian.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(x)).as_slice().to_vec()
    }

    /// `<a, b> = int a b / M dv`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.vgrid.weight() * a.iter().zip(b).zip(&self.maxwellian).map(|((x, y), m)| x * y / m).sum::<f64>()
    }

    /// `M^(-1/2) op M^(1/2)`, symmetric when `op` is self-adjoint in `<.,.>`.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let s: Vec<f64> = self.maxwellian.iter().map(|m| m.sqrt()).collect();
        DMatrix::from_fn(self.len(), self.len(), |r, c| self.matrix[(r, c)] * s[c] / s[r])
    }

    /// `||S - S^T|| / ||S||` in the Frobenius norm.
    pub fn asymmetry(&self) -> f64 {
        let s = self.symmetrized();
        (&s - s.transpose()).norm() / s.norm().max(f64::MIN_POSITIVE)
    }

    /// Extreme eigenvalues `(min, max)` of the symmetrized operator.
    pub fn spectrum_bounds(&self) -> (f64, f64) {
        let s = self.symmetrized();
        let sym = (&s + s.transpose()) * 0.5;
        let ev = sym.symmetric_eigenvalues();
        (ev.min(), ev.max())
    }

    /// Largest `||op b|| / (||op|| ||b||)` over the null basis.
    pub fn null_residual(&self) -> f64 {
        let scale = self.matrix.norm().max(f64::MIN_POSITIVE);
        self.null_projector
            .basis()
            .iter()
            .map(|b| {
                let r = self.apply(b);
                let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                let bn = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                rn / (scale * bn)
            })
            .fold(0.0, f64::max)
    }
}

fn check_size(vgrid: &VelocityGrid) -> Result<()> {
    if vgrid.len() > DENSE_NODE_CAP {
        return Err(Error::TooLarge {
            nodes: vgrid.len(),
            cap: DENSE_NODE_CAP,
        });
    }
    Ok(())
}

fn reference_maxwellian(p: &MaxwellianParams, vgrid: &VelocityGrid) -> Result<Vec<f64>> {
    let m = discrete_maxwellian(p, vgrid)?;
    if m.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::InvalidParameter(
            "reference Maxwellian underflows on the lattice; widen T or shrink v_max".into(),
        ));
    }
    Ok(m)
}

/// Dense linearized operator assembled from the exact collision events.
pub fn build_linearized(
    kind: OperatorKind,
    p: &MaxwellianParams,
    vgrid: &VelocityGrid,
    cs: &CrossSection,
    angles: &SphericalQuadrature,
) -> Result<LinearCollisionOperator> {
    check_size(vgrid)?;
    let table = CollisionTable::new(vgrid, cs, angles)?;
    build_linearized_from_table(kind, p, &table)
}

pub fn build_linearized_from_table(kind: OperatorKind, p: &MaxwellianParams, table: &CollisionTable) -> Result<LinearCollisionOperator> {
    let vgrid = table.vgrid();
    check_size(vgrid)?;
    let m = reference_maxwellian(p, vgrid)?;
    let nv = vgrid.len();
    let mut a = DMatrix::zeros(nv, nv);
    let nu = table.loss_frequency(&m);
    table.for_each_event(|i, j, ai, c, h| {
        match kind {
            OperatorKind::Gamma => {
                a[(i, ai)] += h * m[c];
                a[(i, i)] -= h * m[j];
                a[(ai, ai)] -= h * m[c];
                a[(ai, i)] += h * m[j];
                a[(j, c)] += h * m[ai];
                a[(j, j)] -= h * m[i];
                a[(c, c)] -= h * m[ai];
                a[(c, j)] += h * m[i];
            }
            OperatorKind::L => {
                for (r, s) in [(i, h), (j, h), (ai, -h), (c, -h)] {
                    a[(r, ai)] += s * m[c];
                    a[(r, c)] += s * m[ai];
                    a[(r, i)] -= s * m[j];
                    a[(r, j)] -= s * m[i];
                }
            }
        }
    });
    Ok(LinearCollisionOperator::assemble(kind, p, vgrid, a, nu, m))
}

/// BGK-diagonal operators `L = -nu_c (I - P)` and `Gamma = -nu_c (I - K)`,
/// with `P`, `K` the orthogonal projectors onto the respective null spaces.
pub fn bgk_diagonal_operator(kind: OperatorKind, p: &MaxwellianParams, vgrid: &VelocityGrid, nu_collision: f64) -> Result<LinearCollisionOperator> {
    check_rate(nu_collision)?;
    check_size(vgrid)?;
    let m = reference_maxwellian(p, vgrid)?;
    let nv = vgrid.len();
    let skeleton = LinearCollisionOperator::assemble(kind, p, vgrid, DMatrix::zeros(0, 0), vec![nu_collision; nv], m);
    let mut a = DMatrix::identity(nv, nv) * (-nu_collision);
    // P = sum_b b b^T / M (columns scaled by 1/M).
    for b in skeleton.null_projector.basis() {
        for c in 0..nv {
            let s = nu_collision * b[c] / skeleton.maxwellian[c];
            for r in 0..nv {
                a[(r, c)] += s * b[r];
            }
        }
    }
    Ok(LinearCollisionOperator { matrix: a, ..skeleton })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalSolution {
    pub solution: Vec<f64>,
    /// Relative size of the null-space component removed from the source.
    pub projection_residual: f64,
    /// Final `||op x - s|| / ||s||` in the `1/M` norm.
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `op x = s` for `x` orthogonal to the null space, by conjugate
/// gradients on the symmetrized, sign-flipped operator.
pub fn solve_orthogonal(op: &LinearCollisionOperator, source: &[f64]) -> Result<OrthogonalSolution> {
    let nv = op.len();
    if source.len() != nv {
        return Err(Error::GridMismatch);
    }
    let source_norm = op.inner(source, source).sqrt();
    let s = op.null_projector.complement(source);
    let s_norm = op.inner(&s, &s).sqrt();
    let projection_residual = if source_norm > 0.0 {
        (source_norm.powi(2) - s_norm.powi(2)).max(0.0).sqrt() / source_norm
    } else {
        0.0
    };
    if s_norm == 0.0 {
        return Ok(OrthogonalSolution {
            solution: vec![0.0; nv],
            projection_residual,
            residual: 0.0,
            iterations: 0,
        });
    }
    let sq: Vec<f64> = op.maxwellian.iter().map(|m| m.sqrt()).collect();
    let neg = -op.symmetrized();
    // Euclidean orthonormal null basis of the symmetrized operator.
    let null: Vec<DVector<f64>> = op
        .null_projector
        .basis()
        .iter()
        .map(|b| {
            let v = DVector::from_iterator(nv, b.iter().zip(&sq).map(|(x, q)| x / q));
            let n = v.norm();
            v / n
        })
        .collect();
    let deflate = |v: &mut DVector<f64>| {
        for b in &null {
            let c = b.dot(v);
            v.axpy(-c, b, 1.0);
        }
    };
    let mut rhs = DVector::from_iterator(nv, s.iter().zip(&sq).map(|(x, q)| -x / q));
    deflate(&mut rhs);
    let rhs_norm = rhs.norm();
    let mut y = DVector::zeros(nv);
    let mut r = rhs.clone();
    let mut d = r.clone();
    let mut rr = r.dot(&r);
    let cap = (10 * nv).max(1000);
    let mut iterations = 0;
    while iterations < cap && rr.sqrt() > 1e-13 * rhs_norm {
        let mut q = &neg * &d;
        deflate(&mut q);
        let alpha = rr / d.dot(&q);
        y.axpy(alpha, &d, 1.0);
        r.axpy(-alpha, &q, 1.0);
        let rr_new = r.dot(&r);
        d = &r + (rr_new / rr) * &d;
        rr = rr_new;
        iterations += 1;
    }
    deflate(&mut y);
    let x: Vec<f64> = y.iter().zip(&sq).map(|(v, q)| v * q).collect();
    let ax = op.apply(&x);
    let diff: Vec<f64> = ax.iter().zip(&s).map(|(a, b)| a - b).collect();
    let residual = op.inner(&diff, &diff).sqrt() / s_norm;
    if !(residual < 1e-9) {
        return Err(Error::NotConverged { iterations, residual });
    }
    Ok(OrthogonalSolution {
        solution: x,
        projection_residual,
        residual,
        iterations,
    })
}
