//! Periodic spatial grids, truncated velocity lattices and the field
//! containers shared by every solver.
//!
//! Spatial cells sit at `x_i = i * h` on a torus of side `extent`. Velocity
//! nodes are cell midpoints of `[-v_max, v_max]^dim_v`, so the lattice is
//! symmetric under `v -> -v` and every node weight equals `dv^dim_v`.

use crate::error::{Error, Result};

/// Boundary-node mass fraction above which truncation warnings are raised.
pub const TRUNCATION_WARN_FRACTION: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub extent: Vec<f64>,
    pub cells: Vec<usize>,
    pub dim_v: usize,
    pub v_max: f64,
    pub nodes_per_axis: usize,
}

impl GridSpec {
    pub fn one_dim(extent: f64, cells: usize, dim_v: usize, v_max: f64, nodes: usize) -> Self {
        GridSpec {
            extent: vec![extent],
            cells: vec![cells],
            dim_v,
            v_max,
            nodes_per_axis: nodes,
        }
    }
}

/// Builds the spatial torus and velocity lattice described by `spec`.
pub fn make_grids(spec: &GridSpec) -> Result<(SpatialGrid, VelocityGrid)> {
    let grid = SpatialGrid::new(&spec.extent, &spec.cells)?;
    let vgrid = VelocityGrid::new(spec.dim_v, spec.v_max, spec.nodes_per_axis)?;
    Ok((grid, vgrid))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGrid {
    dim: usize,
    extent: [f64; 2],
    cells: [usize; 2],
}

impl SpatialGrid {
    pub fn new(extent: &[f64], cells: &[usize]) -> Result<Self> {
        let dim = extent.len();
        if !(1..=2).contains(&dim) || cells.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "spatial dimension must be 1 or 2 with one cell count per axis (got {} extents, {} counts)",
                extent.len(),
                cells.len()
            )));
        }
        let mut e = [1.0; 2];
        let mut c = [1usize; 2];
        for axis in 0..dim {
            if !(extent[axis] > 0.0) || !extent[axis].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "extent on axis {axis} must be positive, got {}",
                    extent[axis]
                )));
            }
            if cells[axis] < 4 {
                return Err(Error::InvalidGrid(format!(
                    "need at least 4 cells on axis {axis}, got {}",
                    cells[axis]
                )));
            }
            e[axis] = extent[axis];
            c[axis] = cells[axis];
        }
        Ok(SpatialGrid {
            dim,
            extent: e,
            cells: c,
        })
    }

    pub fn line(extent: f64, cells: usize) -> Result<Self> {
        Self::new(&[extent], &[cells])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extent[axis]
    }

    pub fn cells(&self, axis: usize) -> usize {
        self.cells[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.cells[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn min_extent(&self) -> f64 {
        (0..self.dim).map(|a| self.extent(a)).fold(f64::INFINITY, f64::min)
    }

    /// Number of cells in the whole grid.
    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.extent(a)).product()
    }

    /// Linear index of the cell `(ix, iy)`; indices wrap around the torus.
    pub fn index(&self, ix: isize, iy: isize) -> usize {
        let nx = self.cells[0] as isize;
        let ny = self.cells[1] as isize;
        (ix.rem_euclid(nx) + nx * iy.rem_euclid(ny)) as usize
    }

    pub fn unravel(&self, idx: usize) -> [usize; 2] {
        [idx % self.cells[0], idx / self.cells[0]]
    }

    pub fn position(&self, idx: usize) -> [f64; 2] {
        let [ix, iy] = self.unravel(idx);
        [ix as f64 * self.spacing(0), iy as f64 * self.spacing(1)]
    }

    /// Minimum-image displacement of cell `idx` from the origin cell.
    pub fn displacement(&self, idx: usize) -> [f64; 2] {
        let [ix, iy] = self.unravel(idx);
        let mut d = [0.0; 2];
        for (axis, i) in [ix, iy].into_iter().enumerate().take(self.dim) {
            let n = self.cells[axis];
            let signed = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            d[axis] = signed * self.spacing(axis);
        }
        d
    }
}

/// Midpoint lattice on `[-v_max, v_max]^dim_v`.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityGrid {
    dim_v: usize,
    v_max: f64,
    n: usize,
    dv: f64,
    nodes: Vec<[f64; 3]>,
}

impl VelocityGrid {
    pub fn new(dim_v: usize, v_max: f64, nodes_per_axis: usize) -> Result<Self> {
        if !(1..=3).contains(&dim_v) {
            return Err(Error::InvalidGrid(format!(
                "velocity dimension must be 1, 2 or 3, got {dim_v}"
            )));
        }
        if !(v_max > 0.0) || !v_max.is_finite() {
            return Err(Error::InvalidGrid(format!("v_max must be positive, got {v_max}")));
        }
        if !nodes_per_axis.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "velocity node count must be even to keep v -> -v symmetry, got {nodes_per_axis}"
            )));
        }
        if nodes_per_axis < 8 {
            return Err(Error::InvalidGrid(format!(
                "need at least 8 velocity nodes per axis, got {nodes_per_axis}"
            )));
        }
        let n = nodes_per_axis;
        let dv = 2.0 * v_max / n as f64;
        let axis: Vec<f64> = (0..n).map(|i| -v_max + (i as f64 + 0.5) * dv).collect();
        let shape = shape_for(dim_v, n);
        let mut nodes = Vec::with_capacity(shape.iter().product());
        for iz in 0..shape[2] {
            for iy in 0..shape[1] {
                for ix in 0..shape[0] {
                    let mut v = [0.0; 3];
                    v[0] = axis[ix];
                    if dim_v > 1 {
                        v[1] = axis[iy];
                    }
                    if dim_v > 2 {
                        v[2] = axis[iz];
                    }
                    nodes.push(v);
                }
            }
        }
        Ok(VelocityGrid {
            dim_v,
            v_max,
            n,
            dv,
            nodes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim_v
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.dv
    }

    /// Quadrature weight of every node.
    pub fn weight(&self) -> f64 {
        self.dv.powi(self.dim_v as i32)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> [f64; 3] {
        self.nodes[i]
    }

    /// Node counts along (x, y, z); unused axes have length 1.
    pub fn shape(&self) -> [usize; 3] {
        shape_for(self.dim_v, self.n)
    }

    pub fn axis_values(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| -self.v_max + (i as f64 + 0.5) * self.dv)
            .collect()
    }

    pub fn linear(&self, idx: [usize; 3]) -> usize {
        let s = self.shape();
        idx[0] + s[0] * (idx[1] + s[1] * idx[2])
    }

    pub fn unravel(&self, i: usize) -> [usize; 3] {
        let s = self.shape();
        [i % s[0], (i / s[0]) % s[1], i / (s[0] * s[1])]
    }

    /// Index of the node `-v`.
    pub fn mirror(&self, i: usize) -> usize {
        let s = self.shape();
        let m = self.unravel(i);
        self.linear([s[0] - 1 - m[0], s[1] - 1 - m[1], s[2] - 1 - m[2]])
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        let m = self.unravel(i);
        (0..self.dim_v).any(|a| m[a] == 0 || m[a] == self.n - 1)
    }

    /// Fraction of the (absolute) mass of `slice` carried by boundary nodes.
    pub fn boundary_mass_fraction(&self, slice: &[f64]) -> f64 {
        let total: f64 = slice.iter().map(|x| x.abs()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let edge: f64 = slice
            .iter()
            .enumerate()
            .filter(|(i, _)| self.is_boundary(*i))
            .map(|(_, x)| x.abs())
            .sum();
        edge / total
    }

    /// Weighted sum `sum_i w * g(v_i)`.
    pub fn integrate<F: Fn(&[f64; 3]) -> f64>(&self, g: F) -> f64 {
        self.weight() * self.nodes.iter().map(g).sum::<f64>()
    }
}

fn shape_for(dim_v: usize, n: usize) -> [usize; 3] {
    match dim_v {
        1 => [n, 1, 1],
        2 => [n, n, 1],
        _ => [n, n, n],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: SpatialGrid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &SpatialGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &SpatialGrid, c: f64) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn<F: Fn([f64; 2]) -> f64>(grid: &SpatialGrid, f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_values(grid: &SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(ScalarField {
            grid: grid.clone(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &ScalarField, f: F) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Periodic translation by `by` cells along `axis`: `out[i] = self[i - by]`.
    pub fn shifted(&self, axis: usize, by: isize) -> Self {
        let g = &self.grid;
        let mut values = vec![0.0; g.len()];
        for (idx, out) in values.iter_mut().enumerate() {
            let [ix, iy] = g.unravel(idx);
            let (sx, sy) = if axis == 0 { (by, 0) } else { (0, by) };
            *out = self.values[g.index(ix as isize - sx, iy as isize - sy)];
        }
        ScalarField {
            grid: g.clone(),
            values,
        }
    }
}

/// Vector field with an arbitrary number of components (not tied to the
/// spatial dimension, so 1D flows may carry transverse velocities).
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub grid: SpatialGrid,
    pub components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: &SpatialGrid, ncomp: usize) -> Self {
        VectorField {
            grid: grid.clone(),
            components: vec![vec![0.0; grid.len()]; ncomp],
        }
    }

    pub fn ncomp(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, c: usize) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.components[c].clone(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        VectorField {
            grid: self.grid.clone(),
            components: self
                .components
                .iter()
                .map(|c| c.iter().map(|x| x * s).collect())
                .collect(),
        }
    }
}

/// Phase-space densities of the two species, stored cell-major:
/// `f[cell * vgrid.len() + node]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeciesDistributions {
    pub grid: SpatialGrid,
    pub vgrid: VelocityGrid,
    pub f_r: Vec<f64>,
    pub f_b: Vec<f64>,
}

impl SpeciesDistributions {
    pub fn zeros(grid: &SpatialGrid, vgrid: &VelocityGrid) -> Self {
        let n = grid.len() * vgrid.len();
        SpeciesDistributions {
            grid: grid.clone(),
            vgrid: vgrid.clone(),
            f_r: vec![0.0; n],
            f_b: vec![0.0; n],
        }
    }

    pub fn new(grid: &SpatialGrid, vgrid: &VelocityGrid, f_r: Vec<f64>, f_b: Vec<f64>) -> Result<Self> {
        let n = grid.len() * vgrid.len();
        if f_r.len() != n || f_b.len() != n {
            return Err(Error::GridMismatch);
        }
        let d = SpeciesDistributions {
            grid: grid.clone(),
            vgrid: vgrid.clone(),
            f_r,
            f_b,
        };
        d.check_nonnegative()?;
        Ok(d)
    }

    pub fn check_nonnegative(&self) -> Result<()> {
        let bad = self
            .f_r
            .iter()
            .chain(&self.f_b)
            .find(|x| !(**x >= 0.0));
        match bad {
            Some(x) => Err(Error::Positivity(format!("distribution value {x}"))),
            None => Ok(()),
        }
    }

    pub fn slice_r(&self, cell: usize) -> &[f64] {
        let nv = self.vgrid.len();
        &self.f_r[cell * nv..(cell + 1) * nv]
    }

    pub fn slice_b(&self, cell: usize) -> &[f64] {
        let nv = self.vgrid.len();
        &self.f_b[cell * nv..(cell + 1) * nv]
    }

    fn density_of(&self, f: &[f64]) -> ScalarField {
        let nv = self.vgrid.len();
        let w = self.vgrid.weight();
        let values = f.chunks(nv).map(|c| w * c.iter().sum::<f64>()).collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn density_r(&self) -> ScalarField {
        self.density_of(&self.f_r)
    }

    pub fn density_b(&self) -> ScalarField {
        self.density_of(&self.f_b)
    }

    /// Colour-blind density `f = (f_r + f_b) / 2`.
    pub fn f_mean(&self) -> Vec<f64> {
        self.f_r.iter().zip(&self.f_b).map(|(r, b)| 0.5 * (r + b)).collect()
    }

    /// Colour difference `phi = (f_r - f_b) / 2`.
    pub fn phi(&self) -> Vec<f64> {
        self.f_r.iter().zip(&self.f_b).map(|(r, b)| 0.5 * (r - b)).collect()
    }

    pub fn min_value(&self) -> f64 {
        self.f_r
            .iter()
            .chain(&self.f_b)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn swapped(&self) -> Self {
        SpeciesDistributions {
            grid: self.grid.clone(),
            vgrid: self.vgrid.clone(),
            f_r: self.f_b.clone(),
            f_b: self.f_r.clone(),
        }
    }
}
