//! Long-range Kac potential: tabulation on the torus, spectral convolution
//! and the self-consistent species forces.
//!
//! The tabulated potential `U` is the pair potential between unlike species:
//! red particles feel `F_r = -grad(U * n_b)` and blue particles
//! `F_b = -grad(U * n_r)`. The hydrodynamic equations are written with the
//! halved potential `U / 2` (see [`KacKernel::hydrodynamic`]), which is what
//! makes the mixture force `n_r F_r + n_b F_b` equal `rho K*rho - phi K*phi`.

use num_complex::Complex64;

use crate::domain::{ScalarField, SpatialGrid, VectorField};
use crate::error::{Error, Result};
use crate::spectral::Spectral;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PotentialShape {
    /// Indicator of the ball of the given radius.
    Tophat { radius: f64 },
    /// `exp(1 - 1 / (1 - (r/R)^2))` inside the ball, zero outside (peak 1).
    SmoothBump { radius: f64 },
    /// `exp(-r^2 / (2 w^2))`.
    Gaussian { width: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialSpec {
    pub shape: PotentialShape,
    pub amplitude: f64,
}

impl PotentialSpec {
    pub fn tophat(radius: f64, amplitude: f64) -> Self {
        PotentialSpec {
            shape: PotentialShape::Tophat { radius },
            amplitude,
        }
    }

    pub fn smooth_bump(radius: f64, amplitude: f64) -> Self {
        PotentialSpec {
            shape: PotentialShape::SmoothBump { radius },
            amplitude,
        }
    }

    pub fn gaussian(width: f64, amplitude: f64) -> Self {
        PotentialSpec {
            shape: PotentialShape::Gaussian { width },
            amplitude,
        }
    }

    /// Support radius (or width for the Gaussian).
    pub fn range(&self) -> f64 {
        match self.shape {
            PotentialShape::Tophat { radius } | PotentialShape::SmoothBump { radius } => radius,
            PotentialShape::Gaussian { width } => width,
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        let a = self.amplitude;
        match self.shape {
            PotentialShape::Tophat { radius } => {
                if r <= radius {
                    a
                } else {
                    0.0
                }
            }
            PotentialShape::SmoothBump { radius } => {
                let s = r / radius;
                if s < 1.0 {
                    a * (1.0 - 1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
            PotentialShape::Gaussian { width } => a * (-r * r / (2.0 * width * width)).exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "potential amplitude must be nonnegative, got {}",
                self.amplitude
            )));
        }
        if !(self.range() > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "potential range must be positive, got {}",
                self.range()
            )));
        }
        Ok(())
    }
}

/// Tabulated potential together with its Fourier multipliers.
#[derive(Clone, Debug)]
pub struct KacKernel {
    pub spec: PotentialSpec,
    pub grid: SpatialGrid,
    /// `U` at the minimum-image displacement of every cell from the origin.
    pub real_table: Vec<f64>,
    /// Discrete transform of `real_table` scaled by the cell volume.
    pub fourier_multipliers: Vec<f64>,
    pub uhat0: f64,
    spectral: Spectral,
}

/// Subsamples per axis used to cell-average discontinuous kernels in 2D.
const TOPHAT_SUBSAMPLES: usize = 32;

impl KacKernel {
    pub fn tabulate(spec: PotentialSpec, grid: &SpatialGrid) -> Result<Self> {
        spec.validate()?;
        let limit = 0.5 * grid.min_extent();
        if spec.range() >= limit {
            return Err(Error::KernelTooWide {
                support: spec.range(),
                limit,
            });
        }
        let real_table: Vec<f64> = (0..grid.len())
            .map(|idx| tabulated_value(&spec, grid, idx))
            .collect();
        Self::from_table(spec, grid, real_table)
    }

    fn from_table(spec: PotentialSpec, grid: &SpatialGrid, real_table: Vec<f64>) -> Result<Self> {
        let spectral = Spectral::new(grid);
        let vol = grid.cell_volume();
        let fourier_multipliers: Vec<f64> = spectral
            .forward(&real_table)
            .iter()
            .map(|c| c.re * vol)
            .collect();
        let uhat0 = fourier_multipliers[0];
        Ok(KacKernel {
            spec,
            grid: grid.clone(),
            real_table,
            fourier_multipliers,
            uhat0,
            spectral,
        })
    }

    /// Same kernel with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut spec = self.spec;
        spec.amplitude *= factor;
        let table = self.real_table.iter().map(|x| x * factor).collect();
        Self::from_table(spec, &self.grid, table).expect("scaling keeps a valid kernel")
    }

    /// The potential entering the hydrodynamic equations, `U / 2`.
    pub fn hydrodynamic(&self) -> Self {
        self.scaled(0.5)
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// Multiplier for the lattice mode `(mx, my)` (negative modes allowed).
    pub fn multiplier_for_mode(&self, mode: [i64; 2]) -> f64 {
        let g = &self.grid;
        let ix = mode[0].rem_euclid(g.cells(0) as i64) as isize;
        let iy = mode[1].rem_euclid(g.cells(1) as i64) as isize;
        self.fourier_multipliers[g.index(ix, iy)]
    }

    /// Maximum relative residual of inverse(forward(real_table)).
    pub fn round_trip_residual(&self) -> f64 {
        let vol = self.grid.cell_volume();
        let spec: Vec<Complex64> = self
            .fourier_multipliers
            .iter()
            .map(|&m| Complex64::new(m / vol, 0.0))
            .collect();
        let back = self.spectral.inverse_real(spec);
        let scale = self.real_table.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        back.iter()
            .zip(&self.real_table)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / scale
    }

    fn check(&self, g: &ScalarField) -> Result<()> {
        if g.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Periodic convolution `U * g`.
    pub fn convolve(&self, g: &ScalarField) -> Result<ScalarField> {
        self.check(g)?;
        let spec: Vec<Complex64> = self
            .spectral
            .forward(&g.values)
            .into_iter()
            .zip(&self.fourier_multipliers)
            .map(|(c, &m)| c * m)
            .collect();
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self.spectral.inverse_real(spec),
        })
    }

    /// `grad(U * g)` with the multiplier `i k U(k)` applied in Fourier space.
    pub fn gradient_of_convolution(&self, g: &ScalarField) -> Result<VectorField> {
        self.check(g)?;
        let spec: Vec<Complex64> = self
            .spectral
            .forward(&g.values)
            .into_iter()
            .zip(&self.fourier_multipliers)
            .map(|(c, &m)| c * m)
            .collect();
        let components = (0..self.grid.dim())
            .map(|a| self.spectral.derivative_of_spectrum(&spec, a))
            .collect();
        Ok(VectorField {
            grid: self.grid.clone(),
            components,
        })
    }

    /// Species forces `F_r = -grad(U*n_b)`, `F_b = -grad(U*n_r)` together
    /// with `F = F_r + F_b` and `W = F_r - F_b`.
    pub fn forces(&self, n_r: &ScalarField, n_b: &ScalarField) -> Result<Forces> {
        let f_r = self.gradient_of_convolution(n_b)?.scaled(-1.0);
        let f_b = self.gradient_of_convolution(n_r)?.scaled(-1.0);
        let combine = |s: f64| VectorField {
            grid: self.grid.clone(),
            components: f_r
                .components
                .iter()
                .zip(&f_b.components)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect())
                .collect(),
        };
        Ok(Forces {
            total: combine(1.0),
            difference: combine(-1.0),
            f_r,
            f_b,
        })
    }

    /// Interaction energy `int n_r (U * n_b) dx`.
    pub fn interaction_energy(&self, n_r: &ScalarField, n_b: &ScalarField) -> Result<f64> {
        let c = self.convolve(n_b)?;
        Ok(self.grid.cell_volume() * n_r.values.iter().zip(&c.values).map(|(a, b)| a * b).sum::<f64>())
    }
}

#[derive(Clone, Debug)]
pub struct Forces {
    /// `F = F_r + F_b`.
    pub total: VectorField,
    /// `W = F_r - F_b`.
    pub difference: VectorField,
    pub f_r: VectorField,
    pub f_b: VectorField,
}

fn tabulated_value(spec: &PotentialSpec, grid: &SpatialGrid, idx: usize) -> f64 {
    let d = grid.displacement(idx);
    let PotentialShape::Tophat { radius } = spec.shape else {
        return spec.value((d[0] * d[0] + d[1] * d[1]).sqrt());
    };
    let hx = grid.spacing(0);
    if grid.dim() == 1 {
        let lo = (d[0] - 0.5 * hx).max(-radius);
        let hi = (d[0] + 0.5 * hx).min(radius);
        return spec.amplitude * ((hi - lo).max(0.0) / hx);
    }
    let hy = grid.spacing(1);
    let corner = |sx: f64, sy: f64| ((d[0] + sx * 0.5 * hx).powi(2) + (d[1] + sy * 0.5 * hy).powi(2)).sqrt();
    let dists = [corner(-1., -1.), corner(-1., 1.), corner(1., -1.), corner(1., 1.)];
    let near = {
        let cx = d[0].abs() - 0.5 * hx;
        let cy = d[1].abs() - 0.5 * hy;
        (cx.max(0.0).powi(2) + cy.max(0.0).powi(2)).sqrt()
    };
    let far = dists.iter().copied().fold(0.0, f64::max);
    if far <= radius {
        return spec.amplitude;
    }
    if near > radius {
        return 0.0;
    }
    let m = TOPHAT_SUBSAMPLES;
    let mut inside = 0usize;
    for a in 0..m {
        for b in 0..m {
            let x = d[0] + ((a as f64 + 0.5) / m as f64 - 0.5) * hx;
            let y = d[1] + ((b as f64 + 0.5) / m as f64 - 0.5) * hy;
            if x * x + y * y <= radius * radius {
                inside += 1;
            }
        }
    }
    spec.amplitude * inside as f64 / (m * m) as f64
}
