//! Real-data FFT helpers on periodic grids (1D or 2D, x fastest).

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::domain::SpatialGrid;

#[derive(Clone)]
pub struct Spectral {
    grid: SpatialGrid,
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: &SpatialGrid) -> Self {
        let mut planner = FftPlanner::new();
        let nx = grid.cells(0);
        let ny = grid.cells(1);
        Spectral {
            grid: grid.clone(),
            fwd: [planner.plan_fft_forward(nx), planner.plan_fft_forward(ny)],
            inv: [planner.plan_fft_inverse(nx), planner.plan_fft_inverse(ny)],
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 2]) {
        let nx = self.grid.cells(0);
        let ny = self.grid.cells(1);
        for row in data.chunks_mut(nx) {
            plans[0].process(row);
        }
        if ny > 1 {
            let mut col = vec![Complex64::new(0.0, 0.0); ny];
            for ix in 0..nx {
                for iy in 0..ny {
                    col[iy] = data[ix + nx * iy];
                }
                plans[1].process(&mut col);
                for iy in 0..ny {
                    data[ix + nx * iy] = col[iy];
                }
            }
        }
    }

    /// Unnormalised forward transform.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut data, &self.fwd);
        data
    }

    /// Inverse transform (normalised), keeping the real part.
    pub fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spec, &self.inv);
        let norm = 1.0 / self.grid.len() as f64;
        spec.iter().map(|c| c.re * norm).collect()
    }

    fn mode(n: usize, i: usize) -> i64 {
        if i < n.div_ceil(2) {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// Wavevector of spectral index `idx`.
    pub fn wavevector(&self, idx: usize) -> [f64; 2] {
        let [ix, iy] = self.grid.unravel(idx);
        let mut k = [0.0; 2];
        for (axis, i) in [ix, iy].into_iter().enumerate().take(self.grid.dim()) {
            let n = self.grid.cells(axis);
            k[axis] = 2.0 * std::f64::consts::PI * Self::mode(n, i) as f64 / self.grid.extent(axis);
        }
        k
    }

    /// Wavevector used for first derivatives: the Nyquist component is
    /// zeroed so derivatives of real data stay real and odd.
    pub fn derivative_wavevector(&self, idx: usize) -> [f64; 2] {
        let [ix, iy] = self.grid.unravel(idx);
        let mut k = self.wavevector(idx);
        for (axis, i) in [ix, iy].into_iter().enumerate().take(self.grid.dim()) {
            let n = self.grid.cells(axis);
            if n.is_multiple_of(2) && i == n / 2 {
                k[axis] = 0.0;
            }
        }
        k
    }

    pub fn k_squared(&self, idx: usize) -> f64 {
        let k = self.wavevector(idx);
        k[0] * k[0] + k[1] * k[1]
    }

    /// Spectral derivative of `spec` along `axis`, back in physical space.
    pub fn derivative_of_spectrum(&self, spec: &[Complex64], axis: usize) -> Vec<f64> {
        let out: Vec<Complex64> = spec
            .iter()
            .enumerate()
            .map(|(i, &c)| c * Complex64::new(0.0, self.derivative_wavevector(i)[axis]))
            .collect();
        self.inverse_real(out)
    }

    pub fn derivative(&self, values: &[f64], axis: usize) -> Vec<f64> {
        self.derivative_of_spectrum(&self.forward(values), axis)
    }

    /// Gradient components along every spatial axis.
    pub fn gradient(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let spec = self.forward(values);
        (0..self.grid.dim())
            .map(|a| self.derivative_of_spectrum(&spec, a))
            .collect()
    }

    pub fn laplacian(&self, values: &[f64]) -> Vec<f64> {
        let spec = self.forward(values);
        let out = spec
            .iter()
            .enumerate()
            .map(|(i, &c)| c * (-self.k_squared(i)))
            .collect();
        self.inverse_real(out)
    }
}
