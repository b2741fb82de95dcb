//! Angular quadratures and the collision cross section.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

/// Quadrature on the unit sphere (`dim = 3`) or circle (`dim = 2`),
/// invariant under `omega -> -omega`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphericalQuadrature {
    dim: usize,
    directions: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl SphericalQuadrature {
    /// Gauss-Legendre in `cos(theta)` times a uniform even azimuthal rule.
    pub fn product_gauss(n_polar: usize, n_azimuth: usize) -> Result<Self> {
        if n_polar == 0 || n_azimuth == 0 {
            return Err(Error::InvalidParameter("empty angular quadrature".into()));
        }
        if !n_azimuth.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "azimuthal count must be even for omega -> -omega symmetry, got {n_azimuth}"
            )));
        }
        let rule = GaussLegendre::new(NonZeroUsize::new(n_polar).expect("nonzero"));
        let dphi = 2.0 * std::f64::consts::PI / n_azimuth as f64;
        let mut directions = Vec::new();
        let mut weights = Vec::new();
        for &(mu, w) in rule.as_node_weight_pairs() {
            let s = (1.0 - mu * mu).max(0.0).sqrt();
            for k in 0..n_azimuth {
                let phi = (k as f64 + 0.5) * dphi;
                directions.push([s * phi.cos(), s * phi.sin(), mu]);
                weights.push(w * dphi);
            }
        }
        Ok(SphericalQuadrature {
            dim: 3,
            directions,
            weights,
        })
    }

    /// Uniform rule on the circle with an even number of points.
    pub fn circle(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("empty angular quadrature".into()));
        }
        if !n.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "circle rule needs an even count for omega -> -omega symmetry, got {n}"
            )));
        }
        let dphi = 2.0 * std::f64::consts::PI / n as f64;
        let directions = (0..n)
            .map(|k| {
                let phi = (k as f64 + 0.5) * dphi;
                [phi.cos(), phi.sin(), 0.0]
            })
            .collect();
        Ok(SphericalQuadrature {
            dim: 2,
            directions,
            weights: vec![dphi; n],
        })
    }

    /// Default rule for a velocity dimension: `2 x 4` on the sphere, 8 on the circle.
    pub fn default_for(dim_v: usize) -> Result<Self> {
        match dim_v {
            2 => Self::circle(8),
            3 => Self::product_gauss(2, 4),
            _ => Err(Error::InvalidParameter(format!(
                "binary collisions need dim_v 2 or 3, got {dim_v}"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[[f64; 3]] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `b(|g|, omega) = |g|^sigma h(|g_hat . omega|)` with `h` tabulated on a
/// uniform grid of `[0, 1]` and linearly interpolated.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossSection {
    pub sigma: f64,
    pub angular_factor: Vec<f64>,
}

impl CrossSection {
    pub fn new(sigma: f64, angular_factor: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&sigma) {
            return Err(Error::InvalidParameter(format!("sigma must lie in [0, 1], got {sigma}")));
        }
        if angular_factor.is_empty() || angular_factor.iter().any(|h| !(*h >= 0.0) || !h.is_finite()) {
            return Err(Error::InvalidParameter(
                "angular factor must be a nonempty table of finite nonnegative values".into(),
            ));
        }
        Ok(CrossSection {
            sigma,
            angular_factor,
        })
    }

    /// Hard spheres: `sigma = 1`, `h(mu) = mu`.
    pub fn hard_spheres() -> Self {
        CrossSection {
            sigma: 1.0,
            angular_factor: vec![0.0, 1.0],
        }
    }

    /// Angle-independent kernel `|g|^sigma`.
    pub fn isotropic(sigma: f64) -> Result<Self> {
        Self::new(sigma, vec![1.0])
    }

    pub fn h(&self, mu: f64) -> f64 {
        let t = &self.angular_factor;
        if t.len() == 1 {
            return t[0];
        }
        let x = mu.abs().clamp(0.0, 1.0) * (t.len() - 1) as f64;
        let i = (x.floor() as usize).min(t.len() - 2);
        let s = x - i as f64;
        t[i] * (1.0 - s) + t[i + 1] * s
    }

    pub fn kernel(&self, speed: f64, mu: f64) -> f64 {
        speed.powf(self.sigma) * self.h(mu)
    }
}
