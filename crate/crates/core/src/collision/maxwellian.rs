//! Maxwellians and velocity moments on the lattice.

use nalgebra::{DMatrix, DVector};

use crate::domain::{VelocityGrid, TRUNCATION_WARN_FRACTION};
use crate::error::{Error, Result};

/// Density threshold below which bulk velocity and temperature are undefined.
pub const VACUUM_DENSITY: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaxwellianParams {
    pub n: f64,
    pub u: [f64; 3],
    pub t: f64,
}

impl MaxwellianParams {
    pub fn new(n: f64, u: [f64; 3], t: f64) -> Result<Self> {
        let p = MaxwellianParams { n, u, t };
        p.validate()?;
        Ok(p)
    }

    /// Unit density, zero drift, unit temperature.
    pub fn standard() -> Self {
        MaxwellianParams {
            n: 1.0,
            u: [0.0; 3],
            t: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n >= 0.0) || !self.n.is_finite() {
            return Err(Error::InvalidParameter(format!("density must be nonnegative, got {}", self.n)));
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::InvalidParameter(format!("temperature must be positive, got {}", self.t)));
        }
        Ok(())
    }

    /// Largest drift component that keeps three thermal widths inside the box.
    pub fn is_truncated(&self, vgrid: &VelocityGrid) -> bool {
        let limit = vgrid.v_max() - 3.0 * self.t.sqrt();
        (0..vgrid.dim()).any(|a| self.u[a].abs() > limit)
    }
}

/// Sampled Maxwellian `n (2 pi T)^(-d/2) exp(-|v-u|^2 / 2T)`.
pub fn maxwellian(p: &MaxwellianParams, vgrid: &VelocityGrid) -> Result<Vec<f64>> {
    p.validate()?;
    if p.is_truncated(vgrid) {
        log::warn!(
            "drift {:?} is within three thermal widths of v_max = {}",
            &p.u[..vgrid.dim()],
            vgrid.v_max()
        );
    }
    let d = vgrid.dim();
    let norm = p.n * (2.0 * std::f64::consts::PI * p.t).powf(-(d as f64) / 2.0);
    Ok(vgrid
        .nodes()
        .iter()
        .map(|v| norm * (-dist2(v, &p.u, d) / (2.0 * p.t)).exp())
        .collect())
}

/// Relative mass error of the sampled Maxwellian plus its boundary mass fraction.
pub fn truncation_error(p: &MaxwellianParams, vgrid: &VelocityGrid) -> Result<f64> {
    let m = maxwellian(p, vgrid)?;
    if p.n == 0.0 {
        return Ok(0.0);
    }
    let mass = vgrid.weight() * m.iter().sum::<f64>();
    Ok((mass / p.n - 1.0).abs() + vgrid.boundary_mass_fraction(&m))
}

/// Lattice Maxwellian `exp(a + b.v + c|v|^2)` whose discrete moments equal
/// `(n, n u, n(|u|^2 + d T))` to machine precision. Falls back to the sampled
/// Maxwellian, rescaled to the right mass, when Newton fails (badly resolved
/// temperature).
pub fn discrete_maxwellian(p: &MaxwellianParams, vgrid: &VelocityGrid) -> Result<Vec<f64>> {
    p.validate()?;
    if p.n == 0.0 {
        return Ok(vec![0.0; vgrid.len()]);
    }
    match newton_maxwellian(p, vgrid) {
        Some(m) => Ok(m),
        None => {
            log::warn!("discrete Maxwellian Newton failed for T = {}; using sampled values", p.t);
            let mut m = maxwellian(p, vgrid)?;
            let mass = vgrid.weight() * m.iter().sum::<f64>();
            if mass > 0.0 {
                m.iter_mut().for_each(|x| *x *= p.n / mass);
            }
            Ok(m)
        }
    }
}

fn newton_maxwellian(p: &MaxwellianParams, vgrid: &VelocityGrid) -> Option<Vec<f64>> {
    let d = vgrid.dim();
    let k = d + 2;
    let w = vgrid.weight();
    let nodes = vgrid.nodes();
    let basis = |v: &[f64; 3], out: &mut [f64]| {
        out[0] = 1.0;
        out[1..=d].copy_from_slice(&v[..d]);
        out[k - 1] = (0..d).map(|a| v[a] * v[a]).sum();
    };
    // Unit mass; scaled to n at the end.
    let u2: f64 = (0..d).map(|a| p.u[a] * p.u[a]).sum();
    let mut target = DVector::zeros(k);
    target[0] = 1.0;
    for a in 0..d {
        target[1 + a] = p.u[a];
    }
    target[k - 1] = u2 + d as f64 * p.t;

    let mut theta = DVector::zeros(k);
    theta[0] = -u2 / (2.0 * p.t) - 0.5 * d as f64 * (2.0 * std::f64::consts::PI * p.t).ln();
    for a in 0..d {
        theta[1 + a] = p.u[a] / p.t;
    }
    theta[k - 1] = -1.0 / (2.0 * p.t);

    let scale = target.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let eval = |theta: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>, Vec<f64>) {
        let mut phi = vec![0.0; k];
        let mut f = DVector::zeros(k);
        let mut jac = DMatrix::zeros(k, k);
        let mut values = Vec::with_capacity(nodes.len());
        for v in nodes {
            basis(v, &mut phi);
            let e: f64 = (0..k).map(|i| theta[i] * phi[i]).sum::<f64>().exp() * w;
            values.push(e / w);
            for i in 0..k {
                f[i] += e * phi[i];
                for j in 0..=i {
                    jac[(i, j)] += e * phi[i] * phi[j];
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                jac[(j, i)] = jac[(i, j)];
            }
        }
        (f - &target, jac, values)
    };

    let (mut res, mut jac, mut values) = eval(&theta);
    let mut norm = res.amax();
    for _ in 0..60 {
        if norm <= 1e-15 * scale {
            break;
        }
        let step = jac.clone().lu().solve(&res)?;
        let mut lambda = 1.0;
        loop {
            let trial = &theta - lambda * &step;
            let (r, j, v) = eval(&trial);
            let rn = r.amax();
            if rn.is_finite() && (rn < norm || lambda < 1e-3) {
                theta = trial;
                res = r;
                jac = j;
                values = v;
                norm = rn;
                break;
            }
            lambda *= 0.5;
        }
    }
    if !(norm <= 1e-12 * scale) {
        return None;
    }
    values.iter_mut().for_each(|x| *x *= p.n);
    Some(values)
}

/// Velocity moments. `u` and `t` are `None` below [`VACUUM_DENSITY`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub n: f64,
    pub u: Option<[f64; 3]>,
    pub t: Option<f64>,
}

impl Moments {
    /// Parameters of the Maxwellian with these moments (vacuum maps to zero density).
    pub fn params(&self) -> MaxwellianParams {
        MaxwellianParams {
            n: self.n.max(0.0),
            u: self.u.unwrap_or([0.0; 3]),
            t: self.t.unwrap_or(1.0),
        }
    }
}

pub fn moments(slice: &[f64], vgrid: &VelocityGrid) -> Moments {
    let d = vgrid.dim();
    let w = vgrid.weight();
    let mut n = 0.0;
    let mut mom = [0.0; 3];
    let mut e = 0.0;
    for (f, v) in slice.iter().zip(vgrid.nodes()) {
        n += f;
        for a in 0..d {
            mom[a] += f * v[a];
        }
        e += f * (0..d).map(|a| v[a] * v[a]).sum::<f64>();
    }
    n *= w;
    e *= w;
    if !(n > VACUUM_DENSITY) {
        return Moments { n, u: None, t: None };
    }
    let mut u = [0.0; 3];
    for a in 0..d {
        u[a] = w * mom[a] / n;
    }
    let u2: f64 = u.iter().map(|x| x * x).sum();
    let t = (e / n - u2) / d as f64;
    Moments {
        n,
        u: Some(u),
        t: Some(t),
    }
}

/// Collision invariants `1, v_1..v_d, |v|^2` evaluated at every node.
pub fn collision_invariants(vgrid: &VelocityGrid) -> Vec<Vec<f64>> {
    let d = vgrid.dim();
    let mut out = vec![vec![1.0; vgrid.len()]];
    for a in 0..d {
        out.push(vgrid.nodes().iter().map(|v| v[a]).collect());
    }
    out.push(
        vgrid
            .nodes()
            .iter()
            .map(|v| (0..d).map(|a| v[a] * v[a]).sum())
            .collect(),
    );
    out
}

/// Whether `m` puts more than the warning fraction of its mass on boundary nodes.
pub fn exceeds_truncation(m: &[f64], vgrid: &VelocityGrid) -> Option<f64> {
    let frac = vgrid.boundary_mass_fraction(m);
    (frac > TRUNCATION_WARN_FRACTION).then_some(frac)
}

pub(crate) fn dist2(v: &[f64; 3], u: &[f64; 3], d: usize) -> f64 {
    (0..d).map(|a| (v[a] - u[a]) * (v[a] - u[a])).sum()
}
