//! Mean-field equilibria of the mixture with the species kernel `U`:
//! uniform phases, critical temperature, coexistence and the interface
//! profile solving `T log n1 + U*n2 = C1`, `T log n2 + U*n1 = C2`.

use nalgebra::{DMatrix, DVector};

use crate::domain::{ScalarField, SpatialGrid};
use crate::error::{Error, Result};
use crate::kac::KacKernel;

/// `T_c = rho U(0) / 2`.
pub fn critical_temperature(rho: f64, kernel: &KacKernel) -> Result<f64> {
    check_positive("rho", rho)?;
    Ok(0.5 * rho * kernel.uhat0)
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter(format!("{name} must be positive, got {x}")));
    }
    Ok(())
}

/// A point of the uniform phase diagram.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint {
    pub t: f64,
    pub rho: f64,
    pub phi_star: f64,
}

/// Nonnegative root of `T log((rho + phi)/(rho - phi)) = U(0) phi`.
///
/// With `phi = rho tanh(s)` this reads `s = (T_c/T) tanh(s)`, solved by
/// bisection on `s`; zero at and above `T_c`.
pub fn coexistence_order_parameter(t: f64, rho: f64, kernel: &KacKernel) -> Result<f64> {
    check_positive("T", t)?;
    let tc = critical_temperature(rho, kernel)?;
    if t >= tc {
        return Ok(0.0);
    }
    let beta = tc / t;
    let g = |s: f64| s - beta * s.tanh();
    // g < 0 just above 0 and g(beta) = beta (1 - tanh beta) > 0.
    let (mut lo, mut hi) = (0.0f64, beta);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    if !(s > 0.0) {
        return Err(Error::NotConverged {
            iterations: 2000,
            residual: g(s).abs(),
        });
    }
    Ok(rho * s.tanh())
}

/// `T log((rho + phi)/(rho - phi)) - U(0) phi`: zero on the coexistence curve.
pub fn coexistence_defect(t: f64, rho: f64, phi: f64, kernel: &KacKernel) -> f64 {
    t * ((rho + phi) / (rho - phi)).ln() - kernel.uhat0 * phi
}

pub fn phase_diagram(rho: f64, kernel: &KacKernel, temperatures: &[f64]) -> Result<Vec<PhasePoint>> {
    temperatures
        .iter()
        .map(|&t| {
            Ok(PhasePoint {
                t,
                rho,
                phi_star: coexistence_order_parameter(t, rho, kernel)?,
            })
        })
        .collect()
}

/// The fixed-point map `n_alpha <- exp((C - U*n_beta)/T)`.
fn fixed_point_map(n1: &ScalarField, n2: &ScalarField, t: f64, c: f64, kernel: &KacKernel) -> Result<(ScalarField, ScalarField)> {
    let u2 = kernel.convolve(n2)?;
    let u1 = kernel.convolve(n1)?;
    Ok((u2.map(|x| ((c - x) / t).exp()), u1.map(|x| ((c - x) / t).exp())))
}

/// Dominant eigenvalue of the fixed-point map linearised at the mixed
/// uniform state, restricted to demixing perturbations `(d, -d)`.
/// Jacobian products use central differences; the eigenvalue comes from
/// power iteration.
pub fn demixing_eigenvalue(t: f64, rho: f64, kernel: &KacKernel) -> Result<f64> {
    check_positive("T", t)?;
    check_positive("rho", rho)?;
    let grid = &kernel.grid;
    let n0 = 0.5 * rho;
    let c = t * n0.ln() + kernel.uhat0 * n0;
    let h = 1e-6 * n0;
    let apply = |d: &[f64]| -> Result<Vec<f64>> {
        let shift = |s: f64| -> (ScalarField, ScalarField) {
            (
                ScalarField {
                    grid: grid.clone(),
                    values: d.iter().map(|x| n0 + s * x).collect(),
                },
                ScalarField {
                    grid: grid.clone(),
                    values: d.iter().map(|x| n0 - s * x).collect(),
                },
            )
        };
        let (a1, b1) = shift(h);
        let (a2, b2) = shift(-h);
        let (p1, q1) = fixed_point_map(&a1, &b1, t, c, kernel)?;
        let (p2, q2) = fixed_point_map(&a2, &b2, t, c, kernel)?;
        Ok((0..d.len())
            .map(|i| 0.25 * ((p1.values[i] - p2.values[i]) - (q1.values[i] - q2.values[i])) / h)
            .collect())
    };
    let len = grid.extent(0);
    let mut v: Vec<f64> = (0..grid.len())
        .map(|i| 1.0 + 0.3 * (2.0 * std::f64::consts::PI * grid.position(i)[0] / len).cos())
        .collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut lambda = 0.0;
    for it in 0..500 {
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let w = apply(&v)?;
        let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        v = w;
        if it > 5 && (next - lambda).abs() <= 1e-13 * next.abs().max(1.0) {
            return Ok(next);
        }
        lambda = next;
    }
    Ok(lambda)
}

/// Largest temperature at which the demixing eigenvalue reaches 1, found
/// by bisection on `T`.
pub fn critical_temperature_numeric(rho: f64, kernel: &KacKernel) -> Result<f64> {
    let guess = critical_temperature(rho, kernel)?.abs().max(1e-12);
    let (mut lo, mut hi) = (guess / 8.0, guess * 8.0);
    if demixing_eigenvalue(lo, rho, kernel)? < 1.0 || demixing_eigenvalue(hi, rho, kernel)? > 1.0 {
        return Err(Error::NotConverged {
            iterations: 0,
            residual: f64::NAN,
        });
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if demixing_eigenvalue(mid, rho, kernel)? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `max_x |T log n1 + U*n2 - C1| + |T log n2 + U*n1 - C2|` with `C_alpha`
/// the field means of the respective expressions.
pub fn stationary_residual(n1: &ScalarField, n2: &ScalarField, t: f64, kernel: &KacKernel) -> Result<f64> {
    check_positive("T", t)?;
    for (name, n) in [("n1", n1), ("n2", n2)] {
        if let Some(x) = n.values.iter().find(|x| !(**x > 0.0)) {
            return Err(Error::Positivity(format!("{name} has non-positive value {x}")));
        }
    }
    let e1 = n1.zip_map(&convolve_offset(n2, kernel)?, |a, b| t * a.ln() + b)?;
    let e2 = n2.zip_map(&convolve_offset(n1, kernel)?, |a, b| t * a.ln() + b)?;
    let (c1, c2) = (offset_mean(&e1.values), offset_mean(&e2.values));
    Ok(e1
        .values
        .iter()
        .zip(&e2.values)
        .map(|(a, b)| (a - c1).abs() + (b - c2).abs())
        .fold(0.0, f64::max))
}

/// `U * n` computed as `U(0) n_0 + U * (n - n_0)`, exact for uniform fields.
fn convolve_offset(n: &ScalarField, kernel: &KacKernel) -> Result<ScalarField> {
    let base = n.values[0];
    let conv = kernel.convolve(&n.map(|x| x - base))?;
    Ok(conv.map(|x| x + kernel.uhat0 * base))
}

fn offset_mean(v: &[f64]) -> f64 {
    let base = v[0];
    base + v.iter().map(|x| x - base).sum::<f64>() / v.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterfaceSeed {
    /// Smooth `tanh` kink at `L/4` and antikink at `3L/4`.
    Tanh,
    /// Sharp steps at the same positions.
    Step,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfaceOptions {
    pub seed: InterfaceSeed,
    /// Seed translation as a fraction of the torus length.
    pub offset: f64,
    pub damping: f64,
    /// Anderson history length; `None` for plain damped iteration.
    pub anderson: Option<usize>,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for InterfaceOptions {
    fn default() -> Self {
        InterfaceOptions {
            seed: InterfaceSeed::Tanh,
            offset: 0.0,
            damping: 0.5,
            anderson: None,
            tolerance: 1e-12,
            max_iterations: 50_000,
        }
    }
}

/// Kink-antikink pair on a periodic line.
#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceProfile {
    pub grid: SpatialGrid,
    pub n1: ScalarField,
    pub n2: ScalarField,
    pub t: f64,
    pub rho: f64,
    /// Coexistence order parameter used to pin the plateaus.
    pub phi_star: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl InterfaceProfile {
    pub fn phi(&self) -> ScalarField {
        self.n1.zip_map(&self.n2, |a, b| a - b).expect("same grid")
    }

    /// Maximum `|phi|` over the profile.
    pub fn amplitude(&self) -> f64 {
        self.phi().max_abs()
    }

    /// Profile reflected about the origin, `n(x) -> n(-x)`.
    pub fn reflected(&self) -> (ScalarField, ScalarField) {
        let n = self.grid.len();
        let refl = |f: &ScalarField| ScalarField {
            grid: f.grid.clone(),
            values: (0..n).map(|i| f.values[(n - i) % n]).collect(),
        };
        (refl(&self.n1), refl(&self.n2))
    }
}

/// Solves the stationary equations for a kink-antikink pair by damped
/// fixed-point iteration with `C1 = C2` pinned by the coexistence plateaus.
/// A run that hits the iteration cap returns the best iterate with
/// `converged = false`.
pub fn interface_profile(
    t: f64,
    rho: f64,
    kernel: &KacKernel,
    grid: &SpatialGrid,
    opts: &InterfaceOptions,
) -> Result<InterfaceProfile> {
    check_positive("T", t)?;
    check_positive("rho", rho)?;
    if grid.dim() != 1 {
        return Err(Error::InvalidGrid("interface profiles need a 1D grid".into()));
    }
    if grid != &kernel.grid {
        return Err(Error::GridMismatch);
    }
    let tc = critical_temperature(rho, kernel)?;
    if t >= tc {
        return Err(Error::InvalidParameter(format!(
            "no interface exists at T = {t} >= T_c = {tc}"
        )));
    }
    let range = kernel.spec.range();
    let len = grid.extent(0);
    if 0.5 * len < 20.0 * range {
        return Err(Error::InvalidGrid(format!(
            "kink separation {} must exceed 20 kernel ranges ({})",
            0.5 * len,
            20.0 * range
        )));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidParameter(format!("damping must lie in (0, 1], got {}", opts.damping)));
    }
    let phi_star = coexistence_order_parameter(t, rho, kernel)?;
    let (n_hi, n_lo) = (0.5 * (rho + phi_star), 0.5 * (rho - phi_star));
    let c = t * n_hi.ln() + kernel.uhat0 * n_lo;

    let width = range.max(grid.spacing(0));
    let seed_phi = ScalarField::from_fn(grid, |x| {
        let z = (x[0] / len - opts.offset).rem_euclid(1.0) * len;
        let (a, b) = (z - 0.25 * len, 0.75 * len - z);
        match opts.seed {
            InterfaceSeed::Tanh => phi_star * (a / width).tanh() * (b / width).tanh(),
            InterfaceSeed::Step => {
                if a > 0.0 && b > 0.0 {
                    phi_star
                } else {
                    -phi_star
                }
            }
        }
    });
    let n = grid.len();
    let mut x: Vec<f64> = seed_phi
        .values
        .iter()
        .map(|p| 0.5 * (rho + p))
        .chain(seed_phi.values.iter().map(|p| 0.5 * (rho - p)))
        .collect();

    let split = |x: &[f64]| -> (ScalarField, ScalarField) {
        (
            ScalarField {
                grid: grid.clone(),
                values: x[..n].to_vec(),
            },
            ScalarField {
                grid: grid.clone(),
                values: x[n..].to_vec(),
            },
        )
    };
    let map = |x: &[f64]| -> Result<Vec<f64>> {
        let (a, b) = split(x);
        let (p, q) = fixed_point_map(&a, &b, t, c, kernel)?;
        Ok(p.values.into_iter().chain(q.values).collect())
    };

    let mut anderson = opts.anderson.filter(|&m| m > 0).map(Anderson::new);
    let mut residual = f64::INFINITY;
    let mut best = (f64::INFINITY, x.clone());
    let mut iterations = 0;
    for it in 0..=opts.max_iterations {
        let (a, b) = split(&x);
        residual = stationary_residual(&a, &b, t, kernel)?;
        if residual < best.0 {
            best = (residual, x.clone());
        }
        iterations = it;
        if residual < opts.tolerance || it == opts.max_iterations {
            break;
        }
        let gx = map(&x)?;
        let damped: Vec<f64> = x.iter().zip(&gx).map(|(a, g)| a + opts.damping * (g - a)).collect();
        x = match anderson.as_mut() {
            Some(acc) => {
                let candidate = acc.update(&x, &damped);
                if candidate.iter().all(|v| *v > 0.0 && v.is_finite()) {
                    candidate
                } else {
                    acc.reset();
                    damped
                }
            }
            None => damped,
        };
    }
    let converged = residual < opts.tolerance;
    if !converged {
        log::warn!("interface iteration stopped at residual {residual:e} after {iterations} iterations");
        residual = best.0;
        x = best.1;
    }
    let (n1, n2) = split(&x);
    Ok(InterfaceProfile {
        grid: grid.clone(),
        n1,
        n2,
        t,
        rho,
        phi_star,
        residual,
        iterations,
        converged,
    })
}

/// Anderson mixing on the damped map `x -> y(x)` with history `m`.
struct Anderson {
    m: usize,
    xs: Vec<Vec<f64>>,
    fs: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(m: usize) -> Self {
        Anderson {
            m,
            xs: Vec::new(),
            fs: Vec::new(),
        }
    }

    fn reset(&mut self) {
        self.xs.clear();
        self.fs.clear();
    }

    fn update(&mut self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let f: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        self.xs.push(y.to_vec());
        self.fs.push(f.clone());
        if self.xs.len() > self.m + 1 {
            self.xs.remove(0);
            self.fs.remove(0);
        }
        let k = self.fs.len() - 1;
        if k == 0 {
            return y.to_vec();
        }
        let len = f.len();
        let df = DMatrix::from_fn(len, k, |i, j| self.fs[j + 1][i] - self.fs[j][i]);
        let rhs = DVector::from_column_slice(&f);
        let Ok(gamma) = df.clone().svd(true, true).solve(&rhs, 1e-12) else {
            return y.to_vec();
        };
        let mut out = y.to_vec();
        for j in 0..k {
            for (i, o) in out.iter_mut().enumerate() {
                *o -= gamma[j] * (self.xs[j + 1][i] - self.xs[j][i]);
            }
        }
        out
    }
}
