//! Conservative discrete-velocity quadrature of the binary collision operator.
//!
//! For a lattice pair `(v_i, v_j)` with integer relative index `m = i - j`,
//! each quadrature direction reflects `m` and the result is snapped to the
//! nearest lattice point `m'` on the same energy shell (`|m'| = |m|`, same
//! componentwise parity). The post-collision pair `(a, c)` then satisfies
//! `a + c = i + j` and `|a|^2 + |c|^2 = |i|^2 + |j|^2` exactly, so mass,
//! momentum and energy are conserved by every event and `J(M, M) = 0` holds
//! for every lattice Maxwellian. Each event moves half its weight from the
//! pre- to the post-collision nodes and is applied together with its
//! `v <-> v_*` mirror, which keeps the discrete operator symmetric and the
//! entropy production of every event nonnegative.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::maxwellian::collision_invariants;
use super::quadrature::{CrossSection, SphericalQuadrature};
use crate::domain::VelocityGrid;
use crate::error::{Error, Result};

/// Number of fixed work chunks; independent of the thread count so that
/// the summation order, and hence the result, never changes.
const WORK_CHUNKS: usize = 32;

#[derive(Clone, Copy, Debug)]
struct EventClass {
    off_j: isize,
    off_a: isize,
    off_c: isize,
    lo: [usize; 3],
    hi: [usize; 3],
    /// Half the event weight.
    half_weight: f64,
}

impl EventClass {
    fn count(&self) -> usize {
        (0..3).map(|a| self.hi[a] - self.lo[a]).product()
    }
}

/// Precomputed collision events for one lattice, cross section and angular rule.
#[derive(Clone, Debug)]
pub struct CollisionTable {
    vgrid: VelocityGrid,
    classes: Vec<EventClass>,
    chunks: Vec<std::ops::Range<usize>>,
    invariants: Vec<Vec<f64>>,
    cs: CrossSection,
    angles: SphericalQuadrature,
}

/// The four species collision terms of a two-species state.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTerms {
    pub j11: Vec<f64>,
    pub j22: Vec<f64>,
    pub j12: Vec<f64>,
    pub j21: Vec<f64>,
}

impl CollisionTable {
    pub fn new(vgrid: &VelocityGrid, cs: &CrossSection, angles: &SphericalQuadrature) -> Result<Self> {
        let d = vgrid.dim();
        if d < 2 {
            return Err(Error::InvalidParameter(
                "binary collisions need a velocity lattice of dimension 2 or 3".into(),
            ));
        }
        if angles.is_empty() {
            return Err(Error::InvalidParameter("empty angular quadrature".into()));
        }
        if angles.dim() != d {
            return Err(Error::InvalidParameter(format!(
                "angular rule lives on S^{} but the lattice has dimension {d}",
                angles.dim() - 1
            )));
        }
        let n = vgrid.nodes_per_axis();
        if n < 8 {
            return Err(Error::InvalidGrid(format!("need at least 8 nodes per axis, got {n}")));
        }
        let shells = build_shells(n as i32, d);
        let span = n as i32 - 1;
        let mut canonical = Vec::new();
        for_each_vector(span, d, |m| {
            if is_canonical(&m) {
                canonical.push(m);
            }
        });

        let shape = vgrid.shape();
        let lin = |m: [i32; 3]| -> isize {
            m[0] as isize + shape[0] as isize * (m[1] as isize + shape[1] as isize * m[2] as isize)
        };
        let dv = vgrid.spacing();
        let base_weight = vgrid.weight();
        let classes: Vec<EventClass> = canonical
            .par_iter()
            .flat_map_iter(|&m| {
                let targets = snap_targets(&m, d, &shells, cs, angles, dv, base_weight);
                let mut out = Vec::new();
                for (mp, w) in targets {
                    if mp == m || w <= 0.0 {
                        continue;
                    }
                    let mut d1 = [0i32; 3];
                    let mut d2 = [0i32; 3];
                    for a in 0..3 {
                        d1[a] = (mp[a] - m[a]) / 2;
                        d2[a] = (mp[a] + m[a]) / 2;
                    }
                    let mut lo = [0usize; 3];
                    let mut hi = [1usize; 3];
                    let mut empty = false;
                    for a in 0..d {
                        let l = 0.max(m[a]).max(-d1[a]).max(d2[a]);
                        let h = (n as i32).min(n as i32 + m[a]).min(n as i32 - d1[a]).min(n as i32 + d2[a]);
                        if l >= h {
                            empty = true;
                            break;
                        }
                        lo[a] = l as usize;
                        hi[a] = h as usize;
                    }
                    if empty {
                        continue;
                    }
                    out.push(EventClass {
                        off_j: -lin(m),
                        off_a: lin(d1),
                        off_c: -lin(d2),
                        lo,
                        hi,
                        half_weight: 0.5 * w,
                    });
                }
                out
            })
            .collect();
        let chunks = partition(&classes);
        Ok(CollisionTable {
            vgrid: vgrid.clone(),
            classes,
            chunks,
            invariants: collision_invariants(vgrid),
            cs: cs.clone(),
            angles: angles.clone(),
        })
    }

    pub fn vgrid(&self) -> &VelocityGrid {
        &self.vgrid
    }

    /// Loss frequency `nu_i = w sum_j sum_k b(|v_i - v_j|, omega_k) w_k M_j`.
    pub fn loss_frequency(&self, m: &[f64]) -> Vec<f64> {
        let d = self.vgrid.dim();
        let nodes = self.vgrid.nodes();
        let w = self.vgrid.weight();
        nodes
            .par_iter()
            .map(|vi| {
                let mut acc = 0.0;
                for (vj, mj) in nodes.iter().zip(m) {
                    let g: [f64; 3] = [vi[0] - vj[0], vi[1] - vj[1], vi[2] - vj[2]];
                    let speed = (0..d).map(|a| g[a] * g[a]).sum::<f64>().sqrt();
                    if speed == 0.0 {
                        continue;
                    }
                    let ang: f64 = self
                        .angles
                        .directions()
                        .iter()
                        .zip(self.angles.weights())
                        .map(|(om, wk)| wk * self.cs.h((0..d).map(|a| g[a] * om[a]).sum::<f64>() / speed))
                        .sum();
                    acc += speed.powf(self.cs.sigma) * ang * mj;
                }
                w * acc
            })
            .collect()
    }

    /// Total number of lattice events `(i, j) -> (a, c)`.
    pub fn event_count(&self) -> usize {
        self.classes.iter().map(EventClass::count).sum()
    }

    /// Visits every event as `(i, j, a, c, half_weight)`.
    pub fn for_each_event<F: FnMut(usize, usize, usize, usize, f64)>(&self, mut visit: F) {
        let s = self.vgrid.shape();
        for cl in &self.classes {
            for iz in cl.lo[2]..cl.hi[2] {
                for iy in cl.lo[1]..cl.hi[1] {
                    let row = s[0] * (iy + s[1] * iz);
                    for ix in cl.lo[0]..cl.hi[0] {
                        let i = row + ix;
                        let j = (i as isize + cl.off_j) as usize;
                        let a = (i as isize + cl.off_a) as usize;
                        let c = (i as isize + cl.off_c) as usize;
                        visit(i, j, a, c, cl.half_weight);
                    }
                }
            }
        }
    }

    fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.vgrid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Uncorrected `J(f, g)`.
    pub fn apply_raw(&self, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        self.check(f)?;
        self.check(g)?;
        let parts = self.sweep(1, |cl, rows, out| {
            let (mut d1, mut d2) = scratch(cl);
            for (i0, _) in rows {
                deltas(f, g, cl, i0, &mut d1, &mut d2);
                scatter(&mut out[0], cl, i0, &d1, &d2);
            }
        });
        Ok(parts.into_iter().next().expect("one output"))
    }

    /// `J(f, g)` with the conservative correction: all invariants when
    /// `f` and `g` coincide, mass of `f` otherwise.
    pub fn apply(&self, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.apply_raw(f, g)?;
        let same = std::ptr::eq(f, g) || f == g;
        let k = if same { self.invariants.len() } else { 1 };
        let constraints: Vec<(Vec<bool>, usize)> = (0..k).map(|a| (vec![true], a)).collect();
        correct(&mut [&mut out], &constraints, &self.invariants);
        Ok(out)
    }

    /// `J(f1,f1)`, `J(f2,f2)`, `J(f1,f2)`, `J(f2,f1)` in one sweep, corrected so
    /// that each self term conserves all invariants, each cross term its mass
    /// and the cross sum momentum and energy.
    pub fn pair_terms(&self, f1: &[f64], f2: &[f64]) -> Result<PairTerms> {
        let mut t = self.pair_terms_raw(f1, f2)?;
        let k = self.invariants.len();
        let full: Vec<(Vec<bool>, usize)> = (0..k).map(|a| (vec![true], a)).collect();
        correct(&mut [&mut t.j11], &full, &self.invariants);
        correct(&mut [&mut t.j22], &full, &self.invariants);
        let mut cross = vec![(vec![true, false], 0), (vec![false, true], 0)];
        cross.extend((1..k).map(|a| (vec![true, true], a)));
        correct(&mut [&mut t.j12, &mut t.j21], &cross, &self.invariants);
        Ok(t)
    }

    pub fn pair_terms_raw(&self, f1: &[f64], f2: &[f64]) -> Result<PairTerms> {
        self.check(f1)?;
        self.check(f2)?;
        let nv = self.vgrid.len();
        let shape = self.vgrid.shape();
        // Interleaved accumulators: one [J11, J22, J12, J21] quadruple per node.
        let partials: Vec<Vec<[f64; 4]>> = self
            .chunks
            .par_iter()
            .map(|range| {
                let mut acc = vec![[0.0; 4]; nv];
                for cl in &self.classes[range.clone()] {
                    let len = cl.hi[0] - cl.lo[0];
                    for (i0, _) in RowIter::new(cl, shape) {
                        pair_row(f1, f2, cl, i0, len, &mut acc);
                    }
                }
                acc
            })
            .collect();
        let mut total = vec![[0.0; 4]; nv];
        for part in partials {
            for (t, p) in total.iter_mut().zip(part) {
                for k in 0..4 {
                    t[k] += p[k];
                }
            }
        }
        let column = |k: usize| total.iter().map(|q| q[k]).collect::<Vec<f64>>();
        Ok(PairTerms {
            j11: column(0),
            j22: column(1),
            j12: column(2),
            j21: column(3),
        })
    }

    /// Runs `body` over every class, chunk by chunk, and sums chunk outputs in order.
    fn sweep<F>(&self, outputs: usize, body: F) -> Vec<Vec<f64>>
    where
        F: Fn(&EventClass, RowIter, &mut [Vec<f64>]) + Sync,
    {
        let nv = self.vgrid.len();
        let shape = self.vgrid.shape();
        let partials: Vec<Vec<Vec<f64>>> = self
            .chunks
            .par_iter()
            .map(|range| {
                let mut out = vec![vec![0.0; nv]; outputs];
                for cl in &self.classes[range.clone()] {
                    body(cl, RowIter::new(cl, shape), &mut out);
                }
                out
            })
            .collect();
        let mut total = vec![vec![0.0; nv]; outputs];
        for part in partials {
            for (t, p) in total.iter_mut().zip(part) {
                t.iter_mut().zip(p).for_each(|(x, y)| *x += y);
            }
        }
        total
    }
}

/// Rows `(first node, length)` of an event class, x fastest.
struct RowIter {
    lo: [usize; 3],
    hi: [usize; 3],
    s0: usize,
    s1: usize,
    iy: usize,
    iz: usize,
}

impl RowIter {
    fn new(cl: &EventClass, shape: [usize; 3]) -> Self {
        RowIter {
            lo: cl.lo,
            hi: cl.hi,
            s0: shape[0],
            s1: shape[1],
            iy: cl.lo[1],
            iz: cl.lo[2],
        }
    }
}

impl Iterator for RowIter {
    type Item = (usize, usize);

    fn next(&mut self) -> Option<(usize, usize)> {
        if self.iz >= self.hi[2] {
            return None;
        }
        let start = self.lo[0] + self.s0 * (self.iy + self.s1 * self.iz);
        self.iy += 1;
        if self.iy >= self.hi[1] {
            self.iy = self.lo[1];
            self.iz += 1;
        }
        Some((start, self.hi[0] - self.lo[0]))
    }
}

fn scratch(cl: &EventClass) -> (Vec<f64>, Vec<f64>) {
    let len = cl.hi[0] - cl.lo[0];
    (vec![0.0; len], vec![0.0; len])
}

fn shifted(base: usize, off: isize) -> usize {
    (base as isize + off) as usize
}

/// Event imbalances for `J(f, g)` along one row:
/// `d1 = f_a g_c - f_i g_j` (origin `i`) and `d2 = f_c g_a - f_j g_i` (origin `j`).
#[inline]
fn deltas(f: &[f64], g: &[f64], cl: &EventClass, i0: usize, d1: &mut [f64], d2: &mut [f64]) {
    let len = d1.len();
    let j0 = shifted(i0, cl.off_j);
    let a0 = shifted(i0, cl.off_a);
    let c0 = shifted(i0, cl.off_c);
    let (fi, fj, fa, fc) = (&f[i0..i0 + len], &f[j0..j0 + len], &f[a0..a0 + len], &f[c0..c0 + len]);
    let (gi, gj, ga, gc) = (&g[i0..i0 + len], &g[j0..j0 + len], &g[a0..a0 + len], &g[c0..c0 + len]);
    for k in 0..len {
        d1[k] = fa[k] * gc[k] - fi[k] * gj[k];
        d2[k] = fc[k] * ga[k] - fj[k] * gi[k];
    }
}

/// All four species terms along one row, accumulated into interleaved quadruples.
#[inline]
fn pair_row(f1: &[f64], f2: &[f64], cl: &EventClass, i0: usize, len: usize, acc: &mut [[f64; 4]]) {
    let j0 = shifted(i0, cl.off_j);
    let a0 = shifted(i0, cl.off_a);
    let c0 = shifted(i0, cl.off_c);
    let (pi, pj, pa, pc) = (&f1[i0..i0 + len], &f1[j0..j0 + len], &f1[a0..a0 + len], &f1[c0..c0 + len]);
    let (qi, qj, qa, qc) = (&f2[i0..i0 + len], &f2[j0..j0 + len], &f2[a0..a0 + len], &f2[c0..c0 + len]);
    let h = cl.half_weight;
    for k in 0..len {
        let x11 = h * (pa[k] * pc[k] - pi[k] * pj[k]);
        let x22 = h * (qa[k] * qc[k] - qi[k] * qj[k]);
        let x12 = h * (pa[k] * qc[k] - pi[k] * qj[k]);
        let y12 = h * (pc[k] * qa[k] - pj[k] * qi[k]);
        let x21 = h * (qa[k] * pc[k] - qi[k] * pj[k]);
        let y21 = h * (qc[k] * pa[k] - qj[k] * pi[k]);
        let first = [x11, x22, x12, x21];
        let second = [x11, x22, y12, y21];
        for (node, s, d) in [(i0 + k, 1.0, &first), (a0 + k, -1.0, &first), (j0 + k, 1.0, &second), (c0 + k, -1.0, &second)] {
            let q = &mut acc[node];
            for t in 0..4 {
                q[t] += s * d[t];
            }
        }
    }
}

#[inline]
fn scatter(out: &mut [f64], cl: &EventClass, i0: usize, d1: &[f64], d2: &[f64]) {
    let len = d1.len();
    let h = cl.half_weight;
    let add = |out: &mut [f64], start: usize, d: &[f64], s: f64| {
        out[start..start + len].iter_mut().zip(d).for_each(|(o, x)| *o += s * x);
    };
    add(out, i0, d1, h);
    add(out, shifted(i0, cl.off_a), d1, -h);
    add(out, shifted(i0, cl.off_j), d2, h);
    add(out, shifted(i0, cl.off_c), d2, -h);
}

/// Splits classes into [`WORK_CHUNKS`] contiguous ranges of similar work.
fn partition(classes: &[EventClass]) -> Vec<std::ops::Range<usize>> {
    let total: usize = classes.iter().map(EventClass::count).sum();
    let target = total.div_ceil(WORK_CHUNKS).max(1);
    let mut out = Vec::new();
    let mut start = 0;
    let mut acc = 0;
    for (k, cl) in classes.iter().enumerate() {
        acc += cl.count();
        if acc >= target {
            out.push(start..k + 1);
            start = k + 1;
            acc = 0;
        }
    }
    if start < classes.len() {
        out.push(start..classes.len());
    }
    out
}

type Shells = HashMap<(i64, u8), Vec<[i32; 3]>>;

fn parity(m: &[i32; 3]) -> u8 {
    (m[0].rem_euclid(2) | (m[1].rem_euclid(2) << 1) | (m[2].rem_euclid(2) << 2)) as u8
}

fn norm2(m: &[i32; 3]) -> i64 {
    m.iter().map(|&x| (x as i64) * (x as i64)).sum()
}

fn for_each_vector<F: FnMut([i32; 3])>(span: i32, d: usize, mut visit: F) {
    let zr = if d == 3 { span } else { 0 };
    for z in -zr..=zr {
        for y in -span..=span {
            for x in -span..=span {
                visit([x, y, z]);
            }
        }
    }
}

fn is_canonical(m: &[i32; 3]) -> bool {
    m.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0)
}

fn build_shells(n: i32, d: usize) -> Shells {
    let mut shells: Shells = HashMap::new();
    for_each_vector(n - 1, d, |m| {
        shells.entry((norm2(&m), parity(&m))).or_default().push(m);
    });
    shells
}

/// Post-collision relative indices for a canonical `m`, with merged weights.
fn snap_targets(
    m: &[i32; 3],
    d: usize,
    shells: &Shells,
    cs: &CrossSection,
    angles: &SphericalQuadrature,
    dv: f64,
    base_weight: f64,
) -> BTreeMap<[i32; 3], f64> {
    let shell = &shells[&(norm2(m), parity(m))];
    let len = (norm2(m) as f64).sqrt();
    let speed = (len * dv).powf(cs.sigma);
    let mut out = BTreeMap::new();
    for (om, &wk) in angles.directions().iter().zip(angles.weights()) {
        let dot: f64 = (0..d).map(|a| m[a] as f64 * om[a]).sum();
        let mut t = [0.0; 3];
        for a in 0..d {
            t[a] = m[a] as f64 - 2.0 * dot * om[a];
        }
        let best = nearest(shell, &t, d);
        let w = base_weight * speed * cs.h(dot / len) * wk;
        *out.entry(best).or_insert(0.0) += w;
    }
    out
}

/// Nearest shell point; ties go to the lexicographically smallest.
pub(crate) fn nearest(shell: &[[i32; 3]], t: &[f64; 3], d: usize) -> [i32; 3] {
    let mut best = shell[0];
    let mut best_d = f64::INFINITY;
    for s in shell {
        let dist: f64 = (0..d).map(|a| (s[a] as f64 - t[a]).powi(2)).sum();
        if dist < best_d || (dist == best_d && *s < best) {
            best = *s;
            best_d = dist;
        }
    }
    best
}

/// Least-squares correction of stacked outputs. Each constraint is a mask
/// over parts and an invariant index; the corrected outputs satisfy every
/// constraint while the change at each node is proportional to `|x_i|`.
pub(crate) fn correct(parts: &mut [&mut Vec<f64>], constraints: &[(Vec<bool>, usize)], inv: &[Vec<f64>]) {
    let k = constraints.len();
    let weights: Vec<Vec<f64>> = parts.iter().map(|p| p.iter().map(|x| x.abs()).collect()).collect();
    let mut a = DMatrix::zeros(k, k);
    let mut b = DVector::zeros(k);
    for (r, (mask_r, ar)) in constraints.iter().enumerate() {
        for (p, part) in parts.iter().enumerate() {
            if mask_r[p] {
                b[r] += part.iter().zip(&inv[*ar]).map(|(x, c)| x * c).sum::<f64>();
            }
        }
        for (s, (mask_s, as_)) in constraints.iter().enumerate() {
            let mut acc = 0.0;
            for p in 0..parts.len() {
                if mask_r[p] && mask_s[p] {
                    acc += weights[p]
                        .iter()
                        .zip(&inv[*ar])
                        .zip(&inv[*as_])
                        .map(|((w, x), y)| w * x * y)
                        .sum::<f64>();
                }
            }
            a[(r, s)] = acc;
        }
    }
    let scale = a.amax();
    if scale == 0.0 {
        return;
    }
    let Ok(lambda) = a.svd(true, true).solve(&b, 1e-14 * scale) else {
        return;
    };
    for (p, part) in parts.iter_mut().enumerate() {
        for (r, (mask, ar)) in constraints.iter().enumerate() {
            if mask[p] && lambda[r] != 0.0 {
                for ((x, w), c) in part.iter_mut().zip(&weights[p]).zip(&inv[*ar]) {
                    *x -= lambda[r] * w * c;
                }
            }
        }
    }
}

/// Exact quadrature of `J(f, g)` (builds the event table; reuse
/// [`CollisionTable`] when applying repeatedly).
pub fn boltzmann_j(
    f: &[f64],
    g: &[f64],
    vgrid: &VelocityGrid,
    cs: &CrossSection,
    angles: &SphericalQuadrature,
) -> Result<Vec<f64>> {
    CollisionTable::new(vgrid, cs, angles)?.apply(f, g)
}

/// Invariant moments `sum_i chi_alpha(v_i) x_i` (without the node weight).
pub fn invariant_moments(x: &[f64], vgrid: &VelocityGrid) -> Vec<f64> {
    collision_invariants(vgrid)
        .iter()
        .map(|c| c.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}
