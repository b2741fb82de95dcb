use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segrekin_core::collision::*;
use segrekin_core::domain::{SpatialGrid, SpeciesDistributions, VelocityGrid};

fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

fn max_moment_ratio(x: &[f64], g: &VelocityGrid) -> f64 {
    let scale = l1(x).max(f64::MIN_POSITIVE);
    invariant_moments(x, g).iter().map(|m| m.abs() / scale).fold(0.0, f64::max)
}

fn random_positive(g: &VelocityGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let p = MaxwellianParams::new(
        rng.gen_range(0.5..1.5),
        [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
        rng.gen_range(0.6..1.4),
    )
    .unwrap();
    maxwellian(&p, g)
        .unwrap()
        .into_iter()
        .map(|m| m * (1.0 + 0.5 * rng.gen_range(-1.0..1.0)))
        .collect()
}

fn bimodal(g: &VelocityGrid) -> Vec<f64> {
    let a = maxwellian(&MaxwellianParams::new(0.5, [1.2, 0.3, 0.0], 0.5).unwrap(), g).unwrap();
    let b = maxwellian(&MaxwellianParams::new(0.5, [-1.2, -0.3, 0.0], 0.5).unwrap(), g).unwrap();
    a.iter().zip(&b).map(|(x, y)| x + y).collect()
}

/// Independent event enumeration: every ordered node pair, visited in a
/// random order, with the post-collision pair found by brute-force search
/// over all lattice difference vectors.
fn brute_force_j(f: &[f64], h: &[f64], g: &VelocityGrid, cs: &CrossSection, q: &SphericalQuadrature, seed: u64) -> Vec<f64> {
    let d = g.dim();
    let n = g.nodes_per_axis() as i32;
    let dv = g.spacing();
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let idx = |i: usize| -> [i32; 3] {
        let u = g.unravel(i);
        [u[0] as i32, u[1] as i32, u[2] as i32]
    };
    let mut all = Vec::new();
    let zr = if d == 3 { n - 1 } else { 0 };
    for z in -zr..=zr {
        for y in -(n - 1)..=(n - 1) {
            for x in -(n - 1)..=(n - 1) {
                all.push([x, y, z]);
            }
        }
    }
    let mut cache: HashMap<([i32; 3], usize), [i32; 3]> = HashMap::new();
    let mut out = vec![0.0; g.len()];
    for &i in &order {
        for &j in &order {
            if i == j {
                continue;
            }
            let (vi, vj) = (idx(i), idx(j));
            let m = [vi[0] - vj[0], vi[1] - vj[1], vi[2] - vj[2]];
            let first = *m.iter().find(|x| **x != 0).unwrap();
            let sign = first.signum();
            let cm = [m[0] * sign, m[1] * sign, m[2] * sign];
            let len2: i64 = cm.iter().map(|x| (*x as i64).pow(2)).sum();
            let len = (len2 as f64).sqrt();
            for (k, (om, w)) in q.directions().iter().zip(q.weights()).enumerate() {
                let target = *cache.entry((cm, k)).or_insert_with(|| {
                    let dot: f64 = (0..d).map(|a| cm[a] as f64 * om[a]).sum();
                    let t: Vec<f64> = (0..3).map(|a| cm[a] as f64 - 2.0 * dot * om[a]).collect();
                    let mut best = [0; 3];
                    let mut bd = f64::INFINITY;
                    for s in &all {
                        let s2: i64 = s.iter().map(|x| (*x as i64).pow(2)).sum();
                        if s2 != len2 || (0..3).any(|a| (s[a] - cm[a]).rem_euclid(2) != 0) {
                            continue;
                        }
                        let dist: f64 = (0..d).map(|a| (s[a] as f64 - t[a]).powi(2)).sum();
                        if dist < bd || (dist == bd && *s < best) {
                            bd = dist;
                            best = *s;
                        }
                    }
                    best
                });
                let mp = [target[0] * sign, target[1] * sign, target[2] * sign];
                let va: Vec<i32> = (0..3).map(|a| vi[a] + (mp[a] - m[a]) / 2).collect();
                let vc: Vec<i32> = (0..3).map(|a| vi[a] - (m[a] + mp[a]) / 2).collect();
                let shape = g.shape();
                if (0..3).any(|a| va[a] < 0 || va[a] >= shape[a] as i32 || vc[a] < 0 || vc[a] >= shape[a] as i32) {
                    continue;
                }
                let a = g.linear([va[0] as usize, va[1] as usize, va[2] as usize]);
                let c = g.linear([vc[0] as usize, vc[1] as usize, vc[2] as usize]);
                let dot: f64 = (0..d).map(|a| cm[a] as f64 * om[a]).sum();
                let b = g.weight() * (len * dv).powf(cs.sigma) * cs.h(dot / len) * w;
                let delta = 0.5 * b * (f[a] * h[c] - f[i] * h[j]);
                out[i] += delta;
                out[a] -= delta;
            }
        }
    }
    out
}

#[test]
fn exact_j_matches_brute_force_oracle_on_bimodal_slice() {
    for (g, q) in [
        (VelocityGrid::new(2, 4.0, 10).unwrap(), SphericalQuadrature::circle(8).unwrap()),
        (VelocityGrid::new(3, 4.0, 8).unwrap(), SphericalQuadrature::product_gauss(2, 4).unwrap()),
    ] {
        let cs = CrossSection::hard_spheres();
        let table = CollisionTable::new(&g, &cs, &q).unwrap();
        let f = bimodal(&g);
        let j = table.apply_raw(&f, &f).unwrap();
        let oracle = brute_force_j(&f, &f, &g, &cs, &q, 7);
        let scale = l1(&oracle);
        assert!(scale > 0.0);
        for (a, b) in j.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12 * scale, "{a} vs {b}");
        }
        let corrected = table.apply(&f, &f).unwrap();
        assert!(max_moment_ratio(&corrected, &g) < 1e-12);
        let h: f64 = corrected.iter().zip(&f).map(|(x, y)| x * y.ln()).sum();
        assert!(h < 0.0);
        // cross operator against the oracle as well
        let other = random_positive(&g, &mut ChaCha8Rng::seed_from_u64(3));
        let jc = table.apply_raw(&f, &other).unwrap();
        let oc = brute_force_j(&f, &other, &g, &cs, &q, 11);
        let sc = l1(&oc);
        for (a, b) in jc.iter().zip(&oc) {
            assert!((a - b).abs() < 1e-12 * sc);
        }
    }
}

#[test]
fn maxwellian_is_annihilated() {
    let g = VelocityGrid::new(3, 6.0, 16).unwrap();
    let q = SphericalQuadrature::product_gauss(2, 4).unwrap();
    let table = CollisionTable::new(&g, &CrossSection::hard_spheres(), &q).unwrap();
    for p in [MaxwellianParams::standard(), MaxwellianParams::new(0.7, [0.4, -0.2, 0.1], 1.3).unwrap()] {
        let m = maxwellian(&p, &g).unwrap();
        let j = table.apply(&m, &m).unwrap();
        assert!(l1(&j) < 1e-6 * l1(&m), "{}", l1(&j) / l1(&m));
    }
}

#[test]
fn rejects_bad_inputs() {
    let q3 = SphericalQuadrature::product_gauss(2, 4).unwrap();
    let cs = CrossSection::hard_spheres();
    assert!(CollisionTable::new(&VelocityGrid::new(1, 6.0, 16).unwrap(), &cs, &q3).is_err());
    assert!(CollisionTable::new(&VelocityGrid::new(2, 6.0, 16).unwrap(), &cs, &q3).is_err());
    assert!(VelocityGrid::new(3, 6.0, 6).is_err());
}

#[test]
fn symmetrized_terms_conserve_and_produce_entropy() {
    let g = VelocityGrid::new(3, 5.0, 12).unwrap();
    let q = SphericalQuadrature::product_gauss(2, 4).unwrap();
    let table = CollisionTable::new(&g, &CrossSection::hard_spheres(), &q).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..10 {
        let f1 = random_positive(&g, &mut rng);
        let f2 = random_positive(&g, &mut rng);
        let t = table.pair_terms(&f1, &f2).unwrap();
        assert!(max_moment_ratio(&t.j11, &g) < 1e-10);
        assert!(max_moment_ratio(&t.j22, &g) < 1e-10);
        let cross: Vec<f64> = t.j12.iter().zip(&t.j21).map(|(a, b)| a + b).collect();
        assert!(max_moment_ratio(&cross, &g) < 1e-10);
        let mass12: f64 = t.j12.iter().sum();
        assert!(mass12.abs() < 1e-10 * l1(&t.j12));
        let e = entropy_production_cell(&f1, &f2, &g, EntropyOperator::ExactJ(&table)).unwrap();
        assert!(e.n1 >= -1e-10 && e.n2 >= -1e-10 && e.cross() >= -1e-10, "{e:?}");
    }
}

#[test]
fn single_cross_term_is_not_signed() {
    // Counterexample search: N_12 alone goes negative for some inputs.
    let g = VelocityGrid::new(2, 4.0, 10).unwrap();
    let table = CollisionTable::new(&g, &CrossSection::hard_spheres(), &SphericalQuadrature::circle(8).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut found = false;
    for _ in 0..200 {
        let f1 = random_positive(&g, &mut rng);
        let f2: Vec<f64> = random_positive(&g, &mut rng).iter().map(|x| x * rng.gen_range(0.1..3.0)).collect();
        let e = entropy_production_cell(&f1, &f2, &g, EntropyOperator::ExactJ(&table)).unwrap();
        assert!(e.cross() >= -1e-12);
        if e.n12 < 0.0 || e.n21 < 0.0 {
            found = true;
            break;
        }
    }
    assert!(found, "no input made a single cross production negative");
}

#[test]
fn linearization_error_is_quadratic() {
    let g = VelocityGrid::new(2, 5.0, 16).unwrap();
    let p = MaxwellianParams::standard();
    let q = SphericalQuadrature::circle(8).unwrap();
    let cs = CrossSection::hard_spheres();
    let table = CollisionTable::new(&g, &cs, &q).unwrap();
    let l = build_linearized_from_table(OperatorKind::L, &p, &table).unwrap();
    let m = l.maxwellian.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pert: Vec<f64> = m.iter().map(|x| x * rng.gen_range(-1.0..1.0)).collect();
    let lg = l.apply(&pert);
    let err = |eta: f64| -> f64 {
        let f: Vec<f64> = m.iter().zip(&pert).map(|(a, b)| a + eta * b).collect();
        let j = table.apply(&f, &f).unwrap();
        j.iter().zip(&lg).map(|(a, b)| (a - eta * b).abs()).sum()
    };
    let (e1, e2, e3) = (err(1e-2), err(5e-3), err(2.5e-3));
    for r in [e1 / e2, e2 / e3] {
        assert!((r - 4.0).abs() < 1.0, "ratio {r}");
    }
}

#[test]
fn linearized_operators_structure() {
    let g = VelocityGrid::new(2, 5.0, 14).unwrap();
    let p = MaxwellianParams::standard();
    let q = SphericalQuadrature::circle(8).unwrap();
    let cs = CrossSection::hard_spheres();
    for kind in [OperatorKind::L, OperatorKind::Gamma] {
        let op = build_linearized(kind, &p, &g, &cs, &q).unwrap();
        assert!(op.asymmetry() < 1e-8);
        let (lo, hi) = op.spectrum_bounds();
        assert!(hi <= 1e-10 * lo.abs(), "max eigenvalue {hi}");
        assert!(op.null_residual() < 1e-10);
        let expected_rank = if kind == OperatorKind::L { 4 } else { 1 };
        assert_eq!(op.null_projector.rank(), expected_rank);
    }
    let gamma = build_linearized(OperatorKind::Gamma, &p, &g, &cs, &q).unwrap();
    let l = build_linearized(OperatorKind::L, &p, &g, &cs, &q).unwrap();
    let mvx: Vec<f64> = gamma.maxwellian.iter().zip(g.nodes()).map(|(m, v)| m * v[0]).collect();
    let scale = l1(&mvx) * gamma.matrix.amax();
    assert!(l1(&l.apply(&mvx)) < 1e-12 * scale);
    assert!(l1(&gamma.apply(&mvx)) > 1e-3 * l1(&mvx));
    let cm: Vec<f64> = gamma.maxwellian.iter().map(|m| 2.5 * m).collect();
    assert!(l1(&gamma.apply(&cm)) < 1e-12 * scale);
}

#[test]
fn hard_sphere_collision_frequency_grows_linearly() {
    let g = VelocityGrid::new(3, 6.0, 16).unwrap();
    let op = build_linearized(
        OperatorKind::Gamma,
        &MaxwellianParams::standard(),
        &g,
        &CrossSection::isotropic(1.0).unwrap(),
        &SphericalQuadrature::product_gauss(2, 4).unwrap(),
    )
    .unwrap();
    // Regression of log nu against log(1 + |v|) over interior speeds.
    let (mut sx, mut sy, mut sxx, mut sxy, mut k) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (v, nu) in g.nodes().iter().zip(&op.nu_diag) {
        let s = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if (2.0..=4.0).contains(&s) {
            let (x, y) = ((1.0 + s).ln(), nu.ln());
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            k += 1.0;
        }
    }
    let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    assert!((slope - 1.0).abs() < 0.1, "exponent {slope}");
    assert!(op.nu_diag.iter().all(|&x| x > 0.0));
}

#[test]
fn orthogonal_solve_against_dense_oracle() {
    let g = VelocityGrid::new(2, 5.0, 12).unwrap();
    let p = MaxwellianParams::standard();
    let gamma = build_linearized(
        OperatorKind::Gamma,
        &p,
        &g,
        &CrossSection::hard_spheres(),
        &SphericalQuadrature::circle(8).unwrap(),
    )
    .unwrap();
    let zero = solve_orthogonal(&gamma, &vec![0.0; g.len()]).unwrap();
    assert!(zero.solution.iter().all(|&x| x == 0.0));

    let src: Vec<f64> = gamma.maxwellian.iter().zip(g.nodes()).map(|(m, v)| m * v[0]).collect();
    let sol = solve_orthogonal(&gamma, &src).unwrap();
    assert!(sol.residual < 1e-9);
    for i in 0..g.len() {
        let mirror = g.mirror(i);
        assert!((sol.solution[i] + sol.solution[mirror]).abs() < 1e-8 * l1(&sol.solution));
    }
    // Oracle: pseudo-inverse of the dense symmetrized matrix.
    let sq: Vec<f64> = gamma.maxwellian.iter().map(|m| m.sqrt()).collect();
    let s = gamma.symmetrized();
    let rhs = DVector::from_iterator(g.len(), src.iter().zip(&sq).map(|(x, q)| x / q));
    let smax = s.amax();
    let y = s.svd(true, true).solve(&rhs, 1e-10 * smax).unwrap();
    let oracle: Vec<f64> = y.iter().zip(&sq).map(|(a, q)| a * q).collect();
    for (a, b) in sol.solution.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-7 * l1(&oracle));
    }

    // Range identity: source = op y for y in the complement.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let raw: Vec<f64> = gamma.maxwellian.iter().map(|m| m * rng.gen_range(-1.0..1.0)).collect();
    let yc = gamma.null_projector.complement(&raw);
    let back = solve_orthogonal(&gamma, &gamma.apply(&yc)).unwrap();
    for (a, b) in back.solution.iter().zip(&yc) {
        assert!((a - b).abs() < 1e-8 * l1(&yc));
    }
    let _ = DMatrix::<f64>::zeros(1, 1);
}

#[test]
fn bgk_closed_forms_and_numeric_agreement() {
    let p = MaxwellianParams::standard();
    let t = TransportCoefficients::bgk_analytic(&p, 1.0, 3).unwrap();
    assert_eq!((t.nu_visc, t.kappa, t.d_diff), (1.0, 2.5, 1.0));
    let half = TransportCoefficients::bgk_analytic(&p, 0.5, 3).unwrap();
    assert_eq!((half.nu_visc, half.kappa, half.d_diff), (2.0, 5.0, 2.0));

    for d in [2, 3] {
        let g = VelocityGrid::new(d, 7.0, if d == 2 { 32 } else { 14 }).unwrap();
        for nu_c in [1.0, 2.0] {
            let num = transport_coefficients(TransportMethod::NumericOperator, &p, nu_c, Some((&g, CollisionModel::BgkDiagonal))).unwrap();
            let ana = TransportCoefficients::bgk_analytic(&p, nu_c, d).unwrap();
            assert!((num.d_diff / ana.d_diff - 1.0).abs() < 0.01);
            assert!((num.nu_visc / ana.nu_visc - 1.0).abs() < 0.01);
            assert!((num.kappa / ana.kappa - 1.0).abs() < 0.01, "{} vs {}", num.kappa, ana.kappa);
        }
    }
}

#[test]
fn numeric_transport_refuses_truncated_lattice() {
    let g = VelocityGrid::new(2, 3.0, 16).unwrap();
    let err = transport_coefficients(
        TransportMethod::NumericOperator,
        &MaxwellianParams::standard(),
        1.0,
        Some((&g, CollisionModel::BgkDiagonal)),
    )
    .unwrap_err();
    assert!(matches!(err, segrekin_core::Error::Truncation { .. }));
}

#[test]
fn exact_operator_coefficients_are_positive() {
    let g = VelocityGrid::new(2, 7.0, 20).unwrap();
    let cs = CrossSection::hard_spheres();
    let q = SphericalQuadrature::circle(8).unwrap();
    let c = transport_coefficients(
        TransportMethod::NumericOperator,
        &MaxwellianParams::standard(),
        1.0,
        Some((&g, CollisionModel::Exact { cs: &cs, angles: &q })),
    )
    .unwrap();
    assert!(c.nu_visc > 0.0 && c.kappa > 0.0 && c.d_diff > 0.0);
}

fn one_cell(vg: &VelocityGrid, f_r: Vec<f64>, f_b: Vec<f64>) -> SpeciesDistributions {
    let grid = SpatialGrid::line(1.0, 4).unwrap();
    let mut r = Vec::new();
    let mut b = Vec::new();
    for _ in 0..4 {
        r.extend_from_slice(&f_r);
        b.extend_from_slice(&f_b);
    }
    SpeciesDistributions::new(&grid, vg, r, b).unwrap()
}

#[test]
fn bgk_fixed_points_and_conservation() {
    let g = VelocityGrid::new(2, 6.0, 24).unwrap();
    let shared = MaxwellianParams::new(1.0, [0.3, -0.1, 0.0], 0.9).unwrap();
    let m = discrete_maxwellian(&shared, &g).unwrap();
    let s = one_cell(&g, m.iter().map(|x| 0.4 * x).collect(), m.iter().map(|x| 1.6 * x).collect());
    let (cr, cb) = bgk_relax(&s, 2.0).unwrap();
    assert!(l1(&cr) < 1e-12 * l1(&m) && l1(&cb) < 1e-12 * l1(&m));
    // sampled Maxwellians agree up to truncation error
    let ms = maxwellian(&shared, &g).unwrap();
    let s = one_cell(&g, ms.clone(), ms.clone());
    let (cr, _) = bgk_relax(&s, 1.0).unwrap();
    assert!(l1(&cr) < 1e-7 * l1(&ms));

    // Different temperatures are not a fixed point.
    let hot = discrete_maxwellian(&MaxwellianParams::new(1.0, [0.0; 3], 1.5).unwrap(), &g).unwrap();
    let cold = discrete_maxwellian(&MaxwellianParams::new(1.0, [0.0; 3], 0.7).unwrap(), &g).unwrap();
    let s = one_cell(&g, hot, cold);
    let (cr, _) = bgk_relax(&s, 1.0).unwrap();
    assert!(l1(&cr) > 1e-3);

    // Opposite drifts.
    let left = maxwellian(&MaxwellianParams::new(1.0, [0.8, 0.0, 0.0], 1.0).unwrap(), &g).unwrap();
    let right = maxwellian(&MaxwellianParams::new(1.0, [-0.8, 0.0, 0.0], 1.0).unwrap(), &g).unwrap();
    let (cr, cb) = bgk_cell(&left, &right, &g, 1.0);
    let mr = invariant_moments(&cr, &g);
    let mb = invariant_moments(&cb, &g);
    let scale = l1(&cr);
    assert!(mr[0].abs() < 1e-13 * scale && mb[0].abs() < 1e-13 * scale);
    for k in 1..mr.len() {
        assert!((mr[k] + mb[k]).abs() < 1e-13 * scale);
    }
    let e = entropy_production_cell(&left, &right, &g, EntropyOperator::Bgk { nu_collision: 1.0 }).unwrap();
    assert!(e.n1 >= 0.0 && e.n2 >= 0.0 && e.cross().abs() < 1e-10);
}

#[test]
fn bgk_relaxation_rate_matches_small_step_integration() {
    let g = VelocityGrid::new(1, 8.0, 64).unwrap();
    let f_r = bimodal(&g);
    let f_b = maxwellian(&MaxwellianParams::new(0.5, [0.2, 0.0, 0.0], 2.0).unwrap(), &g).unwrap();
    let eq = mixture_equilibrium(&f_r, &f_b, &g).unwrap();
    let dist = |fr: &[f64]| -> f64 { fr.iter().zip(&eq.unit_maxwellian).map(|(x, m)| (x - eq.n_r * m).abs()).sum() };
    let nu_c = 3.0;
    let dt = 1e-4;
    let (mut fr, mut fb) = (f_r.clone(), f_b.clone());
    let d0 = dist(&fr);
    let steps = 1000;
    for _ in 0..steps {
        // explicit midpoint
        let (cr, cb) = bgk_cell(&fr, &fb, &g, nu_c);
        let hr: Vec<f64> = fr.iter().zip(&cr).map(|(x, c)| x + 0.5 * dt * c).collect();
        let hb: Vec<f64> = fb.iter().zip(&cb).map(|(x, c)| x + 0.5 * dt * c).collect();
        let (cr, cb) = bgk_cell(&hr, &hb, &g, nu_c);
        fr.iter_mut().zip(&cr).for_each(|(x, c)| *x += dt * c);
        fb.iter_mut().zip(&cb).for_each(|(x, c)| *x += dt * c);
    }
    let rate = -(dist(&fr) / d0).ln() / (steps as f64 * dt);
    assert!((rate / nu_c - 1.0).abs() < 0.02, "rate {rate}");
}
