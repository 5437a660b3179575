//! Convex-body averages through support functions, the sparse operator `L`,
//! and the pointwise domination constant of `P f(z) in C L f(z)`.

mod carleson;

pub use carleson::{carleson_embedding_ratio, square_functionals, SquareForms, SquareFunctionals};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dyadic::KubeRef;
use crate::error::{LabError, Result};
use crate::geometry::{DomainKind, Point, C64};
use crate::projection::grid::QuadratureGrid;
use crate::weights::{GridFamily, Region};

pub const DEFAULT_DIRECTIONS: usize = 64;
pub const DEFAULT_SAMPLES: usize = 200;
pub const DEFAULT_POLYNOMIALS: usize = 100;
pub const DEFAULT_POLYNOMIAL_DEGREE: usize = 4;
pub const DIRECTION_SEED: u64 = 0xD1EC;
/// Numerators above this with zero support count as violations.
pub const VIOLATION_FLOOR: f64 = 1e-10;

/// `<a, b>` in `C^d`, linear in `a`.
fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// Unit vectors of `C^d` seen as directions of `R^{2d}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionSet {
    d: usize,
    dirs: Vec<Vec<C64>>,
}

impl DirectionSet {
    /// The `4d` directions `+-e_k`, `+-i e_k`, then Gaussian random ones up to `m`.
    pub fn new(d: usize, m: usize, seed: u64) -> Result<Self> {
        if d == 0 || m < 4 * d {
            return Err(LabError::InvalidParameter(format!("need at least {} directions in C^{d}", 4 * d)));
        }
        let mut dirs = Vec::with_capacity(m);
        for k in 0..d {
            for u in [C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)] {
                let mut v = vec![C64::new(0.0, 0.0); d];
                v[k] = u;
                dirs.push(v);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while dirs.len() < m {
            let v: Vec<C64> =
                (0..d).map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))).collect();
            let n = crate::linalg::vec_norm(&v);
            dirs.push(v.into_iter().map(|x| x / n).collect());
        }
        Ok(DirectionSet { d, dirs })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn get(&self, i: usize) -> &[C64] {
        &self.dirs[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[C64]> {
        self.dirs.iter().map(Vec::as_slice)
    }
}

fn region_nodes(gf: &GridFamily, region: Region) -> Vec<usize> {
    match region {
        Region::Omega => (0..gf.grid().len()).collect(),
        Region::Tent { system, cell } => gf.tent_nodes(system, cell),
        Region::Kube { system, kube } => {
            let a = gf.assignment(system);
            (0..gf.grid().len()).filter(|&n| a.kube_of(n) == kube).collect()
        }
    }
}

/// Support function of the convex body `<<f>>_Q` in direction `xi`:
/// the quadrature average of `|<f(w), xi>|` over `Q`.
pub fn convex_body_support(gf: &GridFamily, f: &[C64], region: Region, xi: &[C64]) -> Result<f64> {
    let d = xi.len();
    let nodes = region_nodes(gf, region);
    if nodes.is_empty() {
        return Err(LabError::Resolution(format!("{region:?} holds no quadrature nodes")));
    }
    let w = gf.grid().weights();
    let (mut num, mut vol) = (0.0, 0.0);
    for &n in &nodes {
        num += w[n] * dot(&f[n * d..(n + 1) * d], xi).norm();
        vol += w[n];
    }
    Ok(num / vol)
}

/// Support values of `<<f>>_T` for every tent of every system and for the
/// domain, in every direction of a set.
#[derive(Clone, Debug)]
pub struct TentSupports {
    /// `[system][cell * m + direction]`
    tents: Vec<Vec<f64>>,
    omega: Vec<f64>,
    m: usize,
}

impl TentSupports {
    pub fn compute(gf: &GridFamily, f: &[C64], dirs: &DirectionSet) -> Self {
        let d = dirs.d();
        let m = dirs.len();
        let grid = gf.grid();
        let w = grid.weights();
        // |<f(w_i), xi_j>| w_i, node-major
        let mass: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .flat_map_iter(|n| {
                let fn_ = &f[n * d..(n + 1) * d];
                dirs.iter().map(move |xi| dot(fn_, xi).norm() * w[n]).collect::<Vec<_>>()
            })
            .collect();
        let total = grid.total_weight();
        let omega: Vec<f64> =
            (0..m).map(|j| crate::linalg::compensated_sum((0..grid.len()).map(|n| mass[n * m + j])) / total).collect();
        let tents = (0..gf.len())
            .into_par_iter()
            .map(|l| {
                let sys = gf.system(l);
                let a = gf.assignment(l);
                let mut sums = vec![0.0; sys.num_cells() * m];
                for n in 0..grid.len() {
                    if let KubeRef::Cell(c) = a.kube_of(n) {
                        for j in 0..m {
                            sums[c * m + j] += mass[n * m + j];
                        }
                    }
                }
                for k in (1..=sys.max_level()).rev() {
                    for id in sys.level_range(k) {
                        let p = sys.parent(id).unwrap();
                        for j in 0..m {
                            let v = sums[id * m + j];
                            sums[p * m + j] += v;
                        }
                    }
                }
                for c in 0..sys.num_cells() {
                    let vol = gf.tent_volume(l, c);
                    sums[c * m..(c + 1) * m].iter_mut().for_each(|x| *x /= vol);
                }
                sums
            })
            .collect();
        TentSupports { tents, omega, m }
    }

    pub fn omega(&self, j: usize) -> f64 {
        self.omega[j]
    }

    pub fn tent(&self, l: usize, cell: usize, j: usize) -> f64 {
        self.tents[l][cell * self.m + j]
    }

    /// Support of `L f` at a node: the domain plus every tent whose kube chain holds it.
    pub fn sparse_at_node(&self, gf: &GridFamily, node: usize, j: usize) -> f64 {
        let mut h = self.omega[j];
        for l in 0..gf.len() {
            if let KubeRef::Cell(mut c) = gf.assignment(l).kube_of(node) {
                let sys = gf.system(l);
                loop {
                    h += self.tent(l, c, j);
                    match sys.parent(c) {
                        Some(p) => c = p,
                        None => break,
                    }
                }
            }
        }
        h
    }

    /// Support of `L f` at an arbitrary interior point.
    pub fn sparse_at_point(&self, gf: &GridFamily, z: &Point, j: usize) -> f64 {
        let mut h = self.omega[j];
        for l in 0..gf.len() {
            for c in gf.system(l).tents_containing(z) {
                h += self.tent(l, c, j);
            }
        }
        h
    }

    /// Number of tents (domain included) containing a node.
    pub fn chain_length(&self, gf: &GridFamily, node: usize) -> usize {
        let mut count = 1;
        for l in 0..gf.len() {
            if let KubeRef::Cell(c) = gf.assignment(l).kube_of(node) {
                count += gf.system(l).level_of(c) + 1;
            }
        }
        count
    }
}

/// Support function of `L f(z)` in direction `xi`.
pub fn sparse_support(gf: &GridFamily, f: &[C64], z: &Point, xi: &[C64]) -> f64 {
    let dirs = DirectionSet { d: xi.len(), dirs: vec![xi.to_vec()] };
    TentSupports::compute(gf, f, &dirs).sparse_at_point(gf, z, 0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DominationViolation {
    pub node: usize,
    pub direction: usize,
    pub numerator: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DominationReport {
    /// `max_{z, xi} Re<P f(z), xi> / h_{Lf(z)}(xi)`.
    pub constant: f64,
    /// Maximizing ratio at each sample node.
    pub per_sample: Vec<f64>,
    pub violations: Vec<DominationViolation>,
}

/// Least `C` with `Re<P f(z), xi> <= C h_{Lf(z)}(xi)` at the sampled nodes;
/// `pf` holds `P f` at every node.
pub fn domination_constant(
    gf: &GridFamily,
    f: &[C64],
    pf: &[C64],
    samples: &[usize],
    dirs: &DirectionSet,
) -> DominationReport {
    let d = dirs.d();
    let supports = TentSupports::compute(gf, f, dirs);
    let rows: Vec<(f64, Vec<DominationViolation>)> = samples
        .par_iter()
        .map(|&node| {
            let p = &pf[node * d..(node + 1) * d];
            let mut best: f64 = 0.0;
            let mut bad = Vec::new();
            for (j, xi) in dirs.iter().enumerate() {
                let num = dot(p, xi).re;
                let h = supports.sparse_at_node(gf, node, j);
                if h > 0.0 {
                    best = best.max(num / h);
                } else if num > VIOLATION_FLOOR {
                    bad.push(DominationViolation { node, direction: j, numerator: num });
                }
            }
            (best, bad)
        })
        .collect();
    let per_sample: Vec<f64> = rows.iter().map(|r| r.0).collect();
    DominationReport {
        constant: per_sample.iter().copied().fold(0.0, f64::max),
        per_sample,
        violations: rows.into_iter().flat_map(|r| r.1).collect(),
    }
}

/// `count` nodes split evenly between the root region and every dyadic level
/// of system 0. A stratum's share is dealt round-robin over its rings, and on
/// each ring the chosen nodes are evenly spaced in angle from a seeded offset.
pub fn stratified_samples(gf: &GridFamily, count: usize, seed: u64) -> Vec<usize> {
    let grid = gf.grid();
    let sys = gf.system(0);
    let a = gf.assignment(0);
    // strata[level + 1][ring] = nodes of that ring in the stratum, in angular order
    let mut strata: Vec<Vec<Vec<usize>>> = vec![Vec::new(); sys.max_level() + 2];
    let ts = grid.torus_size();
    for ring in 0..grid.len() / ts {
        let mut by_stratum: Vec<Vec<usize>> = vec![Vec::new(); strata.len()];
        for n in ring * ts..(ring + 1) * ts {
            let s = match a.kube_of(n) {
                KubeRef::Root => 0,
                KubeRef::Cell(c) => sys.level_of(c) + 1,
            };
            by_stratum[s].push(n);
        }
        for (s, nodes) in by_stratum.into_iter().enumerate() {
            if !nodes.is_empty() {
                strata[s].push(nodes);
            }
        }
    }
    strata.retain(|s| !s.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = count / strata.len();
    let extra = count % strata.len();
    let mut out = Vec::with_capacity(count);
    for (i, rings) in strata.iter().enumerate() {
        let want = per + usize::from(i < extra);
        for (r, nodes) in rings.iter().enumerate() {
            let m = (want / rings.len() + usize::from(r < want % rings.len())).min(nodes.len());
            if m == 0 {
                continue;
            }
            let stride = nodes.len() as f64 / m as f64;
            let offset = rng.random::<f64>() * stride;
            out.extend((0..m).map(|k| nodes[((offset + k as f64 * stride) as usize).min(nodes.len() - 1)]));
        }
    }
    out.sort_unstable();
    out
}

/// Node values of a random `C^d`-valued polynomial in `z` and `conj(z)` of
/// total degree at most `degree`.
pub fn random_vector_polynomial(grid: &QuadratureGrid, d: usize, degree: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars = match grid.geom().kind() {
        DomainKind::Disc => 1,
        DomainKind::Ball2 => 2,
    };
    let mut terms: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..2 * vars {
        terms = terms
            .into_iter()
            .flat_map(|t| {
                let used: usize = t.iter().sum();
                (0..=degree - used).map(move |e| {
                    let mut t = t.clone();
                    t.push(e);
                    t
                })
            })
            .collect();
    }
    let coeffs: Vec<Vec<C64>> = terms
        .iter()
        .map(|_| (0..d).map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))).collect())
        .collect();
    let mut out = vec![C64::new(0.0, 0.0); grid.len() * d];
    for (n, z) in grid.nodes().iter().enumerate() {
        for (t, c) in terms.iter().zip(&coeffs) {
            let mut m = C64::new(1.0, 0.0);
            for v in 0..vars {
                m *= z.0[v].powu(t[v] as u32) * z.0[v].conj().powu(t[vars + v] as u32);
            }
            for k in 0..d {
                out[n * d + k] += m * c[k];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainGeometry;
    use crate::projection::BergmanProjection;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use std::sync::OnceLock;

    fn disc() -> &'static GridFamily {
        static GF: OnceLock<GridFamily> = OnceLock::new();
        GF.get_or_init(|| GridFamily::for_grid(QuadratureGrid::default_for(&DomainGeometry::disc()).unwrap()).unwrap())
    }

    fn constant(v: &[C64]) -> Vec<C64> {
        (0..disc().grid().len()).flat_map(|_| v.iter().copied()).collect()
    }

    #[test]
    fn directions_are_unit_and_contain_canonical() {
        let dirs = DirectionSet::new(2, 64, DIRECTION_SEED).unwrap();
        assert_eq!(dirs.len(), 64);
        for xi in dirs.iter() {
            assert!((crate::linalg::vec_norm(xi) - 1.0).abs() < 1e-12);
        }
        assert_eq!(dirs.get(3), &[C64::new(0.0, -1.0), C64::new(0.0, 0.0)]);
        assert!(DirectionSet::new(2, 7, 0).is_err());
    }

    #[test]
    fn support_of_constant_and_phase_twisted_fields() {
        let v = [C64::new(0.3, -1.0), C64::new(2.0, 0.5)];
        let xi = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let expect = dot(&v, &xi).norm();
        let region = Region::Tent { system: 3, cell: 20 };
        assert_abs_diff_eq!(convex_body_support(disc(), &constant(&v), region, &xi).unwrap(), expect, epsilon = 1e-12);
        let twisted: Vec<C64> = disc()
            .grid()
            .nodes()
            .iter()
            .flat_map(|z| {
                let u = C64::from_polar(1.0, 5.0 * z.0[0].arg() + z.norm());
                v.iter().map(move |x| x * u)
            })
            .collect();
        assert_abs_diff_eq!(convex_body_support(disc(), &twisted, region, &xi).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn random_multipliers_stay_below_support() {
        let g = disc().grid();
        let f = random_vector_polynomial(g, 2, 3, 11);
        let region = Region::Tent { system: 1, cell: 9 };
        let nodes = region_nodes(disc(), region);
        let w = g.weights();
        let vol: f64 = nodes.iter().map(|&n| w[n]).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dirs = DirectionSet::new(2, 16, 1).unwrap();
        for xi in dirs.iter() {
            let h = convex_body_support(disc(), &f, region, xi).unwrap();
            for _ in 0..200 {
                let mut avg = [C64::new(0.0, 0.0); 2];
                for &n in &nodes {
                    let phi = C64::from_polar(rng.random::<f64>(), rng.random::<f64>() * 6.3);
                    for k in 0..2 {
                        avg[k] += phi * f[n * 2 + k] * w[n] / vol;
                    }
                }
                assert!(dot(&avg, xi).re <= h + 1e-9);
            }
        }
    }

    #[test]
    fn minkowski_sum_of_two_tents_is_attained() {
        // the optimal multiplier conj(phase of <f, xi>) reaches the summed support
        let g = disc().grid();
        let f = random_vector_polynomial(g, 2, 2, 3);
        let xi = DirectionSet::new(2, 9, 4).unwrap().get(8).to_vec();
        let w = g.weights();
        let mut reached = 0.0;
        let mut summed = 0.0;
        for region in [Region::Tent { system: 0, cell: 2 }, Region::Tent { system: 6, cell: 30 }] {
            let nodes = region_nodes(disc(), region);
            let vol: f64 = nodes.iter().map(|&n| w[n]).sum();
            let mut avg = [C64::new(0.0, 0.0); 2];
            for &n in &nodes {
                let p = dot(&f[n * 2..n * 2 + 2], &xi);
                let phi = if p.norm() > 0.0 { p.conj() / p.norm() } else { C64::new(0.0, 0.0) };
                for k in 0..2 {
                    avg[k] += phi * f[n * 2 + k] * w[n] / vol;
                }
            }
            reached += dot(&avg, &xi).re;
            summed += convex_body_support(disc(), &f, region, &xi).unwrap();
        }
        assert_abs_diff_eq!(reached, summed, epsilon = 1e-12);
    }

    #[test]
    fn sparse_support_at_origin_and_chain_count() {
        let v = [C64::new(1.0, 0.0), C64::new(0.0, 2.0)];
        let f = constant(&v);
        let xi = [C64::new(0.0, 1.0), C64::new(0.0, 0.0)];
        let origin = Point::disc(C64::new(0.0, 0.0));
        assert_abs_diff_eq!(sparse_support(disc(), &f, &origin, &xi), dot(&v, &xi).norm(), epsilon = 1e-12);
        let dirs = DirectionSet::new(2, 8, 0).unwrap();
        let s = TentSupports::compute(disc(), &f, &dirs);
        let node = disc().grid().len() - 1;
        let levels = disc().system(0).max_level() + 1;
        assert_eq!(s.chain_length(disc(), node), 1 + 9 * levels);
        // constant field: every tent contributes |<v, xi>|
        let h = s.sparse_at_node(disc(), node, 0);
        assert_abs_diff_eq!(h, (1 + 9 * levels) as f64 * dot(&v, dirs.get(0)).norm(), epsilon = 1e-10);
        assert_abs_diff_eq!(h, s.sparse_at_point(disc(), &disc().grid().nodes()[node], 0), epsilon = 1e-10);
    }

    #[test]
    fn domination_of_constant_and_antiholomorphic_fields() {
        let g = disc().grid();
        let p = BergmanProjection::assemble(g, 32, 2).unwrap();
        let dirs = DirectionSet::new(2, 32, DIRECTION_SEED).unwrap();
        let samples = stratified_samples(disc(), 60, 1);
        let f = constant(&[C64::new(1.0, 0.0), C64::new(-0.5, 0.5)]);
        let r = domination_constant(disc(), &f, &p.apply(g, &f), &samples, &dirs);
        assert!(r.constant <= 1.0 + 1e-9 && r.violations.is_empty());
        let f: Vec<C64> = g.nodes().iter().flat_map(|z| [z.0[0].conj(), z.0[0].conj() * C64::new(0.0, 2.0)]).collect();
        let r = domination_constant(disc(), &f, &p.apply(g, &f), &samples, &dirs);
        assert!(r.constant < 1e-6, "{}", r.constant);
    }

    #[test]
    fn samples_cover_every_level() {
        let s = stratified_samples(disc(), 200, 9);
        assert_eq!(s.len(), 200);
        let sys = disc().system(0);
        let a = disc().assignment(0);
        let deepest = s
            .iter()
            .filter(|&&n| matches!(a.kube_of(n), KubeRef::Cell(c) if sys.level_of(c) == sys.max_level()))
            .count();
        assert!(deepest >= 200 / (sys.max_level() + 2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn support_is_symmetric_and_subadditive(seed in 0u64..1000, cell in 0usize..64, a in 0usize..64, b in 0usize..64) {
            let f = random_vector_polynomial(disc().grid(), 2, 3, seed);
            let dirs = DirectionSet::new(2, 64, seed).unwrap();
            let cell = cell % disc().system(2).num_cells();
            let region = Region::Tent { system: 2, cell };
            let (x, y) = (dirs.get(a), dirs.get(b));
            let neg: Vec<C64> = x.iter().map(|c| -c).collect();
            let sum: Vec<C64> = x.iter().zip(y).map(|(p, q)| p + q).collect();
            let hx = convex_body_support(disc(), &f, region, x).unwrap();
            prop_assert!(hx >= 0.0);
            prop_assert!((hx - convex_body_support(disc(), &f, region, &neg).unwrap()).abs() <= 1e-12 * hx.max(1.0));
            let hy = convex_body_support(disc(), &f, region, y).unwrap();
            prop_assert!(convex_body_support(disc(), &f, region, &sum).unwrap() <= hx + hy + 1e-12);
        }
    }
}
