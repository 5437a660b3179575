//! Scalar traces `omega(v; z)` of a step weight inside a tent, their corona
//! decompositions and reverse Hoelder exponents, and the dyadic maximal operator.

use super::average::SystemAverages;
use super::regions::GridFamily;
use super::step::StepWeight;
use crate::error::{LabError, Result};
use crate::geometry::C64;
use crate::linalg;

pub const DEFAULT_REVERSE_HOLDER_C0: f64 = 4.0;
pub const REVERSE_HOLDER_CAP: f64 = 3.0;
/// Bisection resolution, also the smallest exponent gap tried.
pub const REVERSE_HOLDER_STEP: f64 = 1e-4;
pub const MAX_CORONA_THRESHOLD: f64 = 1e3;

/// `omega(v; z) = <A 𝒲(z) A v, v>` with `A = <𝒲^{-1}>_T^{1/2}` on the nodes of tent `T`.
#[derive(Clone, Debug)]
pub struct OmegaField {
    pub system: usize,
    pub cell: usize,
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
    /// Tent means of omega for every cell of the system (meaningful inside `cell`).
    means: Vec<f64>,
}

impl OmegaField {
    pub fn mean(&self, cell: usize) -> f64 {
        self.means[cell]
    }
}

pub fn omega_field(gf: &GridFamily, step: &StepWeight, cell: usize, v: &[C64]) -> Result<OmegaField> {
    let l = step.system();
    let inv = SystemAverages::compute(gf, l, step.inverse());
    let a = linalg::sqrt(&inv.tents[cell])?;
    let av = linalg::mat_vec(&a, v);
    let nodes = gf.tent_nodes(l, cell);
    let values: Vec<f64> = nodes.iter().map(|&n| linalg::quadratic_form(&step.values().matrix(n), &av)).collect();
    if let Some(bad) = values.iter().find(|x| !(**x > 0.0)) {
        return Err(LabError::Data(format!("omega not positive ({bad}) in tent {cell}")));
    }
    let mut full = vec![0.0; gf.grid().len()];
    for (&n, &x) in nodes.iter().zip(&values) {
        full[n] = x;
    }
    let w = gf.grid().weights();
    let (kubes, _) = gf.kube_sums(l, |n| full[n] * w[n]);
    let sums = gf.tent_sums(l, kubes);
    let means = sums.iter().enumerate().map(|(c, s)| s / gf.tent_volume(l, c)).collect();
    Ok(OmegaField { system: l, cell, nodes, values, means })
}

/// `min(exp(B2), 1e3)`.
pub fn default_corona_threshold(b2: f64) -> f64 {
    b2.exp().min(MAX_CORONA_THRESHOLD)
}

#[derive(Clone, Debug)]
pub struct CoronaDecomposition {
    pub system: usize,
    pub root: usize,
    pub threshold: f64,
    /// `generations[0] = [root]`; each later entry lists `(tent, stopping parent)`.
    pub generations: Vec<Vec<(usize, usize)>>,
    /// Largest parent/child tent volume ratio of the system.
    pub volume_ratio: f64,
    means: Vec<f64>,
    volumes: Vec<f64>,
}

impl CoronaDecomposition {
    pub fn stopping_tents(&self) -> usize {
        self.generations.iter().skip(1).map(Vec::len).sum()
    }

    /// Sum of children volumes under each stopping tent is at most `|parent| / R`.
    pub fn packing_holds(&self) -> bool {
        for i in 1..self.generations.len() {
            for &(parent, _) in &self.generations[i - 1] {
                let sum: f64 =
                    self.generations[i].iter().filter(|&&(_, p)| p == parent).map(|&(t, _)| self.volumes[t]).sum();
                if !(sum <= self.volumes[parent] / self.threshold) {
                    return false;
                }
            }
        }
        true
    }

    /// `R^i <= <omega>_T / <omega>_root <= (c R)^i` for every tent of generation `i`.
    pub fn sandwich_holds(&self) -> bool {
        let root = self.means[self.root];
        let tol = 1e-12;
        self.generations.iter().enumerate().all(|(i, gen)| {
            gen.iter().all(|&(t, _)| {
                let q = self.means[t] / root;
                let i = i as i32;
                q >= self.threshold.powi(i) * (1.0 - tol)
                    && q <= (self.volume_ratio * self.threshold).powi(i) * (1.0 + tol)
            })
        })
    }
}

/// Stopping-time decomposition of the tent of `omega.cell`: under each stopping
/// tent, the maximal subtents whose omega mean exceeds `R` times its mean.
pub fn corona_decompose(gf: &GridFamily, omega: &OmegaField, threshold: f64) -> Result<CoronaDecomposition> {
    if !(threshold > 1.0) {
        return Err(LabError::InvalidThreshold(threshold));
    }
    let l = omega.system;
    let sys = gf.system(l);
    let mut generations = vec![vec![(omega.cell, omega.cell)]];
    loop {
        let mut next = Vec::new();
        for &(q, _) in generations.last().unwrap() {
            let bar = threshold * omega.means[q];
            let mut stack: Vec<usize> = sys.children(q).collect();
            while let Some(t) = stack.pop() {
                if omega.means[t] > bar {
                    next.push((t, q));
                } else {
                    stack.extend(sys.children(t));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_unstable();
        generations.push(next);
    }
    Ok(CoronaDecomposition {
        system: l,
        root: omega.cell,
        threshold,
        generations,
        volume_ratio: gf.parent_child_ratio(l),
        means: omega.means.clone(),
        volumes: (0..sys.num_cells()).map(|c| gf.tent_volume(l, c)).collect(),
    })
}

/// Largest `r` in `(1, 3]` with `<omega^r>^{1/r} <= c0 <omega>` over the tent,
/// by bisection to `1e-4`.
pub fn reverse_holder_exponent(gf: &GridFamily, omega: &OmegaField, c0: f64) -> Result<f64> {
    if !(c0 > 1.0) {
        return Err(LabError::InvalidParameter(format!("reverse Hoelder constant {c0} must exceed 1")));
    }
    let w = gf.grid().weights();
    let vol: f64 = omega.nodes.iter().map(|&n| w[n]).sum();
    let mean = omega.nodes.iter().zip(&omega.values).map(|(&n, x)| w[n] * x).sum::<f64>() / vol;
    // Ratios to the mean keep powers in range.
    let ratio = |r: f64| -> f64 {
        let top = omega.values.iter().fold(0.0f64, |m, &x| m.max(x / mean));
        let s: f64 = omega.nodes.iter().zip(&omega.values).map(|(&n, x)| w[n] * (x / mean / top).powf(r)).sum();
        top * (s / vol).powf(1.0 / r)
    };
    let (mut lo, mut hi) = (1.0 + REVERSE_HOLDER_STEP, REVERSE_HOLDER_CAP);
    if ratio(hi) <= c0 {
        return Ok(hi);
    }
    if ratio(lo) > c0 {
        return Err(LabError::ReverseHolderViolation { c0, r: lo });
    }
    while hi - lo > REVERSE_HOLDER_STEP {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) <= c0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `M_T f(z) = sup` of `<|f|>` over the tents of system `l` containing `z`;
/// zero on the root region.
pub fn dyadic_maximal(gf: &GridFamily, l: usize, f: &[f64]) -> Vec<f64> {
    let w = gf.grid().weights();
    let sys = gf.system(l);
    let (kubes, _) = gf.kube_sums(l, |n| w[n] * f[n].abs());
    let sums = gf.tent_sums(l, kubes);
    // Best average over each cell's tent and all its ancestors.
    let mut best: Vec<f64> = (0..sys.num_cells()).map(|c| sums[c] / gf.tent_volume(l, c)).collect();
    for k in 1..=sys.max_level() {
        for id in sys.level_range(k) {
            let p = sys.parent(id).unwrap();
            best[id] = best[id].max(best[p]);
        }
    }
    let a = gf.assignment(l);
    (0..gf.grid().len())
        .map(|n| match a.kube_of(n) {
            crate::dyadic::KubeRef::Root => 0.0,
            crate::dyadic::KubeRef::Cell(c) => best[c],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::KubeRef;
    use crate::geometry::DomainGeometry;
    use crate::linalg::{CMat, NodeMatrices};
    use crate::projection::grid::QuadratureGrid;
    use crate::weights::{b2_constant, MatrixWeightField, WeightFamily, WeightSamples};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn disc() -> &'static GridFamily {
        static GF: OnceLock<GridFamily> = OnceLock::new();
        GF.get_or_init(|| GridFamily::for_grid(QuadratureGrid::default_for(&DomainGeometry::disc()).unwrap()).unwrap())
    }

    fn step_of(fam: WeightFamily, d: usize, l: usize) -> (WeightSamples, StepWeight) {
        let s = WeightSamples::on_grid(&MatrixWeightField::new(fam, d).unwrap(), disc().grid()).unwrap();
        let step = StepWeight::build(disc(), l, &s).unwrap();
        (s, step)
    }

    fn e(d: usize, k: usize) -> Vec<C64> {
        (0..d).map(|j| C64::new(if j == k { 1.0 } else { 0.0 }, 0.0)).collect()
    }

    /// Step weight of system 0 built directly from per-node scalars.
    fn scalar_step(values: impl Fn(usize) -> f64) -> StepWeight {
        let n = disc().grid().len();
        let w = NodeMatrices::from_fn(n, 1, |i| CMat::from_element(1, 1, C64::new(values(i), 0.0)));
        StepWeight::build(disc(), 0, &WeightSamples::from_matrices(w).unwrap()).unwrap()
    }

    #[test]
    fn identity_omega_is_one() {
        let (_, step) = step_of(WeightFamily::Identity, 2, 0);
        let om = omega_field(disc(), &step, 3, &e(2, 1)).unwrap();
        assert!(om.values.iter().all(|x| (x - 1.0).abs() < 1e-13));
        let cd = corona_decompose(disc(), &om, 2.0).unwrap();
        assert_eq!(cd.stopping_tents(), 0);
        assert_eq!(reverse_holder_exponent(disc(), &om, 4.0).unwrap(), REVERSE_HOLDER_CAP);
    }

    #[test]
    fn scalar_omega_is_step_times_inverse_average() {
        let (_, step) = step_of(WeightFamily::ScalarPower { alpha: 0.5 }, 1, 2);
        let cell = 5;
        let om = omega_field(disc(), &step, cell, &e(1, 0)).unwrap();
        let inv = SystemAverages::compute(disc(), 2, step.inverse()).tents[cell][(0, 0)].re;
        for (&n, &x) in om.nodes.iter().zip(&om.values) {
            assert_relative_eq!(x, step.values().matrix(n)[(0, 0)].re * inv, max_relative = 1e-12);
        }
    }

    #[test]
    fn concentrated_weight_gives_single_chain() {
        // Mass on one level-2 kube: the stopping chain is its level-1 ancestor then itself.
        let sys = disc().system(0);
        let target = sys.level_range(2).start + 5;
        let a = disc().assignment(0);
        let step = scalar_step(|n| if a.kube_of(n) == KubeRef::Cell(target) { 1e6 } else { 1.0 });
        let root = sys.parent(sys.parent(target).unwrap()).unwrap();
        let om = omega_field(disc(), &step, root, &e(1, 0)).unwrap();
        let cd = corona_decompose(disc(), &om, 1.5).unwrap();
        // Brute force: walk down choosing children whose mean exceeds R times the current.
        let mut expect = Vec::new();
        let mut q = root;
        loop {
            let hit: Vec<usize> = sys.children(q).filter(|&t| om.mean(t) > 1.5 * om.mean(q)).collect();
            match hit.as_slice() {
                [t] => {
                    expect.push(*t);
                    q = *t;
                }
                [] => break,
                _ => panic!("not a chain"),
            }
        }
        let got: Vec<usize> = cd.generations.iter().skip(1).map(|g| g[0].0).collect();
        assert!(cd.generations.iter().skip(1).all(|g| g.len() == 1));
        assert_eq!(got, expect);
        assert_eq!(got.last(), Some(&target));
        assert!(cd.packing_holds() && cd.sandwich_holds());
    }

    #[test]
    fn packing_over_random_step_weights() {
        let sys = disc().system(0);
        let a = disc().assignment(0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let kube_vals: Vec<f64> = (0..sys.num_cells()).map(|_| (rng.random::<f64>() * 8.0).exp()).collect();
            let root_val = rng.random::<f64>() + 0.1;
            let step = scalar_step(|n| match a.kube_of(n) {
                KubeRef::Root => root_val,
                KubeRef::Cell(c) => kube_vals[c],
            });
            let cell = rng.random_range(0..8);
            let om = omega_field(disc(), &step, cell, &e(1, 0)).unwrap();
            let r = 1.0 + 9.0 * rng.random::<f64>();
            let cd = corona_decompose(disc(), &om, r).unwrap();
            assert!(cd.packing_holds());
            assert!(cd.sandwich_holds());
        }
    }

    #[test]
    fn invalid_threshold() {
        let (_, step) = step_of(WeightFamily::Identity, 1, 0);
        let om = omega_field(disc(), &step, 0, &e(1, 0)).unwrap();
        assert!(matches!(corona_decompose(disc(), &om, 1.0), Err(LabError::InvalidThreshold(_))));
    }

    #[test]
    fn reverse_holder_for_half_power() {
        let (s, step) = step_of(WeightFamily::ScalarPower { alpha: 0.5 }, 1, 0);
        let b2 = b2_constant(disc(), &s).unwrap().value;
        for cell in 0..8 {
            let om = omega_field(disc(), &step, cell, &e(1, 0)).unwrap();
            let r = reverse_holder_exponent(disc(), &om, DEFAULT_REVERSE_HOLDER_C0).unwrap();
            assert!(r - 1.0 >= 0.01 / b2, "{r}");
            let relaxed = reverse_holder_exponent(disc(), &om, 8.0).unwrap();
            assert!(relaxed >= r);
        }
    }

    #[test]
    fn maximal_of_constant_and_indicator() {
        let n = disc().grid().len();
        let m = dyadic_maximal(disc(), 0, &vec![1.0; n]);
        let a = disc().assignment(0);
        for (i, &mi) in m.iter().enumerate() {
            if a.kube_of(i) != KubeRef::Root {
                assert_relative_eq!(mi, 1.0, max_relative = 1e-12);
            }
        }
        let sys = disc().system(0);
        let k = sys.level_range(1).start + 3;
        let f: Vec<f64> = (0..n).map(|i| if a.kube_of(i) == KubeRef::Cell(k) { 1.0 } else { 0.0 }).collect();
        let m = dyadic_maximal(disc(), 0, &f);
        let ratio = disc().kube_volume(0, KubeRef::Cell(k)) / disc().tent_volume(0, k);
        for i in disc().tent_nodes(0, k) {
            assert!(m[i] >= ratio * (1.0 - 1e-12));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn maximal_l2_bound(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = disc().grid().len();
            let f: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(4) * if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let l = rng.random_range(0..9);
            let m = dyadic_maximal(disc(), l, &f);
            let w = disc().grid().weights();
            let norm = |g: &[f64]| g.iter().zip(w).map(|(x, wi)| wi * x * x).sum::<f64>().sqrt();
            prop_assert!(norm(&m) <= 2.0 * norm(&f) * (1.0 + 1e-12));
        }
    }
}
