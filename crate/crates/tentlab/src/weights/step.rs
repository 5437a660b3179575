//! Kube-constant step weights and their sums over the adjacent family.

use super::average::SystemAverages;
use super::regions::GridFamily;
use super::WeightSamples;
use crate::dyadic::KubeRef;
use crate::error::Result;
use crate::geometry::C64;
use crate::linalg::{self, CMat, NodeMatrices};
use crate::projection::norm::random_vector;

/// `<W>_K` on every kube of one system, `W` itself on the deepest tents.
#[derive(Clone, Debug)]
pub struct StepWeight {
    system: usize,
    values: NodeMatrices,
    inverse: NodeMatrices,
    minus_one: NodeMatrices,
    kube_averages: Vec<CMat>,
    root_average: CMat,
}

impl StepWeight {
    pub fn build(gf: &GridFamily, l: usize, samples: &WeightSamples) -> Result<Self> {
        let avg = SystemAverages::compute(gf, l, &samples.w);
        let avg_inv = SystemAverages::compute(gf, l, &samples.inv);
        let inv_kubes = avg.kubes.iter().map(linalg::inverse).collect::<Result<Vec<_>>>()?;
        let inv_root = linalg::inverse(&avg.root)?;
        let a = gf.assignment(l);
        let n = gf.grid().len();
        let d = samples.d();
        let pick = |node: usize, kube: &[CMat], root: &CMat, tail: &NodeMatrices| match a.kube_of(node) {
            KubeRef::Root => root.clone(),
            KubeRef::Cell(c) if gf.is_tail(l, c) => tail.matrix(node),
            KubeRef::Cell(c) => kube[c].clone(),
        };
        Ok(StepWeight {
            system: l,
            values: NodeMatrices::from_fn(n, d, |i| pick(i, &avg.kubes, &avg.root, &samples.w)),
            inverse: NodeMatrices::from_fn(n, d, |i| pick(i, &inv_kubes, &inv_root, &samples.inv)),
            minus_one: NodeMatrices::from_fn(n, d, |i| pick(i, &avg_inv.kubes, &avg_inv.root, &samples.inv)),
            kube_averages: avg.kubes,
            root_average: avg.root,
        })
    }

    pub fn system(&self) -> usize {
        self.system
    }

    /// `𝒲` at the nodes.
    pub fn values(&self) -> &NodeMatrices {
        &self.values
    }

    /// Pointwise inverse of `𝒲`.
    pub fn inverse(&self) -> &NodeMatrices {
        &self.inverse
    }

    /// Step weight of `W^{-1}`.
    pub fn minus_one(&self) -> &NodeMatrices {
        &self.minus_one
    }

    pub fn kube_average(&self, kube: KubeRef) -> &CMat {
        match kube {
            KubeRef::Root => &self.root_average,
            KubeRef::Cell(c) => &self.kube_averages[c],
        }
    }
}

fn add_into(acc: &mut Option<NodeMatrices>, m: &NodeMatrices) {
    match acc {
        None => *acc = Some(m.clone()),
        Some(a) => {
            let n = a.len();
            let d = a.d();
            *a = NodeMatrices::from_fn(n, d, |i| a.matrix(i) + m.matrix(i));
        }
    }
}

/// `𝒲~ = sum_l 𝒲_l` over every system of the family, and `𝒲~_{-1}`.
#[derive(Clone, Debug)]
pub struct TildeWeight {
    pub samples: WeightSamples,
    pub minus_one: NodeMatrices,
    pub systems: usize,
}

impl TildeWeight {
    pub fn build(gf: &GridFamily, samples: &WeightSamples) -> Result<Self> {
        let mut sum = None;
        let mut minus = None;
        for l in 0..gf.len() {
            let step = StepWeight::build(gf, l, samples)?;
            add_into(&mut sum, step.values());
            add_into(&mut minus, step.minus_one());
        }
        Ok(TildeWeight {
            samples: WeightSamples::from_matrices(sum.expect("nonempty family"))?,
            minus_one: minus.expect("nonempty family"),
            systems: gf.len(),
        })
    }
}

/// `sup_T ||<𝒲^{-1}>_T^{1/2} <𝒲>_T^{1/2}||^2 / B2(W)` over the tents of the step
/// weight's system.
pub fn step_b2_check(gf: &GridFamily, step: &StepWeight, b2: f64) -> Result<f64> {
    let l = step.system();
    let a = SystemAverages::compute(gf, l, step.values());
    let b = SystemAverages::compute(gf, l, step.inverse());
    let mut worst: f64 = 0.0;
    for (ta, tb) in a.tents.iter().zip(&b.tents) {
        worst = worst.max(linalg::b2_term(ta, tb)?);
    }
    Ok(worst / b2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainReport {
    /// Largest `(lhs - rhs) / rhs` of the per-vector chain inequality.
    pub max_relative_excess: f64,
    /// Smallest `||<W^{-1}>^{1/2} <W>^{1/2} v|| / |v|`.
    pub min_expansion: f64,
    pub checks: usize,
}

/// Per-vector chain over every tent of the step weight's system:
/// `||<𝒲^{-1}>^{1/2}<𝒲>^{1/2} v||^2 <= ||<W^{-1}>^{1/2}<W>^{1/2} v||^2`
/// for the canonical basis and `random` random unit vectors.
pub fn lemma_chain_check(
    gf: &GridFamily,
    samples: &WeightSamples,
    step: &StepWeight,
    random: usize,
    seed: u64,
) -> Result<ChainReport> {
    let l = step.system();
    let d = samples.d();
    let sw = SystemAverages::compute(gf, l, step.values());
    let si = SystemAverages::compute(gf, l, step.inverse());
    let w = SystemAverages::compute(gf, l, &samples.w);
    let wi = SystemAverages::compute(gf, l, &samples.inv);
    let mut dirs: Vec<Vec<C64>> =
        (0..d).map(|k| (0..d).map(|j| C64::new(if j == k { 1.0 } else { 0.0 }, 0.0)).collect()).collect();
    for r in 0..random {
        let v = random_vector(d, seed.wrapping_add(r as u64));
        let n = linalg::vec_norm(&v);
        dirs.push(v.into_iter().map(|x| x / n).collect());
    }
    let mut report = ChainReport { max_relative_excess: f64::NEG_INFINITY, min_expansion: f64::INFINITY, checks: 0 };
    let apply = |a: &CMat, b: &CMat, v: &[C64]| -> Result<f64> {
        let x = linalg::mat_vec(&linalg::sqrt(a)?, v);
        Ok(linalg::vec_norm(&linalg::mat_vec(&linalg::sqrt(b)?, &x)))
    };
    for cell in 0..sw.tents.len() {
        for v in &dirs {
            let lhs = apply(&sw.tents[cell], &si.tents[cell], v)?.powi(2);
            let rhs = apply(&w.tents[cell], &wi.tents[cell], v)?;
            report.max_relative_excess = report.max_relative_excess.max((lhs - rhs * rhs) / (rhs * rhs));
            report.min_expansion = report.min_expansion.min(rhs);
            report.checks += 1;
        }
    }
    Ok(report)
}
