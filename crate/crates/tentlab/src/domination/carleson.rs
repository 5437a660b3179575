//! Carleson embedding over the tents of one system and the square-sum
//! functionals bounding the sparse form.

use crate::dyadic::KubeRef;
use crate::error::{LabError, Result};
use crate::geometry::C64;
use crate::linalg::{self, CMat, NodeMatrices};
use crate::weights::{GridFamily, StepWeight, SystemAverages};

/// `sum_T <f>_T^p |T| / ((p')^p ||f||_p^p)` over every tent of system `l`.
pub fn carleson_embedding_ratio(gf: &GridFamily, l: usize, f: &[f64], p: f64) -> Result<f64> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(LabError::InvalidParameter(format!("exponent p = {p} must lie in (1, inf)")));
    }
    if f.len() != gf.grid().len() || f.iter().any(|&x| !(x >= 0.0)) {
        return Err(LabError::InvalidParameter("f must be a nonnegative node field".into()));
    }
    let w = gf.grid().weights();
    let norm_p = linalg::compensated_sum(f.iter().zip(w).map(|(x, wi)| x.powf(p) * wi));
    if norm_p == 0.0 {
        return Ok(0.0);
    }
    let (kubes, _) = gf.kube_sums(l, |i| f[i] * w[i]);
    let tents = gf.tent_sums(l, kubes);
    let num = linalg::compensated_sum(tents.iter().enumerate().map(|(c, &s)| {
        let vol = gf.tent_volume(l, c);
        (s / vol).powf(p) * vol
    }));
    let conj = p / (p - 1.0);
    Ok(num / (conj.powf(p) * norm_p))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SquareFunctionals {
    /// `sum_T <|<𝒲^{-1}>_T^{-1/2} 𝒲^{-1/2} g|>_T^2 |K|`
    pub s1: f64,
    /// `sum_T <|<𝒲^{-1}>_T^{1/2} 𝒲^{1/2} g|>_T^2 |K|`
    pub s2: f64,
    /// `||g||_2^2`
    pub norm_sq: f64,
}

/// Square-sum functionals of a `C^d` field `g` over the tents of the step
/// weight's system, `K` the kube of the tent `T`.
pub fn square_functionals(gf: &GridFamily, step: &StepWeight, g: &[C64]) -> Result<SquareFunctionals> {
    SquareForms::new(gf, step)?.evaluate(gf, g)
}

/// Node square roots of a step weight and tent factors `<𝒲^{-1}>_T^{-+1/2}`,
/// reusable across fields.
#[derive(Clone, Debug)]
pub struct SquareForms {
    system: usize,
    d: usize,
    sqrt: NodeMatrices,
    inv_sqrt: NodeMatrices,
    left: Vec<(CMat, CMat)>,
}

impl SquareForms {
    pub fn new(gf: &GridFamily, step: &StepWeight) -> Result<Self> {
        let l = step.system();
        let d = step.values().d();
        let n = gf.grid().len();
        let sqrt = NodeMatrices::try_from_fn(n, d, |i| linalg::sqrt(&step.values().matrix(i)))?;
        let inv_sqrt = NodeMatrices::try_from_fn(n, d, |i| linalg::inv_sqrt(&step.values().matrix(i)))?;
        let avg_inv = SystemAverages::compute(gf, l, step.inverse());
        let left = avg_inv.tents.iter().map(|a| Ok((linalg::inv_sqrt(a)?, linalg::sqrt(a)?))).collect::<Result<_>>()?;
        Ok(SquareForms { system: l, d, sqrt, inv_sqrt, left })
    }

    pub fn evaluate(&self, gf: &GridFamily, g: &[C64]) -> Result<SquareFunctionals> {
        let (l, d) = (self.system, self.d);
        let n = gf.grid().len();
        if g.len() != n * d {
            return Err(LabError::InvalidParameter(format!("field has {} entries, expected {}", g.len(), n * d)));
        }
        let sys = gf.system(l);
        let a = gf.assignment(l);
        let w = gf.grid().weights();
        let mut m1 = vec![0.0; sys.num_cells()];
        let mut m2 = vec![0.0; sys.num_cells()];
        let mut x1 = vec![C64::new(0.0, 0.0); d];
        let mut x2 = vec![C64::new(0.0, 0.0); d];
        for node in 0..n {
            let KubeRef::Cell(mut c) = a.kube_of(node) else { continue };
            let gi = &g[node * d..(node + 1) * d];
            self.inv_sqrt.apply(node, gi, &mut x1);
            self.sqrt.apply(node, gi, &mut x2);
            loop {
                m1[c] += w[node] * linalg::vec_norm(&linalg::mat_vec(&self.left[c].0, &x1));
                m2[c] += w[node] * linalg::vec_norm(&linalg::mat_vec(&self.left[c].1, &x2));
                match sys.parent(c) {
                    Some(p) => c = p,
                    None => break,
                }
            }
        }
        let sum = |m: &[f64]| {
            linalg::compensated_sum(m.iter().enumerate().map(|(c, s)| {
                let avg = s / gf.tent_volume(l, c);
                avg * avg * gf.kube_volume(l, KubeRef::Cell(c))
            }))
        };
        let norm_sq = linalg::compensated_sum(g.chunks(d).zip(w).map(|(x, wi)| linalg::vec_norm(x).powi(2) * wi));
        Ok(SquareFunctionals { s1: sum(&m1), s2: sum(&m2), norm_sq })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainGeometry;
    use crate::projection::grid::QuadratureGrid;
    use crate::weights::{MatrixWeightField, WeightFamily, WeightSamples};
    use approx::assert_relative_eq;
    use std::sync::OnceLock;

    fn disc() -> &'static GridFamily {
        static GF: OnceLock<GridFamily> = OnceLock::new();
        GF.get_or_init(|| GridFamily::for_grid(QuadratureGrid::default_for(&DomainGeometry::disc()).unwrap()).unwrap())
    }

    #[test]
    fn constant_field_matches_tent_volume_sum() {
        let gf = disc();
        let one = vec![1.0; gf.grid().len()];
        let sys = gf.system(0);
        let tents: f64 = (0..sys.num_cells()).map(|c| gf.tent_volume(0, c)).sum();
        let expect = tents / (4.0 * gf.grid().total_weight());
        let r = carleson_embedding_ratio(gf, 0, &one, 2.0).unwrap();
        assert_relative_eq!(r, expect, max_relative = 1e-12);
        assert!(r < 1.0);
    }

    #[test]
    fn scaling_invariance_and_kube_indicator() {
        let gf = disc();
        let a = gf.assignment(4);
        let kube = KubeRef::Cell(gf.system(4).level_range(2).start + 3);
        let f: Vec<f64> = (0..gf.grid().len()).map(|n| f64::from(u8::from(a.kube_of(n) == kube))).collect();
        let twice: Vec<f64> = f.iter().map(|x| 2.0 * x).collect();
        for p in [1.5, 2.0, 3.0] {
            let r = carleson_embedding_ratio(gf, 4, &f, p).unwrap();
            assert!(r > 0.0 && r < 1.0, "{r}");
            assert_relative_eq!(carleson_embedding_ratio(gf, 4, &twice, p).unwrap(), r, max_relative = 1e-12);
        }
        assert!(carleson_embedding_ratio(gf, 0, &f, 1.0).is_err());
    }

    #[test]
    fn identity_step_reduces_to_carleson() {
        let gf = disc();
        let s = WeightSamples::on_grid(&MatrixWeightField::new(WeightFamily::Identity, 2).unwrap(), gf.grid()).unwrap();
        let step = StepWeight::build(gf, 2, &s).unwrap();
        let g = crate::domination::random_vector_polynomial(gf.grid(), 2, 3, 8);
        let sq = square_functionals(gf, &step, &g).unwrap();
        assert_relative_eq!(sq.s1, sq.s2, max_relative = 1e-12);
        // <|g|>_T^2 |K| summed is at most (p')^p ||g||^2 times the p = 2 ratio of |g|
        let mag: Vec<f64> = g.chunks(2).map(linalg::vec_norm).collect();
        let ratio = carleson_embedding_ratio(gf, 2, &mag, 2.0).unwrap();
        assert!(sq.s2 <= 4.0 * ratio * sq.norm_sq * (1.0 + 1e-12));
    }

    #[test]
    fn constant_weight_and_direction_collapse() {
        // W = A constant: <𝒲^{-1}> = A^{-1}, so both integrands reduce to |e1|
        let gf = disc();
        let am = CMat::from_row_slice(
            2,
            2,
            &[C64::new(3.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), C64::new(2.0, 0.0)],
        );
        let inv = linalg::inverse(&am).unwrap();
        let n = gf.grid().len();
        let s = WeightSamples::from_matrices(NodeMatrices::from_fn(n, 2, |_| am.clone())).unwrap();
        assert!((s.inv.matrix(0) - &inv).camax() < 1e-12);
        let step = StepWeight::build(gf, 0, &s).unwrap();
        let e1: Vec<C64> = (0..n).flat_map(|_| [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]).collect();
        let sq = square_functionals(gf, &step, &e1).unwrap();
        let sys = gf.system(0);
        let kubes: f64 = (0..sys.num_cells()).map(|c| gf.kube_volume(0, KubeRef::Cell(c))).sum();
        assert_relative_eq!(sq.s1, kubes, max_relative = 1e-9);
        assert_relative_eq!(sq.s2, kubes, max_relative = 1e-9);
    }
}
